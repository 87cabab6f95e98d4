"""
Presets Package
Named model configurations and corruption severity tables
"""

from . import corruption_tables
from . import model_configs

__all__ = [
    'corruption_tables',
    'model_configs'
]
