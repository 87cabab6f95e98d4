"""
API Package
Flask route handlers for depth prediction, corruption and evaluation
"""

from .prediction import prediction_bp
from .corruption import corruption_bp
from .evaluation import evaluation_bp

__all__ = [
    'prediction_bp',
    'corruption_bp',
    'evaluation_bp'
]
