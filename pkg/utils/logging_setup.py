"""
Logging Setup
Environment-driven logging configuration for the CLI and the Flask service
"""

import logging
import os

DEFAULT_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(level: str = None) -> None:
    """Configure the root logger from LOG_LEVEL / LOG_FORMAT (an explicit level wins)"""
    level_name = (level or os.getenv('LOG_LEVEL', 'INFO')).upper()
    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format=os.getenv('LOG_FORMAT', DEFAULT_FORMAT)
    )
