"""
Shared plumbing for the depth estimation system: the error hierarchy and the API
response envelopes. Request validation lives in utils.validators (it needs Flask).
"""

from .errors import DepthEstimationError, ParseError
from .response_formatter import format_domain_error, format_error_response, format_success_response

__all__ = [
    'DepthEstimationError',
    'ParseError',
    'format_domain_error',
    'format_error_response',
    'format_success_response',
]
