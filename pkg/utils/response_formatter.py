"""
Response Envelopes
Every endpoint answers with {success, data | error, timestamp}; domain errors keep their code.
"""

from datetime import datetime, timezone
from typing import Any, Dict, Optional

from utils.errors import DepthEstimationError


def _timestamp() -> str:
    return datetime.now(timezone.utc).isoformat().replace('+00:00', 'Z')


def format_success_response(data: Any, message: Optional[str] = None) -> Dict[str, Any]:
    """
    Wrap a payload in the success envelope

    Args:
        data: JSON-serializable payload (depth map, corrupted image, metric report)
        message: Short human-readable note, omitted when empty

    Returns:
        Envelope with success=True
    """
    envelope = {"success": True, "data": data, "timestamp": _timestamp()}
    if message:
        envelope["message"] = message
    return envelope


def format_error_response(code: str, message: str, details: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Wrap an error in the failure envelope

    Args:
        code: Machine-readable code such as PARSE_ERROR or MODEL_NOT_LOADED
        message: Human-readable description
        details: Extra fields (byte offset, per-field validation messages)

    Returns:
        Envelope with success=False
    """
    error: Dict[str, Any] = {"code": code, "message": message}
    if details:
        error["details"] = details
    return {"success": False, "error": error, "timestamp": _timestamp()}


def format_validation_error(validation_errors: Dict[str, str]) -> Dict[str, Any]:
    """Field name -> message map from validate_request_data"""
    return format_error_response("VALIDATION_ERROR", "Request validation failed",
                                 {"validation_errors": validation_errors})


def format_domain_error(error: DepthEstimationError) -> Dict[str, Any]:
    """Error response carrying the exception's own code; parse errors add the byte offset"""
    offset = getattr(error, "offset", None)
    return format_error_response(error.code, error.message, None if offset is None else {"offset": offset})


def format_result_response(operation: str, result: Dict[str, Any],
                           success_message: Optional[str] = None) -> Dict[str, Any]:
    """
    Format the result of a depth service operation

    Args:
        operation: Operation name (predict, corrupt, metrics)
        result: Payload from DepthService; its `metadata` is flattened next to it
        success_message: Optional success message

    Returns:
        Formatted success response
    """
    metadata = result.get("metadata", {})
    data = {k: v for k, v in result.items() if k != "metadata"}
    data["operation"] = operation
    data["processing_time"] = metadata.get("processing_time")
    extra = {k: v for k, v in metadata.items() if k != "processing_time"}
    if extra:
        data["additional_info"] = extra
    return format_success_response(data, success_message or f"{operation} completed successfully")
