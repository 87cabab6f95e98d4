"""
Request Validators
Schema checks for the prediction, corruption and metrics payloads
"""

import os
from typing import Dict, Any, Optional

from flask import jsonify, request

from presets.corruption_tables import SEVERITY_TABLES
from utils.response_formatter import format_error_response

CORRUPTION_KINDS = tuple(SEVERITY_TABLES)


def validate_request_data(data: Dict[str, Any], schema: Dict[str, Any]) -> Dict[str, str]:
    """
    Check a JSON body against one SCHEMAS entry

    Returns:
        Field name -> message; empty when the body is acceptable
    """
    errors = {}
    for name in schema.get("required", []):
        value = data.get(name)
        if value is None:
            errors[name] = f"Field '{name}' is required"
        elif isinstance(value, str) and not value.strip():
            errors[name] = f"Field '{name}' cannot be empty"

    for name, rules in schema.get("fields", {}).items():
        if name in errors or data.get(name) is None:
            continue
        message = _validate_field(name, data[name], rules)
        if message:
            errors[name] = message
    return errors


def _type_name(expected) -> str:
    if isinstance(expected, tuple):
        return " or ".join(t.__name__ for t in expected)
    return expected.__name__


def _grid_shape(value: Any) -> Optional[tuple]:
    """Shape of a rectangular nested list of numbers, or None if ragged / non-numeric"""
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return ()
    if not isinstance(value, list) or not value:
        return None
    shapes = {_grid_shape(item) for item in value}
    if len(shapes) != 1 or None in shapes:
        return None
    return (len(value),) + shapes.pop()


def _validate_field(field_name: str, value: Any, rules: Dict[str, Any]) -> Optional[str]:
    """
    First rule the value breaks, as a message. Rule keys: type, min_length, max_length,
    allowed_values, min_value, max_value, min_items, max_items, numeric_grid
    """
    expected_type = rules.get("type")
    # bool is an int subclass but never a valid number here
    if expected_type and (not isinstance(value, expected_type) or
                          (isinstance(value, bool) and expected_type is not bool)):
        return f"Field '{field_name}' must be of type {_type_name(expected_type)}"

    if isinstance(value, str):
        if len(value) < rules.get("min_length", 0):
            return f"Field '{field_name}' must be at least {rules['min_length']} characters long"
        if "max_length" in rules and len(value) > rules["max_length"]:
            return f"Field '{field_name}' must be at most {rules['max_length']} characters long"
        allowed_values = rules.get("allowed_values")
        if allowed_values and value not in allowed_values:
            return f"Field '{field_name}' must be one of: {', '.join(allowed_values)}"

    if isinstance(value, (int, float)):
        if "min_value" in rules and value < rules["min_value"]:
            return f"Field '{field_name}' must be at least {rules['min_value']}"
        if "max_value" in rules and value > rules["max_value"]:
            return f"Field '{field_name}' must be at most {rules['max_value']}"

    if isinstance(value, list):
        if len(value) < rules.get("min_items", 0):
            return f"Field '{field_name}' must have at least {rules['min_items']} items"
        if "max_items" in rules and len(value) > rules["max_items"]:
            return f"Field '{field_name}' must have at most {rules['max_items']} items"
        if rules.get("numeric_grid") and _grid_shape(value) is None:
            return f"Field '{field_name}' must be a rectangular nested list of numbers"

    return None


# One entry per POST endpoint
SCHEMAS = {
    "depth_predict": {
        "required": ["image"],
        "fields": {
            "image": {
                "type": str,
                "min_length": 8
            },
            "resize_mode": {
                "type": str,
                "allowed_values": ["up", "down"]
            }
        }
    },

    "corruption_apply": {
        "required": ["image", "kind", "severity"],
        "fields": {
            "image": {
                "type": str,
                "min_length": 8
            },
            "kind": {
                "type": str,
                "allowed_values": list(CORRUPTION_KINDS)
            },
            "severity": {
                "type": int,
                "min_value": 1,
                "max_value": 5
            },
            "seed": {
                "type": int,
                "min_value": 0
            }
        }
    },

    "evaluation_metrics": {
        "required": ["pred", "gt"],
        "fields": {
            "pred": {
                "type": list,
                "min_items": 1,
                "numeric_grid": True
            },
            "gt": {
                "type": list,
                "min_items": 1,
                "numeric_grid": True
            },
            "min_depth": {
                "type": (int, float),
                "min_value": 0
            },
            "max_depth": {
                "type": (int, float),
                "min_value": 0
            },
            "center_crop": {
                "type": list,
                "min_items": 4,
                "max_items": 4
            },
            "valid": {
                "type": list,
                "min_items": 1,
                "numeric_grid": True
            }
        }
    }
}


def validate_depth_predict(data: Dict[str, Any]) -> Dict[str, str]:
    """Validate depth prediction request"""
    return validate_request_data(data, SCHEMAS["depth_predict"])


def validate_corruption_apply(data: Dict[str, Any]) -> Dict[str, str]:
    """Validate corruption request"""
    return validate_request_data(data, SCHEMAS["corruption_apply"])


def validate_evaluation_metrics(data: Dict[str, Any]) -> Dict[str, str]:
    """Validate metrics request"""
    return validate_request_data(data, SCHEMAS["evaluation_metrics"])


def validate_json_content_type(request) -> Optional[str]:
    """Message for a non-JSON body, None otherwise"""
    return None if request.is_json else "Request must have Content-Type: application/json"


def validate_request_size(request, max_size_mb: int = 1) -> Optional[str]:
    """Message when Content-Length exceeds max_size_mb, None otherwise"""
    limit = max_size_mb * 1024 * 1024
    if (request.content_length or 0) > limit:
        return f"Request too large. Maximum size is {max_size_mb}MB"
    return None


def check_json_post():
    """
    Blueprint before_request hook: POST bodies must be JSON and within MAX_UPLOAD_MB.
    Returns an error response to short-circuit the view, None to continue.
    """
    if request.method != 'POST':
        return None
    content_type_error = validate_json_content_type(request)
    if content_type_error:
        return jsonify(format_error_response("INVALID_CONTENT_TYPE", content_type_error)), 400
    size_error = validate_request_size(request, max_size_mb=int(os.getenv('MAX_UPLOAD_MB', '8')))
    if size_error:
        return jsonify(format_error_response("REQUEST_TOO_LARGE", size_error)), 413
    return None
