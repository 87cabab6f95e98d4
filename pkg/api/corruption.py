"""
Corruption API Endpoints
Flask blueprint for applying seeded image corruptions
"""

import logging

from flask import Blueprint, jsonify, request

from core.depth_service import get_depth_service
from data.corrupt import CORRUPTION_KINDS, SEVERITIES
from presets.corruption_tables import SEVERITY_TABLES
from utils.errors import DepthEstimationError
from utils.response_formatter import (
    format_domain_error,
    format_error_response,
    format_result_response,
    format_success_response,
    format_validation_error
)
from utils.validators import check_json_post, validate_corruption_apply

logger = logging.getLogger(__name__)

corruption_bp = Blueprint('corruption', __name__)
corruption_bp.before_request(check_json_post)


@corruption_bp.route('/apply', methods=['POST'])
def apply():
    """
    Apply one corruption at a severity level
    ---
    tags:
      - Corruption
    parameters:
      - in: body
        name: body
        required: true
        schema:
          type: object
          required:
            - image
            - kind
            - severity
          properties:
            image:
              type: string
              description: Base64-encoded binary PPM
            kind:
              type: string
              example: gaussian_noise
            severity:
              type: integer
              minimum: 1
              maximum: 5
            seed:
              type: integer
              minimum: 0
              description: Seed for the corruption's random draws (default 0)
    responses:
      200:
        description: Corrupted image as base64 PPM
      400:
        description: Bad request - invalid image, kind or severity
    """
    try:
        data = request.get_json(silent=True)
        if data is None:
            return jsonify(format_error_response("MISSING_JSON_DATA", "Request body must contain valid JSON data")), 400

        validation_errors = validate_corruption_apply(data)
        if validation_errors:
            return jsonify(format_validation_error(validation_errors)), 400

        result = get_depth_service().apply_corruption(
            data['image'], data['kind'], data['severity'], data.get('seed', 0))
        logger.info(f"Applied {data['kind']} at severity {data['severity']}")
        return jsonify(format_result_response("corrupt", result))

    except DepthEstimationError as e:
        logger.warning(f"Corruption rejected: {e.message}")
        return jsonify(format_domain_error(e)), 400
    except Exception as e:
        logger.error(f"Corruption failed: {str(e)}")
        return jsonify(format_error_response("CORRUPTION_FAILED", str(e))), 500


@corruption_bp.route('/kinds', methods=['GET'])
def kinds():
    """
    List corruption kinds and their severity parameters
    ---
    tags:
      - Corruption
    responses:
      200:
        description: Kinds with the parameter used at each severity 1..5
    """
    listing = [
        {"kind": kind, "severities": {str(s): SEVERITY_TABLES[kind][s] for s in SEVERITIES}}
        for kind in CORRUPTION_KINDS
    ]
    return jsonify(format_success_response({"kinds": listing, "count": len(listing)}))
