"""
Evaluation API Endpoints
Flask blueprint for depth metrics on caller-supplied maps
"""

import logging

from flask import Blueprint, jsonify, request

from core.depth_service import get_depth_service
from utils.errors import DepthEstimationError
from utils.response_formatter import (
    format_domain_error,
    format_error_response,
    format_result_response,
    format_validation_error
)
from utils.validators import check_json_post, validate_evaluation_metrics

logger = logging.getLogger(__name__)

evaluation_bp = Blueprint('evaluation', __name__)
evaluation_bp.before_request(check_json_post)


@evaluation_bp.route('/metrics', methods=['POST'])
def metrics():
    """
    Depth metrics of a prediction against ground truth
    ---
    tags:
      - Evaluation
    parameters:
      - in: body
        name: body
        required: true
        schema:
          type: object
          required:
            - pred
            - gt
          properties:
            pred:
              type: array
              description: H x W predicted depth in meters (nested lists)
            gt:
              type: array
              description: H x W ground-truth depth in meters
            valid:
              type: array
              description: Optional H x W mask (nonzero = valid)
            min_depth:
              type: number
              example: 0.001
            max_depth:
              type: number
              example: 10.0
            center_crop:
              type: array
              description: "[left, upper, width, height]"
    responses:
      200:
        description: delta1..3, abs_rel, sq_rel, rmse, rmse_log, log10 and n_pixels
      400:
        description: Bad request - mismatched shapes or no valid pixels
    """
    try:
        data = request.get_json(silent=True)
        if data is None:
            return jsonify(format_error_response("MISSING_JSON_DATA", "Request body must contain valid JSON data")), 400

        validation_errors = validate_evaluation_metrics(data)
        if validation_errors:
            return jsonify(format_validation_error(validation_errors)), 400

        result = get_depth_service().evaluate_metrics(
            data['pred'], data['gt'], data.get('valid'), data.get('min_depth'), data.get('max_depth'),
            data.get('center_crop'))
        logger.info(f"Computed metrics over {result['metrics']['n_pixels']} pixels")
        return jsonify(format_result_response("metrics", result))

    except DepthEstimationError as e:
        logger.warning(f"Metrics request rejected: {e.message}")
        return jsonify(format_domain_error(e)), 400
    except Exception as e:
        logger.error(f"Metrics computation failed: {str(e)}")
        return jsonify(format_error_response("EVALUATION_FAILED", str(e))), 500
