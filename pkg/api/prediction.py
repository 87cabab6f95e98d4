"""
Depth Prediction API Endpoints
Flask blueprint for monocular depth inference
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
from utils.validators import check_json_post, validate_depth_predict

logger = logging.getLogger(__name__)

prediction_bp = Blueprint('prediction', __name__)
prediction_bp.before_request(check_json_post)


@prediction_bp.route('/predict', methods=['POST'])
def predict():
    """
    Predict a depth map from one RGB image
    ---
    tags:
      - Depth Prediction
    parameters:
      - in: body
        name: body
        required: true
        schema:
          type: object
          required:
            - image
          properties:
            image:
              type: string
              description: Base64-encoded binary PPM (P6, maxval 255)
            resize_mode:
              type: string
              enum: [up, down]
              description: Direction to round sizes that are not multiples of the input multiple
    responses:
      200:
        description: Depth map as base64 16-bit PGM in millimeters, with statistics in meters
        schema:
          type: object
          properties:
            success:
              type: boolean
              example: true
            data:
              type: object
              properties:
                depth_pgm:
                  type: string
                height:
                  type: integer
                width:
                  type: integer
                stats:
                  type: object
                processing_time:
                  type: number
      400:
        description: Bad request - invalid image or parameters
      503:
        description: No model loaded
    """
    try:
        data = request.get_json(silent=True)
        if data is None:
            return jsonify(format_error_response("MISSING_JSON_DATA", "Request body must contain valid JSON data")), 400

        validation_errors = validate_depth_predict(data)
        if validation_errors:
            return jsonify(format_validation_error(validation_errors)), 400

        service = get_depth_service()
        if not service.is_ready:
            return jsonify(format_error_response("MODEL_NOT_LOADED", "No depth model is loaded")), 503

        result = service.predict_depth(data['image'], data.get('resize_mode', 'up'))
        logger.info(f"Depth prediction completed ({result['width']}x{result['height']})")
        return jsonify(format_result_response("predict", result))

    except DepthEstimationError as e:
        logger.warning(f"Depth prediction rejected: {e.message}")
        return jsonify(format_domain_error(e)), 400
    except Exception as e:
        logger.error(f"Depth prediction failed: {str(e)}")
        return jsonify(format_error_response("PREDICTION_FAILED", str(e))), 500
