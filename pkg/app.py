"""
Local Depth Estimation System - Flask API
App factory, system routes and the development server
"""

import logging
import os
import time
from typing import Optional

from dotenv import load_dotenv
from flasgger import Swagger
from flask import Flask, g, jsonify, request
from flask_cors import CORS

from api.corruption import corruption_bp
from api.evaluation import evaluation_bp
from api.prediction import prediction_bp
from core.depth_service import DepthService, get_depth_service, initialize_depth_service, set_depth_service
from presets.model_configs import MODEL_PRESETS
from utils.logging_setup import configure_logging
from utils.response_formatter import format_error_response, format_success_response

load_dotenv()

logger = logging.getLogger(__name__)

API_NAME = "Local Depth Estimation System"
API_VERSION_STRING = "1.0.0"

swagger_config = {
    "headers": [],
    "specs": [
        {
            "endpoint": 'apispec_1',
            "route": '/apispec_1.json',
            "rule_filter": lambda rule: True,
            "model_filter": lambda tag: True,
        }
    ],
    "static_url_path": "/flasgger_static",
    "swagger_ui": True,
    "specs_route": "/docs/"
}

swagger_template = {
    "swagger": "2.0",
    "info": {
        "title": f"{API_NAME} API",
        "description": "Monocular depth prediction, image corruption and depth metrics over HTTP.",
        "license": {
            "name": "MIT",
            "url": "https://opensource.org/licenses/MIT"
        },
        "version": API_VERSION_STRING
    },
    "basePath": "/api/v1",
    "schemes": ["http"],
    "consumes": ["application/json"],
    "produces": ["application/json"],
}


HTTP_ERRORS = {
    400: ("BAD_REQUEST", "Invalid request data"),
    404: ("NOT_FOUND", "Endpoint not found"),
    405: ("METHOD_NOT_ALLOWED", "Method not allowed for this endpoint"),
    413: ("REQUEST_TOO_LARGE", "Request body exceeds MAX_UPLOAD_MB"),
    500: ("INTERNAL_ERROR", "Internal server error"),
}


def _register_error_handlers(app: Flask) -> None:
    def make_handler(status: int):
        code, message = HTTP_ERRORS[status]

        def handler(error):
            if status >= 500:
                logger.error(f"{code}: {error}")
            return jsonify(format_error_response(code, message)), status
        return handler

    for status in HTTP_ERRORS:
        app.register_error_handler(status, make_handler(status))


def create_app(service: Optional[DepthService] = None) -> Flask:
    """
    Create and configure Flask application

    Args:
        service: Pre-built depth service; when None it is loaded from DEPTH_CHECKPOINT / DEPTH_CONFIG

    Returns:
        Configured Flask app
    """
    app = Flask(__name__)
    app.config['DEBUG'] = _env_flag('FLASK_DEBUG')
    app.config['MAX_CONTENT_LENGTH'] = int(os.getenv('MAX_UPLOAD_MB', '8')) * 1024 * 1024

    CORS(app, origins="*", methods=["GET", "POST", "OPTIONS"], allow_headers=["Content-Type", "Accept"])
    Swagger(app, config=swagger_config, template=swagger_template)

    if service is None:
        service = _load_service()
    set_depth_service(service)

    api_prefix = os.getenv('API_PREFIX', '/api')
    base_url = f"{api_prefix}/{os.getenv('API_VERSION', 'v1')}"
    for blueprint, section in ((prediction_bp, "depth"), (corruption_bp, "corruption"), (evaluation_bp, "evaluation")):
        app.register_blueprint(blueprint, url_prefix=f"{base_url}/{section}")

    @app.route(f"{api_prefix}/health")
    def health_check():
        """
        Model readiness
        ---
        tags:
          - System
        responses:
          200:
            description: Model loaded and ready
          503:
            description: Service running without a model
        """
        ready = get_depth_service().is_ready
        payload = {
            "status": "healthy" if ready else "degraded",
            "version": API_VERSION_STRING,
            "services": {"flask_app": True, "depth_model": ready},
        }
        return jsonify(format_success_response(payload)), 200 if ready else 503

    @app.route(f"{api_prefix}/info")
    def api_info():
        """
        Routes, presets and the loaded model
        ---
        tags:
          - System
        responses:
          200:
            description: Endpoint list and model description
        """
        try:
            payload = {
                "api_name": API_NAME,
                "version": API_VERSION_STRING,
                "swagger_ui": "/docs/",
                "endpoints": {
                    "depth": [f"{base_url}/depth/predict"],
                    "corruption": [f"{base_url}/corruption/apply", f"{base_url}/corruption/kinds"],
                    "evaluation": [f"{base_url}/evaluation/metrics"],
                },
                "presets": sorted(MODEL_PRESETS),
                "service_info": get_depth_service().get_service_info(),
            }
        except Exception as e:
            logger.error(f"Service info failed: {e}")
            return jsonify(format_error_response("API_INFO_FAILED", str(e))), 500
        return jsonify(format_success_response(payload))

    @app.route("/")
    def root():
        """
        Entry links
        ---
        tags:
          - System
        responses:
          200:
            description: Links to docs, health and the versioned API
        """
        return jsonify(format_success_response({
            "message": f"{API_NAME} API",
            "swagger_ui": "/docs/",
            "health": f"{api_prefix}/health",
            "info": f"{api_prefix}/info",
            "base_url": base_url,
        }))

    _register_error_handlers(app)

    @app.before_request
    def start_timer():
        g.started = time.perf_counter()

    @app.after_request
    def log_request(response):
        if request.endpoint != 'static':
            elapsed = time.perf_counter() - g.get("started", time.perf_counter())
            logger.info(f"{request.method} {request.path} -> {response.status_code} ({elapsed * 1000:.1f} ms)")
        return response

    return app


def _env_flag(name: str) -> bool:
    return os.getenv(name, 'false').lower() == 'true'


def _load_service() -> DepthService:
    try:
        return initialize_depth_service(os.getenv('DEPTH_CHECKPOINT') or None, os.getenv('DEPTH_CONFIG') or None)
    except Exception as e:
        logger.error(f"Failed to load depth model: {e}")
        # No model: /api/health and predict answer 503
        return DepthService()


def main(host: Optional[str] = None, port: Optional[int] = None):
    """Run the Flask application"""
    configure_logging()
    app = create_app()
    host = host or os.getenv('FLASK_HOST', '127.0.0.1')
    port = port or int(os.getenv('FLASK_PORT', 5000))
    debug = _env_flag('FLASK_DEBUG')

    logger.info(f"Serving {API_NAME} on http://{host}:{port} (docs at /docs/, debug={debug})")
    try:
        app.run(host=host, port=port, debug=debug)
    except KeyboardInterrupt:
        logger.info("Server stopped by user")
    except Exception as e:
        logger.error(f"Server failed to start: {e}")


if __name__ == '__main__':
    main()
