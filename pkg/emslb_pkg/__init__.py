# emslb_pkg/__init__.py

import logging
import sys
from dataclasses import dataclass, field

from dotenv import load_dotenv

# Load environment variables from .env file.
load_dotenv()

from .config import ProductionConfig, config_to_dict, get_config
from .errors import AccuracyError, ConfigValidationError, EmslbError, OutputError

__version__ = "1.0.0"

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


@dataclass
class EmslbApp:
    """Runtime settings, the package logger and the experiment runners by type name."""
    config: dict
    logger: logging.Logger
    experiments: dict = field(default_factory=dict)

    def handle_error(self, error):
        """Logs a failed command and returns its exit code."""
        if isinstance(error, ConfigValidationError):
            for problem in error.problems:
                self.logger.error(f"Validation Error: {problem}")
        elif isinstance(error, AccuracyError):
            self.logger.error(f"Accuracy Error: {error} {error.diagnostic}")
        elif isinstance(error, OutputError):
            self.logger.error(f"Output Error ({error.path}): {error}")
        elif isinstance(error, EmslbError):
            self.logger.error(f"{type(error).__name__}: {error}")
        else:
            self.logger.error(f"An unexpected error occurred: {error}", exc_info=True)
            return 1
        return error.exit_code


def _configure_logging(logger, level_name):
    logger.setLevel(getattr(logging, str(level_name).upper(), logging.INFO))
    if not any(getattr(handler, "_emslb", False) for handler in logger.handlers):
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._emslb = True
        logger.addHandler(handler)


def create_app(config_name=None):
    """
    Application factory function.
    """
    # Load configuration based on the environment
    config_class = get_config(config_name)
    if config_class is ProductionConfig:
        config_class.validate()
    settings = config_to_dict(config_class)

    logger = logging.getLogger(__name__)
    _configure_logging(logger, settings.get("LOG_LEVEL", "INFO"))

    # Runners register themselves on import
    from .cli.experiments import EXPERIMENTS
    app = EmslbApp(config=settings, logger=logger, experiments=dict(EXPERIMENTS))

    logger.debug(f"[App] created with {config_class.__name__}, {len(app.experiments)} experiment type(s)")
    return app
