# emslb_pkg/config.py
import os

# Environment variables are loaded from .env by run.py and create_app().


class Config:
    """Base runtime settings (numerical integration, logging, seeding)."""
    LOG_LEVEL = os.environ.get('EMSLB_LOG_LEVEL', 'INFO')
    DEFAULT_SEED = int(os.environ.get('EMSLB_SEED', 20240611))

    # Monte-Carlo sample counts
    RCS_MC_SAMPLES = int(os.environ.get('EMSLB_RCS_MC_SAMPLES', 10000))
    HIM_MC_SAMPLES = int(os.environ.get('EMSLB_MC_SAMPLES', 512))
    MC_CHUNK = int(os.environ.get('EMSLB_MC_CHUNK', 1024))
    GAUSS_HERMITE_ORDER = int(os.environ.get('EMSLB_GAUSS_HERMITE_ORDER', 9))

    # Frequency quadrature
    QUAD_POINTS = int(os.environ.get('EMSLB_QUAD_POINTS', 1025))
    QUAD_REL_TOL = float(os.environ.get('EMSLB_QUAD_REL_TOL', 1e-3))

    # Linear algebra and root-finding thresholds
    COND_LIMIT = float(os.environ.get('EMSLB_COND_LIMIT', 1e12))
    BISECTION_TOL = float(os.environ.get('EMSLB_BISECTION_TOL', 1e-4))

    # Sweep points evaluated concurrently by the experiment runner
    MAX_WORKERS = int(os.environ.get('EMSLB_MAX_WORKERS', 1))


class DevelopmentConfig(Config):
    """Development-specific configuration."""
    DEBUG = True
    LOG_LEVEL = os.environ.get('EMSLB_LOG_LEVEL', 'DEBUG')


class TestingConfig(Config):
    """Testing-specific configuration: smaller sample counts, quiet logs."""
    TESTING = True
    DEBUG = True
    LOG_LEVEL = os.environ.get('EMSLB_LOG_LEVEL', 'WARNING')
    RCS_MC_SAMPLES = int(os.environ.get('EMSLB_RCS_MC_SAMPLES', 2000))
    HIM_MC_SAMPLES = int(os.environ.get('EMSLB_MC_SAMPLES', 64))


class ProductionConfig(Config):
    """Full-accuracy configuration used for published result tables."""
    DEBUG = False
    TESTING = False

    @classmethod
    def validate(cls):
        if cls.QUAD_POINTS < 1025:
            raise ValueError("EMSLB_QUAD_POINTS below 1025 is not allowed for production runs")
        if cls.HIM_MC_SAMPLES < 512:
            raise ValueError("EMSLB_MC_SAMPLES below 512 is not allowed for production runs")
        if cls.QUAD_POINTS % 2 == 0:
            raise ValueError("EMSLB_QUAD_POINTS must be odd for the convergence check")


CONFIGS = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'production': ProductionConfig,
}


def get_config(env=None):
    """Helper function to get the correct config class based on EMSLB_ENV."""
    env = (env or os.environ.get('EMSLB_ENV', 'development')).lower()
    return CONFIGS.get(env, DevelopmentConfig)


def config_to_dict(config_class):
    """Upper-case attributes of a config class as a plain dict."""
    return {key: getattr(config_class, key) for key in dir(config_class) if key.isupper()}
