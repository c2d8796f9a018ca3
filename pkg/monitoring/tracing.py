"""
Logging setup and stage tracing for latentbin.
Times training, export and inference stages into a Prometheus histogram.
"""

import logging
import os
import time
from functools import wraps
from typing import Callable, Optional

from dotenv import load_dotenv
from prometheus_client import CollectorRegistry, Histogram

# Load environment variables
load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# Stage timings live in their own registry so runs never touch the global one
STAGE_REGISTRY = CollectorRegistry()
STAGE_SECONDS = Histogram(
    "latentbin_stage_seconds",
    "Wall-clock duration of traced stages",
    ["stage"],
    registry=STAGE_REGISTRY,
)

_configured = False


def setup_logging(level: Optional[str] = None) -> bool:
    """
    Configure stdlib logging once per process.

    Reads from environment variables:
    - LATENTBIN_LOG_LEVEL: level name used when `level` is not given (default INFO)

    Returns:
        True if this call installed the handler, False if logging was already set up
    """
    global _configured
    level_name = (level or os.getenv("LATENTBIN_LOG_LEVEL", "INFO")).upper()
    root = logging.getLogger()
    if _configured:
        root.setLevel(level_name)
        return False
    logging.basicConfig(level=level_name, format=LOG_FORMAT)
    root.setLevel(level_name)
    _configured = True
    return True


def trace_stage(name: str = None):
    """
    Decorator to time a pipeline stage.

    Usage:
        @trace_stage(name="export")
        def export_model(state, arch):
            ...
    """

    def decorator(func: Callable) -> Callable:
        stage_name = name or func.__name__
        logger = logging.getLogger(func.__module__)

        @wraps(func)
        def wrapper(*args, **kwargs):
            logger.debug("stage %s: start", stage_name)
            start = time.perf_counter()
            try:
                return func(*args, **kwargs)
            finally:
                elapsed = time.perf_counter() - start
                STAGE_SECONDS.labels(stage=stage_name).observe(elapsed)
                logger.debug("stage %s: done in %.3fs", stage_name, elapsed)

        return wrapper

    return decorator


def stage_count(stage: str) -> float:
    """Number of completed observations for a stage."""
    value = STAGE_REGISTRY.get_sample_value("latentbin_stage_seconds_count", {"stage": stage})
    return value or 0.0
