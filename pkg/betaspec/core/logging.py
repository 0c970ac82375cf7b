import logging
import sys
import time
from contextlib import contextmanager
from typing import Iterator

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logger = logging.getLogger(__name__)


def setup_logging(level: str = "INFO") -> None:
    """Configure root logging on stderr so stdout carries results only"""
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        stream=sys.stderr,
        force=True,
    )


@contextmanager
def timed(label: str) -> Iterator[None]:
    """Log the wall time spent inside a block"""
    start_time = time.time()
    logger.info(f"Start: {label}")
    try:
        yield
    except Exception as e:
        logger.error(f"Error in {label}: {str(e)}")
        raise
    process_time = time.time() - start_time
    logger.info(f"Done: {label}, process_time={process_time:.3f}s")
