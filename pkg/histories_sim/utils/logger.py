"""
Logging for the histories simulation toolkit.

Every record carries the scenario it belongs to (``%(scenario)s``), so the
lines of one run can be pulled out of a shared log file. The CLI prints its
results on stdout; log records go to stderr and, optionally, to a file.
"""
import logging
import sys
import time
from contextlib import contextmanager
from contextvars import ContextVar
from pathlib import Path
from typing import Iterator, Optional

DEFAULT_FORMAT = "%(asctime)s - %(scenario)s - %(name)s - %(levelname)s - %(message)s"
NO_SCENARIO = "-"

_current_scenario: ContextVar[str] = ContextVar("current_scenario", default=NO_SCENARIO)


class ScenarioFilter(logging.Filter):
    """Stamps each record with the scenario label active in its context."""

    def filter(self, record: logging.LogRecord) -> bool:
        if not hasattr(record, "scenario"):
            record.scenario = _current_scenario.get()
        return True


def setup_logging(
    log_level: str = "INFO",
    log_file: str = "histories.log",
    log_dir: Optional[Path] = None,
    log_format: Optional[str] = None,
    to_file: bool = True,
) -> logging.Logger:
    """
    Configure the root logger with a stderr handler and an optional file handler.

    Args:
        log_level: DEBUG, INFO, WARNING, ERROR or CRITICAL
        log_file: Name of the log file inside ``log_dir``
        log_dir: Directory for log files (default: logs/ next to the package)
        log_format: Format string; ``%(scenario)s`` is always available
        to_file: Attach the file handler (``--no-log-file`` turns it off)

    Returns:
        logging.Logger: Configured root logger

    Example:
        >>> from histories_sim.utils.logger import setup_logging
        >>> logger = setup_logging(log_level="DEBUG", to_file=False)
    """
    numeric_level = getattr(logging, log_level.upper(), logging.INFO)
    formatter = logging.Formatter(log_format or DEFAULT_FORMAT)
    stamp = ScenarioFilter()

    root = logging.getLogger()
    root.setLevel(numeric_level)
    # Re-running setup (tests, repeated CLI calls) must not stack handlers
    root.handlers.clear()

    handlers = [logging.StreamHandler(sys.stderr)]
    handlers[0].setLevel(max(numeric_level, logging.INFO))

    log_path = None
    if to_file:
        log_dir = Path(log_dir) if log_dir is not None else Path(__file__).parent.parent.parent / "logs"
        log_dir.mkdir(exist_ok=True, parents=True)
        log_path = log_dir / log_file
        file_handler = logging.FileHandler(log_path, encoding="utf-8")
        file_handler.setLevel(numeric_level)
        handlers.append(file_handler)

    for handler in handlers:
        handler.setFormatter(formatter)
        handler.addFilter(stamp)
        root.addHandler(handler)

    root.info(f"Logging configured: level={log_level}, file={log_path}")
    return root


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


@contextmanager
def scenario_context(logger: logging.Logger, name: str, kind: str, seed: int) -> Iterator[None]:
    """
    Label the records emitted inside the block with ``name`` and log the
    start banner and the elapsed wall time.

    Worker threads started inside the block do not inherit the label; their
    records show ``-``.
    """
    token = _current_scenario.set(name)
    logger.info("=" * 60)
    logger.info(f"Scenario {name} ({kind}, seed={seed})")
    logger.info("=" * 60)
    started = time.perf_counter()
    try:
        yield
        logger.info(f"Scenario {name} finished in {time.perf_counter() - started:.2f}s")
    except Exception:
        logger.error(f"Scenario {name} aborted after {time.perf_counter() - started:.2f}s")
        raise
    finally:
        _current_scenario.reset(token)


def current_scenario() -> str:
    """Label of the scenario running in this context, or ``-``."""
    return _current_scenario.get()


class LoggerMixin:
    """Gives a class a ``logger`` named after its module and class."""

    @property
    def logger(self) -> logging.Logger:
        return logging.getLogger(f"{self.__class__.__module__}.{self.__class__.__name__}")
