"""
Structured logging configuration using structlog.
"""

import logging
import sys
from pathlib import Path
from typing import Any

import structlog
from structlog.types import EventDict, Processor

from app.core.config import settings

_RUN_HANDLER_NAME = "podkd-run-log"


def add_app_context(logger: Any, method_name: str, event_dict: EventDict) -> EventDict:
    """Add application context to log events."""
    event_dict["app"] = settings.APP_NAME
    event_dict["environment"] = settings.ENVIRONMENT
    return event_dict


def _shared_processors() -> list[Processor]:
    return [
        structlog.contextvars.merge_contextvars,
        structlog.stdlib.add_log_level,
        structlog.stdlib.add_logger_name,
        structlog.processors.TimeStamper(fmt="iso"),
        structlog.processors.StackInfoRenderer(),
        add_app_context,
    ]


def configure_logging(log_file: Path | None = None) -> None:
    """Configure structured logging for the pipeline.

    Args:
        log_file: Optional append-only JSON-lines file that receives every
            event in addition to stdout (one per run directory).
    """
    log_level = getattr(logging, settings.LOG_LEVEL)
    shared_processors = _shared_processors()

    structlog.configure(
        processors=shared_processors
        + [
            structlog.stdlib.ProcessorFormatter.wrap_for_formatter,
        ],
        wrapper_class=structlog.stdlib.BoundLogger,
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        cache_logger_on_first_use=True,
    )

    if settings.LOG_FORMAT == "json":
        console_renderer: Processor = structlog.processors.JSONRenderer()
    else:
        console_renderer = structlog.dev.ConsoleRenderer(colors=True)

    formatter = structlog.stdlib.ProcessorFormatter(
        processor=console_renderer,
        foreign_pre_chain=shared_processors,
    )

    root_logger = logging.getLogger()
    for existing in list(root_logger.handlers):
        if getattr(existing, "name", None) in ("podkd-console", _RUN_HANDLER_NAME):
            root_logger.removeHandler(existing)
            existing.close()

    handler = logging.StreamHandler(sys.stdout)
    handler.set_name("podkd-console")
    handler.setFormatter(formatter)
    root_logger.addHandler(handler)

    if log_file is not None:
        add_run_log_file(log_file)

    root_logger.setLevel(log_level)

    # Reduce noise from third-party libraries
    logging.getLogger("matplotlib").setLevel(logging.WARNING)
    logging.getLogger("PIL").setLevel(logging.WARNING)
    logging.getLogger("nibabel").setLevel(logging.WARNING)


def add_run_log_file(log_file: Path) -> None:
    """Attach an append-only JSON-lines sink for one run directory.

    Args:
        log_file: Target file; parent directories are created.
    """
    log_file.parent.mkdir(parents=True, exist_ok=True)
    root_logger = logging.getLogger()
    for existing in list(root_logger.handlers):
        if getattr(existing, "name", None) == _RUN_HANDLER_NAME:
            root_logger.removeHandler(existing)
            existing.close()

    file_handler = logging.FileHandler(log_file, mode="a", encoding="utf-8")
    file_handler.set_name(_RUN_HANDLER_NAME)
    file_handler.setFormatter(
        structlog.stdlib.ProcessorFormatter(
            processor=structlog.processors.JSONRenderer(sort_keys=True),
            foreign_pre_chain=_shared_processors(),
        )
    )
    root_logger.addHandler(file_handler)


def bind_run_context(**context: Any) -> None:
    """Bind key/values (run_id, stage, fold, ...) onto every following event."""
    structlog.contextvars.bind_contextvars(**context)


def clear_run_context() -> None:
    """Drop all bound context variables."""
    structlog.contextvars.clear_contextvars()


def get_logger(name: str | None = None) -> structlog.stdlib.BoundLogger:
    """Get a structured logger instance.

    Args:
        name: Logger name (usually __name__)

    Returns:
        Configured structlog logger
    """
    return structlog.get_logger(name)
