# utils/logging_setup.py
from __future__ import annotations

import logging
import sys

import structlog

import config.settings as settings

_CONFIGURED = False


def configure_logging(level: str | None = None, json_output: bool | None = None) -> None:
    """
    Route structlog through stdlib logging once per process.
    Console rendering by default; JSON lines when WOGCL_LOG_JSON is set.
    """
    global _CONFIGURED
    lvl = getattr(logging, str(level or settings.LOG_LEVEL).upper(), logging.INFO)
    use_json = settings.LOG_JSON if json_output is None else json_output

    logging.basicConfig(level=lvl, format="%(message)s", stream=sys.stderr, force=_CONFIGURED)

    renderer = (
        structlog.processors.JSONRenderer(sort_keys=True)
        if use_json
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.format_exc_info,
            renderer,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    _CONFIGURED = True
