"""
Structured logging for solver runs and experiment sweeps.

Sweep logs are JSON lines so they can be loaded with pandas afterwards;
interactive runs print plain text. Run context (run_id for CLI commands,
game/opponent/algorithm for harness cells) travels on the record as a
`context` mapping and is flattened into the JSON object.
"""

import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Mapping, MutableMapping, Tuple

from .config import config

ROOT_LOGGER = "cdlr"
TEXT_FORMAT = "%(asctime)s %(levelname)-8s %(name)s: %(message)s"

# output key -> LogRecord attribute
FIELDS = (
    ("level", "levelname"),
    ("logger", "name"),
    ("module", "module"),
    ("function", "funcName"),
    ("line", "lineno"),
)

_BUILTIN_ATTRS = frozenset(vars(logging.LogRecord("", logging.INFO, "", 0, "", (), None))) | {
    "message", "asctime", "context",
}


def _timestamp(record: logging.LogRecord) -> str:
    moment = datetime.fromtimestamp(record.created, timezone.utc)
    return moment.isoformat(timespec="milliseconds").replace("+00:00", "Z")


class JSONFormatter(logging.Formatter):
    """One JSON object per record: fixed fields, then run context, then `extra` keys."""

    def format(self, record: logging.LogRecord) -> str:
        entry: Dict[str, Any] = {"timestamp": _timestamp(record), "message": record.getMessage()}
        entry.update((key, getattr(record, attr)) for key, attr in FIELDS)
        entry.update(getattr(record, "context", {}))
        entry.update((k, v) for k, v in vars(record).items() if k not in _BUILTIN_ATTRS)
        if record.exc_info:
            entry["exception"] = self.formatException(record.exc_info)
        return json.dumps(entry, default=str)


class ContextLogger(logging.LoggerAdapter):
    """
    Adapter that stamps a fixed run context on every record.

    `bind` returns a new adapter with more context (a resolve step, a seed)
    and leaves this one unchanged.
    """

    def __init__(self, logger: logging.Logger, context: Mapping[str, Any]):
        super().__init__(logger, dict(context))

    @property
    def context(self) -> Dict[str, Any]:
        return dict(self.extra)

    def bind(self, **context: Any) -> "ContextLogger":
        return ContextLogger(self.logger, {**self.extra, **context})

    def process(self, msg: Any, kwargs: MutableMapping[str, Any]) -> Tuple[Any, MutableMapping[str, Any]]:
        extra = dict(kwargs.get("extra") or {})
        extra["context"] = {**self.extra, **extra.get("context", {})}
        kwargs["extra"] = extra
        return msg, kwargs


def _handlers() -> List[logging.Handler]:
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stdout)]
    if config.logging.log_file:
        path = Path(config.logging.log_file)
        path.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(path))
    return handlers


def setup_logging() -> logging.Logger:
    """(Re)configure the `cdlr` logger from `config.logging`; unknown levels mean INFO."""
    root = logging.getLogger(ROOT_LOGGER)
    level = logging.getLevelName(config.logging.level.upper())
    root.setLevel(level if isinstance(level, int) else logging.INFO)
    root.propagate = False
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()

    if config.logging.format_type == "json":
        formatter: logging.Formatter = JSONFormatter()
    else:
        formatter = logging.Formatter(TEXT_FORMAT, datefmt="%H:%M:%S")
    for handler in _handlers():
        handler.setFormatter(formatter)
        root.addHandler(handler)
    return root


def get_logger(name: str) -> logging.Logger:
    """Logger below the package root; pass `__name__`, a leading `src.` is dropped."""
    return logging.getLogger(f"{ROOT_LOGGER}.{name.removeprefix('src.')}")


def get_context_logger(name: str, context: Mapping[str, Any]) -> ContextLogger:
    return ContextLogger(get_logger(name), context)


setup_logging()
