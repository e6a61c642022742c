import logging

from rich.logging import RichHandler

_ROOT = "app"


def configure_logging(level: str = "INFO") -> logging.Logger:
    """Attach a single rich handler to the package logger."""
    logger = logging.getLogger(_ROOT)
    logger.setLevel(level.upper())
    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        handler = RichHandler(rich_tracebacks=True, show_path=False, markup=False)
        handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
        logger.addHandler(handler)
    return logger
