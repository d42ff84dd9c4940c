import logging

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def configure_logging(level: int = logging.INFO) -> None:
    """Configure root logging once for CLI and service entry points."""
    logging.basicConfig(level=level, format=LOG_FORMAT)
