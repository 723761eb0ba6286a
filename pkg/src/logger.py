import logging
import os
import sys
from logging.handlers import RotatingFileHandler

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def setup_logger(log_dir="logs", log_file="plc.log", level="INFO"):
    """Setup logging configuration for the command line tools.

    Args:
        log_dir: Directory for the rotating log file
        log_file: Name of the log file inside log_dir
        level: Root log level name or number

    Returns:
        The configured root logger
    """
    if not os.path.exists(log_dir):
        os.makedirs(log_dir)

    root_logger = logging.getLogger()
    root_logger.setLevel(level)

    # Calling twice (e.g. sweep workers) must not duplicate output
    for handler in list(root_logger.handlers):
        if getattr(handler, "_plc_handler", False):
            root_logger.removeHandler(handler)
            handler.close()

    log_format = logging.Formatter(LOG_FORMAT)

    console_handler = logging.StreamHandler(sys.stdout)
    console_handler.setFormatter(log_format)
    console_handler._plc_handler = True
    root_logger.addHandler(console_handler)

    file_handler = RotatingFileHandler(
        os.path.join(log_dir, log_file),
        maxBytes=10*1024*1024,  # 10MB
        backupCount=5
    )
    file_handler.setFormatter(log_format)
    file_handler._plc_handler = True
    root_logger.addHandler(file_handler)

    return root_logger
