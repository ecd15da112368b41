import logging
import sys
from logging.handlers import TimedRotatingFileHandler
from pathlib import Path
from typing import Optional

from app.core.config import settings

# 1. Definir BASE_DIR de forma absoluta y dinámica.
# Desde core/logging_config.py -> parent(core) -> parent(app) -> parent(root)
BASE_DIR = Path(__file__).resolve().parent.parent.parent
LOGS_DIR = settings.LOGS_DIR

LOG_FORMAT = "%(asctime)s.%(msecs)03d [%(levelname)-8s] [%(name)s] [%(process)d:%(threadName)s] [%(filename)s:%(lineno)d] - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logging(level: Optional[str] = None, to_file: Optional[bool] = None) -> None:
    """Configura los manejadores y el nivel para el logger raíz y loggers específicos."""
    log_level = getattr(logging, (level or settings.LOG_LEVEL).upper(), logging.INFO)
    write_file = settings.LOG_TO_FILE if to_file is None else to_file
    component = settings.APP_COMPONENT

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    # Consola en stderr: stdout queda para tablas y resúmenes del CLI
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    console_handler.setLevel(log_level)

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    root_logger.handlers.clear()
    root_logger.addHandler(console_handler)

    if write_file:
        LOGS_DIR.mkdir(parents=True, exist_ok=True)
        log_filename = LOGS_DIR / f"zab_checker_{component}.log"
        file_handler = TimedRotatingFileHandler(
            filename=log_filename,
            when="midnight",
            interval=1,
            backupCount=14,
            encoding='utf-8',
            delay=True
        )
        file_handler.setFormatter(formatter)
        file_handler.setLevel(log_level)
        root_logger.addHandler(file_handler)

    # Bajar el ruido de loggers externos
    logging.getLogger("fontTools").setLevel(logging.WARNING)
    logging.getLogger("fpdf").setLevel(logging.WARNING)
    # Los nodos del harness son muy verbosos en DEBUG
    logging.getLogger("zab.node").setLevel(max(log_level, logging.INFO))

    root_logger.debug("=" * 50)
    root_logger.debug("Configuración de Logging Inicializada")
    root_logger.debug(f"Ruta Base Absoluta: {BASE_DIR}")
    root_logger.debug(f"Componente Activo: {component.upper()}")
    root_logger.debug("=" * 50)
