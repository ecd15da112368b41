import logging
from pathlib import Path

import pytest

from app.core.config import settings
from app.models.catalog import build_model
from app.models.protocol import ProtocolModel
from app.models.system import SystemModel
from app.models.toy import ToyCounterModel
from app.schemas.enums import ModelName
from app.schemas.explore import ExploreConfig

# Configuración básica de logging para los tests
logging.basicConfig(level=logging.INFO, format='%(asctime)s [%(levelname)s] [%(name)s] [%(funcName)s] %(message)s')
logger = logging.getLogger(__name__)


@pytest.fixture(autouse=True)
def sin_archivos_de_log(monkeypatch):
    """Los tests nunca escriben el log rotativo del proyecto."""
    monkeypatch.setattr(settings, "LOG_TO_FILE", False)


@pytest.fixture
def small_cfg() -> ExploreConfig:
    """Tres servidores, una transacción y sin fallos: exhaustivo en segundos."""
    return ExploreConfig(n_servers=3, max_transactions=1, time_limit_secs=120)


@pytest.fixture
def toy_model() -> ToyCounterModel:
    return ToyCounterModel()


@pytest.fixture
def protocol_model(small_cfg: ExploreConfig) -> ProtocolModel:
    return build_model(ModelName.PROTOCOL, small_cfg)


@pytest.fixture
def system_model(small_cfg: ExploreConfig) -> SystemModel:
    return build_model(ModelName.SYSTEM, small_cfg)


@pytest.fixture
def tmp_output_dir(tmp_path: Path, monkeypatch) -> Path:
    """Directorio de salida aislado, inyectado por la variable de entorno ZAB_OUTPUT_DIR."""
    out = tmp_path / "runs"
    monkeypatch.setenv("ZAB_OUTPUT_DIR", str(out))
    logger.debug(f"ZAB_OUTPUT_DIR apuntando a {out}")
    return out
