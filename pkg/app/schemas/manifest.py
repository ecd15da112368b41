import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import ConfigDict, Field

from app.core.error_handlers import UsageError
from app.schemas.enums import ModelName
from app.schemas.explore import ExploreConfig

logger = logging.getLogger(__name__)

# Claves del manifest que no forman parte de ExploreConfig
RUN_KEYS = ("model", "output_dir")


class RunManifest(ExploreConfig):
    """
    Documento de configuración de una corrida: modelo, campos de ExploreConfig y ruta de salida.
    Las claves desconocidas se rechazan.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    model: ModelName = Field(ModelName.PROTOCOL, description="Modelo a explorar: protocol, system o test.")
    output_dir: Optional[Path] = Field(None, description="Directorio base de salida (por defecto ZAB_OUTPUT_DIR).")

    def to_explore_config(self) -> ExploreConfig:
        return ExploreConfig.model_validate(self.model_dump(exclude=set(RUN_KEYS)))

    def explicit_keys(self) -> set:
        """Claves escritas en el manifest (no las que tomaron su valor por defecto)."""
        return set(self.model_fields_set)


def load_manifest(path: Path) -> RunManifest:
    """Lee un manifest JSON. Un archivo ilegible es un error de uso; una clave inválida, de validación."""
    path = Path(path)
    if not path.exists():
        raise UsageError("El manifest no existe", ruta=str(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError("Manifest con JSON inválido", ruta=str(path), linea=exc.lineno) from exc
    if not isinstance(data, dict):
        raise UsageError("El manifest debe ser un objeto JSON", ruta=str(path))
    manifest = RunManifest.model_validate(data)
    logger.info(f"Manifest cargado: {path} (claves: {sorted(manifest.explicit_keys())})")
    return manifest


def merge_with_flags(manifest: Optional[RunManifest], flags: Dict[str, Any]) -> RunManifest:
    """
    Combina flags de línea de comandos con el manifest. En conflicto gana el manifest
    y se emite un warning por cada flag descartado.
    """
    flags = {k: v for k, v in flags.items() if v is not None}
    if manifest is None:
        return RunManifest.model_validate(flags)
    data = manifest.model_dump(mode="json", include=manifest.explicit_keys())
    normalized = RunManifest.model_validate({"force_servers": True, **flags}).model_dump(mode="json")
    for key in flags:
        value = normalized[key]
        if key in data:
            if data[key] != value:
                logger.warning(f"El flag --{key.replace('_', '-')}={value} se ignora: el manifest fija {data[key]}")
            continue
        data[key] = value
    return RunManifest.model_validate(data)


def manifest_reference() -> str:
    """Esquema JSON del manifest con los valores por defecto de cada clave."""
    return json.dumps(RunManifest.model_json_schema(), indent=2, ensure_ascii=False)
