"""
Formato de archivo de trazas (texto, UTF-8, una línea por registro):

    #zab-trace v1 model=<modelo> config=<16 hex> initial=<16 hex> steps=<k>
    #config <ExploreConfig en JSON compacto, claves ordenadas>
    <índice>\t<acción>\t<actor o ->\t<parámetros o ->\t<digest 16 hex>

Los parámetros se separan por comas; enteros en decimal y cadenas con prefijo "s:".
El digest de configuración de la cabecera se recalcula desde la línea #config al leer.
"""
import json
import logging
import re
from pathlib import Path
from typing import Any, List, Tuple

from pydantic import ValidationError

from app.core.error_handlers import TraceIntegrityError
from app.models.base import ActionInstance, ModelInterface
from app.schemas.enums import ModelName
from app.schemas.explore import ExploreConfig, Trace, TraceStep, config_digest
from app.services.explorer import digest_hex

logger = logging.getLogger(__name__)

HEADER_RE = re.compile(
    r"^#zab-trace v1 model=(?P<model>\w+) config=(?P<config>[0-9a-f]{16}) "
    r"initial=(?P<initial>[0-9a-f]{16}) steps=(?P<steps>\d+)$"
)
DIGEST_RE = re.compile(r"^[0-9a-f]{16}$")


def _encode_param(p: Any) -> str:
    if isinstance(p, bool) or not isinstance(p, (int, str)):
        raise TraceIntegrityError("Parámetro de acción no escalar", valor=repr(p))
    return str(p) if isinstance(p, int) else f"s:{p}"


def _decode_param(raw: str) -> Any:
    if raw.startswith("s:"):
        return raw[2:]
    try:
        return int(raw)
    except ValueError as exc:
        raise TraceIntegrityError("Parámetro ilegible en la traza", valor=raw) from exc


def format_trace(trace: Trace, cfg: ExploreConfig) -> str:
    lines = [
        f"#zab-trace v1 model={trace.model.value} config={trace.config_digest} "
        f"initial={trace.initial_digest} steps={len(trace.steps)}",
        "#config " + json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":")),
    ]
    for step in trace.steps:
        a = step.action
        actor = "-" if a.actor is None else str(a.actor)
        params = ",".join(_encode_param(p) for p in a.params) if a.params else "-"
        lines.append(f"{step.index}\t{a.name}\t{actor}\t{params}\t{step.digest}")
    return "\n".join(lines) + "\n"


def write_trace(path: Path, trace: Trace, cfg: ExploreConfig) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_trace(trace, cfg), encoding="utf-8")
    logger.info(f"Traza de {len(trace.steps)} pasos escrita en {path}")
    return path


def parse_trace(text: str) -> Tuple[Trace, ExploreConfig]:
    """Lee y valida la estructura de una traza. No re-ejecuta el modelo."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if len(lines) < 2:
        raise TraceIntegrityError("Traza incompleta: faltan las líneas de cabecera")
    header = HEADER_RE.match(lines[0])
    if header is None:
        raise TraceIntegrityError("Cabecera de traza inválida", linea=lines[0][:80])
    if not lines[1].startswith("#config "):
        raise TraceIntegrityError("Falta la línea #config")
    try:
        model = ModelName(header["model"])
        cfg = ExploreConfig.model_validate(json.loads(lines[1][len("#config "):]))
    except (ValueError, ValidationError) as exc:
        raise TraceIntegrityError("Configuración embebida ilegible", error=str(exc)[:120]) from exc

    expected_cfg = config_digest(cfg, model)
    if expected_cfg != header["config"]:
        raise TraceIntegrityError("El digest de configuración no coincide", cabecera=header["config"], calculado=expected_cfg)

    steps: List[TraceStep] = []
    for line_no, line in enumerate(lines[2:], start=3):
        parts = line.split("\t")
        if len(parts) != 5:
            raise TraceIntegrityError("Registro de paso mal formado", linea=line_no)
        index_raw, name, actor_raw, params_raw, digest = parts
        if not index_raw.isdigit() or int(index_raw) != len(steps) + 1:
            raise TraceIntegrityError("Índices de paso no consecutivos", linea=line_no)
        if DIGEST_RE.match(digest) is None:
            raise TraceIntegrityError("Digest de paso inválido", linea=line_no, digest=digest)
        actor = None if actor_raw == "-" else _decode_param(actor_raw)
        params = () if params_raw == "-" else tuple(_decode_param(p) for p in params_raw.split(","))
        steps.append(TraceStep(index=int(index_raw), action=ActionInstance(name, actor, params), digest=digest))

    if len(steps) != int(header["steps"]):
        raise TraceIntegrityError("La cantidad de pasos no coincide con la cabecera",
                                  cabecera=header["steps"], encontrados=len(steps))
    trace = Trace(model=model, config_digest=header["config"], initial_digest=header["initial"], steps=steps)
    return trace, cfg


def read_trace(path: Path) -> Tuple[Trace, ExploreConfig]:
    path = Path(path)
    if not path.exists():
        raise TraceIntegrityError("El archivo de traza no existe", ruta=str(path))
    return parse_trace(path.read_text(encoding="utf-8"))


def replay_trace(model: ModelInterface, trace: Trace) -> List[Any]:
    """
    Re-ejecuta la traza sobre el modelo y comprueba cada digest registrado.
    Devuelve la lista de estados [inicial, tras paso 1, ...].
    """
    initial = None
    for s in model.init_states():
        if digest_hex(s) == trace.initial_digest:
            initial = s
            break
    if initial is None:
        raise TraceIntegrityError("Ningún estado inicial del modelo coincide con el digest inicial",
                                  digest=trace.initial_digest)
    states = [initial]
    state = initial
    for step in trace.steps:
        enabled = model.enabled(state)
        if step.action not in enabled:
            raise TraceIntegrityError("Acción no habilitada al re-ejecutar la traza", paso=step.index, accion=str(step.action))
        state = model.apply(state, step.action)
        actual = digest_hex(state)
        if actual != step.digest:
            raise TraceIntegrityError("Digest de paso no reproducible", paso=step.index,
                                      registrado=step.digest, calculado=actual)
        states.append(state)
    return states
