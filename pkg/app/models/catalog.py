"""
Registro de modelos y catálogo de mutaciones (errores sembrados).

Las mutaciones son reconstrucciones de clases de errores conocidas; cada una altera una única
guarda o actualización en una única acción.
"""
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, Type, Union

from app.core.error_handlers import UsageError
from app.models.base import ModelInterface
from app.models.common import ZabModelBase
from app.models.ipa import IpaTestModel
from app.models.protocol import ProtocolModel
from app.models.system import SystemModel
from app.models.toy import ToyCounterModel
from app.schemas.enums import InvariantId, ModelName, MutationId
from app.schemas.explore import ExploreConfig

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MutationInfo:
    id: MutationId
    action: str
    description: str
    symptom: Iterable[InvariantId]


MUTATION_CATALOG: Dict[MutationId, MutationInfo] = {
    MutationId.WEAK_QUORUM: MutationInfo(
        MutationId.WEAK_QUORUM, "is_quorum",
        "Quórum débil |S| >= n/2: con n par dos líderes pueden establecerse en la misma época.",
        (InvariantId.SINGLE_ESTABLISHED_LEADER,),
    ),
    MutationId.SYNC_SKIP_TRUNC: MutationInfo(
        MutationId.SYNC_SKIP_TRUNC, "leader_decide_sync_mode",
        "La regla TRUNC cae en un DIFF sin truncar: el seguidor conserva entradas divergentes.",
        (InvariantId.TOTAL_ORDER, InvariantId.LEADER_LOG_COMPLETENESS),
    ),
    MutationId.COMMIT_BEFORE_QUORUM: MutationInfo(
        MutationId.COMMIT_BEFORE_QUORUM, "leader_propose",
        "El líder avanza lastCommitted con su propio ACK, sin esperar quórum.",
        (InvariantId.LEADER_LOG_COMPLETENESS, InvariantId.MONOTONIC_READ),
    ),
    MutationId.RECOVER_RACE_RAW: MutationInfo(
        MutationId.RECOVER_RACE_RAW, "leader_handle_recovering_follower",
        "El seguidor que se recupera en BROADCAST no queda registrado como en sincronización: "
        "pierde las propuestas intermedias y COMMITLD apunta fuera de su log.",
        (InvariantId.COMMITTED_WITHIN_HISTORY,),
    ),
    MutationId.DIFF_FROM_UNCOMMITTED: MutationInfo(
        MutationId.DIFF_FROM_UNCOMMITTED, "leader_decide_sync_mode",
        "En BROADCAST el DIFF se calcula desde el log completo y marca como entregado lo no confirmado.",
        (InvariantId.MONOTONIC_READ, InvariantId.LEADER_LOG_COMPLETENESS),
    ),
}

MODEL_REGISTRY: Dict[ModelName, Type[ZabModelBase]] = {
    ModelName.PROTOCOL: ProtocolModel,
    ModelName.SYSTEM: SystemModel,
    ModelName.TEST: IpaTestModel,
}


def parse_mutation(m: Union[str, MutationId]) -> MutationId:
    try:
        return MutationId(m)
    except ValueError as exc:
        raise UsageError(f"Mutación desconocida: {m}", disponibles=[x.value for x in MutationId]) from exc


def build_model(name: Union[str, ModelName], cfg: ExploreConfig) -> ModelInterface:
    """Instancia el modelo pedido con la configuración (mutaciones incluidas)."""
    try:
        kind = ModelName(name)
    except ValueError as exc:
        raise UsageError(f"Modelo desconocido: {name}", disponibles=[m.value for m in ModelName]) from exc
    if kind is ModelName.TOY:
        return ToyCounterModel()
    model = MODEL_REGISTRY[kind](cfg)
    logger.debug(f"Modelo {kind.value} construido (n={cfg.n_servers}, mutaciones={[m.value for m in cfg.mutations]})")
    return model


def apply_mutation(model: ZabModelBase, m: Union[str, MutationId]) -> ZabModelBase:
    """Copia del modelo idéntica salvo por la mutación indicada."""
    mutation = parse_mutation(m)
    if not isinstance(model, ZabModelBase):
        raise UsageError("Sólo los modelos de Zab admiten mutaciones", modelo=getattr(model, "name", "?"))
    data = model.cfg.model_dump()
    data["mutations"] = list(model.cfg.mutations) + [mutation]
    return type(model)(ExploreConfig.model_validate(data))
