"""
Chequeo muestreado de refinamiento: una traza del modelo de sistema, proyectada por servidor a
(rol, currentEpoch, prefijo entregado), debe poder seguirse en el modelo de protocolo.

Correspondencia de acciones: cada paso del sistema se empareja con una macro-acción del
protocolo de hasta `depth` acciones. Las entregas de mensajes del protocolo entran libremente
en cualquier macro-acción; el resto de las acciones del protocolo (oráculo, propuestas y fallos)
sólo entran si figuran en SYSTEM_TO_PROTOCOL para la acción del sistema. Un paso del sistema
que no cambia la proyección se empareja con la macro-acción vacía.

Un seguidor del sistema en SYNC ya aplicó DIFF/TRUNC/SNAP con el punto de commit del líder,
algo que el protocolo recién le entrega con COMMITLD. Para esos servidores alcanza con que el
prefijo del protocolo sea prefijo del suyo.

El modelo de sistema no adopta historiales en DISCOVERY: el ganador de FLE sincroniza con el
suyo. Si un servidor que no votó se une con un log más largo y su ACKEPOCH completa el quórum,
el protocolo adopta ese log y la traza deja de tener contraparte. Por eso el muestreo se hace
sobre configuraciones sin fallos, con una única elección.
"""
import logging
from typing import Dict, FrozenSet, List, Sequence, Tuple

from app.core.error_handlers import ContractError
from app.harness.schedule import DELIVERY_ACTIONS, ServerView, project_refinement
from app.models.base import ModelInterface
from app.models.catalog import build_model
from app.models.state import ClusterState
from app.schemas.conformance import RefinementReport
from app.schemas.enums import ModelName
from app.schemas.explore import ExploreConfig, Trace
from app.services.trace_io import replay_trace

logger = logging.getLogger(__name__)

PROTOCOL_DELIVERIES = DELIVERY_ACTIONS | {"leader_handle_recovering_follower"}

# Acciones del protocolo (que no son entregas) que puede usar cada acción del sistema
SYSTEM_TO_PROTOCOL: Dict[str, FrozenSet[str]] = {
    "fle_round": frozenset({"oracle_update_leader", "oracle_follow_leader"}),
    "fle_follow_leader": frozenset({"oracle_follow_leader"}),
    "leader_propose": frozenset({"leader_propose"}),
    "crash": frozenset({"restart"}),
    "partition": frozenset({"timeout"}),
}

DEFAULT_DEPTH = 4
DEFAULT_FRONTIER_CAP = 128


def _is_prefix(a: Tuple, b: Tuple) -> bool:
    return len(a) <= len(b) and b[: len(a)] == a


def views_match(system: Sequence[ServerView], protocol: Sequence[ServerView]) -> bool:
    """Relación entre la vista del sistema y la del protocolo, servidor por servidor."""
    for sv, pv in zip(system, protocol):
        if sv.role != pv.role or sv.current_epoch != pv.current_epoch:
            return False
        if sv.syncing:
            if not _is_prefix(pv.committed, sv.committed):
                return False
        elif sv.committed != pv.committed:
            return False
    return True


def protocol_config(cfg: ExploreConfig) -> ExploreConfig:
    """Configuración del protocolo que acompaña a la del sistema: un Restart por caída, un Timeout por partición."""
    return cfg.model_copy(update=dict(
        max_restarts=cfg.max_crashes,
        max_timeouts=cfg.max_partitions,
        max_crashes=0,
        max_partitions=0,
    ))


class RefinementChecker:
    """Sigue una traza del sistema con el conjunto de estados del protocolo que la imitan."""

    def __init__(self, cfg: ExploreConfig, depth: int = DEFAULT_DEPTH, frontier_cap: int = DEFAULT_FRONTIER_CAP):
        self.cfg = cfg
        self.system: ModelInterface = build_model(ModelName.SYSTEM, cfg)
        self.protocol: ModelInterface = build_model(ModelName.PROTOCOL, protocol_config(cfg))
        self.depth = depth
        self.frontier_cap = frontier_cap

    def macro_step(self, frontier: List[ClusterState], target: Tuple[ServerView, ...],
                   allowed: FrozenSet[str]) -> List[ClusterState]:
        """Estados del protocolo que imitan target, a lo sumo `depth` acciones después de frontier."""
        matched: Dict[ClusterState, None] = {}
        visited = set(frontier)
        for state in frontier:
            if views_match(target, project_refinement(state)):
                matched[state] = None
        level = list(frontier)
        for _ in range(self.depth):
            following: List[ClusterState] = []
            for state in level:
                for action in self.protocol.enabled(state):
                    if action.name not in PROTOCOL_DELIVERIES and action.name not in allowed:
                        continue
                    succ = self.protocol.apply(state, action)
                    if succ in visited:
                        continue
                    visited.add(succ)
                    following.append(succ)
                    if views_match(target, project_refinement(succ)):
                        matched[succ] = None
                        if len(matched) >= self.frontier_cap:
                            return list(matched)
            level = following
        return list(matched)

    def check(self, trace: Trace) -> RefinementReport:
        if trace.model is not ModelName.SYSTEM:
            raise ContractError("El refinamiento se comprueba sobre trazas del modelo de sistema",
                                modelo=trace.model.value)
        states = replay_trace(self.system, trace)
        frontier = [s for s in self.protocol.init_states()
                    if views_match(project_refinement(states[0]), project_refinement(s))]
        peak = len(frontier)
        for step, after in zip(trace.steps, states[1:]):
            allowed = SYSTEM_TO_PROTOCOL.get(step.action.name, frozenset())
            frontier = self.macro_step(frontier, project_refinement(after), allowed)
            peak = max(peak, len(frontier))
            if not frontier:
                logger.warning(f"Refinamiento: el paso {step.index} ({step.action}) no tiene contraparte en el protocolo")
                return RefinementReport(steps_checked=step.index - 1, failed_step=step.index,
                                        failed_action=str(step.action), frontier_peak=peak)
        logger.info(f"Refinamiento: {len(trace)} pasos con contraparte (frontera máxima {peak})")
        return RefinementReport(steps_checked=len(trace), frontier_peak=peak)


def check_refinement(trace: Trace, cfg: ExploreConfig, depth: int = DEFAULT_DEPTH) -> RefinementReport:
    return RefinementChecker(cfg, depth=depth).check(trace)
