"""
Invariantes de estado y propiedades de paso sobre ClusterState.

Cada función devuelve True si la propiedad se cumple.
"""
from itertools import combinations
from typing import Callable, Dict, List, Tuple

from app.models.base import ActionInstance
from app.models.state import ClusterState, ServerState
from app.models.zab import QuorumSystem, Txn
from app.schemas.enums import InvariantId, Phase, Role

ESTABLISHING_ACTIONS = ("fle_round", "ipa_establish_leader")


def _is_prefix(a: Tuple[Txn, ...], b: Tuple[Txn, ...]) -> bool:
    return len(a) <= len(b) and b[: len(a)] == a


# ==========================================
# PROPIEDADES DEL BROADCAST
# ==========================================

def integrity(state: ClusterState, qs: QuorumSystem) -> bool:
    """Sólo se entrega lo que algún líder propuso."""
    proposed = set(state.proposed)
    return all(t in proposed for s in state.servers for t in s.committed())


def total_order(state: ClusterState, qs: QuorumSystem) -> bool:
    """Los prefijos entregados de dos servidores cualesquiera son uno prefijo del otro."""
    committed = [s.committed() for s in state.servers]
    for a, b in combinations(committed, 2):
        if not (_is_prefix(a, b) or _is_prefix(b, a)):
            return False
    return True


def local_primary_order(state: ClusterState, qs: QuorumSystem) -> bool:
    """Dentro de una época, lo entregado respeta el orden de propuesta sin huecos."""
    for s in state.servers:
        prev = None
        for t in s.committed():
            z = t.zxid
            if prev is not None and z.epoch == prev.epoch:
                if z.counter != prev.counter + 1:
                    return False
            elif z.counter != 1:
                return False
            prev = z
    return True


def global_primary_order(state: ClusterState, qs: QuorumSystem) -> bool:
    """Lo entregado está en orden estrictamente creciente de zxid, también entre épocas."""
    for s in state.servers:
        zs = [t.zxid for t in s.committed()]
        if any(a >= b for a, b in zip(zs, zs[1:])):
            return False
    return True


def primary_integrity(state: ClusterState, qs: QuorumSystem) -> bool:
    """Un líder en BROADCAST ya entregó todo lo que adoptó al establecerse."""
    for s in state.servers:
        if s.role is Role.LEADING and s.phase is Phase.BROADCAST and not s.crashed:
            if s.last_committed < s.adopted_last:
                return False
    return True


def single_established_leader(state: ClusterState, qs: QuorumSystem) -> bool:
    """No hay dos líderes establecidos con quórum en la misma época."""
    established = [
        s for s in state.servers
        if s.role is Role.LEADING and s.phase in (Phase.SYNC, Phase.BROADCAST)
        and not s.crashed and qs.is_quorum(s.cepoch_recv)
    ]
    for a, b in combinations(established, 2):
        if a.current_epoch == b.current_epoch:
            return False
    return True


def committed_within_history(state: ClusterState, qs: QuorumSystem) -> bool:
    """lastCommitted apunta a una entrada del propio log y el log está bien formado."""
    for s in state.servers:
        if not s.history.is_well_formed():
            return False
        if not s.last_committed.is_zero() and not s.history.contains(s.last_committed):
            return False
    return True


def leader_log_completeness(state: ClusterState, qs: QuorumSystem) -> bool:
    """Un líder establecido contiene todo lo entregado por cualquier servidor, caído o no."""
    leaders = [s for s in state.servers
               if s.role is Role.LEADING and s.phase is Phase.BROADCAST and not s.crashed]
    for leader in leaders:
        held = set(leader.history.entries)
        for s in state.servers:
            if any(t not in held for t in s.committed()):
                return False
    return True


# ==========================================
# PROPIEDADES DE PASO
# ==========================================

def epoch_monotonicity(before: ClusterState, action: ActionInstance, after: ClusterState) -> bool:
    for a, b in zip(before.servers, after.servers):
        if b.accepted_epoch < a.accepted_epoch or b.current_epoch < a.current_epoch:
            return False
    return True


def monotonic_read(before: ClusterState, action: ActionInstance, after: ClusterState) -> bool:
    """El prefijo entregado de cada servidor sólo crece."""
    return all(_is_prefix(a.committed(), b.committed()) for a, b in zip(before.servers, after.servers))


def elected_leader_up_to_date(before: ClusterState, action: ActionInstance, after: ClusterState) -> bool:
    """El ganador de una elección tiene la clave de voto máxima entre los participantes."""
    if action.name not in ESTABLISHING_ACTIONS or after.oracle is None:
        return True
    winner: ServerState = before.server(after.oracle)
    return all(winner.vote_key() >= before.server(int(p)).vote_key() for p in action.params)


StateCheck = Callable[[ClusterState, QuorumSystem], bool]
StepCheck = Callable[[ClusterState, ActionInstance, ClusterState], bool]

STATE_INVARIANTS: Dict[InvariantId, StateCheck] = {
    InvariantId.INTEGRITY: integrity,
    InvariantId.TOTAL_ORDER: total_order,
    InvariantId.LOCAL_PRIMARY_ORDER: local_primary_order,
    InvariantId.GLOBAL_PRIMARY_ORDER: global_primary_order,
    InvariantId.PRIMARY_INTEGRITY: primary_integrity,
    InvariantId.SINGLE_ESTABLISHED_LEADER: single_established_leader,
    InvariantId.COMMITTED_WITHIN_HISTORY: committed_within_history,
    InvariantId.LEADER_LOG_COMPLETENESS: leader_log_completeness,
}

STEP_PROPERTIES: Dict[InvariantId, StepCheck] = {
    InvariantId.EPOCH_MONOTONICITY: epoch_monotonicity,
    InvariantId.MONOTONIC_READ: monotonic_read,
    InvariantId.ELECTED_LEADER_UP_TO_DATE: elected_leader_up_to_date,
}

DESCRIPTIONS: Dict[InvariantId, str] = {
    InvariantId.INTEGRITY: "Sólo se entregan transacciones propuestas",
    InvariantId.TOTAL_ORDER: "Los prefijos entregados son comparables por prefijo",
    InvariantId.LOCAL_PRIMARY_ORDER: "Orden de propuesta sin huecos dentro de cada época",
    InvariantId.GLOBAL_PRIMARY_ORDER: "Zxid estrictamente creciente en lo entregado",
    InvariantId.PRIMARY_INTEGRITY: "El líder en BROADCAST entregó su historial adoptado",
    InvariantId.SINGLE_ESTABLISHED_LEADER: "A lo sumo un líder establecido por época",
    InvariantId.COMMITTED_WITHIN_HISTORY: "lastCommitted dentro del log bien formado",
    InvariantId.LEADER_LOG_COMPLETENESS: "El líder establecido contiene todo lo entregado",
    InvariantId.EPOCH_MONOTONICITY: "acceptedEpoch y currentEpoch nunca decrecen (paso)",
    InvariantId.MONOTONIC_READ: "El prefijo entregado sólo crece (paso)",
    InvariantId.ELECTED_LEADER_UP_TO_DATE: "El líder electo tiene el voto máximo (paso)",
}


def check_state(state: ClusterState, qs: QuorumSystem, ids: List[InvariantId]) -> List[InvariantId]:
    return [i for i in ids if not STATE_INVARIANTS[i](state, qs)]


def check_step(before: ClusterState, action: ActionInstance, after: ClusterState,
               ids: List[InvariantId]) -> List[InvariantId]:
    return [i for i in ids if not STEP_PROPERTIES[i](before, action, after)]
