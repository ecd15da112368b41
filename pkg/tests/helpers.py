"""Utilidades compartidas por los tests: búsqueda dirigida de trazas y recorridos con semilla."""
from collections import deque
from typing import Any, Callable, Dict, List, Optional

from app.models.base import ActionInstance, ModelInterface
from app.schemas.enums import MutationId
from app.schemas.explore import ExploreConfig, Trace, config_digest
from app.services.explorer import digest_hex, replay_actions, sample_walk

Goal = Callable[[Any, ActionInstance, Any], bool]


def make_trace(model: ModelInterface, cfg: ExploreConfig, initial: Any, actions: List[ActionInstance]) -> Trace:
    _, steps = replay_actions(model, initial, actions)
    return Trace(model=model.kind, config_digest=config_digest(cfg, model.kind),
                 initial_digest=digest_hex(initial), steps=steps)


def find_trace(model: ModelInterface, cfg: ExploreConfig, goal: Goal, max_states: int = 200_000) -> Optional[Trace]:
    """Traza más corta cuyo último paso (antes, acción, después) cumple goal."""
    queue = deque()
    parents = {}
    for s in model.init_states():
        if s not in parents:
            parents[s] = None
            queue.append(s)
    while queue and len(parents) < max_states:
        state = queue.popleft()
        for action in model.enabled(state):
            succ = model.apply(state, action)
            if goal(state, action, succ):
                path = [action]
                cursor = state
                while parents[cursor] is not None:
                    cursor, prev_action = parents[cursor]
                    path.append(prev_action)
                path.reverse()
                return make_trace(model, cfg, cursor, path)
            if succ not in parents:
                parents[succ] = (state, action)
                queue.append(succ)
    return None


def seeded_walks(model: ModelInterface, cfg: ExploreConfig, count: int) -> List[Trace]:
    """`count` recorridos aleatorios reproducibles (con o sin violación)."""
    inits = model.init_states()
    return [sample_walk(model, cfg, i, inits)[0] for i in range(count)]


# Configuración del modelo de prueba más chica en la que cada mutación produce un contraejemplo
MUTATION_BUDGETS: Dict[MutationId, Dict[str, int]] = {
    MutationId.WEAK_QUORUM: dict(n_servers=2, ipa_max_history=0, max_transactions=0),
    MutationId.SYNC_SKIP_TRUNC: dict(n_servers=3, ipa_max_history=2, max_transactions=0),
    MutationId.COMMIT_BEFORE_QUORUM: dict(n_servers=3, ipa_max_history=0, max_transactions=1, max_crashes=1),
    MutationId.RECOVER_RACE_RAW: dict(n_servers=3, ipa_max_history=0, max_transactions=1),
    MutationId.DIFF_FROM_UNCOMMITTED: dict(n_servers=3, ipa_max_history=0, max_transactions=1, max_crashes=1),
}


def mutation_config(mutation: MutationId, **extra: Any) -> ExploreConfig:
    return ExploreConfig(mutations=[mutation], time_limit_secs=900, **{**MUTATION_BUDGETS[mutation], **extra})
