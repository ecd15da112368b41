"""
Realización de los estados iniciales del modelo de prueba en el modelo de sistema.

Cada estado inicial sale de un clúster sembrado y de un ipa_establish_leader. El plan
reconstruye las épocas que dejaron esos historiales: una elección FLE con el grupo que hace
ganar al líder de la época, los seguidores que se suman tarde, las propuestas repartidas a
quienes las conservan y la caída del líder. Cada tramo se resuelve con una búsqueda en anchura
restringida a las acciones del tramo. Las acciones abstractas se traducen igual: fle_round (o
fle_follow_leader) y el handshake de DISCOVERY hasta llegar al mismo estado.

Dos estados se comparan sin presupuestos: el sistema gasta caídas y propuestas en el prefijo.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from app.core.error_handlers import ContractError
from app.models.base import ActionInstance
from app.models.catalog import build_model
from app.models.ipa import IpaTestModel, Seed, epoch_one_leader, family_histories, top_epoch
from app.models.state import ClusterState
from app.models.zab import ZERO, History, Zxid
from app.schemas.conformance import RealizationReport
from app.schemas.enums import ModelName, Phase, Role
from app.schemas.explore import ExploreConfig, Trace, config_digest
from app.services.explorer import digest_hex, replay_actions
from app.services.trace_io import replay_trace

logger = logging.getLogger(__name__)

DISCOVERY_ACTIONS = frozenset({
    "follower_send_followerinfo",
    "leader_validate_follower",
    "follower_handle_newepoch",
    "leader_handle_ackepoch",
})
SYNC_ACTIONS = frozenset({
    "leader_decide_sync_mode",
    "follower_apply_sync",
    "follower_handle_newleader",
    "leader_handle_ackld",
    "follower_handle_commitld",
})
BROADCAST_ACTIONS = frozenset({"follower_handle_propose", "leader_handle_ack", "follower_handle_commit"})

STAGE_STATE_LIMIT = 200_000

Allowed = Callable[[ClusterState, ActionInstance], bool]
Goal = Callable[[ClusterState], bool]
Found = Tuple[List[ActionInstance], ClusterState]


def state_view(state: ClusterState) -> tuple:
    """Estado sin presupuestos: lo que el modelo de prueba y el de sistema deben compartir."""
    return (state.servers, state.channels, state.oracle, state.oracle_suspected, state.partitions, state.proposed)


@dataclass
class EpochPlan:
    """Una época del prefijo: quién la lidera, con qué grupo FLE y qué deja en cada servidor."""
    epoch: int
    leader: int
    group: Tuple[int, ...]
    joiners: Tuple[int, ...]
    proposals: int
    targets: Dict[int, Tuple[History, Zxid]] = field(default_factory=dict)

    @property
    def members(self) -> frozenset:
        return frozenset(self.group) | frozenset(self.joiners)


def plan_epochs(seed: Seed, q: int) -> Optional[List[EpochPlan]]:
    """Épocas que llevan del clúster recién iniciado a la semilla; None si la semilla no tiene plan."""
    (a, p, b), choice, cluster = seed
    n = len(choice)
    candidates, _, e2_start = family_histories(a, p, b)
    final = {s.id: (s.history, s.last_committed) for s in cluster.servers}
    if top_epoch(a, p, b) == 0:
        return []
    members1 = [s.id for s in cluster.servers if s.current_epoch >= 1]
    if b > 0 and a > p:
        x = epoch_one_leader(seed.family, choice, q)
        if x is None:
            return None
    else:
        x = max(members1)
    group1 = tuple(sid for sid in members1 if sid <= x)
    joiners1 = tuple(sid for sid in members1 if sid > x)
    if b == 0:
        return [EpochPlan(1, x, group1, joiners1, max(choice), {sid: final[sid] for sid in members1})]

    e1 = candidates[a].entries
    # Entradas de E1[:p] que terminan confirmadas ya lo estaban al cerrar la época 1
    k1 = sum(1 for t in e1[:p] if any(s.history.contains(t.zxid) and t.zxid <= s.last_committed
                                      for s in cluster.servers))
    targets1 = {}
    for sid in members1:
        c = choice[sid - 1]
        if sid == x:
            history = History(e1)
        elif c < p or p < c < e2_start:
            history = candidates[c]
        else:
            history = History(e1[:p])
        known = min(k1, len(history))
        targets1[sid] = (history, e1[known - 1].zxid if known else ZERO)
    first = EpochPlan(1, x, group1, joiners1, a, targets1)

    members2 = [s.id for s in cluster.servers if s.current_epoch == 2]
    blocked = {sid for sid, c in enumerate(choice, start=1) if p < c < e2_start}
    if a > p:
        blocked.add(x)
    second = EpochPlan(
        2, n,
        tuple(sid for sid in members2 if sid not in blocked),
        tuple(sid for sid in members2 if sid in blocked),
        choice[n - 1] - e2_start + 1,
        {sid: final[sid] for sid in members2},
    )
    return [first, second]


class InitStateRealizer:
    """Busca en el modelo de sistema los estados iniciales del modelo de prueba y traduce sus trazas."""

    def __init__(self, cfg: ExploreConfig, stage_limit: int = STAGE_STATE_LIMIT):
        self.cfg = cfg
        self.test: IpaTestModel = build_model(ModelName.TEST, cfg)
        self.q = self.test.qs.min_size()
        # Hasta dos épocas, cada una con su caída y con a lo sumo ipa_max_history propuestas
        self.system_cfg = cfg.model_copy(update=dict(
            max_transactions=cfg.max_transactions + 2 * cfg.ipa_max_history,
            max_crashes=cfg.max_crashes + 2,
        ))
        self.system = build_model(ModelName.SYSTEM, self.system_cfg)
        self.stage_limit = stage_limit

    # --- Búsqueda restringida ---
    def search(self, start: ClusterState, allowed: Allowed, goal: Goal) -> Optional[Found]:
        """Camino más corto desde start hasta un estado que cumple goal, usando sólo acciones permitidas."""
        if goal(start):
            return [], start
        parents: Dict[ClusterState, Optional[Tuple[ClusterState, ActionInstance]]] = {start: None}
        queue = deque([start])
        while queue and len(parents) < self.stage_limit:
            state = queue.popleft()
            for action in self.system.enabled(state):
                if not allowed(state, action):
                    continue
                succ = self.system.apply(state, action)
                if succ in parents:
                    continue
                parents[succ] = (state, action)
                if goal(succ):
                    path: List[ActionInstance] = []
                    cursor = succ
                    while parents[cursor] is not None:
                        cursor, prev = parents[cursor]
                        path.append(prev)
                    path.reverse()
                    return path, succ
                queue.append(succ)
        return None

    # --- Tramos de una época ---
    def _establish(self, state: ClusterState, plan: EpochPlan) -> Optional[Found]:
        followers = plan.members - {plan.leader}

        def allowed(s: ClusterState, action: ActionInstance) -> bool:
            if action.name == "fle_round":
                return tuple(int(p) for p in action.params) == plan.group
            if action.name == "fle_follow_leader":
                return action.actor in plan.joiners
            return action.name in DISCOVERY_ACTIONS or action.name in SYNC_ACTIONS

        def goal(s: ClusterState) -> bool:
            leader = s.server(plan.leader)
            if leader.role is not Role.LEADING or leader.phase is not Phase.BROADCAST or s.in_flight():
                return False
            return all(
                s.server(f).role is Role.FOLLOWING and s.server(f).leader == plan.leader
                and s.server(f).phase is Phase.BROADCAST
                for f in followers
            )

        return self.search(state, allowed, goal)

    def _propose(self, state: ClusterState, plan: EpochPlan) -> Optional[Found]:
        def allowed(s: ClusterState, action: ActionInstance) -> bool:
            if action.name == "leader_propose":
                leader = s.server(plan.leader)
                own = sum(1 for t in leader.history.entries if t.zxid.epoch == leader.current_epoch)
                return action.actor == plan.leader and own < plan.proposals
            return action.name in BROADCAST_ACTIONS

        def goal(s: ClusterState) -> bool:
            return all(
                s.server(sid).history == history and s.server(sid).last_committed == lc
                for sid, (history, lc) in plan.targets.items()
            )

        return self.search(state, allowed, goal)

    def _close(self, state: ClusterState, plan: EpochPlan) -> Optional[Found]:
        actions = [ActionInstance("crash", plan.leader), ActionInstance("rejoin", plan.leader)]
        for action in actions:
            if action not in self.system.enabled(state):
                return None
            state = self.system.apply(state, action)
        return actions, state

    # --- Acciones abstractas ---
    def translate_abstract(self, state: ClusterState, action: ActionInstance, target: ClusterState) -> Optional[Found]:
        """Pasos del sistema que llevan de state al sucesor abstracto target."""
        if action.name == "ipa_establish_leader":
            group = tuple(int(p) for p in action.params)

            def allowed(s: ClusterState, a: ActionInstance) -> bool:
                if a.name == "fle_round":
                    return tuple(int(p) for p in a.params) == group
                return a.name in DISCOVERY_ACTIONS
        elif action.name == "ipa_join_leader":
            def allowed(s: ClusterState, a: ActionInstance) -> bool:
                if a.name == "fle_follow_leader":
                    return a.actor == action.actor
                return a.name in DISCOVERY_ACTIONS
        else:
            raise ContractError("Acción sin traducción abstracta", accion=str(action))
        want = state_view(target)
        return self.search(state, allowed, lambda s: state_view(s) == want)

    # --- Estados iniciales ---
    def realize(self, seed: Seed, establish: ActionInstance, target: ClusterState) -> Optional[Found]:
        """Prefijo del sistema (desde su estado inicial) que termina en el estado inicial target."""
        plans = plan_epochs(seed, self.q)
        if plans is None:
            logger.warning(f"Semilla {seed.family}{seed.choice} sin plan de épocas")
            return None
        state = self.system.init_states()[0]
        prefix: List[ActionInstance] = []
        for plan in plans:
            for stage in (self._establish, self._propose, self._close):
                found = stage(state, plan)
                if found is None:
                    logger.warning(f"Semilla {seed.family}{seed.choice}: falla {stage.__name__} de la época {plan.epoch}")
                    return None
                prefix += found[0]
                state = found[1]
        if state.servers != seed.cluster.servers or state.in_flight():
            logger.warning(f"Semilla {seed.family}{seed.choice}: el prefijo no deja el clúster sembrado")
            return None
        found = self.translate_abstract(state, establish, target)
        if found is None:
            logger.warning(f"Semilla {seed.family}{seed.choice}: {establish} sin contraparte en el sistema")
            return None
        return prefix + found[0], found[1]

    def check(self) -> RealizationReport:
        """Realiza cada estado inicial distinto del modelo de prueba."""
        seen = set()
        realized, longest = 0, 0
        missing: List[str] = []
        for seed, establish, state in self.test.origins():
            if state in seen:
                continue
            seen.add(state)
            found = self.realize(seed, establish, state)
            if found is None:
                missing.append(f"{seed.family}{seed.choice} {establish}")
                continue
            realized += 1
            longest = max(longest, len(found[0]))
        report = RealizationReport(init_states=len(seen), realized=realized, missing=missing, longest_prefix=longest)
        logger.info(report.summary())
        return report

    # --- Trazas ---
    def _origin(self, state: ClusterState) -> Optional[Tuple[Seed, ActionInstance]]:
        for seed, establish, candidate in self.test.origins():
            if candidate == state:
                return seed, establish
        return None

    def translate_trace(self, trace: Trace) -> Trace:
        """Traza del sistema: prefijo que realiza el estado inicial más los pasos de la traza de prueba."""
        if trace.model is not ModelName.TEST:
            raise ContractError("Sólo se traducen trazas del modelo de prueba", modelo=trace.model.value)
        states = replay_trace(self.test, trace)
        origin = self._origin(states[0])
        if origin is None:
            raise ContractError("El estado inicial de la traza no sale de ninguna semilla")
        found = self.realize(origin[0], origin[1], states[0])
        if found is None:
            raise ContractError("Estado inicial de la traza no alcanzable en el modelo de sistema",
                                semilla=f"{origin[0].family}{origin[0].choice}")
        actions, current = found
        for step, after in zip(trace.steps, states[1:]):
            if step.action.name.startswith("ipa_"):
                found = self.translate_abstract(current, step.action, after)
                if found is None:
                    raise ContractError("Acción abstracta sin contraparte en el sistema", paso=step.index,
                                        accion=str(step.action))
                actions += found[0]
                current = found[1]
                continue
            if step.action not in self.system.enabled(current):
                raise ContractError("Acción no habilitada en el modelo de sistema", paso=step.index,
                                    accion=str(step.action))
            current = self.system.apply(current, step.action)
            if state_view(current) != state_view(after):
                raise ContractError("El modelo de sistema diverge de la traza de prueba", paso=step.index)
        initial = self.system.init_states()[0]
        _, steps = replay_actions(self.system, initial, actions)
        logger.info(f"Traza de prueba de {len(trace)} pasos traducida a {len(steps)} pasos del sistema")
        return Trace(model=ModelName.SYSTEM, config_digest=config_digest(self.system_cfg, ModelName.SYSTEM),
                     initial_digest=digest_hex(initial), steps=steps)
