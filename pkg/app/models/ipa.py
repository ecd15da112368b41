"""
Modelo de prueba: el modelo de sistema con ELECTION y DISCOVERY abstraídos en una sola acción
(ipa_establish_leader), para concentrar la exploración en el módulo SYNC.

Los estados iniciales enumeran historiales de hasta dos épocas que difieren entre servidores,
y cada uno arranca con un líder recién establecido a la entrada de SYNC.
"""
import dataclasses
import logging
from itertools import combinations_with_replacement
from typing import Iterator, List, NamedTuple, Optional, Tuple

from app.core.error_handlers import InternalConsistencyError
from app.models.base import ActionInstance
from app.models.state import ClusterState, ServerState, Transition, with_pair
from app.models.system import SystemModel
from app.models.zab import ZERO, History, Txn, Zxid
from app.schemas.enums import ModelName, Phase, Role

logger = logging.getLogger(__name__)

Family = Tuple[List[History], Tuple[Txn, ...], int]


def history_families(max_len: int) -> Iterator[Tuple[int, int, int]]:
    """
    Familias (a, p, b): E1 = (1,1..a); E2 = (2,1..b) construida sobre E1[:p].
    Sin segunda época sólo importa p == a.
    """
    for a in range(max_len + 1):
        yield a, a, 0
        for p in range(a + 1):
            for b in range(1, max_len - p + 1):
                yield a, p, b


def family_histories(a: int, p: int, b: int) -> Family:
    """Historiales candidatos de un servidor, la línea principal y el índice de la primera rama de E2."""
    e1 = tuple(Txn(Zxid(1, c), c) for c in range(1, a + 1))
    e2 = tuple(Txn(Zxid(2, c), a + c) for c in range(1, b + 1))
    candidates = [History(e1[:i]) for i in range(a + 1)]
    candidates += [History(e1[:p] + e2[:j]) for j in range(1, b + 1)]
    main_line = e1[:p] + e2 if b > 0 else e1
    return candidates, main_line, a + 1


def top_epoch(a: int, p: int, b: int) -> int:
    """Última época establecida antes de la elección abstracta."""
    if b > 0:
        return 2
    return 1 if a > 0 else 0


def base_index(a: int, p: int, b: int) -> int:
    """Índice del historial con que arrancó la última época (sin propuestas de ella)."""
    return p if b > 0 else 0


def epoch_one_leader(family: Tuple[int, int, int], choice: Tuple[int, ...], q: int) -> Optional[int]:
    """
    Líder de la época 1 cuando E1 tiene entradas fuera de la línea principal.

    Propuso todo E1, así que termina con E1 completa (desactualizado) o truncado al sumarse
    tarde a la época 2. Ganó su elección entre servidores recién iniciados, por lo que necesita
    q-1 ids menores, y no puede ser el líder de la época 2 (el id más alto).
    """
    a, p, b = family
    n = len(choice)
    e2_start = a + 1
    stale = [sid for sid, c in enumerate(choice, start=1) if p < c < e2_start]
    for sid in stale:
        if choice[sid - 1] == a and q <= sid < n:
            return sid
    if len(stale) + 1 > n - q:
        return None
    for sid, c in enumerate(choice, start=1):
        if (c == p or c >= e2_start) and q <= sid < n:
            return sid
    return None


class Seed(NamedTuple):
    """Clúster sembrado junto con la familia y la elección de historiales que lo generan."""
    family: Tuple[int, int, int]
    choice: Tuple[int, ...]
    cluster: ClusterState


class IpaTestModel(SystemModel):
    kind = ModelName.TEST

    # ==========================================
    # ESTADOS INICIALES
    # ==========================================

    def _seed_server(self, sid: int, history: History, main_line: Tuple[Txn, ...], committed: int,
                     epoch: int) -> ServerState:
        held = 0
        while held < len(main_line) and held < len(history) and history.entries[held] == main_line[held]:
            held += 1
        known = min(held, committed)
        return ServerState(
            id=sid,
            accepted_epoch=epoch,
            current_epoch=epoch,
            history=history,
            last_committed=main_line[known - 1].zxid if known else ZERO,
        )

    def _admissible(self, family: Tuple[int, int, int], choice: Tuple[int, ...]) -> bool:
        a, p, b = family
        if b == 0:
            return True
        n = self.cfg.n_servers
        q = self.qs.min_size()
        e2_start = a + 1
        # Quien tenga entradas de E1 posteriores a p quedó fuera del quórum de la época 2
        stale = sum(1 for c in choice if p < c < e2_start)
        on_e2 = sum(1 for c in choice if c >= e2_start)
        if stale > n - q or on_e2 == 0:
            return False
        # Un quórum recibió NEWLEADER de la época 2: la rama de E2 más quienes quedaron en su base
        if sum(1 for c in choice if c == p or c >= e2_start) < q:
            return False
        return a == p or epoch_one_leader(family, choice, q) is not None

    def seeds(self) -> Iterator[Seed]:
        """Clústeres LOOKING con historiales divergentes compatibles con una ejecución real de Zab."""
        n = self.cfg.n_servers
        q = self.qs.min_size()
        base = self.initial_cluster()
        for family in history_families(self.cfg.ipa_max_history):
            a, p, b = family
            candidates, main_line, e2_start = family_histories(a, p, b)
            top, start = top_epoch(a, p, b), base_index(a, p, b)
            for choice in combinations_with_replacement(range(len(candidates)), n):
                if not self._admissible(family, choice):
                    continue
                histories = [candidates[c] for c in choice]
                committed = 0
                for k in range(1, len(main_line) + 1):
                    holders = sum(1 for h in histories if len(h) >= k and h.entries[k - 1] == main_line[k - 1])
                    if holders < q:
                        break
                    committed = k
                # Quien quedó en la base de la última época recibió su NEWLEADER sin propuestas
                servers = tuple(
                    self._seed_server(sid, candidates[c], main_line, committed,
                                      top if top and c == start else candidates[c].last_zxid().epoch)
                    for sid, c in enumerate(choice, start=1)
                )
                proposed = {t for h in histories for t in h.entries}
                if b > 0:
                    proposed |= set(candidates[a].entries)
                cluster = dataclasses.replace(
                    base, servers=servers,
                    proposed=tuple(sorted(proposed, key=lambda t: (t.zxid, t.value))),
                )
                yield Seed(family, choice, cluster)

    def origins(self) -> Iterator[Tuple[Seed, ActionInstance, ClusterState]]:
        """(semilla, ipa_establish_leader, estado inicial) para cada estado inicial, con repetidos."""
        for seed in self.seeds():
            for action in self._establish_actions(seed.cluster):
                yield seed, action, self.apply(seed.cluster, action)

    def init_states(self) -> List[ClusterState]:
        """
        Un estado por (clúster sembrado, quórum elegible). Sin mutaciones ninguno puede violar
        una invariante: si ocurre, la siembra es inconsistente y la corrida se aborta. Con
        mutaciones se conservan y el explorador los reporta a profundidad 0.
        """
        seen = set()
        states: List[ClusterState] = []
        for _, action, state in self.origins():
            if state in seen:
                continue
            seen.add(state)
            bad = self.violated_invariants(state)
            if bad and not self.mutations:
                raise InternalConsistencyError(
                    "Estado inicial del modelo de prueba que viola invariantes",
                    invariantes=[b.value for b in bad], accion=str(action),
                )
            states.append(state)
        logger.info(f"Modelo de prueba: {len(states)} estados iniciales")
        return states

    # ==========================================
    # ACCIONES ABSTRACTAS
    # ==========================================

    def _establish_actions(self, state: ClusterState) -> List[ActionInstance]:
        actions = []
        for group in self.eligible_quorums(state):
            leader = max(group, key=lambda i: state.server(i).vote_key())
            actions.append(ActionInstance("ipa_establish_leader", leader, group))
        return actions

    def _enabled_election(self, state: ClusterState) -> List[ActionInstance]:
        actions = self._establish_actions(state)
        for s in state.servers:
            leader = self._joinable_leader(state, s)
            if leader is not None and leader.phase in (Phase.SYNC, Phase.BROADCAST) \
                    and leader.new_epoch > s.accepted_epoch:
                actions.append(ActionInstance("ipa_join_leader", s.id))
        return actions

    def _do_ipa_establish_leader(self, tx: Transition, action: ActionInstance) -> None:
        """Elección y descubrimiento en un paso: el líder queda a la entrada de SYNC con sus seguidores registrados."""
        leader = action.actor
        group = frozenset(int(p) for p in action.params)
        e = max(tx.srv(i).accepted_epoch for i in group) + 1
        learners: tuple = ()
        for sid in sorted(group - {leader}):
            s = tx.update(sid, role=Role.FOLLOWING, phase=Phase.DISCOVERY, leader=leader,
                          accepted_epoch=e, info_sent=True)
            learners = with_pair(learners, sid, s.last_zxid())
        s = tx.srv(leader)
        tx.put(dataclasses.replace(
            s, role=Role.LEADING, phase=Phase.SYNC, leader=leader,
            accepted_epoch=e, current_epoch=e, new_epoch=e, epoch_max=e - 1,
            cepoch_recv=group, acke_recv=group, ackld_recv=frozenset({leader}),
            learners=learners, sync_pending=group - {leader}, adopted_last=s.last_zxid(),
        ))
        tx.oracle = leader
        tx.oracle_suspected = False
        self._advance_leader(tx, leader)

    def _do_ipa_join_leader(self, tx: Transition, action: ActionInstance) -> None:
        sid = action.actor
        leader = tx.oracle
        ls = tx.srv(leader)
        s = tx.update(sid, role=Role.FOLLOWING, phase=Phase.DISCOVERY, leader=leader,
                      accepted_epoch=ls.new_epoch, info_sent=True)
        tx.update(
            leader,
            cepoch_recv=ls.cepoch_recv | {sid},
            acke_recv=ls.acke_recv | {sid},
            learners=with_pair(ls.learners, sid, s.last_zxid()),
            sync_pending=ls.sync_pending | {sid},
        )
