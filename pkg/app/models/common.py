"""
Mecánica compartida por los modelos de Zab.

Contiene el despacho de entregas, la contabilidad de quórum del líder, la caída de
conexiones y el módulo BROADCAST, que los modelos de sistema y prueba heredan sin cambios.
Cada acción `x` se implementa en un método `_do_x(tx, action)` que muta un `Transition`.
"""
import dataclasses
import logging
from typing import Any, Dict, Iterable, List, Optional, Tuple

from app.core.error_handlers import ContractError
from app.models.base import ActionInstance, ModelInterface
from app.models.invariants import DESCRIPTIONS, check_state, check_step
from app.models.state import ClusterState, Message, ServerState, Transition, clamp_committed, fresh_cluster
from app.models.zab import QuorumSystem, Txn, Zxid, follows_immediately, next_zxid
from app.schemas.enums import InvariantId, MessageKind, ModelName, MutationId, Phase, QuorumRule, Role
from app.schemas.explore import ExploreConfig

logger = logging.getLogger(__name__)

LEADER_HANDLERS: Dict[MessageKind, str] = {
    MessageKind.CEPOCH: "leader_handle_cepoch",
    MessageKind.FOLLOWERINFO: "leader_validate_follower",
    MessageKind.ACKEPOCH: "leader_handle_ackepoch",
    MessageKind.ACKLD: "leader_handle_ackld",
    MessageKind.ACK: "leader_handle_ack",
}

FOLLOWER_HANDLERS: Dict[MessageKind, str] = {
    MessageKind.NEWEPOCH: "follower_handle_newepoch",
    MessageKind.NEWLEADER: "follower_handle_newleader",
    MessageKind.COMMITLD: "follower_handle_commitld",
    MessageKind.PROPOSE: "follower_handle_propose",
    MessageKind.COMMIT: "follower_handle_commit",
    MessageKind.DIFF: "follower_apply_sync",
    MessageKind.TRUNC: "follower_apply_sync",
    MessageKind.SNAP: "follower_apply_sync",
}

BASE_STATE_INVARIANTS = (
    InvariantId.INTEGRITY,
    InvariantId.TOTAL_ORDER,
    InvariantId.LOCAL_PRIMARY_ORDER,
    InvariantId.GLOBAL_PRIMARY_ORDER,
    InvariantId.PRIMARY_INTEGRITY,
    InvariantId.SINGLE_ESTABLISHED_LEADER,
    InvariantId.COMMITTED_WITHIN_HISTORY,
)


class ZabModelBase(ModelInterface[ClusterState]):
    """Base de los modelos de Zab. Sin estado propio más allá de la configuración."""
    kind: ModelName
    state_invariants: Tuple[InvariantId, ...] = BASE_STATE_INVARIANTS
    step_properties: Tuple[InvariantId, ...] = (InvariantId.EPOCH_MONOTONICITY,)
    # En el modelo de protocolo NEWLEADER lleva el historial; en el de sistema sólo señaliza.
    newleader_carries_history: bool = True

    def __init__(self, cfg: ExploreConfig):
        self.cfg = cfg
        self.mutations = frozenset(cfg.mutations)
        rule = QuorumRule.WEAK_HALF if MutationId.WEAK_QUORUM in self.mutations else cfg.quorum_rule
        self.qs = QuorumSystem(cfg.n_servers, rule)
        self.name = self.kind.value

    def has(self, m: MutationId) -> bool:
        return m in self.mutations

    def quorum(self, members: Iterable[int]) -> bool:
        return self.qs.is_quorum(members)

    # ==========================================
    # CONTRATO DEL KERNEL
    # ==========================================

    def initial_cluster(self) -> ClusterState:
        cfg = self.cfg
        return fresh_cluster(
            cfg.n_servers,
            txn_left=cfg.max_transactions,
            timeouts_left=cfg.max_timeouts,
            restarts_left=cfg.max_restarts,
            crashes_left=cfg.max_crashes,
            partitions_left=cfg.max_partitions,
        )

    def init_states(self) -> List[ClusterState]:
        return [self.initial_cluster()]

    def enabled(self, state: ClusterState) -> List[ActionInstance]:
        actions = self._enabled_local(state)
        actions += self._enabled_propose(state)
        actions += self._enabled_deliveries(state)
        if not self.cfg.failures_require_leader or state.oracle is not None:
            actions += self._enabled_failures(state)
        actions += self._enabled_recoveries(state)
        return actions

    def apply(self, state: ClusterState, action: ActionInstance) -> ClusterState:
        handler = getattr(self, f"_do_{action.name}", None)
        if handler is None:
            raise ContractError("Acción desconocida para el modelo", modelo=self.name, accion=action.name)
        tx = Transition(state)
        handler(tx, action)
        self._normalize(tx)
        return tx.freeze()

    def _normalize(self, tx: Transition) -> None:
        """Limpia campos que ya no influyen en ninguna transición."""

    def violated_invariants(self, state: ClusterState) -> List[InvariantId]:
        return check_state(state, self.qs, list(self.state_invariants))

    def step_violations(self, state: ClusterState, action: ActionInstance, successor: ClusterState) -> List[InvariantId]:
        return check_step(state, action, successor, list(self.step_properties))

    def invariant_catalog(self) -> Dict[InvariantId, str]:
        return {i: DESCRIPTIONS[i] for i in self.state_invariants + self.step_properties}

    def describe_state(self, state: ClusterState) -> Dict[str, Any]:
        servers = {}
        for s in state.servers:
            servers[s.id] = {
                "role": s.role.value,
                "phase": s.phase.value,
                "acceptedEpoch": s.accepted_epoch,
                "currentEpoch": s.current_epoch,
                "history": str(s.history),
                "lastCommitted": str(s.last_committed),
                "crashed": s.crashed,
            }
        channels = {f"{a}->{b}": [str(m) for m in msgs] for (a, b), msgs in state.channels}
        return {"servers": servers, "channels": channels, "oracle": state.oracle,
                "partitions": [list(p) for p in state.partitions]}

    # ==========================================
    # HABILITACIÓN
    # ==========================================

    def _enabled_local(self, state: ClusterState) -> List[ActionInstance]:
        """Acciones propias del nivel (elección, descubrimiento, sincronización)."""
        return []

    def _enabled_failures(self, state: ClusterState) -> List[ActionInstance]:
        return []

    def _enabled_recoveries(self, state: ClusterState) -> List[ActionInstance]:
        return []

    def _enabled_propose(self, state: ClusterState) -> List[ActionInstance]:
        if state.txn_left <= 0:
            return []
        return [
            ActionInstance("leader_propose", s.id)
            for s in state.servers
            if s.role is Role.LEADING and s.phase is Phase.BROADCAST and not s.crashed
        ]

    def _enabled_deliveries(self, state: ClusterState) -> List[ActionInstance]:
        actions = []
        for (src, dst), msgs in state.channels:
            if not msgs or state.is_partitioned(src, dst):
                continue
            action = self._delivery_action(state, src, dst, msgs[0])
            if action is not None:
                actions.append(action)
        return actions

    def _delivery_action(self, state: ClusterState, src: int, dst: int, msg: Message) -> Optional[ActionInstance]:
        r = state.server(dst)
        if r.crashed:
            return None
        name = None
        if r.role is Role.LEADING and msg.kind in LEADER_HANDLERS:
            name = self._leader_handler_name(r, msg)
        elif r.role is Role.FOLLOWING and r.leader == src and msg.kind in FOLLOWER_HANDLERS:
            name = FOLLOWER_HANDLERS[msg.kind]
        if name is None:
            return None
        return ActionInstance(name, dst, (src,))

    def _leader_handler_name(self, leader: ServerState, msg: Message) -> Optional[str]:
        return LEADER_HANDLERS[msg.kind]

    # ==========================================
    # CONEXIONES
    # ==========================================

    def _disconnect(self, tx: Transition, leader: int, follower: int) -> None:
        """Rompe el vínculo líder/seguidor como lo haría un Timeout."""
        tx.clear_pair(leader, follower)
        f = tx.srv(follower)
        if f.role is Role.FOLLOWING and f.leader == leader:
            tx.put(f.reset_volatile())
        ls = tx.srv(leader)
        if ls.role is not Role.LEADING:
            return
        ls = ls.prune(follower)
        tx.put(ls)
        if not self.quorum(self._support(tx, ls)):
            logger.debug(f"Líder {leader} sin quórum tras perder a {follower}")
            self._step_down(tx, leader)
        elif tx.oracle == leader:
            tx.oracle_suspected = True

    @staticmethod
    def _support(tx: Transition, leader: ServerState) -> frozenset:
        """Conjunto de apoyo del líder: conectados más seguidores que aún no completaron el handshake."""
        return leader.cepoch_recv | frozenset(tx.followers_of(leader.id)) | {leader.id}

    def _step_down(self, tx: Transition, leader: int) -> None:
        """El líder vuelve a LOOKING; sus seguidores y canales caen con él."""
        followers = tx.followers_of(leader)
        tx.clear_touching(leader)
        tx.put(tx.srv(leader).reset_volatile())
        for f in followers:
            tx.put(tx.srv(f).reset_volatile())
        if tx.oracle == leader:
            tx.oracle = None
            tx.oracle_suspected = False

    def _drop_server(self, tx: Transition, sid: int) -> None:
        """Pérdida de todo el estado volátil de sid (reinicio o caída)."""
        s = tx.srv(sid)
        if s.role is Role.LEADING:
            self._step_down(tx, sid)
        elif s.role is Role.FOLLOWING and s.leader is not None:
            self._disconnect(tx, s.leader, sid)
        tx.clear_touching(sid)
        tx.put(tx.srv(sid).reset_volatile())

    # ==========================================
    # CONTABILIDAD DEL LÍDER
    # ==========================================

    def _synced_targets(self, s: ServerState) -> List[int]:
        """Seguidores que reciben PROPOSE/COMMIT: los sincronizados y los que están sincronizando."""
        return sorted((s.ackld_recv - {s.id}) | s.syncing_ids())

    def _advance_leader(self, tx: Transition, leader: int) -> None:
        """Aplica en cascada los umbrales de quórum alcanzados por el líder."""
        s = tx.srv(leader)
        if s.role is not Role.LEADING:
            return
        if s.phase is Phase.DISCOVERY and s.new_epoch == 0 and self.quorum(s.cepoch_recv):
            e = s.epoch_max + 1
            s = tx.update(leader, new_epoch=e, accepted_epoch=e)
            tx.send_all(leader, s.cepoch_recv - {leader}, Message(MessageKind.NEWEPOCH, epoch=e))
        if s.phase is Phase.DISCOVERY and s.new_epoch > 0 and self.quorum(s.acke_recv):
            self._enter_sync(tx, leader)
            s = tx.srv(leader)
        if s.phase is Phase.SYNC and self.quorum(s.ackld_recv):
            s = tx.update(leader, phase=Phase.BROADCAST, last_committed=s.last_zxid())
            tx.send_all(leader, s.ackld_recv - {leader}, Message(MessageKind.COMMITLD, zxid=s.last_committed))
            logger.debug(f"Líder {leader} establecido en época {s.current_epoch}")

    def _enter_sync(self, tx: Transition, leader: int) -> None:
        raise NotImplementedError

    def _check_commit(self, tx: Transition, leader: int, z: Zxid) -> None:
        """Confirma z si su conjunto de ACKs acaba de formar quórum."""
        s = tx.srv(leader)
        acks = s.pending_acks(z)
        if acks is None or not self.quorum(acks):
            return
        s = tx.update(
            leader,
            last_committed=max(s.last_committed, z),
            ack_recv=tuple(item for item in s.ack_recv if item[0] != z),
        )
        tx.send_all(leader, self._synced_targets(s), Message(MessageKind.COMMIT, zxid=z))

    # ==========================================
    # SYNC COMPARTIDO
    # ==========================================

    def _do_follower_handle_newepoch(self, tx: Transition, action: ActionInstance) -> None:
        f, src = action.actor, int(action.params[0])
        msg = tx.pop(src, f)
        s = tx.srv(f)
        if msg.epoch <= s.accepted_epoch:
            self._disconnect(tx, src, f)
            return
        s = tx.update(f, accepted_epoch=msg.epoch)
        tx.send(f, src, self._ackepoch_message(s))

    def _ackepoch_message(self, s: ServerState) -> Message:
        return Message(MessageKind.ACKEPOCH, epoch=s.current_epoch, zxid=s.last_zxid(), history=s.history)

    def _do_follower_handle_newleader(self, tx: Transition, action: ActionInstance) -> None:
        f, src = action.actor, int(action.params[0])
        msg = tx.pop(src, f)
        s = tx.srv(f)
        if msg.epoch != s.accepted_epoch:
            self._disconnect(tx, src, f)
            return
        if self.newleader_carries_history:
            s = dataclasses.replace(s, history=msg.history,
                                    last_committed=clamp_committed(msg.history, s.last_committed))
        tx.put(dataclasses.replace(s, current_epoch=msg.epoch, phase=Phase.SYNC))
        tx.send(f, src, Message(MessageKind.ACKLD, epoch=msg.epoch))

    def _do_leader_handle_ackld(self, tx: Transition, action: ActionInstance) -> None:
        leader, src = action.actor, int(action.params[0])
        tx.pop(src, leader)
        s = tx.srv(leader)
        snapshot = dict(s.syncing).get(src)
        s = tx.update(leader, ackld_recv=s.ackld_recv | {src},
                      syncing=tuple(item for item in s.syncing if item[0] != src))
        if s.phase is Phase.SYNC:
            self._advance_leader(tx, leader)
            return
        if s.phase is not Phase.BROADCAST:
            return
        tx.send(leader, src, Message(MessageKind.COMMITLD, zxid=s.last_committed))
        if snapshot is None:
            return
        # El seguidor recibió todo hasta snapshot con NEWLEADER: cuenta como su ACK
        s = tx.update(leader, ack_recv=tuple(
            (z, acks | {src}) if z <= snapshot else (z, acks) for z, acks in s.ack_recv
        ))
        for z, _ in s.ack_recv:
            self._check_commit(tx, leader, z)

    def _do_follower_handle_commitld(self, tx: Transition, action: ActionInstance) -> None:
        f, src = action.actor, int(action.params[0])
        msg = tx.pop(src, f)
        s = tx.srv(f)
        tx.put(dataclasses.replace(s, last_committed=max(s.last_committed, msg.zxid), phase=Phase.BROADCAST))

    # ==========================================
    # BROADCAST
    # ==========================================

    def _do_leader_propose(self, tx: Transition, action: ActionInstance) -> None:
        leader = action.actor
        s = tx.srv(leader)
        z = next_zxid(s.last_zxid(), s.current_epoch)
        txn = Txn(z, len(tx.proposed) + 1)
        tx.txn_left -= 1
        tx.record_proposal(txn)
        changes = dict(history=s.history.append(txn), ack_recv=s.ack_recv + ((z, frozenset({leader})),))
        if self.has(MutationId.COMMIT_BEFORE_QUORUM):
            changes["last_committed"] = z
        s = tx.update(leader, **changes)
        tx.send_all(leader, self._synced_targets(s), Message(MessageKind.PROPOSE, txn=txn))
        self._check_commit(tx, leader, z)

    def _do_follower_handle_propose(self, tx: Transition, action: ActionInstance) -> None:
        f, src = action.actor, int(action.params[0])
        msg = tx.pop(src, f)
        s = tx.srv(f)
        txn = msg.txn
        if s.phase not in (Phase.SYNC, Phase.BROADCAST) or not follows_immediately(s.last_zxid(), txn.zxid):
            self._disconnect(tx, src, f)
            return
        s = tx.update(f, history=s.history.append(txn))
        if s.current_epoch == s.accepted_epoch:
            tx.send(f, src, Message(MessageKind.ACK, zxid=txn.zxid))

    def _do_leader_handle_ack(self, tx: Transition, action: ActionInstance) -> None:
        leader, src = action.actor, int(action.params[0])
        msg = tx.pop(src, leader)
        s = tx.srv(leader)
        acks = s.pending_acks(msg.zxid)
        if acks is None:
            return
        tx.update(leader, ack_recv=tuple(
            (z, a | {src}) if z == msg.zxid else (z, a) for z, a in s.ack_recv
        ))
        self._check_commit(tx, leader, msg.zxid)

    def _do_follower_handle_commit(self, tx: Transition, action: ActionInstance) -> None:
        f, src = action.actor, int(action.params[0])
        msg = tx.pop(src, f)
        s = tx.srv(f)
        if not s.history.contains(msg.zxid):
            self._disconnect(tx, src, f)
            return
        tx.put(dataclasses.replace(s, last_committed=max(s.last_committed, msg.zxid)))
