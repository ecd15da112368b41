"""
Modelo de sistema: refinamiento de la implementación.

- Elección FLE atómica en lugar del oráculo.
- DISCOVERY simplificado: el seguidor sólo informa (acceptedEpoch, lastZxid).
- SYNC optimizado con DIFF/TRUNC/SNAP y NEWLEADER como mensaje de señalización.
- BROADCAST heredado sin cambios del modelo de protocolo.
- Fallos refinados: caída/reingreso y partición/reconexión.
"""
import dataclasses
import logging
from itertools import combinations
from typing import List, Optional

from app.core.error_handlers import ContractError
from app.models.base import ActionInstance
from app.models.common import BASE_STATE_INVARIANTS, ZabModelBase
from app.models.state import ClusterState, Message, ServerState, Transition, clamp_committed, with_pair
from app.models.sync import SyncDecision, apply_sync, decide_sync_mode
from app.models.zab import History, Zxid
from app.schemas.enums import InvariantId, MessageKind, ModelName, MutationId, Phase, Role, SyncMode

logger = logging.getLogger(__name__)


class SystemModel(ZabModelBase):
    kind = ModelName.SYSTEM
    state_invariants = BASE_STATE_INVARIANTS + (InvariantId.LEADER_LOG_COMPLETENESS,)
    step_properties = (
        InvariantId.EPOCH_MONOTONICITY,
        InvariantId.MONOTONIC_READ,
        InvariantId.ELECTED_LEADER_UP_TO_DATE,
    )
    newleader_carries_history = False

    def __init__(self, cfg):
        super().__init__(cfg)
        self.boundary: Optional[Zxid] = Zxid(*cfg.snapshot_boundary) if cfg.snapshot_boundary else None

    # ==========================================
    # HABILITACIÓN
    # ==========================================

    def _enabled_local(self, state: ClusterState) -> List[ActionInstance]:
        return self._enabled_election(state) + self._enabled_sync(state)

    def eligible_quorums(self, state: ClusterState) -> List[tuple]:
        """Subconjuntos de servidores LOOKING, activos y mutuamente conectados que forman quórum."""
        looking = [s.id for s in state.servers if s.role is Role.LOOKING and not s.crashed]
        groups = []
        for size in range(self.qs.min_size(), len(looking) + 1):
            for group in combinations(looking, size):
                if not self.quorum(group):
                    continue
                if any(state.is_partitioned(a, b) for a, b in combinations(group, 2)):
                    continue
                groups.append(group)
        return groups

    def _joinable_leader(self, state: ClusterState, s: ServerState) -> Optional[ServerState]:
        if s.role is not Role.LOOKING or s.crashed or state.oracle is None or state.oracle == s.id:
            return None
        leader = state.server(state.oracle)
        if leader.role is not Role.LEADING or leader.crashed or state.is_partitioned(s.id, leader.id):
            return None
        return leader

    def _enabled_election(self, state: ClusterState) -> List[ActionInstance]:
        actions = [ActionInstance("fle_round", None, group) for group in self.eligible_quorums(state)]
        for s in state.servers:
            if self._joinable_leader(state, s) is not None:
                actions.append(ActionInstance("fle_follow_leader", s.id))
        for s in state.servers:
            if (s.role is Role.FOLLOWING and s.phase is Phase.DISCOVERY and not s.info_sent
                    and not s.crashed and not state.is_partitioned(s.id, s.leader)):
                actions.append(ActionInstance("follower_send_followerinfo", s.id))
        return actions

    def _enabled_sync(self, state: ClusterState) -> List[ActionInstance]:
        actions = []
        for s in state.servers:
            if s.role is Role.LEADING and not s.crashed and s.phase in (Phase.SYNC, Phase.BROADCAST):
                actions += [ActionInstance("leader_decide_sync_mode", s.id, (f,)) for f in sorted(s.sync_pending)]
        return actions

    def _leader_handler_name(self, leader: ServerState, msg: Message) -> Optional[str]:
        if msg.kind is MessageKind.CEPOCH:
            return None
        return super()._leader_handler_name(leader, msg)

    def _enabled_failures(self, state: ClusterState) -> List[ActionInstance]:
        actions = []
        if state.crashes_left > 0:
            actions += [ActionInstance("crash", s.id) for s in state.servers if not s.crashed]
        if state.partitions_left > 0:
            for a, b in combinations(range(1, state.n + 1), 2):
                if not state.is_partitioned(a, b):
                    actions.append(ActionInstance("partition", None, (a, b)))
        return actions

    def _enabled_recoveries(self, state: ClusterState) -> List[ActionInstance]:
        actions = [ActionInstance("rejoin", s.id) for s in state.servers if s.crashed]
        actions += [ActionInstance("reconnect", None, pair) for pair in state.partitions]
        return actions

    # ==========================================
    # ELECCIÓN
    # ==========================================

    def _do_fle_round(self, tx: Transition, action: ActionInstance) -> None:
        group = [int(p) for p in action.params]
        winner = max(group, key=lambda i: tx.srv(i).vote_key())
        for sid in group:
            s = tx.srv(sid)
            if sid == winner:
                me = frozenset({sid})
                tx.put(dataclasses.replace(
                    s, role=Role.LEADING, phase=Phase.DISCOVERY, leader=sid,
                    cepoch_recv=me, acke_recv=me, ackld_recv=me, epoch_max=s.accepted_epoch,
                ))
            else:
                tx.put(dataclasses.replace(s, role=Role.FOLLOWING, phase=Phase.DISCOVERY, leader=winner))
        tx.oracle = winner
        tx.oracle_suspected = False
        logger.debug(f"FLE: {winner} gana entre {group}")
        self._advance_leader(tx, winner)

    def _do_fle_follow_leader(self, tx: Transition, action: ActionInstance) -> None:
        tx.update(action.actor, role=Role.FOLLOWING, phase=Phase.DISCOVERY, leader=tx.oracle)

    # ==========================================
    # DISCOVERY
    # ==========================================

    def _do_follower_send_followerinfo(self, tx: Transition, action: ActionInstance) -> None:
        f = action.actor
        s = tx.update(f, info_sent=True)
        tx.send(f, s.leader, Message(MessageKind.FOLLOWERINFO, epoch=s.accepted_epoch, zxid=s.last_zxid()))

    def _do_leader_validate_follower(self, tx: Transition, action: ActionInstance) -> None:
        leader, src = action.actor, int(action.params[0])
        msg = tx.pop(src, leader)
        s = tx.srv(leader)
        if msg.zxid.epoch > s.current_epoch:
            logger.debug(f"Líder {leader} abandona: {src} reporta {msg.zxid}")
            self._step_down(tx, leader)
            return
        changes = dict(cepoch_recv=s.cepoch_recv | {src}, learners=with_pair(s.learners, src, msg.zxid))
        if s.new_epoch == 0:
            changes["epoch_max"] = max(s.epoch_max, msg.epoch)
        s = tx.update(leader, **changes)
        if s.new_epoch > 0:
            tx.send(leader, src, Message(MessageKind.NEWEPOCH, epoch=s.new_epoch))
        self._advance_leader(tx, leader)

    def _ackepoch_message(self, s: ServerState) -> Message:
        return Message(MessageKind.ACKEPOCH, epoch=s.current_epoch, zxid=s.last_zxid())

    def _do_leader_handle_ackepoch(self, tx: Transition, action: ActionInstance) -> None:
        leader, src = action.actor, int(action.params[0])
        msg = tx.pop(src, leader)
        s = tx.srv(leader)
        s = tx.update(leader, acke_recv=s.acke_recv | {src}, learners=with_pair(s.learners, src, msg.zxid))
        if s.phase is Phase.DISCOVERY:
            self._advance_leader(tx, leader)
        else:
            tx.update(leader, sync_pending=s.sync_pending | {src})

    def _enter_sync(self, tx: Transition, leader: int) -> None:
        s = tx.srv(leader)
        tx.update(
            leader,
            phase=Phase.SYNC,
            current_epoch=s.new_epoch,
            adopted_last=s.last_zxid(),
            sync_pending=s.sync_pending | (s.acke_recv - {leader}),
        )

    # ==========================================
    # SYNC
    # ==========================================

    def sync_base(self, s: ServerState) -> tuple:
        """(historial base, punto de commit) con que el líder sincroniza a un seguidor."""
        if s.phase is Phase.BROADCAST:
            if self.has(MutationId.DIFF_FROM_UNCOMMITTED):
                return s.history, s.last_zxid()
            return s.history.prefix_upto(s.last_committed), s.last_committed
        return s.history, s.last_committed

    def _do_leader_decide_sync_mode(self, tx: Transition, action: ActionInstance) -> None:
        leader, f = action.actor, int(action.params[0])
        s = tx.srv(leader)
        base, commit = self.sync_base(s)
        decision = decide_sync_mode(base, s.learner_zxid(f), self.boundary,
                                    skip_trunc=self.has(MutationId.SYNC_SKIP_TRUNC))
        tx.send(leader, f, Message(MessageKind(decision.mode.value), zxid=decision.trunc_to,
                                   history=History(decision.payload), commit=commit))
        broadcast = s.phase is Phase.BROADCAST
        if broadcast and not self.has(MutationId.DIFF_FROM_UNCOMMITTED):
            for txn in s.history.suffix_after(base.last_zxid()):
                tx.send(leader, f, Message(MessageKind.PROPOSE, txn=txn))
        tx.send(leader, f, Message(MessageKind.NEWLEADER, epoch=s.new_epoch))
        changes = dict(sync_pending=s.sync_pending - {f})
        if not (broadcast and self.has(MutationId.RECOVER_RACE_RAW)):
            changes["syncing"] = with_pair(s.syncing, f, s.last_zxid())
        tx.update(leader, **changes)

    def _do_follower_apply_sync(self, tx: Transition, action: ActionInstance) -> None:
        f, src = action.actor, int(action.params[0])
        msg = tx.pop(src, f)
        s = tx.srv(f)
        decision = SyncDecision(SyncMode(msg.kind.value), msg.history.entries, msg.zxid)
        try:
            history = apply_sync(s.history, decision)
        except ContractError:
            logger.debug(f"Seguidor {f} no puede aplicar {decision}; vuelve a LOOKING")
            self._disconnect(tx, src, f)
            return
        lc = clamp_committed(history, s.last_committed)
        if history.contains(msg.commit):
            lc = max(lc, msg.commit)
        tx.put(dataclasses.replace(s, history=history, last_committed=lc, phase=Phase.SYNC))

    # ==========================================
    # FALLOS
    # ==========================================

    def _do_crash(self, tx: Transition, action: ActionInstance) -> None:
        tx.crashes_left -= 1
        self._drop_server(tx, action.actor)
        tx.update(action.actor, crashed=True)

    def _do_rejoin(self, tx: Transition, action: ActionInstance) -> None:
        tx.update(action.actor, crashed=False)

    def _do_partition(self, tx: Transition, action: ActionInstance) -> None:
        a, b = (int(p) for p in action.params)
        tx.partitions_left -= 1
        tx.partitions.add((a, b))
        tx.clear_pair(a, b)
        sa, sb = tx.srv(a), tx.srv(b)
        if sa.role is Role.FOLLOWING and sa.leader == b:
            self._disconnect(tx, b, a)
        elif sb.role is Role.FOLLOWING and sb.leader == a:
            self._disconnect(tx, a, b)

    def _do_reconnect(self, tx: Transition, action: ActionInstance) -> None:
        tx.partitions.discard(tuple(int(p) for p in action.params))
