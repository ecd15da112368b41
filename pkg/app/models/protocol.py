"""
Modelo de protocolo: Zab abstracto con oráculo de líder, handshake completo de épocas,
pipeline de BROADCAST y fallos Timeout/Restart.
"""
import dataclasses
import logging
from typing import List, Optional

from app.models.base import ActionInstance
from app.models.common import ZabModelBase
from app.models.state import ClusterState, Message, ServerState, Transition, clamp_committed, with_pair
from app.models.symmetry import symmetric_variants
from app.models.zab import EMPTY_HISTORY
from app.schemas.enums import MessageKind, ModelName, MutationId, Phase, Role

logger = logging.getLogger(__name__)


class ProtocolModel(ZabModelBase):
    kind = ModelName.PROTOCOL

    # --- Simetría ---
    def supports_symmetry(self) -> bool:
        # Con quórums que se intersecan y sin otras mutaciones, dos ACKEPOCH con igual
        # (currentEpoch, lastZxid) traen el mismo historial y el desempate por id sólo
        # cambia el id guardado en best_key. WEAK_QUORUM con n impar no cambia los quórums.
        if self.mutations - {MutationId.WEAK_QUORUM}:
            return False
        return 2 * self.qs.min_size() > self.cfg.n_servers

    def symmetric_variants(self, state: ClusterState) -> List[ClusterState]:
        servers = tuple(
            s if s.best_key is None else dataclasses.replace(s, best_key=(s.best_key[0], s.best_key[1], 0))
            for s in state.servers
        )
        return symmetric_variants(dataclasses.replace(state, servers=servers))

    def _normalize(self, tx: Transition) -> None:
        for s in tx.servers:
            if s.role is not Role.LEADING:
                continue
            changes = {}
            if s.new_epoch > 0 and s.epoch_max:
                changes["epoch_max"] = 0
            if s.phase in (Phase.SYNC, Phase.BROADCAST):
                if s.best_key is not None or s.best_history.entries:
                    changes.update(best_key=None, best_history=EMPTY_HISTORY)
                if s.acke_recv:
                    changes["acke_recv"] = frozenset()
            if changes:
                tx.put(dataclasses.replace(s, **changes))

    # --- Habilitación ---
    def _enabled_local(self, state: ClusterState) -> List[ActionInstance]:
        actions = []
        can_update = state.oracle is None or state.oracle_suspected
        for s in state.servers:
            if s.role is Role.LOOKING and can_update:
                actions.append(ActionInstance("oracle_update_leader", s.id))
        if state.oracle is not None:
            for s in state.servers:
                if s.role is Role.LOOKING and s.id != state.oracle:
                    actions.append(ActionInstance("oracle_follow_leader", s.id))
        return actions

    def _leader_handler_name(self, leader: ServerState, msg: Message) -> Optional[str]:
        if msg.kind is MessageKind.FOLLOWERINFO:
            return None
        if msg.kind is MessageKind.ACKEPOCH and leader.phase in (Phase.SYNC, Phase.BROADCAST):
            return "leader_handle_recovering_follower"
        return super()._leader_handler_name(leader, msg)

    def _enabled_failures(self, state: ClusterState) -> List[ActionInstance]:
        actions = []
        if state.timeouts_left > 0:
            for l in state.servers:
                if l.role is not Role.LEADING:
                    continue
                peers = set(l.cepoch_recv - {l.id})
                peers |= {s.id for s in state.servers if s.role is Role.FOLLOWING and s.leader == l.id}
                actions += [ActionInstance("timeout", l.id, (p,)) for p in sorted(peers)]
        if state.restarts_left > 0:
            actions += [ActionInstance("restart", s.id) for s in state.servers]
        return actions

    # --- Oráculo ---
    def _do_oracle_update_leader(self, tx: Transition, action: ActionInstance) -> None:
        sid = action.actor
        s = tx.srv(sid)
        me = frozenset({sid})
        tx.put(dataclasses.replace(
            s, role=Role.LEADING, phase=Phase.DISCOVERY, leader=sid,
            cepoch_recv=me, acke_recv=me, ackld_recv=me,
            epoch_max=s.accepted_epoch,
            best_key=(s.current_epoch, s.last_zxid(), sid), best_history=s.history,
        ))
        tx.oracle = sid
        tx.oracle_suspected = False
        self._advance_leader(tx, sid)

    def _do_oracle_follow_leader(self, tx: Transition, action: ActionInstance) -> None:
        sid = action.actor
        leader = tx.oracle
        s = tx.update(sid, role=Role.FOLLOWING, phase=Phase.DISCOVERY, leader=leader)
        tx.send(sid, leader, Message(MessageKind.CEPOCH, epoch=s.accepted_epoch))

    # --- DISCOVERY ---
    def _do_leader_handle_cepoch(self, tx: Transition, action: ActionInstance) -> None:
        leader, src = action.actor, int(action.params[0])
        msg = tx.pop(src, leader)
        s = tx.srv(leader)
        changes = dict(cepoch_recv=s.cepoch_recv | {src})
        if s.new_epoch == 0:
            changes["epoch_max"] = max(s.epoch_max, msg.epoch)
        s = tx.update(leader, **changes)
        if s.new_epoch > 0:
            tx.send(leader, src, Message(MessageKind.NEWEPOCH, epoch=s.new_epoch))
        self._advance_leader(tx, leader)

    def _do_leader_handle_ackepoch(self, tx: Transition, action: ActionInstance) -> None:
        leader, src = action.actor, int(action.params[0])
        msg = tx.pop(src, leader)
        s = tx.srv(leader)
        changes = dict(acke_recv=s.acke_recv | {src})
        key = (msg.epoch, msg.history.last_zxid(), src)
        best = s.best_key
        if best is None or key[:2] > best[:2] or (key[:2] == best[:2] and src < best[2]):
            changes.update(best_key=key, best_history=msg.history)
        tx.update(leader, **changes)
        self._advance_leader(tx, leader)

    def _enter_sync(self, tx: Transition, leader: int) -> None:
        """Quórum de ACKEPOCH: adopta el historial más actualizado y envía NEWLEADER."""
        s = tx.srv(leader)
        adopted = s.best_history
        s = tx.update(
            leader,
            phase=Phase.SYNC,
            current_epoch=s.new_epoch,
            history=adopted,
            last_committed=clamp_committed(adopted, s.last_committed),
            adopted_last=adopted.last_zxid(),
        )
        syncing = s.syncing
        for f in sorted(s.acke_recv - {leader}):
            tx.send(leader, f, Message(MessageKind.NEWLEADER, epoch=s.new_epoch, history=adopted))
            syncing = with_pair(syncing, f, adopted.last_zxid())
        tx.update(leader, syncing=syncing)

    def _do_leader_handle_recovering_follower(self, tx: Transition, action: ActionInstance) -> None:
        """ACKEPOCH tardío: el seguidor recibe el historial completo y queda en sincronización."""
        leader, src = action.actor, int(action.params[0])
        tx.pop(src, leader)
        s = tx.srv(leader)
        tx.send(leader, src, Message(MessageKind.NEWLEADER, epoch=s.new_epoch, history=s.history))
        changes = dict(acke_recv=s.acke_recv | {src})
        if not (self.has(MutationId.RECOVER_RACE_RAW) and s.phase is Phase.BROADCAST):
            changes["syncing"] = with_pair(s.syncing, src, s.last_zxid())
        tx.update(leader, **changes)

    # --- Fallos ---
    def _do_timeout(self, tx: Transition, action: ActionInstance) -> None:
        tx.timeouts_left -= 1
        self._disconnect(tx, action.actor, int(action.params[0]))

    def _do_restart(self, tx: Transition, action: ActionInstance) -> None:
        tx.restarts_left -= 1
        self._drop_server(tx, action.actor)
