"""
Runtime de nodos Zab para el replay de conformidad.

Implementación secuencial e independiente de la lógica del modelo de sistema: cada nodo
tiene almacén durable, estado volátil de rol y manejadores de mensajes. Un nodo sólo actúa
cuando el controlador le entrega un evento; no hay temporizadores propios.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Set, Tuple

from app.harness.simnet import Packet, SimNet
from app.models.zab import ZERO, History, Txn, Zxid
from app.schemas.conformance import DOWN
from app.schemas.enums import MessageKind, MutationId, NodeFault, Phase, QuorumRule, Role


@dataclass(frozen=True)
class NodeOptions:
    """Parámetros de construcción comunes a todos los nodos de un clúster."""
    n: int
    quorum_rule: QuorumRule = QuorumRule.MAJORITY
    mutations: FrozenSet[MutationId] = frozenset()
    snapshot_boundary: Optional[Zxid] = None
    faults: FrozenSet[NodeFault] = field(default_factory=frozenset)

    def is_quorum(self, members) -> bool:
        size = len(set(members))
        if self.quorum_rule is QuorumRule.WEAK_HALF or MutationId.WEAK_QUORUM in self.mutations:
            return size > 0 and 2 * size >= self.n
        return 2 * size > self.n


class ZabNode:
    def __init__(self, node_id: int, options: NodeOptions, net: SimNet):
        self.id = node_id
        self.opts = options
        self.net = net
        self.log = logging.getLogger(f"zab.node.{node_id}")
        # --- durable ---
        self.accepted_epoch = 0
        self.current_epoch = 0
        self.history: List[Txn] = []
        self.last_committed: Zxid = ZERO
        self.down = False
        self.reset_volatile()
        net.attach(node_id, self)

    def reset_volatile(self) -> None:
        self.role = Role.LOOKING
        self.phase = Phase.NONE
        self.leader: Optional[int] = None
        self.info_sent = False
        self.connections: Set[int] = set()
        self.registered: Set[int] = set()
        self.acked_epoch: Set[int] = set()
        self.synced: Set[int] = set()
        self.pending: Dict[Zxid, Set[int]] = {}
        self.new_epoch = 0
        self.epoch_max = 0
        self.learners: Dict[int, Zxid] = {}
        self.sync_queue: Set[int] = set()
        self.syncing: Dict[int, Zxid] = {}

    def restore(self, **fields) -> None:
        """Carga un estado de partida (durable y volátil) dado campo a campo."""
        for name, value in fields.items():
            if not hasattr(self, name):
                raise AttributeError(f"Campo de nodo desconocido: {name}")
            setattr(self, name, value)

    def has(self, m: MutationId) -> bool:
        return m in self.opts.mutations

    def faulty(self, fault: NodeFault) -> bool:
        return fault in self.opts.faults

    # --- utilidades del log ---
    def last_zxid(self) -> Zxid:
        return self.history[-1].zxid if self.history else ZERO

    def _position(self, z: Zxid) -> int:
        if z.is_zero():
            return 0
        for i, t in enumerate(self.history):
            if t.zxid == z:
                return i + 1
        return -1

    def _next_zxid(self) -> Zxid:
        last = self.last_zxid()
        if last.epoch == self.current_epoch:
            return Zxid(self.current_epoch, last.counter + 1)
        return Zxid(self.current_epoch, 1)

    def _clamp_commit(self) -> None:
        if self._position(self.last_committed) >= 0:
            return
        best = ZERO
        for t in self.history:
            if t.zxid <= self.last_committed:
                best = t.zxid
        self.last_committed = best

    def vote(self) -> Tuple[int, Zxid, int]:
        return (self.current_epoch, self.last_zxid(), self.id)

    def send(self, dst: int, kind: MessageKind, **fields) -> None:
        msg_id = self.net.send(self.id, dst, kind, **fields)
        self.log.debug(f"Envía {kind.value} como {msg_id}")

    # ==========================================
    # PROYECCIÓN
    # ==========================================

    def project(self):
        """(role, phase, acceptedEpoch, currentEpoch, history, lastCommitted) o DOWN."""
        if self.down:
            return DOWN
        return {
            "role": self.role.value,
            "phase": self.phase.value,
            "acceptedEpoch": str(self.accepted_epoch),
            "currentEpoch": str(self.current_epoch),
            "history": str(History(tuple(self.history))),
            "lastCommitted": str(self.last_committed),
        }

    # ==========================================
    # CONEXIONES
    # ==========================================

    def on_connect(self, peer: int) -> None:
        if self.role is Role.LEADING:
            self.connections.add(peer)

    def on_disconnect(self, peer: int) -> None:
        if self.role is Role.FOLLOWING and self.leader == peer:
            self.log.debug(f"Conexión con el líder {peer} cerrada; vuelve a LOOKING")
            self.reset_volatile()
            return
        if self.role is not Role.LEADING:
            return
        self.connections.discard(peer)
        self._forget(peer)
        if not self.opts.is_quorum(self.connections | self.registered | {self.id}):
            self.log.info(f"Sin quórum tras perder a {peer}; abandona el liderazgo")
            self.step_down()

    def _forget(self, peer: int) -> None:
        for members in (self.registered, self.acked_epoch, self.synced, self.sync_queue):
            members.discard(peer)
        for acks in self.pending.values():
            acks.discard(peer)
        self.syncing.pop(peer, None)
        self.learners.pop(peer, None)

    def step_down(self) -> None:
        followers = sorted(self.connections)
        self.reset_volatile()
        for f in followers:
            self.net.close(self.id, f)
        self.net.clear_touching(self.id)

    def crash(self) -> None:
        if self.role is Role.LEADING:
            self.step_down()
        elif self.role is Role.FOLLOWING and self.leader is not None:
            self.net.close(self.id, self.leader)
        self.net.clear_touching(self.id)
        self.reset_volatile()
        self.down = True
        self.log.info("Nodo caído")

    def rejoin(self) -> None:
        self.down = False
        self.log.info("Nodo reincorporado")

    # ==========================================
    # ELECCIÓN
    # ==========================================

    def become_leader(self) -> None:
        self.reset_volatile()
        self.role = Role.LEADING
        self.phase = Phase.DISCOVERY
        self.leader = self.id
        self.registered = {self.id}
        self.acked_epoch = {self.id}
        self.synced = {self.id}
        self.epoch_max = self.accepted_epoch
        self.log.info(f"Líder electo (época aceptada {self.accepted_epoch})")
        self._advance()

    def follow(self, leader: int) -> None:
        self.role = Role.FOLLOWING
        self.phase = Phase.DISCOVERY
        self.leader = leader
        self.info_sent = False

    def send_followerinfo(self) -> None:
        self.info_sent = True
        self.send(self.leader, MessageKind.FOLLOWERINFO, epoch=self.accepted_epoch, zxid=self.last_zxid())

    # --- establecimiento abstracto del modelo de prueba ---
    def adopt_leader(self, leader: int, epoch: int) -> None:
        self.follow(leader)
        self.accepted_epoch = epoch
        self.info_sent = True

    def establish(self, group: FrozenSet[int], epoch: int, learners: Dict[int, Zxid]) -> None:
        self.reset_volatile()
        self.connections = set(group) - {self.id}
        self.role = Role.LEADING
        self.phase = Phase.SYNC
        self.leader = self.id
        self.accepted_epoch = self.current_epoch = self.new_epoch = epoch
        self.epoch_max = epoch - 1
        self.registered = set(group)
        self.acked_epoch = set(group)
        self.synced = {self.id}
        self.learners = dict(learners)
        self.sync_queue = set(group) - {self.id}
        self._advance()

    def admit(self, follower: int, last: Zxid) -> None:
        self.registered.add(follower)
        self.acked_epoch.add(follower)
        self.learners[follower] = last
        self.sync_queue.add(follower)

    # ==========================================
    # LÍDER
    # ==========================================

    def _advance(self) -> None:
        if self.role is not Role.LEADING:
            return
        if self.phase is Phase.DISCOVERY and self.new_epoch == 0 and self.opts.is_quorum(self.registered):
            self.new_epoch = self.accepted_epoch = self.epoch_max + 1
            for f in sorted(self.registered - {self.id}):
                self.send(f, MessageKind.NEWEPOCH, epoch=self.new_epoch)
        if self.phase is Phase.DISCOVERY and self.new_epoch > 0 and self.opts.is_quorum(self.acked_epoch):
            self.phase = Phase.SYNC
            self.current_epoch = self.new_epoch
            self.sync_queue |= self.acked_epoch - {self.id}
        if self.phase is Phase.SYNC and self.opts.is_quorum(self.synced):
            self.phase = Phase.BROADCAST
            self.last_committed = self.last_zxid()
            for f in sorted(self.synced - {self.id}):
                self.send(f, MessageKind.COMMITLD, zxid=self.last_committed)
            self.log.info(f"Establecido en época {self.current_epoch}")

    def _broadcast_targets(self) -> List[int]:
        return sorted((self.synced - {self.id}) | set(self.syncing))

    def _commit_if_quorum(self, z: Zxid) -> None:
        acks = self.pending.get(z)
        if acks is None or not self.opts.is_quorum(acks):
            return
        self.last_committed = max(self.last_committed, z)
        del self.pending[z]
        for f in self._broadcast_targets():
            self.send(f, MessageKind.COMMIT, zxid=z)

    def propose(self, value: int) -> None:
        z = self._next_zxid()
        txn = Txn(z, value)
        self.history.append(txn)
        self.pending[z] = {self.id}
        if self.has(MutationId.COMMIT_BEFORE_QUORUM):
            self.last_committed = z
        for f in self._broadcast_targets():
            self.send(f, MessageKind.PROPOSE, txn=txn)
        self._commit_if_quorum(z)

    def _sync_source(self) -> Tuple[List[Txn], Zxid]:
        if self.phase is Phase.BROADCAST:
            if self.has(MutationId.DIFF_FROM_UNCOMMITTED):
                return list(self.history), self.last_zxid()
            lc = self.last_committed
            return [t for t in self.history if t.zxid <= lc], lc
        return list(self.history), self.last_committed

    def _plan_sync(self, base: List[Txn], follower_last: Zxid) -> Tuple[MessageKind, Zxid, Tuple[Txn, ...]]:
        """Elige DIFF, TRUNC o SNAP para llevar al seguidor de follower_last hasta base."""
        zxids = [t.zxid for t in base]
        last = zxids[-1] if zxids else ZERO
        skip_trunc = self.has(MutationId.SYNC_SKIP_TRUNC)
        boundary = self.opts.snapshot_boundary
        if follower_last == last:
            return MessageKind.DIFF, ZERO, ()
        if boundary is not None and base and follower_last < boundary:
            return MessageKind.SNAP, ZERO, tuple(base)
        if follower_last.is_zero() or follower_last in zxids:
            return MessageKind.DIFF, ZERO, tuple(t for t in base if t.zxid > follower_last)
        if not base:
            return (MessageKind.DIFF, ZERO, ()) if skip_trunc else (MessageKind.TRUNC, ZERO, ())
        if follower_last > last or follower_last.epoch in {z.epoch for z in zxids}:
            target = max((z for z in zxids if z <= follower_last), default=ZERO)
            suffix = tuple(t for t in base if t.zxid > target)
            if skip_trunc:
                return MessageKind.DIFF, ZERO, suffix
            return MessageKind.TRUNC, target, suffix
        return MessageKind.SNAP, ZERO, tuple(base)

    def sync_follower(self, f: int) -> None:
        base, commit = self._sync_source()
        kind, trunc_to, entries = self._plan_sync(base, self.learners.get(f, ZERO))
        self.log.debug(f"Sincroniza a {f} con {kind.value} ({len(entries)} entradas)")
        self.send(f, kind, zxid=trunc_to, entries=entries, commit=commit)
        broadcasting = self.phase is Phase.BROADCAST
        if broadcasting and not self.has(MutationId.DIFF_FROM_UNCOMMITTED):
            base_last = base[-1].zxid if base else ZERO
            for txn in self.history:
                if txn.zxid > base_last:
                    self.send(f, MessageKind.PROPOSE, txn=txn)
        self.send(f, MessageKind.NEWLEADER, epoch=self.new_epoch)
        self.sync_queue.discard(f)
        if not (broadcasting and self.has(MutationId.RECOVER_RACE_RAW)):
            self.syncing[f] = self.last_zxid()

    def _on_followerinfo(self, p: Packet) -> None:
        if p.zxid.epoch > self.current_epoch:
            self.log.info(f"{p.src} reporta {p.zxid}, posterior a la época actual; abandona el liderazgo")
            self.step_down()
            return
        self.registered.add(p.src)
        self.learners[p.src] = p.zxid
        if self.new_epoch == 0:
            self.epoch_max = max(self.epoch_max, p.epoch)
        else:
            self.send(p.src, MessageKind.NEWEPOCH, epoch=self.new_epoch)
        self._advance()

    def _on_ackepoch(self, p: Packet) -> None:
        self.acked_epoch.add(p.src)
        self.learners[p.src] = p.zxid
        if self.phase is Phase.DISCOVERY:
            self._advance()
        else:
            self.sync_queue.add(p.src)

    def _on_ackld(self, p: Packet) -> None:
        snapshot = self.syncing.pop(p.src, None)
        self.synced.add(p.src)
        if self.phase is Phase.SYNC:
            self._advance()
            return
        if self.phase is not Phase.BROADCAST:
            return
        self.send(p.src, MessageKind.COMMITLD, zxid=self.last_committed)
        if snapshot is None:
            return
        for z, acks in self.pending.items():
            if z <= snapshot:
                acks.add(p.src)
        for z in list(self.pending):
            self._commit_if_quorum(z)

    def _on_ack(self, p: Packet) -> None:
        if p.zxid not in self.pending:
            return
        self.pending[p.zxid].add(p.src)
        self._commit_if_quorum(p.zxid)

    # ==========================================
    # SEGUIDOR
    # ==========================================

    def _abandon(self) -> None:
        self.net.close(self.id, self.leader)

    def _on_newepoch(self, p: Packet) -> None:
        if p.epoch <= self.accepted_epoch:
            self._abandon()
            return
        if not self.faulty(NodeFault.STALE_ACCEPTED_EPOCH):
            self.accepted_epoch = p.epoch
        self.send(p.src, MessageKind.ACKEPOCH, epoch=self.current_epoch, zxid=self.last_zxid())

    def _on_sync(self, p: Packet) -> None:
        if p.kind is MessageKind.SNAP:
            history = list(p.entries)
        else:
            history = list(self.history)
            if p.kind is MessageKind.TRUNC and not self.faulty(NodeFault.BROKEN_TRUNCATE):
                pos = self._position(p.zxid)
                if pos < 0:
                    self.log.warning(f"TRUNC a {p.zxid}, ausente del log local; abandona")
                    self._abandon()
                    return
                history = history[:pos]
            entries = p.entries
            if self.faulty(NodeFault.BROKEN_TRUNCATE):
                tail = history[-1].zxid if history else ZERO
                entries = tuple(t for t in entries if t.zxid > tail)
            tail = history[-1].zxid if history else ZERO
            if entries and entries[0].zxid <= tail:
                self.log.warning(f"{p.kind.value} no extiende el log local; abandona")
                self._abandon()
                return
            history.extend(entries)
        self.history = history
        self._clamp_commit()
        if self._position(p.commit) >= 0:
            self.last_committed = max(self.last_committed, p.commit)
        if not self.faulty(NodeFault.SKIP_SYNC_PHASE):
            self.phase = Phase.SYNC

    def _on_newleader(self, p: Packet) -> None:
        if p.epoch != self.accepted_epoch:
            self._abandon()
            return
        self.current_epoch = p.epoch
        self.phase = Phase.SYNC
        self.send(p.src, MessageKind.ACKLD, epoch=p.epoch)

    def _on_commitld(self, p: Packet) -> None:
        self.last_committed = max(self.last_committed, p.zxid)
        self.phase = Phase.BROADCAST

    def _on_propose(self, p: Packet) -> None:
        txn = p.txn
        last = self.last_zxid()
        if last.is_zero() or txn.zxid.epoch != last.epoch:
            in_order = txn.zxid.epoch > last.epoch and txn.zxid.counter == 1
        else:
            in_order = txn.zxid.counter == last.counter + 1
        if self.phase not in (Phase.SYNC, Phase.BROADCAST) or not in_order:
            self._abandon()
            return
        self.history.append(txn)
        if self.current_epoch == self.accepted_epoch:
            self.send(p.src, MessageKind.ACK, zxid=txn.zxid)

    def _on_commit(self, p: Packet) -> None:
        if self._position(p.zxid) < 0:
            self._abandon()
            return
        if not self.faulty(NodeFault.LAZY_COMMIT):
            self.last_committed = max(self.last_committed, p.zxid)

    # ==========================================
    # DESPACHO
    # ==========================================

    def receive(self, p: Packet) -> None:
        if self.role is Role.LEADING:
            handler = {
                MessageKind.FOLLOWERINFO: self._on_followerinfo,
                MessageKind.ACKEPOCH: self._on_ackepoch,
                MessageKind.ACKLD: self._on_ackld,
                MessageKind.ACK: self._on_ack,
            }.get(p.kind)
        elif self.role is Role.FOLLOWING and self.leader == p.src:
            handler = {
                MessageKind.NEWEPOCH: self._on_newepoch,
                MessageKind.NEWLEADER: self._on_newleader,
                MessageKind.COMMITLD: self._on_commitld,
                MessageKind.PROPOSE: self._on_propose,
                MessageKind.COMMIT: self._on_commit,
                MessageKind.DIFF: self._on_sync,
                MessageKind.TRUNC: self._on_sync,
                MessageKind.SNAP: self._on_sync,
            }.get(p.kind)
        else:
            handler = None
        if handler is None:
            self.log.warning(f"{p.id} ({p.kind.value}) descartado en rol {self.role.value}")
            return
        handler(p)
