"""
Estado global explorado por los modelos de protocolo, sistema y prueba.

Los valores son inmutables; las acciones construyen el sucesor con un `Transition`
mutable y lo congelan al final.
"""
import dataclasses
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

from app.models.zab import EMPTY_HISTORY, ZERO, History, Txn, Zxid
from app.schemas.enums import MessageKind, Phase, Role

Pair = Tuple[int, int]


@dataclass(frozen=True, slots=True)
class Message:
    """Mensaje en vuelo. El significado de cada campo depende de kind."""
    kind: MessageKind
    epoch: int = 0
    zxid: Zxid = ZERO
    history: History = EMPTY_HISTORY
    txn: Optional[Txn] = None
    commit: Zxid = ZERO

    def __str__(self) -> str:
        k = self.kind
        if k in (MessageKind.CEPOCH, MessageKind.NEWEPOCH, MessageKind.ACKLD):
            return f"{k.value}({self.epoch})"
        if k is MessageKind.PROPOSE:
            return f"PROPOSE({self.txn})"
        if k in (MessageKind.ACK, MessageKind.COMMIT, MessageKind.COMMITLD):
            return f"{k.value}{self.zxid}"
        if k is MessageKind.TRUNC:
            return f"TRUNC({self.zxid},{self.history})"
        return f"{k.value}({self.epoch},{self.zxid},{self.history})"


@dataclass(frozen=True, slots=True)
class ServerState:
    """Estado de un servidor: durable (épocas, log, lastCommitted) más el volátil de su rol."""
    id: int
    role: Role = Role.LOOKING
    phase: Phase = Phase.NONE
    accepted_epoch: int = 0
    current_epoch: int = 0
    history: History = EMPTY_HISTORY
    last_committed: Zxid = ZERO
    crashed: bool = False
    # --- volátil, lado seguidor ---
    leader: Optional[int] = None
    info_sent: bool = False
    # --- volátil, lado líder ---
    cepoch_recv: frozenset = frozenset()
    acke_recv: frozenset = frozenset()
    ackld_recv: frozenset = frozenset()
    ack_recv: Tuple[Tuple[Zxid, frozenset], ...] = ()
    new_epoch: int = 0
    epoch_max: int = 0
    best_key: Optional[Tuple[int, Zxid, int]] = None
    best_history: History = EMPTY_HISTORY
    adopted_last: Zxid = ZERO
    syncing: Tuple[Tuple[int, Zxid], ...] = ()
    learners: Tuple[Tuple[int, Zxid], ...] = ()
    sync_pending: frozenset = frozenset()

    @property
    def connected(self) -> frozenset:
        """Vista de conectados del líder: quienes completaron CEPOCH/FOLLOWERINFO, incluido él mismo."""
        return self.cepoch_recv

    def last_zxid(self) -> Zxid:
        return self.history.last_zxid()

    def committed(self) -> Tuple[Txn, ...]:
        """Prefijo entregado: entradas con zxid <= lastCommitted."""
        lc = self.last_committed
        return tuple(t for t in self.history.entries if t.zxid <= lc)

    def vote_key(self) -> Tuple[int, Zxid, int]:
        """Clave de comparación de votos de la elección: (currentEpoch, lastZxid, id)."""
        return (self.current_epoch, self.last_zxid(), self.id)

    def reset_volatile(self) -> "ServerState":
        """Vuelve a LOOKING conservando sólo el estado durable."""
        return ServerState(
            id=self.id,
            accepted_epoch=self.accepted_epoch,
            current_epoch=self.current_epoch,
            history=self.history,
            last_committed=self.last_committed,
            crashed=self.crashed,
        )

    def learner_zxid(self, f: int) -> Zxid:
        for fid, z in self.learners:
            if fid == f:
                return z
        return ZERO

    def syncing_ids(self) -> frozenset:
        return frozenset(fid for fid, _ in self.syncing)

    def pending_acks(self, z: Zxid) -> Optional[frozenset]:
        for zz, acks in self.ack_recv:
            if zz == z:
                return acks
        return None

    def prune(self, f: int) -> "ServerState":
        """El líder olvida al seguidor f en todas sus estructuras de quórum."""
        return dataclasses.replace(
            self,
            cepoch_recv=self.cepoch_recv - {f},
            acke_recv=self.acke_recv - {f},
            ackld_recv=self.ackld_recv - {f},
            ack_recv=tuple((z, acks - {f}) for z, acks in self.ack_recv),
            syncing=tuple(item for item in self.syncing if item[0] != f),
            learners=tuple(item for item in self.learners if item[0] != f),
            sync_pending=self.sync_pending - {f},
        )


def with_pair(items: Tuple[Tuple[int, Zxid], ...], f: int, z: Zxid) -> Tuple[Tuple[int, Zxid], ...]:
    """Inserta o reemplaza (f, z) manteniendo el orden por id."""
    rest = [item for item in items if item[0] != f]
    rest.append((f, z))
    return tuple(sorted(rest, key=lambda item: item[0]))


def clamp_committed(history: History, last_committed: Zxid) -> Zxid:
    """lastCommitted ajustado para que apunte a una entrada existente del nuevo historial."""
    if history.contains(last_committed):
        return last_committed
    return history.greatest_at_most(last_committed)


@dataclass(frozen=True, slots=True)
class ClusterState:
    """Vértice del grafo explorado."""
    servers: Tuple[ServerState, ...]
    channels: Tuple[Tuple[Pair, Tuple[Message, ...]], ...] = ()
    oracle: Optional[int] = None
    oracle_suspected: bool = False
    txn_left: int = 0
    timeouts_left: int = 0
    restarts_left: int = 0
    crashes_left: int = 0
    partitions_left: int = 0
    partitions: Tuple[Pair, ...] = ()
    proposed: Tuple[Txn, ...] = ()

    @property
    def n(self) -> int:
        return len(self.servers)

    def server(self, i: int) -> ServerState:
        return self.servers[i - 1]

    def channel(self, src: int, dst: int) -> Tuple[Message, ...]:
        for pair, msgs in self.channels:
            if pair == (src, dst):
                return msgs
        return ()

    def is_partitioned(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.partitions

    def in_flight(self) -> int:
        return sum(len(msgs) for _, msgs in self.channels)


# Alias con los nombres de cada nivel
ProtocolGlobalState = ClusterState
SystemGlobalState = ClusterState


def fresh_cluster(n: int, **budgets) -> ClusterState:
    return ClusterState(servers=tuple(ServerState(id=i) for i in range(1, n + 1)), **budgets)


class Transition:
    """Constructor mutable del sucesor de un ClusterState."""

    def __init__(self, state: ClusterState):
        self.servers: List[ServerState] = list(state.servers)
        self.channels: Dict[Pair, List[Message]] = {pair: list(msgs) for pair, msgs in state.channels}
        self.oracle = state.oracle
        self.oracle_suspected = state.oracle_suspected
        self.txn_left = state.txn_left
        self.timeouts_left = state.timeouts_left
        self.restarts_left = state.restarts_left
        self.crashes_left = state.crashes_left
        self.partitions_left = state.partitions_left
        self.partitions = set(state.partitions)
        self.proposed = list(state.proposed)

    # --- Servidores ---
    def srv(self, i: int) -> ServerState:
        return self.servers[i - 1]

    def put(self, s: ServerState) -> None:
        self.servers[s.id - 1] = s

    def update(self, i: int, **changes) -> ServerState:
        s = dataclasses.replace(self.servers[i - 1], **changes)
        self.servers[i - 1] = s
        return s

    def followers_of(self, leader: int) -> List[int]:
        return [s.id for s in self.servers if s.role is Role.FOLLOWING and s.leader == leader]

    # --- Canales ---
    def send(self, src: int, dst: int, msg: Message) -> None:
        self.channels.setdefault((src, dst), []).append(msg)

    def send_all(self, src: int, dsts: Iterable[int], msg: Message) -> None:
        for d in sorted(dsts):
            self.send(src, d, msg)

    def head(self, src: int, dst: int) -> Optional[Message]:
        q = self.channels.get((src, dst))
        return q[0] if q else None

    def pop(self, src: int, dst: int) -> Message:
        return self.channels[(src, dst)].pop(0)

    def clear_pair(self, a: int, b: int) -> None:
        self.channels.pop((a, b), None)
        self.channels.pop((b, a), None)

    def clear_touching(self, s: int) -> None:
        for pair in [p for p in self.channels if s in p]:
            del self.channels[pair]

    def record_proposal(self, txn: Txn) -> None:
        self.proposed.append(txn)

    def freeze(self) -> ClusterState:
        channels = tuple(sorted(((p, tuple(q)) for p, q in self.channels.items() if q), key=lambda item: item[0]))
        return ClusterState(
            servers=tuple(self.servers),
            channels=channels,
            oracle=self.oracle,
            oracle_suspected=self.oracle_suspected if self.oracle is not None else False,
            txn_left=self.txn_left,
            timeouts_left=self.timeouts_left,
            restarts_left=self.restarts_left,
            crashes_left=self.crashes_left,
            partitions_left=self.partitions_left,
            partitions=tuple(sorted(self.partitions)),
            proposed=tuple(sorted(set(self.proposed), key=lambda t: (t.zxid, t.value))),
        )
