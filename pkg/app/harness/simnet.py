"""
Red simulada determinista: un canal FIFO por par ordenado, ids estables por canal y máscara de particiones.
"""
import logging
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Protocol, Tuple

from app.models.zab import ZERO, Txn, Zxid
from app.schemas.enums import MessageKind

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]


@dataclass(frozen=True)
class Packet:
    id: str
    src: int
    dst: int
    kind: MessageKind
    epoch: int = 0
    zxid: Zxid = ZERO
    entries: Tuple[Txn, ...] = ()
    txn: Optional[Txn] = None
    commit: Zxid = ZERO


class NetworkDivergence(Exception):
    """La red no puede cumplir un evento del calendario."""

    def __init__(self, message: str, msg_id: str, expected: str, actual: str):
        super().__init__(message)
        self.msg_id = msg_id
        self.expected = expected
        self.actual = actual


class Endpoint(Protocol):
    def on_connect(self, peer: int) -> None: ...
    def on_disconnect(self, peer: int) -> None: ...


def channel_id(src: int, dst: int, k: int) -> str:
    return f"{src}->{dst}#{k}"


def parse_channel_id(msg_id: str) -> Tuple[Pair, int]:
    pair, _, k = msg_id.partition("#")
    src, _, dst = pair.partition("->")
    return (int(src), int(dst)), int(k)


class SimNet:
    def __init__(self):
        self.channels: Dict[Pair, Deque[Packet]] = {}
        self.counters: Dict[Pair, int] = {}
        self.partitions: set = set()
        self.endpoints: Dict[int, Endpoint] = {}

    def attach(self, node_id: int, endpoint: Endpoint) -> None:
        self.endpoints[node_id] = endpoint

    def is_partitioned(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.partitions

    # --- Mensajes ---
    def send(self, src: int, dst: int, kind: MessageKind, **fields) -> str:
        pair = (src, dst)
        self.counters[pair] = self.counters.get(pair, 0) + 1
        msg_id = channel_id(src, dst, self.counters[pair])
        if self.is_partitioned(src, dst):
            logger.debug(f"Mensaje {msg_id} ({kind.value}) descartado por partición")
            return msg_id
        self.channels.setdefault(pair, deque()).append(Packet(msg_id, src, dst, kind, **fields))
        return msg_id

    def deliver(self, msg_id: str) -> Packet:
        """Saca exactamente msg_id de la cabeza de su canal."""
        try:
            pair, _ = parse_channel_id(msg_id)
        except ValueError as exc:
            raise NetworkDivergence("Id de mensaje ilegible", msg_id, msg_id, "-") from exc
        queue = self.channels.get(pair)
        if not queue:
            raise NetworkDivergence("El mensaje nunca existió o ya fue descartado", msg_id, msg_id, "canal vacío")
        if queue[0].id != msg_id:
            present = any(p.id == msg_id for p in queue)
            reason = "El mensaje no está en la cabeza del canal (FIFO)" if present else "El mensaje nunca existió"
            raise NetworkDivergence(reason, msg_id, msg_id, queue[0].id)
        packet = queue.popleft()
        if not queue:
            del self.channels[pair]
        return packet

    def clear_pair(self, a: int, b: int) -> None:
        self.channels.pop((a, b), None)
        self.channels.pop((b, a), None)

    def clear_touching(self, node_id: int) -> None:
        for pair in [p for p in self.channels if node_id in p]:
            del self.channels[pair]

    # --- Conexiones ---
    def connect(self, follower: int, leader: int) -> None:
        self.endpoints[leader].on_connect(follower)

    def close(self, a: int, b: int) -> None:
        """Cierre de la conexión a<->b: ambos extremos lo notan de inmediato."""
        self.clear_pair(a, b)
        self.endpoints[a].on_disconnect(b)
        self.endpoints[b].on_disconnect(a)

    def partition(self, a: int, b: int, connected: bool) -> None:
        self.partitions.add((min(a, b), max(a, b)))
        if connected:
            self.close(a, b)
        else:
            self.clear_pair(a, b)

    def reconnect(self, a: int, b: int) -> None:
        self.partitions.discard((min(a, b), max(a, b)))

    def snapshot(self) -> Dict[str, List[str]]:
        """Ids en vuelo por canal no vacío, en orden de canal."""
        return {f"{a}->{b}": [p.id for p in q] for (a, b), q in sorted(self.channels.items()) if q}
