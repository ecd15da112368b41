"""
Vocabulario común de Zab: zxid, transacciones, historiales y sistemas de quórum.

Todos los tipos son valores inmutables; se pueden compartir entre hilos sin copia.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Optional, Tuple

from app.core.error_handlers import ContractError
from app.schemas.enums import QuorumRule


class Ordering(str, Enum):
    LESS = 'Less'
    EQUAL = 'Equal'
    GREATER = 'Greater'


@dataclass(frozen=True, slots=True, order=True)
class Zxid:
    """Identificador de transacción calificado por época. El orden es lexicográfico (epoch, counter)."""
    epoch: int
    counter: int

    def __post_init__(self):
        if self.epoch < 0 or self.counter < 0:
            raise ContractError("Zxid con componentes negativos", epoch=self.epoch, counter=self.counter)

    def is_zero(self) -> bool:
        return self.epoch == 0 and self.counter == 0

    def __str__(self) -> str:
        return f"({self.epoch},{self.counter})"


ZERO = Zxid(0, 0)


@dataclass(frozen=True, slots=True)
class Txn:
    """Transacción: el valor es opaco para el protocolo, sólo importa el orden de zxid."""
    zxid: Zxid
    value: int

    def __str__(self) -> str:
        return f"{self.zxid}={self.value}"


@dataclass(frozen=True, slots=True)
class History:
    """Log de un servidor: secuencia estrictamente creciente por zxid."""
    entries: Tuple[Txn, ...] = ()

    @classmethod
    def of(cls, *pairs: Tuple[int, int], values: Optional[Iterable[int]] = None) -> "History":
        """Atajo para construir historiales en pruebas: History.of((1, 1), (1, 2))."""
        vals = list(values) if values is not None else list(range(1, len(pairs) + 1))
        return cls(tuple(Txn(Zxid(e, c), v) for (e, c), v in zip(pairs, vals)))

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[Txn]:
        return iter(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def last_zxid(self) -> Zxid:
        return self.entries[-1].zxid if self.entries else ZERO

    def zxids(self) -> Tuple[Zxid, ...]:
        return tuple(t.zxid for t in self.entries)

    def epochs(self) -> frozenset:
        return frozenset(t.zxid.epoch for t in self.entries)

    def index_of(self, z: Zxid) -> int:
        """Posición (1-based) de z en el log; 0 para el centinela ZERO; -1 si no aparece."""
        if z.is_zero():
            return 0
        for i, t in enumerate(self.entries):
            if t.zxid == z:
                return i + 1
            if t.zxid > z:
                break
        return -1

    def contains(self, z: Zxid) -> bool:
        return self.index_of(z) >= 0

    def append(self, txn: Txn) -> "History":
        if self.entries and not txn.zxid > self.last_zxid():
            raise ContractError("append rompe el orden estricto del log", last=self.last_zxid(), new=txn.zxid)
        return History(self.entries + (txn,))

    def extend(self, txns: Iterable[Txn]) -> "History":
        h = self
        for t in txns:
            h = h.append(t)
        return h

    def suffix_after(self, z: Zxid) -> Tuple[Txn, ...]:
        """Entradas con zxid estrictamente mayor que z."""
        return tuple(t for t in self.entries if t.zxid > z)

    def prefix_upto(self, z: Zxid) -> "History":
        """Entradas con zxid <= z (no exige que z aparezca)."""
        return History(tuple(t for t in self.entries if t.zxid <= z))

    def greatest_at_most(self, z: Zxid) -> Zxid:
        """Mayor zxid del log que es <= z, o ZERO."""
        best = ZERO
        for t in self.entries:
            if t.zxid <= z:
                best = t.zxid
            else:
                break
        return best

    def is_well_formed(self) -> bool:
        """Estrictamente creciente y con contadores consecutivos desde 1 dentro de cada época."""
        prev: Optional[Zxid] = None
        for t in self.entries:
            z = t.zxid
            if z.counter < 1:
                return False
            if prev is None or z.epoch != prev.epoch:
                if z.counter != 1 or (prev is not None and z.epoch < prev.epoch):
                    return False
            elif z.counter != prev.counter + 1:
                return False
            prev = z
        return True

    def __str__(self) -> str:
        return "[" + ",".join(str(t.zxid) for t in self.entries) + "]"


EMPTY_HISTORY = History()


@dataclass(frozen=True, slots=True)
class QuorumSystem:
    n: int
    rule: QuorumRule = QuorumRule.MAJORITY

    def is_quorum(self, members: Iterable[int]) -> bool:
        return is_quorum(self, frozenset(members))

    def min_size(self) -> int:
        """Tamaño mínimo de un quórum bajo la regla."""
        if self.rule is QuorumRule.MAJORITY:
            return self.n // 2 + 1
        return max(1, (self.n + 1) // 2)


# ==========================================
# OPERACIONES
# ==========================================

def compare_zxid(a: Zxid, b: Zxid) -> Ordering:
    """Comparación lexicográfica (epoch, counter)."""
    if (a.epoch, a.counter) < (b.epoch, b.counter):
        return Ordering.LESS
    if (a.epoch, a.counter) > (b.epoch, b.counter):
        return Ordering.GREATER
    return Ordering.EQUAL


def next_zxid(last: Zxid, current_epoch: int) -> Zxid:
    """Siguiente zxid a proponer: el contador se reinicia en 1 en cada época nueva."""
    if current_epoch < last.epoch:
        raise ContractError("next_zxid con época anterior al último zxid", last=last, current_epoch=current_epoch)
    if last.epoch == current_epoch:
        return Zxid(current_epoch, last.counter + 1)
    return Zxid(current_epoch, 1)


def follows_immediately(prev: Zxid, z: Zxid) -> bool:
    """True si z puede ir justo después de prev en un log bien formado."""
    if z.epoch == prev.epoch and not prev.is_zero():
        return z.counter == prev.counter + 1
    return z.epoch > prev.epoch and z.counter == 1


def is_quorum(qs: QuorumSystem, members: frozenset) -> bool:
    """MAJORITY: |S| > n/2. WEAK_HALF: |S| >= n/2 (y no vacío)."""
    if any(m < 1 or m > qs.n for m in members):
        raise ContractError("El conjunto contiene ids fuera de 1..n", n=qs.n, members=sorted(members))
    size = len(members)
    if qs.rule is QuorumRule.MAJORITY:
        return 2 * size > qs.n
    return size > 0 and 2 * size >= qs.n


def truncate_to(h: History, z: Zxid) -> History:
    """Prefijo más largo de h cuyo último zxid es <= z. z debe aparecer en h (o ser ZERO)."""
    idx = h.index_of(z)
    if idx < 0:
        raise ContractError("truncate_to a un zxid que no está en el historial", zxid=z, history=str(h))
    return History(h.entries[:idx])
