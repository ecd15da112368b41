"""
Decisión de sincronización del líder (DIFF / TRUNC / SNAP) y su aplicación en el seguidor.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

from app.core.error_handlers import ContractError
from app.models.zab import ZERO, History, Txn, Zxid, truncate_to
from app.schemas.enums import SyncMode


@dataclass(frozen=True, slots=True)
class SyncDecision:
    mode: SyncMode
    payload: Tuple[Txn, ...] = ()
    trunc_to: Zxid = ZERO

    def __str__(self) -> str:
        body = ",".join(str(t.zxid) for t in self.payload)
        if self.mode is SyncMode.TRUNC:
            return f"TRUNC->{self.trunc_to}[{body}]"
        return f"{self.mode.value}[{body}]"


def decide_sync_mode(
    leader_history: History,
    follower_last: Zxid,
    snapshot_boundary: Optional[Zxid] = None,
    skip_trunc: bool = False,
) -> SyncDecision:
    """
    Elige cómo llevar al seguidor desde follower_last hasta leader_history.

    skip_trunc reemplaza el TRUNC por un DIFF del sufijo sin truncar (error sembrado).
    """
    leader_last = leader_history.last_zxid()
    if follower_last == leader_last:
        return SyncDecision(SyncMode.DIFF)

    if snapshot_boundary is not None and leader_history and follower_last < snapshot_boundary:
        return SyncDecision(SyncMode.SNAP, payload=leader_history.entries)

    if leader_history.contains(follower_last):
        return SyncDecision(SyncMode.DIFF, payload=leader_history.suffix_after(follower_last))

    if not leader_history:
        if skip_trunc:
            return SyncDecision(SyncMode.DIFF)
        return SyncDecision(SyncMode.TRUNC, trunc_to=ZERO)

    if follower_last > leader_last or follower_last.epoch in leader_history.epochs():
        target = leader_history.greatest_at_most(follower_last)
        suffix = leader_history.suffix_after(target)
        if skip_trunc:
            return SyncDecision(SyncMode.DIFF, payload=suffix)
        return SyncDecision(SyncMode.TRUNC, payload=suffix, trunc_to=target)

    # El seguidor tiene una rama de una época que el líder nunca vio
    return SyncDecision(SyncMode.SNAP, payload=leader_history.entries)


def apply_sync(history: History, decision: SyncDecision) -> History:
    """
    Historial del seguidor tras aplicar la decisión.

    Lanza ContractError si el TRUNC apunta a un zxid ausente o si el DIFF no extiende el log.
    """
    if decision.mode is SyncMode.SNAP:
        return History(decision.payload)
    if decision.mode is SyncMode.TRUNC:
        history = truncate_to(history, decision.trunc_to)
    if decision.payload and decision.payload[0].zxid <= history.last_zxid():
        raise ContractError("DIFF que no extiende el historial del seguidor",
                            last=history.last_zxid(), first=decision.payload[0].zxid)
    return history.extend(decision.payload)
