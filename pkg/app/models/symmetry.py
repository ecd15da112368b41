"""
Reducción por simetría de servidores: renombrar los ids de un ClusterState.

Un estado y cualquier permutación suya de ids son equivalentes cuando el modelo trata a
todos los servidores por igual. El explorador elige como representante la permutación de
codificación canónica mínima entre las candidatas que devuelve `candidate_permutations`.
"""
import dataclasses
from itertools import permutations, product
from typing import Dict, FrozenSet, Iterator, List, Optional, Tuple

from app.models.state import ClusterState, Message, ServerState
from app.models.zab import Zxid

Renaming = Dict[int, int]


def _ids(ids: FrozenSet[int], ren: Renaming) -> frozenset:
    return frozenset(ren[i] for i in ids)


def _pairs(items: Tuple[Tuple[int, Zxid], ...], ren: Renaming) -> Tuple[Tuple[int, Zxid], ...]:
    return tuple(sorted(((ren[f], z) for f, z in items), key=lambda item: item[0]))


def _opt(i: Optional[int], ren: Renaming) -> Optional[int]:
    return None if i is None else ren[i]


def rename_server(s: ServerState, ren: Renaming) -> ServerState:
    best = s.best_key
    if best is not None:
        best = (best[0], best[1], ren.get(best[2], best[2]))
    return dataclasses.replace(
        s,
        id=ren[s.id],
        leader=_opt(s.leader, ren),
        cepoch_recv=_ids(s.cepoch_recv, ren),
        acke_recv=_ids(s.acke_recv, ren),
        ackld_recv=_ids(s.ackld_recv, ren),
        ack_recv=tuple((z, _ids(acks, ren)) for z, acks in s.ack_recv),
        best_key=best,
        syncing=_pairs(s.syncing, ren),
        learners=_pairs(s.learners, ren),
        sync_pending=_ids(s.sync_pending, ren),
    )


def rename_cluster(state: ClusterState, ren: Renaming) -> ClusterState:
    """Aplica el renombre ren (id viejo -> id nuevo) a todos los campos con ids."""
    servers: List[ServerState] = [None] * state.n
    for s in state.servers:
        renamed = rename_server(s, ren)
        servers[renamed.id - 1] = renamed
    channels: List[Tuple[Tuple[int, int], Tuple[Message, ...]]] = [
        ((ren[a], ren[b]), msgs) for (a, b), msgs in state.channels
    ]
    partitions = [tuple(sorted((ren[a], ren[b]))) for a, b in state.partitions]
    return dataclasses.replace(
        state,
        servers=tuple(servers),
        channels=tuple(sorted(channels, key=lambda item: item[0])),
        oracle=_opt(state.oracle, ren),
        partitions=tuple(sorted(partitions)),
    )


def _signature(s: ServerState) -> Tuple:
    """Resumen del servidor que no depende de ningún id."""
    return (
        s.crashed, s.role.value, s.phase.value, s.accepted_epoch, s.current_epoch,
        tuple((t.zxid.epoch, t.zxid.counter, t.value) for t in s.history.entries),
        (s.last_committed.epoch, s.last_committed.counter),
        s.new_epoch, len(s.cepoch_recv), len(s.ackld_recv),
    )


def candidate_permutations(state: ClusterState) -> Iterator[Renaming]:
    """
    Renombres que ordenan los servidores por firma. Los servidores con la misma firma
    se prueban en todos sus órdenes; el conjunto resultante no depende de los ids de entrada.
    """
    groups: Dict[Tuple, List[int]] = {}
    for s in state.servers:
        groups.setdefault(_signature(s), []).append(s.id)
    ordered = [groups[sig] for sig in sorted(groups)]
    for choice in product(*(permutations(ids) for ids in ordered)):
        order = [sid for block in choice for sid in block]
        yield {old: new for new, old in enumerate(order, start=1)}


def symmetric_variants(state: ClusterState) -> List[ClusterState]:
    return [rename_cluster(state, ren) for ren in candidate_permutations(state)]
