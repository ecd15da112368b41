"""
Extracción del calendario de eventos a partir de una traza del explorador.

Cada acción de la traza se traduce a exactamente un evento. Las entregas de mensajes se
resuelven al id concreto que la red simulada asignará, siguiendo los canales del modelo
paso a paso: los ids se numeran por canal en orden de envío y nunca se reutilizan.
"""
import dataclasses
import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

from app.core.error_handlers import ScheduleError
from app.harness.simnet import channel_id
from app.models.catalog import build_model
from app.models.common import FOLLOWER_HANDLERS, LEADER_HANDLERS
from app.models.state import ClusterState, ServerState
from app.models.zab import Txn
from app.schemas.conformance import DOWN, ScheduleEvent
from app.schemas.enums import EventKind, ModelName, Phase, Role
from app.schemas.explore import ExploreConfig, Trace, TraceStep
from app.services.trace_io import replay_trace

logger = logging.getLogger(__name__)

Pair = Tuple[int, int]
Projection = Union[str, Dict[str, str]]

# --- Tabla de correspondencia acción del modelo -> evento ---
DELIVERY_ACTIONS = frozenset(LEADER_HANDLERS.values()) | frozenset(FOLLOWER_HANDLERS.values())

FIRE_ACTIONS: Dict[str, str] = {
    "fle_round": "elect",
    "fle_follow_leader": "follow_leader",
    "follower_send_followerinfo": "send_followerinfo",
    "leader_decide_sync_mode": "sync_follower",
    "leader_propose": "propose",
    "ipa_establish_leader": "establish",
    "ipa_join_leader": "join",
}

ENVIRONMENT_EVENTS: Dict[str, EventKind] = {
    "crash": EventKind.CRASH,
    "rejoin": EventKind.REJOIN,
    "partition": EventKind.PARTITION,
    "reconnect": EventKind.RECONNECT,
}

REPLAYABLE_MODELS = (ModelName.SYSTEM, ModelName.TEST)


@dataclass(frozen=True)
class ExpectedStep:
    """Lo que el modelo registró tras un paso: proyección por servidor e ids en vuelo por canal."""
    servers: Dict[int, Projection]
    network: Dict[str, List[str]]


@dataclass(frozen=True)
class EventSchedule:
    model: ModelName
    cfg: ExploreConfig
    initial: ClusterState
    events: Tuple[ScheduleEvent, ...] = ()
    expected: Tuple[ExpectedStep, ...] = ()

    def __len__(self) -> int:
        return len(self.events)


def project_model_server(s: ServerState) -> Projection:
    """Proyección comparable de un servidor del modelo; DOWN si está caído."""
    if s.crashed:
        return DOWN
    return {
        "role": s.role.value,
        "phase": s.phase.value,
        "acceptedEpoch": str(s.accepted_epoch),
        "currentEpoch": str(s.current_epoch),
        "history": str(s.history),
        "lastCommitted": str(s.last_committed),
    }


class ServerView(NamedTuple):
    """Lo que el refinamiento compara de cada servidor."""
    role: str
    current_epoch: int
    committed: Tuple[Txn, ...]
    syncing: bool


def project_refinement(state: ClusterState) -> Tuple[ServerView, ...]:
    """
    Vista (rol, currentEpoch, prefijo entregado) por servidor. Un servidor caído cuenta como
    LOOKING con su estado durable; syncing marca a los seguidores que están en SYNC.
    """
    views = []
    for s in state.servers:
        role = Role.LOOKING if s.crashed else s.role
        views.append(ServerView(
            role=role.value,
            current_epoch=s.current_epoch,
            committed=s.committed(),
            syncing=role is Role.FOLLOWING and s.phase is Phase.SYNC,
        ))
    return tuple(views)


class ChannelLedger:
    """Ids de los mensajes en vuelo de cada canal del modelo."""

    def __init__(self):
        self.ids: Dict[Pair, List[str]] = {}
        self.counters: Dict[Pair, int] = {}

    def head(self, pair: Pair) -> Optional[str]:
        ids = self.ids.get(pair)
        return ids[0] if ids else None

    def _fresh(self, pair: Pair, count: int) -> List[str]:
        start = self.counters.get(pair, 0)
        self.counters[pair] = start + count
        return [channel_id(pair[0], pair[1], k) for k in range(start + 1, start + count + 1)]

    def advance(self, before: ClusterState, after: ClusterState, popped: Optional[Pair] = None) -> None:
        """Asigna ids a los mensajes que aparecieron entre before y after."""
        ids: Dict[Pair, List[str]] = {}
        for pair, msgs in after.channels:
            old_msgs = list(before.channel(*pair))
            old_ids = list(self.ids.get(pair, []))
            if pair == popped:
                old_msgs, old_ids = old_msgs[1:], old_ids[1:]
            kept = len(old_msgs)
            if kept and list(msgs[:kept]) == old_msgs:
                ids[pair] = old_ids + self._fresh(pair, len(msgs) - kept)
            else:
                # Canal vaciado (o nuevo): todo lo presente se envió en este paso
                ids[pair] = self._fresh(pair, len(msgs))
        self.ids = ids

    def snapshot(self) -> Dict[str, List[str]]:
        return {f"{a}->{b}": list(ids) for (a, b), ids in sorted(self.ids.items()) if ids}


def map_action(step: TraceStep, ledger: ChannelLedger) -> ScheduleEvent:
    """Traduce una acción de la traza a su evento según la tabla de correspondencia."""
    action = step.action
    params = tuple(int(p) for p in action.params)
    if action.name in DELIVERY_ACTIONS:
        pair = (params[0], action.actor)
        msg_id = ledger.head(pair)
        if msg_id is None:
            raise ScheduleError("Entrega sin mensaje en el canal", paso=step.index, accion=str(action))
        return ScheduleEvent(index=step.index, kind=EventKind.DELIVER, node=action.actor,
                             msg_id=msg_id, source_action=str(action))
    if action.name in FIRE_ACTIONS:
        return ScheduleEvent(index=step.index, kind=EventKind.FIRE, node=action.actor,
                             local_action=FIRE_ACTIONS[action.name], params=params, source_action=str(action))
    if action.name in ENVIRONMENT_EVENTS:
        return ScheduleEvent(index=step.index, kind=ENVIRONMENT_EVENTS[action.name], node=action.actor,
                             params=params, source_action=str(action))
    raise ScheduleError(f"Acción sin correspondencia en el harness: {action.name}", paso=step.index)


def extract_schedule(trace: Trace, cfg: ExploreConfig) -> EventSchedule:
    """
    Re-ejecuta la traza en el modelo (verificando digests antes de tocar ningún nodo) y
    construye el calendario junto con el estado esperado tras cada paso.
    """
    if trace.model not in REPLAYABLE_MODELS:
        raise ScheduleError(
            f"Las trazas del modelo {trace.model.value} no se reproducen en el harness",
            modelos=[m.value for m in REPLAYABLE_MODELS],
        )
    model = build_model(trace.model, cfg)
    states = replay_trace(model, trace)
    initial = states[0]

    ledger = ChannelLedger()
    ledger.advance(dataclasses.replace(initial, channels=()), initial)
    events, expected = [], []
    for step, before, after in zip(trace.steps, states, states[1:]):
        event = map_action(step, ledger)
        popped = (int(step.action.params[0]), step.action.actor) if event.kind is EventKind.DELIVER else None
        ledger.advance(before, after, popped)
        events.append(event)
        expected.append(ExpectedStep(
            servers={s.id: project_model_server(s) for s in after.servers},
            network=ledger.snapshot(),
        ))
    logger.info(f"Calendario extraído: {len(events)} eventos del modelo {trace.model.value}")
    return EventSchedule(trace.model, cfg, initial, tuple(events), tuple(expected))
