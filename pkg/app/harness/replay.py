"""
Controlador del replay de conformidad.

Es dueño de la red simulada y de los nodos, dispara los eventos estrictamente en orden y,
tras cada uno, compara la proyección de cada nodo y los mensajes en vuelo con lo que el
modelo registró. Se detiene en la primera divergencia.
"""
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

from app.core.error_handlers import ScheduleError
from app.harness.node import NodeOptions, ZabNode
from app.harness.schedule import EventSchedule, ExpectedStep, extract_schedule
from app.harness.simnet import NetworkDivergence, SimNet
from app.models.state import ClusterState
from app.models.zab import Zxid
from app.schemas.conformance import DOWN, PROJECTION_FIELDS, ConformanceReport, Divergence, ScheduleEvent
from app.schemas.enums import EventKind, NodeFault, Role
from app.services.trace_io import read_trace

logger = logging.getLogger(__name__)


def project_node_state(node: ZabNode):
    """(role, phase, acceptedEpoch, currentEpoch, history, lastCommitted) del nodo, o DOWN."""
    return node.project()


class ReplayController:
    def __init__(self, schedule: EventSchedule, faults: Iterable[NodeFault] = ()):
        cfg = schedule.cfg
        self.schedule = schedule
        self.faults = sorted(set(faults), key=lambda f: f.value)
        self.options = NodeOptions(
            n=cfg.n_servers,
            quorum_rule=cfg.quorum_rule,
            mutations=frozenset(cfg.mutations),
            snapshot_boundary=Zxid(*cfg.snapshot_boundary) if cfg.snapshot_boundary else None,
            faults=frozenset(self.faults),
        )
        self.net = SimNet()
        self.nodes: Dict[int, ZabNode] = {i: ZabNode(i, self.options, self.net) for i in range(1, cfg.n_servers + 1)}
        self.oracle: Optional[int] = None
        self.proposals = 0
        self.records: List[str] = []
        self._seed(schedule.initial)

    def _seed(self, state: ClusterState) -> None:
        """Arranca los nodos desde el estado inicial de la traza (fresco o sembrado por el modelo de prueba)."""
        if state.channels:
            raise ScheduleError("El estado inicial tiene mensajes en vuelo; no se puede sembrar la red")
        for s in state.servers:
            self.nodes[s.id].restore(
                accepted_epoch=s.accepted_epoch,
                current_epoch=s.current_epoch,
                history=list(s.history.entries),
                last_committed=s.last_committed,
                down=s.crashed,
                role=s.role,
                phase=s.phase,
                leader=s.leader,
                info_sent=s.info_sent,
                connections={f.id for f in state.servers if f.role is Role.FOLLOWING and f.leader == s.id},
                registered=set(s.cepoch_recv),
                acked_epoch=set(s.acke_recv),
                synced=set(s.ackld_recv),
                pending={z: set(acks) for z, acks in s.ack_recv},
                new_epoch=s.new_epoch,
                epoch_max=s.epoch_max,
                learners=dict(s.learners),
                sync_queue=set(s.sync_pending),
                syncing=dict(s.syncing),
            )
        self.net.partitions = set(state.partitions)
        self.oracle = state.oracle
        self.proposals = len(state.proposed)

    # ==========================================
    # EVENTOS
    # ==========================================

    def fire(self, event: ScheduleEvent) -> None:
        if event.kind is EventKind.DELIVER:
            packet = self.net.deliver(event.msg_id)
            self.nodes[packet.dst].receive(packet)
        elif event.kind is EventKind.FIRE:
            getattr(self, f"_fire_{event.local_action}")(event)
        elif event.kind is EventKind.CRASH:
            self.nodes[event.node].crash()
        elif event.kind is EventKind.REJOIN:
            self.nodes[event.node].rejoin()
        elif event.kind is EventKind.PARTITION:
            a, b = event.params
            self.net.partition(a, b, connected=self._linked(a, b) or self._linked(b, a))
        elif event.kind is EventKind.RECONNECT:
            self.net.reconnect(*event.params)
        if self.oracle is not None:
            leader = self.nodes[self.oracle]
            if leader.down or leader.role is not Role.LEADING:
                self.oracle = None

    def _linked(self, follower: int, leader: int) -> bool:
        node = self.nodes[follower]
        return node.role is Role.FOLLOWING and node.leader == leader

    def _fire_elect(self, event: ScheduleEvent) -> None:
        group = list(event.params)
        winner = max(group, key=lambda i: self.nodes[i].vote())
        self.nodes[winner].become_leader()
        for f in sorted(set(group) - {winner}):
            self.nodes[f].follow(winner)
            self.net.connect(f, winner)
        self.oracle = winner

    def _fire_follow_leader(self, event: ScheduleEvent) -> None:
        self.nodes[event.node].follow(self.oracle)
        self.net.connect(event.node, self.oracle)

    def _fire_send_followerinfo(self, event: ScheduleEvent) -> None:
        self.nodes[event.node].send_followerinfo()

    def _fire_sync_follower(self, event: ScheduleEvent) -> None:
        self.nodes[event.node].sync_follower(event.params[0])

    def _fire_propose(self, event: ScheduleEvent) -> None:
        # Cliente abstracto único: los valores se numeran en orden de propuesta
        self.proposals += 1
        self.nodes[event.node].propose(self.proposals)

    def _fire_establish(self, event: ScheduleEvent) -> None:
        leader = event.node
        group = frozenset(event.params)
        epoch = max(self.nodes[i].accepted_epoch for i in group) + 1
        learners = {}
        for f in sorted(group - {leader}):
            self.nodes[f].adopt_leader(leader, epoch)
            learners[f] = self.nodes[f].last_zxid()
        self.nodes[leader].establish(group, epoch, learners)
        self.oracle = leader

    def _fire_join(self, event: ScheduleEvent) -> None:
        leader = self.nodes[self.oracle]
        node = self.nodes[event.node]
        node.adopt_leader(leader.id, leader.new_epoch)
        self.net.connect(node.id, leader.id)
        leader.admit(node.id, node.last_zxid())

    # ==========================================
    # CONFORMIDAD
    # ==========================================

    def compare(self, expected: ExpectedStep) -> Optional[Divergence]:
        for node_id in sorted(self.nodes):
            model_view = expected.servers[node_id]
            node_view = project_node_state(self.nodes[node_id])
            if model_view == DOWN or node_view == DOWN:
                if model_view != node_view:
                    return Divergence(field_path=f"servers[{node_id}]", model_value=str(model_view),
                                      node_value=str(node_view), message="Estado de caída distinto")
                continue
            for name in PROJECTION_FIELDS:
                if model_view[name] != node_view[name]:
                    return Divergence(field_path=f"servers[{node_id}].{name}",
                                      model_value=model_view[name], node_value=node_view[name])
        in_flight = self.net.snapshot()
        for chan in sorted(set(expected.network) | set(in_flight)):
            want, got = expected.network.get(chan, []), in_flight.get(chan, [])
            if want != got:
                return Divergence(field_path=f"network[{chan}]", model_value=str(want), node_value=str(got),
                                  message="Mensajes en vuelo distintos a los que predice el modelo")
        return None

    def run(self) -> ConformanceReport:
        for event, expected in zip(self.schedule.events, self.schedule.expected):
            try:
                self.fire(event)
                divergence = self.compare(expected)
            except NetworkDivergence as exc:
                pair = exc.msg_id.partition("#")[0]
                divergence = Divergence(field_path=f"network[{pair}]", model_value=exc.expected,
                                        node_value=exc.actual, message=str(exc))
            if divergence is not None:
                self.records.append(f"paso {event.index}: {event} <- {event.source_action} DIVERGE "
                                    f"{divergence.field_path} modelo={divergence.model_value} "
                                    f"nodo={divergence.node_value}")
                logger.warning(f"Divergencia en el paso {event.index} ({event}): {divergence.field_path}")
                return ConformanceReport(steps_checked=event.index, first_divergence=event.index,
                                         detail=divergence, faults=self.faults, event=str(event))
            self.records.append(f"paso {event.index}: {event} <- {event.source_action} ok")
        logger.info(f"Replay conforme: {len(self.schedule)} pasos")
        return ConformanceReport(steps_checked=len(self.schedule), faults=self.faults)


def run_schedule(schedule: EventSchedule, faults: Iterable[NodeFault] = ()) -> ConformanceReport:
    """Reproduce el calendario sobre un clúster de nodos recién creado."""
    return ReplayController(schedule, faults).run()


def replay_trace_file(path: Path, faults: Iterable[NodeFault] = ()) -> Tuple[ConformanceReport, List[str], EventSchedule]:
    """Lee, valida y reproduce un archivo de traza. Errores de integridad antes de crear nodos."""
    trace, cfg = read_trace(path)
    schedule = extract_schedule(trace, cfg)
    controller = ReplayController(schedule, faults)
    report = controller.run()
    return report, controller.records, schedule
