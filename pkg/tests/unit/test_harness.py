"""
Replay de conformidad: los nodos del harness deben reproducir paso a paso lo que registran
los modelos de sistema y de prueba, y cada defecto plantado debe detectarse en su paso.
"""
import pytest

from app.core.error_handlers import ScheduleError
from app.harness.node import NodeOptions, ZabNode
from app.harness.replay import ReplayController, project_node_state, replay_trace_file, run_schedule
from app.harness.schedule import extract_schedule
from app.harness.simnet import Packet, SimNet
from app.models.base import ActionInstance
from app.models.catalog import build_model
from app.models.zab import Txn, Zxid
from app.schemas.conformance import DOWN
from app.schemas.enums import EventKind, MessageKind, ModelName, MutationId, NodeFault, Role
from app.schemas.explore import ExploreConfig
from app.services.explorer import check_bfs
from app.services.trace_io import write_trace
from tests.helpers import MUTATION_BUDGETS, find_trace, make_trace, mutation_config, seeded_walks


def act(name, actor=None, *params):
    return ActionInstance(name, actor, tuple(params))


SYSTEM_ESTABLISH = [
    act("fle_round", None, 1, 2),
    act("follower_send_followerinfo", 1),
    act("leader_validate_follower", 2, 1),
    act("follower_handle_newepoch", 1, 2),
    act("leader_handle_ackepoch", 2, 1),
    act("leader_decide_sync_mode", 2, 1),
    act("follower_apply_sync", 1, 2),
    act("follower_handle_newleader", 1, 2),
    act("leader_handle_ackld", 2, 1),
    act("follower_handle_commitld", 1, 2),
    act("leader_propose", 2),
    act("follower_handle_propose", 1, 2),
    act("leader_handle_ack", 2, 1),
    act("follower_handle_commit", 1, 2),
]


def _replay(trace, cfg, faults=()):
    return run_schedule(extract_schedule(trace, cfg), faults)


@pytest.fixture
def system_trace(system_model, small_cfg):
    return make_trace(system_model, small_cfg, system_model.init_states()[0], SYSTEM_ESTABLISH)


# --- Tests del runtime de nodos ---

def test_proyeccion_de_un_nodo_nuevo():
    node = ZabNode(1, NodeOptions(n=3), SimNet())
    assert project_node_state(node) == {
        "role": "LOOKING", "phase": "NONE", "acceptedEpoch": "0", "currentEpoch": "0",
        "history": "[]", "lastCommitted": "(0,0)",
    }


def test_nodo_aplica_diff():
    net = SimNet()
    leader, follower = ZabNode(1, NodeOptions(n=2), net), ZabNode(2, NodeOptions(n=2), net)
    follower.follow(1)
    follower.receive(Packet("1->2#1", 1, 2, MessageKind.DIFF, entries=(Txn(Zxid(2, 1), 7),)))
    view = project_node_state(follower)
    assert view["history"] == "[(2,1)]"
    assert view["phase"] == "SYNC"
    assert leader.role is Role.LOOKING


def test_nodo_caido_se_proyecta_como_down():
    node = ZabNode(1, NodeOptions(n=3), SimNet())
    node.crash()
    assert project_node_state(node) == DOWN
    node.rejoin()
    assert project_node_state(node)["role"] == "LOOKING"


def test_mensaje_de_un_desconocido_se_descarta():
    net = SimNet()
    node = ZabNode(2, NodeOptions(n=3), net)
    ZabNode(1, NodeOptions(n=3), net)
    node.follow(1)
    node.receive(Packet("3->2#1", 3, 2, MessageKind.COMMIT, zxid=Zxid(1, 1)))
    assert node.last_committed == Zxid(0, 0)


def test_quorum_de_los_nodos():
    assert not NodeOptions(n=4).is_quorum({1, 2})
    assert NodeOptions(n=4, mutations=frozenset({MutationId.WEAK_QUORUM})).is_quorum({1, 2})


# --- Tests de extracción del calendario ---

def test_extraccion_del_calendario(system_trace, small_cfg):
    """Prueba que cada acción del modelo produce exactamente un evento con el id de mensaje esperado."""
    schedule = extract_schedule(system_trace, small_cfg)
    assert len(schedule) == len(system_trace)
    events = schedule.events
    assert events[0].kind is EventKind.FIRE and events[0].local_action == "elect"
    assert events[0].params == (1, 2)
    assert events[1].local_action == "send_followerinfo"
    assert events[2].kind is EventKind.DELIVER and events[2].msg_id == "1->2#1"
    assert events[3].msg_id == "2->1#1"
    assert events[5].local_action == "sync_follower" and events[5].params == (1,)
    # el DIFF sale antes que el NEWLEADER por el mismo canal
    assert events[6].msg_id == "2->1#2"
    assert events[7].msg_id == "2->1#3"
    assert schedule.expected[5].network == {"2->1": ["2->1#2", "2->1#3"]}
    assert schedule.expected[-1].servers[1]["lastCommitted"] == "(1,1)"


def test_traza_del_modelo_de_protocolo_no_se_reproduce(protocol_model, small_cfg):
    trace = make_trace(protocol_model, small_cfg, protocol_model.init_states()[0],
                       [act("oracle_update_leader", 1)])
    with pytest.raises(ScheduleError):
        extract_schedule(trace, small_cfg)


def test_traza_vacia(system_model, small_cfg):
    trace = make_trace(system_model, small_cfg, system_model.init_states()[0], [])
    report = _replay(trace, small_cfg)
    assert report.conforms
    assert report.steps_checked == 0


# --- Tests de conformidad ---

def test_establecimiento_y_broadcast_conformes(system_trace, small_cfg):
    report = _replay(system_trace, small_cfg)
    assert report.conforms, report.summary()
    assert report.steps_checked == len(system_trace)


def test_replay_determinista(system_trace, small_cfg):
    schedule = extract_schedule(system_trace, small_cfg)
    a, b = ReplayController(schedule), ReplayController(schedule)
    assert a.run() == b.run()
    assert a.records == b.records
    assert all(r.endswith("ok") for r in a.records)


FAULT_CFG = ExploreConfig(n_servers=3, max_transactions=1, max_crashes=1, max_partitions=1)


def test_recorridos_con_fallos_conformes():
    model = build_model(ModelName.SYSTEM, FAULT_CFG)
    for trace in seeded_walks(model, FAULT_CFG.model_copy(update={"max_trace_len": 40}), 20):
        report = _replay(trace, FAULT_CFG)
        assert report.conforms, report.summary()


def test_recorridos_del_modelo_de_prueba_conformes():
    cfg = ExploreConfig(n_servers=3, ipa_max_history=2, max_transactions=1, max_crashes=1, max_trace_len=40)
    model = build_model(ModelName.TEST, cfg)
    for trace in seeded_walks(model, cfg, 15):
        report = _replay(trace, cfg)
        assert report.conforms, report.summary()


@pytest.mark.slow
def test_doscientos_recorridos_conformes():
    cfg = FAULT_CFG.model_copy(update={"max_trace_len": 60, "seed": 4242})
    model = build_model(ModelName.SYSTEM, cfg)
    for trace in seeded_walks(model, cfg, 200):
        report = _replay(trace, cfg)
        assert report.conforms, report.summary()


def test_contraejemplo_de_quorum_debil_se_reproduce(tmp_path):
    """Prueba que la traza de un contraejemplo del modelo se reproduce sin divergencias desde archivo."""
    cfg = ExploreConfig(n_servers=2, ipa_max_history=0, max_transactions=0, mutations=[MutationId.WEAK_QUORUM])
    report = check_bfs(build_model(ModelName.TEST, cfg), cfg)
    path = write_trace(tmp_path / "weak.trace", report.violations[0].trace, cfg)
    conformance, records, schedule = replay_trace_file(path)
    assert conformance.conforms, conformance.summary()
    assert len(records) == len(schedule) == 1



@pytest.mark.slow
@pytest.mark.parametrize("mutation", list(MUTATION_BUDGETS), ids=[m.value for m in MUTATION_BUDGETS])
def test_contraejemplo_de_cada_mutacion_se_reproduce(mutation, tmp_path):
    """Prueba que los nodos con la misma mutación reproducen el contraejemplo paso a paso."""
    cfg = mutation_config(mutation)
    report = check_bfs(build_model(ModelName.TEST, cfg), cfg)
    assert report.has_violation
    path = write_trace(tmp_path / f"{mutation.value}.trace", report.violations[0].trace, cfg)
    conformance, records, schedule = replay_trace_file(path)
    assert conformance.conforms, conformance.summary()
    assert len(records) == len(schedule) == len(report.violations[0].trace)

# --- Tests de defectos plantados: cada uno diverge en el paso que lo ejercita ---

def _is_trunc_applied(before, action, after):
    if action.name != "follower_apply_sync":
        return False
    src = int(action.params[0])
    head = before.channel(src, action.actor)[0]
    return head.kind is MessageKind.TRUNC and after.server(action.actor).role is Role.FOLLOWING


def _accepts_newepoch(before, action, after):
    return (action.name == "follower_handle_newepoch"
            and after.server(action.actor).accepted_epoch > before.server(action.actor).accepted_epoch)


def _commits_on_follower(before, action, after):
    return (action.name == "follower_handle_commit"
            and after.server(action.actor).last_committed > before.server(action.actor).last_committed)


def _applies_sync(before, action, after):
    return action.name == "follower_apply_sync"


PLANTED = [
    (NodeFault.BROKEN_TRUNCATE, ModelName.TEST, dict(n_servers=3, ipa_max_history=2, max_transactions=0),
     _is_trunc_applied, "history"),
    (NodeFault.STALE_ACCEPTED_EPOCH, ModelName.SYSTEM, dict(n_servers=3, max_transactions=1),
     _accepts_newepoch, "acceptedEpoch"),
    (NodeFault.LAZY_COMMIT, ModelName.TEST, dict(n_servers=2, ipa_max_history=0, max_transactions=1),
     _commits_on_follower, "lastCommitted"),
    (NodeFault.SKIP_SYNC_PHASE, ModelName.SYSTEM, dict(n_servers=3, max_transactions=1),
     _applies_sync, "phase"),
]


@pytest.mark.parametrize("fault, model_name, budgets, goal, field", PLANTED, ids=[p[0].value for p in PLANTED])
def test_defecto_plantado_detectado(fault, model_name, budgets, goal, field):
    cfg = ExploreConfig(**budgets)
    model = build_model(model_name, cfg)
    trace = find_trace(model, cfg, goal)
    assert trace is not None, "no se encontró una traza que ejercite el defecto"

    clean = _replay(trace, cfg)
    assert clean.conforms, clean.summary()

    report = _replay(trace, cfg, faults=[fault])
    assert report.first_divergence == len(trace), report.summary()
    assert report.detail.field_path.endswith(f".{field}")
    assert report.faults == [fault]
