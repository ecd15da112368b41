import pytest

from app.core.error_handlers import ContractError
from app.models.base import ActionInstance
from app.models.catalog import build_model
from app.models.symmetry import rename_cluster
from app.models.zab import ZERO, Zxid
from app.schemas.enums import (
    InvariantId, MessageKind, ModelName, MutationId, Phase, QuorumRule, Role, StoreMode, TerminationReason,
)
from app.schemas.explore import ExploreConfig
from app.services.explorer import check_bfs, keyer_for


def act(name, actor=None, *params):
    return ActionInstance(name, actor, tuple(params))


def run(model, state, *actions):
    """Aplica las acciones exigiendo que cada una esté habilitada y que no rompa invariantes."""
    for action in actions:
        assert action in model.enabled(state), f"{action} no habilitada; habilitadas: {[str(a) for a in model.enabled(state)]}"
        succ = model.apply(state, action)
        assert model.violated_invariants(succ) == [], f"invariante rota tras {action}"
        assert model.step_violations(state, action, succ) == []
        state = succ
    return state


ESTABLISH = (
    act("oracle_update_leader", 1),
    act("oracle_follow_leader", 2),
    act("leader_handle_cepoch", 1, 2),
    act("follower_handle_newepoch", 2, 1),
    act("leader_handle_ackepoch", 1, 2),
    act("follower_handle_newleader", 2, 1),
    act("leader_handle_ackld", 1, 2),
    act("follower_handle_commitld", 2, 1),
)

BROADCAST_ONE = (
    act("leader_propose", 1),
    act("follower_handle_propose", 2, 1),
    act("leader_handle_ack", 1, 2),
    act("follower_handle_commit", 2, 1),
)


@pytest.fixture
def established(protocol_model):
    state = run(protocol_model, protocol_model.init_states()[0], *ESTABLISH)
    return protocol_model, state


# --- Tests del establecimiento de época ---

def test_estado_inicial(protocol_model):
    """Prueba que el estado inicial tiene a todos en LOOKING y sólo permite consultar al oráculo."""
    (state,) = protocol_model.init_states()
    assert all(s.role is Role.LOOKING for s in state.servers)
    assert state.txn_left == 1
    assert {a.name for a in protocol_model.enabled(state)} == {"oracle_update_leader"}


def test_establecimiento_con_quorum(established):
    model, state = established
    leader, follower, idle = state.servers
    assert leader.role is Role.LEADING and leader.phase is Phase.BROADCAST
    assert leader.current_epoch == leader.accepted_epoch == 1
    assert follower.role is Role.FOLLOWING and follower.phase is Phase.BROADCAST
    assert follower.current_epoch == 1
    assert idle.role is Role.LOOKING
    assert state.oracle == 1
    assert state.in_flight() == 0


def test_newepoch_sin_quorum_no_se_envia(protocol_model):
    state = run(protocol_model, protocol_model.init_states()[0], act("oracle_update_leader", 1))
    assert state.server(1).new_epoch == 0
    assert state.channel(1, 2) == ()


def test_broadcast_confirma_con_quorum(established):
    """Prueba que una propuesta se confirma tras el ACK del seguidor y llega a su log."""
    model, state = established
    state = run(model, state, *BROADCAST_ONE)
    leader, follower = state.server(1), state.server(2)
    assert leader.last_committed == Zxid(1, 1)
    assert follower.last_committed == Zxid(1, 1)
    assert [t.value for t in follower.committed()] == [1]
    assert state.txn_left == 0
    assert model.enabled(state) == [act("oracle_follow_leader", 3)]


def test_propuesta_antes_del_ack_no_esta_confirmada(established):
    model, state = established
    state = run(model, state, act("leader_propose", 1))
    assert state.server(1).last_committed == ZERO
    assert [m.kind for m in state.channel(1, 2)] == [MessageKind.PROPOSE]


def test_seguidor_tardio_se_recupera(established):
    """Prueba que un seguidor que llega en BROADCAST recibe el historial completo por NEWLEADER."""
    model, state = established
    state = run(model, state, *BROADCAST_ONE)
    state = run(
        model, state,
        act("oracle_follow_leader", 3),
        act("leader_handle_cepoch", 1, 3),
        act("follower_handle_newepoch", 3, 1),
        act("leader_handle_recovering_follower", 1, 3),
        act("follower_handle_newleader", 3, 1),
        act("leader_handle_ackld", 1, 3),
        act("follower_handle_commitld", 3, 1),
    )
    late = state.server(3)
    assert late.phase is Phase.BROADCAST
    assert late.history == state.server(1).history
    assert late.last_committed == Zxid(1, 1)


# --- Tests de fallos ---

def test_timeout_deja_al_lider_sin_quorum():
    cfg = ExploreConfig(n_servers=3, max_transactions=1, max_timeouts=1)
    model = build_model(ModelName.PROTOCOL, cfg)
    state = run(model, model.init_states()[0], *ESTABLISH)
    state = run(model, state, act("timeout", 1, 2))
    assert all(s.role is Role.LOOKING for s in state.servers)
    assert state.oracle is None
    assert state.timeouts_left == 0
    assert state.in_flight() == 0
    # el estado durable sobrevive
    assert state.server(1).current_epoch == 1


def test_restart_del_seguidor():
    cfg = ExploreConfig(n_servers=3, max_transactions=1, max_restarts=1)
    model = build_model(ModelName.PROTOCOL, cfg)
    state = run(model, model.init_states()[0], *ESTABLISH, *BROADCAST_ONE)
    state = run(model, state, act("restart", 2))
    follower = state.server(2)
    assert follower.role is Role.LOOKING
    assert follower.last_committed == Zxid(1, 1)
    assert state.server(1).role is Role.LOOKING


def test_accion_desconocida():
    model = build_model(ModelName.PROTOCOL, ExploreConfig())
    with pytest.raises(ContractError):
        model.apply(model.init_states()[0], act("fle_round", None, 1, 2))


# --- Tests de exploración exhaustiva ---

def test_bfs_sin_fallos_no_viola_invariantes(protocol_model, small_cfg):
    report = check_bfs(protocol_model, small_cfg)
    assert report.terminated_reason is TerminationReason.EXHAUSTED, report.violated_invariants()
    assert report.distinct_states > 50


@pytest.mark.slow
def test_bfs_con_timeout_y_restart():
    cfg = ExploreConfig(n_servers=3, max_transactions=1, max_timeouts=1, max_restarts=1, time_limit_secs=600)
    report = check_bfs(build_model(ModelName.PROTOCOL, cfg), cfg)
    assert report.terminated_reason is TerminationReason.EXHAUSTED, report.violated_invariants()


def test_quorum_debil_con_dos_servidores():
    """Prueba que con n=2 y quórum débil dos líderes se establecen en la misma época."""
    cfg = ExploreConfig(n_servers=2, max_transactions=0, max_timeouts=1, mutations=[MutationId.WEAK_QUORUM])
    report = check_bfs(build_model(ModelName.PROTOCOL, cfg), cfg)
    assert InvariantId.SINGLE_ESTABLISHED_LEADER in report.violated_invariants()


# --- Tests de reducción por simetría ---

def test_estados_renombrados_comparten_representante(established, small_cfg):
    """Prueba que una permutación de ids del mismo estado cae en la misma clave del almacén."""
    model, state = established
    keyer = keyer_for(model, small_cfg.model_copy(update={"store_mode": StoreMode.EXACT_SET}))
    renamed = rename_cluster(state, {1: 2, 2: 3, 3: 1})
    assert renamed != state
    assert renamed.server(2).role is Role.LEADING
    assert keyer(renamed) == keyer(state)


def test_simetria_sin_cambio_de_veredicto(protocol_model, small_cfg):
    con = check_bfs(protocol_model, small_cfg)
    sin = check_bfs(protocol_model, small_cfg.model_copy(update={"symmetry": False}))
    assert con.terminated_reason is sin.terminated_reason is TerminationReason.EXHAUSTED
    assert con.distinct_states < sin.distinct_states
    assert con.diameter == sin.diameter


def test_simetria_solo_con_quorums_que_se_intersecan():
    def supports(**kwargs):
        return build_model(ModelName.PROTOCOL, ExploreConfig(**kwargs)).supports_symmetry()

    assert supports(n_servers=3)
    assert supports(n_servers=3, mutations=[MutationId.WEAK_QUORUM])
    assert not supports(n_servers=4, mutations=[MutationId.WEAK_QUORUM])
    assert not supports(n_servers=4, quorum_rule=QuorumRule.WEAK_HALF)
    assert not supports(n_servers=3, mutations=[MutationId.SYNC_SKIP_TRUNC])


@pytest.mark.slow
def test_simetria_mismo_veredicto_con_fallos():
    cfg = ExploreConfig(n_servers=3, max_transactions=1, max_timeouts=1, max_restarts=1, time_limit_secs=600)
    model = build_model(ModelName.PROTOCOL, cfg)
    con = check_bfs(model, cfg)
    sin = check_bfs(model, cfg.model_copy(update={"symmetry": False}))
    assert con.terminated_reason is sin.terminated_reason is TerminationReason.EXHAUSTED
    assert con.distinct_states <= sin.distinct_states


# --- Tests de quórum débil en el protocolo ---

WEAK_PROTOCOL = dict(max_transactions=1, max_timeouts=2, max_restarts=1,
                     mutations=[MutationId.WEAK_QUORUM], time_limit_secs=1800)


@pytest.mark.slow
def test_quorum_debil_con_cuatro_servidores():
    """Prueba que con n par el quórum débil deja establecer dos líderes en la misma época."""
    cfg = ExploreConfig(n_servers=4, **WEAK_PROTOCOL)
    report = check_bfs(build_model(ModelName.PROTOCOL, cfg), cfg)
    assert report.violated_invariants() == [InvariantId.SINGLE_ESTABLISHED_LEADER]
    assert report.violations[0].depth <= 14


@pytest.mark.slow
def test_quorum_debil_con_tres_servidores_no_viola():
    """Control: con n impar la regla débil coincide con la mayoría y el espacio se agota sin violaciones."""
    cfg = ExploreConfig(n_servers=3, **WEAK_PROTOCOL)
    report = check_bfs(build_model(ModelName.PROTOCOL, cfg), cfg)
    assert report.terminated_reason is TerminationReason.EXHAUSTED, report.violated_invariants()


# --- Tests de exploración con dos transacciones ---

@pytest.mark.slow
def test_mayoria_dos_transacciones_agotada_y_reproducible():
    cfg = ExploreConfig(n_servers=3, max_transactions=2, max_timeouts=2, max_restarts=1, time_limit_secs=1800)
    model = build_model(ModelName.PROTOCOL, cfg)
    first = check_bfs(model, cfg)
    assert first.terminated_reason is TerminationReason.EXHAUSTED, first.violated_invariants()
    second = check_bfs(model, cfg.model_copy(update={"workers": 4}))
    assert first.comparable() == second.comparable()
