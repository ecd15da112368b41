import dataclasses

import pytest

from app.core.error_handlers import InternalConsistencyError, UsageError
from app.models.catalog import MUTATION_CATALOG, apply_mutation, build_model, parse_mutation
from app.models.ipa import Seed, family_histories, history_families
from app.models.toy import ToyCounterModel
from app.models.zab import Zxid
from app.schemas.enums import InvariantId, ModelName, MutationId, Phase, Role, TerminationReason
from app.schemas.explore import ExploreConfig
from app.services.explorer import check_bfs
from app.services.hunt import hunt
from tests.helpers import mutation_config

# --- Tests del modelo de prueba ---

def test_familias_de_historiales():
    assert list(history_families(0)) == [(0, 0, 0)]
    assert list(history_families(1)) == [(0, 0, 0), (0, 0, 1), (1, 1, 0), (1, 0, 1)]


def test_historiales_de_una_familia():
    """Prueba que la rama de época 2 se construye sobre el prefijo común de época 1."""
    candidates, main_line, e2_start = family_histories(2, 1, 1)
    assert [str(h) for h in candidates] == ["[]", "[(1,1)]", "[(1,1),(1,2)]", "[(1,1),(2,1)]"]
    assert [str(t.zxid) for t in main_line] == ["(1,1)", "(2,1)"]
    assert e2_start == 3


def test_estados_iniciales_sin_historial():
    cfg = ExploreConfig(n_servers=3, ipa_max_history=0, max_transactions=1)
    model = build_model(ModelName.TEST, cfg)
    states = model.init_states()
    # un líder por cada quórum posible: {1,2}, {1,3}, {2,3}, {1,2,3}
    assert len(states) == 4
    for state in states:
        leaders = [s for s in state.servers if s.role is Role.LEADING]
        assert len(leaders) == 1
        assert leaders[0].phase is Phase.SYNC
        assert leaders[0].current_epoch == 1
        assert model.violated_invariants(state) == []


def test_estados_iniciales_con_historiales_divergentes():
    """Prueba que con historiales de hasta dos entradas aparecen logs de distintas épocas."""
    cfg = ExploreConfig(n_servers=3, ipa_max_history=2, max_transactions=0)
    model = build_model(ModelName.TEST, cfg)
    states = model.init_states()
    assert len(states) > 20
    epochs_seen = {s.history.last_zxid().epoch for state in states for s in state.servers}
    assert {0, 1, 2} <= epochs_seen
    assert all(model.violated_invariants(state) == [] for state in states)


def test_estados_iniciales_sin_mutaciones_consistentes():
    for history in (0, 1, 2):
        cfg = ExploreConfig(n_servers=3, ipa_max_history=history, max_transactions=0)
        model = build_model(ModelName.TEST, cfg)
        for state in model.init_states():
            assert model.violated_invariants(state) == []


def _inconsistent_seed(model):
    """Semilla con un servidor que confirmó una entrada que no está en su log."""
    base = model.initial_cluster()
    broken = dataclasses.replace(base.servers[0], last_committed=Zxid(1, 1))
    return Seed((0, 0, 0), (0, 0, 0), dataclasses.replace(base, servers=(broken,) + base.servers[1:]))


def test_estado_inicial_inconsistente_aborta(monkeypatch):
    """Prueba que sin mutaciones un estado inicial que viola invariantes es un error interno."""
    model = build_model(ModelName.TEST, ExploreConfig(n_servers=3, ipa_max_history=0))
    monkeypatch.setattr(model, "seeds", lambda: iter([_inconsistent_seed(model)]))
    with pytest.raises(InternalConsistencyError):
        model.init_states()


def test_estado_inicial_inconsistente_se_conserva_con_mutaciones(monkeypatch):
    cfg = ExploreConfig(n_servers=3, ipa_max_history=0, mutations=[MutationId.COMMIT_BEFORE_QUORUM])
    model = build_model(ModelName.TEST, cfg)
    monkeypatch.setattr(model, "seeds", lambda: iter([_inconsistent_seed(model)]))
    states = model.init_states()
    assert len(states) == 4
    assert all(InvariantId.COMMITTED_WITHIN_HISTORY in model.violated_invariants(s) for s in states)


@pytest.mark.slow
def test_modelo_de_prueba_correcto_sin_violaciones():
    cfg = ExploreConfig(n_servers=3, ipa_max_history=1, max_transactions=1, time_limit_secs=600)
    report = check_bfs(build_model(ModelName.TEST, cfg), cfg)
    assert report.terminated_reason is TerminationReason.EXHAUSTED, report.violated_invariants()


# --- Tests del catálogo de mutaciones ---

def test_catalogo_completo():
    assert set(MUTATION_CATALOG) == set(MutationId)
    for info in MUTATION_CATALOG.values():
        assert info.description
        assert list(info.symptom)


def test_mutacion_desconocida():
    with pytest.raises(UsageError):
        parse_mutation("NO_EXISTE")


def test_modelo_desconocido():
    with pytest.raises(UsageError):
        build_model("raft", ExploreConfig())


def test_apply_mutation_no_altera_el_original():
    base = build_model(ModelName.TEST, ExploreConfig(n_servers=2, ipa_max_history=0))
    mutated = apply_mutation(base, "WEAK_QUORUM")
    assert mutated.has(MutationId.WEAK_QUORUM)
    assert not base.has(MutationId.WEAK_QUORUM)
    assert type(mutated) is type(base)


def test_apply_mutation_sobre_el_juguete():
    with pytest.raises(UsageError):
        apply_mutation(ToyCounterModel(), MutationId.WEAK_QUORUM)


# --- Tests de detección: cada mutación viola al menos uno de sus síntomas ---

WEAK_CFG = ExploreConfig(n_servers=2, ipa_max_history=0, max_transactions=0, mutations=[MutationId.WEAK_QUORUM])


def test_quorum_debil_detectado_a_profundidad_uno():
    report = check_bfs(build_model(ModelName.TEST, WEAK_CFG), WEAK_CFG)
    assert report.violated_invariants() == [InvariantId.SINGLE_ESTABLISHED_LEADER]
    assert report.violations[0].depth == 1


DETECTION_CASES = [
    (MutationId.SYNC_SKIP_TRUNC, dict(ipa_max_history=2, max_transactions=0)),
    (MutationId.COMMIT_BEFORE_QUORUM, dict(ipa_max_history=0, max_transactions=1, max_crashes=1)),
    (MutationId.RECOVER_RACE_RAW, dict(ipa_max_history=0, max_transactions=1)),
    (MutationId.DIFF_FROM_UNCOMMITTED, dict(ipa_max_history=0, max_transactions=1, max_crashes=1)),
]


@pytest.mark.slow
@pytest.mark.parametrize("mutation, budgets", DETECTION_CASES, ids=[m.value for m, _ in DETECTION_CASES])
def test_mutacion_detectada(mutation, budgets):
    cfg = ExploreConfig(n_servers=3, mutations=[mutation], collect_all=True, time_limit_secs=900, **budgets)
    report = check_bfs(build_model(ModelName.TEST, cfg), cfg)
    found = set(report.violated_invariants())
    expected = set(MUTATION_CATALOG[mutation].symptom)
    assert found & expected, f"{mutation.value}: se esperaba {expected}, se obtuvo {found}"


@pytest.mark.slow
@pytest.mark.parametrize("budgets", [b for _, b in DETECTION_CASES])
def test_misma_configuracion_sin_mutacion_no_viola(budgets):
    cfg = ExploreConfig(n_servers=3, time_limit_secs=900, **budgets)
    report = check_bfs(build_model(ModelName.TEST, cfg), cfg)
    assert report.terminated_reason is TerminationReason.EXHAUSTED, report.violated_invariants()


# --- Tests de la cacería ---

def test_caceria_en_ambos_modos():
    report = hunt(build_model(ModelName.TEST, WEAK_CFG), WEAK_CFG)
    assert report.bfs.has_violation
    assert report.simulation.has_violation
    assert report.bfs.violations[0].depth <= report.simulation.violations[0].depth


def test_caceria_reproducible():
    cfg = WEAK_CFG.model_copy(update={"seed": 99})
    first = hunt(build_model(ModelName.TEST, cfg), cfg)
    second = hunt(build_model(ModelName.TEST, cfg), cfg)
    assert first.comparable() == second.comparable()


@pytest.mark.slow
def test_caceria_sobre_todo_el_catalogo():
    """Prueba que cada mutación cae en ambos modos y que el BFS nunca da una traza más larga."""
    faster = []
    for mutation in MUTATION_CATALOG:
        cfg = mutation_config(mutation, max_walks=20_000)
        report = hunt(build_model(ModelName.TEST, cfg), cfg)
        assert report.bfs.has_violation, mutation.value
        assert report.simulation.has_violation, mutation.value
        assert report.bfs.violations[0].depth <= report.simulation.violations[0].depth, mutation.value
        if report.simulation.wall_time_ms < report.bfs.wall_time_ms:
            faster.append(mutation)
    assert faster, "la simulación nunca llegó antes que el BFS"


# --- Tests por invariante ---

@pytest.mark.slow
def test_commit_antes_del_quorum_viola_cada_sintoma_por_separado():
    """Prueba que la completitud del log del líder cae a una profundidad no mayor que la lectura monótona."""
    depths = {}
    for invariant in (InvariantId.LEADER_LOG_COMPLETENESS, InvariantId.MONOTONIC_READ):
        cfg = mutation_config(MutationId.COMMIT_BEFORE_QUORUM, invariants=[invariant])
        report = check_bfs(build_model(ModelName.TEST, cfg), cfg)
        assert report.violated_invariants() == [invariant]
        depths[invariant] = report.violations[0].depth
    assert depths[InvariantId.LEADER_LOG_COMPLETENESS] <= depths[InvariantId.MONOTONIC_READ]
