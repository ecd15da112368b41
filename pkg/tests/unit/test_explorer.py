import pytest
from pydantic import ValidationError

from app.core.error_handlers import ContractError
from app.models.catalog import build_model
from app.models.toy import CounterState, GridToyModel, ToyCounterModel, WideToyModel
from app.schemas.enums import CheckMode, InvariantId, ModelName, StoreMode, TerminationReason
from app.schemas.explore import ExploreConfig
from app.services import explorer
from app.services.explorer import (
    PARALLEL_MIN_LEVEL, canonical_encode, check_bfs, fingerprint, run_check, simulate, walk_rng,
)
from app.services.trace_io import replay_trace

# --- Tests de codificación canónica y fingerprint ---

def test_fingerprint_no_depende_del_orden_de_iteracion():
    """Prueba que conjuntos y diccionarios iguales producen la misma codificación."""
    a = {"x": frozenset({3, 1, 2}), "y": (1, 2)}
    b = {"y": (1, 2), "x": frozenset({2, 3, 1})}
    assert canonical_encode(a) == canonical_encode(b)
    assert fingerprint(a) == fingerprint(b)


def test_fingerprint_distingue_tuplas_de_conjuntos():
    assert canonical_encode((1, 2)) != canonical_encode(frozenset({1, 2}))
    assert fingerprint(CounterState(1)) != fingerprint(CounterState(2))


def test_fingerprint_truncado_respeta_los_bits():
    for value in range(50):
        assert fingerprint(CounterState(value), bits=4) < 16


def test_tipo_sin_codificacion_canonica():
    with pytest.raises(ContractError):
        canonical_encode(object())


# --- Tests del BFS ---

def test_bfs_modelo_de_juguete_tres_estados():
    """Prueba que el contador módulo 3 se agota con 3 estados y diámetro 2."""
    report = check_bfs(ToyCounterModel(), ExploreConfig())
    assert report.terminated_reason is TerminationReason.EXHAUSTED
    assert report.distinct_states == 3
    assert report.states_explored == 3
    assert report.diameter == 2
    assert not report.has_violation


def test_bfs_violacion_a_la_profundidad_minima():
    """Prueba que sin módulo y con limit=3 la violación aparece con una traza de 3 pasos."""
    model = ToyCounterModel(modulus=None, limit=3)
    report = check_bfs(model, ExploreConfig())
    assert report.terminated_reason is TerminationReason.VIOLATION
    assert report.violated_invariants() == [InvariantId.TOY_BOUND]
    violation = report.violations[0]
    assert violation.depth == 3
    assert len(violation.trace) == 3
    states = replay_trace(model, violation.trace)
    assert states[-1] == CounterState(3)


def test_bfs_exacto_y_fingerprint_coinciden():
    """Prueba que el almacén exacto y el de fingerprints cuentan los mismos estados."""
    model = WideToyModel(size=400)
    exact = check_bfs(model, ExploreConfig(store_mode=StoreMode.EXACT_SET))
    hashed = check_bfs(model, ExploreConfig(store_mode=StoreMode.FINGERPRINT_SET))
    assert exact.distinct_states == hashed.distinct_states == 400
    assert exact.diameter == hashed.diameter


ZAB_STORE_CASES = [
    (ModelName.PROTOCOL, dict(n_servers=2, max_transactions=1, max_timeouts=1, max_restarts=1)),
    (ModelName.SYSTEM, dict(n_servers=2, max_transactions=1, max_crashes=1)),
]


@pytest.mark.parametrize("model_name, budgets", ZAB_STORE_CASES, ids=[m.value for m, _ in ZAB_STORE_CASES])
def test_exacto_y_fingerprint_coinciden_en_modelos_zab(model_name, budgets):
    cfg = ExploreConfig(**budgets)
    model = build_model(model_name, cfg)
    exact = check_bfs(model, cfg.model_copy(update={"store_mode": StoreMode.EXACT_SET}))
    hashed = check_bfs(model, cfg)
    assert exact.terminated_reason is hashed.terminated_reason is TerminationReason.EXHAUSTED
    assert exact.distinct_states == hashed.distinct_states
    assert exact.states_explored == hashed.states_explored
    assert exact.diameter == hashed.diameter


MONOTONE_CASES = [
    (ModelName.PROTOCOL, "max_transactions"),
    (ModelName.PROTOCOL, "max_timeouts"),
    (ModelName.PROTOCOL, "max_restarts"),
    (ModelName.SYSTEM, "max_transactions"),
    (ModelName.SYSTEM, "max_crashes"),
    (ModelName.SYSTEM, "max_partitions"),
    (ModelName.TEST, "max_crashes"),
]


@pytest.mark.parametrize("model_name, field", MONOTONE_CASES, ids=[f"{m.value}-{f}" for m, f in MONOTONE_CASES])
def test_subir_un_limite_no_reduce_los_estados(model_name, field):
    """Prueba que cada ejecución con un límite menor sigue siendo posible al subirlo."""
    base = ExploreConfig(n_servers=2, max_transactions=0, ipa_max_history=0)
    counts = []
    for bound in (0, 1):
        cfg = base.model_copy(update={field: bound})
        report = check_bfs(build_model(model_name, cfg), cfg)
        assert report.terminated_reason is TerminationReason.EXHAUSTED
        counts.append(report.distinct_states)
    assert counts[0] <= counts[1]


def test_bfs_fingerprint_truncado_colisiona():
    """Control negativo: con 4 bits el almacén no puede distinguir más de 16 estados."""
    report = check_bfs(WideToyModel(size=400), ExploreConfig(fingerprint_bits=4))
    assert report.distinct_states <= 16


def test_bfs_limite_de_estados():
    cfg = ExploreConfig(state_limit=10)
    report = check_bfs(ToyCounterModel(modulus=None, limit=10**9), cfg)
    assert report.terminated_reason is TerminationReason.STATE_LIMIT
    assert report.distinct_states >= 10


def test_bfs_rechaza_modo_simulacion():
    with pytest.raises(ContractError):
        check_bfs(ToyCounterModel(), ExploreConfig(mode=CheckMode.SIMULATION))


def test_bfs_filtra_invariantes():
    """Prueba que una invariante deshabilitada no detiene la exploración."""
    model = ToyCounterModel(modulus=None, limit=3)
    cfg = ExploreConfig(invariants=[InvariantId.TOY_BOUND], state_limit=20)
    assert check_bfs(model, cfg).has_violation
    cfg_sin = ExploreConfig(invariants=[], state_limit=20)
    assert check_bfs(model, cfg_sin).terminated_reason is TerminationReason.STATE_LIMIT


def test_bfs_workers_no_cambia_el_resultado():
    """Prueba que con niveles anchos el pool de procesos produce el mismo reporte que la corrida secuencial."""
    model = GridToyModel(side=120)
    assert 120 > PARALLEL_MIN_LEVEL
    uno = check_bfs(model, ExploreConfig(workers=1))
    cuatro = check_bfs(model, ExploreConfig(workers=4))
    assert uno.comparable() == cuatro.comparable()
    assert uno.distinct_states == 120 * 120
    assert uno.diameter == 2 * 119


def test_bfs_workers_misma_violacion_y_traza():
    model = GridToyModel(side=120, limit=100)
    uno = check_bfs(model, ExploreConfig(workers=1))
    dos = check_bfs(model, ExploreConfig(workers=2))
    assert uno.violations[0].depth == 100
    assert uno.comparable() == dos.comparable()


def test_bfs_workers_en_el_modelo_de_protocolo(small_cfg):
    model = build_model(ModelName.PROTOCOL, small_cfg)
    uno = check_bfs(model, small_cfg)
    tres = check_bfs(model, small_cfg.model_copy(update={"workers": 3}))
    assert uno.terminated_reason is TerminationReason.EXHAUSTED
    assert uno.comparable() == tres.comparable()


def test_niveles_anchos_se_expanden_en_el_pool(monkeypatch):
    """Prueba que los niveles anchos no se expanden en el proceso principal cuando hay workers."""
    calls = []
    original = explorer.expand_state

    def counting(*args):
        calls.append(1)
        return original(*args)

    monkeypatch.setattr(explorer, "expand_state", counting)
    report = check_bfs(GridToyModel(side=120), ExploreConfig(workers=2))
    assert report.states_explored == 120 * 120
    assert len(calls) < report.states_explored // 2


def test_workers_fuera_de_rango():
    with pytest.raises(ValidationError):
        ExploreConfig(workers=65)
    with pytest.raises(ValidationError):
        ExploreConfig(workers=0)


# --- Tests de simulación ---

def test_simulacion_determinista_por_semilla():
    """Prueba que dos simulaciones con la misma semilla producen el mismo reporte."""
    model = ToyCounterModel(modulus=None, limit=40)
    cfg = ExploreConfig(mode=CheckMode.SIMULATION, seed=7, max_trace_len=30, max_walks=25)
    first = simulate(model, cfg)
    second = simulate(model, cfg)
    assert first.comparable() == second.comparable()
    assert first.terminated_reason is TerminationReason.BUDGET
    assert first.walks == 25


def test_simulacion_encuentra_violacion():
    model = ToyCounterModel(modulus=None, limit=5)
    cfg = ExploreConfig(mode=CheckMode.SIMULATION, max_trace_len=10, max_walks=3)
    report = run_check(model, cfg)
    assert report.terminated_reason is TerminationReason.VIOLATION
    assert report.violations[0].depth == 5
    assert report.walks == 1


def test_subflujos_de_semilla_independientes():
    a = [walk_rng(11, 0).random() for _ in range(3)]
    b = [walk_rng(11, 0).random() for _ in range(3)]
    c = [walk_rng(11, 1).random() for _ in range(3)]
    assert a == b
    assert a != c


def test_simulacion_rechaza_modo_bfs():
    with pytest.raises(ContractError):
        simulate(ToyCounterModel(), ExploreConfig(mode=CheckMode.BFS))
