"""
Explorador de estados explícito: BFS exhaustivo, simulación aleatoria, fingerprints y
reconstrucción de contraejemplos.

Fingerprint: blake2b con digest de 8 bytes sobre la codificación canónica del estado,
leído como entero big-endian. La codificación canónica recorre dataclasses por orden de
campos, tuplas en orden y conjuntos/diccionarios ordenando sus elementos ya codificados,
así que no depende del orden de iteración ni de PYTHONHASHSEED.
"""
import dataclasses
import hashlib
import logging
import random
import time
from concurrent.futures import ProcessPoolExecutor
from enum import Enum
from typing import Any, Dict, Hashable, Iterator, List, NamedTuple, Optional, Sequence, Tuple

from app.core.error_handlers import ContractError, InternalConsistencyError
from app.models.base import ActionInstance, ModelInterface
from app.schemas.enums import CheckMode, InvariantId, StoreMode, TerminationReason
from app.schemas.explore import CheckReport, ExploreConfig, Trace, TraceStep, Violation, config_digest

logger = logging.getLogger(__name__)

_FIELD_CACHE: Dict[type, Tuple[str, ...]] = {}


# ==========================================
# CODIFICACIÓN CANÓNICA Y FINGERPRINT
# ==========================================

def canonical_encode(obj: Any) -> str:
    """Codificación textual total y determinista de un estado."""
    if obj is None:
        return "N"
    if isinstance(obj, bool):
        return "T" if obj else "F"
    if isinstance(obj, Enum):
        return f"E{obj.value}"
    if isinstance(obj, int):
        return f"i{obj}"
    if isinstance(obj, str):
        return f"s{len(obj)}:{obj}"
    if isinstance(obj, (tuple, list)):
        return "(" + ",".join(canonical_encode(x) for x in obj) + ")"
    if isinstance(obj, (frozenset, set)):
        return "{" + ",".join(sorted(canonical_encode(x) for x in obj)) + "}"
    if isinstance(obj, dict):
        items = sorted(f"{canonical_encode(k)}:{canonical_encode(v)}" for k, v in obj.items())
        return "<" + ",".join(items) + ">"
    cls = type(obj)
    names = _FIELD_CACHE.get(cls)
    if names is None:
        if not dataclasses.is_dataclass(obj):
            raise ContractError("Tipo sin codificación canónica", tipo=cls.__name__)
        names = tuple(f.name for f in dataclasses.fields(obj))
        _FIELD_CACHE[cls] = names
    return cls.__name__ + "(" + ",".join(canonical_encode(getattr(obj, n)) for n in names) + ")"


def fingerprint(state: Any, bits: int = 64) -> int:
    """Digest estable de 64 bits (o truncado a `bits`) del estado canonicalizado."""
    raw = hashlib.blake2b(canonical_encode(state).encode("utf-8"), digest_size=8).digest()
    value = int.from_bytes(raw, "big")
    if bits < 64:
        value &= (1 << bits) - 1
    return value


def digest_hex(state: Any) -> str:
    return f"{fingerprint(state):016x}"


# ==========================================
# ALMACÉN DE VISITADOS Y PREDECESORES
# ==========================================

class StateKeyer:
    """
    Clave de almacén de un estado: el estado mismo (exact_set) o su fingerprint, calculados
    sobre el representante de simetría si el modelo la admite.
    """

    def __init__(self, store_mode: StoreMode, fingerprint_bits: int = 64,
                 model: Optional[ModelInterface] = None):
        self.store_mode = store_mode
        self.fingerprint_bits = fingerprint_bits
        self.model = model

    def representative(self, state: Any) -> Any:
        if self.model is None:
            return state
        variants = self.model.symmetric_variants(state)
        if len(variants) == 1:
            return variants[0]
        return min(variants, key=canonical_encode)

    def __call__(self, state: Any) -> Hashable:
        state = self.representative(state)
        if self.store_mode is StoreMode.EXACT_SET:
            return state
        return fingerprint(state, self.fingerprint_bits)


def keyer_for(model: ModelInterface, cfg: ExploreConfig) -> StateKeyer:
    reduce = cfg.symmetry and model.supports_symmetry()
    if reduce:
        logger.info(f"Reducción por simetría de servidores activa para el modelo {model.kind.value}.")
    return StateKeyer(cfg.store_mode, cfg.fingerprint_bits, model if reduce else None)


class PredecessorMap:
    """Enlaces (clave -> (clave padre, acción)) más los estados iniciales por clave."""

    def __init__(self, store_mode: StoreMode, fingerprint_bits: int = 64, keyer: Optional[StateKeyer] = None):
        self.keyer = keyer or StateKeyer(store_mode, fingerprint_bits)
        self.links: Dict[Hashable, Tuple[Optional[Hashable], Optional[ActionInstance]]] = {}
        self.initial: Dict[Hashable, Any] = {}

    def key(self, state: Any) -> Hashable:
        return self.keyer(state)

    def __contains__(self, key: Hashable) -> bool:
        return key in self.links

    def __len__(self) -> int:
        return len(self.links)

    def add_initial(self, key: Hashable, state: Any) -> None:
        self.links[key] = (None, None)
        self.initial[key] = state

    def add(self, key: Hashable, parent: Hashable, action: ActionInstance) -> None:
        self.links[key] = (parent, action)

    def path_to(self, key: Hashable) -> Tuple[Hashable, List[ActionInstance]]:
        """Raíz inicial y acciones (en orden) que llevan hasta key."""
        actions: List[ActionInstance] = []
        current = key
        guard = len(self.links) + 1
        while True:
            parent, action = self.links[current]
            if parent is None:
                break
            actions.append(action)
            current = parent
            guard -= 1
            if guard < 0:
                raise InternalConsistencyError("Ciclo en el mapa de predecesores")
        actions.reverse()
        return current, actions


def replay_actions(model: ModelInterface, initial: Any, actions: Sequence[ActionInstance]) -> Tuple[Any, List[TraceStep]]:
    """Re-ejecuta acciones desde un estado inicial, registrando el digest de cada paso."""
    state = initial
    steps: List[TraceStep] = []
    for i, action in enumerate(actions, start=1):
        state = model.apply(state, action)
        steps.append(TraceStep(index=i, action=action, digest=digest_hex(state)))
    return state, steps


def reconstruct_trace(
    model: ModelInterface,
    pred_map: PredecessorMap,
    final_key: Hashable,
    cfg: ExploreConfig,
    extra_action: Optional[ActionInstance] = None,
) -> Trace:
    """
    Traza más corta desde un estado inicial hasta final_key (más extra_action si se da),
    revalidada re-ejecutando las acciones.
    """
    root, actions = pred_map.path_to(final_key)
    initial = pred_map.initial[root]
    final_state, steps = replay_actions(model, initial, actions)
    if pred_map.key(final_state) != final_key:
        raise InternalConsistencyError(
            "La traza reconstruida no reproduce el estado final",
            esperado=str(final_key)[:32], obtenido=str(pred_map.key(final_state))[:32],
        )
    if extra_action is not None:
        successor = model.apply(final_state, extra_action)
        steps.append(TraceStep(index=len(steps) + 1, action=extra_action, digest=digest_hex(successor)))
    return Trace(
        model=model.kind,
        config_digest=config_digest(cfg, model.kind),
        initial_digest=digest_hex(initial),
        steps=steps,
    )


# ==========================================
# MODO BFS
# ==========================================

# Niveles más chicos que esto se expanden en el proceso principal
PARALLEL_MIN_LEVEL = 64


class Expansion(NamedTuple):
    """Resultado de expandir un estado: invariantes violadas y sucesores con su clave."""
    bad: List[InvariantId]
    successors: Tuple[Tuple[ActionInstance, Any, List[InvariantId], Hashable], ...]


def expand_state(model: ModelInterface, only: Optional[frozenset], keyer: StateKeyer, state: Any) -> Expansion:
    bad = model.filter_invariants(model.violated_invariants(state), only)
    if bad or not model.within_constraints(state):
        return Expansion(bad, ())
    successors = []
    for action in model.enabled(state):
        succ = model.apply(state, action)
        step_bad = model.filter_invariants(model.step_violations(state, action, succ), only)
        successors.append((action, succ, step_bad, keyer(succ)))
    return Expansion(bad, tuple(successors))


_WORKER: Dict[str, Any] = {}


def _init_worker(model: ModelInterface, only: Optional[frozenset], keyer: StateKeyer) -> None:
    _WORKER.update(model=model, only=only, keyer=keyer)


def _expand_in_worker(state: Any) -> Expansion:
    return expand_state(_WORKER["model"], _WORKER["only"], _WORKER["keyer"], state)


def _level_expansions(pool: Optional[ProcessPoolExecutor], workers: int, level: List[Tuple[Any, Hashable]],
                      model: ModelInterface, only: Optional[frozenset], keyer: StateKeyer) -> Iterator[Expansion]:
    """Expansiones del nivel en el orden del nivel; el pool sólo cambia dónde se calculan."""
    if pool is None or len(level) < PARALLEL_MIN_LEVEL:
        return (expand_state(model, only, keyer, state) for state, _ in level)
    chunksize = max(1, len(level) // (workers * 4))
    return pool.map(_expand_in_worker, [state for state, _ in level], chunksize=chunksize)


def _elapsed_ms(start: float) -> float:
    return round((time.monotonic() - start) * 1000.0, 3)


def check_bfs(model: ModelInterface, cfg: ExploreConfig) -> CheckReport:
    """
    Exploración por niveles desde todos los estados iniciales.

    Con workers > 1 los estados de cada nivel se expanden en un pool de procesos; la fusión
    en el proceso principal sigue el orden del nivel, así que el reporte es el mismo que el
    de la corrida secuencial (salvo el tiempo de pared).
    """
    if cfg.mode is not CheckMode.BFS:
        raise ContractError("check_bfs requiere mode=BFS", mode=cfg.mode.value)

    start = time.monotonic()
    deadline = start + cfg.time_limit_secs
    only = cfg.enabled_invariants()
    keyer = keyer_for(model, cfg)
    preds = PredecessorMap(cfg.store_mode, cfg.fingerprint_bits, keyer)
    level: List[Tuple[Any, Hashable]] = []

    for s in model.init_states():
        k = preds.key(s)
        if k in preds:
            continue
        preds.add_initial(k, s)
        level.append((s, k))

    logger.info(f"BFS [{model.kind.value}] iniciado con {len(level)} estados iniciales, workers={cfg.workers}.")

    explored = 0
    diameter = 0
    depth = 0
    found: List[Tuple[int, int, Violation]] = []
    violation_depth: Optional[int] = None
    seq = 0
    reason = TerminationReason.EXHAUSTED
    stop = False
    pool = None
    if cfg.workers > 1:
        pool = ProcessPoolExecutor(max_workers=cfg.workers, initializer=_init_worker,
                                   initargs=(model, only, keyer))

    try:
        while level and not stop:
            next_level: List[Tuple[Any, Hashable]] = []
            expansions = _level_expansions(pool, cfg.workers, level, model, only, keyer)
            for (state, key), expansion in zip(level, expansions):
                if violation_depth is not None:
                    if depth > violation_depth or (not cfg.collect_all and depth >= violation_depth):
                        stop = True
                        break
                if time.monotonic() > deadline:
                    reason = TerminationReason.TIME_LIMIT
                    stop = True
                    break
                explored += 1
                diameter = max(diameter, depth)

                if expansion.bad:
                    trace = reconstruct_trace(model, preds, key, cfg)
                    for inv in expansion.bad:
                        seq += 1
                        found.append((depth, seq, Violation(invariant=inv, depth=depth, trace=trace)))
                    logger.info(f"Violación de {[b.value for b in expansion.bad]} a profundidad {depth}.")
                    violation_depth = depth if violation_depth is None else min(violation_depth, depth)
                    if not cfg.collect_all:
                        stop = True
                        break
                    continue
                if violation_depth is not None and depth >= violation_depth:
                    continue

                for action, succ, step_bad, sk in expansion.successors:
                    if step_bad:
                        trace = reconstruct_trace(model, preds, key, cfg, extra_action=action)
                        for inv in step_bad:
                            seq += 1
                            found.append((depth + 1, seq, Violation(invariant=inv, depth=depth + 1, step_property=True, trace=trace)))
                        violation_depth = depth + 1 if violation_depth is None else min(violation_depth, depth + 1)
                    if sk in preds:
                        continue
                    preds.add(sk, key, action)
                    next_level.append((succ, sk))

                if len(preds) >= cfg.state_limit:
                    reason = TerminationReason.STATE_LIMIT
                    stop = True
                    break
            level = next_level
            depth += 1
    finally:
        if pool is not None:
            pool.shutdown(wait=True, cancel_futures=True)

    violations: List[Violation] = []
    if found:
        found.sort(key=lambda item: (item[0], item[1]))
        if cfg.collect_all:
            min_depth = found[0][0]
            violations = [v for d, _, v in found if d == min_depth]
        else:
            violations = [found[0][2]]
        reason = TerminationReason.VIOLATION

    report = CheckReport(
        mode=CheckMode.BFS,
        model=model.kind,
        states_explored=explored,
        distinct_states=len(preds),
        diameter=diameter,
        violations=violations,
        wall_time_ms=_elapsed_ms(start),
        terminated_reason=reason,
        store_mode=cfg.store_mode,
        config_digest=config_digest(cfg, model.kind),
    )
    logger.info(
        f"BFS [{model.kind.value}] terminado: {reason.value}, explorados={explored}, "
        f"distintos={len(preds)}, diámetro={diameter}, {report.wall_time_ms:.0f} ms"
    )
    return report


# ==========================================
# MODO SIMULACIÓN
# ==========================================

def walk_rng(seed: int, walk_index: int) -> random.Random:
    """Sub-flujo pseudoaleatorio independiente por recorrido, derivado de la semilla."""
    return random.Random(f"{seed}:{walk_index}")


def sample_walk(
    model: ModelInterface,
    cfg: ExploreConfig,
    walk_index: int,
    inits: Optional[List[Any]] = None,
) -> Tuple[Trace, List[InvariantId], List[Any]]:
    """
    Un recorrido aleatorio. Devuelve la traza recorrida, las invariantes violadas en su
    último estado (vacío si no hubo violación) y los estados visitados.
    """
    rng = walk_rng(cfg.seed, walk_index)
    only = cfg.enabled_invariants()
    initial_states = inits if inits is not None else model.init_states()
    state = rng.choice(initial_states)
    initial_digest = digest_hex(state)
    visited = [state]
    steps: List[TraceStep] = []

    def _trace() -> Trace:
        return Trace(model=model.kind, config_digest=config_digest(cfg, model.kind),
                     initial_digest=initial_digest, steps=list(steps))

    bad = model.filter_invariants(model.violated_invariants(state), only)
    if bad:
        return _trace(), bad, visited

    for i in range(1, cfg.max_trace_len + 1):
        if not model.within_constraints(state):
            break
        actions = model.enabled(state)
        if not actions:
            break
        action = rng.choice(actions)
        succ = model.apply(state, action)
        steps.append(TraceStep(index=i, action=action, digest=digest_hex(succ)))
        visited.append(succ)
        bad = model.filter_invariants(model.step_violations(state, action, succ), only)
        bad += [b for b in model.filter_invariants(model.violated_invariants(succ), only) if b not in bad]
        if bad:
            return _trace(), bad, visited
        state = succ
    return _trace(), [], visited


def simulate(model: ModelInterface, cfg: ExploreConfig) -> CheckReport:
    """Recorridos aleatorios repetidos hasta agotar el presupuesto o encontrar una violación."""
    if cfg.mode is not CheckMode.SIMULATION:
        raise ContractError("simulate requiere mode=SIMULATION", mode=cfg.mode.value)

    start = time.monotonic()
    deadline = start + cfg.time_limit_secs
    inits = model.init_states()
    seen: set = set()
    explored = 0
    walks = 0
    violations: List[Violation] = []
    reason = TerminationReason.BUDGET

    logger.info(f"Simulación [{model.kind.value}] iniciada: semilla={cfg.seed}, max_trace_len={cfg.max_trace_len}")

    for walk_index in range(cfg.max_walks):
        if time.monotonic() > deadline:
            reason = TerminationReason.TIME_LIMIT
            break
        trace, bad, visited = sample_walk(model, cfg, walk_index, inits)
        walks += 1
        explored += len(visited)
        for s in visited:
            seen.add(fingerprint(s, cfg.fingerprint_bits))
        if bad:
            violations = [Violation(invariant=inv, depth=len(trace), trace=trace) for inv in bad]
            reason = TerminationReason.VIOLATION
            logger.info(f"Violación de {[b.value for b in bad]} en el recorrido {walk_index} (largo {len(trace)}).")
            break

    report = CheckReport(
        mode=CheckMode.SIMULATION,
        model=model.kind,
        states_explored=explored,
        distinct_states=len(seen),
        diameter=None,
        violations=violations,
        wall_time_ms=_elapsed_ms(start),
        terminated_reason=reason,
        store_mode=StoreMode.FINGERPRINT_SET,
        config_digest=config_digest(cfg, model.kind),
        seed=cfg.seed,
        walks=walks,
    )
    logger.info(
        f"Simulación [{model.kind.value}] terminada: {reason.value}, recorridos={walks}, "
        f"estados={explored}, {report.wall_time_ms:.0f} ms"
    )
    return report


def run_check(model: ModelInterface, cfg: ExploreConfig) -> CheckReport:
    """Despacha al modo indicado por la configuración."""
    if cfg.mode is CheckMode.BFS:
        return check_bfs(model, cfg)
    return simulate(model, cfg)
