import hashlib
import json
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings
from app.models.base import ActionInstance
from app.schemas.enums import (
    CheckMode,
    InvariantId,
    ModelName,
    MutationId,
    QuorumRule,
    StoreMode,
    TerminationReason,
)

# Campos que cambian el sistema de transiciones (y por tanto el digest de configuración).
MODEL_FIELDS = (
    "n_servers",
    "max_transactions",
    "max_timeouts",
    "max_restarts",
    "max_crashes",
    "max_partitions",
    "quorum_rule",
    "mutations",
    "failures_require_leader",
    "snapshot_boundary",
    "ipa_max_history",
)


class ExploreConfig(BaseModel):
    """Configuración acotada de una corrida del explorador."""
    model_config = ConfigDict(extra="forbid", frozen=True, use_enum_values=False)

    mode: CheckMode = Field(CheckMode.BFS, description="BFS exhaustivo o simulación aleatoria.")
    n_servers: int = Field(3, description="Número de servidores del ensamble.")
    max_transactions: int = Field(1, ge=0, description="Propuestas que el líder puede generar.")
    max_timeouts: int = Field(0, ge=0, description="Presupuesto de Timeout (modelo de protocolo).")
    max_restarts: int = Field(0, ge=0, description="Presupuesto de Restart (modelo de protocolo).")
    max_crashes: int = Field(0, ge=0, description="Presupuesto de caídas (modelos de sistema y prueba).")
    max_partitions: int = Field(0, ge=0, description="Presupuesto de particiones (modelos de sistema y prueba).")
    max_trace_len: int = Field(settings.DEFAULT_MAX_TRACE_LEN, ge=1, description="Longitud máxima de cada recorrido en simulación.")
    max_walks: int = Field(settings.DEFAULT_MAX_WALKS, ge=1, description="Recorridos de simulación antes de agotar el presupuesto.")
    seed: int = Field(settings.DEFAULT_SEED, ge=0, lt=2**64, description="Semilla de 64 bits de la simulación.")
    time_limit_secs: int = Field(settings.DEFAULT_TIME_LIMIT_SECS, ge=1, description="Límite de tiempo de pared.")
    state_limit: int = Field(settings.DEFAULT_STATE_LIMIT, ge=1, description="Máximo de estados distintos almacenados.")
    quorum_rule: QuorumRule = Field(QuorumRule.MAJORITY, description="Regla de quórum.")
    mutations: Tuple[MutationId, ...] = Field((), description="Errores sembrados activos.")
    store_mode: StoreMode = Field(StoreMode.FINGERPRINT_SET, description="Almacén de visitados.")
    fingerprint_bits: int = Field(64, ge=4, le=64, description="Bits del fingerprint; menos de 64 sólo para el control negativo.")
    collect_all: bool = Field(False, description="Recoger todas las violaciones del nivel BFS violador.")
    force_servers: bool = Field(False, description="Permite n_servers fuera de [1, 5].")
    failures_require_leader: bool = Field(False, description="Habilita fallos sólo cuando hay un líder designado.")
    snapshot_boundary: Optional[Tuple[int, int]] = Field(None, description="Zxid más antiguo retenido por el líder; fuerza SNAP por debajo.")
    ipa_max_history: int = Field(2, ge=0, le=3, description="Largo máximo de los historiales iniciales del modelo de prueba.")
    invariants: Optional[Tuple[InvariantId, ...]] = Field(None, description="Subconjunto de invariantes a evaluar (None = todos).")
    workers: int = Field(1, ge=1, le=64, description="Procesos que expanden cada nivel del BFS; el reporte es idéntico al secuencial.")
    symmetry: bool = Field(True, description="Reducción por simetría de servidores en los modelos que la admiten.")

    @field_validator("mutations", mode='before')
    @classmethod
    def sort_mutations(cls, v: Any) -> Any:
        if isinstance(v, (list, tuple, set, frozenset)):
            return tuple(sorted({MutationId(m) for m in v}, key=lambda m: m.value))
        return v

    @field_validator("invariants", mode='before')
    @classmethod
    def sort_invariants(cls, v: Any) -> Any:
        if isinstance(v, (list, tuple, set, frozenset)):
            return tuple(sorted({InvariantId(i) for i in v}, key=lambda i: i.value))
        return v

    @model_validator(mode='after')
    def check_server_count(self) -> "ExploreConfig":
        if self.n_servers < 1:
            raise ValueError("n_servers debe ser >= 1")
        if not self.force_servers and self.n_servers > settings.MAX_SERVERS_UNFORCED:
            raise ValueError(
                f"n_servers={self.n_servers} fuera de [1, {settings.MAX_SERVERS_UNFORCED}]; use force_servers para forzarlo"
            )
        return self

    def enabled_invariants(self) -> Optional[frozenset]:
        return None if self.invariants is None else frozenset(self.invariants)

    def has_mutation(self, m: MutationId) -> bool:
        return m in self.mutations

    def model_payload(self) -> Dict[str, Any]:
        """Subconjunto de campos que determina el sistema de transiciones, en forma JSON."""
        data = self.model_dump(mode="json")
        return {k: data[k] for k in MODEL_FIELDS}


def config_digest(cfg: ExploreConfig, model: ModelName) -> str:
    """Digest de 64 bits (hex) del modelo y de los campos que afectan las transiciones."""
    payload = {"model": model.value, **cfg.model_payload()}
    encoded = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.blake2b(encoded, digest_size=8).hexdigest()


# ==========================================
# TRAZAS Y REPORTES
# ==========================================

class TraceStep(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int = Field(..., ge=1)
    action: ActionInstance
    digest: str = Field(..., description="Fingerprint hex del estado posterior al paso.")


class Trace(BaseModel):
    """Calendario reproducible: acciones con el digest del estado tras cada una."""
    model_config = ConfigDict(frozen=True)

    model: ModelName
    config_digest: str
    initial_digest: str
    steps: List[TraceStep] = Field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    def actions(self) -> List[ActionInstance]:
        return [s.action for s in self.steps]


class Violation(BaseModel):
    invariant: InvariantId
    depth: int = Field(..., ge=0, description="Largo de la traza que conduce a la violación.")
    step_property: bool = Field(False, description="True si es una propiedad de paso (estado, sucesor).")
    trace: Trace


class CheckReport(BaseModel):
    mode: CheckMode
    model: ModelName
    states_explored: int = 0
    distinct_states: int = 0
    diameter: Optional[int] = None
    violations: List[Violation] = Field(default_factory=list)
    wall_time_ms: float = 0.0
    terminated_reason: TerminationReason = TerminationReason.EXHAUSTED
    store_mode: StoreMode = StoreMode.FINGERPRINT_SET
    config_digest: str = ""
    seed: Optional[int] = None
    walks: Optional[int] = None

    @property
    def has_violation(self) -> bool:
        return bool(self.violations)

    def violated_invariants(self) -> List[InvariantId]:
        seen: List[InvariantId] = []
        for v in self.violations:
            if v.invariant not in seen:
                seen.append(v.invariant)
        return seen

    def shortest_depth(self, invariant: InvariantId) -> Optional[int]:
        depths = [v.depth for v in self.violations if v.invariant == invariant]
        return min(depths) if depths else None

    def comparable(self) -> Dict[str, Any]:
        """Campos que deben coincidir entre dos corridas iguales (todo salvo el tiempo)."""
        return self.model_dump(mode="json", exclude={"wall_time_ms"})


class HuntReport(BaseModel):
    """Resultado de una cacería: BFS y simulación sobre el mismo modelo."""
    bfs: CheckReport
    simulation: CheckReport

    def comparable(self) -> Dict[str, Any]:
        return {"bfs": self.bfs.comparable(), "simulation": self.simulation.comparable()}
