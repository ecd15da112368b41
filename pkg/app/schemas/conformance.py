from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from app.schemas.enums import EventKind, NodeFault

# Campos proyectados de cada nodo, en el orden en que se comparan
PROJECTION_FIELDS = ("role", "phase", "acceptedEpoch", "currentEpoch", "history", "lastCommitted")
DOWN = "DOWN"


class ScheduleEvent(BaseModel):
    """Evento de un calendario de replay, derivado de un paso de la traza."""
    model_config = ConfigDict(frozen=True)

    index: int = Field(..., ge=1)
    kind: EventKind
    node: Optional[int] = None
    local_action: Optional[str] = Field(None, description="Acción local para FIRE (propose, elect, ...).")
    params: Tuple[int, ...] = ()
    msg_id: Optional[str] = Field(None, description="Id del mensaje para DELIVER, p.ej. 1->2#3.")
    source_action: str = Field(..., description="Acción del modelo de la que proviene el evento.")

    def __str__(self) -> str:
        if self.kind is EventKind.DELIVER:
            return f"DELIVER({self.msg_id})"
        if self.kind is EventKind.FIRE:
            return f"FIRE({self.local_action}, {self.node}, {list(self.params)})"
        target = self.node if self.node is not None else list(self.params)
        return f"{self.kind.value}({target})"


class Divergence(BaseModel):
    model_config = ConfigDict(frozen=True)

    field_path: str
    model_value: str
    node_value: str
    message: str = ""


class ConformanceReport(BaseModel):
    """Resultado de reproducir un calendario contra el runtime de nodos."""
    steps_checked: int = 0
    first_divergence: Optional[int] = Field(None, description="Índice del primer paso divergente; None si no hubo.")
    detail: Optional[Divergence] = None
    faults: List[NodeFault] = Field(default_factory=list)
    event: Optional[str] = Field(None, description="Evento en que se detectó la divergencia.")

    @property
    def conforms(self) -> bool:
        return self.first_divergence is None

    def summary(self) -> str:
        if self.conforms:
            return f"Conforme: {self.steps_checked} pasos verificados sin divergencias"
        d = self.detail
        return (f"Divergencia en el paso {self.first_divergence} ({self.event}): {d.field_path} "
                f"modelo={d.model_value} nodo={d.node_value}")


class RefinementReport(BaseModel):
    """Resultado de comprobar que una traza del modelo de sistema es alcanzable en el de protocolo."""
    steps_checked: int = 0
    failed_step: Optional[int] = Field(None, description="Primer paso sin contraparte en el protocolo; None si refina.")
    failed_action: Optional[str] = None
    frontier_peak: int = Field(0, description="Máximo de estados del protocolo que seguían la traza a la vez.")

    @property
    def refines(self) -> bool:
        return self.failed_step is None

    def summary(self) -> str:
        if self.refines:
            return f"Refina: {self.steps_checked} pasos con contraparte en el modelo de protocolo"
        return f"Sin contraparte en el protocolo en el paso {self.failed_step} ({self.failed_action})"


class RealizationReport(BaseModel):
    """Resultado de buscar en el modelo de sistema cada estado inicial del modelo de prueba."""
    init_states: int = 0
    realized: int = 0
    missing: List[str] = Field(default_factory=list, description="Semilla y acción de los estados no alcanzados.")
    longest_prefix: int = Field(0, description="Pasos del sistema del prefijo más largo encontrado.")

    @property
    def sound(self) -> bool:
        return not self.missing and self.realized == self.init_states

    def summary(self) -> str:
        if self.sound:
            return (f"Los {self.init_states} estados iniciales del modelo de prueba son alcanzables "
                    f"(prefijo más largo: {self.longest_prefix} pasos)")
        return f"{len(self.missing)} de {self.init_states} estados iniciales sin realizar: {self.missing[:3]}"
