"""
Contrato que todo modelo explorable implementa, y la instancia de acción que forma las trazas.
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, Generic, List, Optional, Sequence, Tuple, TypeVar

from app.schemas.enums import InvariantId

State = TypeVar("State")

Scalar = int | str


@dataclass(frozen=True, slots=True)
class ActionInstance:
    """Transición nombrada y parametrizada. (name, actor, params) la identifica dentro de un estado."""
    name: str
    actor: Optional[int] = None
    params: Tuple[Scalar, ...] = ()

    def __str__(self) -> str:
        actor = "-" if self.actor is None else str(self.actor)
        params = ",".join(str(p) for p in self.params)
        return f"{self.name}[{actor}]({params})"


class ModelInterface(ABC, Generic[State]):
    """
    Máquina de estados explorable por el kernel.

    apply debe ser puro y enabled debe devolver siempre el mismo orden para el mismo estado.
    """
    name: str = "model"

    @abstractmethod
    def init_states(self) -> List[State]:
        """Estados iniciales en orden determinista."""

    @abstractmethod
    def enabled(self, state: State) -> List[ActionInstance]:
        """Acciones habilitadas en orden determinista."""

    @abstractmethod
    def apply(self, state: State, action: ActionInstance) -> State:
        """Sucesor de state por action."""

    @abstractmethod
    def violated_invariants(self, state: State) -> List[InvariantId]:
        """Invariantes de estado que state incumple."""

    def within_constraints(self, state: State) -> bool:
        """Límite del espacio acotado. Los presupuestos ya recortan las acciones habilitadas."""
        return True

    def step_violations(self, state: State, action: ActionInstance, successor: State) -> List[InvariantId]:
        """Propiedades de paso evaluadas sobre (estado, sucesor)."""
        return []

    def supports_symmetry(self) -> bool:
        """True si renombrar servidores preserva transiciones e invariantes."""
        return False

    def symmetric_variants(self, state: State) -> List[State]:
        """Estados equivalentes a state por simetría; el explorador se queda con uno."""
        return [state]

    def invariant_catalog(self) -> Dict[InvariantId, str]:
        """Invariantes que el modelo evalúa, con una descripción de una línea."""
        return {}

    def describe_state(self, state: State) -> Dict[str, Any]:
        """Vista legible del estado, usada en logs y reportes."""
        return {"state": repr(state)}

    def filter_invariants(self, found: Sequence[InvariantId], enabled_only: Optional[frozenset]) -> List[InvariantId]:
        if enabled_only is None:
            return list(found)
        return [i for i in found if i in enabled_only]
