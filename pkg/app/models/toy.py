"""Modelo de juguete para calibrar el kernel: un contador con una única acción de incremento."""
from dataclasses import dataclass
from typing import Dict, List, Optional

from app.models.base import ActionInstance, ModelInterface
from app.schemas.enums import InvariantId, ModelName

INCREMENT = ActionInstance("increment")


@dataclass(frozen=True, slots=True)
class CounterState:
    counter: int


class ToyCounterModel(ModelInterface[CounterState]):
    """
    Contador módulo `modulus` (sin módulo si es None). La invariante exige counter < limit.
    Con modulus=3 y limit=99 hay exactamente 3 estados y diámetro 2.
    """
    name = "toy-counter"
    kind = ModelName.TOY

    def __init__(self, modulus: Optional[int] = 3, limit: int = 99):
        self.modulus = modulus
        self.limit = limit

    def init_states(self) -> List[CounterState]:
        return [CounterState(0)]

    def enabled(self, state: CounterState) -> List[ActionInstance]:
        return [INCREMENT]

    def apply(self, state: CounterState, action: ActionInstance) -> CounterState:
        nxt = state.counter + 1
        if self.modulus is not None:
            nxt %= self.modulus
        return CounterState(nxt)

    def violated_invariants(self, state: CounterState) -> List[InvariantId]:
        return [InvariantId.TOY_BOUND] if state.counter >= self.limit else []

    def invariant_catalog(self) -> Dict[InvariantId, str]:
        return {InvariantId.TOY_BOUND: f"counter < {self.limit}"}


class WideToyModel(ModelInterface[CounterState]):
    """Contador que puede sumar 1 o 7 módulo `size`: muchos estados para el control de colisiones."""
    name = "toy-wide"
    kind = ModelName.TOY

    def __init__(self, size: int = 400):
        self.size = size

    def init_states(self) -> List[CounterState]:
        return [CounterState(0)]

    def enabled(self, state: CounterState) -> List[ActionInstance]:
        return [ActionInstance("add", params=(1,)), ActionInstance("add", params=(7,))]

    def apply(self, state: CounterState, action: ActionInstance) -> CounterState:
        return CounterState((state.counter + int(action.params[0])) % self.size)

    def violated_invariants(self, state: CounterState) -> List[InvariantId]:
        return []


@dataclass(frozen=True, slots=True)
class GridState:
    x: int
    y: int


class GridToyModel(ModelInterface[GridState]):
    """
    Dos contadores independientes acotados por `side`. El nivel d del BFS tiene d+1 estados
    hasta la diagonal: niveles anchos para el pool de procesos. La invariante exige x + y < limit.
    """
    name = "toy-grid"
    kind = ModelName.TOY

    def __init__(self, side: int = 120, limit: Optional[int] = None):
        self.side = side
        self.limit = limit

    def init_states(self) -> List[GridState]:
        return [GridState(0, 0)]

    def enabled(self, state: GridState) -> List[ActionInstance]:
        actions = []
        if state.x + 1 < self.side:
            actions.append(ActionInstance("step", params=("x",)))
        if state.y + 1 < self.side:
            actions.append(ActionInstance("step", params=("y",)))
        return actions

    def apply(self, state: GridState, action: ActionInstance) -> GridState:
        if action.params[0] == "x":
            return GridState(state.x + 1, state.y)
        return GridState(state.x, state.y + 1)

    def violated_invariants(self, state: GridState) -> List[InvariantId]:
        if self.limit is not None and state.x + state.y >= self.limit:
            return [InvariantId.TOY_BOUND]
        return []
