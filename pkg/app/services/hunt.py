"""
Cacería de errores en dos modos: BFS (traza más corta) y simulación (suele llegar antes a errores profundos).
"""
import logging

from app.models.base import ModelInterface
from app.schemas.enums import CheckMode
from app.schemas.explore import ExploreConfig, HuntReport
from app.services.explorer import check_bfs, simulate

logger = logging.getLogger(__name__)


def hunt(model: ModelInterface, cfg: ExploreConfig) -> HuntReport:
    """Corre BFS y simulación sobre el mismo modelo con los mismos límites."""
    bfs = check_bfs(model, cfg.model_copy(update={"mode": CheckMode.BFS}))
    simulation = simulate(model, cfg.model_copy(update={"mode": CheckMode.SIMULATION}))

    for label, report in (("BFS", bfs), ("Simulación", simulation)):
        if report.has_violation:
            first = report.violations[0]
            logger.info(f"{label}: {first.invariant.value} a profundidad {first.depth} en {report.wall_time_ms:.0f} ms")
        else:
            logger.info(f"{label}: sin violaciones ({report.terminated_reason.value})")
    return HuntReport(bfs=bfs, simulation=simulation)
