import json
import logging
from datetime import datetime
from pathlib import Path
from typing import List

from app.core.config import Settings
from app.core.error_handlers import EXIT_BUDGET, EXIT_OK, EXIT_VIOLATION
from app.schemas.conformance import ConformanceReport
from app.schemas.explore import CheckReport, ExploreConfig, HuntReport, config_digest
from app.schemas.manifest import RunManifest
from app.services.trace_io import write_trace

logger = logging.getLogger(__name__)

CHECK_REPORT_FILE = "check_report.json"
HUNT_REPORT_FILE = "hunt_report.json"
MANIFEST_FILE = "manifest.json"
CONFORMANCE_REPORT_FILE = "conformance_report.json"
CONFORMANCE_LOG_FILE = "conformance.txt"


class RunService:
    """Organiza el directorio de cada corrida y escribe reportes, trazas y el manifest efectivo."""

    def output_base(self, manifest: RunManifest) -> Path:
        if manifest.output_dir is not None:
            return Path(manifest.output_dir)
        # Se relee el entorno en cada corrida
        return Settings().ZAB_OUTPUT_DIR

    def create_run_dir(self, manifest: RunManifest, command: str) -> Path:
        cfg = manifest.to_explore_config()
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        name = f"{command}-{manifest.model.value}-{config_digest(cfg, manifest.model)[:8]}-{stamp}"
        base = self.output_base(manifest)
        run_dir = base / name
        suffix = 1
        while run_dir.exists():
            suffix += 1
            run_dir = base / f"{name}-{suffix}"
        run_dir.mkdir(parents=True)
        (run_dir / MANIFEST_FILE).write_text(
            json.dumps(manifest.model_dump(mode="json"), indent=2, sort_keys=True), encoding="utf-8"
        )
        logger.info(f"Directorio de corrida: {run_dir}")
        return run_dir

    def write_check(self, run_dir: Path, report: CheckReport, cfg: ExploreConfig, prefix: str = "") -> List[Path]:
        """Escribe el CheckReport y una traza por violación. Devuelve las rutas de las trazas."""
        name = f"{prefix}{CHECK_REPORT_FILE}" if prefix else CHECK_REPORT_FILE
        (run_dir / name).write_text(report.model_dump_json(indent=2), encoding="utf-8")
        traces = []
        for k, violation in enumerate(report.violations, start=1):
            traces.append(write_trace(run_dir / f"{prefix}trace_{k}.trace", violation.trace, cfg))
        return traces

    def write_hunt(self, run_dir: Path, report: HuntReport, cfg: ExploreConfig) -> List[Path]:
        (run_dir / HUNT_REPORT_FILE).write_text(report.model_dump_json(indent=2), encoding="utf-8")
        traces = self.write_check(run_dir, report.bfs, cfg, prefix="bfs_")
        traces += self.write_check(run_dir, report.simulation, cfg, prefix="sim_")
        return traces

    def write_replay(self, run_dir: Path, report: ConformanceReport, records: List[str]) -> Path:
        """Resumen JSON más un registro de texto por paso reproducido."""
        (run_dir / CONFORMANCE_LOG_FILE).write_text("\n".join(records) + "\n", encoding="utf-8")
        path = run_dir / CONFORMANCE_REPORT_FILE
        path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
        return path

    @staticmethod
    def exit_code(*reports: CheckReport) -> int:
        """1 si alguna corrida encontró violaciones; 2 si alguna se cortó por límites; 0 si no."""
        if any(r.has_violation for r in reports):
            return EXIT_VIOLATION
        if any(r.terminated_reason.is_incomplete() for r in reports):
            return EXIT_BUDGET
        return EXIT_OK


run_service = RunService()


def find_report_files(base: Path) -> List[Path]:
    """Reportes (check o hunt) bajo base, en orden de ruta."""
    base = Path(base)
    found = sorted(list(base.rglob(CHECK_REPORT_FILE)) + list(base.rglob(f"*_{CHECK_REPORT_FILE}")))
    return sorted(set(found))
