import sys
import argparse
from os.path import abspath, dirname
from pathlib import Path
from typing import Any, Dict, List, Optional

root_dir = dirname(dirname(abspath(__file__)))
sys.path.append(root_dir)

from app.core.config import Settings
from app.core.error_handlers import EXIT_OK, EXIT_VIOLATION, UsageError, handle_cli_exception
from app.core.logging_config import setup_logging
from app.harness.replay import replay_trace_file
from app.models.catalog import MODEL_REGISTRY, MUTATION_CATALOG, build_model
from app.schemas.enums import CheckMode, ModelName, MutationId, NodeFault, QuorumRule, StoreMode
from app.schemas.explore import CheckReport, ExploreConfig
from app.schemas.manifest import RunManifest, load_manifest, manifest_reference, merge_with_flags
from app.services.explorer import check_bfs, simulate
from app.services.hunt import hunt
from app.services.reporte import generar_csv, generar_excel, generar_json, generar_pdf, reporte_service
from app.services.runner import run_service

try:
    from colorama import Fore, Style, init  # type: ignore
    init(autoreset=True)
except ImportError:
    class Fore:
        GREEN = RED = YELLOW = BLUE = MAGENTA = CYAN = ""
    class Style:
        BRIGHT = RESET_ALL = ""


class CliArgumentParser(argparse.ArgumentParser):
    """Los errores de argumentos salen con código de uso (>2), no con el 2 de argparse."""

    def error(self, message: str):
        raise UsageError(f"Argumentos inválidos: {message}", uso=self.format_usage().strip())


# Flags que reflejan claves del manifest (dest = nombre de la clave)
FLAG_KEYS = (
    "model", "n_servers", "max_transactions", "max_timeouts", "max_restarts", "max_crashes",
    "max_partitions", "max_trace_len", "max_walks", "seed", "time_limit_secs", "state_limit",
    "quorum_rule", "mutations", "store_mode", "fingerprint_bits", "collect_all", "force_servers",
    "failures_require_leader", "snapshot_boundary", "ipa_max_history", "invariants", "workers", "symmetry",
    "output_dir",
)


# --- Utilidades ---

def resolve_manifest(args: argparse.Namespace, **overrides) -> RunManifest:
    """Manifest efectivo: el archivo (si hay) más los flags; en conflicto gana el archivo."""
    manifest = load_manifest(Path(args.manifest)) if args.manifest else None
    flags: Dict[str, Any] = {key: getattr(args, key, None) for key in FLAG_KEYS}
    if flags["output_dir"] is not None:
        flags["output_dir"] = str(flags["output_dir"])
    for key, value in overrides.items():
        if flags.get(key) is None and (manifest is None or key not in manifest.explicit_keys()):
            flags[key] = value
    return merge_with_flags(manifest, flags)


def print_check_summary(label: str, report: CheckReport, traces: List[Path]) -> None:
    color = Fore.RED if report.has_violation else Fore.GREEN
    diameter = "-" if report.diameter is None else report.diameter
    print(f"{Style.BRIGHT}{label}{Style.RESET_ALL} [{report.model.value}] {color}{report.terminated_reason.value}")
    print(f"  Estados explorados: {report.states_explored} | distintos: {report.distinct_states} | "
          f"diámetro: {diameter} | tiempo: {report.wall_time_ms:.0f} ms")
    if report.seed is not None:
        print(f"  Semilla: {report.seed} | recorridos: {report.walks}")
    for violation, trace_path in zip(report.violations, traces):
        print(f"  {Fore.RED}✗ {violation.invariant.value}{Style.RESET_ALL} a profundidad {violation.depth} -> {trace_path}")


# --- Comandos ---

def cmd_check(args: argparse.Namespace) -> int:
    manifest = resolve_manifest(args)
    cfg = manifest.to_explore_config().model_copy(update={"mode": CheckMode.BFS})
    report = check_bfs(build_model(manifest.model, cfg), cfg)
    run_dir = run_service.create_run_dir(manifest, "check")
    traces = run_service.write_check(run_dir, report, cfg)
    print_check_summary("check", report, traces)
    print(f"  Salida: {run_dir}")
    return run_service.exit_code(report)


def cmd_simulate(args: argparse.Namespace) -> int:
    manifest = resolve_manifest(args)
    cfg = manifest.to_explore_config().model_copy(update={"mode": CheckMode.SIMULATION})
    report = simulate(build_model(manifest.model, cfg), cfg)
    run_dir = run_service.create_run_dir(manifest, "simulate")
    traces = run_service.write_check(run_dir, report, cfg)
    print_check_summary("simulate", report, traces)
    seconds = max(report.wall_time_ms / 1000.0, 1e-6)
    print(f"  Recorridos/s: {report.walks / seconds:.1f}")
    print(f"  Salida: {run_dir}")
    return run_service.exit_code(report)


def cmd_hunt(args: argparse.Namespace) -> int:
    manifest = resolve_manifest(args, model=ModelName.TEST.value)
    cfg = manifest.to_explore_config()
    report = hunt(build_model(manifest.model, cfg), cfg)
    run_dir = run_service.create_run_dir(manifest, "hunt")
    run_service.write_hunt(run_dir, report, cfg)
    bfs_traces = sorted(run_dir.glob("bfs_trace_*.trace"))
    sim_traces = sorted(run_dir.glob("sim_trace_*.trace"))
    print_check_summary("hunt/BFS", report.bfs, bfs_traces)
    print_check_summary("hunt/simulación", report.simulation, sim_traces)
    print(f"  Salida: {run_dir}")
    return run_service.exit_code(report.bfs, report.simulation)


def cmd_replay(args: argparse.Namespace) -> int:
    faults = [NodeFault(f) for f in (args.fault or [])]
    report, records, schedule = replay_trace_file(Path(args.trace), faults)
    manifest = RunManifest.model_validate({
        **schedule.cfg.model_dump(mode="json"),
        "model": schedule.model.value,
        "output_dir": str(args.output_dir) if args.output_dir else None,
    })
    run_dir = run_service.create_run_dir(manifest, "replay")
    run_service.write_replay(run_dir, report, records)
    color = Fore.GREEN if report.conforms else Fore.RED
    print(f"{color}{report.summary()}")
    print(f"  Salida: {run_dir}")
    return EXIT_OK if report.conforms else EXIT_VIOLATION


def cmd_report(args: argparse.Namespace) -> int:
    base = Path(args.run_dir) if args.run_dir else Settings().ZAB_OUTPUT_DIR
    datos = reporte_service.obtener_datos(base)
    print(reporte_service.tabla(datos))
    generar_csv(base / "report.csv", datos)
    generar_json(base / "report.json", datos)
    if args.xlsx:
        generar_excel(Path(args.xlsx), datos)
    if args.pdf:
        generar_pdf(Path(args.pdf), datos, "Resultados de verificación de Zab")
    print(f"\nSidecars: {base / 'report.csv'}, {base / 'report.json'}")
    return EXIT_OK


def cmd_list_mutations(args: argparse.Namespace) -> int:
    print("\n--- CATÁLOGO DE MUTACIONES ---")
    print(f"{'MUTACIÓN':<24} | {'ACCIÓN':<34} | {'DESCRIPCIÓN'}")
    print("-" * 110)
    for info in MUTATION_CATALOG.values():
        print(f"{info.id.value:<24} | {info.action:<34} | {info.description}")
    print("-" * 110)
    print(f"Total: {len(MUTATION_CATALOG)} mutaciones.")
    return EXIT_OK


def cmd_list_invariants(args: argparse.Namespace) -> int:
    cfg = ExploreConfig()
    owners: Dict[str, List[str]] = {}
    descriptions: Dict[str, str] = {}
    for kind, model_cls in MODEL_REGISTRY.items():
        for inv, text in model_cls(cfg).invariant_catalog().items():
            owners.setdefault(inv.value, []).append(kind.value)
            descriptions[inv.value] = text
    print("\n--- INVARIANTES Y PROPIEDADES ---")
    print(f"{'INVARIANTE':<34} | {'MODELOS':<22} | {'DESCRIPCIÓN'}")
    print("-" * 110)
    for inv, models in owners.items():
        print(f"{inv:<34} | {','.join(models):<22} | {descriptions[inv]}")
    print("-" * 110)
    print(f"Total: {len(owners)} invariantes.")
    return EXIT_OK


def cmd_manifest_reference(args: argparse.Namespace) -> int:
    print(manifest_reference())
    return EXIT_OK


# --- Interfaz de Línea de Comandos Principal ---

def add_run_flags(parser: argparse.ArgumentParser) -> None:
    """Flags que reflejan las claves del manifest. None significa 'no indicado'."""
    parser.add_argument("--manifest", type=str, help="Manifest JSON de la corrida (gana sobre los flags).")
    parser.add_argument("--model", type=str, choices=[m.value for m in ModelName], help="Modelo a explorar.")
    parser.add_argument("--n-servers", dest="n_servers", type=int)
    parser.add_argument("--max-transactions", dest="max_transactions", type=int)
    parser.add_argument("--max-timeouts", dest="max_timeouts", type=int)
    parser.add_argument("--max-restarts", dest="max_restarts", type=int)
    parser.add_argument("--max-crashes", dest="max_crashes", type=int)
    parser.add_argument("--max-partitions", dest="max_partitions", type=int)
    parser.add_argument("--max-trace-len", dest="max_trace_len", type=int)
    parser.add_argument("--max-walks", dest="max_walks", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--time-limit-secs", dest="time_limit_secs", type=int)
    parser.add_argument("--state-limit", dest="state_limit", type=int)
    parser.add_argument("--quorum-rule", dest="quorum_rule", choices=[q.value for q in QuorumRule])
    parser.add_argument("--mutation", dest="mutations", action="append", choices=[m.value for m in MutationId],
                        help="Mutación a activar (repetible).")
    parser.add_argument("--store-mode", dest="store_mode", choices=[s.value for s in StoreMode])
    parser.add_argument("--fingerprint-bits", dest="fingerprint_bits", type=int)
    parser.add_argument("--collect-all", dest="collect_all", action="store_const", const=True)
    parser.add_argument("--force-servers", dest="force_servers", action="store_const", const=True)
    parser.add_argument("--failures-require-leader", dest="failures_require_leader", action="store_const", const=True)
    parser.add_argument("--snapshot-boundary", dest="snapshot_boundary", type=int, nargs=2, metavar=("EPOCH", "COUNTER"))
    parser.add_argument("--ipa-max-history", dest="ipa_max_history", type=int)
    parser.add_argument("--invariant", dest="invariants", action="append", help="Invariante a evaluar (repetible).")
    parser.add_argument("--workers", type=int, help="Procesos para expandir los niveles del BFS.")
    parser.add_argument("--no-symmetry", dest="symmetry", action="store_const", const=False,
                        help="Desactiva la reducción por simetría de servidores.")
    parser.add_argument("--output-dir", dest="output_dir", type=str, help="Directorio base de salida.")


def build_parser() -> argparse.ArgumentParser:
    parser = CliArgumentParser(description="Verificador ejecutable de especificaciones de Zab.")
    parser.add_argument("--log-level", type=str, default=None, help="Nivel de log (por defecto LOG_LEVEL).")
    subparsers = parser.add_subparsers(dest="command", help="Comandos disponibles", required=True)

    # Comandos de exploración
    for name, help_text in (
        ("check", "Búsqueda exhaustiva BFS."),
        ("simulate", "Simulación aleatoria con semilla."),
        ("hunt", "Cacería de errores en modo dual (BFS y simulación)."),
    ):
        add_run_flags(subparsers.add_parser(name, help=help_text))

    # Replay de conformidad
    parser_replay = subparsers.add_parser("replay", help="Reproduce una traza contra el runtime de nodos.")
    parser_replay.add_argument("trace", type=str, help="Archivo .trace emitido por check/simulate/hunt.")
    parser_replay.add_argument("--fault", action="append", choices=[f.value for f in NodeFault],
                               help="Defecto plantado en los nodos (sólo pruebas; repetible).")
    parser_replay.add_argument("--output-dir", dest="output_dir", type=str)

    # Reportes
    parser_report = subparsers.add_parser("report", help="Tabla agregada de las corridas de un directorio.")
    parser_report.add_argument("run_dir", type=str, nargs="?", help="Directorio de corridas (por defecto ZAB_OUTPUT_DIR).")
    parser_report.add_argument("--xlsx", type=str, help="Además, exportar a Excel.")
    parser_report.add_argument("--pdf", type=str, help="Además, exportar a PDF.")

    subparsers.add_parser("list-mutations", help="Mostrar el catálogo de mutaciones.")
    subparsers.add_parser("list-invariants", help="Mostrar invariantes y propiedades por modelo.")
    subparsers.add_parser("manifest-reference", help="Imprimir el esquema JSON del manifest.")
    return parser


COMMANDS = {
    "check": cmd_check,
    "simulate": cmd_simulate,
    "hunt": cmd_hunt,
    "replay": cmd_replay,
    "report": cmd_report,
    "list-mutations": cmd_list_mutations,
    "list-invariants": cmd_list_invariants,
    "manifest-reference": cmd_manifest_reference,
}


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        setup_logging(level=args.log_level)
        return COMMANDS[args.command](args)
    except Exception as exc:
        return handle_cli_exception(exc)


if __name__ == "__main__":
    sys.exit(main())
