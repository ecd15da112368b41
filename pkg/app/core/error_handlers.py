import logging
import traceback
from typing import Callable, Dict, Type

from pydantic import ValidationError

logger = logging.getLogger(__name__)

# ==========================================
# CÓDIGOS DE SALIDA DEL CLI
# ==========================================
EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_BUDGET = 2
EXIT_USAGE = 3
EXIT_CONTRACT = 4
EXIT_SCHEDULE = 5
EXIT_TRACE_INTEGRITY = 6
EXIT_INTERNAL = 7
EXIT_UNEXPECTED = 10


class ZabCheckerError(Exception):
    """Excepción base de todas las fallas controladas del verificador."""
    exit_code: int = EXIT_UNEXPECTED

    def __init__(self, message: str, **detail):
        super().__init__(message)
        self.message = message
        self.detail = detail

    def __str__(self) -> str:
        if not self.detail:
            return self.message
        extra = ", ".join(f"{k}={v}" for k, v in self.detail.items())
        return f"{self.message} ({extra})"


class UsageError(ZabCheckerError):
    """Entrada de usuario inválida: manifest mal formado, mutación desconocida, flags fuera de rango."""
    exit_code = EXIT_USAGE


class ContractError(ZabCheckerError):
    """Precondición violada en una operación del núcleo. Siempre indica un bug del modelo."""
    exit_code = EXIT_CONTRACT


class ScheduleError(ZabCheckerError):
    """Acción de la traza sin correspondencia en la tabla de eventos del harness."""
    exit_code = EXIT_SCHEDULE


class TraceIntegrityError(ZabCheckerError):
    """Archivo de traza corrupto o cuyos digests no se reproducen al re-ejecutarlo."""
    exit_code = EXIT_TRACE_INTEGRITY


class InternalConsistencyError(ZabCheckerError):
    """El explorador produjo un resultado que no pudo revalidar (p.ej. digest no reproducible)."""
    exit_code = EXIT_INTERNAL


# --- Registro de Manejadores ---

ExceptionHandler = Callable[[Exception], int]
_HANDLERS: Dict[Type[Exception], ExceptionHandler] = {}


def _user_error_handler(exc: Exception) -> int:
    """Errores atribuibles al operador: se registran como warning, sin traceback."""
    logger.warning(f"Error de uso: {exc}")
    print(f"❌ Error: {exc}")
    return exit_code_for(exc)


def _validation_error_handler(exc: Exception) -> int:
    """Errores de validación de pydantic (manifest o flags). Nombra cada campo afectado."""
    if not isinstance(exc, ValidationError):
        return generic_exception_handler(exc)
    error_details = []
    for error in exc.errors():
        field = " -> ".join(map(str, error.get("loc", ()))) or "manifest"
        message = error.get("msg", "Error de validación")
        error_details.append(f"{field}: {message}")
    logger.warning(f"Error de validación de configuración: {error_details}")
    print("❌ Error de validación en la configuración:")
    for detail in error_details:
        print(f"   - {detail}")
    return EXIT_USAGE


def _internal_error_handler(exc: Exception) -> int:
    """Errores que delatan un bug del modelo o del explorador."""
    logger.error(f"Error interno ({type(exc).__name__}): {exc}", exc_info=True)
    print(f"❌ Error interno: {exc}")
    return exit_code_for(exc)


def generic_exception_handler(exc: Exception) -> int:
    """Último recurso para excepciones no previstas."""
    tb_str = "".join(traceback.format_exception(type(exc), exc, exc.__traceback__))
    logger.critical(f"Excepción no manejada: {type(exc).__name__}: {exc}\n{tb_str}")
    print(f"❌ Error inesperado: {type(exc).__name__}: {exc}")
    return EXIT_UNEXPECTED


def register_error_handlers() -> None:
    """Registra los manejadores de excepción en orden de especificidad."""
    _HANDLERS.clear()
    _HANDLERS[ValidationError] = _validation_error_handler
    _HANDLERS[UsageError] = _user_error_handler
    _HANDLERS[ScheduleError] = _user_error_handler
    _HANDLERS[TraceIntegrityError] = _user_error_handler
    _HANDLERS[ContractError] = _internal_error_handler
    _HANDLERS[InternalConsistencyError] = _internal_error_handler
    _HANDLERS[Exception] = generic_exception_handler
    logger.debug("Manejadores de errores registrados.")


def exit_code_for(exc: Exception) -> int:
    """Código de salida que corresponde a la excepción, sin efectos secundarios."""
    if isinstance(exc, ZabCheckerError):
        return exc.exit_code
    if isinstance(exc, ValidationError):
        return EXIT_USAGE
    return EXIT_UNEXPECTED


def handle_cli_exception(exc: Exception) -> int:
    """Despacha la excepción al manejador más específico y devuelve el código de salida."""
    if not _HANDLERS:
        register_error_handlers()
    for exc_type in type(exc).__mro__:
        handler = _HANDLERS.get(exc_type)
        if handler is not None:
            return handler(exc)
    return generic_exception_handler(exc)
