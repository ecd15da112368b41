from pathlib import Path
from typing import Any

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """
    Configuraciones del verificador, leídas automáticamente desde .env y el entorno.
    """
    # --- Configuración General del Proyecto ---
    PROJECT_NAME: str = "Zab Spec Checker"
    APP_COMPONENT: str = "cli"

    # --- Directorios de Salida ---
    ZAB_OUTPUT_DIR: Path = Path("./runs")
    LOGS_DIR: Path = Path(__file__).resolve().parent.parent.parent / "logs"

    # --- Valores por Defecto de Exploración ---
    DEFAULT_MAX_TRACE_LEN: int = 100
    DEFAULT_SEED: int = 20240101
    DEFAULT_TIME_LIMIT_SECS: int = 300
    DEFAULT_STATE_LIMIT: int = 2_000_000
    DEFAULT_MAX_WALKS: int = 1000
    MAX_SERVERS_UNFORCED: int = 5

    # --- Logging ---
    LOG_LEVEL: str = "INFO"
    LOG_TO_FILE: bool = True

    @field_validator("LOG_LEVEL", mode='before')
    @classmethod
    def normalize_log_level(cls, v: Any) -> str:
        if isinstance(v, str):
            v = v.strip().upper()
        if v not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Nivel de log no soportado: {v}")
        return v

    @field_validator("DEFAULT_MAX_TRACE_LEN", "MAX_SERVERS_UNFORCED", mode='before')
    @classmethod
    def positive_int(cls, v: Any) -> Any:
        if isinstance(v, str):
            v = int(v.strip())
        if isinstance(v, int) and v < 1:
            raise ValueError("debe ser un entero >= 1")
        return v

    model_config = SettingsConfigDict(
        case_sensitive=True,
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


settings = Settings()
