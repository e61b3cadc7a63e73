# app/config.py

import logging
import os
from pathlib import Path

from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict
from rich.logging import RichHandler

from .exceptions import ConfigError
from .schemas import RunConfig

# Determina la ruta al archivo .env
# Esto asume que .env está en el directorio raíz (junto a la carpeta 'app')
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
ENV_PATH = os.path.join(BASE_DIR, '.env')

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """
    Define y carga las variables de entorno de la aplicación.
    Pydantic-settings se encarga de leer el .env y validar los tipos.
    """

    model_config = SettingsConfigDict(
        env_file=ENV_PATH,
        env_file_encoding="utf-8",
        env_prefix="HAWKES_",
        extra="ignore"              # Ignora otras variables de entorno
    )

    # --- Opcionales con valor por defecto ---

    # Directorio de salida (CSV, JSON, checkpoints). Sobrescribe el del config JSON.
    OUTPUT_DIR: str | None = None
    LOG_LEVEL: str = "INFO"

    # Paralelismo de las simulaciones Monte Carlo
    WORKERS: int = 1
    # Trayectorias por stream de números aleatorios (fijo: no depende de WORKERS)
    CHUNK_SIZE: int = 256


def setup_logging(level: str | None = None) -> None:
    """Instala un RichHandler en el logger raíz (idempotente)."""
    root = logging.getLogger()
    if not any(isinstance(h, RichHandler) for h in root.handlers):
        root.addHandler(RichHandler(rich_tracebacks=True, show_path=False))
    root.setLevel((level or settings.LOG_LEVEL).upper())


# --- Instancia Única ---
# Todos los demás archivos importarán ESTA instancia.
try:
    settings = Settings()
except Exception as e:
    logger.error("No se pudieron cargar las variables de entorno: %s", e)
    logger.error("Revisa el archivo .env en %s", ENV_PATH)
    raise


# --- Configuración de ejecución (JSON) ---

def load_run_config(path) -> RunConfig:
    """Lee y valida el JSON de configuración. Cualquier fallo es un ConfigError."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"No existe el archivo de configuración: {path}")
    try:
        cfg = RunConfig.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise ConfigError(f"Configuración inválida en {path}:\n{e}") from e
    logger.info("Configuración cargada desde %s", path)
    return cfg


def resolve_output_dir(cfg_output_dir: str) -> Path:
    """HAWKES_OUTPUT_DIR tiene prioridad sobre output_dir del JSON."""
    out = Path(settings.OUTPUT_DIR or cfg_output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out
