import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="EXCHKIT_", case_sensitive=True)

    # Cotas de búsqueda
    ENUM_CAP: int = 6
    MEMBERSHIP_CAP: int = 8
    CONSTRAINT_VAR_CAP: int = 6
    EXTENSION_BOUND: int = 2
    SIDE_TAG_BOUND: int = 3

    # Monte Carlo
    MC_SAMPLES: int = 100_000
    TV_THRESHOLD: float = 0.02
    P_THRESHOLD: float = 1e-3
    POOL_MIN_EXPECTED: float = 5.0

    # Modo exacto
    EXACT_ATOM_CAP: int = 1 << 20

    # Arrays jerárquicos
    AP_PRECISION: int = 16
    AP_POINT_CAP: int = 10_000
    INVARIANCE_PERMUTATIONS: int = 4
    AP_INVARIANCE_BITS: int = 4

    LOG_LEVEL: str = "INFO"
    KSPEC_DIR: str = os.getenv("EXCHKIT_KSPEC_DIR", str(BASE_DIR / "kspecs"))
    SCHEMA_DIR: str = os.getenv("EXCHKIT_SCHEMA_DIR", str(BASE_DIR / "schemas"))

    # Directorios como Path
    @property
    def kspec_path(self) -> Path:
        return Path(self.KSPEC_DIR)

    @property
    def schema_path(self) -> Path:
        return Path(self.SCHEMA_DIR)


settings = Settings()
