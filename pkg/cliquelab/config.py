"""
Runtime configuration for cliquelab

Settings are read from the environment (optionally through a .env file) and can be
overridden by explicit constructor arguments everywhere they are used.
"""

import os
from dataclasses import dataclass
from typing import Optional

from dotenv import load_dotenv

# Load environment variables
load_dotenv()


DEFAULT_SEED = 20150721
DEFAULT_RHO = 1.0 / 3.0
DEFAULT_WITNESS_C = 3.0

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _env_bool(name: str, default: bool) -> bool:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    value = raw.strip().lower()
    if value in _TRUE:
        return True
    if value in _FALSE:
        return False
    raise ValueError(f"{name} must be true or false, got {raw!r}")


def _env_number(name: str, default, cast):
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        return cast(raw)
    except ValueError:
        raise ValueError(f"{name} is not a valid {cast.__name__}: {raw!r}") from None


@dataclass(frozen=True)
class Settings:
    """Resolved configuration values"""
    seed: int = DEFAULT_SEED
    rho: float = DEFAULT_RHO
    witness_c: float = DEFAULT_WITNESS_C
    keep_ledger: bool = True
    record_payloads: bool = False
    log_level: str = "WARNING"
    backend: str = "auto"

    def __post_init__(self):
        if not 0.0 < self.rho <= 1.0:
            raise ValueError(f"CLIQUE_RHO must lie in (0, 1], got {self.rho}")
        if self.witness_c <= 0:
            raise ValueError(f"CLIQUE_WITNESS_C must be positive, got {self.witness_c}")


def load_settings(seed: Optional[int] = None, backend: Optional[str] = None) -> Settings:
    """Read settings from the environment; explicit arguments win."""
    return Settings(
        seed=seed if seed is not None else _env_number("CLIQUE_SEED", DEFAULT_SEED, int),
        rho=_env_number("CLIQUE_RHO", DEFAULT_RHO, float),
        witness_c=_env_number("CLIQUE_WITNESS_C", DEFAULT_WITNESS_C, float),
        keep_ledger=_env_bool("CLIQUE_KEEP_LEDGER", True),
        record_payloads=_env_bool("CLIQUE_RECORD_PAYLOADS", False),
        log_level=os.getenv("CLIQUE_LOG_LEVEL", "WARNING").upper(),
        backend=backend or os.getenv("CLIQUE_BACKEND", "auto"),
    )
