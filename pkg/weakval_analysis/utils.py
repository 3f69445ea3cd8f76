import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import List, Literal, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from .services.oracle import MatExpSpec, QuadratureSpec

# =========================
# === Environment Load  ===
# =========================
# Load env explicitly from project root (../.env) and optional .env.local
ROOT_DIR = Path(__file__).resolve().parents[1]  # project root (one level above /weakval_analysis)
load_dotenv(ROOT_DIR / ".env")
load_dotenv(ROOT_DIR / ".env.local", override=True)

SCRIPT_DIR = Path(__file__).resolve().parent
DEFAULT_CONFIG_PATH = SCRIPT_DIR / "lab_configs" / "default_lab_config.json"

LOG_FORMAT = '%(asctime)s %(levelname)s: %(message)s [in %(pathname)s:%(lineno)d]'


# =========================
# === Lab config        ===
# =========================
class SweepDefaults(BaseModel):
    model: Literal["gaussian", "qubit"] = "gaussian"
    dim: int = Field(default=4, ge=2)
    seed: int = Field(default=7, ge=0)
    epsilons: List[float] = [1e-1, 1e-2, 1e-3, 1e-4]
    delta: float = Field(default=1.0, gt=0.0)
    hbar: float = Field(default=1.0, gt=0.0)
    basis: Literal["eigen", "random", "supplied"] = "random"


class DensityDefaults(BaseModel):
    points: int = Field(default=201, ge=2)
    half_width: float = Field(default=6.0, gt=0.0)
    floor: float = Field(default=1e-15, ge=0.0)


class CheckDefaults(BaseModel):
    verify_cases: int = Field(default=1000, ge=1)
    verify_seed: int = Field(default=0, ge=0)
    gamma_max_j: int = Field(default=50, ge=0)
    factorial_max_j: int = Field(default=300, ge=2)
    robbins_max_n: int = Field(default=170, ge=1)
    dominance_instances: int = Field(default=100, ge=1)


class LabConfig(BaseModel):
    quadrature: QuadratureSpec = QuadratureSpec()
    matrix_exponential: MatExpSpec = MatExpSpec()
    sweep: SweepDefaults = SweepDefaults()
    certify_xi: float = Field(default=0.01, gt=0.0, lt=1.0)
    density: DensityDefaults = DensityDefaults()
    checks: CheckDefaults = CheckDefaults()


def load_lab_config(path: Optional[str] = None) -> LabConfig:
    """
    Read and validate the JSON lab config.

    Priority: passed path -> WEAKVAL_CONFIG -> bundled default
    """
    config_path = Path(path or os.getenv("WEAKVAL_CONFIG") or DEFAULT_CONFIG_PATH)
    try:
        with open(config_path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
        return LabConfig.model_validate(raw)
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise ValueError(f"invalid lab config {config_path}: {e}") from e


# =========================
# === Env resolvers     ===
# =========================
def _env_int(name: str) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return None
    try:
        return int(raw)
    except ValueError:
        logging.warning("Ignoring non-integer %s=%r", name, raw)
        return None


def resolve_seed(passed: Optional[int] = None) -> Optional[int]:
    """
    Priority: WEAKVAL_SEED -> passed arg
    """
    env_seed = _env_int("WEAKVAL_SEED")
    return env_seed if env_seed is not None else passed


def resolve_jobs(passed: Optional[int] = None) -> int:
    """
    Priority: passed arg -> WEAKVAL_JOBS -> 1
    """
    return max(1, passed or _env_int("WEAKVAL_JOBS") or 1)


# =========================
# === Logging           ===
# =========================
def setup_logging(level: Optional[str] = None, log_dir: Optional[str] = None, run_name: str = "weakval") -> None:
    level_name = (level or os.getenv("WEAKVAL_LOG_LEVEL") or "INFO").upper()
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]

    log_dir = log_dir or os.getenv("WEAKVAL_LOG_DIR")
    if log_dir:
        os.makedirs(log_dir, exist_ok=True)
        log_time = time.strftime('%Y-%m-%d-%H-%M-%S')
        handlers.append(logging.FileHandler(Path(log_dir) / f"{run_name}-{log_time}.log"))

    root = logging.getLogger()
    # Clear existing handlers to avoid duplicate lines across runs
    for h in list(root.handlers):
        root.removeHandler(h)

    logging.basicConfig(
        level=getattr(logging, level_name, logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
    )
