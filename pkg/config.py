# config.py - defaults and config-file loading for phidep
import os
import logging
import tomllib

from errors import ValidationError

logger = logging.getLogger(__name__)

VERSION = "0.3.0"

# Reproducibility
DEFAULT_SEED = 20240607
SEED_ENV_VAR = "PHIDEP_SEED"

# Estimation
DEFAULT_ALPHA = 0.05
DEFAULT_MC_SAMPLES = 10_000
DEFAULT_BOOTSTRAP = 200
GENERAL_PHI_MC_BUDGET = 1_000_000
MC_CHUNK = 65_536

# Numerics
QUADRATURE_NODES = 20
QUADRATURE_RTOL = 1e-7
QUADRATURE_MAX_NODES = 320
QUADRATURE_MAX_POINTS = 1 << 22
ORACLE_GRID = 200
BOUNDARY_EPS = 1e-12
SINGULAR_RATIO = 1e-300
SINGULAR_PIVOT = 1e-12
KURTOSIS_WARNING = 100.0
MAX_DENSITY_DIM = 6
MAX_GENERATOR_ORDER = 6
MAX_QUADRATURE_DIM = 4
MAX_ORACLE_DIM = 3

# Optimizer
NM_XATOL = 1e-6
NM_MAXITER = 500
THETA_UPPER = 50.0
CLAYTON_LOWER = 1e-6

LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


def default_seed():
    """Seed used when neither a flag nor a config file sets one."""
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or raw.strip() == "":
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(f"{SEED_ENV_VAR} must be an integer, got {raw!r}")


def resolve_threads(threads=None):
    if threads is None or threads <= 0:
        return os.cpu_count() or 1
    return int(threads)


def load_config(path):
    """Read a key = value TOML file; keys use underscores in place of dashes."""
    if path is None:
        return {}
    if not os.path.exists(path):
        raise FileNotFoundError(f"config file not found: {path}")
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"cannot parse config {path}: {exc}") from exc
    cfg = {str(k).replace("-", "_"): v for k, v in raw.items()}
    logger.debug("Loaded %d config keys from %s", len(cfg), path)
    return cfg
