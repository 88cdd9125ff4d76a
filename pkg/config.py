"""
Configuration for the ENS laboratory
"""
import math
import os
from pathlib import Path
from dotenv import load_dotenv

load_dotenv()

# Base directory
BASE_DIR = Path(__file__).parent

# ========== PARALLELISM ==========
# Cap on FFT worker threads (0 = let scipy use every core)
ENSLAB_THREADS = int(os.getenv("ENSLAB_THREADS", "0"))
FFT_WORKERS = ENSLAB_THREADS if ENSLAB_THREADS > 0 else -1

# Worker threads for twin runs and ensemble sweeps
SWEEP_WORKERS = ENSLAB_THREADS if ENSLAB_THREADS > 0 else min(8, os.cpu_count() or 1)

# ========== GRID DEFAULTS ==========
DEFAULT_BOX_LEN = 16 * math.pi
MIN_POINTS = 8

# ========== SOLVER DEFAULTS ==========
CFL_NUMBER = 0.5
DEFAULT_CADENCE = 10             # ledger row every N steps
RHO_FLOOR_FACTOR = 1e-6          # conservative form: floor = factor * max(rho0)
NEGATIVE_RHO_FACTOR = 1e-8       # spectral undershoot tolerance on rho
DIVERGENCE_TOLERANCE = 1e-10     # max|div u| relative to max|grad u|
SYMMETRY_TOLERANCE = 1e-10       # imaginary residue allowed by inverse()
MIN_SIGMA_CELLS = 4              # length scales below this many cells are under-resolved

# ========== FUNCTIONAL DEFAULTS ==========
HEAT_NORM_POINTS_PER_DECADE = 64
LORENTZ_EXPONENT = 3

# Weighted dissipation integral: int (1 + a0 t)^beta * D1_tilde dt
WEIGHTED_INTEGRAL = {
    "a0": 1.0,
    "beta": 1.0,
}

# ========== EXPERIMENT DEFAULTS ==========
# These mirror the acceptance-size configurations; tests run smaller copies.
DECAY_FIT = {
    "min_points": 20,
    "log10_a_range": (-4.0, 4.0),
    "scan_points": 400,
}

# E1 decay check on a small-data run: monotone after t_from, fitted beta >= beta_min
ENS_DECAY = {
    "column": "E1",
    "t_from": 0.5,
    "beta_min": 1.2,
}

HEAT_DECAY = {
    "n": 128,
    "box_len": 16 * math.pi,
    "sigma": 2.5,
    "t_lo": 2.0,
    "t_hi": 40.0,
    "samples": 120,
}

TWIN_RUN = {
    "target": "u",
    "epsilon": 1e-3,
    "seed": 7,
    "band": 3,
}

INEQUALITY_SWEEP = {
    "resolutions": (32, 64),
    "count": 100,
    "band": 4,
    "seed": 2024,
    "embed0_p": 1.0,
}

BESOV_SWEEP = {
    "n": 32,
    "count": 50,
    "band": 2,
    "seed": 99,
}

DENSITY_LONGTIME = {
    "convergence_factor": 0.1,   # ||rho(T)-rho(T/2)|| < factor * ||rho(T/2)-rho0||
    "t_monotone_from": 1.0,
}

# Box validity window: decay fits are restricted to t <= (L / 4)^2
BOX_WINDOW_FRACTION = 0.25

# ========== STORAGE CONFIGURATION ==========
DATA_DIR = Path(os.getenv("ENSLAB_DATA_DIR", BASE_DIR / "data"))
DATA_DIR.mkdir(parents=True, exist_ok=True)

LEDGER_FILE = DATA_DIR / "ledger.csv"
CHECKPOINT_PATTERN = "ckpt_{step:08d}.bin"

# ========== LOGGING CONFIGURATION ==========
LOG_DIR = Path(os.getenv("ENSLAB_LOG_DIR", BASE_DIR / "logs"))
LOG_DIR.mkdir(parents=True, exist_ok=True)

LOG_FILE = LOG_DIR / "enslab.log"
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
