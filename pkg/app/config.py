"""
Configuration constants for GaborNet Lab.
"""
import logging
import os
from pathlib import Path

# =============================================================================
# PATHS
# =============================================================================
BASE_DIR = Path(__file__).resolve().parent.parent

# MNIST IDX files (optionally gzip-compressed) are looked up here.
DATA_DIR = Path(os.getenv("GABORNET_DATA_DIR", str(BASE_DIR / "data")))

# Run reports, comparison tables and bank tiles.
RESULTS_DIR = Path(os.getenv("GABORNET_RESULTS_DIR", str(BASE_DIR / "results")))

# Optional JSON cost table used by the API (CLI takes --cost-table instead).
COST_TABLE_PATH = os.getenv("GABORNET_COST_TABLE", "")

# =============================================================================
# LOGGING
# =============================================================================
LOG_LEVEL = os.getenv("GABORNET_LOG_LEVEL", "INFO")
LOG_FORMAT = "[%(levelname)s] %(message)s"


def configure_logging(level: str = LOG_LEVEL) -> None:
    """Configure root logging once for the CLI, scripts and the API."""
    logging.basicConfig(level=level.upper(), format=LOG_FORMAT)


# =============================================================================
# DATASETS
# =============================================================================
IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

MNIST_FILES = {
    "train": ("train-images-idx3-ubyte", "train-labels-idx1-ubyte"),
    "test": ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"),
}
MNIST_CLASSES = 10

DATASET_MNIST = "mnist"
DATASET_SYNTHETIC = "synthetic"
DATASETS = [DATASET_MNIST, DATASET_SYNTHETIC]

# Synthetic two-class stand-in for the face / non-face benchmark
SYNTH_DEFAULT_SAMPLES = 800
SYNTH_DEFAULT_SIZE = 48
SYNTH_MIN_SIZE = 8
SYNTH_TRAIN_FRACTION = 0.75
SYNTH_NOISE = 0.05

# =============================================================================
# ARCHITECTURES
# =============================================================================
ARCHITECTURE_PRESETS = {
    "mnist": "784 (5x5)6c 2s (5x5)12c 2s 10o",
    "tich": "784 (5x5)10c 2s (5x5)20c 2s 36o",
    "facedet": "2304 (5x5)6c 2s (5x5)12c 2s 2o",
}
DEFAULT_ARCHITECTURE = ARCHITECTURE_PRESETS["mnist"]

# =============================================================================
# TRAINING DEFAULTS
# =============================================================================
DEFAULT_EPOCHS = 10
DEFAULT_BATCH_SIZE = 50
DEFAULT_LEARNING_RATE = 1.0
DEFAULT_SEED = 0
EVAL_BATCH_SIZE = 500

TRAIN_DTYPE = "float32"
CHECK_DTYPE = "float64"

# =============================================================================
# GABOR DEFAULTS
# =============================================================================
GABOR_DEFAULT_PSI = 0.0
GABOR_DEFAULT_GAMMA = 0.5
GABOR_SIGMA_PER_WAVELENGTH = 0.56  # one-octave bandwidth

# Below this L2 norm a sampled kernel counts as all-zero
GABOR_DEGENERATE_NORM = 1e-12

# =============================================================================
# POLICY PRESETS
# =============================================================================
PRESET_BASELINE = "baseline"
PRESET_GABOR1 = "gabor1"
PRESET_GABOR_ALL = "gabor-all"
PRESET_HALF_HALF = "half-half"

PRESETS = [PRESET_BASELINE, PRESET_GABOR1, PRESET_GABOR_ALL, PRESET_HALF_HALF]

PRESET_LABELS = {
    PRESET_BASELINE: "Trainable / Trainable",
    PRESET_GABOR1: "Fixed Gabor / Trainable",
    PRESET_GABOR_ALL: "Fixed Gabor / Fixed Gabor",
    PRESET_HALF_HALF: "Fixed Gabor / Half Fixed & Half Trainable",
}

PRESET_ALIASES = {
    "BASELINE": PRESET_BASELINE,
    "BASE": PRESET_BASELINE,
    "CONVENTIONAL": PRESET_BASELINE,
    "TRAINABLE": PRESET_BASELINE,

    "GABOR1": PRESET_GABOR1,
    "GABOR-1": PRESET_GABOR1,
    "GABOR_1": PRESET_GABOR1,
    "FIXED-TRAINABLE": PRESET_GABOR1,

    "GABOR-ALL": PRESET_GABOR_ALL,
    "GABOR_ALL": PRESET_GABOR_ALL,
    "GABORALL": PRESET_GABOR_ALL,
    "ALL-GABOR": PRESET_GABOR_ALL,
    "FIXED-FIXED": PRESET_GABOR_ALL,

    "HALF-HALF": PRESET_HALF_HALF,
    "HALF_HALF": PRESET_HALF_HALF,
    "HALFHALF": PRESET_HALF_HALF,
    "HH": PRESET_HALF_HALF,
    "BLENDED": PRESET_HALF_HALF,
}

# Fixed output-map counts of the second conv layer in the sweep
SWEEP_FIXED_COUNTS = (0, 3, 6, 9, 12)

# =============================================================================
# COST TABLE DEFAULTS
# =============================================================================
PHASE_FORWARD = "forward_prop"
PHASE_ERROR_LOSS = "error_and_loss"
PHASE_BACKPROP_ERROR = "backprop_error"
PHASE_WEIGHT_GRADIENT = "weight_gradient"
PHASE_WEIGHT_UPDATE = "weight_update"

MEM_WEIGHT_READ = "weight_read"
MEM_WEIGHT_WRITE = "weight_write"
MEM_ACTIVATION_READ = "activation_read"
MEM_ACTIVATION_WRITE = "activation_write"

DEFAULT_ENERGY_PER_MAC = 1.0

# Error routing is a small share of training energy; its MACs are priced low.
DEFAULT_PHASE_MAC_WEIGHTS = {
    PHASE_FORWARD: 1.0,
    PHASE_ERROR_LOSS: 1.0,
    PHASE_BACKPROP_ERROR: 0.03,
    PHASE_WEIGHT_GRADIENT: 1.0,
    PHASE_WEIGHT_UPDATE: 1.0,
}

DEFAULT_MEM_EVENT_ENERGY = {
    MEM_WEIGHT_READ: 2.5,
    MEM_WEIGHT_WRITE: 2.5,
    MEM_ACTIVATION_READ: 2.5,
    MEM_ACTIVATION_WRITE: 2.5,
}

BYTES_PER_VALUE = 4  # 32-bit parameters

# =============================================================================
# GRADIENT CHECK
# =============================================================================
GRAD_CHECK_STEP = 1e-3
GRAD_CHECK_TOLERANCE = 1e-4
GRAD_CHECK_FLOOR = 1e-3

# =============================================================================
# RUN STORE (API)
# =============================================================================
RUN_STORE_EXPIRATION_HOURS = 24
RUN_STORE_MAX_RUNS = 50
