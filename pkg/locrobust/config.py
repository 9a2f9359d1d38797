"""
Centralized configuration settings for the toolkit.
"""

import os
from dotenv import load_dotenv

load_dotenv()

# --- Output Configuration ---
OUTPUT_DIR = os.getenv("LOCROBUST_OUT", "out")
DEFAULT_SEED = int(os.getenv("LOCROBUST_SEED", 0))
LOG_LEVEL = os.getenv("LOCROBUST_LOG_LEVEL", "INFO")

# --- Execution Configuration ---
THREADS = int(os.getenv("LOCROBUST_THREADS", 1))
BACKEND = os.getenv("LOCROBUST_BACKEND", "threads")  # "threads" or "celery"

# --- Celery Configuration ---
CELERY_BROKER_URL = os.getenv("CELERY_BROKER_URL", "redis://localhost:6379/0")
CELERY_RESULT_BACKEND = os.getenv("CELERY_RESULT_BACKEND", "redis://localhost:6379/0")

# --- Numerical Tolerances ---
# Eigenvalue floor accepted as positive semi-definite.
PSD_TOLERANCE = float(os.getenv("LOCROBUST_PSD_TOLERANCE", 1e-10))
# Angular distance within which a slice counts as lying on the heading lattice.
LATTICE_TOLERANCE = 1e-9
