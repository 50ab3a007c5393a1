"""Persistence probabilities of partial sums and iterated partial sums."""

import os

import numba

# the bundled TBB is too old for numba; skip probing it
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER = "omp"

__version__ = "0.1.0"
