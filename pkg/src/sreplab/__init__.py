"""Simulation and numerics for perpetuities, stochastic recurrences and critical GARCH(1,1)."""

import os as _os
import warnings as _warnings

# Kernels are deterministic per replication, so oversubscribing is harmless;
# a pool of at least 8 lets thread-count reproducibility be checked anywhere.
_os.environ.setdefault("NUMBA_NUM_THREADS", str(max(8, _os.cpu_count() or 1)))
_warnings.filterwarnings("ignore", message="The TBB threading layer")

__version__ = "0.1.0"
