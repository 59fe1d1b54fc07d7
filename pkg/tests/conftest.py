import os

# Single-thread the BLAS before numpy loads: the suite runs thousands of
# small dense solves and thread pools only add contention.
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")
