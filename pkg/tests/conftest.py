import os

# Pin BLAS pools before numpy ever loads: throughput and determinism
# checks below mean "single-threaded" literally.
for _var in (
    "OMP_NUM_THREADS",
    "OPENBLAS_NUM_THREADS",
    "MKL_NUM_THREADS",
    "NUMEXPR_NUM_THREADS",
):
    os.environ.setdefault(_var, "1")
