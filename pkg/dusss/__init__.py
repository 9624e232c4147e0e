"""Uncertainty-aware vision-language pretraining and text-guided semi-supervised segmentation."""

import os

__version__ = "0.1.0"

# BLAS pools are sized when numpy is first imported, so the cap is applied here
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(_var, os.getenv("DUSSS_THREADS", "1"))
