"""Validation error measures."""
from __future__ import annotations

import numpy as np

from ..errors import DegenerateReference, LengthMismatch


def _vals(s):
    return np.asarray(getattr(s, "values", s), dtype=float)


def error_l1(reference, model_out, m: int, y_smax: float) -> float:
    """Scaled L1 error ``sum_{j>=m} |ref_j - out_j| / (Q * y_smax)``.

    The first ``m - 1`` samples (undefined model warm-up) are skipped but
    ``Q`` still counts every sample.
    """
    ref, out = _vals(reference), _vals(model_out)
    if ref.size != out.size:
        raise LengthMismatch(f"reference has {ref.size} samples, model output {out.size}")
    if ref.size < m:
        raise LengthMismatch(f"need at least m={m} samples")
    Q = ref.size
    return float(np.abs(ref[m - 1:] - out[m - 1:]).sum() / (Q * y_smax))


def error_l2_normalized(reference, model_out) -> float:
    """``||ref - out||_2 / ((max(ref) - min(ref)) * sqrt(N))``."""
    ref, out = _vals(reference), _vals(model_out)
    if ref.size != out.size:
        raise LengthMismatch(f"reference has {ref.size} samples, model output {out.size}")
    span = ref.max() - ref.min()
    if not span > 0:
        raise DegenerateReference("reference is constant")
    return float(np.linalg.norm(ref - out) / (span * np.sqrt(ref.size)))
