"""Small shared numerical helpers (unit conversion, Hermitian utilities)."""

from __future__ import annotations

import numpy as np

__all__ = ["dbm_to_mw", "mw_to_dbm", "herm", "inv_sqrt_psd"]


def dbm_to_mw(x_dbm: float) -> float:
    """Convert dBm to linear milliwatts: mW = 10^(dBm/10)."""
    return float(10.0 ** (np.asarray(x_dbm) / 10.0))


def mw_to_dbm(x_mw: float) -> float:
    """Convert linear milliwatts to dBm. Zero power maps to -inf."""
    x_mw = float(x_mw)
    if x_mw <= 0.0:
        return float("-inf")
    return float(10.0 * np.log10(x_mw))


def herm(x: np.ndarray) -> np.ndarray:
    """Conjugate transpose."""
    return x.conj().T


def inv_sqrt_psd(z: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Inverse square root of a Hermitian positive (semi)definite matrix.

    The input is symmetrized before the eigendecomposition and eigenvalues
    are clamped from below at ``floor`` so the result exists even when the
    smallest eigenvalues are zero up to rounding.
    """
    zs = 0.5 * (z + herm(z))
    w, v = np.linalg.eigh(zs)
    w = np.maximum(w, floor)
    return (v / np.sqrt(w)) @ herm(v)
