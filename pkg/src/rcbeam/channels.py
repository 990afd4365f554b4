"""Seeded random channel generation.

Two models are provided: uncorrelated Rayleigh fading (i.i.d. unit-variance
circularly symmetric complex Gaussian entries) and a clustered model in
which each user's M_r x M_t matrix is a sum of M_s scattered paths

    H = (1/sqrt(M_s)) * sum_q alpha_q a_r(phi_qr) a_t(theta_qt, phi_qt)^H

with standard complex Gaussian path gains alpha_q, per-path angular
perturbations around a mean departure direction (Gaussian, variances xi1 in
azimuth and xi2 in elevation) and uniform arrival azimuths.

PRNG contract
-------------
Streams come from numpy's counter-based Philox generator keyed by
``SeedSequence([seed, user_index])``, where ``seed`` is the per-trial token.
Gaussians use numpy's standard_normal (ziggurat); complex Gaussians are
(x + jy)/sqrt(2) from two consecutive standard normals.  Draw order within
``clustered`` is fixed: mean-direction box index (if boxes are given), mean
elevation, mean azimuth, path gains, azimuth perturbations, elevation
perturbations, arrival azimuths.  Identical seeds reproduce identical
realizations on any platform; cross-language ports can replicate streams by
reproducing Philox + ziggurat, but nothing in the package depends on that.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .arrays import ArrayGeometry, ula_response, upa_response

__all__ = ["ChannelRealization", "ClusterParams", "rayleigh", "clustered"]


@dataclass(frozen=True)
class ChannelRealization:
    """K per-user channel matrices (each M_r x M_t) plus the seed that made them."""

    per_user: tuple[np.ndarray, ...]
    seed: int

    def __post_init__(self) -> None:
        shapes = {h.shape for h in self.per_user}
        if len(shapes) > 1:
            raise ValueError(f"inconsistent channel shapes {shapes}")
        if any(not np.all(np.isfinite(h)) for h in self.per_user):
            raise ValueError("channel entries must be finite")

    @property
    def k_users(self) -> int:
        return len(self.per_user)


@dataclass(frozen=True)
class ClusterParams:
    """Clustered-channel parameters.

    Exactly one of ``mean_aod`` (a fixed (theta, phi) mean departure
    direction) or ``aod_boxes`` (rectangular (theta, phi) boxes, one of which
    is picked uniformly at random and the mean drawn uniformly inside it)
    must be given.  Boxes are ((theta_lo, theta_hi), (phi_lo, phi_hi)).
    """

    m_s: int = 20
    xi1: float = 0.02
    xi2: float = 0.05
    mean_aod: tuple[float, float] | None = None
    aod_boxes: Sequence[tuple[tuple[float, float], tuple[float, float]]] | None = None

    def __post_init__(self) -> None:
        if self.m_s < 1:
            raise ValueError("m_s must be >= 1")
        if self.xi1 < 0 or self.xi2 < 0:
            raise ValueError("perturbation variances must be >= 0")
        if (self.mean_aod is None) == (self.aod_boxes is None):
            raise ValueError("give exactly one of mean_aod or aod_boxes")


def _user_rng(seed: int, user: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, user])))


def _complex_normal(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def rayleigh(seed: int, k_users: int, m_r: int, m_t: int) -> ChannelRealization:
    """K independent M_r x M_t matrices of i.i.d. CN(0, 1) entries."""
    if min(k_users, m_r, m_t) < 1:
        raise ValueError("dimensions must be >= 1")
    per_user = tuple(
        _complex_normal(_user_rng(seed, k), (m_r, m_t)) for k in range(k_users)
    )
    return ChannelRealization(per_user=per_user, seed=int(seed))


def clustered(
    seed: int,
    params: ClusterParams,
    array: ArrayGeometry,
    m_r: int,
    k_users: int = 1,
) -> ChannelRealization:
    """K independent clustered channels over the given transmit array."""
    if m_r < 1 or k_users < 1:
        raise ValueError("dimensions must be >= 1")
    per_user = []
    for k in range(k_users):
        rng = _user_rng(seed, k)
        if params.aod_boxes is not None:
            box = params.aod_boxes[int(rng.integers(len(params.aod_boxes)))]
            (t_lo, t_hi), (p_lo, p_hi) = box
            theta_bar = rng.uniform(t_lo, t_hi)
            phi_bar = rng.uniform(p_lo, p_hi)
        else:
            theta_bar, phi_bar = params.mean_aod
        alpha = _complex_normal(rng, params.m_s)
        d_phi = rng.normal(0.0, np.sqrt(params.xi1), params.m_s)
        d_theta = rng.normal(0.0, np.sqrt(params.xi2), params.m_s)
        phi_r = rng.uniform(0.0, 2.0 * np.pi, params.m_s)
        h = np.zeros((m_r, array.m_t), dtype=complex)
        for q in range(params.m_s):
            a_r = ula_response(m_r, phi_r[q])
            a_t = upa_response(array, theta_bar + d_theta[q], phi_bar + d_phi[q])
            h += alpha[q] * np.outer(a_r, a_t.conj())
        per_user.append(h / np.sqrt(params.m_s))
    return ChannelRealization(per_user=tuple(per_user), seed=int(seed))
