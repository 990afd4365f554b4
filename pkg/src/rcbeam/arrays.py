"""Steering vectors for the transmit planar array and the receive linear array.

The transmitter is a uniform planar array (UPA) with ``m1`` vertical and
``m2`` horizontal elements at spacing ``delta = spacing_ratio * wavelength``.
Its response to a departure direction (elevation ``theta`` measured from the
array's vertical axis, azimuth ``phi``) factors into a Kronecker product of
two uniform linear responses, one per axis.  The receive side is a plain
half-wavelength uniform linear array parameterized by azimuth only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["ArrayGeometry", "upa_response", "ula_response"]


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array layout: m1 vertical x m2 horizontal elements."""

    m1: int
    m2: int
    spacing_ratio: float = 0.5

    def __post_init__(self) -> None:
        if self.m1 < 1 or self.m2 < 1:
            raise ValueError("element counts must be >= 1")
        if not self.spacing_ratio > 0:
            raise ValueError("spacing_ratio must be > 0")

    @property
    def m_t(self) -> int:
        return self.m1 * self.m2


def _ula_phases(m: int, psi: float) -> np.ndarray:
    """[1, e^{-j psi}, ..., e^{-j (m-1) psi}]."""
    return np.exp(-1j * psi * np.arange(m))


def upa_response(array: ArrayGeometry, theta: float, phi: float) -> np.ndarray:
    """Transmit steering vector of length m1*m2 for direction (theta, phi).

    With psi1 = 2*pi*spacing_ratio*cos(theta) (vertical axis) and
    psi2 = 2*pi*spacing_ratio*sin(theta)*cos(phi) (horizontal axis), the
    result is kron(a(psi2), a(psi1)): the column-stacked response matrix of
    the grid, vertical index running fastest.  All entries have unit modulus.
    """
    two_pi_d = 2.0 * np.pi * array.spacing_ratio
    psi1 = two_pi_d * np.cos(theta)
    psi2 = two_pi_d * np.sin(theta) * np.cos(phi)
    return np.kron(_ula_phases(array.m2, psi2), _ula_phases(array.m1, psi1))


def ula_response(m_r: int, phi: float) -> np.ndarray:
    """Receive steering vector [1, e^{-j pi cos(phi)/2}, ...] of length m_r.

    The per-element phase step is (pi * cos(phi)) / 2.
    """
    if m_r < 1:
        raise ValueError("m_r must be >= 1")
    return _ula_phases(m_r, 0.5 * np.pi * np.cos(phi))
