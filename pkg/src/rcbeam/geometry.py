"""Protected-region geometry and received-power characteristic matrices.

A protected region is a patch of ground, bounded toward the transmitter by
either a straight segment or a circle, over a height span [c3_min, c3_max].
The received power density cap is enforced on samples of the boundary
surface *nearest* the transmitter: points farther along the same direction
are protected automatically by path loss (power falls off as 1/d^gamma).

Every boundary sample (d, theta, phi) yields a rank-one Hermitian PSD
characteristic matrix R = r r^H with r = a(theta, phi) / sqrt(4 pi d^gamma),
where a is the transmit steering vector; the average received power density
of precoders {F_k} at that sample is sum_k trace(F_k^H R F_k) = sum_k
||F_k^H r||^2, in milliwatts.  All distances are meters, all powers linear
milliwatts; dBm conversion happens at I/O boundaries only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .arrays import ArrayGeometry, upa_response
from .util import herm

__all__ = [
    "GeometryDomainError",
    "DegenerateGeometryError",
    "LineSegment",
    "CircleBoundary",
    "PolylineBoundary",
    "RegionSpec",
    "BoundarySample",
    "CharacteristicMatrix",
    "line_distance",
    "circle_distance",
    "elevation_distance",
    "theta_span",
    "sample_boundary",
    "interference",
]

_ANGLE_TOL = 1e-9


class GeometryDomainError(ValueError):
    """An angle or point fell outside the valid domain of a boundary curve."""


class DegenerateGeometryError(GeometryDomainError):
    """The boundary parameters cannot describe a visible curve."""


def _wrap_angle(x: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return float(np.pi - np.mod(np.pi - x, 2.0 * np.pi))


@dataclass(frozen=True)
class _AngularSpan:
    """A contiguous azimuth interval, stored wrap-safely as center +/- half."""

    center: float
    half: float

    @classmethod
    def from_endpoints(cls, a: float, b: float) -> "_AngularSpan":
        d = _wrap_angle(b - a)
        return cls(center=a + 0.5 * d, half=0.5 * abs(d))

    def contains(self, phi: float, tol: float = _ANGLE_TOL) -> bool:
        return abs(_wrap_angle(phi - self.center)) <= self.half + tol

    def linspace(self, n: int) -> np.ndarray:
        if n == 1:
            return np.array([self.center])
        return np.linspace(self.center - self.half, self.center + self.half, n)

    def uniform(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return self.center + self.half * rng.uniform(-1.0, 1.0, size=n)

    @property
    def bounds(self) -> tuple[float, float]:
        return (self.center - self.half, self.center + self.half)


@dataclass(frozen=True)
class LineSegment:
    """Straight boundary piece: points on w1*c1 + w2*c2 = w3 between two endpoints.

    The segment is viewed from the transmitter at the origin; its azimuth span
    is bounded by the endpoints' azimuths (azimuth is monotone along a straight
    segment).  w3 > 0 is required so distances along the span are positive.
    """

    coeffs: tuple[float, float, float]
    start: tuple[float, float]
    end: tuple[float, float]

    def __post_init__(self) -> None:
        w1, w2, w3 = self.coeffs
        if w1 == 0.0 and w2 == 0.0:
            raise DegenerateGeometryError("line normal (w1, w2) is zero")
        if w3 <= 0.0:
            raise DegenerateGeometryError(
                "w3 must be > 0 (boundary line must not pass through the origin)"
            )
        scale = abs(w3)
        for p in (self.start, self.end):
            if abs(w1 * p[0] + w2 * p[1] - w3) > 1e-6 * scale:
                raise ValueError(f"endpoint {p} does not lie on the boundary line")

    @classmethod
    def from_endpoints(
        cls, start: Sequence[float], end: Sequence[float]
    ) -> "LineSegment":
        """Build the segment through two points, orienting w3 > 0."""
        (x0, y0), (x1, y1) = start, end
        w1, w2 = y0 - y1, x1 - x0
        w3 = w1 * x0 + w2 * y0
        if w3 < 0:
            w1, w2, w3 = -w1, -w2, -w3
        return cls((float(w1), float(w2), float(w3)), (float(x0), float(y0)), (float(x1), float(y1)))

    @property
    def phi_span(self) -> _AngularSpan:
        a = np.arctan2(self.start[1], self.start[0])
        b = np.arctan2(self.end[1], self.end[0])
        return _AngularSpan.from_endpoints(float(a), float(b))


@dataclass(frozen=True)
class CircleBoundary:
    """Circular boundary of radius ``radius`` centered at ``center`` (meters)."""

    center: tuple[float, float]
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise DegenerateGeometryError("radius must be > 0")
        if np.hypot(*self.center) <= self.radius:
            raise DegenerateGeometryError(
                "transmitter lies inside or on the circle; no near boundary exists"
            )

    @property
    def phi_span(self) -> _AngularSpan:
        rho = float(np.hypot(*self.center))
        center_az = float(np.arctan2(self.center[1], self.center[0]))
        return _AngularSpan(center=center_az, half=float(np.arcsin(self.radius / rho)))


@dataclass(frozen=True)
class PolylineBoundary:
    """A chain of straight segments; ``sample_segments`` picks which ones are
    constrained (None = all).  Regions adjoined by several segments typically
    constrain only the segment facing the transmitter."""

    segments: tuple[LineSegment, ...]
    sample_segments: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if not self.segments:
            raise ValueError("polyline needs at least one segment")
        if self.sample_segments is not None:
            for i in self.sample_segments:
                if not 0 <= i < len(self.segments):
                    raise ValueError(f"sample_segments index {i} out of range")

    @property
    def sampled(self) -> tuple[LineSegment, ...]:
        if self.sample_segments is None:
            return self.segments
        return tuple(self.segments[i] for i in self.sample_segments)


@dataclass(frozen=True)
class RegionSpec:
    """One protected region: a boundary shape, a received-power cap q_mw
    (linear milliwatts), a height span, sample counts and a path-loss
    exponent gamma."""

    shape: PolylineBoundary | CircleBoundary
    q_mw: float
    c3_min: float = 0.0
    c3_max: float = 1500.0
    n_azimuth: int = 10
    n_elevation: int = 5
    gamma: float = 2.0

    def __post_init__(self) -> None:
        if not self.q_mw > 0:
            raise ValueError("q_mw must be > 0")
        if self.c3_min < 0 or self.c3_max < self.c3_min:
            raise ValueError("need 0 <= c3_min <= c3_max")
        if self.n_azimuth < 1 or self.n_elevation < 1:
            raise ValueError("sample counts must be >= 1")
        if not self.gamma > 0:
            raise ValueError("gamma must be > 0")

    @property
    def pieces(self) -> tuple[LineSegment | CircleBoundary, ...]:
        if isinstance(self.shape, CircleBoundary):
            return (self.shape,)
        return self.shape.sampled


@dataclass(frozen=True)
class BoundarySample:
    """One sampled boundary point: 3-D distance d and departure angles."""

    d: float
    theta: float
    phi: float

    def __post_init__(self) -> None:
        if not self.d > 0:
            raise ValueError("sample distance must be > 0")
        if not 0.0 < self.theta <= 0.5 * np.pi + _ANGLE_TOL:
            raise ValueError("theta must lie in (0, pi/2]")


@dataclass(frozen=True)
class CharacteristicMatrix:
    """Rank-one received-power matrix R = r r^H for one boundary sample.

    Only the factor r = a(theta, phi) / sqrt(4 pi d^gamma) is stored; the
    full matrix is materialized on demand.  trace(R) = ||r||^2 = M_t /
    (4 pi d^gamma) because steering entries have unit modulus.
    """

    factor: np.ndarray
    sample: BoundarySample | None = field(default=None, compare=False)

    @classmethod
    def from_sample(
        cls, array: ArrayGeometry, sample: BoundarySample, gamma: float
    ) -> "CharacteristicMatrix":
        scale = np.sqrt(4.0 * np.pi * sample.d**gamma)
        return cls(upa_response(array, sample.theta, sample.phi) / scale, sample)

    @property
    def matrix(self) -> np.ndarray:
        return np.outer(self.factor, self.factor.conj())

    @property
    def trace(self) -> float:
        return float(np.vdot(self.factor, self.factor).real)


def line_distance(segment: LineSegment, phi: float) -> float:
    """Ground distance from the origin to the segment along azimuth ``phi``.

    d(phi) = w3 / (w1 cos(phi) + w2 sin(phi)), defined on the azimuth span of
    the segment's endpoints.
    """
    if not segment.phi_span.contains(phi):
        raise GeometryDomainError(
            f"phi={phi:.6f} outside segment span {segment.phi_span.bounds}"
        )
    w1, w2, w3 = segment.coeffs
    den = w1 * np.cos(phi) + w2 * np.sin(phi)
    if den <= 0.0:
        raise DegenerateGeometryError("ray is parallel to or points away from the line")
    return float(w3 / den)


def circle_distance(circle: CircleBoundary, phi: float) -> float:
    """Ground distance from the origin to the *near* arc of the circle.

    With b(phi) = <unit(phi), center>, the ray hits the circle at
    b - sqrt(radius^2 - ||center||^2 + b^2); the minus branch is the
    boundary nearest the transmitter.
    """
    if not circle.phi_span.contains(phi):
        raise GeometryDomainError(
            f"phi={phi:.6f} outside circle span {circle.phi_span.bounds}"
        )
    cx, cy = circle.center
    b = cx * np.cos(phi) + cy * np.sin(phi)
    disc = circle.radius**2 - (cx**2 + cy**2) + b**2
    if disc < 0.0:
        if disc > -_ANGLE_TOL * circle.radius**2:  # grazing ray, rounding only
            disc = 0.0
        else:
            raise GeometryDomainError("ray misses the circle")
    return float(b - np.sqrt(disc))


def elevation_distance(d_phi: float, theta: float) -> float:
    """3-D distance to the boundary point seen at ground distance ``d_phi``
    and elevation ``theta`` (measured from the array's vertical axis):
    d = d_phi / sin(theta)."""
    if theta <= 0.0:
        raise GeometryDomainError("theta must be > 0")
    if theta > np.pi - _ANGLE_TOL:
        raise GeometryDomainError("theta must be < pi")
    return float(d_phi / np.sin(theta))


def theta_span(d_phi: float, c3_min: float, c3_max: float) -> tuple[float, float]:
    """Elevation span subtended by heights [c3_min, c3_max] at ground
    distance d_phi: theta in [arctan(d/c3_max), arctan(d/c3_min)], with
    arctan(d/0) = pi/2 exactly."""
    theta_max = 0.5 * np.pi if c3_min == 0.0 else float(np.arctan(d_phi / c3_min))
    theta_min = 0.5 * np.pi if c3_max == 0.0 else float(np.arctan(d_phi / c3_max))
    return theta_min, theta_max


def _piece_distance(piece: LineSegment | CircleBoundary, phi: float) -> float:
    if isinstance(piece, CircleBoundary):
        return circle_distance(piece, phi)
    return line_distance(piece, phi)


def sample_boundary(
    region: RegionSpec, array: ArrayGeometry
) -> list[CharacteristicMatrix]:
    """Characteristic matrices on the region's boundary sample grid.

    Per sampled boundary piece: n_azimuth equally spaced azimuths (inclusive
    endpoints) over the piece's span; for each azimuth, n_elevation equally
    spaced elevations over that azimuth's own [theta_min, theta_max].
    Deterministic: identical inputs give bit-identical grids.
    """
    out: list[CharacteristicMatrix] = []
    for piece in region.pieces:
        for phi in piece.phi_span.linspace(region.n_azimuth):
            d2 = _piece_distance(piece, float(phi))
            t_lo, t_hi = theta_span(d2, region.c3_min, region.c3_max)
            for theta in np.linspace(t_lo, t_hi, region.n_elevation):
                d3 = elevation_distance(d2, float(theta))
                sample = BoundarySample(d=d3, theta=float(theta), phi=float(phi))
                out.append(CharacteristicMatrix.from_sample(array, sample, region.gamma))
    return out


def _as_matrices(precoders) -> list[np.ndarray]:
    per_user = getattr(precoders, "per_user", None)
    if per_user is not None:
        precoders = per_user
    matrix = getattr(precoders, "matrix", None)
    if matrix is not None:
        return [np.asarray(matrix)]
    if isinstance(precoders, np.ndarray):
        return [precoders]
    return [np.asarray(getattr(f, "matrix", f)) for f in precoders]


def interference(precoders, r_matrix: CharacteristicMatrix) -> float:
    """Received power density sum_k trace(F_k^H R F_k) = sum_k ||F_k^H r||^2
    in milliwatts.  Accepts a precoder matrix, a sequence of them, or any
    object exposing ``per_user`` / ``matrix``."""
    r = r_matrix.factor
    total = 0.0
    for f in _as_matrices(precoders):
        if f.shape[0] != r.shape[0]:
            raise ValueError(
                f"precoder rows {f.shape[0]} != steering length {r.shape[0]}"
            )
        total += float(np.sum(np.abs(herm(f) @ r) ** 2))
    return total
