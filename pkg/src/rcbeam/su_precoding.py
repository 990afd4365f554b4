"""Single-user transmit precoding under a power cap and region caps.

Three designs:

* :func:`solve_su_optimal` — capacity-optimal waterfilling over the whitened
  channel H Z^(-1/2), Z = mu*I + sum(lam * R), with duals from the
  subgradient solver;
* :func:`select_su_codebook` over a :func:`modify_codebook`-processed
  codebook — limited-feedback operation where only a B-bit entry index is
  conveyed, entries pre-distorted once per (P, Q) so every entry is feasible;
* :func:`su_backoff` — scale the power-only waterfilling design down by
  alpha = min(1, Q/Delta) until the worst boundary sample complies.

Rates are log2 determinants (bits/s/Hz); powers are linear milliwatts.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np

from .dual_solver import (
    ConstraintSet,
    ConvergenceError,
    DualState,
    PrecoderSet,
    SolverOptions,
    subgradient_search,
)
from .util import herm, inv_sqrt_psd

__all__ = [
    "Precoder",
    "Codebook",
    "capacity",
    "waterfill_power_only",
    "solve_su_optimal",
    "random_codebook",
    "modify_codebook",
    "select_su_codebook",
    "su_backoff",
    "write_codebook",
    "read_codebook",
]


@dataclass(frozen=True)
class Precoder:
    """A transmit precoding matrix F (m_t x streams)."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.matrix)):
            raise ValueError("precoder entries must be finite")

    @property
    def streams(self) -> int:
        return self.matrix.shape[1]

    def power(self) -> float:
        return float(np.sum(np.abs(self.matrix) ** 2))


@dataclass(frozen=True)
class Codebook:
    """2^bits precoder entries, stacked as (2^bits, m_t, m)."""

    entries: np.ndarray
    bits: int
    seed: int | None = None

    def __post_init__(self) -> None:
        if self.entries.ndim != 3 or self.entries.shape[0] != 2**self.bits:
            raise ValueError("entries must be (2^bits, m_t, m)")

    def __len__(self) -> int:
        return self.entries.shape[0]


def capacity(h: np.ndarray, f: np.ndarray, sigma2: float = 1.0) -> float:
    """log2 det(I + (1/sigma2) H F F^H H^H) in bits/s/Hz."""
    f = getattr(f, "matrix", f)
    g = h @ f
    m_r = h.shape[0]
    gram = np.eye(m_r) + (g @ herm(g)) / sigma2
    sign, logdet = np.linalg.slogdet(gram)
    return float(max(logdet, 0.0) / np.log(2.0))


def _waterfill(gains: np.ndarray, p_total: float, sigma2: float) -> np.ndarray:
    """Power allocation p_i = (w - sigma2/gains_i)+ with sum(p) = p_total.

    ``gains`` are squared channel gains (eigenvalues of the effective
    channel's Gram matrix); zero gains get zero power.
    """
    gains = np.asarray(gains, dtype=float)
    p = np.zeros_like(gains)
    active = np.flatnonzero(gains > 0)
    if active.size == 0 or p_total <= 0:
        return p
    inv = sigma2 / gains[active]
    order = np.argsort(inv)
    inv_sorted = inv[order]
    # Largest m for which the waterlevel sits above the m-th inverse gain.
    m_active = 1
    for m in range(1, active.size + 1):
        level = (p_total + np.sum(inv_sorted[:m])) / m
        if level > inv_sorted[m - 1]:
            m_active = m
        else:
            break
    level = (p_total + np.sum(inv_sorted[:m_active])) / m_active
    alloc = np.maximum(level - inv_sorted[:m_active], 0.0)
    p[active[order[:m_active]]] = alloc
    return p


def waterfill_power_only(h: np.ndarray, p_cap: float, sigma2: float = 1.0) -> Precoder:
    """Classical waterfilling on the singular values of H; power cap only."""
    if not p_cap > 0:
        raise ValueError("p_cap must be > 0")
    u, s, vh = np.linalg.svd(h, full_matrices=False)
    p = _waterfill(s**2, p_cap, sigma2)
    return Precoder(herm(vh) * np.sqrt(p))


def _whitened_waterfill(
    h: np.ndarray, z_inv_sqrt: np.ndarray, sigma2: float
) -> np.ndarray:
    """Lagrangian minimizer F = Z^(-1/2) V diag(sqrt(rho)) for fixed duals,
    rho_m = (1 - sigma2/eta_m)+ over the squared singular values eta of the
    whitened channel H Z^(-1/2)."""
    b = h @ z_inv_sqrt
    u, s, vh = np.linalg.svd(b, full_matrices=False)
    eta = s**2
    rho = np.where(eta > sigma2, 1.0 - sigma2 / np.maximum(eta, sigma2), 0.0)
    return z_inv_sqrt @ (herm(vh) * np.sqrt(rho))


def _eig_waterfill(
    w: np.ndarray, v: np.ndarray, hv: np.ndarray, mu: float, floor: float, sigma2: float
) -> np.ndarray:
    """:func:`_whitened_waterfill` computed in the eigenbasis of
    Z = V diag(w + mu + floor) V^H, with hv = H V precomputed so sweeping mu
    at fixed constraint weights costs one small SVD."""
    d = 1.0 / np.sqrt(w + mu + floor)
    b = hv * d
    _, s, vh = np.linalg.svd(b, full_matrices=False)
    eta = s**2
    rho = np.where(eta > sigma2, 1.0 - sigma2 / np.maximum(eta, sigma2), 0.0)
    return v @ ((herm(vh) * np.sqrt(rho)) * d[:, None])


def _gram_eig(gram: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a PSD Gram matrix, eigenvalues clamped at 0."""
    w, v = np.linalg.eigh((gram + herm(gram)) / 2)
    return np.maximum(w, 0.0), v


def solve_su_optimal(
    h: np.ndarray,
    p_cap: float,
    constraints,
    sigma2: float = 1.0,
    opts: SolverOptions | None = None,
) -> tuple[Precoder, DualState]:
    """Capacity-optimal single-user precoder under power and region caps."""
    opts = opts or SolverOptions()
    m_t = h.shape[1]
    cs = ConstraintSet.coerce(constraints, m_t=m_t)

    def f_map(duals: DualState):
        z = (duals.mu + opts.mu_floor) * np.eye(m_t) + cs.weighted_gram(duals.lam)
        return [_whitened_waterfill(h, inv_sqrt_psd(z, opts.mu_floor), sigma2)]

    def prepare(lam: np.ndarray):
        w, v = _gram_eig(cs.weighted_gram(lam))
        hv = h @ v
        return lambda mu: [_eig_waterfill(w, v, hv, mu, opts.mu_floor, sigma2)]

    def objective(per_user) -> float:
        g = h @ per_user[0]
        _, logdet = np.linalg.slogdet(np.eye(h.shape[0]) + (g @ herm(g)) / sigma2)
        return float(logdet)

    f_map.prepare = prepare
    pset, duals = subgradient_search(
        f_map, cs, p_cap, opts, m_t=m_t, objective=objective
    )
    return Precoder(pset.per_user[0]), duals


def random_codebook(bits: int, m_t: int, m: int, seed: int) -> Codebook:
    """Seeded random codebook: per entry, an i.i.d. complex Gaussian m_t x m
    matrix with QR-orthonormalized columns."""
    if bits < 0 or m < 1 or m_t < m:
        raise ValueError("need bits >= 0 and 1 <= m <= m_t")
    entries = np.empty((2**bits, m_t, m), dtype=complex)
    for i in range(2**bits):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, i])))
        g = (rng.standard_normal((m_t, m)) + 1j * rng.standard_normal((m_t, m))) / np.sqrt(2)
        q, _ = np.linalg.qr(g)
        entries[i] = q[:, :m]
    return Codebook(entries=entries, bits=bits, seed=seed)


def modify_codebook(
    codebook: Codebook,
    p_cap: float,
    constraints,
    opts: SolverOptions | None = None,
) -> Codebook:
    """Pre-distort every entry to satisfy the caps at transmit power P.

    Each entry F is replaced by sqrt(P / trace(F^H Z^(-1) F)) * Z^(-1/2) F
    with Z = I + sum(lam * R); the lam are found per entry by the subgradient
    solver on the region slacks alone (the explicit normalization keeps the
    power cap tight, so its subgradient vanishes and mu stays at 1).  Output
    entries have trace(F^H F) = P exactly and every region cap within 1e-6
    relative slack.
    """
    opts = replace(opts or SolverOptions(), mu_init=1.0)
    m_t = codebook.entries.shape[1]
    cs = ConstraintSet.coerce(constraints, m_t=m_t)
    out = np.empty_like(codebook.entries)
    for idx in range(len(codebook)):
        f0 = codebook.entries[idx]

        def f_map(duals: DualState, f0=f0):
            z = duals.mu * np.eye(m_t) + cs.weighted_gram(duals.lam)
            g = inv_sqrt_psd(z, opts.mu_floor) @ f0
            t = float(np.sum(np.abs(g) ** 2))
            return [np.sqrt(p_cap / t) * g]

        def prepare(lam: np.ndarray, f0=f0):
            w, v = _gram_eig(cs.weighted_gram(lam))
            f0v = herm(v) @ f0

            def at_mu(mu: float):
                g = v @ (f0v / np.sqrt(w + mu)[:, None])
                t = float(np.sum(np.abs(g) ** 2))
                return [np.sqrt(p_cap / t) * g]

            return at_mu

        f_map.prepare = prepare
        f_map.power_pinned = True  # the explicit normalization fixes the power

        try:
            pset, _ = subgradient_search(f_map, cs, p_cap, opts, m_t=m_t)
        except ConvergenceError as err:
            raise ConvergenceError(
                f"codebook entry {idx} failed to converge", err.chi, err.iterations
            ) from err
        out[idx] = pset.per_user[0]
    return Codebook(entries=out, bits=codebook.bits, seed=codebook.seed)


def select_su_codebook(h: np.ndarray, codebook: Codebook, sigma2: float = 1.0) -> Precoder:
    """Brute-force capacity-argmax entry; ties go to the lowest index."""
    if len(codebook) == 0:
        raise ValueError("codebook is empty")
    rates = [capacity(h, codebook.entries[i], sigma2) for i in range(len(codebook))]
    return Precoder(codebook.entries[int(np.argmax(rates))])


def su_backoff(
    h: np.ndarray, p_cap: float, constraints, sigma2: float = 1.0
) -> Precoder:
    """Scale the power-only waterfilling design by alpha = min(1, Q/Delta)
    where Delta is its received power at each boundary sample."""
    f0 = waterfill_power_only(h, p_cap, sigma2)
    cs = ConstraintSet.coerce(constraints, m_t=h.shape[1])
    if len(cs) == 0:
        return f0
    delta = cs.interference_each(f0.matrix)
    with np.errstate(divide="ignore"):
        ratios = np.where(delta > 0, cs.q / np.maximum(delta, 1e-300), np.inf)
    alpha = min(1.0, float(np.min(ratios)))
    return Precoder(np.sqrt(alpha) * f0.matrix)


_CODEBOOK_MAGIC = b"RCCB"


def write_codebook(codebook: Codebook, path: str) -> None:
    """Binary codebook file: magic 'RCCB', then little-endian uint32
    (m_t, m, bits) and int64 seed, then entries row-major as (re, im)
    little-endian float64 pairs."""
    n, m_t, m = codebook.entries.shape
    with open(path, "wb") as fh:
        fh.write(_CODEBOOK_MAGIC)
        fh.write(struct.pack("<IIIq", m_t, m, codebook.bits, codebook.seed or 0))
        interleaved = np.empty((n, m_t, m, 2))
        interleaved[..., 0] = codebook.entries.real
        interleaved[..., 1] = codebook.entries.imag
        fh.write(interleaved.astype("<f8").tobytes())


def read_codebook(path: str) -> Codebook:
    with open(path, "rb") as fh:
        if fh.read(4) != _CODEBOOK_MAGIC:
            raise ValueError(f"{path}: not a codebook file")
        m_t, m, bits, seed = struct.unpack("<IIIq", fh.read(20))
        n = 2**bits
        raw = np.frombuffer(fh.read(), dtype="<f8").reshape(n, m_t, m, 2)
        return Codebook(entries=raw[..., 0] + 1j * raw[..., 1], bits=bits, seed=seed)
