"""Multi-user transmit precoding under a shared power cap and region caps.

Designs:

* :func:`solve_mu_sumrate` — alternating MMSE-decoder / MSE-weight /
  precoder updates (each precoder update is a convex problem solved through
  the dual subgradient loop), with a safeguarded residual-history
  extrapolation between passes; the sum rate is nondecreasing across outer
  iterations;
* :func:`solve_bd` — block diagonalization: each user's precoder is confined
  to the null space of the other users' stacked channels, reducing the
  problem to decoupled whitened waterfilling with shared duals;
* :func:`select_mu_codebook` — greedy distinct-entry selection from a
  feasibility-modified codebook whose entries are scaled by 1/sqrt(K);
* :func:`mu_backoff` — power-only base design (BD or sum-rate) scaled by
  alpha = min(1, Q/Delta).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .channels import ChannelRealization
from .dual_solver import (
    ConstraintSet,
    ConvergenceError,
    DualState,
    PrecoderSet,
    SolverOptions,
    subgradient_search,
)
from .su_precoding import (
    Codebook,
    _eig_waterfill,
    _gram_eig,
    _waterfill,
    _whitened_waterfill,
    capacity,
    solve_su_optimal,
)
from .util import herm, inv_sqrt_psd

__all__ = [
    "DecoderSet",
    "PrecoderSet",
    "BDInfeasibleError",
    "OuterLoopError",
    "mmse_decoder",
    "mse_matrix",
    "sum_rate",
    "solve_mu_sumrate",
    "bd_nullspace",
    "solve_bd",
    "bd_waterfill_power_only",
    "select_mu_codebook",
    "mu_backoff",
]

_RANK_RTOL = 1e-10
# The alternating pass is a fixed-point map whose tail contraction becomes
# extremely slow at high SNR, so each outer iteration tries extrapolated
# candidates and keeps one only when it raises the sum rate: first a
# secant-type jump (least squares over the last few residuals), then — when
# that loses to the plain pass — a jump straight along the current residual,
# which is the direction of travel when the map crawls at constant velocity.
_ACCEL_MEM = 6
# Extrapolation length caps, in units of the current pass's own travel,
# with per-candidate adaptation bounds (double on an accepted candidate,
# quarter on a rejected one).  The secant jump earns very long leaps once
# its affine model matches (endgame), while the residual-direction jump
# pays off at short range where the valley is straight, so the two lengths
# adapt independently.
_TRUST_INIT = 32.0
_TRUST_MIN = 4.0
_TRUST_MAX = 4096.0
_RAY_INIT = 8.0
_RAY_MIN = 2.0
_RAY_MAX = 1024.0
# Ray probes per outer iteration: the jump doubles while the rate improves,
# so one outer can cover a long stretch of a straight valley, but the work
# per outer stays bounded.
_RAY_PROBES = 5


class BDInfeasibleError(RuntimeError):
    """The null space left by the other users cannot carry the streams."""


class OuterLoopError(RuntimeError):
    """Alternating optimization did not settle; carries the sum-rate trace."""

    def __init__(self, message: str, rate_trace: tuple[float, ...]):
        super().__init__(message)
        self.rate_trace = rate_trace


@dataclass(frozen=True)
class DecoderSet:
    """K receive decoders G_k (streams x m_r)."""

    per_user: tuple[np.ndarray, ...]


def _matrices(precoders) -> tuple[np.ndarray, ...]:
    return tuple(getattr(precoders, "per_user", precoders))


def _cov_sum(h_k: np.ndarray, mats, skip: int | None = None) -> np.ndarray:
    """H_k (sum_m F_m F_m^H) H_k^H, optionally skipping one user."""
    acc = np.zeros((h_k.shape[0], h_k.shape[0]), dtype=complex)
    for m, f in enumerate(mats):
        if m == skip:
            continue
        g = h_k @ f
        acc += g @ herm(g)
    return acc


def mmse_decoder(h_k: np.ndarray, precoders, sigma2: float = 1.0, k: int = 0) -> np.ndarray:
    """Linear MMSE receive filter for user k:
    G_k = F_k^H H_k^H (H_k (sum_m F_m F_m^H) H_k^H + sigma2 I)^(-1)."""
    mats = _matrices(precoders)
    t = _cov_sum(h_k, mats) + sigma2 * np.eye(h_k.shape[0])
    return herm(np.linalg.solve(t, h_k @ mats[k]))


def mse_matrix(h_k: np.ndarray, precoders, k: int, sigma2: float = 1.0) -> np.ndarray:
    """Error covariance of user k's streams under its MMSE decoder:
    E_k = (I + F_k^H H_k^H C_k^(-1) H_k F_k)^(-1), where C_k is the
    interference-plus-noise covariance sum over m != k."""
    mats = _matrices(precoders)
    c_k = _cov_sum(h_k, mats, skip=k) + sigma2 * np.eye(h_k.shape[0])
    w = h_k @ mats[k]
    m = w.shape[1]
    gram = np.eye(m) + herm(w) @ np.linalg.solve(c_k, w)
    return np.linalg.inv(gram)


def sum_rate(channels: ChannelRealization, precoders, sigma2: float = 1.0) -> float:
    """sum_k log2 det(E_k^(-1)) in bits/s/Hz."""
    mats = _matrices(precoders)
    total = 0.0
    for k, h_k in enumerate(channels.per_user):
        sign, logdet = np.linalg.slogdet(mse_matrix(h_k, mats, k, sigma2))
        total += max(-logdet, 0.0) / np.log(2.0)
    return float(total)


def _init_precoders(channels: ChannelRealization, p_cap: float) -> tuple[np.ndarray, ...]:
    """Matched-filter start: F_k = sqrt(P / (trace(H_k^H H_k) K)) H_k^H."""
    k_users = channels.k_users
    out = []
    for h_k in channels.per_user:
        tr = float(np.sum(np.abs(h_k) ** 2))
        out.append(np.sqrt(p_cap / (tr * k_users)) * herm(h_k))
    return tuple(out)


def solve_mu_sumrate(
    channels: ChannelRealization,
    p_cap: float,
    constraints,
    sigma2: float = 1.0,
    opts: SolverOptions | None = None,
    eps_outer: float = 1e-4,
    max_outer: int = 100,
) -> tuple[PrecoderSet, DecoderSet]:
    """Iterative sum-rate maximization under power and region caps.

    Alternates MMSE decoders, MSE weights and the dual-optimal precoder
    update.  Each outer iteration applies one plain alternation pass and,
    once enough history exists, extrapolated passes (a least-squares jump
    over the recent residuals, then a trust-capped jump along the current
    residual); a candidate is kept only when it beats the plain pass's sum
    rate, so the trace is nondecreasing.  The loop stops once successive sum rates differ by at
    most ``eps_outer`` bits (the first pass is compared against the rate of
    the initializer).  Inner dual solves warm-start from the previous pass.
    The returned PrecoderSet carries the post-pass sum-rate trace (one entry
    per outer iteration) and the total inner iteration count; decoders are
    recomputed at the final precoders.

    A single user reduces the sum rate to the single-user capacity, which
    is solved directly by its convex routine instead of by alternation.
    """
    h = channels.per_user
    k_users = channels.k_users
    m_t = h[0].shape[1]
    m = h[0].shape[0]
    if k_users * m > m_t:
        raise ValueError(f"stream total {k_users * m} exceeds transmit antennas {m_t}")
    base = opts or SolverOptions()
    inner = replace(
        base,
        epsilon=min(base.epsilon, 1e-9),
        feasibility_tol=min(base.feasibility_tol, 1e-9),
    )
    # Extrapolated candidates are optional: when one lands so far from the
    # previous iterate that its warm-started dual solve cannot settle
    # quickly, rejecting it outright is cheaper than paying the full budget
    # for a candidate that was speculative to begin with.
    cand = replace(inner, max_iterations=min(inner.max_iterations, 600))
    cs = ConstraintSet.coerce(constraints, m_t=m_t)
    eye_t = np.eye(m_t)

    if k_users == 1:
        # One user makes the sum rate the single-user capacity, a convex
        # problem whose dedicated routine finds the global optimum in one
        # dual search.  The alternation would reach the same point, but on
        # tightly coupled boundary constraints its fixed-point contraction
        # can be arbitrarily slow — thousands of passes for the accuracy
        # the direct solve gives outright.
        pre, dstate = solve_su_optimal(h[0], p_cap, cs, sigma2, base)
        f_mats = (pre.matrix,)
        out = PrecoderSet(
            per_user=f_mats,
            duals=dstate,
            rate_trace=(sum_rate(channels, f_mats, sigma2),),
            inner_iterations=dstate.iterations,
        )
        dec = DecoderSet(per_user=(mmse_decoder(h[0], f_mats, sigma2, 0),))
        return out, dec

    def cycle(f_mats, duals, s_prev, opts_override=None):
        """One alternation pass: decoders and weights at ``f_mats``, then the
        dual-optimal quadratic precoder update.

        The weights are divided by a common factor before the update.  At
        high SNR they grow like the per-stream SINR, which would put the
        subproblem's dual optimum (and the whole search geometry) many
        decades away from the solver's seeds; a common factor leaves the
        update's argmax unchanged — the dual optimum simply rescales by
        that factor — so the search runs near unit scale.  Warm-start
        duals arrive in the previous pass's normalization ``s_prev`` and
        are converted.  Returns the pass's normalization factor so the
        caller can convert the final duals back to physical units.
        """
        solver_opts = opts_override or inner
        decoders = [mmse_decoder(h[k], f_mats, sigma2, k) for k in range(k_users)]
        weights = [
            np.linalg.inv(mse_matrix(h[k], f_mats, k, sigma2)) for k in range(k_users)
        ]
        w_scale = max(max(float(np.trace(w_k).real) / m for w_k in weights), 1.0)
        weights = [w_k / w_scale for w_k in weights]
        if duals is not None and s_prev != w_scale:
            duals = DualState(
                lam=duals.lam * (s_prev / w_scale),
                mu=duals.mu * (s_prev / w_scale),
                chi=duals.chi,
            )
        a_mat = np.zeros((m_t, m_t), dtype=complex)
        b_cols = []
        for k in range(k_users):
            hw = herm(h[k]) @ herm(decoders[k])  # m_t x m
            a_mat += hw @ weights[k] @ herm(hw)
            b_cols.append(hw @ weights[k])
        b_stack = np.hstack(b_cols)

        def f_map(state: DualState):
            z = a_mat + (state.mu + inner.mu_floor) * eye_t + cs.weighted_gram(state.lam)
            sol = np.linalg.solve(z, b_stack)
            return [sol[:, k * m : (k + 1) * m] for k in range(k_users)]

        def prepare(lam: np.ndarray):
            w, v = _gram_eig(a_mat + cs.weighted_gram(lam))
            vb = herm(v) @ b_stack

            def at_mu(mu: float):
                sol = v @ (vb / (w + mu + inner.mu_floor)[:, None])
                return [sol[:, k * m : (k + 1) * m] for k in range(k_users)]

            return at_mu

        def objective(per_user) -> float:
            """Negative weighted MSE: the utility the quadratic update
            maximizes at fixed decoders and weights."""
            total = 0.0
            for k in range(k_users):
                gh = decoders[k] @ h[k]
                e = sigma2 * (decoders[k] @ herm(decoders[k]))
                for j, f_j in enumerate(per_user):
                    t = gh @ f_j
                    if j == k:
                        t = t - np.eye(m)
                    e = e + t @ herm(t)
                total -= float(np.trace(weights[k] @ e).real)
            return total

        def sensitivities(lam, mu, rows):
            """Closed-form response of interference and power to the duals.

            The update is F = Z^(-1) B with Z = A + (mu + floor) I +
            sum_l lam_l v_l v_l^H, so dF/dlam_l = -Z^(-1) v_l v_l^H F and
            dF/dmu = -Z^(-1) F; every response below follows by the chain
            rule.  The dual search's endgame solves an equality system that
            can be conditioned like 1e3-1e4, where a difference-quotient
            response loses the step direction entirely — these must be
            exact.
            """
            z = a_mat + (mu + inner.mu_floor) * eye_t + cs.weighted_gram(lam)
            f = np.linalg.solve(z, b_stack)
            v = cs.factors[rows].T  # column l: the factor of sample rows[l]
            g = herm(v) @ f  # row l: v_l^H F
            y = np.linalg.solve(z, f)  # Z^(-1) F
            vz = herm(v) @ np.linalg.solve(z, v)  # v_j^H Z^(-1) v_l
            vy = herm(v) @ y  # v_j^H Z^(-1) F
            di_dlam = -2.0 * np.real(vz * (g @ herm(g)).T)
            cross = -2.0 * np.real(np.sum(vy * g.conj(), axis=1))
            dpow_dmu = -2.0 * float(np.real(np.sum(f.conj() * y)))
            return di_dlam, cross, cross, dpow_dmu

        f_map.prepare = prepare
        f_map.sensitivities = sensitivities
        pset, duals = subgradient_search(
            f_map, cs, p_cap, solver_opts, init=duals, m_t=m_t, objective=objective
        )
        return pset.per_user, duals, w_scale

    def flatten(mats) -> np.ndarray:
        z = np.concatenate([f_k.ravel() for f_k in mats])
        return np.concatenate([z.real, z.imag])

    def unflatten(x: np.ndarray):
        z = x[: x.size // 2] + 1j * x[x.size // 2 :]
        n = m_t * m
        return tuple(z[k * n : (k + 1) * n].reshape(m_t, m) for k in range(k_users))

    f_mats = _init_precoders(channels, p_cap)
    # Rate at the initialization, used only for the first termination
    # comparison: the returned trace holds post-pass rates exclusively,
    # because the initializer honors the power budget but not the region
    # caps, and an infeasible point's rate does not belong to the monotone
    # sequence the alternation produces.
    prev_rate = sum_rate(channels, f_mats, sigma2)
    trace: list[float] = []
    duals: DualState | None = None
    w_scale = 1.0
    total_inner = 0
    hist_x: list[np.ndarray] = []
    hist_r: list[np.ndarray] = []
    trust = _TRUST_INIT
    ray = _RAY_INIT
    for _ in range(max_outer):
        g_plain, duals_p, scale_p = cycle(f_mats, duals, w_scale)
        total_inner += duals_p.iterations
        x = flatten(f_mats)
        gx = flatten(g_plain)
        resid = gx - x
        hist_x.append(x)
        hist_r.append(resid)
        if len(hist_x) > _ACCEL_MEM:
            hist_x.pop(0)
            hist_r.pop(0)
        f_mats, duals, w_scale = g_plain, duals_p, scale_p
        rate_now = sum_rate(channels, g_plain, sigma2)
        if len(hist_x) >= 2:
            d_r = np.stack(
                [hist_r[i + 1] - hist_r[i] for i in range(len(hist_r) - 1)], axis=1
            )
            d_g = np.stack(
                [
                    (hist_x[i + 1] + hist_r[i + 1]) - (hist_x[i] + hist_r[i])
                    for i in range(len(hist_r) - 1)
                ],
                axis=1,
            )
            gamma, *_ = np.linalg.lstsq(d_r, resid, rcond=None)
            travel = d_g @ gamma  # predicted distance still to cover
            # The affine model behind the prediction holds only near the
            # current iterate.  When the fixed point is thousands of passes
            # away, the raw jump overshoots into curvature and lands below
            # the plain pass, so cap its length at a multiple of the pass's
            # own travel and adapt the multiple like a trust region.
            lim = trust * float(np.linalg.norm(resid))
            tnorm = float(np.linalg.norm(travel))
            if tnorm > lim > 0.0:
                travel = travel * (lim / tnorm)
            f_acc = unflatten(gx - travel)
            power = sum(float(np.sum(np.abs(f_k) ** 2)) for f_k in f_acc)
            if power > p_cap:  # keep the decoder/weight stage well scaled
                f_acc = tuple(f_k * np.sqrt(p_cap / power) for f_k in f_acc)
            best = None  # (rate, input iterate, landed pass, duals, scale)
            try:
                g_acc, duals_a, scale_a = cycle(f_acc, duals_p, scale_p, cand)
            except ConvergenceError:  # wild candidate: fall back to the plain pass
                acc_win = False
            else:
                total_inner += duals_a.iterations
                rate_acc = sum_rate(channels, g_acc, sigma2)
                acc_win = rate_acc > rate_now
                if acc_win:
                    best = (rate_acc, f_acc, g_acc, duals_a, scale_a)
            trust = min(trust * 2.0, _TRUST_MAX) if acc_win else max(trust * 0.25, _TRUST_MIN)
            # The least-squares direction needs contrast between the
            # windowed residuals; when the map crawls at constant velocity
            # the differences carry only noise, while the informative
            # direction is the residual itself.  Second candidate family:
            # jumps straight along it, doubling the length while the landed
            # rate keeps improving, competing with the first candidate.
            ray_best = None
            c = ray
            for _probe in range(_RAY_PROBES):
                f_ray = unflatten(gx + c * resid)
                power = sum(float(np.sum(np.abs(f_k) ** 2)) for f_k in f_ray)
                if power > p_cap:
                    f_ray = tuple(f_k * np.sqrt(p_cap / power) for f_k in f_ray)
                try:
                    g_ray, duals_b, scale_b = cycle(f_ray, duals_p, scale_p, cand)
                except ConvergenceError:
                    break
                total_inner += duals_b.iterations
                rate_ray = sum_rate(channels, g_ray, sigma2)
                if rate_ray <= (ray_best[0] if ray_best else rate_now):
                    break
                ray_best = (rate_ray, f_ray, g_ray, duals_b, scale_b, c)
                if c >= _RAY_MAX:
                    break
                c = min(c * 2.0, _RAY_MAX)
            if ray_best is not None:
                ray = ray_best[5]  # next outer resumes from the proven length
                if best is None or ray_best[0] > best[0]:
                    best = ray_best[:5]
            else:
                ray = max(ray * 0.25, _RAY_MIN)
            if best is not None:
                rate_now, f_in, f_out, duals, w_scale = best
                f_mats = f_out
                hist_x[-1] = flatten(f_in)
                hist_r[-1] = flatten(f_out) - hist_x[-1]
        trace.append(rate_now)
        if abs(rate_now - prev_rate) <= eps_outer:
            break
        prev_rate = rate_now
    else:
        raise OuterLoopError(
            f"sum-rate loop open after {max_outer} outer iterations", tuple(trace)
        )

    out = PrecoderSet(
        per_user=f_mats,
        # The search ran on the weight-normalized subproblem; convert its
        # duals back to the physical objective's units.
        duals=DualState(
            lam=duals.lam * w_scale,
            mu=duals.mu * w_scale,
            chi=duals.chi,
            iterations=duals.iterations,
        ),
        rate_trace=tuple(trace),
        inner_iterations=total_inner,
    )
    final_dec = DecoderSet(
        per_user=tuple(mmse_decoder(h[k], f_mats, sigma2, k) for k in range(k_users))
    )
    return out, final_dec


def bd_nullspace(channels: ChannelRealization, k: int) -> np.ndarray:
    """Orthonormal basis of the null space of the other users' stacked
    channels.  Singular values below 1e-10 of the largest count as zero.
    K = 1 leaves the whole space: the identity."""
    m_t = channels.per_user[0].shape[1]
    others = [h for m, h in enumerate(channels.per_user) if m != k]
    if not others:
        return np.eye(m_t, dtype=complex)
    stacked = np.vstack(others)
    _, s, vh = np.linalg.svd(stacked, full_matrices=True)
    rank = int(np.sum(s > _RANK_RTOL * s[0])) if s.size else 0
    if m_t - rank < 1:
        raise BDInfeasibleError(
            f"user {k}: other users' channels span all {m_t} transmit dimensions"
        )
    return herm(vh[rank:, :])


def solve_bd(
    channels: ChannelRealization,
    p_cap: float,
    constraints,
    sigma2: float = 1.0,
    opts: SolverOptions | None = None,
) -> PrecoderSet:
    """Block-diagonalized precoding under power and region caps.

    Each user's precoder lives in its null-space basis V_k; the shared duals
    weight Z = mu I + sum(lam R), projected per user, and each sub-problem is
    whitened waterfilling on H_k V_k.  Inter-user interference is zero by
    construction."""
    opts = opts or SolverOptions()
    h = channels.per_user
    m = h[0].shape[0]
    m_t = h[0].shape[1]
    cs = ConstraintSet.coerce(constraints, m_t=m_t)
    bases = [bd_nullspace(channels, k) for k in range(channels.k_users)]
    for k, v in enumerate(bases):
        if v.shape[1] < m:
            raise BDInfeasibleError(
                f"user {k}: null-space dimension {v.shape[1]} < streams {m}"
            )
    hv = [h[k] @ bases[k] for k in range(channels.k_users)]
    proj = [cs.project(v) for v in bases]

    def f_map(state: DualState):
        out = []
        for k in range(channels.k_users):
            dim = bases[k].shape[1]
            z = (state.mu + opts.mu_floor) * np.eye(dim) + proj[k].weighted_gram(state.lam)
            f_tilde = _whitened_waterfill(hv[k], inv_sqrt_psd(z, opts.mu_floor), sigma2)
            out.append(bases[k] @ f_tilde)
        return out

    def prepare(lam: np.ndarray):
        eigs = []
        for k in range(channels.k_users):
            w, v = _gram_eig(proj[k].weighted_gram(lam))
            eigs.append((w, v, hv[k] @ v))

        def at_mu(mu: float):
            return [
                bases[k] @ _eig_waterfill(w, v, hvv, mu, opts.mu_floor, sigma2)
                for k, (w, v, hvv) in enumerate(eigs)
            ]

        return at_mu

    def objective(per_user) -> float:
        total = 0.0
        for k in range(channels.k_users):
            g = h[k] @ per_user[k]
            _, logdet = np.linalg.slogdet(np.eye(m) + (g @ herm(g)) / sigma2)
            total += float(logdet)
        return total

    f_map.prepare = prepare
    pset, duals = subgradient_search(
        f_map, cs, p_cap, opts, m_t=m_t, objective=objective
    )
    return replace(pset, duals=duals, inner_iterations=duals.iterations)


def bd_waterfill_power_only(
    channels: ChannelRealization, p_cap: float, sigma2: float = 1.0
) -> PrecoderSet:
    """Classical power-only block diagonalization: one global waterlevel over
    the pooled singular values of the projected channels H_k V_k."""
    bases = [bd_nullspace(channels, k) for k in range(channels.k_users)]
    m = channels.per_user[0].shape[0]
    for k, v in enumerate(bases):
        if v.shape[1] < m:
            raise BDInfeasibleError(
                f"user {k}: null-space dimension {v.shape[1]} < streams {m}"
            )
    svds = [np.linalg.svd(channels.per_user[k] @ bases[k], full_matrices=False)
            for k in range(channels.k_users)]
    gains = np.concatenate([s**2 for _, s, _ in svds])
    powers = _waterfill(gains, p_cap, sigma2)
    out = []
    offset = 0
    for k, (_, s, vh) in enumerate(svds):
        p_k = powers[offset : offset + s.size]
        offset += s.size
        out.append(bases[k] @ (herm(vh) * np.sqrt(p_k)))
    return PrecoderSet(per_user=tuple(out))


def select_mu_codebook(
    channels: ChannelRealization,
    codebook: Codebook,
    p_cap: float,
    k_users: int | None = None,
    sigma2: float = 1.0,
) -> PrecoderSet:
    """Greedy distinct-entry selection from a modified codebook.

    Entries are scaled by 1/sqrt(K), so each carries power P/K and each
    boundary sample sees at most Q/K per user — the aggregate meets both
    caps by construction.  Users pick, in index order, the entry of largest
    single-user capacity among those not yet taken."""
    k = channels.k_users if k_users is None else int(k_users)
    if k != channels.k_users:
        raise ValueError("k_users disagrees with the channel realization")
    if len(codebook) < k:
        raise ValueError(f"codebook has {len(codebook)} entries < {k} users")
    scaled = codebook.entries / np.sqrt(k)
    taken: set[int] = set()
    chosen = []
    for u in range(k):
        best_idx, best_rate = -1, -np.inf
        for i in range(len(codebook)):
            if i in taken:
                continue
            r = capacity(channels.per_user[u], scaled[i], sigma2)
            if r > best_rate:
                best_idx, best_rate = i, r
        taken.add(best_idx)
        chosen.append(scaled[best_idx])
    return PrecoderSet(per_user=tuple(chosen))


def mu_backoff(
    channels: ChannelRealization,
    p_cap: float,
    constraints,
    sigma2: float = 1.0,
    base: str = "bd",
    opts: SolverOptions | None = None,
) -> PrecoderSet:
    """Power-only base design scaled by alpha = min(1, Q/Delta) where Delta
    is the base design's received power at each boundary sample."""
    m_t = channels.per_user[0].shape[1]
    cs = ConstraintSet.coerce(constraints, m_t=m_t)
    if base == "bd":
        f0 = bd_waterfill_power_only(channels, p_cap, sigma2)
    elif base == "sumrate":
        f0, _ = solve_mu_sumrate(
            channels, p_cap, ConstraintSet.empty(m_t), sigma2, opts
        )
    else:
        raise ValueError(f"unknown back-off base {base!r}")
    if len(cs) == 0:
        return f0
    delta = cs.interference_each(np.hstack(f0.per_user))
    with np.errstate(divide="ignore"):
        ratios = np.where(delta > 0, cs.q / np.maximum(delta, 1e-300), np.inf)
    alpha = min(1.0, float(np.min(ratios)))
    return f0.scaled(alpha)
