"""Dual descent for precoder designs under a power cap and region caps.

Any precoder design of the form "minimize a Lagrangian for fixed duals" plugs
in as a ``precoder_map``: a deterministic function from a :class:`DualState`
to the per-user precoder matrices that minimize the Lagrangian at those
duals.  The solver walks the duals until the minimizer satisfies every cap
and the normalized complementary-slackness residual

    chi = (sum_l |lam_l (I_l - Q_l)| + |mu (power - P)|)
          / (mu P + sum_l lam_l Q_l + tiny)

falls below ``epsilon`` while each constraint holds within
``feasibility_tol`` relative slack.

The dual function is convex, so the search is organized as a descent with
three cooperating mechanisms, all expressible as projected dual steps
``lam <- max(0, lam - s * w_hat)`` with per-coordinate, per-iteration step
sizes:

* **power dual**: for fixed lam, the transmit power of the minimizer is
  nonincreasing in mu, so the optimal mu is located exactly by a bracketed
  root search (power driven to the cap, or mu = 0 if the cap is slack).
  This removes the stiffest direction from the iteration entirely.
* **region duals**: diagonal-metric projected subgradient steps of size
  ``step_lambda * (lam + lam_seed)`` — multiplicative away from zero,
  additive at the seed scale so a projected-to-zero dual can re-activate.
  When the map exposes its ``objective`` the step length is backtracked
  until the dual value decreases (Armijo), which rules out limit cycles;
  maps without an evaluable dual value (power-normalizing maps) take
  multiplicative ratio steps lam <- lam * clip(I/Q) — the same projected
  step with a per-coordinate size proportional to the constraint's own
  imbalance — and rely on the Newton endgame.  Coordinates whose
  constraints are strictly inside the feasible region are periodically
  projected to zero (complementary slackness), gated on the merit not
  increasing.
* **endgame**: once feasibility violations are moderate, the active
  coordinates satisfy a square smooth system I_l(lam) = Q_l; a guarded
  Newton iteration on that system (finite-difference Jacobian with an
  exact correction for the power-dual coupling) converges quadratically
  where the subgradient tail would crawl.  Steps must strictly reduce the
  worst complementarity error and never increase the dual value.  For
  power-normalizing maps the boundary samples can over-determine the
  equality system (adjacent samples yield nearly identical constraints),
  in which case Newton asks some multiplier to go negative: the step is
  then taken exactly to that boundary and the multiplier retired — an
  active-set exchange — after which the reduced system is consistent and
  Newton regains quadratic convergence.

Normalized slacks are clipped from below at -10 to bound per-iteration
growth during the transient; near the fixed point the clip is inert.

``precoder_map`` may additionally expose two optional attributes:

* ``prepare(lam) -> callable(mu) -> matrices`` — a factorized evaluation
  path for sweeping mu at fixed lam (used heavily by the power root search);
* ``power_pinned`` — True when the map normalizes its output power itself,
  which freezes mu at its initial value and skips the root search;
* ``sensitivities(lam, mu, rows) -> (di_dlam, di_dmu, dpow_dlam, dpow_dmu)``
  — exact first-order responses of the sampled interference (restricted to
  constraint indices ``rows``, which also index the multiplier columns) and
  of the output power.  When present, the Newton polish builds its equality
  system from these instead of difference quotients, whose error — amplified
  by the conditioning of nearly collinear boundary samples — can exceed the
  step being solved for.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np

from .geometry import CharacteristicMatrix

__all__ = [
    "DualState",
    "SolverOptions",
    "ConstraintSet",
    "PrecoderSet",
    "ConvergenceError",
    "subgradient_search",
    "kkt_residual",
]

_CHI_FLOOR = np.finfo(float).tiny
_SLACK_CLIP = -10.0
_POW_RTOL = 1e-9          # relative tolerance of the power root search
_PRUNE_EVERY = 20         # iterations between complementary-slackness prunes
_PRUNE_DELTA = 1e-3       # relative slack below which a constraint counts as inactive
_POLISH_VIOL = 0.5        # max relative violation at which Newton polish is attempted
_POLISH_COMP = 0.25       # ratio-step paths also wait for moderate slackness error
_POLISH_BACKOFF = 40      # iterations until the next polish after a failed one
_POLISH_MAX_ACTIVE = 80   # skip Newton polish for larger active sets
_POLISH_MAX_ACTIVE_PINNED = 128  # power-normalizing maps may activate every sample
_NEWTON_STEPS = 12        # Newton steps per polish event
_NEWTON_STEPS_PINNED = 24  # extra steps so active-set exchanges fit in one event
_EXCHANGE_SLACK = 4.0     # tolerated transient error growth while crossing a corner
_ARMIJO_TRIES = 12        # backtracking halvings per subgradient step
_SCALE_MAX = 4.0          # largest line-search scale
_RATIO_UP = 2.0           # largest per-iteration growth of a ratio step
_RATIO_DOWN = np.exp(-4.0)  # largest per-iteration decay of a ratio step
_STALL_ITS = 25           # violated iterations without progress before a boost
_STALL_BOOST = 2.0        # uniform active-multiplier growth applied at a stall


class ConvergenceError(RuntimeError):
    """Dual search exhausted its iteration budget; carries the final residual."""

    def __init__(self, message: str, chi: float, iterations: int):
        super().__init__(f"{message} (chi={chi:.3e} after {iterations} iterations)")
        self.chi = chi
        self.iterations = iterations


@dataclass(frozen=True)
class DualState:
    """Dual variables: one lam per boundary sample, one mu for the power cap."""

    lam: np.ndarray
    mu: float
    chi: float = np.inf
    iterations: int = 0

    def __post_init__(self) -> None:
        if self.mu < 0 or np.any(self.lam < 0) or self.chi < 0:
            raise ValueError("dual variables and chi must be >= 0")

    def lambda_map(self, constraints: "ConstraintSet") -> dict[tuple[int, int], float]:
        """lam keyed by (region index, sample index)."""
        return dict(zip(constraints.labels, self.lam.tolist()))


@dataclass(frozen=True)
class SolverOptions:
    """Knobs of the dual descent.

    ``step_mu`` is retained for interface stability but the power dual is
    driven by exact root finding, which needs no step size.
    """

    step_mu: float = 0.1
    step_lambda: float = 0.1
    epsilon: float = 1e-6
    max_iterations: int = 5000
    mu_floor: float = 1e-12
    feasibility_tol: float = 1e-6
    mu_init: float | None = None  # None -> 1/P

    def __post_init__(self) -> None:
        if min(self.step_mu, self.step_lambda, self.epsilon) <= 0:
            raise ValueError("steps and epsilon must be > 0")
        if self.max_iterations < 1 or self.mu_floor < 0 or self.feasibility_tol <= 0:
            raise ValueError("bad solver options")


@dataclass(frozen=True)
class PrecoderSet:
    """Per-user precoders plus the dual state that produced them (if any).

    ``rate_trace``, when an iterative design fills it, holds the sum rate
    after each outer pass — one entry per pass, so its length is the outer
    iteration count and the sequence is nondecreasing.
    """

    per_user: tuple[np.ndarray, ...]
    duals: DualState | None = None
    rate_trace: tuple[float, ...] | None = None
    inner_iterations: int | None = None

    @property
    def k_users(self) -> int:
        return len(self.per_user)

    def total_power(self) -> float:
        return float(sum(np.sum(np.abs(f) ** 2) for f in self.per_user))

    @property
    def is_zero(self) -> bool:
        return self.total_power() == 0.0

    def scaled(self, gain: float) -> "PrecoderSet":
        return replace(self, per_user=tuple(np.sqrt(gain) * f for f in self.per_user))


class ConstraintSet:
    """Stacked boundary-sample constraints: factor rows, thresholds, labels.

    Row l of ``factors`` is the characteristic factor r_l; ``q`` holds the
    per-sample caps in milliwatts; ``labels`` the (region, sample) indices.
    """

    def __init__(
        self,
        factors: np.ndarray,
        q: np.ndarray,
        labels: Sequence[tuple[int, int]] | None = None,
    ):
        self.factors = np.atleast_2d(np.asarray(factors, dtype=complex))
        if self.factors.size == 0:
            self.factors = self.factors.reshape(0, max(self.factors.shape[-1], 1) if self.factors.ndim > 1 else 1)
        self.q = np.asarray(q, dtype=float).reshape(-1)
        if self.factors.shape[0] != self.q.shape[0]:
            raise ValueError("one threshold per factor row required")
        if np.any(self.q <= 0):
            raise ValueError("thresholds must be > 0 mW")
        self.labels = tuple(labels) if labels is not None else tuple(
            (0, i) for i in range(len(self.q))
        )
        self._rows_h = self.factors.conj()  # row l = r_l^H
        self.trace_r = np.sum(np.abs(self.factors) ** 2, axis=1)

    @classmethod
    def empty(cls, m_t: int) -> "ConstraintSet":
        return cls(np.zeros((0, m_t), dtype=complex), np.zeros(0), labels=())

    @classmethod
    def from_regions(
        cls, samples_per_region: Sequence[Sequence[CharacteristicMatrix]], q_mw: Sequence[float]
    ) -> "ConstraintSet":
        rows, q, labels = [], [], []
        for i, (mats, qi) in enumerate(zip(samples_per_region, q_mw)):
            for l, mat in enumerate(mats):
                rows.append(mat.factor)
                q.append(qi)
                labels.append((i, l))
        if not rows:
            raise ValueError("no constraints given; use ConstraintSet.empty")
        return cls(np.asarray(rows), np.asarray(q), labels)

    @classmethod
    def coerce(cls, constraints, m_t: int | None = None) -> "ConstraintSet":
        """Accept a ConstraintSet or an iterable of (CharacteristicMatrix, q_mw)."""
        if isinstance(constraints, cls):
            return constraints
        pairs = list(constraints)
        if not pairs:
            if m_t is None:
                raise ValueError("empty constraints need an explicit m_t")
            return cls.empty(m_t)
        mats, qs = zip(*pairs)
        return cls(
            np.asarray([m.factor for m in mats]),
            np.asarray(qs, dtype=float),
            labels=[(0, i) for i in range(len(qs))],
        )

    def __len__(self) -> int:
        return len(self.q)

    @property
    def m_t(self) -> int:
        return self.factors.shape[1]

    def interference_each(self, f_stack: np.ndarray) -> np.ndarray:
        """Per-sample received power sum_k ||F_k^H r_l||^2 for column-stacked
        precoders (M_t x total_streams).  Shape (L,)."""
        if len(self.q) == 0:
            return np.zeros(0)
        g = self._rows_h @ f_stack
        return np.sum(np.abs(g) ** 2, axis=1)

    def weighted_gram(self, lam: np.ndarray) -> np.ndarray:
        """sum_l lam_l r_l r_l^H as a dense Hermitian matrix."""
        if len(self.q) == 0:
            return np.zeros((self.m_t, self.m_t), dtype=complex)
        return (self.factors.T * lam) @ self._rows_h

    def project(self, basis: np.ndarray) -> "ConstraintSet":
        """Constraints seen through an orthonormal column basis V: factors
        become V^H r (thresholds unchanged)."""
        if len(self.q) == 0:
            return ConstraintSet.empty(basis.shape[1])
        return ConstraintSet(self.factors @ basis.conj(), self.q, self.labels)


def _stack(per_user: Iterable[np.ndarray]) -> np.ndarray:
    mats = [np.atleast_2d(f) for f in per_user]
    return np.hstack(mats)


def kkt_residual(precoders, duals: DualState, constraints, power_cap: float) -> float:
    """Normalized complementary-slackness residual

        chi = (sum_l |lam_l (I_l - Q_l)| + |mu (power - P)|)
              / (mu P + sum_l lam_l Q_l + tiny).
    """
    cs = ConstraintSet.coerce(constraints)
    per_user = getattr(precoders, "per_user", precoders)
    f_stack = _stack(per_user)
    power = float(np.sum(np.abs(f_stack) ** 2))
    interf = cs.interference_each(f_stack)
    num = float(np.sum(np.abs(duals.lam * (interf - cs.q)))) + abs(
        duals.mu * (power - power_cap)
    )
    den = duals.mu * power_cap + float(np.dot(duals.lam, cs.q)) + _CHI_FLOOR
    return num / den


class _Point:
    """One dual-space evaluation: the minimizer and its constraint data."""

    __slots__ = ("per_user", "power", "interf", "mu", "lam", "g")

    def __init__(self, per_user, power, interf, mu, lam, g):
        self.per_user = per_user
        self.power = power
        self.interf = interf
        self.mu = mu
        self.lam = lam
        self.g = g


class _Search:
    """State and helpers of one subgradient_search invocation."""

    def __init__(self, precoder_map, cs, p_cap, opts, objective):
        self.map = precoder_map
        self.cs = cs
        self.p_cap = p_cap
        self.opts = opts
        self.objective = objective
        self.prepare = getattr(precoder_map, "prepare", None)
        self.power_pinned = bool(getattr(precoder_map, "power_pinned", False))
        self.sens = getattr(precoder_map, "sensitivities", None)
        self.mu_seed = opts.mu_init if opts.mu_init is not None else 1.0 / p_cap
        # Largest |dual value| seen this search: the tolerance anchor for
        # dual-value guards.  The value itself can pass through zero near
        # the optimum, where a slack relative to the current |g| would
        # collapse to nothing and reject numerically exact steps.
        self.g_scale = 0.0
        tr = cs.trace_r
        self.lam_seed = (
            np.where(tr > 0, self.mu_seed / np.maximum(tr, _CHI_FLOOR), self.mu_seed)
            if len(cs)
            else np.zeros(0)
        )

    def _at_mu(self, lam):
        if self.prepare is not None:
            return self.prepare(lam)
        return lambda mu: self.map(DualState(lam=lam, mu=mu))

    def _eval(self, at_mu, lam, mu):
        per_user = at_mu(mu)
        f_stack = _stack(per_user)
        power = float(np.sum(np.abs(f_stack) ** 2))
        interf = self.cs.interference_each(f_stack)
        if self.objective is not None:
            g = (
                float(self.objective(per_user))
                - mu * (power - self.p_cap)
                - float(np.dot(lam, interf - self.cs.q))
            )
            self.g_scale = max(self.g_scale, abs(g))
        else:
            g = np.nan
        return _Point(per_user, power, interf, mu, lam, g)

    def inner(self, lam, mu_guess) -> _Point:
        """Exact dual minimization over mu >= 0: drive power to the cap."""
        at_mu = self._at_mu(lam)
        if self.power_pinned:
            return self._eval(at_mu, lam, mu_guess)
        p_cap = self.p_cap
        mu = max(mu_guess, 1e-15)
        pt = self._eval(at_mu, lam, mu)
        y = pt.power - p_cap
        if abs(y) <= _POW_RTOL * p_cap:
            return pt
        if y > 0:  # power above cap: mu must grow
            a, ya = mu, y
            fac = 1.05
            for _ in range(200):
                mu *= fac
                pt = self._eval(at_mu, lam, mu)
                yb = pt.power - p_cap
                if yb <= 0:
                    b = mu
                    break
                a, ya = mu, yb
                fac = min(fac * fac, 64.0)
            else:
                raise ConvergenceError("power dual bracketing failed", np.inf, 0)
        else:      # power below cap: mu must shrink (possibly to zero)
            b, yb = mu, y
            fac = 1.05
            for _ in range(200):
                mu /= fac
                if mu < 1e-18:
                    pt = self._eval(at_mu, lam, 0.0)
                    if pt.power <= p_cap * (1.0 + _POW_RTOL):
                        return pt  # cap slack even at mu = 0
                    a, ya = 0.0, pt.power - p_cap
                    break
                pt = self._eval(at_mu, lam, mu)
                ya = pt.power - p_cap
                if ya >= 0:
                    a = mu
                    break
                b, yb = mu, ya
                fac = min(fac * fac, 64.0)
            else:
                raise ConvergenceError("power dual bracketing failed", np.inf, 0)
        # Illinois secant on [a, b] with ya >= 0 >= yb; keep the feasible side.
        best = pt if pt.power <= p_cap * (1.0 + _POW_RTOL) else self._eval(at_mu, lam, b)
        side = 0
        for _ in range(80):
            m = (a * yb - b * ya) / (yb - ya)
            span = b - a
            m = min(max(m, a + 1e-6 * span), b - 1e-6 * span)
            pt = self._eval(at_mu, lam, m)
            ym = pt.power - p_cap
            if abs(ym) <= _POW_RTOL * p_cap:
                return pt
            if ym > 0:
                a, ya = m, ym
                if side == -1:
                    yb *= 0.5
                side = -1
            else:
                b, yb = m, ym
                best = pt
                if side == 1:
                    ya *= 0.5
                side = 1
        return best

    def chi(self, pt: _Point) -> float:
        num = float(np.sum(np.abs(pt.lam * (pt.interf - self.cs.q)))) + abs(
            pt.mu * (pt.power - self.p_cap)
        )
        den = pt.mu * self.p_cap + float(np.dot(pt.lam, self.cs.q)) + _CHI_FLOOR
        return num / den

    def violation(self, pt: _Point) -> float:
        worst = (pt.power - self.p_cap) / self.p_cap
        if len(self.cs):
            worst = max(worst, float(np.max((pt.interf - self.cs.q) / self.cs.q)))
        return max(worst, 0.0)

    def comp_err(self, pt: _Point) -> float:
        """Worst complementarity error: |I/Q - 1| where lam > 0, else (I/Q - 1)+."""
        if not len(self.cs):
            return 0.0
        r = pt.interf / self.cs.q - 1.0
        return float(np.max(np.where(pt.lam > 0, np.abs(r), np.maximum(r, 0.0))))

    def accepts(self, new: _Point, ref_g: float, pred: float) -> bool:
        """Armijo acceptance of a subgradient step on the dual value."""
        return new.g <= ref_g + 0.1 * pred + 1e-12 * abs(ref_g)

    def step_seed(self, pt: _Point) -> np.ndarray:
        """Additive floor for multiplier steps and difference probes.

        The static seed reflects the power-dual scale, which can sit far
        above the multiplier basin a particular subproblem converges into;
        inside such a basin a seed-sized perturbation is the granularity of
        every step, and the walk would jitter around the optimum without
        ever resolving it.  Capping the floor at the largest live
        multiplier keeps the endgame multiplicative while preserving the
        static seed for cold starts.
        """
        act = pt.lam[pt.lam > 0]
        if act.size == 0:
            return self.lam_seed
        return np.minimum(self.lam_seed, float(np.max(act)))

    def _keeps_merit(self, trial: _Point, pt: _Point) -> bool:
        """Non-increase of the search merit: the dual value when available,
        the worst complementarity error otherwise."""
        if self.objective is not None:
            return trial.g <= pt.g + 1e-12 * abs(pt.g)
        return self.comp_err(trial) <= self.comp_err(pt) * (1.0 + 1e-12)

    def prune(self, pt: _Point) -> tuple[bool, _Point]:
        """Project strictly-slack multipliers to zero (complementary
        slackness), keeping the merit from increasing.

        Zeroing every slack multiplier at once can be rejected because one
        marginal candidate still props up its constraint; the negligible
        ones — multipliers so small that their rank-one term no longer
        influences the design — must still be cleared or their residuals
        pin the complementarity error forever.  On rejection, retry with
        the lower-influence half of the candidates, repeatedly.

        A slack multiplier is not necessarily a removable one: at a point
        that over-suppresses every protected region, all multipliers look
        slack while jointly holding the design feasible, and zeroing them
        can improve the dual value yet tear the iterate away from the
        constraint surface.  A prune is therefore also required to leave
        the worst violation no larger than it found it (beyond tolerance).
        """
        cand = np.flatnonzero(
            (pt.lam > 0) & (pt.interf < self.cs.q * (1.0 - _PRUNE_DELTA))
        )
        if cand.size == 0:
            return False, pt
        viol_cap = max(self.violation(pt), self.opts.feasibility_tol)
        cand = cand[np.argsort(pt.lam[cand] * self.cs.trace_r[cand])]
        while cand.size:
            lam_try = pt.lam.copy()
            lam_try[cand] = 0.0
            trial = self.inner(lam_try, pt.mu)
            if self._keeps_merit(trial, pt) and self.violation(trial) <= viol_cap:
                return True, trial
            if cand.size == 1:
                break
            cand = cand[: cand.size // 2]
        return False, pt

    def polish(self, pt: _Point) -> tuple[bool, _Point]:
        """Guarded Newton on the active-set equality system I_l(lam) = Q_l.

        Each step builds the system's Jacobian — from the map's exact
        ``sensitivities`` when it has them, by finite differences otherwise,
        either way folding in the power-dual coupling when mu is held at the
        power cap — solves for the full Newton move, and backtracks the step
        until the worst complementarity error strictly decreases (and the
        dual value does not increase).

        Power-normalizing maps need one extra mechanism: adjacent boundary
        samples yield nearly identical constraints, so their equality system
        can be over-determined and Newton then asks some multiplier to go
        negative — no backtracked fraction of that move is acceptable,
        because the system it solves has no nonnegative solution.  The step
        is instead taken exactly to the first boundary and the blocking
        multiplier retired from the active set (Lawson-Hanson-style
        exchange).  A bounded transient error increase is tolerated while
        crossing the corner; the best point seen is restored if the
        exchange does not pay off.  For other maps the entry point is
        restored whenever the attempt ends with a larger complementarity
        error than it started with.
        """
        cs, q = self.cs, self.cs.q
        progressed = False
        entry = pt
        err_entry = self.comp_err(pt)
        best = pt
        steps = _NEWTON_STEPS_PINNED if self.power_pinned else _NEWTON_STEPS
        for _ in range(steps):
            seed = self.step_seed(pt)
            if self.power_pinned:
                lam = np.where((pt.lam == 0.0) & (pt.interf > q), seed, pt.lam)
                if (lam != pt.lam).any():
                    pt = self.inner(lam, pt.mu)
                act = np.flatnonzero(pt.lam > 0)
            else:
                # A step can push a previously slack constraint above its
                # cap.  Seeding such rows with a guessed multiplier before
                # the next step over-suppresses everything coupled to them;
                # instead the row joins the equality system at zero and the
                # step itself sizes its multiplier.
                act = np.flatnonzero((pt.lam > 0) | (pt.interf > q))
            cap = _POLISH_MAX_ACTIVE_PINNED if self.power_pinned else _POLISH_MAX_ACTIVE
            if act.size == 0 or act.size > cap:
                break
            err0 = self.comp_err(pt)
            if self.power_pinned and err0 < self.comp_err(best):
                best = pt
            if err0 <= 0.5 * self.opts.feasibility_tol:
                break
            if self.sens is not None:
                di_dlam, di_dmu, dpow_dlam, dpow_dmu = self.sens(
                    pt.lam, pt.mu, act
                )
                jac = di_dlam
                if not self.power_pinned and dpow_dmu < 0:
                    # Power held at the cap: fold in d(mu)/d(lam_j).
                    jac = jac - np.outer(di_dmu, dpow_dlam) / dpow_dmu
                jac = jac / q[act, None]
            else:
                at_mu = self._at_mu(pt.lam)
                if self.power_pinned:
                    di_dmu = None
                    dpow_dmu = 0.0
                else:
                    dmu = 1e-6 * (pt.mu + self.mu_seed)
                    probe = self._eval(at_mu, pt.lam, pt.mu + dmu)
                    di_dmu = (probe.interf - pt.interf) / dmu
                    dpow_dmu = (probe.power - pt.power) / dmu
                jac = np.empty((act.size, act.size))
                for jcol, j in enumerate(act):
                    # Difference quotients carry a relative error around
                    # 1e-4; through conditioning of 1e3-1e4 that alone can
                    # exceed the solved step, so maps able to state their
                    # responses exactly should do so (see ``sensitivities``
                    # above).
                    hstep = 1e-6 * (pt.lam[j] + seed[j])
                    lam_p = pt.lam.copy()
                    lam_p[j] += hstep
                    col_pt = self._eval(self._at_mu(lam_p), lam_p, pt.mu)
                    col = (col_pt.interf - pt.interf) / hstep
                    if dpow_dmu < 0:  # power at the cap: correct for d(mu)/d(lam_j)
                        col = col - di_dmu * ((col_pt.power - pt.power) / hstep / dpow_dmu)
                    jac[:, jcol] = col[act] / q[act]
            r = pt.interf[act] / q[act] - 1.0
            try:
                dlam = np.linalg.solve(jac, -r)
            except np.linalg.LinAlgError:
                break
            stepped = False
            if self.power_pinned and (pt.lam[act] + dlam < 0.0).any():
                with np.errstate(divide="ignore", over="ignore"):
                    cut = np.where(dlam < 0.0, pt.lam[act] / -dlam, np.inf)
                jstar = int(np.argmin(cut))
                alpha = float(cut[jstar])
                lam_try = pt.lam.copy()
                lam_try[act] = np.maximum(0.0, pt.lam[act] + alpha * dlam)
                lam_try[act[jstar]] = 0.0
                cand = self.inner(lam_try, pt.mu)
                if self.comp_err(cand) <= err0 * _EXCHANGE_SLACK:
                    pt = cand
                    stepped = True
            else:
                alpha = 1.0
                for _ in range(8):
                    lam_try = pt.lam.copy()
                    lam_try[act] = np.maximum(0.0, pt.lam[act] + alpha * dlam)
                    cand = self.inner(lam_try, pt.mu)
                    good = self.comp_err(cand) < err0 * (1.0 - 0.1 * alpha)
                    if good and self.objective is not None:
                        # Loose guard: near the saddle the equality system's
                        # solution can sit a hair above the walk's jittered
                        # iterate in dual value, and that is fine — the
                        # terminal test is the KKT certificate, not g.  The
                        # guard only screens out steps that clearly leave
                        # the current dual basin.
                        good = cand.g <= pt.g + 1e-6 * self.g_scale
                    if good:
                        pt = cand
                        stepped = progressed = True
                        break
                    alpha *= 0.5
            if not stepped:
                break
        if self.power_pinned and self.comp_err(best) < self.comp_err(pt):
            pt = best
        if self.power_pinned:
            # Cadence credit only for events that at least halve the error;
            # weaker partial progress is kept but scheduled like a failure,
            # so the cheap ratio steps get room to work between events.
            progressed = self.comp_err(pt) < 0.5 * err_entry
        elif self.comp_err(pt) > err_entry:
            # A failed endgame must not hand a degraded iterate back to the
            # walk: the reactivation seeding before each attempt mutates the
            # point even when every Newton step is then rejected.
            return False, entry
        return progressed, pt


def subgradient_search(
    precoder_map: Callable[[DualState], Sequence[np.ndarray]],
    constraints,
    power_cap: float,
    opts: SolverOptions | None = None,
    init: DualState | None = None,
    m_t: int | None = None,
    objective: Callable[[Sequence[np.ndarray]], float] | None = None,
) -> tuple[PrecoderSet, DualState]:
    """Walk (lam, mu) until the Lagrangian minimizer satisfies the caps.

    ``precoder_map`` must return, for fixed duals, the per-user matrices
    minimizing the Lagrangian; ``objective`` (optional but strongly
    recommended) returns the utility that minimizer maximizes net of the
    dual penalties, enabling monotone line search.  Returns the precoders at
    the final duals (scaled down by at most (1+feasibility_tol) to certify
    feasibility) and the final DualState.  Raises :class:`ConvergenceError`
    if the residual has not met ``opts.epsilon`` within
    ``opts.max_iterations``.  An all-zero output (zero channel or no
    feasible nonzero precoder) is reported with a warning and returned
    as-is.
    """
    opts = opts or SolverOptions()
    cs = ConstraintSet.coerce(constraints, m_t=m_t)
    p_cap = float(power_cap)
    if not p_cap > 0:
        raise ValueError("power_cap must be > 0")

    search = _Search(precoder_map, cs, p_cap, opts, objective)
    if init is not None and len(init.lam) == len(cs):
        lam = np.array(init.lam, dtype=float)
        mu = float(init.mu)
    else:
        lam = search.lam_seed.copy()
        mu = search.mu_seed

    pt = search.inner(lam, mu)
    scale = 1.0
    next_polish = _PRUNE_EVERY
    chi = np.inf
    viol_mark = np.inf
    stall = 0
    for it in range(1, opts.max_iterations + 1):
        chi = search.chi(pt)
        viol = search.violation(pt)
        if chi <= opts.epsilon and viol <= opts.feasibility_tol:
            final = DualState(lam=pt.lam, mu=pt.mu, chi=chi, iterations=it)
            pset = PrecoderSet(
                per_user=tuple(np.asarray(f) for f in pt.per_user), duals=final
            )
            slack = 1.0 + opts.feasibility_tol
            gain = min(1.0, slack * p_cap / pt.power) if pt.power > 0 else 1.0
            if len(cs) and pt.power > 0:
                active = pt.interf > 0
                if np.any(active):
                    gain = min(
                        gain,
                        float(np.min(slack * cs.q[active] / pt.interf[active])),
                    )
            if gain < 1.0:
                pset = replace(pset.scaled(gain), duals=final)
            if pset.is_zero:
                warnings.warn(
                    "dual search converged to an all-zero precoder "
                    "(zero channel or no feasible nonzero precoder)",
                    RuntimeWarning,
                    stacklevel=2,
                )
            return pset, final

        if len(cs) == 0:
            # power-only problem: the root search is exact, so a second pass
            # cannot improve on the first — fail fast
            break

        ready = viol <= _POLISH_VIOL and (
            objective is not None or search.comp_err(pt) <= _POLISH_COMP
        )
        if ready and it >= next_polish:
            ok, pt = search.polish(pt)
            if ok:
                # Retry immediately: in badly conditioned basins a single
                # walk step can undo the polished endgame, so polish keeps
                # the iterate for as long as it makes progress.
                next_polish = it + 1
                continue
            next_polish = it + _POLISH_BACKOFF

        if it % _PRUNE_EVERY == 0:
            pruned, pt = search.prune(pt)
            if pruned:
                continue

        if objective is None:
            # No dual value to backtrack against: multiplicative ratio steps
            # lam <- lam * (I/Q), clipped per coordinate, move each
            # multiplier toward its balance point at a rate proportional to
            # its own violation; the Newton polish supplies the endgame.
            # The coupled ratio dynamics can orbit a violated limit cycle;
            # when the worst violation stops improving, a uniform doubling
            # of the active multipliers pushes the iterate onto the feasible
            # side (always reachable: suppression grows without bound in
            # lam), from which the relaxation re-approaches the caps from
            # below instead of re-entering the cycle.
            if viol > opts.feasibility_tol and not viol < 0.9 * viol_mark:
                stall += 1
                if stall >= _STALL_ITS:
                    lam_new = np.where(pt.lam > 0, pt.lam * _STALL_BOOST, 0.0)
                    seed_in = (pt.lam == 0.0) & (pt.interf > cs.q)
                    lam_new[seed_in] = search.lam_seed[seed_in]
                    pt = search.inner(lam_new, pt.mu)
                    viol_mark = np.inf
                    stall = 0
                    continue
            else:
                viol_mark = min(viol_mark, viol)
                stall = 0
            ratio = np.clip(pt.interf / cs.q, _RATIO_DOWN, _RATIO_UP)
            lam_new = pt.lam * ratio
            lam_new[lam_new < 1e-16 * search.lam_seed] = 0.0  # dead multipliers
            seed_in = (pt.lam == 0.0) & (pt.interf > cs.q)
            lam_new[seed_in] = search.lam_seed[seed_in]
            pt = search.inner(lam_new, pt.mu)
            continue
        w = np.maximum((cs.q - pt.interf) / cs.q, _SLACK_CLIP)
        d = opts.step_lambda * (pt.lam + search.step_seed(pt)) * w
        grad = w * cs.q
        trial = None
        accepted = False
        for _ in range(_ARMIJO_TRIES):
            lam_new = np.maximum(0.0, pt.lam - scale * d)
            pred = float(np.dot(grad, lam_new - pt.lam))
            trial = search.inner(lam_new, pt.mu)
            if search.accepts(trial, pt.g, pred):
                pt = trial
                scale = min(scale * 2.0, _SCALE_MAX)
                accepted = True
                break
            scale *= 0.5
        if not accepted:
            pt = trial  # bounded slip at the smallest scale keeps the walk moving

    raise ConvergenceError(
        "dual subgradient search did not converge", chi=chi, iterations=opts.max_iterations
    )
