"""Sum-rate maximizing NOMA power allocation.

The sum rate ``sum_i log2(1 + SINR_i)`` (own-index SINRs) is maximized over
the power coefficients under per-link QoS, ordering and total-power
constraints. The nonconvex problem is handled by successive convex
approximation: each product ``z*t`` in the SINR epigraph constraints is
written as ``((z+t)^2 - (z-t)^2)/4`` and the concave part is linearized
at the previous iterate, giving a convex inner approximation.

Decision vector layout: ``x = [alpha_0..alpha_M, t_0..t_M, z_0..z_{M-1}]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from sklearn.isotonic import isotonic_regression

from ._barrier import NoStrictInterior, Problem, QuadConstraint, SolverFailure, maximize, phase_one
from .params import (
    ChannelRealization,
    DuplexMode,
    PowerAllocation,
    SystemParams,
    effective_rho,
    rate_prelog,
    sinr_thresholds,
)

__all__ = [
    "Infeasible",
    "NoFeasibleGridPoint",
    "SolverFailure",
    "ScaPoint",
    "ScaTrace",
    "link_gains",
    "own_sinr",
    "achievable_sum_rate",
    "sum_rate_explicit_min",
    "qos_feasible",
    "initial_feasible_point",
    "solve_convex_subproblem",
    "sca_optimize",
    "simplex_grid",
    "exhaustive_search",
    "oma_sum_rate",
]


class Infeasible(ValueError):
    """The channel realization cannot meet every QoS target."""


class NoFeasibleGridPoint(ValueError):
    """No grid point of the exhaustive search meets every QoS target."""


@dataclass(frozen=True)
class ScaPoint:
    alpha: PowerAllocation
    t: tuple[float, ...]
    z: tuple[float, ...]

    @property
    def objective(self) -> float:
        """Product of the SINR slacks ``t_i``."""
        return math.prod(self.t)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.alpha.as_array(), self.t, self.z])


@dataclass
class ScaTrace:
    iterates: list[ScaPoint] = field(default_factory=list)
    objectives: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        """Convex subproblems solved (the initial point is not counted)."""
        return max(len(self.iterates) - 1, 0)

    @property
    def final(self) -> ScaPoint:
        return self.iterates[-1]


def _mode(mode) -> DuplexMode:
    mode = DuplexMode.parse(mode)
    if mode is DuplexMode.OMA_TDMA:
        raise ValueError("power allocation applies to the NOMA modes (fd, hd) only")
    return mode


def link_gains(real: ChannelRealization, params: SystemParams, mode=DuplexMode.FD) -> np.ndarray:
    """``rho * snr * g * g_i`` for every receiver: the SNR per unit power coefficient."""
    rho = effective_rho(params, _mode(mode))
    return rho * params.snr * real.best_gain * np.asarray(real.sorted_gains)


def _tails(alpha: np.ndarray) -> np.ndarray:
    return np.concatenate([np.cumsum(alpha[::-1])[::-1][1:], [0.0]])


def own_sinr(alpha, real: ChannelRealization, params: SystemParams, mode=DuplexMode.FD) -> np.ndarray:
    a = link_gains(real, params, mode)
    alpha = np.asarray(getattr(alpha, "coefficients", alpha), dtype=float)
    return alpha * a / (_tails(alpha) * a + 1.0)


def achievable_sum_rate(alpha, real: ChannelRealization, params: SystemParams, mode=DuplexMode.FD) -> float:
    """Sum over receivers of ``prelog * log2(1 + SINR_{i,i})``."""
    _, pre = rate_prelog(params, _mode(mode))
    return float(pre * np.sum(np.log2(1.0 + own_sinr(alpha, real, params, mode))))


def sum_rate_explicit_min(alpha, real: ChannelRealization, params: SystemParams, mode=DuplexMode.FD) -> float:
    """Sum rate with each ``x_m`` rate set by the weakest decoder among receivers ``m..M``."""
    _, pre = rate_prelog(params, _mode(mode))
    a = link_gains(real, params, mode)
    alpha = np.asarray(getattr(alpha, "coefficients", alpha), dtype=float)
    tails = _tails(alpha)
    total = 0.0
    for m in range(len(alpha)):
        sinr = min(alpha[m] * a[v] / (tails[m] * a[v] + 1.0) for v in range(m, len(alpha)))
        total += pre * math.log2(1.0 + sinr)
    return total


def _qos_rows(a: np.ndarray, gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Rows ``A @ alpha + b`` giving the QoS margins ``a_m alpha_m - gamma_m (a_m tail_m + 1)``."""
    n = len(a)
    A = np.zeros((n, n))
    for m in range(n):
        A[m, m] = a[m]
        A[m, m + 1:] = -gamma[m] * a[m]
    return A, -np.asarray(gamma, dtype=float)


def qos_feasible(alpha, real: ChannelRealization, params: SystemParams,
                 mode=DuplexMode.FD) -> tuple[bool, np.ndarray]:
    """Check the QoS constraints of every link; returns ``(ok, margins)``.

    ``margins[m] = a_m alpha_m - gamma_m (a_m sum(alpha[m+1:]) + 1)``, where
    ``a_m`` comes from :func:`link_gains`.
    """
    mode = _mode(mode)
    _, gamma = sinr_thresholds(params, mode)
    A, b = _qos_rows(link_gains(real, params, mode), gamma)
    alpha = np.asarray(getattr(alpha, "coefficients", alpha), dtype=float)
    margins = A @ alpha + b
    return bool(np.all(margins >= 0)), margins


def _structure_rows(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Ordering ``alpha_i - alpha_{i+1} >= 0``, ``alpha_M >= 0`` and ``1 - sum(alpha) >= 0``."""
    rows, rhs = [], []
    for i in range(n - 1):
        r = np.zeros(n)
        r[i], r[i + 1] = 1.0, -1.0
        rows.append(r)
        rhs.append(0.0)
    r = np.zeros(n)
    r[-1] = 1.0
    rows.append(r)
    rhs.append(0.0)
    rows.append(-np.ones(n))
    rhs.append(1.0)
    return np.array(rows), np.array(rhs)


def _point_from_alpha(alpha: np.ndarray, a: np.ndarray) -> ScaPoint:
    tails = _tails(alpha)
    interference = tails * a + 1.0
    t = 1.0 + alpha * a / interference
    return ScaPoint(PowerAllocation(tuple(alpha)), tuple(t), tuple(interference[:-1]))


def initial_feasible_point(real: ChannelRealization, params: SystemParams, mode=DuplexMode.FD) -> ScaPoint:
    """Max-min-margin feasibility LP over the power coefficients.

    Raises
    ------
    Infeasible
        If the best achievable minimum margin is negative.
    """
    mode = _mode(mode)
    n = params.n_receivers
    _, gamma = sinr_thresholds(params, mode)
    a = link_gains(real, params, mode)
    A_q, b_q = _qos_rows(a, gamma)
    A_s, b_s = _structure_rows(n)
    A = np.vstack([A_q, A_s])
    b = np.concatenate([b_q, b_s])
    norms = np.linalg.norm(A, axis=1)
    # margin_k = (A_k alpha + b_k)/|A_k| >= s  <=>  -A_k alpha + |A_k| s <= b_k
    A_ub = np.hstack([-A, norms[:, None]])
    res = linprog(np.r_[np.zeros(n), -1.0], A_ub=A_ub, b_ub=b,
                  bounds=[(0.0, 1.0)] * n + [(None, 1.0)], method="highs")
    if res.status != 0 or -res.fun < -1e-12:
        raise Infeasible("QoS targets cannot be met on this realization")
    alpha = np.clip(res.x[:n], 0.0, 1.0)
    if not qos_feasible(alpha, real, params, mode)[0]:
        raise Infeasible("QoS targets can only be met on a degenerate set")
    return _point_from_alpha(alpha, a)


def _subproblem(real, params, mode, lin: ScaPoint) -> Problem:
    n = params.n_receivers
    m_count = n - 1
    dim = 3 * n - 1
    ia = np.arange(n)
    it = n + np.arange(n)
    iz = 2 * n + np.arange(m_count)
    _, gamma = sinr_thresholds(params, mode)
    a = link_gains(real, params, mode)

    rows, rhs = [], []

    def row():
        return np.zeros(dim)

    # interference epigraphs: z_m - a_m * tail_m - 1 >= 0
    for m in range(m_count):
        r = row()
        r[iz[m]] = 1.0
        r[ia[m + 1:]] = -a[m]
        rows.append(r)
        rhs.append(-1.0)
    # last receiver has no interference: a_M alpha_M - t_M + 1 >= 0
    r = row()
    r[ia[-1]] = a[-1]
    r[it[-1]] = -1.0
    rows.append(r)
    rhs.append(1.0)
    A_q, b_q = _qos_rows(a, gamma)
    A_s, b_s = _structure_rows(n)
    for A_blk, b_blk in ((A_q, b_q), (A_s, b_s)):
        for k in range(A_blk.shape[0]):
            r = row()
            r[ia] = A_blk[k]
            rows.append(r)
            rhs.append(b_blk[k])
    for i in range(n):
        r = row()
        r[it[i]] = 1.0
        rows.append(r)
        rhs.append(-1.0)

    quads = []
    for m in range(m_count):
        # z t = (z/s)(s t); s balances both factors at the linearization point,
        # which keeps the dropped curvature term small when z >> t
        s = math.sqrt(lin.z[m] / lin.t[m])
        d_bar = lin.z[m] / s - s * lin.t[m]
        c = row()
        c[ia[m]] = a[m]
        c[iz[m]] = 1.0 + 0.5 * d_bar / s
        c[it[m]] = -0.5 * d_bar * s
        u = row()
        u[iz[m]] = 1.0 / s
        u[it[m]] = s
        quads.append(QuadConstraint(c, -0.25 * d_bar ** 2, u))
    return Problem(dim, it, np.array(rows), np.array(rhs), quads)


def solve_convex_subproblem(real: ChannelRealization, params: SystemParams, linearization_point: ScaPoint,
                            mode=DuplexMode.FD) -> ScaPoint:
    """Solve the convexified problem around ``linearization_point``.

    Maximizes ``sum(log t)``. The linearization point is feasible for its own
    subproblem, so the result never has a smaller objective than it; when
    the feasible set has no strict interior the point itself is returned.

    Raises
    ------
    SolverFailure
        If the barrier iterations run out.
    """
    mode = _mode(mode)
    n = params.n_receivers
    prob = _subproblem(real, params, mode, linearization_point)
    x_lin = linearization_point.as_vector()
    try:
        x0 = phase_one(prob, x_lin)
    except NoStrictInterior:
        return linearization_point
    x = maximize(prob, x0)
    if prob.objective(x) < prob.objective(x_lin):
        return linearization_point
    alpha = _clean_alpha(x[:n])
    return ScaPoint(PowerAllocation(tuple(alpha)), tuple(x[n:2 * n]), tuple(x[2 * n:]))


def _clean_alpha(alpha: np.ndarray) -> np.ndarray:
    alpha = np.clip(alpha, 0.0, 1.0)
    # interior-point output can violate ordering by a rounding error
    return np.minimum.accumulate(alpha)


def _ordered_projection(x: np.ndarray) -> np.ndarray | None:
    """Nonincreasing, nonnegative vector near ``x`` with sum at most 1, or ``None``."""
    x = np.clip(isotonic_regression(x, increasing=False), 0.0, None)
    excess = x.sum() - 1.0
    if excess > 0:
        x = np.clip(x - excess / len(x), 0.0, None)
    x = np.minimum.accumulate(x)
    return x if x.sum() <= 1.0 else None


def _extrapolate(base: ScaPoint, step: ScaPoint, a: np.ndarray, real, params, mode) -> ScaPoint:
    """Best polished point along the power-allocation step, stretched by up to 64x.

    The convexified set is a conservative local model, so the subproblem
    step is short when the optimum lies far away. Candidates are projected
    back onto the ordering and simplex constraints and kept only if QoS
    holds and the true objective improves on ``step``.
    """
    origin = base.alpha.as_array()
    direction = step.alpha.as_array() - origin
    best = step
    for stretch in _STRETCH:
        alpha = _ordered_projection(origin + stretch * direction)
        if alpha is None:
            continue
        cand = _point_from_alpha(alpha, a)
        if cand.objective > best.objective and qos_feasible(alpha, real, params, mode)[0]:
            best = cand
    return best


_STRETCH = (64.0, 32.0, 16.0, 8.0, 4.0, 2.0)


def sca_optimize(real: ChannelRealization, params: SystemParams, mode=DuplexMode.FD, eps: float = 1e-4,
                 max_iter: int = 50, start: ScaPoint | None = None, extrapolate: bool = True) -> ScaTrace:
    """Iterate convex subproblems until the relative objective gain drops below ``eps``.

    After each subproblem the slacks are tightened to the SINRs of the new
    power allocation, which can only raise the objective. With
    ``extrapolate`` the step is also tried at larger lengths and the best
    feasible candidate is kept; either way the objective never decreases.

    Raises
    ------
    Infeasible
        If no initial feasible point exists.
    SolverFailure
        If a subproblem solve fails.
    """
    mode = _mode(mode)
    if not eps > 0:
        raise ValueError("eps must be positive")
    a = link_gains(real, params, mode)
    point = start if start is not None else initial_feasible_point(real, params, mode)
    trace = ScaTrace([point], [point.objective])
    for _ in range(int(max_iter)):
        sol = solve_convex_subproblem(real, params, point, mode)
        tight = _point_from_alpha(sol.alpha.as_array(), a)
        new = tight if tight.objective >= sol.objective and qos_feasible(tight.alpha, real, params, mode)[0] else sol
        prev = trace.objectives[-1]
        if new.objective < prev:
            new = point
        elif extrapolate:
            new = _extrapolate(point, new, a, real, params, mode)
        trace.iterates.append(new)
        trace.objectives.append(new.objective)
        point = new
        if (new.objective - prev) / prev < eps:
            trace.converged = True
            break
    return trace


def simplex_grid(n: int, step: float) -> np.ndarray:
    """All nonincreasing ``n``-vectors on the ``step`` lattice with sum at most one.

    Rows come out in lexicographic order.
    """
    k = round(1.0 / step)
    if k < 1 or abs(k * step - 1.0) > 1e-9:
        raise ValueError(f"grid step must divide 1, got {step}")

    out = []

    def rec(prefix, cap, budget, left):
        if left == 0:
            out.append(prefix)
            return
        for v in range(0, min(cap, budget) + 1):
            # the remaining left-1 entries are at most v each
            rec(prefix + (v,), v, budget - v, left - 1)

    for v0 in range(0, k + 1):
        rec((v0,), v0, k - v0, n - 1)
    grid = np.array(out, dtype=np.int64)
    order = np.lexsort(grid.T[::-1])
    return grid[order] / k


def exhaustive_search(real: ChannelRealization, params: SystemParams, grid_step: float = 0.01,
                      mode=DuplexMode.FD) -> tuple[PowerAllocation, float]:
    """Grid search over the ordered simplex; ties go to the lexicographically smallest alpha.

    Raises
    ------
    NoFeasibleGridPoint
        If no grid point passes the QoS check.
    """
    mode = _mode(mode)
    grid = simplex_grid(params.n_receivers, grid_step)
    _, gamma = sinr_thresholds(params, mode)
    a = link_gains(real, params, mode)
    A_q, b_q = _qos_rows(a, gamma)
    ok = np.all(grid @ A_q.T + b_q >= 0, axis=1)
    if not ok.any():
        raise NoFeasibleGridPoint(f"no QoS-feasible point on the {grid_step} grid")
    feas = grid[ok]
    tails = np.cumsum(feas[:, ::-1], axis=1)[:, ::-1] - feas
    _, pre = rate_prelog(params, mode)
    rates = pre * np.log2(1.0 + feas * a / (tails * a + 1.0)).sum(axis=1)
    best = int(np.argmax(rates))
    return PowerAllocation(tuple(feas[best])), float(rates[best])


def oma_sum_rate(real: ChannelRealization, params: SystemParams) -> float:
    """OMA-TDMA sum rate: every receiver gets its own slot at full harvested power.

    Raises :class:`Infeasible` when a receiver misses its target.
    """
    _, pre = rate_prelog(params, DuplexMode.OMA_TDMA)
    _, gamma = sinr_thresholds(params, DuplexMode.OMA_TDMA)
    rho = effective_rho(params, DuplexMode.OMA_TDMA) * params.oma_power_scale
    snr = rho * params.snr * real.best_gain * np.asarray(real.sorted_gains)
    if np.any(snr < gamma):
        raise Infeasible("an OMA slot misses its QoS target")
    return float(pre * np.sum(np.log2(1.0 + snr)))
