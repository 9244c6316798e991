"""Log-barrier interior method for small dense convex programs.

Solves ``max sum(log x[obj_idx])`` subject to linear constraints
``A @ x + b >= 0`` and concave quadratics ``c @ x + d - (u @ x)**2 / 4 >= 0``.
Only what the power-allocation subproblem needs, nothing more general.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SolverFailure(RuntimeError):
    """The barrier method did not reach the requested accuracy."""


class NoStrictInterior(RuntimeError):
    """Phase I could not find a strictly feasible point."""


@dataclass
class QuadConstraint:
    c: np.ndarray
    d: float
    u: np.ndarray


class Problem:
    def __init__(self, n: int, obj_idx, A, b, quads: list[QuadConstraint]):
        self.n = n
        self.obj_idx = np.asarray(obj_idx, dtype=int)
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float)
        # unit-norm rows keep the barrier Hessian well scaled
        norms = np.linalg.norm(A, axis=1)
        norms[norms == 0] = 1.0
        self.A = A / norms[:, None]
        self.b = b / norms
        self.quads = []
        for q in quads:
            s = max(np.abs(q.c).max(), 1.0)
            self.quads.append(QuadConstraint(q.c / s, q.d / s, q.u / np.sqrt(s)))

    @property
    def n_constraints(self) -> int:
        return self.A.shape[0] + len(self.quads)

    def slacks(self, x: np.ndarray) -> np.ndarray:
        lin = self.A @ x + self.b
        quad = [q.c @ x + q.d - 0.25 * (q.u @ x) ** 2 for q in self.quads]
        return np.concatenate([lin, quad])

    def objective(self, x: np.ndarray) -> float:
        return float(np.sum(np.log(x[self.obj_idx])))

    def _grads(self, x):
        rows = [self.A]
        for q in self.quads:
            rows.append((q.c - 0.5 * (q.u @ x) * q.u)[None, :])
        return np.vstack(rows)

    def barrier_terms(self, x, slack_shift: float = 0.0):
        """Gradient and Hessian of ``-sum(log(h_k(x) + slack_shift))``."""
        h = self.slacks(x) + slack_shift
        G = self._grads(x)
        grad = -(G / h[:, None]).sum(axis=0)
        hess = (G / h[:, None]).T @ (G / h[:, None])
        n_lin = self.A.shape[0]
        for k, q in enumerate(self.quads):
            hess += 0.5 * np.outer(q.u, q.u) / h[n_lin + k]
        return grad, hess, G, h


def _newton_solve(H, g):
    try:
        return np.linalg.solve(H, -g)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(H + 1e-12 * np.eye(len(g)), -g, rcond=None)[0]


def phase_one(prob: Problem, x0: np.ndarray, max_newton: int = 400, margin: float = 1e-8) -> np.ndarray:
    """Find ``x`` with every constraint at least ``margin`` inside, starting anywhere.

    Minimizes ``s`` subject to ``h_k(x) + s > 0`` and ``s > -1``; stops as soon
    as an iterate clears the margin. Points hugging the boundary make the
    barrier Hessian numerically singular, hence the margin.
    """
    x = np.array(x0, dtype=float)
    h = prob.slacks(x)
    if h.min() > margin:
        return x
    s = max(0.0, -h.min()) + 1.0
    tau = 1.0
    m = prob.n_constraints + 1
    used = 0
    while True:
        for _ in range(100):
            used += 1
            if used > max_newton:
                raise NoStrictInterior("phase I exhausted its Newton budget")
            g_x, H_x, G, hs = prob.barrier_terms(x, s)
            # augmented variable y = (x, s); objective tau * s; extra constraint s + 1 > 0
            n = prob.n
            g = np.zeros(n + 1)
            H = np.zeros((n + 1, n + 1))
            g[:n] = g_x
            g[n] = tau - np.sum(1.0 / hs) - 1.0 / (s + 1.0)
            H[:n, :n] = H_x
            col = (G / hs[:, None] ** 2).sum(axis=0)
            H[:n, n] = H[n, :n] = col
            H[n, n] = np.sum(1.0 / hs ** 2) + 1.0 / (s + 1.0) ** 2
            dy = _newton_solve(H, g)
            dec = -g @ dy

            def phi(xx, ss):
                hh = prob.slacks(xx) + ss
                if hh.min() <= 0 or ss <= -1:
                    return np.inf
                return tau * ss - np.sum(np.log(hh)) - np.log(ss + 1.0)

            f0 = phi(x, s)
            step = 1.0
            while phi(x + step * dy[:n], s + step * dy[n]) > f0 - 0.01 * step * dec:
                step *= 0.5
                if step < 1e-14:
                    break
            x = x + step * dy[:n]
            s = s + step * dy[n]
            if prob.slacks(x).min() > margin:
                return x
            if dec / 2 < 1e-12 or step < 1e-14:
                break
        if m / tau < 1e-12:
            raise NoStrictInterior(f"no strictly feasible point (best shift {s:.3g})")
        tau *= 10.0


def maximize(prob: Problem, x0: np.ndarray, gap: float = 1e-9, mu: float = 15.0,
             max_newton: int = 500, newton_tol: float = 1e-9) -> np.ndarray:
    """Barrier path following from a strictly feasible ``x0``.

    ``gap`` bounds the duality gap ``m / tau`` at exit. A line search that
    cannot make progress ends the centering step for the current ``tau``;
    at large ``tau`` that is rounding, not failure.
    """
    x = np.array(x0, dtype=float)
    if prob.slacks(x).min() <= 0:
        raise ValueError("starting point is not strictly feasible")
    m = prob.n_constraints
    tau = 1.0
    used = 0
    idx = prob.obj_idx

    def phi(xx, t):
        hh = prob.slacks(xx)
        if hh.min() <= 0 or np.any(xx[idx] <= 0):
            return np.inf
        return -t * np.sum(np.log(xx[idx])) - np.sum(np.log(hh))

    while True:
        for _ in range(200):
            used += 1
            if used > max_newton:
                raise SolverFailure(f"barrier method did not converge in {max_newton} Newton steps")
            g, H, _, _ = prob.barrier_terms(x)
            g[idx] -= tau / x[idx]
            H[idx, idx] += tau / x[idx] ** 2
            dx = _newton_solve(H, g)
            dec = -g @ dx
            if dec / 2 <= newton_tol:
                break
            f0 = phi(x, tau)
            step = 1.0
            while phi(x + step * dx, tau) > f0 - 0.01 * step * dec:
                step *= 0.5
                if step < 1e-10:
                    break
            if step < 1e-10 or step * np.abs(dx).max() <= 1e-14 * (1.0 + np.abs(x).max()):
                break
            x = x + step * dx
        if m / tau < gap:
            return x
        tau *= mu
