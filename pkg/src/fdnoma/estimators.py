"""scikit-learn style wrappers around the power-allocation solvers.

A design matrix row is one channel draw: ``[best_gain, g_0, ..., g_M]`` with
the receiver gains ascending. ``fit`` solves every row and stores the
results; ``transform`` returns power coefficients and ``predict`` returns
sum rates for new rows.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .optimizer import (
    Infeasible,
    NoFeasibleGridPoint,
    achievable_sum_rate,
    exhaustive_search,
    sca_optimize,
)
from .params import ChannelRealization, DuplexMode, SystemParams, batch_rng, sample_gains
from .simulator import instantaneous_rates

__all__ = ["ScaPowerAllocator", "ExhaustiveSearchAllocator", "realizations_to_array", "sample_design"]


def realizations_to_array(realizations) -> np.ndarray:
    """Stack :class:`ChannelRealization` objects into a design matrix."""
    return np.array([[r.best_gain, *r.sorted_gains] for r in realizations], dtype=float)


def sample_design(params: SystemParams, n_draws: int, seed: int) -> np.ndarray:
    """``n_draws`` channel draws as a design matrix, reproducible from ``seed``."""
    best, gains = sample_gains(params, batch_rng(seed, 0), int(n_draws))
    return np.column_stack([best, gains])


class _AllocatorBase(TransformerMixin, BaseEstimator):
    def _params(self) -> SystemParams:
        return self.params if self.params is not None else SystemParams()

    def _rows(self, X) -> tuple[np.ndarray, SystemParams]:
        params = self._params()
        X = check_array(X, dtype=float, ensure_all_finite=True)
        if X.shape[1] != params.n_receivers + 1:
            raise ValueError(f"expected {params.n_receivers + 1} columns [best_gain, g_0..g_M], got {X.shape[1]}")
        return X, params

    def _solve_one(self, real: ChannelRealization, params: SystemParams, mode: DuplexMode):
        raise NotImplementedError

    def _solve(self, X):
        X, params = self._rows(X)
        mode = DuplexMode.parse(self.mode)
        n, width = X.shape[0], params.n_receivers
        alpha = np.full((n, width), np.nan)
        rate = np.zeros(n)
        feasible = np.zeros(n, dtype=bool)
        st_ok = np.zeros(n, dtype=bool)
        extras = []
        for i, row in enumerate(X):
            real = ChannelRealization(row[0], tuple(row[1:]))
            try:
                a, extra = self._solve_one(real, params, mode)
            except (Infeasible, NoFeasibleGridPoint):
                extras.append(None)
                continue
            feasible[i] = True
            alpha[i] = a.coefficients
            st_ok[i] = instantaneous_rates(real, a, params, mode).st_decoded
            # the secondary transmitter cannot forward what it failed to decode
            rate[i] = achievable_sum_rate(a, real, params, mode) if st_ok[i] else 0.0
            extras.append(extra)
        return alpha, rate, feasible, st_ok, extras

    def fit(self, X, y=None):
        alpha, rate, feasible, st_ok, extras = self._solve(X)
        self.alpha_ = alpha
        self.sum_rate_ = rate
        self.feasible_ = feasible
        self.st_decoded_ = st_ok
        self.n_features_in_ = alpha.shape[1] + 1
        self._store_extras(extras)
        return self

    def _store_extras(self, extras):
        pass

    def transform(self, X):
        """Power coefficients per row; NaN rows are QoS-infeasible draws."""
        check_is_fitted(self, "alpha_")
        return self._solve(X)[0]

    def predict(self, X):
        """Sum rate per row (bps/Hz); 0 for infeasible draws or when the ST fails to decode."""
        check_is_fitted(self, "alpha_")
        return self._solve(X)[1]

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).alpha_


class ScaPowerAllocator(_AllocatorBase):
    """Per-draw SCA power allocation.

    Parameters
    ----------
    params : SystemParams or None
        Network parameters; ``None`` means the defaults.
    mode : {"fd", "hd"}
    eps, max_iter, extrapolate
        Passed to :func:`fdnoma.optimizer.sca_optimize`.

    Attributes
    ----------
    alpha_ : ndarray (n_draws, M+1)
    sum_rate_ : ndarray (n_draws,)
    feasible_ : bool ndarray
    st_decoded_ : bool ndarray
    traces_ : list of ScaTrace or None
    n_iter_ : int ndarray, -1 for infeasible draws
    converged_ : bool ndarray
    """

    def __init__(self, params: SystemParams | None = None, mode: str = "fd", eps: float = 1e-4,
                 max_iter: int = 50, extrapolate: bool = True):
        self.params = params
        self.mode = mode
        self.eps = eps
        self.max_iter = max_iter
        self.extrapolate = extrapolate

    def _solve_one(self, real, params, mode):
        trace = sca_optimize(real, params, mode, eps=self.eps, max_iter=self.max_iter,
                             extrapolate=self.extrapolate)
        return trace.final.alpha, trace

    def _store_extras(self, extras):
        self.traces_ = extras
        self.n_iter_ = np.array([t.iterations if t is not None else -1 for t in extras])
        self.converged_ = np.array([t is not None and t.converged for t in extras])


class ExhaustiveSearchAllocator(_AllocatorBase):
    """Grid-search reference allocation with step ``grid_step``."""

    def __init__(self, params: SystemParams | None = None, mode: str = "fd", grid_step: float = 0.01):
        self.params = params
        self.mode = mode
        self.grid_step = grid_step

    def _solve_one(self, real, params, mode):
        alpha, _ = exhaustive_search(real, params, self.grid_step, mode)
        return alpha, None
