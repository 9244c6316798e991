"""Monte Carlo ground truth for outage and throughput.

Trials are processed in fixed-size batches. Batch ``b`` draws from
``batch_rng(seed, b)`` so the tallies do not depend on how batches are
distributed over workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analytic import throughput_from_outage
from .params import (
    ChannelRealization,
    DuplexMode,
    PowerAllocation,
    SystemParams,
    batch_rng,
    effective_rho,
    rate_prelog,
    sample_gains,
    sinr_thresholds,
)

__all__ = [
    "RateProfile",
    "OutageEstimate",
    "sinr_matrix",
    "instantaneous_rates",
    "outage_failures",
    "estimate_outage",
    "estimate_throughput",
    "DEFAULT_BATCH",
]

DEFAULT_BATCH = 2 ** 16
_Z95 = 1.96


@dataclass(frozen=True)
class RateProfile:
    """Instantaneous rates of one realization (bps/Hz)."""

    r_st_decode: float
    r_node: tuple[float, ...]
    st_decoded: bool


@dataclass(frozen=True)
class OutageEstimate:
    """Outage tallies for PR, SR_1, ..., SR_M."""

    trials: int
    failures: tuple[int, ...]

    @property
    def probability(self) -> np.ndarray:
        return np.asarray(self.failures, dtype=float) / self.trials

    @property
    def ci_halfwidth(self) -> np.ndarray:
        p = self.probability
        return _Z95 * np.sqrt(p * (1.0 - p) / self.trials)

    def merge(self, other: "OutageEstimate") -> "OutageEstimate":
        if len(self.failures) != len(other.failures):
            raise ValueError("cannot merge estimates for different receiver counts")
        return OutageEstimate(self.trials + other.trials,
                              tuple(a + b for a, b in zip(self.failures, other.failures)))


def _node_power(params: SystemParams, mode: DuplexMode) -> float:
    rho = effective_rho(params, mode)
    if mode is DuplexMode.OMA_TDMA:
        rho *= params.oma_power_scale
    return rho * params.snr


def sinr_matrix(alpha, best_gain, gains, rho_snr):
    """``S[..., v, m]``: SINR at receiver ``v`` when decoding ``x_m``, after SIC of ``x_0..x_{m-1}``.

    ``best_gain`` has shape ``(...)``, ``gains`` shape ``(..., M+1)``.
    Entries with ``m > v`` are computed too but carry no meaning.
    """
    alpha = np.asarray(alpha, dtype=float)
    tails = np.concatenate([np.cumsum(alpha[::-1])[::-1][1:], [0.0]])
    x = rho_snr * np.asarray(best_gain, dtype=float)[..., None] * np.asarray(gains, dtype=float)
    x = x[..., :, None]
    return alpha * x / (tails * x + 1.0)


def instantaneous_rates(real: ChannelRealization, alpha: PowerAllocation, params: SystemParams,
                        mode: DuplexMode | str = DuplexMode.FD) -> RateProfile:
    """Rates at the selected ST and at every receiver for one realization.

    Each receiver's rate uses its own-index SINR. SIC success at the SRs is
    not part of the profile; see :func:`outage_failures`.
    """
    mode = DuplexMode.parse(mode)
    st_pre, node_pre = rate_prelog(params, mode)
    snr, g, beta = params.snr, real.best_gain, params.beta
    gains = np.asarray(real.sorted_gains)
    if mode is DuplexMode.FD:
        rho = effective_rho(params, mode)
        sinr_st = (1 - beta) * snr * g / ((1 - beta) * rho * snr * params.i_si * g + 1)
    else:
        sinr_st = (1 - beta) * snr * g
    r_st = st_pre * math.log2(1 + sinr_st)
    st_threshold, _ = sinr_thresholds(params, mode)
    if not sinr_st >= st_threshold:
        return RateProfile(r_st, (0.0,) * len(gains), False)
    rho_snr = _node_power(params, mode)
    if mode is DuplexMode.OMA_TDMA:
        sinr = rho_snr * g * gains
    else:
        sinr = np.diagonal(sinr_matrix(alpha.coefficients, g, gains, rho_snr))
    return RateProfile(r_st, tuple(float(node_pre * math.log2(1 + s)) for s in sinr), True)


def outage_failures(best, gains, params: SystemParams, mode: DuplexMode | str = DuplexMode.FD,
                    alpha: PowerAllocation | None = None) -> np.ndarray:
    """Boolean outage indicators, shape ``(trials, M+1)``, for arrays of draws.

    The PR fails when the ST cannot decode ``x_0`` or its own SINR is below
    threshold. SR_m fails when the ST cannot decode or any SIC stage
    ``x_0..x_m`` at SR_m falls below its threshold. Under OMA-TDMA each
    receiver only decodes its own slot.
    """
    mode = DuplexMode.parse(mode)
    alpha = params.alpha if alpha is None else alpha
    best = np.asarray(best, dtype=float)
    gains = np.asarray(gains, dtype=float)
    snr, beta = params.snr, params.beta
    st_threshold, thresholds = sinr_thresholds(params, mode)
    if mode is DuplexMode.FD:
        rho = effective_rho(params, mode)
        sinr_st = (1 - beta) * snr * best / ((1 - beta) * rho * snr * params.i_si * best + 1)
    else:
        sinr_st = (1 - beta) * snr * best
    st_fail = sinr_st < st_threshold
    rho_snr = _node_power(params, mode)
    if mode is DuplexMode.OMA_TDMA:
        node_fail = rho_snr * best[:, None] * gains < thresholds
    else:
        stage_fail = sinr_matrix(alpha.coefficients, best, gains, rho_snr) < thresholds
        # receiver v fails if any stage m <= v fails
        node_fail = np.cumsum(stage_fail, axis=-1, dtype=np.int64).diagonal(axis1=-2, axis2=-1) > 0
    return st_fail[:, None] | node_fail


def _batch_failures(args) -> tuple[int, tuple[int, ...]]:
    params, mode, seed, index, size = args
    best, gains = sample_gains(params, batch_rng(seed, index), size)
    fail = outage_failures(best, gains, params, mode)
    return size, tuple(int(c) for c in fail.sum(axis=0))


def _batches(trials: int, batch_size: int):
    full, rest = divmod(trials, batch_size)
    sizes = [batch_size] * full + ([rest] if rest else [])
    return list(enumerate(sizes))


def estimate_outage(params: SystemParams, mode: DuplexMode | str = DuplexMode.FD, trials: int = 10 ** 6,
                    seed: int = 0, batch_size: int = DEFAULT_BATCH, n_jobs: int = 1) -> OutageEstimate:
    """Monte Carlo outage probability of every receiver.

    Parameters
    ----------
    trials : int
        Number of channel realizations; must be at least 1.
    seed : int
        Global seed. Results are bit-identical for equal
        ``(params, mode, trials, seed, batch_size)`` whatever ``n_jobs`` is.
    n_jobs : int
        Worker processes; 1 runs in-process.
    """
    if int(trials) < 1:
        raise ValueError("trials must be at least 1")
    if int(batch_size) < 1:
        raise ValueError("batch_size must be at least 1")
    mode = DuplexMode.parse(mode)
    jobs = [(params, mode, int(seed), i, size) for i, size in _batches(int(trials), int(batch_size))]
    if n_jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            parts = list(pool.map(_batch_failures, jobs))
    else:
        parts = [_batch_failures(job) for job in jobs]
    total = OutageEstimate(0, (0,) * params.n_receivers)
    for size, fails in parts:
        total = total.merge(OutageEstimate(size, fails))
    return total


def estimate_throughput(params: SystemParams, mode: DuplexMode | str = DuplexMode.FD, trials: int = 10 ** 6,
                        seed: int = 0, **kwargs) -> tuple[float, float]:
    """Monte Carlo ``(nu_p, nu_s)`` from :func:`estimate_outage`."""
    est = estimate_outage(params, mode, trials, seed, **kwargs)
    return throughput_from_outage(est.probability, params.target_rates)
