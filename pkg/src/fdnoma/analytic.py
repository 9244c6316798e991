"""Closed-form outage probability and throughput.

The primary and secondary outage expressions share one structure: the
probability that the selected ST fails to decode the primary symbol, plus an
integral over the best-ST gain of the ordered receiver-gain CDF. The inner
exponential ``exp(-a/x)`` is replaced by ``1 - a/x``, which leaves integer
order upper incomplete gamma functions only.

All alternating sums go through :func:`math.fsum`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy.special import exp1

from .params import DuplexMode, SystemParams, effective_rho, sinr_thresholds

__all__ = [
    "ApproximationClampWarning",
    "CoefficientTable",
    "OutageInputs",
    "upper_incomplete_gamma_int",
    "c_coefficients",
    "best_channel_cdf",
    "best_channel_pdf",
    "ordered_gain_cdf",
    "outage_inputs",
    "outage_primary_analytic",
    "outage_secondary_analytic",
    "outage_analytic",
    "throughput_analytic",
]

CoefficientFn = Callable[[int, int], "CoefficientTable"]


class ApproximationClampWarning(RuntimeWarning):
    """The ``1 - a/x`` approximation pushed an outage value outside [0, 1]."""


def upper_incomplete_gamma_int(j: int, x: float) -> float:
    """Upper incomplete gamma ``Gamma(j, x)`` for integer ``j >= 0`` and ``x > 0``.

    Uses ``(j-1)! e^{-x} sum_{k<j} x^k/k!`` for ``j >= 1`` and the exponential
    integral ``E1(x)`` for ``j = 0``.
    """
    if int(j) != j or j < 0:
        raise ValueError(f"order must be a nonnegative integer, got {j!r}")
    if not x > 0:
        raise ValueError(f"argument must be positive, got {x!r}")
    j = int(j)
    if j == 0:
        return float(exp1(x))
    term = 1.0
    terms = [term]
    for k in range(1, j):
        term *= x / k
        terms.append(term)
    return math.factorial(j - 1) * math.exp(-x) * math.fsum(terms)


@dataclass(frozen=True)
class CoefficientTable:
    """Coefficients of ``(sum_{n<N} x^n/n!)**l`` in increasing powers of ``x``."""

    l: int
    n_antennas: int
    values: tuple[float, ...]

    def __len__(self):
        return len(self.values)

    def __getitem__(self, j):
        return self.values[j]


@lru_cache(maxsize=None)
def _c_exact(l: int, n_antennas: int) -> tuple[Fraction, ...]:
    top = l * (n_antennas - 1)
    c = [Fraction(1)]
    for j in range(1, top + 1):
        q = min(j, n_antennas - 1)
        acc = sum((Fraction(p * l - j + p, math.factorial(p)) * c[j - p] for p in range(1, q + 1)), Fraction(0))
        c.append(acc / j)
    return tuple(c)


def c_coefficients(l: int, n_antennas: int) -> CoefficientTable:
    """Power-series coefficients of the ``l``-th power of the truncated exponential.

    Computed with the recursion
    ``C_j = (1/j) sum_{p=1}^{min(j, N-1)} (p*l - j + p)/p! * C_{j-p}``
    in exact rational arithmetic, then rounded once to float.
    """
    if l < 1 or n_antennas < 1:
        raise ValueError("l and n_antennas must be positive")
    exact = _c_exact(int(l), int(n_antennas))
    return CoefficientTable(int(l), int(n_antennas), tuple(float(v) for v in exact))


def _check_x(x: float) -> float:
    if x < 0:
        raise ValueError(f"gain argument must be nonnegative, got {x}")
    return float(x)


def best_channel_cdf(x: float, n_sts: int, n_antennas: int, lambda_ps: float,
                     coeffs: CoefficientFn = c_coefficients) -> float:
    """CDF of the largest of ``n_sts`` i.i.d. Gamma(``n_antennas``, ``lambda_ps``) gains."""
    x = _check_x(x)
    if x == 0:
        return 0.0
    u = x / lambda_ps
    terms = [1.0]
    for l in range(1, n_sts + 1):
        c = coeffs(l, n_antennas)
        sign = -1.0 if l % 2 else 1.0
        scale = math.comb(n_sts, l) * math.exp(-l * u)
        terms.extend(sign * scale * c[j] * u ** j for j in range(len(c)))
    return min(max(math.fsum(terms), 0.0), 1.0)


def best_channel_pdf(x: float, n_sts: int, n_antennas: int, lambda_ps: float,
                     coeffs: CoefficientFn = c_coefficients) -> float:
    """Density matching :func:`best_channel_cdf`."""
    x = _check_x(x)
    u = x / lambda_ps
    terms = []
    for l in range(1, n_sts + 1):
        c = coeffs(l, n_antennas)
        sign = -1.0 if l % 2 else 1.0
        scale = math.comb(n_sts, l) * math.exp(-l * u) / lambda_ps
        for j in range(len(c)):
            deriv = (j * u ** (j - 1) if j else 0.0) - l * u ** j
            terms.append(sign * scale * c[j] * deriv)
    return math.fsum(terms)


def _order_stat_weights(q: int, n: int) -> list[tuple[int, float]]:
    """``[(k, w_k)]`` such that the CDF of the ``q``-th smallest of ``n`` exponentials
    is ``sum_k w_k exp(-k x / lambda)``."""
    if not 1 <= q <= n:
        raise ValueError(f"order index q={q} must lie in [1, {n}]")
    iota = math.factorial(n) / (math.factorial(q - 1) * math.factorial(n - q))
    weights: dict[int, list[float]] = {}
    for c in range(n - q + 1):
        outer = iota * math.comb(n - q, c) * (-1) ** c / (q + c)
        for k in range(q + c + 1):
            weights.setdefault(k, []).append(outer * math.comb(q + c, k) * (-1) ** k)
    return [(k, math.fsum(ws)) for k, ws in sorted(weights.items())]


def ordered_gain_cdf(x: float, q: int, n: int, lam: float) -> float:
    """CDF of the ``q``-th smallest of ``n`` i.i.d. exponential gains with mean ``lam``.

    Expands ``iota_q * sum_c C(n-q, c) (-1)^c / (q+c) * F(x)^(q+c)`` with
    ``F(x) = 1 - exp(-x/lam)`` through the binomial theorem.
    """
    x = _check_x(x)
    terms = [w * math.exp(-k * x / lam) for k, w in _order_stat_weights(q, n)]
    return min(max(math.fsum(terms), 0.0), 1.0)


@dataclass(frozen=True)
class OutageInputs:
    """Thresholds shared by the primary and secondary closed forms for one mode."""

    gamma_th: tuple[float, ...]
    gamma_st: float
    mu: float
    theta: tuple[float, ...]
    rho: float
    i_si: float
    # True when the ST can never decode x_0 (gamma_st * rho * i_si >= 1)
    st_blocked: bool


def outage_inputs(params: SystemParams, mode: DuplexMode | str = DuplexMode.FD) -> OutageInputs:
    """Evaluate the SINR thresholds, ``mu`` and the per-stage ``Theta`` values.

    ``theta[m]`` is ``inf`` when the SIC stage for ``x_m`` can never succeed.
    """
    mode = DuplexMode.parse(mode)
    if mode is DuplexMode.OMA_TDMA:
        raise ValueError("closed forms cover the NOMA modes (fd, hd) only")
    rho = effective_rho(params, mode)
    gamma_st, gamma = sinr_thresholds(params, mode)
    i_si = params.i_si if mode is DuplexMode.FD else 0.0
    blocked = gamma_st * rho * i_si >= 1.0
    mu = math.inf if blocked else gamma_st / ((1.0 - params.beta) * (1.0 - gamma_st * rho * i_si))
    tails = params.alpha.tail_sums()
    alpha = params.alpha.as_array()
    theta = []
    for m in range(params.n_receivers):
        denom = alpha[m] - tails[m] * gamma[m]
        theta.append(float(gamma[m] / (rho * denom)) if denom > 0 else math.inf)
    return OutageInputs(tuple(float(g) for g in gamma), gamma_st, mu, tuple(theta), rho, i_si, blocked)


def _phi1(mu_over_snr: float, params: SystemParams, coeffs: CoefficientFn) -> float:
    """Probability that the selected ST fails to decode the primary symbol."""
    return best_channel_cdf(mu_over_snr, params.n_sts, params.n_antennas, params.lambda_ps, coeffs)


def _phi2(inp: OutageInputs, params: SystemParams, q: int, theta: float, lam: float,
          coeffs: CoefficientFn) -> float:
    """Approximate probability that the ST decodes but receiver ``q`` fails."""
    snr = params.snr
    lps = params.lambda_ps
    n_rx = params.n_receivers
    iota = math.factorial(n_rx) / (math.factorial(q - 1) * math.factorial(n_rx - q))
    shift = theta / (lam * lps * snr)
    terms = []
    for l in range(1, params.n_sts + 1):
        b = l * inp.mu / (lps * snr)
        c = coeffs(l, params.n_antennas)
        gam = [upper_incomplete_gamma_int(j, b) for j in range(len(c) + 1)]
        # the j*Gamma(j-1, b) term vanishes at j = 0
        inner = []
        for j in range(len(c)):
            base = c[j] / l ** j
            inner.append((base, gam[j], gam[j + 1], gam[j - 1] if j else 0.0, j))
        for cc in range(n_rx - q + 1):
            for n in range(q + cc + 1):
                sign = (-1) ** (cc + n + l)
                weight = iota * sign * math.comb(n_rx - q, cc) * math.comb(q + cc, n) * math.comb(params.n_sts, l) / (q + cc)
                for base, g_j, g_j1, g_jm1, j in inner:
                    bracket = (j + n * l * shift) * g_j - g_j1 - n * j * l * shift * g_jm1
                    terms.append(weight * base * bracket)
    return math.fsum(terms)


# rounding residue of the cancelling sums, not an approximation artefact
_ROUNDING = 1e-12


def _clamped(value: float, label: str) -> float:
    if value < -_ROUNDING or value > 1.0 + _ROUNDING:
        warnings.warn(f"{label}: approximation gave {value:.6g}, clamped to [0, 1]",
                      ApproximationClampWarning, stacklevel=3)
    return min(max(value, 0.0), 1.0)


def _outage_node(params: SystemParams, mode: DuplexMode | str, node: int, coeffs: CoefficientFn) -> float:
    if not params.analytic_supported:
        raise ValueError("closed forms need lambda_sp == lambda_sr (i.i.d. receiver gains)")
    inp = outage_inputs(params, mode)
    if inp.st_blocked:
        return 1.0
    gamma = inp.gamma_th
    alpha = params.alpha.as_array()
    tails = params.alpha.tail_sums()
    # SIC stages x_0..x_node must each be decodable for some finite SNR
    for m in range(node + 1):
        bound = alpha[m] / tails[m] if tails[m] > 0 else math.inf
        if (m == 0 and not gamma[0] < bound) or (m > 0 and not gamma[m] <= bound) or math.isinf(inp.theta[m]):
            return 1.0
    theta = max(inp.theta[: node + 1])
    lam = params.lambda_sp if node == 0 else params.lambda_sr
    phi1 = _phi1(inp.mu / params.snr, params, coeffs)
    phi2 = _phi2(inp, params, node + 1, theta, lam, coeffs)
    return _clamped(phi1 + phi2, "PR outage" if node == 0 else f"SR{node} outage")


def outage_primary_analytic(params: SystemParams, mode: DuplexMode | str = DuplexMode.FD,
                            coeffs: CoefficientFn = c_coefficients) -> float:
    """Approximate outage probability of the primary receiver.

    Returns 1 when ``gamma_0 >= min(1/(rho*I_SI), alpha_0/sum(alpha[1:]))``.
    Values pushed outside [0, 1] by the approximation are clamped and an
    :class:`ApproximationClampWarning` is issued.
    """
    return _outage_node(params, mode, 0, coeffs)


def outage_secondary_analytic(params: SystemParams, m: int, mode: DuplexMode | str = DuplexMode.FD,
                              coeffs: CoefficientFn = c_coefficients) -> float:
    """Approximate outage probability of secondary receiver ``m`` (1-based)."""
    if not 1 <= m <= params.n_srs:
        raise ValueError(f"secondary receiver index must lie in [1, {params.n_srs}], got {m}")
    return _outage_node(params, mode, m, coeffs)


def outage_analytic(params: SystemParams, mode: DuplexMode | str = DuplexMode.FD,
                    coeffs: CoefficientFn = c_coefficients) -> np.ndarray:
    """Outage of PR, SR_1, ..., SR_M as one array."""
    return np.array([_outage_node(params, mode, i, coeffs) for i in range(params.n_receivers)])


def throughput_analytic(params: SystemParams, mode: DuplexMode | str = DuplexMode.FD,
                        coeffs: CoefficientFn = c_coefficients) -> tuple[float, float]:
    """Delay-limited throughput ``(nu_p, nu_s)`` from the closed-form outages."""
    return throughput_from_outage(outage_analytic(params, mode, coeffs), params.target_rates)


def throughput_from_outage(outage: Sequence[float], target_rates: Sequence[float]) -> tuple[float, float]:
    p = np.asarray(outage, dtype=float)
    r = np.asarray(target_rates, dtype=float)
    return float((1.0 - p[0]) * r[0]), float(math.fsum((1.0 - p[1:]) * r[1:]))
