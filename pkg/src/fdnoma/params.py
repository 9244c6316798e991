"""System parameters, channel draws and the duplex-mode taxonomy.

Everything here is immutable. The other modules take a :class:`SystemParams`
and a :class:`DuplexMode` and never mutate either.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

__all__ = [
    "DuplexMode",
    "PowerAllocation",
    "ChannelRealization",
    "SystemParams",
    "ConfigError",
    "effective_rho",
    "rate_prelog",
    "sinr_thresholds",
    "i_si_from_zeta_db",
    "sample_realization",
    "sample_gains",
    "batch_rng",
    "load_params",
    "load_defaults",
    "params_from_dict",
    "params_to_dict",
]

# slack for the ordering/simplex checks on optimizer output
_ALPHA_TOL = 1e-9


class ConfigError(ValueError):
    """Raised for invalid parameter values or malformed configuration files."""


class DuplexMode(str, enum.Enum):
    FD = "fd"
    HD = "hd"
    OMA_TDMA = "oma"

    @classmethod
    def parse(cls, value: "str | DuplexMode") -> "DuplexMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"fd": cls.FD, "hd": cls.HD, "oma": cls.OMA_TDMA, "oma_tdma": cls.OMA_TDMA}
        try:
            return aliases[key]
        except KeyError:
            raise ConfigError(f"unknown duplex mode {value!r}; expected fd, hd or oma") from None


@dataclass(frozen=True)
class PowerAllocation:
    """NOMA power coefficients ``alpha_0 >= alpha_1 >= ... >= alpha_M``, summing to at most one."""

    coefficients: tuple[float, ...]

    def __post_init__(self):
        coeffs = tuple(float(c) for c in self.coefficients)
        object.__setattr__(self, "coefficients", coeffs)
        if len(coeffs) < 2:
            raise ConfigError("power allocation needs at least two coefficients (PR and one SR)")
        if any(not math.isfinite(c) or c < -_ALPHA_TOL or c > 1 + _ALPHA_TOL for c in coeffs):
            raise ConfigError(f"power coefficients must lie in [0, 1], got {coeffs}")
        if any(a < b - _ALPHA_TOL for a, b in zip(coeffs, coeffs[1:])):
            raise ConfigError(f"power coefficients must be nonincreasing, got {coeffs}")
        if math.fsum(coeffs) > 1 + _ALPHA_TOL:
            raise ConfigError(f"power coefficients must sum to at most 1, got {math.fsum(coeffs)}")

    def __len__(self):
        return len(self.coefficients)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.coefficients, dtype=float)

    def tail_sums(self) -> np.ndarray:
        """``tail[m] = sum(alpha[m+1:])``, the interference weight left when decoding ``x_m``."""
        a = self.as_array()
        return np.concatenate([np.cumsum(a[::-1])[::-1][1:], [0.0]])


@dataclass(frozen=True)
class ChannelRealization:
    """One fading draw.

    ``best_gain`` is the PT to selected-ST beamforming gain. ``sorted_gains``
    holds the ST to receiver gains in ascending order; index 0 is the PR.
    """

    best_gain: float
    sorted_gains: tuple[float, ...]

    def __post_init__(self):
        gains = tuple(float(x) for x in self.sorted_gains)
        object.__setattr__(self, "sorted_gains", gains)
        object.__setattr__(self, "best_gain", float(self.best_gain))
        if self.best_gain < 0 or any(x < 0 for x in gains):
            raise ValueError("channel gains must be nonnegative")
        if any(a > b for a, b in zip(gains, gains[1:])):
            raise ValueError("sorted_gains must be nondecreasing")

    @property
    def n_receivers(self) -> int:
        return len(self.sorted_gains)


@dataclass(frozen=True)
class SystemParams:
    """All scalar symbols of the overlay network.

    ``lambda_ps`` is the mean of each PT-ST antenna element gain, so the
    beamforming gain of one ST has mean ``n_antennas * lambda_ps``.
    ``i_si`` is the residual self-interference gain.
    """

    n_antennas: int = 5
    n_sts: int = 3
    n_srs: int = 2
    lambda_ps: float = 5.0
    lambda_sp: float = 50.0
    lambda_sr: float = 50.0
    beta: float = 0.8
    eta: float = 0.75
    xi: float = 1.0
    psi: float = 0.75
    i_si: float = math.sqrt(10 ** -0.1)
    snr_db: float = -9.0
    target_rates: tuple[float, ...] = (0.5, 0.5, 0.5)
    alpha: PowerAllocation = field(default_factory=lambda: PowerAllocation((0.6, 0.3, 0.1)))
    kappa: float = 0.5
    # HD keeps the self-energy-recycling term in rho when True
    hd_self_eh: bool = False
    # per-slot multiple of the harvested transmit power under OMA-TDMA
    oma_power_scale: float = 1.0

    def __post_init__(self):
        if not isinstance(self.alpha, PowerAllocation):
            object.__setattr__(self, "alpha", PowerAllocation(tuple(self.alpha)))
        object.__setattr__(self, "target_rates", tuple(float(r) for r in self.target_rates))
        for name in ("n_antennas", "n_sts", "n_srs"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        for name in ("lambda_ps", "lambda_sp", "lambda_sr"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not 0 < self.beta < 1:
            raise ConfigError(f"beta must lie strictly inside (0, 1), got {self.beta}")
        if not 0 < self.eta <= 1:
            raise ConfigError(f"eta must lie in (0, 1], got {self.eta}")
        if not 0 <= self.xi <= 1:
            raise ConfigError(f"xi must lie in [0, 1], got {self.xi}")
        if not 0 < self.psi < 1:
            raise ConfigError(f"psi must lie in (0, 1), got {self.psi}")
        if not 0 < self.kappa < 1:
            raise ConfigError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not self.i_si >= 0:
            raise ConfigError("i_si must be nonnegative")
        if not math.isfinite(self.snr_db):
            raise ConfigError("snr_db must be finite")
        if not self.oma_power_scale > 0:
            raise ConfigError("oma_power_scale must be positive")
        if len(self.target_rates) != self.n_srs + 1:
            raise ConfigError(
                f"target_rates needs n_srs + 1 = {self.n_srs + 1} entries, got {len(self.target_rates)}")
        if any(not r > 0 for r in self.target_rates):
            raise ConfigError("all target rates must be positive")
        if len(self.alpha) != self.n_srs + 1:
            raise ConfigError(f"alpha needs n_srs + 1 = {self.n_srs + 1} entries, got {len(self.alpha)}")
        if self.harvest_product * self.i_si >= 1:
            raise ConfigError("eta*beta*xi*psi*i_si must be below 1 for a finite transmit power")

    @property
    def harvest_product(self) -> float:
        return self.eta * self.beta * self.xi * self.psi

    @property
    def snr(self) -> float:
        return 10.0 ** (self.snr_db / 10.0)

    @property
    def n_receivers(self) -> int:
        return self.n_srs + 1

    @property
    def analytic_supported(self) -> bool:
        """Closed forms assume i.i.d. receiver gains."""
        return self.lambda_sp == self.lambda_sr

    def replace(self, **changes: Any) -> "SystemParams":
        """Return a copy with ``changes`` applied.

        Changing ``n_srs`` without new ``target_rates``/``alpha`` resizes them:
        targets repeat the last SR target, alpha falls back to a linearly
        decreasing allocation summing to one.
        """
        if "n_srs" in changes:
            m = int(changes["n_srs"])
            if "target_rates" not in changes and len(self.target_rates) != m + 1:
                rates = list(self.target_rates[: m + 1])
                rates += [self.target_rates[-1]] * (m + 1 - len(rates))
                changes["target_rates"] = tuple(rates)
            if "alpha" not in changes and len(self.alpha) != m + 1:
                weights = np.arange(m + 1, 0, -1, dtype=float)
                changes["alpha"] = PowerAllocation(tuple(weights / weights.sum()))
        if "alpha" in changes and not isinstance(changes["alpha"], PowerAllocation):
            changes["alpha"] = PowerAllocation(tuple(changes["alpha"]))
        return dataclasses.replace(self, **changes)


def i_si_from_zeta_db(zeta_db: float) -> float:
    """Residual SI gain from the SI channel level in dB: ``sqrt(10**(zeta_db/10))``."""
    return math.sqrt(10.0 ** (zeta_db / 10.0))


def effective_rho(params: SystemParams, mode: DuplexMode | str = DuplexMode.FD) -> float:
    """Transmit power of the selected ST per unit of ``P_s * best_gain``.

    FD recycles the self-interference energy, giving
    ``p / (1 - p * i_si)`` with ``p = eta*beta*xi*psi``. HD and OMA-TDMA do
    not transmit while receiving and return ``p`` (unless ``hd_self_eh``).
    """
    mode = DuplexMode.parse(mode)
    p = params.harvest_product
    if mode is DuplexMode.FD or (mode is DuplexMode.HD and params.hd_self_eh):
        return p / (1.0 - p * params.i_si)
    return p


def rate_prelog(params: SystemParams, mode: DuplexMode | str) -> tuple[float, float]:
    """``(st_prelog, node_prelog)`` multiplying ``log2(1 + SINR)`` on each hop."""
    mode = DuplexMode.parse(mode)
    if mode is DuplexMode.FD:
        return 1.0, 1.0
    if mode is DuplexMode.HD:
        return 0.5, 0.5
    return params.kappa, (1.0 - params.kappa) / params.n_receivers


def sinr_thresholds(params: SystemParams, mode: DuplexMode | str) -> tuple[float, np.ndarray]:
    """SINR thresholds equivalent to the rate targets after the prelog.

    Returns ``(st_threshold, node_thresholds)``; the ST must decode ``x_0`` at
    rate ``target_rates[0]`` and receiver ``i`` needs ``target_rates[i]``.
    """
    st_pre, node_pre = rate_prelog(params, mode)
    rates = np.asarray(params.target_rates, dtype=float)
    return float(2.0 ** (rates[0] / st_pre) - 1.0), 2.0 ** (rates / node_pre) - 1.0


# -- sampling ---------------------------------------------------------------

def batch_rng(seed: int, batch_index: int) -> np.random.Generator:
    """Independent stream for one batch, keyed only by ``(seed, batch_index)``."""
    return np.random.default_rng([int(seed), int(batch_index)])


def sample_gains(params: SystemParams, rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``size`` channel realizations as arrays.

    Returns
    -------
    best : ndarray, shape (size,)
        Max over ``n_sts`` Gamma(``n_antennas``, ``lambda_ps``) beamforming gains.
    gains : ndarray, shape (size, n_srs + 1)
        Ascending receiver gains. One draw has mean ``lambda_sp`` (the PR
        link), the rest ``lambda_sr``; the weakest is assigned to the PR.
    """
    best = rng.gamma(params.n_antennas, params.lambda_ps, size=(size, params.n_sts)).max(axis=1)
    gains = np.empty((size, params.n_receivers))
    gains[:, 0] = rng.exponential(params.lambda_sp, size=size)
    gains[:, 1:] = rng.exponential(params.lambda_sr, size=(size, params.n_srs))
    gains.sort(axis=1)
    return best, gains


def sample_realization(params: SystemParams, rng: np.random.Generator) -> ChannelRealization:
    best, gains = sample_gains(params, rng, 1)
    return ChannelRealization(best[0], tuple(gains[0]))


# -- configuration files ------------------------------------------------------

_FIELDS = {f.name for f in dataclasses.fields(SystemParams)}


def params_to_dict(params: SystemParams) -> dict[str, Any]:
    out = {}
    for f in dataclasses.fields(SystemParams):
        value = getattr(params, f.name)
        if isinstance(value, PowerAllocation):
            value = list(value.coefficients)
        elif isinstance(value, tuple):
            value = list(value)
        out[f.name] = value
    return out


def params_from_dict(data: dict[str, Any], base: SystemParams | None = None) -> SystemParams:
    """Build parameters from a mapping of field names, on top of ``base``.

    ``zeta_db`` is accepted as an alternative to ``i_si``.
    """
    data = dict(data)
    if "zeta_db" in data:
        if "i_si" in data:
            raise ConfigError("give either i_si or zeta_db, not both")
        data["i_si"] = i_si_from_zeta_db(float(data.pop("zeta_db")))
    unknown = set(data) - _FIELDS
    if unknown:
        raise ConfigError(f"unknown parameter(s): {', '.join(sorted(unknown))}")
    base = base if base is not None else SystemParams()
    try:
        return base.replace(**data)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_defaults() -> SystemParams:
    text = resources.files("fdnoma").joinpath("defaults.json").read_text()
    return params_from_dict(json.loads(text))


def load_params(path: str | Path) -> SystemParams:
    with open(path) as fh:
        return params_from_dict(json.load(fh))
