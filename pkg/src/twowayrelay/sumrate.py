"""Maximum sum rates with and without a traffic-pattern constraint, and coding gains.

Traffic pattern ``mu`` is the slope of the ray ``r_ba = mu * r_ab``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import CapacitySet, RelayTopology, capacities_for_relay, draw_fading_batch, FadingDraw
from .regions import boundary_on_ray, region_for, sigma_set

__all__ = [
    "GainCurve",
    "FadingGainSamples",
    "DEFAULT_MU_GRID",
    "default_mu_grid",
    "max_sum_rate",
    "max_sum_rate_mu",
    "nc_gain",
    "gain_curve",
    "fading_gain_samples",
    "averaged_gain_curve",
]


def default_mu_grid(points: int = 61, mu_min: float = 0.05, mu_max: float = 20.0) -> np.ndarray:
    """Log-spaced traffic patterns; the default range is symmetric about ``mu = 1``."""
    return np.logspace(math.log10(mu_min), math.log10(mu_max), points)


DEFAULT_MU_GRID = default_mu_grid()


def max_sum_rate(caps: CapacitySet, protocol: str) -> float:
    """Largest ``r_ab + r_ba`` over the protocol's region (a corner point)."""
    s = sigma_set(caps)
    protocol = protocol.lower()
    if protocol == "tdmh":
        return max(s.sigma_ab, s.sigma_ba)
    if protocol == "mlnc":
        if caps.c_db < caps.c_da:
            return max(s.sigma_ab, s.sigma_bb, 2 * s.sigma_min)
        return max(s.sigma_ba, s.sigma_aa, 2 * s.sigma_min)
    if protocol == "plnc":
        return max(s.sigma_ab, s.sigma_ba, s.sigma_aba + s.sigma_bab)
    if protocol == "hull":
        return region_for(caps, "hull").max_sum()
    raise ValueError(f"unknown protocol {protocol!r}")


def max_sum_rate_mu(caps: CapacitySet, protocol: str, mu: float) -> float:
    """Sum rate ``(1 + mu) r_ab`` where the ray ``r_ba = mu r_ab`` leaves the region."""
    if not mu > 0:
        raise ValueError(f"mu must be positive, got {mu!r}")
    c_ad, c_db, c_bd, c_da = caps.as_tuple()
    protocol = protocol.lower()
    if protocol == "tdmh":
        s = sigma_set(caps)
        return (1 + mu) / (1 / s.sigma_ab + mu / s.sigma_ba)
    if protocol == "mlnc":
        sigma_set(caps)
        return (1 + mu) / (1 / c_ad + mu / c_bd + max(1.0, mu) / caps.c_min)
    if protocol == "plnc":
        sigma_set(caps)
        return (1 + mu) / (1 / c_ad + mu / c_bd + max(mu / c_da, 1 / c_db))
    if protocol == "hull":
        return (1 + mu) * boundary_on_ray(region_for(caps, "hull"), mu).r_ab
    raise ValueError(f"unknown protocol {protocol!r}")


def nc_gain(r_num: float, r_den: float) -> float:
    """Throughput gain ``10 log10(r_num / r_den)`` in dB."""
    if not (r_num > 0 and r_den > 0):
        raise ValueError(f"rates must be positive, got {r_num!r}, {r_den!r}")
    return 10.0 * math.log10(r_num / r_den)


@dataclass(frozen=True)
class GainCurve:
    mu_grid: np.ndarray
    rho_mt: np.ndarray
    rho_pt: np.ndarray
    rho_omt: np.ndarray

    def __post_init__(self):
        n = len(self.mu_grid)
        if not (len(self.rho_mt) == len(self.rho_pt) == len(self.rho_omt) == n):
            raise ValueError("all curves must share the mu grid")

    def argmax_mu(self, which: str = "rho_mt") -> float:
        return float(self.mu_grid[int(np.argmax(getattr(self, which)))])


def _check_grid(mu_grid) -> np.ndarray:
    mu = np.asarray(mu_grid, dtype=float)
    if mu.ndim != 1 or len(mu) == 0 or np.any(mu <= 0) or np.any(np.diff(mu) <= 0):
        raise ValueError("mu grid must be positive and strictly increasing")
    return mu


def gain_curve(caps: CapacitySet, mu_grid=DEFAULT_MU_GRID) -> GainCurve:
    """Closed-form gains of MLNC, PLNC and TDMH/MLNC time sharing over TDMH."""
    mu = _check_grid(mu_grid)
    tdmh = np.array([max_sum_rate_mu(caps, "tdmh", m) for m in mu])
    mlnc = np.array([max_sum_rate_mu(caps, "mlnc", m) for m in mu])
    plnc = np.array([max_sum_rate_mu(caps, "plnc", m) for m in mu])
    hull = region_for(caps, "hull")
    omt = np.array([(1 + m) * boundary_on_ray(hull, m).r_ab for m in mu])
    db = lambda num: 10.0 * np.log10(num / tdmh)  # noqa: E731
    return GainCurve(mu, db(mlnc), db(plnc), db(omt))


@dataclass(frozen=True)
class FadingGainSamples:
    """Per-draw gain curves, shape ``(n_draws, n_mu)``, with the draw capacities."""

    mu_grid: np.ndarray
    rho_mt: np.ndarray
    rho_pt: np.ndarray
    rho_omt: np.ndarray
    caps: tuple[CapacitySet, ...]

    def mean_curve(self) -> GainCurve:
        return GainCurve(
            self.mu_grid, self.rho_mt.mean(axis=0), self.rho_pt.mean(axis=0), self.rho_omt.mean(axis=0)
        )


def fading_gain_samples(
    topology: RelayTopology,
    n_draws: int,
    seed: int,
    mu_grid=DEFAULT_MU_GRID,
    relay_index: int = 0,
) -> FadingGainSamples:
    """Gain curves for independent fading draws of one relay of ``topology``.

    Draws where a capacity underflows to zero are redrawn (they have
    probability zero under Rayleigh fading).
    """
    mu = _check_grid(mu_grid)
    rng = np.random.default_rng(seed)
    snr = topology.snr_linear
    rows_mt, rows_pt, rows_omt, caps_list = [], [], [], []
    while len(caps_list) < n_draws:
        batch = draw_fading_batch(topology, n_draws - len(caps_list), rng)
        for i in range(batch.h_da.shape[0]):
            caps = capacities_for_relay(FadingDraw(batch.h_da[i], batch.h_db[i]), relay_index, snr)
            if min(caps.as_tuple()) <= 0.0:
                continue
            curve = gain_curve(caps, mu)
            rows_mt.append(curve.rho_mt)
            rows_pt.append(curve.rho_pt)
            rows_omt.append(curve.rho_omt)
            caps_list.append(caps)
    return FadingGainSamples(mu, np.array(rows_mt), np.array(rows_pt), np.array(rows_omt), tuple(caps_list))


def averaged_gain_curve(
    topology: RelayTopology, n_draws: int, seed: int, mu_grid=DEFAULT_MU_GRID
) -> GainCurve:
    """Per-draw dB gains averaged over Rayleigh fading."""
    return fading_gain_samples(topology, n_draws, seed, mu_grid).mean_curve()
