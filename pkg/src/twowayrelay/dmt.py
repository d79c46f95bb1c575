"""Outage probability and diversity-multiplexing tradeoff over several relays.

All mutual informations are in bits and already include the time-sharing
prefactor of the protocol (1/2 for four-slot relaying, 2/3 for the two coded
protocols).  A two-way outage is declared when either direction misses its
target rate.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .channel import FadingDraw

__all__ = [
    "PROTOCOLS",
    "COOPERATIONS",
    "DmtScenario",
    "DmtConfig",
    "OutageEstimate",
    "OutageCurve",
    "SlopeEstimate",
    "InsufficientTrialsError",
    "mutual_info",
    "select_relay",
    "target_rates",
    "outage_prob",
    "outage_curve",
    "dmt_theoretical",
    "validity_limit",
    "estimate_slope",
    "Lemma2Result",
    "lemma2_tail",
    "lemma2_tails",
    "Lemma3Config",
    "Lemma3Result",
    "lemma3_tail_check",
]

PROTOCOLS = ("tdmh", "mlnc", "plnc")
COOPERATIONS = ("collab_all", "collab_select_broadcast", "select_single_relay")
CRITERIA = (
    "tdmh_sigma_ab",
    "mlnc_broadcast",
    "plnc_broadcast",
    "mlnc_end_to_end",
    "plnc_end_to_end",
)

_LOG2 = math.log(2.0)
_CHUNK = 1 << 17
_DEFENSIVE = 0.25  # share of nominal draws in the importance-sampling mixture


class InsufficientTrialsError(ValueError):
    """A slope window contains a point without any observed outage."""


@dataclass(frozen=True)
class DmtScenario:
    protocol: str
    cooperation: str

    def __post_init__(self):
        proto, coop = self.protocol.lower(), self.cooperation.lower()
        if proto not in PROTOCOLS:
            raise ValueError(f"unknown protocol {self.protocol!r}")
        if coop not in COOPERATIONS:
            raise ValueError(f"unknown cooperation mode {self.cooperation!r}")
        if proto == "tdmh" and coop == "collab_select_broadcast":
            raise ValueError("selected-relay broadcast applies to the coded protocols only")
        object.__setattr__(self, "protocol", proto)
        object.__setattr__(self, "cooperation", coop)

    @property
    def prefactor(self) -> float:
        return 0.5 if self.protocol == "tdmh" else 2.0 / 3.0

    @property
    def label(self) -> str:
        return f"{self.protocol}-{self.cooperation}"


@dataclass(frozen=True)
class DmtConfig:
    """Multiplexing gain ``m``, traffic ratio ``mu = r_ba / r_ab`` and time split."""

    m: float = 0.25
    mu: float = 1.0
    lambda_f: float = 0.5
    lambda_b: float = 0.5
    n_relays: int = 1

    def __post_init__(self):
        if not self.m >= 0:
            raise ValueError("m must be nonnegative")
        if not self.mu >= 0 or math.isinf(self.mu):
            raise ValueError("mu must be finite and nonnegative")
        if not (0 <= self.lambda_f <= 1 and 0 <= self.lambda_b <= 1):
            raise ValueError("time fractions must lie in [0, 1]")
        if abs(self.lambda_f + self.lambda_b - 1.0) > 1e-12:
            raise ValueError("lambda_f + lambda_b must equal 1")
        if int(self.n_relays) != self.n_relays or self.n_relays < 1:
            raise ValueError("n_relays must be a positive integer")

    @property
    def min_term(self) -> float:
        """``min{(1 + mu) lambda_f, (1 + 1/mu) lambda_b}``."""
        fwd = (1.0 + self.mu) * self.lambda_f
        bwd = math.inf if self.mu == 0 else (1.0 + 1.0 / self.mu) * self.lambda_b
        return min(fwd, bwd)


# ----------------------------------------------------------------------------
# mutual information and relay selection

def _log2_1p(x):
    return np.log1p(x) / _LOG2


def _as_batch(fading: FadingDraw) -> tuple[np.ndarray, np.ndarray, bool]:
    single = fading.h_da.ndim == 1
    h_da = fading.h_da[None, :] if single else fading.h_da
    h_db = fading.h_db[None, :] if single else fading.h_db
    return h_da, h_db, single


def _pick(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return np.take_along_axis(values, idx[:, None], axis=1)[:, 0]


def _select(g_da: np.ndarray, g_db: np.ndarray, snr: float, criterion: str) -> np.ndarray:
    c_a = _log2_1p(snr * g_da)
    c_b = _log2_1p(snr * g_db)
    with np.errstate(divide="ignore"):
        inv_a, inv_b = 1.0 / c_a, 1.0 / c_b
        if criterion == "tdmh_sigma_ab":
            score = 1.0 / (inv_a + inv_b)
        elif criterion == "mlnc_broadcast":
            score = np.minimum(c_a, c_b)
        elif criterion == "plnc_broadcast":
            score = c_a + c_b
        elif criterion == "mlnc_end_to_end":
            # XOR corner rate with reciprocal capacities
            score = 1.0 / (inv_a + inv_b + 1.0 / np.minimum(c_a, c_b))
        elif criterion == "plnc_end_to_end":
            s_ab = 1.0 / (inv_a + inv_b)
            aba = 1.0 / (1.0 / s_ab + c_a / (c_b * c_b))
            bab = 1.0 / (1.0 / s_ab + c_b / (c_a * c_a))
            score = aba + bab
        else:
            raise ValueError(f"unknown relay-selection criterion {criterion!r}")
    return np.argmax(np.nan_to_num(score, nan=0.0), axis=1)


def select_relay(fading: FadingDraw, snr: float, criterion: str):
    """Index of the best relay per draw; ties go to the lowest index."""
    h_da, h_db, single = _as_batch(fading)
    idx = _select(np.abs(h_da) ** 2, np.abs(h_db) ** 2, snr, criterion)
    return int(idx[0]) if single else idx


def _criterion_for(scenario: DmtScenario) -> str:
    if scenario.protocol == "tdmh":
        return "tdmh_sigma_ab"
    kind = "broadcast" if scenario.cooperation == "collab_select_broadcast" else "end_to_end"
    return f"{scenario.protocol}_{kind}"


def _mutual_info(scenario: DmtScenario, h_da: np.ndarray, h_db: np.ndarray, snr: float):
    g_da, g_db = np.abs(h_da) ** 2, np.abs(h_db) ** 2
    c = scenario.prefactor
    if scenario.cooperation == "select_single_relay":
        idx = _select(g_da, g_db, snr, _criterion_for(scenario))
        i = c * np.minimum(_log2_1p(snr * _pick(g_da, idx)), _log2_1p(snr * _pick(g_db, idx)))
        return i, i

    i1 = _log2_1p(snr * g_da.sum(axis=1))
    i2 = _log2_1p(snr * g_db.sum(axis=1))
    if scenario.protocol == "tdmh":
        i = c * np.minimum(i1, i2)
        return i, i
    if scenario.cooperation == "collab_all":
        t1 = _log2_1p(snr * np.abs(h_da.sum(axis=1)) ** 2)
        t2 = _log2_1p(snr * np.abs(h_db.sum(axis=1)) ** 2)
    else:
        idx = _select(g_da, g_db, snr, _criterion_for(scenario))
        t1 = _log2_1p(snr * _pick(g_da, idx))
        t2 = _log2_1p(snr * _pick(g_db, idx))
    if scenario.protocol == "mlnc":
        both = np.minimum(t1, t2)
        return c * np.minimum(i1, both), c * np.minimum(i2, both)
    return c * np.minimum(i1, t2), c * np.minimum(t1, i2)


def mutual_info(scenario: DmtScenario, fading: FadingDraw, snr: float):
    """Forward and backward mutual information for one draw or a batch of draws."""
    if not snr >= 0:
        raise ValueError("snr must be nonnegative")
    h_da, h_db, single = _as_batch(fading)
    i_f, i_b = _mutual_info(scenario, h_da, h_db, snr)
    if single:
        return float(i_f[0]), float(i_b[0])
    return i_f, i_b


def target_rates(config: DmtConfig, snr: float) -> tuple[float, float]:
    """Rates ``m/(1+mu) log2 snr`` and ``m mu/(1+mu) log2 snr``."""
    if not snr > 1:
        raise ValueError("snr must exceed 1 so that log snr is positive")
    total = config.m * math.log2(snr)
    return total / (1.0 + config.mu), total * config.mu / (1.0 + config.mu)


# ----------------------------------------------------------------------------
# outage estimation

class OutageEstimate(NamedTuple):
    estimate: float
    ci_lo: float
    ci_hi: float
    n_trials: int
    events: int
    std_error: float
    method: str


def _unit_variances(n_relays: int, variances):
    if variances is None:
        ones = np.ones(n_relays)
        return ones, ones
    v_da, v_db = (np.broadcast_to(np.asarray(v, dtype=float), (n_relays,)).copy() for v in variances)
    if np.any(v_da <= 0) or np.any(v_db <= 0):
        raise ValueError("link variances must be positive")
    return v_da, v_db


def _cn(rng: np.random.Generator, var: np.ndarray) -> np.ndarray:
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(var.shape) + 1j * rng.standard_normal(var.shape))


def _chunk_stats(scenario, config, snr, rates, v_da, v_db, shrink, n, rng):
    """Weighted outage sums for one chunk: (sum w, sum w^2, raw event count)."""
    k = config.n_relays
    shape = (n, k)
    if shrink is None:
        h_da = _cn(rng, np.broadcast_to(v_da, shape))
        h_db = _cn(rng, np.broadcast_to(v_db, shape))
        weight = None
    else:
        s_da, s_db = shrink
        biased = rng.random(n) >= _DEFENSIVE
        pick_da = rng.random(shape) < 0.5
        f_da = np.where(biased[:, None] & pick_da, s_da, 1.0)
        f_db = np.where(biased[:, None] & ~pick_da, s_db, 1.0)
        h_da = _cn(rng, v_da * f_da)
        h_db = _cn(rng, v_db * f_db)
        # proposal / nominal density ratio, per relay a 50/50 mixture of the two shrinks
        x_da = np.abs(h_da) ** 2 / v_da
        x_db = np.abs(h_db) ** 2 / v_db
        l_da = -np.log(s_da) - x_da * (1.0 / s_da - 1.0)
        l_db = -np.log(s_db) - x_db * (1.0 / s_db - 1.0)
        log_ratio = (np.logaddexp(l_da, l_db) - math.log(2.0)).sum(axis=1)
        weight = 1.0 / (_DEFENSIVE + (1.0 - _DEFENSIVE) * np.exp(np.minimum(log_ratio, 700.0)))
    i_f, i_b = _mutual_info(scenario, h_da, h_db, snr)
    r_ab, r_ba = rates
    out = (config.lambda_f * i_f < r_ab) | (config.lambda_b * i_b < r_ba)
    events = int(out.sum())
    if weight is None:
        return float(events), float(events), events
    w = weight[out]
    return float(w.sum()), float((w * w).sum()), events


def _shrink_factors(scenario, config, snr, rates, v_da, v_db):
    """Variance multipliers that put a faded link right at the outage threshold."""
    c = scenario.prefactor
    xs = []
    for r, lam in zip(rates, (config.lambda_f, config.lambda_b)):
        if r <= 0:
            continue
        if lam <= 0:
            return None
        xs.append(math.expm1(r / (lam * c) * _LOG2) / snr)
    if not xs:
        return None
    x = max(xs)
    return np.minimum(1.0, x / v_da), np.minimum(1.0, x / v_db)


def _resolve_method(method: str, scenario: DmtScenario) -> str:
    if method == "auto":
        # the coherent broadcast sum does not fade through any single link
        if scenario.cooperation == "collab_all" and scenario.protocol != "tdmh":
            return "mc"
        return "is"
    if method not in ("mc", "is"):
        raise ValueError(f"unknown method {method!r}; expected mc, is or auto")
    return method


def outage_prob(
    scenario: DmtScenario,
    config: DmtConfig,
    snr: float,
    n_trials: int,
    seed: int,
    *,
    method: str = "auto",
    variances=None,
    point: int = 0,
    threads: int = 1,
    confidence: float = 0.95,
) -> OutageEstimate:
    """Two-way outage probability at linear SNR ``snr``.

    ``method="mc"`` counts outages over plain Rayleigh draws and reports a
    Wilson interval.  ``method="is"`` draws from a defensive mixture that,
    for each relay, pushes one randomly chosen link down to the outage
    threshold; the estimate stays unbiased and the interval is a normal
    approximation.  ``"auto"`` picks importance sampling unless outages come
    from the coherent broadcast sum.  Trials are split into fixed chunks with
    their own seeds ``(seed, point, chunk)``, so results do not depend on
    ``threads``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if config.n_relays < 1:
        raise ValueError("empty relay set")
    method = _resolve_method(method, scenario)
    v_da, v_db = _unit_variances(config.n_relays, variances)
    rates = target_rates(config, snr) if config.m > 0 else (0.0, 0.0)
    shrink = _shrink_factors(scenario, config, snr, rates, v_da, v_db) if method == "is" else None
    if method == "is" and shrink is None:
        method = "mc"

    sizes = [min(_CHUNK, n_trials - start) for start in range(0, n_trials, _CHUNK)]

    def work(i: int):
        rng = np.random.default_rng([seed, point, i])
        return _chunk_stats(scenario, config, snr, rates, v_da, v_db, shrink, sizes[i], rng)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(i) for i in range(len(sizes))]
    s1 = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    events = sum(p[2] for p in parts)

    if method == "mc":
        ci = stats.binomtest(events, n_trials).proportion_ci(confidence, method="wilson")
        est = events / n_trials
        se = math.sqrt(est * (1 - est) / n_trials)
        return OutageEstimate(est, float(ci.low), float(ci.high), n_trials, events, se, "mc")
    est = s1 / n_trials
    var = max(s2 / n_trials - est * est, 0.0)
    se = math.sqrt(var / n_trials)
    z = stats.norm.ppf(0.5 + confidence / 2)
    return OutageEstimate(est, max(0.0, est - z * se), min(1.0, est + z * se), n_trials, events, se, "is")


@dataclass(frozen=True)
class OutageCurve:
    snr_db_grid: np.ndarray
    outage_estimates: np.ndarray
    trial_counts: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    events: np.ndarray
    scenario: DmtScenario
    config: DmtConfig
    method: str = "mc"

    def __post_init__(self):
        grid = np.asarray(self.snr_db_grid, dtype=float)
        if grid.ndim != 1 or np.any(np.diff(grid) <= 0):
            raise ValueError("snr grid must be strictly increasing")
        est = np.asarray(self.outage_estimates, dtype=float)
        if est.shape != grid.shape:
            raise ValueError("one estimate per grid point is required")
        if np.any(est < 0) or np.any(est > 1):
            raise ValueError("outage estimates must lie in [0, 1]")
        if np.any(np.asarray(self.trial_counts) <= 0):
            raise ValueError("trial counts must be positive")
        object.__setattr__(self, "snr_db_grid", grid)
        object.__setattr__(self, "outage_estimates", est)

    @classmethod
    def synthetic(cls, snr_db_grid, estimates, *, events=None, n_trials: int = 1):
        """Curve from given values, for slope fitting on analytic data."""
        grid = np.asarray(snr_db_grid, dtype=float)
        est = np.asarray(estimates, dtype=float)
        ev = np.full(grid.shape, 10**9) if events is None else np.asarray(events)
        n = np.full(grid.shape, n_trials)
        return cls(grid, est, n, est, est, ev, DmtScenario("tdmh", "collab_all"), DmtConfig(), "synthetic")


def outage_curve(
    scenario: DmtScenario,
    config: DmtConfig,
    snr_db_grid: Sequence[float],
    n_trials: int,
    seed: int,
    *,
    method: str = "auto",
    variances=None,
    threads: int = 1,
) -> OutageCurve:
    grid = np.asarray(snr_db_grid, dtype=float)
    results = [
        outage_prob(
            scenario, config, 10.0 ** (db / 10.0), n_trials, seed,
            method=method, variances=variances, point=i, threads=threads,
        )
        for i, db in enumerate(grid)
    ]
    col = lambda name, dtype=float: np.array([getattr(r, name) for r in results], dtype=dtype)  # noqa: E731
    return OutageCurve(
        grid, col("estimate"), col("n_trials", int), col("ci_lo"), col("ci_hi"), col("events", int),
        scenario, config, results[0].method,
    )


# ----------------------------------------------------------------------------
# theory and slope fitting

def validity_limit(scenario: DmtScenario, config: DmtConfig) -> float:
    """Largest multiplexing gain (exclusive) for which the tradeoff formula holds."""
    frac = 0.5 if scenario.protocol == "tdmh" else 2.0 / 3.0
    return frac * config.min_term


def dmt_theoretical(scenario: DmtScenario, config: DmtConfig) -> float:
    """Diversity order predicted for the scenario at multiplexing gain ``config.m``."""
    limit = validity_limit(scenario, config)
    if not 0 < config.m < limit:
        raise ValueError(f"m={config.m} outside the valid interval (0, {limit:.6g})")
    k = config.n_relays
    big_m = config.min_term
    if scenario.protocol == "tdmh":
        return k * (1.0 - 2.0 * config.m / big_m)
    per_relay = 1.0 - 3.0 * config.m / (2.0 * big_m)
    return per_relay if scenario.cooperation == "collab_all" else k * per_relay


class SlopeEstimate(NamedTuple):
    d_hat: float
    stderr: float
    window: tuple[float, float]
    points: int


def estimate_slope(
    curve: OutageCurve,
    window: tuple[float, float] | None = None,
    *,
    max_outage: float = 0.1,
    min_events: int = 100,
) -> SlopeEstimate:
    """Least-squares slope of ``-log10 eps`` against ``log10 snr``.

    Without ``window`` the fit uses the highest-SNR third of the grid (at
    least three points) among points with ``eps < max_outage`` and at least
    ``min_events`` observed outages.
    """
    grid, eps = curve.snr_db_grid, curve.outage_estimates
    events = np.asarray(curve.events)
    if window is not None:
        lo, hi = window
        mask = (grid >= lo) & (grid <= hi)
        if np.any(eps[mask] <= 0):
            raise InsufficientTrialsError("a point in the slope window has no observed outage")
    else:
        usable = (eps > 0) & (eps < max_outage) & (events >= min_events)
        idx = np.flatnonzero(usable)
        take = max(3, math.ceil(len(grid) / 3))
        mask = np.zeros_like(usable)
        mask[idx[-take:]] = True
    if mask.sum() < 3:
        raise InsufficientTrialsError(f"slope fit needs 3 usable points, got {int(mask.sum())}")
    x = grid[mask] / 10.0
    y = -np.log10(eps[mask])
    fit = stats.linregress(x, y)
    return SlopeEstimate(float(fit.slope), float(fit.stderr), (float(x[0] * 10), float(x[-1] * 10)), int(mask.sum()))


# ----------------------------------------------------------------------------
# tail bounds for sums and selections of exponentials

class Lemma2Result(NamedTuple):
    theta: float
    empirical: float
    bound: float
    n_trials: int

    @property
    def stderr_at_bound(self) -> float:
        return math.sqrt(max(self.bound * (1.0 - self.bound), 0.0) / self.n_trials)

    def holds(self, n_sigma: float = 3.0) -> bool:
        return self.empirical <= self.bound + n_sigma * self.stderr_at_bound


def lemma2_tails(sigmas: Sequence[float], thetas: Sequence[float], n_trials: int, seed: int) -> list[Lemma2Result]:
    """Empirical ``P[sum X_k < theta]`` for exponentials with rates ``sigmas``, with
    the bound ``theta^K prod(sigma_k) / K!``, for several thresholds from one sample."""
    sig = np.asarray(sigmas, dtype=float)
    th = np.asarray(thetas, dtype=float)
    if sig.ndim != 1 or len(sig) == 0 or np.any(sig <= 0):
        raise ValueError("sigmas must be a nonempty list of positive rates")
    if np.any(th <= 0):
        raise ValueError("theta must be positive")
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    k = len(sig)
    hits = np.zeros(len(th), dtype=np.int64)
    for i, start in enumerate(range(0, n_trials, 1 << 20)):
        n = min(1 << 20, n_trials - start)
        rng = np.random.default_rng([seed, i])
        total = (rng.standard_exponential((n, k)) / sig).sum(axis=1)
        hits += (total[:, None] < th[None, :]).sum(axis=0)
    bound = th**k * np.prod(sig) / math.factorial(k)
    return [Lemma2Result(float(t), float(h / n_trials), float(b), n_trials) for t, h, b in zip(th, hits, bound)]


def lemma2_tail(sigmas: Sequence[float], theta: float, n_trials: int, seed: int) -> Lemma2Result:
    return lemma2_tails(sigmas, [theta], n_trials, seed)[0]


@dataclass(frozen=True)
class Lemma3Config:
    """Relay selection among ``n_relays`` pairs of unit exponentials.

    Each relay scores ``f(V1, V2)``; the best-scoring relay is kept and the
    event ``f < gamma ** -theta_exp`` is estimated at each ``gamma``.
    """

    n_relays: int = 1
    theta_exp: float = 0.5
    functional: str = "harmonic"
    gammas: tuple[float, ...] = (1e2, 1e4)

    def __post_init__(self):
        if self.n_relays < 1:
            raise ValueError("n_relays must be >= 1")
        if not self.theta_exp > 0:
            raise ValueError("theta_exp must be positive")
        if self.functional not in ("harmonic", "min"):
            raise ValueError("functional must be 'harmonic' or 'min'")
        if len(self.gammas) < 2 or any(g <= 1 for g in self.gammas):
            raise ValueError("need at least two gammas above 1")


class Lemma3Result(NamedTuple):
    gammas: tuple[float, ...]
    probabilities: tuple[float, ...]
    fitted_exponent: float
    predicted_exponent: float


def lemma3_tail_check(config: Lemma3Config, n_trials: int, seed: int) -> Lemma3Result:
    """Decay exponent of the selected-relay tail, against ``n_relays * theta_exp``."""
    rng = np.random.default_rng(seed)
    v = rng.standard_exponential((n_trials, config.n_relays, 2))
    if config.functional == "harmonic":
        f = v[..., 0] * v[..., 1] / (v[..., 0] + v[..., 1])
    else:
        f = v.min(axis=-1)
    best = f.max(axis=1)
    gammas = tuple(float(g) for g in config.gammas)
    probs = tuple(float(np.mean(best < g ** -config.theta_exp)) for g in gammas)
    x = np.log10(gammas)
    with np.errstate(divide="ignore"):
        y = np.log10(probs)
    if not np.all(np.isfinite(y)):
        raise InsufficientTrialsError("no tail events at one of the SNR values")
    slope = -np.polyfit(x, y, 1)[0]
    return Lemma3Result(gammas, probs, float(slope), config.n_relays * config.theta_exp)
