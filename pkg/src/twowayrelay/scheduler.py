"""Opportunistic packet scheduling over one relay under Poisson arrivals.

Two schedulers are simulated in continuous time:

* ``omlnc`` pairs one packet from each source into an XOR broadcast whenever
  both queues are backlogged and otherwise relays single packets hop by hop.
* ``oplnc`` sends batches of ``(Q_A, Q_B)`` packets with physical-layer coding,
  falls back to hop-by-hop relaying of up to ``Q*`` packets when only one queue
  is above its batch size, and flushes both residual queues with PLNC otherwise.

Every transmission is atomic: its departures are taken from the queue contents
at its start and arrivals during it are only served afterwards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit
from scipy import stats

from .channel import CapacitySet
from .regions import RatePair, RateRegion, SigmaSet, boundary_on_ray, sigma_set

__all__ = [
    "ACTIONS",
    "QueueState",
    "ArrivalSpec",
    "OplncParams",
    "SimTrace",
    "InfeasibleBatchError",
    "RateInfeasibleError",
    "step_omlnc",
    "step_oplnc",
    "lyapunov_v",
    "lyapunov_coefficients",
    "choose_oplnc_params",
    "simulate",
    "saturated_throughput",
    "drift_estimate",
    "time_average_backlog",
    "growth_test",
]

ACTIONS = ("idle", "MLNC-pair", "TDMH-fwd", "TDMH-bwd", "PLNC-batch", "PLNC-residual")
IDLE, MLNC_PAIR, TDMH_FWD, TDMH_BWD, PLNC_BATCH, PLNC_RESIDUAL = range(6)

_PROTOCOLS = {"omlnc": 0, "oplnc": 1}
_MIN_DRIFT_EVENTS = 1000


class InfeasibleBatchError(ValueError):
    """No batch pair with both sizes at least the minimum fits the time budgets."""


class RateInfeasibleError(ValueError):
    """The arrival pair is not strictly inside the region the batch scheduler stabilises."""


class QueueState(NamedTuple):
    q_a: int
    q_b: int
    t: float = 0.0


@dataclass(frozen=True)
class ArrivalSpec:
    """Poisson packet rates at A and B (packets per unit time) and packet length in bits."""

    rate_a: float
    rate_b: float
    packet_len: float = 1.0

    def __post_init__(self):
        if not (self.rate_a >= 0 and self.rate_b >= 0):
            raise ValueError("arrival rates must be nonnegative")
        if not (math.isfinite(self.rate_a) and math.isfinite(self.rate_b)):
            raise ValueError("arrival rates must be finite")
        if not self.packet_len > 0:
            raise ValueError("packet_len must be positive")

    @property
    def bit_rates(self) -> RatePair:
        return RatePair(self.rate_a * self.packet_len, self.rate_b * self.packet_len)

    @classmethod
    def from_bit_rates(cls, r_ab: float, r_ba: float, packet_len: float = 1.0) -> "ArrivalSpec":
        return cls(r_ab / packet_len, r_ba / packet_len, packet_len)


@dataclass(frozen=True)
class OplncParams:
    """Batch sizes and TDMH burst limit for the batch PLNC scheduler.

    ``batch_point`` is the throughput of one full batch, which lies on the
    PLNC region boundary; ``mismatch`` is the relative error of the batch
    ratio against the target ratio.
    """

    q_a_batch: int
    q_b_batch: int
    q_star: int
    lambda1: float
    lambda2: float
    batch_point: RatePair
    mismatch: float = 0.0

    def __post_init__(self):
        if min(self.q_a_batch, self.q_b_batch, self.q_star) < 1:
            raise ValueError("batch sizes and q_star must be positive integers")
        if self.q_star <= max(self.q_a_batch, self.q_b_batch):
            raise ValueError("q_star must exceed both batch sizes")


# ----------------------------------------------------------------------------
# single steps (reference implementation, one transmission per call)

def _durations(sigma: SigmaSet, ell: float) -> tuple[float, float, float]:
    return ell / sigma.sigma_min, ell / sigma.sigma_ab, ell / sigma.sigma_ba


def _plnc_duration(n_a: int, n_b: int, caps: CapacitySet, ell: float) -> float:
    return ell * (n_a / caps.c_ad + n_b / caps.c_bd + max(n_a / caps.c_db, n_b / caps.c_da))


def _idle(state: QueueState, arrivals: ArrivalSpec, rng: np.random.Generator) -> tuple[int, QueueState]:
    total = arrivals.rate_a + arrivals.rate_b
    if total == 0:
        return IDLE, state
    wait = rng.exponential(1.0 / total)
    at_a = rng.random() < arrivals.rate_a / total
    return IDLE, QueueState(state.q_a + at_a, state.q_b + (not at_a), state.t + wait)


def _transmit(state, dep_a, dep_b, duration, arrivals, rng) -> QueueState:
    new_a = rng.poisson(arrivals.rate_a * duration)
    new_b = rng.poisson(arrivals.rate_b * duration)
    return QueueState(
        int(state.q_a - dep_a + new_a), int(state.q_b - dep_b + new_b), state.t + duration
    )


def step_omlnc(
    state: QueueState, sigma: SigmaSet, arrivals: ArrivalSpec, rng: np.random.Generator
) -> tuple[str, QueueState]:
    """One decision of the opportunistic XOR scheduler."""
    d_pair, d_fwd, d_bwd = _durations(sigma, arrivals.packet_len)
    if state.q_a > 0 and state.q_b > 0:
        return ACTIONS[MLNC_PAIR], _transmit(state, 1, 1, d_pair, arrivals, rng)
    if state.q_a > 0:
        return ACTIONS[TDMH_FWD], _transmit(state, 1, 0, d_fwd, arrivals, rng)
    if state.q_b > 0:
        return ACTIONS[TDMH_BWD], _transmit(state, 0, 1, d_bwd, arrivals, rng)
    action, nxt = _idle(state, arrivals, rng)
    return ACTIONS[action], nxt


def step_oplnc(
    state: QueueState,
    params: OplncParams,
    caps: CapacitySet,
    sigma: SigmaSet,
    arrivals: ArrivalSpec,
    rng: np.random.Generator,
) -> tuple[str, QueueState]:
    """One decision of the batch PLNC scheduler."""
    ell = arrivals.packet_len
    qa, qb = state.q_a, state.q_b
    big_a, big_b = qa >= params.q_a_batch, qb >= params.q_b_batch
    if big_a and big_b:
        n_a, n_b = params.q_a_batch, params.q_b_batch
        return ACTIONS[PLNC_BATCH], _transmit(state, n_a, n_b, _plnc_duration(n_a, n_b, caps, ell), arrivals, rng)
    if big_b:
        n = min(qb, params.q_star)
        return ACTIONS[TDMH_BWD], _transmit(state, 0, n, n * ell / sigma.sigma_ba, arrivals, rng)
    if big_a:
        n = min(qa, params.q_star)
        return ACTIONS[TDMH_FWD], _transmit(state, n, 0, n * ell / sigma.sigma_ab, arrivals, rng)
    if qa or qb:
        return ACTIONS[PLNC_RESIDUAL], _transmit(state, qa, qb, _plnc_duration(qa, qb, caps, ell), arrivals, rng)
    action, nxt = _idle(state, arrivals, rng)
    return ACTIONS[action], nxt


# ----------------------------------------------------------------------------
# Lyapunov function

def lyapunov_coefficients(sigma: SigmaSet, corner: tuple[float, float] | None = None) -> tuple[float, float]:
    """Weights ``(a, b)`` of ``V = a q_a^2 + b q_b^2 + 2 q_a q_b``.

    Without ``corner`` the XOR pairing corner ``(sigma_min, sigma_min)`` is used.
    """
    x, y = (sigma.sigma_min, sigma.sigma_min) if corner is None else corner
    gap_a, gap_b = sigma.sigma_ab - x, sigma.sigma_ba - y
    if gap_a <= 0 or gap_b <= 0:
        raise ValueError("corner must lie strictly inside the one-way axis rates")
    return y / gap_a, x / gap_b


def lyapunov_v(state: QueueState, sigma: SigmaSet, corner: tuple[float, float] | None = None) -> float:
    a, b = lyapunov_coefficients(sigma, corner)
    return a * state.q_a**2 + b * state.q_b**2 + 2.0 * state.q_a * state.q_b


# ----------------------------------------------------------------------------
# batch parameter selection

def choose_oplnc_params(
    sigma: SigmaSet,
    arrivals: ArrivalSpec,
    lambda1: float | None = None,
    lambda2: float | None = None,
    *,
    min_batch: int = 1,
    max_batch: int = 64,
    check_rates: bool = True,
) -> OplncParams:
    """Pick ``(Q_A, Q_B)`` near the PLNC corner ratio and the smallest valid ``Q*``.

    ``lambda1`` and ``lambda2`` are the time budgets (same unit as the
    simulation clock) of the forward and backward batch halves: a batch may
    hold at most ``lambda * Sigma / packet_len`` packets on each side, and the
    batch ratio targets ``Q_B lambda1 Sigma_ABA = Q_A lambda2 Sigma_BAB``.  By
    default both budgets are equal and large enough for ``max_batch`` to be
    the binding cap, so the batch ratio aims at the corner itself.
    """
    ell = arrivals.packet_len
    if lambda1 is None and lambda2 is None:
        lambda1 = lambda2 = max_batch * ell / min(sigma.sigma_ab, sigma.sigma_ba)
    elif lambda1 is None or lambda2 is None:
        raise ValueError("give both lambda1 and lambda2 or neither")
    if not (lambda1 > 0 and lambda2 > 0):
        raise ValueError("time budgets must be positive")
    f_max = min(max_batch, math.floor(lambda1 * sigma.sigma_ab / ell + 1e-9))
    b_max = min(max_batch, math.floor(lambda2 * sigma.sigma_ba / ell + 1e-9))
    if f_max < min_batch or b_max < min_batch:
        raise InfeasibleBatchError(
            f"batch bounds ({f_max}, {b_max}) fall below the minimum batch {min_batch}"
        )

    target = lambda2 * sigma.sigma_bab / (lambda1 * sigma.sigma_aba)
    qf = np.arange(min_batch, f_max + 1)[:, None]
    qb = np.arange(min_batch, b_max + 1)[None, :]
    mismatch = np.abs(qb - qf * target) / (qf * target)
    # minimise mismatch, ties to the larger batch
    score = np.round(mismatch, 12) - 1e-15 * (qf + qb)
    i, j = np.unravel_index(np.argmin(score), score.shape)
    q_a, q_b = int(qf[i, 0]), int(qb[0, j])

    # batch throughput lies on the PLNC boundary along the ray q_b / q_a
    point = boundary_on_ray(_plnc_region(sigma), q_b / q_a)
    r_ab, r_ba = arrivals.bit_rates
    x, y = point
    edge_b = x / (sigma.sigma_ba - y) * (r_ba / sigma.sigma_ba - 1.0) + r_ab / sigma.sigma_ba
    edge_a = y / (sigma.sigma_ab - x) * (r_ab / sigma.sigma_ab - 1.0) + r_ba / sigma.sigma_ab
    if edge_a >= 0 or edge_b >= 0:
        if check_rates:
            raise RateInfeasibleError(
                f"arrival pair ({r_ab:.6g}, {r_ba:.6g}) is not inside the batch region"
            )
        q_star = 2 * max(q_a, q_b)
    else:
        need = max(q_a / -edge_b, q_b / -edge_a, max(q_a, q_b))
        q_star = math.floor(need) + 1
    return OplncParams(q_a, q_b, q_star, float(lambda1), float(lambda2), point, float(mismatch[i, j]))


def _plnc_region(sigma: SigmaSet) -> RateRegion:
    # the PLNC vertices depend on the sigma constants only
    pts = [(0.0, 0.0), (sigma.sigma_ab, 0.0), (sigma.sigma_aba, sigma.sigma_bab), (0.0, sigma.sigma_ba)]
    return RateRegion(tuple(RatePair(*p) for p in pts))


# ----------------------------------------------------------------------------
# event kernel

_DONE, _NEED_ARRIVALS, _HORIZON = 0, 1, 2


@njit(cache=True)
def _run(
    proto, qa, qb, t, n_max, horizon, ta, ia, tb, ib, wend,
    durs, caps4, ell, q_ab, q_bb, q_star,
    out_t, out_qa, out_qb, out_act, pos, dep,
):
    c_ad, c_db, c_bd, c_da = caps4[0], caps4[1], caps4[2], caps4[3]
    na_len, nb_len = ta.shape[0], tb.shape[0]
    while pos < n_max:
        act = 0
        da = 0
        db = 0
        d = 0.0
        if proto == 0:
            if qa > 0 and qb > 0:
                act, da, db, d = 1, 1, 1, durs[0]
            elif qa > 0:
                act, da, d = 2, 1, durs[1]
            elif qb > 0:
                act, db, d = 3, 1, durs[2]
        else:
            if qa >= q_ab and qb >= q_bb:
                act, da, db = 4, q_ab, q_bb
            elif qb >= q_bb:
                act, db = 3, min(qb, q_star)
                d = db * durs[2]
            elif qa >= q_ab:
                act, da = 2, min(qa, q_star)
                d = da * durs[1]
            elif qa > 0 or qb > 0:
                act, da, db = 5, qa, qb
            if act == 4 or act == 5:
                d = ell * (da / c_ad + db / c_bd + max(da / c_db, db / c_da))

        if act == 0:
            nxt_a = ta[ia] if ia < na_len else np.inf
            nxt_b = tb[ib] if ib < nb_len else np.inf
            t_next = min(nxt_a, nxt_b)
            if t_next > horizon:
                return qa, qb, t, ia, ib, pos, _HORIZON
            if t_next >= wend:
                return qa, qb, t, ia, ib, pos, _NEED_ARRIVALS
            t = t_next
            if nxt_a <= nxt_b:
                qa += 1
                ia += 1
            else:
                qb += 1
                ib += 1
        else:
            t_end = t + d
            if t_end > horizon:
                return qa, qb, t, ia, ib, pos, _HORIZON
            if t_end >= wend:
                return qa, qb, t, ia, ib, pos, _NEED_ARRIVALS
            qa -= da
            qb -= db
            dep[0] += da
            dep[1] += db
            while ia < na_len and ta[ia] <= t_end:
                ia += 1
                qa += 1
            while ib < nb_len and tb[ib] <= t_end:
                ib += 1
                qb += 1
            t = t_end
        pos += 1
        out_t[pos] = t
        out_qa[pos] = qa
        out_qb[pos] = qb
        out_act[pos] = act
    return qa, qb, t, ia, ib, pos, _DONE


@dataclass(frozen=True)
class SimTrace:
    """Queue state after every transmission (and after each idle wake-up).

    Index 0 holds the initial state; ``action[i]`` is what produced state ``i``.
    """

    protocol: str
    t: np.ndarray
    q_a: np.ndarray
    q_b: np.ndarray
    action: np.ndarray
    departures: tuple[int, int]
    arrivals: ArrivalSpec
    lyapunov: tuple[float, float]
    params: OplncParams | None = None
    stop_reason: str = "max_events"
    action_counts: dict = field(default_factory=dict)

    @property
    def events(self) -> int:
        return len(self.t) - 1

    def state(self, i: int) -> QueueState:
        return QueueState(int(self.q_a[i]), int(self.q_b[i]), float(self.t[i]))

    @property
    def final(self) -> QueueState:
        return self.state(-1)

    def v(self) -> np.ndarray:
        a, b = self.lyapunov
        qa = self.q_a.astype(float)
        qb = self.q_b.astype(float)
        return a * qa * qa + b * qb * qb + 2.0 * qa * qb

    def throughput(self) -> RatePair:
        """Delivered bits per unit time over the whole trace."""
        span = self.t[-1] - self.t[0]
        if span <= 0:
            return RatePair(0.0, 0.0)
        ell = self.arrivals.packet_len
        return RatePair(float(self.departures[0] * ell / span), float(self.departures[1] * ell / span))

    def action_names(self) -> list[str]:
        return [ACTIONS[a] for a in self.action]


def simulate(
    protocol: str,
    caps: CapacitySet,
    arrivals: ArrivalSpec,
    horizon: float = math.inf,
    seed: int = 0,
    *,
    max_events: int | None = None,
    initial: tuple[int, int] = (0, 0),
    params: OplncParams | None = None,
    chunk: int = 1 << 14,
) -> SimTrace:
    """Run one scheduler until ``horizon``, ``max_events`` or a drained idle system.

    Arrival times for A and B come from independent child streams of
    ``seed`` and are generated window by window, so the trace is fully
    determined by the arguments.
    """
    key = protocol.lower()
    if key not in _PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}; expected omlnc or oplnc")
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if math.isinf(horizon) and max_events is None:
        raise ValueError("an infinite horizon needs max_events")
    if max_events is not None and max_events < 1:
        raise ValueError("max_events must be positive")
    if min(initial) < 0:
        raise ValueError("initial queues must be nonnegative")

    sigma = sigma_set(caps)
    ell = arrivals.packet_len
    if key == "oplnc":
        if params is None:
            params = choose_oplnc_params(sigma, arrivals)
        corner = tuple(params.batch_point)
        q_ab, q_bb, q_star = params.q_a_batch, params.q_b_batch, params.q_star
        longest = _plnc_duration(q_ab, q_bb, caps, ell) + q_star * ell / min(sigma.sigma_ab, sigma.sigma_ba)
    else:
        corner = None
        q_ab = q_bb = q_star = 1
        longest = ell / sigma.sigma_min
    coeffs = lyapunov_coefficients(sigma, corner)

    n_max = max_events if max_events is not None else 1 << 62
    cap_len = min(n_max, 1 << 16) + 1
    out_t = np.empty(cap_len)
    out_qa = np.empty(cap_len, dtype=np.int64)
    out_qb = np.empty(cap_len, dtype=np.int64)
    out_act = np.empty(cap_len, dtype=np.int8)
    out_t[0], out_qa[0], out_qb[0], out_act[0] = 0.0, initial[0], initial[1], IDLE

    rng_a, rng_b = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    total_rate = arrivals.rate_a + arrivals.rate_b
    window = max(chunk / total_rate if total_rate > 0 else chunk * longest, 4.0 * longest)
    durs = np.array(_durations(sigma, ell))
    caps4 = np.array(caps.as_tuple())

    ta = np.empty(0)
    tb = np.empty(0)
    wstart = 0.0
    qa, qb, t = int(initial[0]), int(initial[1]), 0.0
    pos = 0
    dep = np.zeros(2, dtype=np.int64)
    reason = "max_events"
    while True:
        wend = wstart + window
        ta = np.concatenate([ta, _window_arrivals(rng_a, arrivals.rate_a, wstart, wend)])
        tb = np.concatenate([tb, _window_arrivals(rng_b, arrivals.rate_b, wstart, wend)])
        wstart = wend
        room = len(out_t) - 1
        limit = min(n_max, room)
        before = pos
        qa, qb, t, ia, ib, pos, status = _run(
            _PROTOCOLS[key], qa, qb, t, limit, horizon, ta, 0, tb, 0, wend,
            durs, caps4, ell, q_ab, q_bb, q_star,
            out_t, out_qa, out_qb, out_act, pos, dep,
        )
        ta, tb = ta[ia:], tb[ib:]
        if status == _HORIZON:
            reason = "horizon"
            break
        if status == _DONE:
            if pos >= n_max:
                break
            grow = min(n_max + 1, 2 * len(out_t))
            out_t, out_qa, out_qb, out_act = (
                np.resize(a, grow) for a in (out_t, out_qa, out_qb, out_act)
            )
            continue
        # needs arrivals beyond the current window
        if total_rate == 0 and qa == 0 and qb == 0:
            reason = "drained"
            break
        if pos == before:
            window *= 2.0

    n = pos + 1
    counts = np.bincount(out_act[1:n], minlength=len(ACTIONS))
    return SimTrace(
        protocol=key,
        t=out_t[:n].copy(),
        q_a=out_qa[:n].copy(),
        q_b=out_qb[:n].copy(),
        action=out_act[:n].copy(),
        departures=(int(dep[0]), int(dep[1])),
        arrivals=arrivals,
        lyapunov=coeffs,
        params=params,
        stop_reason=reason,
        action_counts={ACTIONS[i]: int(c) for i, c in enumerate(counts)},
    )


def _window_arrivals(rng: np.random.Generator, rate: float, start: float, end: float) -> np.ndarray:
    if rate == 0:
        return np.empty(0)
    n = rng.poisson(rate * (end - start))
    return np.sort(rng.uniform(start, end, n))


def saturated_throughput(
    protocol: str, caps: CapacitySet, n_events: int = 100_000, *, packet_len: float = 1.0,
    params: OplncParams | None = None, min_batch: int = 1,
) -> RatePair:
    """Long-run delivered rate pair when both sources always have packets waiting."""
    sigma = sigma_set(caps)
    arrivals = ArrivalSpec(0.0, 0.0, packet_len)
    if protocol.lower() == "oplnc" and params is None:
        params = choose_oplnc_params(sigma, arrivals, min_batch=min_batch)
    per_event = 1 if params is None else max(params.q_a_batch, params.q_b_batch)
    backlog = (n_events + 1) * per_event
    trace = simulate(
        protocol, caps, arrivals, seed=0, max_events=n_events, initial=(backlog, backlog), params=params
    )
    return trace.throughput()


# ----------------------------------------------------------------------------
# stability diagnostics

def drift_estimate(trace: SimTrace, sigma: SigmaSet | None = None) -> float:
    """Mean one-step change of V over steps that start above the median V.

    ``sigma`` recomputes the XOR-corner weights; by default the trace's own
    weights are used.
    """
    if trace.events < _MIN_DRIFT_EVENTS:
        raise ValueError(f"drift needs at least {_MIN_DRIFT_EVENTS} events, trace has {trace.events}")
    if sigma is not None and trace.protocol == "omlnc":
        a, b = lyapunov_coefficients(sigma)
        qa, qb = trace.q_a.astype(float), trace.q_b.astype(float)
        v = a * qa * qa + b * qb * qb + 2.0 * qa * qb
    else:
        v = trace.v()
    dv = np.diff(v)
    start = v[:-1]
    high = start > np.median(start)
    if not np.any(high):
        # V constant at its median (e.g. a drained system): use every step
        high = np.ones_like(start, dtype=bool)
    return float(dv[high].mean())


def time_average_backlog(trace: SimTrace, start_fraction: float = 0.5) -> float:
    """Time-weighted mean of ``q_a + q_b`` over the final part of the trace."""
    total = (trace.q_a + trace.q_b).astype(float)
    t = trace.t
    t0 = t[0] + start_fraction * (t[-1] - t[0])
    keep = t[1:] > t0
    widths = np.diff(t)[keep]
    if widths.sum() <= 0:
        return float(total[-1])
    return float(np.dot(total[:-1][keep], widths) / widths.sum())


class GrowthFit(NamedTuple):
    slope: float
    p_value: float


def growth_test(trace: SimTrace, points: int = 2000) -> GrowthFit:
    """Least-squares slope of ``q_a + q_b`` against time with a one-sided p-value."""
    idx = np.unique(np.linspace(0, trace.events, min(points, trace.events + 1)).astype(int))
    fit = stats.linregress(trace.t[idx], (trace.q_a + trace.q_b)[idx].astype(float), alternative="greater")
    return GrowthFit(float(fit.slope), float(fit.pvalue))
