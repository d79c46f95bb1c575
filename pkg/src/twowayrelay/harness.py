"""Experiment configuration, named presets and reproducible CSV runs."""
from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .channel import CapacitySet, RelayTopology, gain_variance, parse_topology_file
from .dmt import (
    DmtConfig,
    DmtScenario,
    InsufficientTrialsError,
    Lemma3Config,
    dmt_theoretical,
    estimate_slope,
    lemma2_tails,
    lemma3_tail_check,
    outage_curve,
)
from .regions import boundary_on_ray, region_for, sigma_set
from .scheduler import (
    ACTIONS,
    ArrivalSpec,
    choose_oplnc_params,
    drift_estimate,
    simulate,
    time_average_backlog,
)
from .sumrate import default_mu_grid, fading_gain_samples, gain_curve

__all__ = [
    "KINDS",
    "ExperimentConfig",
    "RunManifest",
    "ConfigValidationError",
    "preset",
    "preset_names",
    "load_config_file",
    "run",
]

KINDS = ("region", "gain", "schedule", "dmt", "lemma-check")
REFERENCE_TRIALS = 10**8  # channel realisations per point in the full-scale study
_STOCHASTIC = {"gain", "schedule", "dmt", "lemma-check"}


class ConfigValidationError(ValueError):
    """Invalid experiment configuration; ``errors`` maps field names to messages."""

    def __init__(self, errors: dict[str, str]):
        self.errors = dict(errors)
        detail = "; ".join(f"{k}: {v}" for k, v in self.errors.items())
        super().__init__(f"invalid configuration ({detail})")


@dataclass(frozen=True)
class ExperimentConfig:
    """Every knob of every experiment kind; fields unused by ``kind`` are ignored."""

    kind: str
    seed: int | None = 0
    out: str = "out"
    threads: int = 1
    # rate regions, gains and scheduling
    caps: tuple[float, float, float, float] | None = None
    protocol: str = "all"
    boundary_points: int = 33
    mu_min: float = 0.05
    mu_max: float = 20.0
    points: int = 61
    # geometry (used when caps is None, and for DMT link variances)
    topology: str | None = None
    num_relays: int = 1
    ab_distance: float = 50.0
    relay_spread: float = 10.0
    snr_db: float = 10.0
    random_relays: bool = False
    trials: int = 1000
    # scheduling
    rate_a: float = 0.0
    rate_b: float = 0.0
    packet_bits: float = 1.0
    horizon: float = math.inf
    max_events: int | None = 100_000
    sample_every: int = 1
    min_batch: int = 1
    # outage and tradeoff
    coop: str = "all"
    m: float = 0.25
    mu: float = 1.0
    lf: float = 0.5
    lb: float = 0.5
    snr_db_grid: tuple[float, ...] = (20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0)
    method: str = "auto"
    geometry: bool = False
    # tail-bound checks
    lemma_sigmas: tuple[float, ...] = (1.0, 1.0, 1.0)
    lemma_thetas: tuple[float, ...] = (0.01, 0.05, 0.1)
    lemma3_relays: tuple[int, ...] = (1, 2)
    lemma3_theta_exp: float = 0.5
    lemma3_functional: str = "harmonic"
    lemma3_trials: int = 1_000_000

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        out = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and math.isinf(value):
                value = "inf"
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out


_COOP = {"all": "collab_all", "select-bc": "collab_select_broadcast", "select-relay": "select_single_relay"}


def validate(config: ExperimentConfig) -> None:
    """Raise :class:`ConfigValidationError` listing every offending field."""
    errors: dict[str, str] = {}
    c = config
    if c.kind not in KINDS:
        errors["kind"] = f"must be one of {', '.join(KINDS)}"
    if c.kind in _STOCHASTIC and c.seed is None:
        errors["seed"] = "required for stochastic experiments"
    if c.seed is not None and c.seed < 0:
        errors["seed"] = "must be nonnegative"
    if c.threads < 1:
        errors["threads"] = "must be >= 1"
    if c.caps is not None:
        if len(c.caps) != 4:
            errors["caps"] = "needs four values c_ad,c_db,c_bd,c_da"
        elif not all(math.isfinite(v) and v > 0 for v in c.caps):
            errors["caps"] = "all capacities must be positive and finite"
    if c.kind == "region":
        if c.caps is None:
            errors["caps"] = "required for region"
        if c.protocol not in ("all", "tdmh", "mlnc", "plnc", "hull"):
            errors["protocol"] = "must be all, tdmh, mlnc, plnc or hull"
        if c.boundary_points < 2:
            errors["boundary_points"] = "must be >= 2"
    if c.kind == "gain":
        if not 0 < c.mu_min < c.mu_max:
            errors["mu_min"] = "need 0 < mu_min < mu_max"
        if c.points < 2:
            errors["points"] = "must be >= 2"
        if c.caps is None and c.trials < 1:
            errors["trials"] = "must be >= 1"
    if c.kind in ("gain", "dmt") and (c.num_relays < 1):
        errors["num_relays"] = "must be >= 1"
    if c.kind == "schedule":
        if c.caps is None:
            errors["caps"] = "required for schedule"
        if c.protocol not in ("omlnc", "oplnc"):
            errors["protocol"] = "must be omlnc or oplnc"
        if c.rate_a < 0 or c.rate_b < 0:
            errors["rate_a"] = "arrival rates must be nonnegative"
        if c.packet_bits <= 0:
            errors["packet_bits"] = "must be positive"
        if math.isinf(c.horizon) and c.max_events is None:
            errors["horizon"] = "give a finite horizon or max_events"
        if c.horizon <= 0:
            errors["horizon"] = "must be positive"
        if c.sample_every < 1:
            errors["sample_every"] = "must be >= 1"
    if c.kind == "dmt":
        if c.protocol not in ("tdmh", "mlnc", "plnc"):
            errors["protocol"] = "must be tdmh, mlnc or plnc"
        if c.coop not in _COOP:
            errors["coop"] = "must be all, select-bc or select-relay"
        elif c.protocol == "tdmh" and c.coop == "select-bc":
            errors["coop"] = "select-bc applies to mlnc and plnc only"
        if abs(c.lf + c.lb - 1.0) > 1e-12 or not (0 <= c.lf <= 1):
            errors["lf"] = "lf and lb must lie in [0, 1] and sum to 1"
        if c.m <= 0:
            errors["m"] = "must be positive"
        if c.mu < 0:
            errors["mu"] = "must be nonnegative"
        grid = np.asarray(c.snr_db_grid, dtype=float)
        if len(grid) < 1 or np.any(np.diff(grid) <= 0):
            errors["snr_db_grid"] = "must be strictly increasing"
        elif np.any(grid <= 0):
            errors["snr_db_grid"] = "SNR must exceed 0 dB"
        if c.trials < 1:
            errors["trials"] = "must be >= 1"
        if c.method not in ("auto", "mc", "is"):
            errors["method"] = "must be auto, mc or is"
    if c.kind == "lemma-check":
        if not c.lemma_sigmas or any(s <= 0 for s in c.lemma_sigmas):
            errors["lemma_sigmas"] = "must be positive"
        if not c.lemma_thetas or any(t <= 0 for t in c.lemma_thetas):
            errors["lemma_thetas"] = "must be positive"
        if c.trials < 1:
            errors["trials"] = "must be >= 1"
    if errors:
        raise ConfigValidationError(errors)


# ----------------------------------------------------------------------------
# presets

def _presets() -> dict[str, ExperimentConfig]:
    p: dict[str, ExperimentConfig] = {
        "fig3a": ExperimentConfig("region", seed=None, caps=(1.0, 1.0, 1.0, 1.0)),
        "fig3b": ExperimentConfig("region", seed=None, caps=(4.0, 2.0, 3.0, 6.0)),
        "fig5": ExperimentConfig("gain", seed=0, num_relays=1, snr_db=10.0, trials=1000),
        "schedule-omlnc": ExperimentConfig(
            "schedule", caps=(4.0, 2.0, 3.0, 6.0), protocol="omlnc", rate_a=0.9 * 12 / 13,
            rate_b=0.9 * 12 / 13, max_events=1_000_000, sample_every=100,
        ),
        "schedule-oplnc": ExperimentConfig(
            "schedule", caps=(4.0, 2.0, 3.0, 6.0), protocol="oplnc", rate_a=0.9 * 4 / 7,
            rate_b=0.9 * 12 / 7, max_events=1_000_000, sample_every=100,
        ),
        "lemma-check": ExperimentConfig("lemma-check", trials=10_000_000),
    }
    for figure, coop in (("fig6", "all"), ("fig7", "select-relay")):
        for proto in ("tdmh", "mlnc", "plnc"):
            for k in (1, 2, 3):
                p[f"{figure}-{proto}-{k}relays"] = ExperimentConfig(
                    "dmt", protocol=proto, coop=coop, num_relays=k, m=0.25, mu=1.0, lf=0.5, lb=0.5,
                    trials=1_000_000, geometry=True, random_relays=True,
                )
    return p


def preset_names() -> list[str]:
    return sorted(_presets())


def preset(name: str) -> ExperimentConfig:
    presets = _presets()
    if name not in presets:
        raise ConfigValidationError({"preset": f"unknown preset {name!r}"})
    return presets[name]


# ----------------------------------------------------------------------------
# flat key = value config files

def _coerce(name: str, text: str):
    types = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
    if name not in types:
        raise ConfigValidationError({name: "unknown configuration key"})
    kind = str(types[name])
    text = text.strip()
    try:
        if text.lower() in ("none", "") and "None" in kind:
            return None
        if kind.startswith("tuple"):
            parts = [s for s in text.replace(";", ",").split(",") if s.strip()]
            cast = int if "int" in kind else float
            return tuple(cast(s) for s in parts)
        if kind.startswith("bool"):
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return text.lower() in ("true", "1", "yes")
        if kind.startswith("int"):
            return int(float(text)) if "e" in text.lower() else int(text)
        if kind.startswith("float"):
            return float(text)
        return text
    except ValueError:
        raise ConfigValidationError({name: f"cannot parse {text!r} as {kind}"}) from None


def load_config_file(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply ``key = value`` lines from ``path`` on top of ``base``."""
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigValidationError({key.strip(): "expected key = value"})
            key = key.strip().replace("-", "_")
            values[key] = _coerce(key, value)
    if base is None:
        if "kind" not in values:
            raise ConfigValidationError({"kind": "config file must set kind"})
        base = ExperimentConfig(values.pop("kind"))
    return base.replace(**values)


# ----------------------------------------------------------------------------
# running

@dataclass(frozen=True)
class RunManifest:
    config: dict
    code_version: str
    wall_time_s: float
    outputs: dict[str, str]
    summary: dict = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _code_version() -> str:
    digest = hashlib.sha256()
    for path in sorted(Path(__file__).parent.glob("*.py")):
        digest.update(path.name.encode())
        digest.update(path.read_bytes())
    return f"{__version__}+{digest.hexdigest()[:12]}"


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header: list[str], rows) -> bytes:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    return buf.getvalue().encode()


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _topology(c: ExperimentConfig) -> RelayTopology:
    if c.topology:
        return parse_topology_file(c.topology).with_midpoint_snr(c.snr_db)
    return RelayTopology.standard_layout(
        c.num_relays, ab_distance=c.ab_distance, relay_spread=c.relay_spread,
        midpoint_snr_db=c.snr_db, seed=c.seed if c.random_relays else None,
    )


def _run_region(c: ExperimentConfig):
    caps = CapacitySet(*c.caps)
    protocols = ("tdmh", "mlnc", "plnc", "hull") if c.protocol == "all" else (c.protocol,)
    vertex_rows, boundary_rows = [], []
    angles = np.linspace(0.0, math.pi / 2, c.boundary_points)
    for proto in protocols:
        region = region_for(caps, proto)
        for i, v in enumerate(region.vertices):
            vertex_rows.append((proto, i, v.r_ab, v.r_ba))
        for ang in angles:
            mu = math.inf if ang == angles[-1] else math.tan(ang)
            p = boundary_on_ray(region, mu)
            boundary_rows.append((proto, float(ang), p.r_ab, p.r_ba))
    outputs = {
        "region_vertices.csv": _csv(["protocol", "index", "r_ab", "r_ba"], vertex_rows),
        "region_boundary.csv": _csv(["protocol", "angle_rad", "r_ab", "r_ba"], boundary_rows),
    }
    return outputs, {"protocols": list(protocols)}, []


def _run_gain(c: ExperimentConfig):
    grid = default_mu_grid(c.points, c.mu_min, c.mu_max)
    if c.caps is not None:
        curve = gain_curve(CapacitySet(*c.caps), grid)
        summary = {"source": "closed-form"}
    else:
        samples = fading_gain_samples(_topology(c), c.trials, c.seed, grid)
        curve = samples.mean_curve()
        summary = {"source": "fading-average", "draws": c.trials}
    summary.update(
        argmax_mu_rho_mt=curve.argmax_mu("rho_mt"),
        argmax_mu_rho_pt=curve.argmax_mu("rho_pt"),
        argmax_mu_rho_omt=curve.argmax_mu("rho_omt"),
    )
    rows = zip(curve.mu_grid, curve.rho_mt, curve.rho_pt, curve.rho_omt)
    return {"gain.csv": _csv(["mu", "rho_mt", "rho_pt", "rho_omt"], rows)}, summary, []


def _run_schedule(c: ExperimentConfig):
    caps = CapacitySet(*c.caps)
    arrivals = ArrivalSpec(c.rate_a, c.rate_b, c.packet_bits)
    params = None
    if c.protocol == "oplnc":
        params = choose_oplnc_params(sigma_set(caps), arrivals, min_batch=c.min_batch)
    trace = simulate(
        c.protocol, caps, arrivals, c.horizon, c.seed, max_events=c.max_events, params=params
    )
    v = trace.v()
    idx = np.arange(0, trace.events + 1, c.sample_every)
    rows = ((trace.t[i], int(trace.q_a[i]), int(trace.q_b[i]), ACTIONS[trace.action[i]], v[i]) for i in idx)
    thr = trace.throughput()
    summary = {
        "events": trace.events,
        "stop_reason": trace.stop_reason,
        "final_q_a": int(trace.q_a[-1]),
        "final_q_b": int(trace.q_b[-1]),
        "throughput_ab": thr.r_ab,
        "throughput_ba": thr.r_ba,
        "time_average_backlog": time_average_backlog(trace),
        "action_counts": trace.action_counts,
    }
    if params is not None:
        summary.update(q_a_batch=params.q_a_batch, q_b_batch=params.q_b_batch, q_star=params.q_star)
    if trace.events >= 1000:
        summary["drift_estimate"] = drift_estimate(trace)
    return {"schedule.csv": _csv(["t", "q_a", "q_b", "action", "V"], rows)}, summary, []


def _dmt_variances(c: ExperimentConfig):
    if not c.geometry:
        return None
    topo = _topology(c.replace(snr_db=0.0))
    var_a, var_b = topo.link_variances()
    ref = gain_variance(math.dist(topo.pos_a, topo.pos_b) / 2.0, topo.path_loss_exponent)
    return var_a / ref, var_b / ref


def _run_dmt(c: ExperimentConfig):
    scenario = DmtScenario(c.protocol, _COOP[c.coop])
    dconf = DmtConfig(c.m, c.mu, c.lf, c.lb, c.num_relays)
    curve = outage_curve(
        scenario, dconf, c.snr_db_grid, c.trials, c.seed,
        method=c.method, variances=_dmt_variances(c), threads=c.threads,
    )
    rows = zip(curve.snr_db_grid, curve.outage_estimates, curve.ci_lo, curve.ci_hi, curve.trial_counts, curve.events)
    summary = {"method": curve.method}
    try:
        summary["d_theory"] = dmt_theoretical(scenario, dconf)
    except ValueError as exc:
        summary["d_theory"] = None
        summary["d_theory_note"] = str(exc)
    try:
        slope = estimate_slope(curve)
        summary.update(d_hat=slope.d_hat, stderr=slope.stderr, window_db=list(slope.window))
    except InsufficientTrialsError as exc:
        summary.update(d_hat=None, stderr=None, slope_note=str(exc))
    warnings = []
    if c.trials < REFERENCE_TRIALS:
        warnings.append(
            f"trials scaled down to {c.trials} per point from {REFERENCE_TRIALS}; "
            "only the outage decay slope is expected to match"
        )
    header = ["snr_db", "outage", "ci_lo", "ci_hi", "trials", "events"]
    return {"dmt.csv": _csv(header, rows)}, summary, warnings


def _run_lemma(c: ExperimentConfig):
    rows2 = []
    all_hold = True
    for k in range(1, len(c.lemma_sigmas) + 1):
        for res in lemma2_tails(c.lemma_sigmas[:k], c.lemma_thetas, c.trials, c.seed + k):
            rows2.append((k, res.theta, res.empirical, res.bound, res.holds()))
            all_hold &= res.holds()
    rows3 = []
    for t in c.lemma3_relays:
        res = lemma3_tail_check(
            Lemma3Config(t, c.lemma3_theta_exp, c.lemma3_functional), c.lemma3_trials, c.seed + 100 + t
        )
        rows3.append((t, res.probabilities[0], res.probabilities[-1], res.fitted_exponent, res.predicted_exponent))
    outputs = {
        "lemma2.csv": _csv(["K", "theta", "empirical", "bound", "holds"], rows2),
        "lemma3.csv": _csv(["relays", "p_low_snr", "p_high_snr", "fitted_exponent", "predicted_exponent"], rows3),
    }
    return outputs, {"lemma2_all_hold": bool(all_hold)}, []


_RUNNERS = {
    "region": _run_region,
    "gain": _run_gain,
    "schedule": _run_schedule,
    "dmt": _run_dmt,
    "lemma-check": _run_lemma,
}


def run(config: ExperimentConfig) -> RunManifest:
    """Validate, run, and write the CSV outputs plus ``manifest.json`` under ``config.out``."""
    validate(config)
    start = time.perf_counter()
    outputs, summary, warnings = _RUNNERS[config.kind](config)
    wall = time.perf_counter() - start
    out_dir = Path(config.out)
    checksums = {}
    for name, data in outputs.items():
        _atomic_write(out_dir / name, data)
        checksums[name] = hashlib.sha256(data).hexdigest()
    manifest = RunManifest(
        config=config.as_dict(),
        code_version=_code_version(),
        wall_time_s=round(wall, 3),
        outputs=checksums,
        summary=summary,
        warnings=tuple(warnings),
    )
    _atomic_write(out_dir / "manifest.json", (manifest.to_json() + "\n").encode())
    return manifest
