"""Node geometry, Rayleigh fading and link capacities for the two-way relay channel.

Sources A and B exchange data through one or more relays D.  Every
undirected link X-D carries a single reciprocal complex gain ``h`` whose
power ``|h|^2`` is exponential with mean ``distance ** -alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RelayTopology",
    "FadingDraw",
    "CapacitySet",
    "gain_variance",
    "draw_fading",
    "draw_fading_batch",
    "capacity",
    "capacities_for_relay",
    "db_to_linear",
    "parse_topology_file",
]


def db_to_linear(value_db):
    return 10.0 ** (np.asarray(value_db, dtype=float) / 10.0)


def gain_variance(distance: float, exponent: float) -> float:
    """Mean channel power ``distance ** -exponent`` (pure power law, no reference distance)."""
    if not distance > 0:
        raise ValueError(f"distance must be positive, got {distance!r}")
    return float(distance) ** (-float(exponent))


@dataclass(frozen=True)
class RelayTopology:
    """Positions (metres) of the two sources and the relays, plus radio parameters."""

    pos_a: tuple[float, float]
    pos_b: tuple[float, float]
    relay_positions: tuple[tuple[float, float], ...]
    path_loss_exponent: float = 3.5
    tx_power_dbm: float = 18.0
    noise_power_dbm: float = -90.0

    def __post_init__(self):
        object.__setattr__(self, "pos_a", tuple(float(v) for v in self.pos_a))
        object.__setattr__(self, "pos_b", tuple(float(v) for v in self.pos_b))
        object.__setattr__(
            self, "relay_positions", tuple(tuple(float(v) for v in p) for p in self.relay_positions)
        )
        if len(self.relay_positions) == 0:
            raise ValueError("at least one relay is required")
        if not self.path_loss_exponent > 0:
            raise ValueError("path_loss_exponent must be positive")
        if self.pos_a == self.pos_b:
            raise ValueError("pos_a and pos_b must differ")

    @classmethod
    def standard_layout(
        cls,
        num_relays: int = 1,
        *,
        ab_distance: float = 50.0,
        relay_spread: float = 10.0,
        midpoint_snr_db: float = 10.0,
        path_loss_exponent: float = 3.5,
        tx_power_dbm: float = 18.0,
        seed: int | None = None,
    ) -> "RelayTopology":
        """Sources ``ab_distance`` apart, relays on a vertical segment through the midpoint.

        With ``seed=None`` a single relay sits exactly at the midpoint and several
        relays are spread evenly over the segment; otherwise relay heights are
        drawn uniformly on the segment.  The noise power is set so that a link of
        length ``ab_distance / 2`` has mean SNR ``midpoint_snr_db``.
        """
        if num_relays < 1:
            raise ValueError("num_relays must be >= 1")
        half = ab_distance / 2.0
        if seed is None:
            if num_relays == 1:
                ys = np.zeros(1)
            else:
                ys = np.linspace(-relay_spread / 2, relay_spread / 2, num_relays)
        else:
            rng = np.random.default_rng(seed)
            ys = rng.uniform(-relay_spread / 2, relay_spread / 2, size=num_relays)
        noise = tx_power_dbm - midpoint_snr_db + 10.0 * math.log10(gain_variance(half, path_loss_exponent))
        return cls(
            pos_a=(-half, 0.0),
            pos_b=(half, 0.0),
            relay_positions=tuple((0.0, float(y)) for y in ys),
            path_loss_exponent=path_loss_exponent,
            tx_power_dbm=tx_power_dbm,
            noise_power_dbm=noise,
        )

    @property
    def num_relays(self) -> int:
        return len(self.relay_positions)

    @property
    def snr_linear(self) -> float:
        """Transmit-power to noise ratio before path loss and fading."""
        return float(db_to_linear(self.tx_power_dbm - self.noise_power_dbm))

    def distances(self) -> tuple[np.ndarray, np.ndarray]:
        relays = np.asarray(self.relay_positions)
        d_a = np.hypot(*(relays - np.asarray(self.pos_a)).T)
        d_b = np.hypot(*(relays - np.asarray(self.pos_b)).T)
        return d_a, d_b

    def link_variances(self) -> tuple[np.ndarray, np.ndarray]:
        """Mean ``|h|^2`` on the D-A and D-B links, one entry per relay."""
        d_a, d_b = self.distances()
        var_a = np.array([gain_variance(d, self.path_loss_exponent) for d in d_a])
        var_b = np.array([gain_variance(d, self.path_loss_exponent) for d in d_b])
        return var_a, var_b

    def with_midpoint_snr(self, snr_db: float) -> "RelayTopology":
        """Copy whose noise power makes the mean SNR of a half-distance link equal ``snr_db``."""
        half = math.dist(self.pos_a, self.pos_b) / 2.0
        noise = self.tx_power_dbm - snr_db + 10.0 * math.log10(gain_variance(half, self.path_loss_exponent))
        return RelayTopology(
            self.pos_a, self.pos_b, self.relay_positions,
            self.path_loss_exponent, self.tx_power_dbm, noise,
        )


@dataclass(frozen=True)
class FadingDraw:
    """Reciprocal complex gains; shape ``(K,)`` for one draw or ``(n, K)`` for a batch."""

    h_da: np.ndarray
    h_db: np.ndarray

    def __post_init__(self):
        h_da = np.asarray(self.h_da, dtype=complex)
        h_db = np.asarray(self.h_db, dtype=complex)
        if h_da.shape != h_db.shape:
            raise ValueError("h_da and h_db must have the same shape")
        if h_da.ndim not in (1, 2) or h_da.shape[-1] == 0:
            raise ValueError("fading must hold at least one relay")
        object.__setattr__(self, "h_da", h_da)
        object.__setattr__(self, "h_db", h_db)

    @classmethod
    def from_gains(cls, g_da, g_db) -> "FadingDraw":
        """Real nonnegative amplitudes ``sqrt(g)`` with the given channel powers."""
        return cls(np.sqrt(np.asarray(g_da, dtype=float)), np.sqrt(np.asarray(g_db, dtype=float)))

    @property
    def num_relays(self) -> int:
        return self.h_da.shape[-1]

    @property
    def g_da(self) -> np.ndarray:
        return np.abs(self.h_da) ** 2

    @property
    def g_db(self) -> np.ndarray:
        return np.abs(self.h_db) ** 2


def _complex_gaussian(rng: np.random.Generator, variance: np.ndarray, size) -> np.ndarray:
    scale = np.sqrt(np.asarray(variance) / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def draw_fading_batch(topology: RelayTopology, n: int, rng: np.random.Generator) -> FadingDraw:
    """``n`` independent fading realisations for every relay of ``topology``."""
    var_a, var_b = topology.link_variances()
    k = topology.num_relays
    h_da = _complex_gaussian(rng, var_a, (n, k))
    h_db = _complex_gaussian(rng, var_b, (n, k))
    return FadingDraw(h_da, h_db)


def draw_fading(topology: RelayTopology, seed: int) -> FadingDraw:
    batch = draw_fading_batch(topology, 1, np.random.default_rng(seed))
    return FadingDraw(batch.h_da[0], batch.h_db[0])


def capacity(snr_linear, gain_sq):
    """Shannon rate ``log2(1 + snr * |h|^2)`` in bits per channel use."""
    x = np.asarray(snr_linear, dtype=float) * np.asarray(gain_sq, dtype=float)
    out = np.log1p(x) / math.log(2.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CapacitySet:
    """Directed link capacities for one relay D: A->D, D->B, B->D, D->A."""

    c_ad: float
    c_db: float
    c_bd: float
    c_da: float

    def __post_init__(self):
        for name in ("c_ad", "c_db", "c_bd", "c_da"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {value!r}")
            object.__setattr__(self, name, value)

    @property
    def c_min(self) -> float:
        return min(self.c_da, self.c_db)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.c_ad, self.c_db, self.c_bd, self.c_da)

    def scaled(self, factor: float) -> "CapacitySet":
        return CapacitySet(*(factor * c for c in self.as_tuple()))


def capacities_for_relay(
    fading: FadingDraw,
    relay_index: int,
    snr_linear: float,
    *,
    snr_a: float | None = None,
    snr_b: float | None = None,
    snr_relay: float | None = None,
) -> CapacitySet:
    """Capacities of relay ``relay_index`` for a single fading draw.

    With one common ``snr_linear`` reciprocity gives ``c_ad == c_da`` and
    ``c_bd == c_db``.  ``snr_a``, ``snr_b`` and ``snr_relay`` override the
    transmit SNR of source A, source B and the relay respectively.
    """
    if fading.h_da.ndim != 1:
        raise ValueError("capacities_for_relay expects a single draw")
    k = fading.num_relays
    if not -k <= relay_index < k:
        raise IndexError(f"relay index {relay_index} out of range for {k} relays")
    g_a = float(fading.g_da[relay_index])
    g_b = float(fading.g_db[relay_index])
    s_a = snr_linear if snr_a is None else snr_a
    s_b = snr_linear if snr_b is None else snr_b
    s_d = snr_linear if snr_relay is None else snr_relay
    return CapacitySet(
        c_ad=capacity(s_a, g_a),
        c_db=capacity(s_d, g_b),
        c_bd=capacity(s_b, g_b),
        c_da=capacity(s_d, g_a),
    )


def parse_topology_file(path) -> RelayTopology:
    """Read a flat ``key = value`` topology description.

    Keys: ``pos_a``/``pos_b`` as ``x,y``; ``relays`` as ``x,y; x,y; ...``;
    ``path_loss_exponent``, ``tx_power_dbm``, ``noise_power_dbm`` or
    ``midpoint_snr_db``.  Lines starting with ``#`` are ignored.
    """
    values: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()

    def point(text: str) -> tuple[float, float]:
        x, y = (float(v) for v in text.split(","))
        return (x, y)

    try:
        relays = tuple(point(p) for p in values["relays"].split(";") if p.strip())
        topo = RelayTopology(
            pos_a=point(values["pos_a"]),
            pos_b=point(values["pos_b"]),
            relay_positions=relays,
            path_loss_exponent=float(values.get("path_loss_exponent", 3.5)),
            tx_power_dbm=float(values.get("tx_power_dbm", 18.0)),
            noise_power_dbm=float(values.get("noise_power_dbm", -90.0)),
        )
    except KeyError as exc:
        raise ValueError(f"topology file {path} is missing key {exc.args[0]!r}") from None
    if "midpoint_snr_db" in values:
        topo = topo.with_midpoint_snr(float(values["midpoint_snr_db"]))
    return topo
