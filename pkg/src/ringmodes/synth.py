"""Synthetic multivariate time series from a ring of coupled oscillators.

Each node carries a Stuart-Landau-type limit-cycle oscillator; nodes are
coupled diffusively to their nearest present neighbours around a ring.
Removing a node removes its dynamics from the ring (the gap is bridged
with correspondingly weaker coupling) while its sensor columns stay in
the output as low-amplitude noise, so every operating mode produces the
same feature count.  Per node, a bank of phase-lagged, amplitude-scaled
sensors reports several harmonics of the node oscillation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

__all__ = [
    "RingConfig",
    "TimeSeriesDataset",
    "SequenceWindow",
    "NormalizationStats",
    "GROWTH_RATE",
    "MISSING_NODE_NOISE_STD",
    "integrate_ring",
    "simulate_ring",
    "make_windows",
    "stats_from_values",
    "apply_normalization",
    "normalize_features",
    "save_dataset",
    "load_dataset",
    "save_stats",
    "load_stats",
]

GROWTH_RATE = 1.0  # linear growth rate; limit-cycle amplitude settles near 1
MISSING_NODE_NOISE_STD = 1e-2  # variance 1e-4
TRANSIENT_FRACTION = 0.2  # leading share of integrated samples discarded
STD_GUARD = 1e-8  # below this a feature column counts as constant

_SENSOR_PHASE_STEP = 0.35  # radians of lag between consecutive sensors
_SENSOR_GAIN_DECAY = 0.2  # sensor s is scaled by 1/(1 + decay*s)


@dataclass(frozen=True)
class RingConfig:
    """Full description of one simulated operating mode.

    natural_freq is either one frequency in Hz for every node or a
    sequence with one entry per node.  missing lists node indices whose
    oscillators are removed from the ring; their sensor columns become
    independent Gaussian noise.
    """

    n_nodes: int = 8
    missing: frozenset[int] = frozenset()
    coupling_strength: float = 0.8
    natural_freq: float | tuple[float, ...] = 2.0
    n_sensors_per_node: int = 3
    n_vars_per_sensor: int = 2
    sample_rate: float = 200.0
    duration: float = 20.0
    seed: int = 0
    mode_label: str = "mode"

    def __post_init__(self):
        if self.n_nodes < 1:
            raise ValueError("n_nodes must be >= 1")
        missing = frozenset(int(m) for m in self.missing)
        object.__setattr__(self, "missing", missing)
        if any(m < 0 or m >= self.n_nodes for m in missing):
            raise ValueError(f"missing node index out of range 0..{self.n_nodes - 1}")
        if len(missing) >= self.n_nodes:
            raise ValueError("at least one node must remain in the ring")
        if not (np.isfinite(self.coupling_strength) and self.coupling_strength >= 0):
            raise ValueError("coupling_strength must be finite and >= 0")
        freq = self.natural_freq
        if np.isscalar(freq):
            freq = (float(freq),) * self.n_nodes
        else:
            freq = tuple(float(f) for f in freq)
            if len(freq) != self.n_nodes:
                raise ValueError("natural_freq sequence must have one entry per node")
        if any(not np.isfinite(f) or f <= 0 for f in freq):
            raise ValueError("natural frequencies must be finite and positive")
        object.__setattr__(self, "natural_freq", freq)
        if self.n_sensors_per_node < 1 or self.n_vars_per_sensor < 1:
            raise ValueError("sensor and variable counts must be >= 1")
        if self.sample_rate <= 0 or self.duration <= 0:
            raise ValueError("sample_rate and duration must be positive")
        if self.n_samples < 2:
            raise ValueError("duration * sample_rate must give at least 2 samples")
        if not self.mode_label:
            raise ValueError("mode_label must be non-empty")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def n_features(self) -> int:
        # sensor columns plus the trailing time column
        return self.n_nodes * self.n_sensors_per_node * self.n_vars_per_sensor + 1

    def column_names(self) -> list[str]:
        names = [
            f"n{j}s{s}v{v}"
            for j in range(self.n_nodes)
            for s in range(self.n_sensors_per_node)
            for v in range(self.n_vars_per_sensor)
        ]
        names.append("t")
        return names

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, frozenset):
                v = sorted(v)
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RingConfig":
        kw = dict(d)
        if "missing" in kw:
            kw["missing"] = frozenset(kw["missing"])
        if "natural_freq" in kw and isinstance(kw["natural_freq"], list):
            kw["natural_freq"] = tuple(kw["natural_freq"])
        return cls(**kw)


@dataclass
class TimeSeriesDataset:
    """Sampled signals, one row per instant; the time column comes last."""

    values: np.ndarray
    column_names: list[str]
    sample_rate: float
    mode_label: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("dataset values must be 2-D")
        if self.values.shape[1] != len(self.column_names):
            raise ValueError("column name count must match value width")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("dataset contains non-finite values")
        t = self.values[:, -1]
        if t.size >= 2 and not np.all(np.diff(t) > 0):
            raise ValueError("time column must be strictly increasing")

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]


@dataclass
class SequenceWindow:
    """One contiguous slice of a dataset: data is (length, n_features)."""

    data: np.ndarray
    start_index: int
    source_label: str = ""


@dataclass
class NormalizationStats:
    """Affine per-column maps: normalized = (x - offset) * scale.

    Feature columns are z-scored; the trailing time column is scaled to
    [0, 1].  Columns with spread below the guard get scale 0 so constant
    features map to exactly zero instead of NaN.
    """

    offset: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        self.offset = np.asarray(self.offset, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if self.offset.shape != self.scale.shape or self.offset.ndim != 1:
            raise ValueError("offset and scale must be 1-D arrays of equal length")


def integrate_ring(
    ics: np.ndarray,
    freqs: np.ndarray,
    coupling: np.ndarray,
    n_samples: int,
    dt: float,
    growth: float = GROWTH_RATE,
) -> np.ndarray:
    """Fixed-step RK4 integration of coupled limit-cycle oscillators.

    State A is complex, one entry per oscillator:
        dA_j/dt = (growth + 2*pi*i*freq_j) A_j - |A_j|^2 A_j
                  + sum_k coupling[j, k] * (A_k - A_j)

    Returns (n_samples, m) complex states whose first row is ics.  The
    dynamics are equivariant under simultaneous permutation of ics, freqs,
    and both coupling axes.
    """
    ics = np.asarray(ics, dtype=complex)
    freqs = np.asarray(freqs, dtype=float)
    coupling = np.asarray(coupling, dtype=float)
    m = ics.shape[0]
    if freqs.shape != (m,) or coupling.shape != (m, m):
        raise ValueError("ics, freqs, and coupling shapes are inconsistent")
    lin = growth + 2j * np.pi * freqs
    row_sum = coupling.sum(axis=1)

    def deriv(a: np.ndarray) -> np.ndarray:
        return lin * a - (a.real**2 + a.imag**2) * a + coupling @ a - row_sum * a

    out = np.empty((n_samples, m), dtype=complex)
    out[0] = a = ics
    for i in range(1, n_samples):
        k1 = deriv(a)
        k2 = deriv(a + 0.5 * dt * k1)
        k3 = deriv(a + 0.5 * dt * k2)
        k4 = deriv(a + dt * k3)
        a = a + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[i] = a
    return out


def _ring_coupling_matrix(cfg: RingConfig, present: list[int]) -> np.ndarray:
    """Diffusive weights between circularly adjacent present nodes.

    A gap of g removed nodes between neighbours weakens their link to
    strength/g, so different missing sets genuinely change the dynamics.
    """
    m = len(present)
    w = np.zeros((m, m))
    if m < 2 or cfg.coupling_strength == 0.0:
        return w
    for a in range(m):
        for step in (1, -1):
            b = (a + step) % m
            if step == 1:
                gap = (present[b] - present[a]) % cfg.n_nodes
            else:
                gap = (present[a] - present[b]) % cfg.n_nodes
            w[a, b] += cfg.coupling_strength / gap
    return w


def simulate_ring(cfg: RingConfig) -> TimeSeriesDataset:
    """Simulate one operating mode and expand it to sensor columns.

    The leading 20% of integrated samples are discarded as transient.
    Identical configs produce bit-identical datasets: the generator draws
    initial conditions first (per present node, ascending), then noise for
    missing nodes (ascending), and the integrator is fixed-step.
    """
    rng = np.random.default_rng(cfg.seed)
    present = sorted(set(range(cfg.n_nodes)) - cfg.missing)
    n_keep = cfg.n_samples
    n_total = math.ceil(n_keep / (1.0 - TRANSIENT_FRACTION))
    dt = 1.0 / cfg.sample_rate

    ics = np.empty(len(present), dtype=complex)
    for i in range(len(present)):
        amp = rng.uniform(0.5, 1.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        ics[i] = amp * np.exp(1j * phase)
    freqs = np.array([cfg.natural_freq[j] for j in present])
    coupling = _ring_coupling_matrix(cfg, present)
    states = integrate_ring(ics, freqs, coupling, n_total, dt)[n_total - n_keep :]

    s_per, v_per = cfg.n_sensors_per_node, cfg.n_vars_per_sensor
    values = np.empty((n_keep, cfg.n_features))
    gains = 1.0 / (1.0 + _SENSOR_GAIN_DECAY * np.arange(s_per))
    lags = np.exp(1j * _SENSOR_PHASE_STEP * np.arange(s_per))
    col = 0
    present_pos = {j: i for i, j in enumerate(present)}
    for j in range(cfg.n_nodes):
        if j in cfg.missing:
            col += s_per * v_per
            continue
        a = states[:, present_pos[j]]
        for s in range(s_per):
            lagged = a * lags[s]
            for v in range(v_per):
                values[:, col] = gains[s] * (lagged ** (v + 1)).real
                col += 1
    for j in sorted(cfg.missing):
        base = j * s_per * v_per
        block = rng.normal(0.0, MISSING_NODE_NOISE_STD, size=(n_keep, s_per * v_per))
        values[:, base : base + s_per * v_per] = block
    values[:, -1] = np.arange(n_keep) * dt

    return TimeSeriesDataset(
        values=values,
        column_names=cfg.column_names(),
        sample_rate=cfg.sample_rate,
        mode_label=cfg.mode_label,
    )


def make_windows(ds: TimeSeriesDataset, length: int, stride: int) -> list[SequenceWindow]:
    """Sliding windows over the rows; the last partial window is dropped."""
    if length < 1 or stride < 1:
        raise ValueError("window length and stride must be >= 1")
    if length > ds.n_samples:
        raise ValueError(f"window length {length} exceeds dataset size {ds.n_samples}")
    out = []
    for start in range(0, ds.n_samples - length + 1, stride):
        out.append(
            SequenceWindow(
                data=ds.values[start : start + length].copy(),
                start_index=start,
                source_label=ds.mode_label,
            )
        )
    return out


def stats_from_values(blocks: list[np.ndarray]) -> NormalizationStats:
    """Pooled per-column stats over several datasets' value arrays.

    All blocks must share a width.  Feature columns get mean/std; the time
    column gets min and reciprocal range so it normalizes onto [0, 1].
    """
    stacked = np.concatenate([np.asarray(b, dtype=float) for b in blocks], axis=0)
    width = stacked.shape[1]
    offset = np.empty(width)
    scale = np.empty(width)
    feats = stacked[:, :-1]
    offset[:-1] = feats.mean(axis=0)
    std = feats.std(axis=0)
    scale[:-1] = np.where(std < STD_GUARD, 0.0, 1.0 / np.where(std < STD_GUARD, 1.0, std))
    t = stacked[:, -1]
    t_range = t.max() - t.min()
    offset[-1] = t.min()
    scale[-1] = 0.0 if t_range < STD_GUARD else 1.0 / t_range
    return NormalizationStats(offset=offset, scale=scale)


def apply_normalization(ds: TimeSeriesDataset, stats: NormalizationStats) -> TimeSeriesDataset:
    if stats.offset.shape[0] != ds.n_features:
        raise ValueError("normalization width does not match dataset")
    values = (ds.values - stats.offset) * stats.scale
    if stats.scale[-1] == 0.0:
        # keep the time axis strictly increasing even when degenerate
        values[:, -1] = np.arange(ds.n_samples, dtype=float)
    return TimeSeriesDataset(
        values=values,
        column_names=list(ds.column_names),
        sample_rate=ds.sample_rate,
        mode_label=ds.mode_label,
    )


def normalize_features(ds: TimeSeriesDataset):
    """Z-score the feature columns and map time onto [0, 1].

    Returns (normalized dataset, stats); constant columns map to zero.
    """
    stats = stats_from_values([ds.values])
    return apply_normalization(ds, stats), stats


# ---------------------------------------------------------------------------
# disk formats


def _fmt(x: float) -> str:
    return format(x, ".17g")


def save_dataset(ds: TimeSeriesDataset, path) -> None:
    """CSV with the time column first, plus a JSON sidecar (<path>.meta.json)."""
    path = Path(path)
    names = ["t"] + list(ds.column_names[:-1])
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(names) + "\n")
        for row in ds.values:
            cells = [_fmt(row[-1])] + [_fmt(v) for v in row[:-1]]
            fh.write(",".join(cells) + "\n")
    meta = {
        "column_names": list(ds.column_names),
        "mode_label": ds.mode_label,
        "sample_rate": ds.sample_rate,
    }
    with open(path.with_suffix(path.suffix + ".meta.json"), "w", encoding="ascii") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_dataset(path) -> TimeSeriesDataset:
    path = Path(path)
    meta_path = path.with_suffix(path.suffix + ".meta.json")
    with open(meta_path, "r", encoding="ascii") as fh:
        meta = json.load(fh)
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip().split(",")
        if header[0] != "t":
            raise ValueError(f"{path}: first column must be t, got {header[0]!r}")
        for line in fh:
            rows.append([float(tok) for tok in line.strip().split(",")])
    if not rows:
        raise ValueError(f"{path}: no data rows")
    raw = np.array(rows)
    # file stores time first; in memory it lives last
    values = np.concatenate([raw[:, 1:], raw[:, :1]], axis=1)
    return TimeSeriesDataset(
        values=values,
        column_names=meta["column_names"],
        sample_rate=float(meta["sample_rate"]),
        mode_label=meta["mode_label"],
    )


def save_stats(stats: NormalizationStats, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("offset,scale\n")
        for o, s in zip(stats.offset, stats.scale):
            fh.write(f"{_fmt(o)},{_fmt(s)}\n")


def load_stats(path) -> NormalizationStats:
    offs, scs = [], []
    with open(path, "r", encoding="ascii") as fh:
        header = fh.readline().strip()
        if header != "offset,scale":
            raise ValueError(f"{path}: unexpected stats header {header!r}")
        for line in fh:
            o, s = line.strip().split(",")
            offs.append(float(o))
            scs.append(float(s))
    return NormalizationStats(offset=np.array(offs), scale=np.array(scs))
