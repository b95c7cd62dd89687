"""Recording ingestion, windowing, normalization, motion-energy segmentation,
and the deterministic synthetic gesture generator used as the desk-scale
test oracle.

All sensor streams are 6-channel (acc_x..gyro_z) at a nominal 50 Hz.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError, OrderingError, ParseError

RATE_HZ = 50
PERIOD_MS = 20
WINDOW_LEN = 120
WINDOW_HOP = 60
IDLE_LABEL = "idle"

CHANNELS = ("acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z")
GRAVITY_MS2 = -9.8

CSV_HEADER = ["t_ms", "acc_x", "acc_y", "acc_z", "gyro_x", "gyro_y", "gyro_z"]


@dataclass(frozen=True)
class ImuSample:
    t_ms: int
    acc: tuple
    gyro: tuple


@dataclass
class Recording:
    """A time-ordered 6-channel stream; ``data`` is (6, n), ``t_ms`` is (n,)."""

    id: str
    t_ms: np.ndarray
    data: np.ndarray
    nominal_rate_hz: int = RATE_HZ

    def __post_init__(self):
        self.t_ms = np.asarray(self.t_ms, dtype=np.int64)
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.shape != (6, self.t_ms.size):
            raise DataError(
                f"recording {self.id}: data shape {self.data.shape} does not match "
                f"{self.t_ms.size} timestamps"
            )
        if self.t_ms.size and np.any(np.diff(self.t_ms) <= 0):
            raise OrderingError(f"recording {self.id}: timestamps not strictly increasing")

    def __len__(self):
        return self.t_ms.size

    @property
    def samples(self):
        return [
            ImuSample(int(t), tuple(self.data[:3, i]), tuple(self.data[3:, i]))
            for i, t in enumerate(self.t_ms)
        ]

    @classmethod
    def from_samples(cls, rec_id: str, samples, nominal_rate_hz: int = RATE_HZ):
        t = np.array([s.t_ms for s in samples], dtype=np.int64)
        data = np.array([list(s.acc) + list(s.gyro) for s in samples], dtype=np.float64).T
        if data.size == 0:
            data = np.zeros((6, 0))
        return cls(rec_id, t, data, nominal_rate_hz)


@dataclass(frozen=True)
class NormStats:
    """Per-channel mean/std over the training split; std floored at 1e-6."""

    mean: np.ndarray
    std: np.ndarray

    def to_json(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, obj):
        return cls(np.asarray(obj["mean"], float), np.asarray(obj["std"], float))


@dataclass
class Window:
    """A fixed-length (6, T) slice, the unit of classification."""

    channels: np.ndarray
    source_recording: str
    start_index: int
    label: str | None = None
    normalized: bool = False

    def __post_init__(self):
        self.channels = np.asarray(self.channels, dtype=np.float64)
        if self.channels.ndim != 2 or self.channels.shape[0] != 6:
            raise DataError(f"window must be (6, T), got {self.channels.shape}")


@dataclass(frozen=True)
class Segment:
    """A labeled half-open interval [start_ms, end_ms) within one recording."""

    recording: str
    start_ms: int
    end_ms: int
    label: str

    def __post_init__(self):
        if self.start_ms >= self.end_ms:
            raise DataError(
                f"segment {self.recording}[{self.start_ms},{self.end_ms}): empty interval"
            )

    @property
    def duration_ms(self):
        return self.end_ms - self.start_ms


# ---------------------------------------------------------------------------
# recording files


def load_recording(path, rec_id: str | None = None) -> Recording:
    """Parse a recording CSV (header t_ms,acc_x,...,gyro_z, one sample per row)."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != CSV_HEADER:
            raise ParseError(f"bad header {header!r}, expected {CSV_HEADER!r}", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 7:
                raise ParseError(f"expected 7 fields, got {len(row)}", line=lineno)
            try:
                t = int(row[0])
                vals = [float(v) for v in row[1:]]
            except ValueError as e:
                raise ParseError(str(e), line=lineno) from None
            if t < 0:
                raise ParseError(f"negative timestamp {t}", line=lineno)
            if not all(np.isfinite(vals)):
                raise ParseError("non-finite channel value", line=lineno)
            rows.append((t, vals))
    if rec_id is None:
        rec_id = _stem(path)
    t_ms = np.array([r[0] for r in rows], dtype=np.int64)
    if t_ms.size > 1 and np.any(np.diff(t_ms) <= 0):
        raise OrderingError(f"{path}: timestamps not strictly increasing")
    data = np.array([r[1] for r in rows], dtype=np.float64).T if rows else np.zeros((6, 0))
    return Recording(rec_id, t_ms, data)


def save_recording(rec: Recording, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for i, t in enumerate(rec.t_ms):
            writer.writerow([int(t)] + [repr(float(v)) for v in rec.data[:, i]])


def _stem(path) -> str:
    import os

    return os.path.splitext(os.path.basename(str(path)))[0]


def load_segments(path) -> list[Segment]:
    """Annotation file: JSON array of {recording, start_ms, end_ms, label}."""
    with open(path, encoding="utf-8") as fh:
        items = json.load(fh)
    return [
        Segment(it["recording"], int(it["start_ms"]), int(it["end_ms"]), str(it["label"]))
        for it in items
    ]


def save_segments(segments, path) -> None:
    items = [
        {
            "recording": s.recording,
            "start_ms": int(s.start_ms),
            "end_ms": int(s.end_ms),
            "label": s.label,
        }
        for s in segments
    ]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(items, fh, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# resampling and windowing


def resample_50hz(rec: Recording) -> Recording:
    """Linear interpolation onto a 20 ms grid anchored at the first timestamp."""
    if len(rec) < 2:
        raise DataError(f"recording {rec.id}: need >= 2 samples to resample")
    t0 = int(rec.t_ms[0])
    span = int(rec.t_ms[-1]) - t0
    grid = t0 + PERIOD_MS * np.arange(span // PERIOD_MS + 1, dtype=np.int64)
    data = np.empty((6, grid.size))
    for c in range(6):
        data[c] = np.interp(grid, rec.t_ms.astype(float), rec.data[c])
    return Recording(rec.id, grid, data)


def is_on_grid(rec: Recording) -> bool:
    return len(rec) < 2 or bool(np.all(np.diff(rec.t_ms) == PERIOD_MS))


def slide_windows(rec: Recording, t_len: int = WINDOW_LEN, hop: int = WINDOW_HOP):
    """Fixed-length windows at stride ``hop``; empty list when too short."""
    n = len(rec)
    if n < t_len:
        return []
    count = (n - t_len) // hop + 1
    return [
        Window(rec.data[:, i * hop : i * hop + t_len].copy(), rec.id, i * hop)
        for i in range(count)
    ]


def compute_norm_stats(windows) -> NormStats:
    """Per-channel mean and population std over all window timesteps."""
    if not windows:
        raise DataError("compute_norm_stats: need at least one window")
    stacked = np.concatenate([w.channels for w in windows], axis=1)
    mean = stacked.mean(axis=1)
    std = np.maximum(stacked.std(axis=1), 1e-6)
    return NormStats(mean, std)


def normalize(w: Window, stats: NormStats) -> Window:
    channels = (w.channels - stats.mean[:, None]) / stats.std[:, None]
    return replace(w, channels=channels, normalized=True)


def denormalize(w: Window, stats: NormStats) -> Window:
    channels = w.channels * stats.std[:, None] + stats.mean[:, None]
    return replace(w, channels=channels, normalized=False)


def normalize_samples(x: np.ndarray, stats: NormStats) -> np.ndarray:
    """Normalize a raw (6, n) block (streaming/serving path)."""
    return (np.asarray(x, float) - stats.mean[:, None]) / stats.std[:, None]


def window_interval_ms(rec: Recording, w: Window) -> tuple[int, int]:
    start = int(rec.t_ms[0]) + w.start_index * PERIOD_MS
    return start, start + w.channels.shape[1] * PERIOD_MS


def label_windows(rec: Recording, windows, segments, min_overlap: float = 0.5):
    """Label each window with the gesture covering >= ``min_overlap`` of it.

    Overlap is measured against a single segment; windows without such a
    segment get the idle label. Returns new Window objects.
    """
    gesture_segs = [s for s in segments if s.label != IDLE_LABEL]
    out = []
    for w in windows:
        ws, we = window_interval_ms(rec, w)
        span = we - ws
        best, best_overlap = IDLE_LABEL, 0.0
        for seg in gesture_segs:
            overlap = max(0, min(we, seg.end_ms) - max(ws, seg.start_ms)) / span
            if overlap > best_overlap:
                best, best_overlap = seg.label, overlap
        out.append(replace(w, label=best if best_overlap >= min_overlap else IDLE_LABEL))
    return out


# ---------------------------------------------------------------------------
# motion-energy segmentation


@dataclass(frozen=True)
class SegmentParams:
    """Thresholds for the gyro-energy segmenter.

    Activity turns on when smoothed gyro energy exceeds idle_mean +
    on_sigmas * idle_std and releases below idle_mean + off_sigmas *
    idle_std; idle statistics come from the first ``calib_ms`` of the
    coarse region. Absolute theta_on/theta_off override the adaptive rule.
    """

    smooth_samples: int = 25
    on_sigmas: float = 4.0
    off_sigmas: float = 2.0
    merge_gap_ms: int = 300
    min_active_ms: int = 400
    calib_ms: int = 500
    theta_on: float | None = None
    theta_off: float | None = None


def _smoothed_energy(gyro_mag: np.ndarray, win: int) -> np.ndarray:
    """Centered moving RMS with edge replication."""
    half = win // 2
    sq = np.pad(gyro_mag**2, half, mode="edge")
    kernel = np.ones(win) / win
    return np.sqrt(np.convolve(sq, kernel, mode="valid")[: gyro_mag.size])


def auto_segment(
    rec: Recording,
    coarse: tuple[int, int],
    params: SegmentParams | None = None,
    label: str = "active",
) -> list[Segment]:
    """Split a coarse region into alternating gesture/idle segments.

    Detection runs on smoothed gyro energy with hysteresis; boundaries are
    then tightened on the unsmoothed magnitude, nearby activations merged,
    and too-short activations dropped. The result alternates ``label`` and
    idle segments covering the coarse region.
    """
    params = params or SegmentParams()
    if not is_on_grid(rec):
        raise DataError(f"recording {rec.id}: resample to 50 Hz before segmenting")
    start_ms, end_ms = int(coarse[0]), int(coarse[1])
    t0 = int(rec.t_ms[0])
    t_last = int(rec.t_ms[-1]) if len(rec) else t0
    if end_ms - start_ms < 1000:
        raise DataError(f"coarse region [{start_ms},{end_ms}) shorter than 1 s")
    if start_ms < t0 or end_ms > t_last + PERIOD_MS:
        raise DataError(
            f"coarse region [{start_ms},{end_ms}) outside recording [{t0},{t_last}]"
        )

    i0 = int(np.ceil((start_ms - t0) / PERIOD_MS))
    i1 = min(int((end_ms - t0) // PERIOD_MS), len(rec) - 1)

    mag = np.linalg.norm(rec.data[3:, :], axis=0)
    energy = _smoothed_energy(mag, params.smooth_samples)

    calib_n = max(2, params.calib_ms // PERIOD_MS)
    calib = slice(i0, min(i0 + calib_n, i1 + 1))
    theta_on = params.theta_on
    theta_off = params.theta_off
    # tiny floors keep the hysteresis releasable when the idle span is
    # noise-free (std 0 would otherwise give theta_off = 0 <= energy)
    if theta_on is None:
        theta_on = max(energy[calib].mean() + params.on_sigmas * energy[calib].std(), 1e-6)
    if theta_off is None:
        theta_off = max(energy[calib].mean() + params.off_sigmas * energy[calib].std(), 5e-7)
    raw_theta = max(mag[calib].mean() + params.on_sigmas * mag[calib].std(), 1e-9)

    # hysteresis on the smoothed energy
    detected = []
    active_from = None
    for i in range(i0, i1 + 1):
        if active_from is None and energy[i] > theta_on:
            active_from = i
        elif active_from is not None and energy[i] < theta_off:
            detected.append((active_from, i))
            active_from = None
    if active_from is not None:
        detected.append((active_from, i1 + 1))

    # merge through short dips
    merge_gap = params.merge_gap_ms // PERIOD_MS
    merged = []
    for seg in detected:
        if merged and seg[0] - merged[-1][1] < merge_gap:
            merged[-1] = (merged[-1][0], seg[1])
        else:
            merged.append(seg)

    # tighten boundaries on the raw magnitude (the smoothing window smears
    # onsets by up to half its width)
    slack = params.smooth_samples
    refined = []
    for s, e in merged:
        lo = max(i0, s - slack)
        hi = min(i1 + 1, e + slack)
        hot = np.nonzero(mag[lo:hi] > raw_theta)[0]
        if hot.size:
            s, e = lo + int(hot[0]), lo + int(hot[-1]) + 1
        refined.append((s, e))

    min_len = params.min_active_ms // PERIOD_MS
    kept = [(s, e) for s, e in refined if e - s >= min_len]

    # alternate idle / active across the coarse region
    def ms(idx):
        return t0 + idx * PERIOD_MS

    out = []
    cursor = i0
    for s, e in kept:
        if s > cursor:
            out.append(Segment(rec.id, ms(cursor), ms(s), IDLE_LABEL))
        out.append(Segment(rec.id, ms(s), ms(e), label))
        cursor = e
    if cursor <= i1:
        out.append(Segment(rec.id, ms(cursor), ms(i1 + 1), IDLE_LABEL))
    return out


# ---------------------------------------------------------------------------
# synthetic gesture generator


@dataclass(frozen=True)
class GestureSpec:
    """One synthetic gesture class.

    ``stages`` is a tuple of channel-name tuples; the gesture's duration is
    split evenly across stages and the sinusoid is emitted on each stage's
    channels. Multiple stages let two classes share an identical opening
    movement and diverge later.
    """

    class_id: str
    stages: tuple
    freq_hz: float
    amplitude: float
    duration_ms: int

    def __post_init__(self):
        if not (0 < self.freq_hz < RATE_HZ / 2):
            raise ConfigError(f"{self.class_id}: frequency {self.freq_hz} outside (0, 25) Hz")
        if self.duration_ms < 400:
            raise ConfigError(f"{self.class_id}: duration {self.duration_ms} < 400 ms")
        for stage in self.stages:
            for ch in stage:
                if ch not in CHANNELS:
                    raise ConfigError(f"{self.class_id}: unknown channel {ch!r}")


@dataclass(frozen=True)
class SynthConfig:
    classes: tuple
    noise_std: float = 0.2
    seed: int = 0

    def class_ids(self):
        return [c.class_id for c in self.classes]

    def spec(self, class_id: str) -> GestureSpec:
        for c in self.classes:
            if c.class_id == class_id:
                return c
        raise ConfigError(f"unknown gesture class {class_id!r}")

    def to_json(self):
        return {
            "noise_std": self.noise_std,
            "seed": self.seed,
            "classes": [
                {
                    "class_id": c.class_id,
                    "stages": [list(s) for s in c.stages],
                    "freq_hz": c.freq_hz,
                    "amplitude": c.amplitude,
                    "duration_ms": c.duration_ms,
                }
                for c in self.classes
            ],
        }

    @classmethod
    def from_json(cls, obj):
        classes = tuple(
            GestureSpec(
                c["class_id"],
                tuple(tuple(s) for s in c["stages"]),
                float(c["freq_hz"]),
                float(c["amplitude"]),
                int(c["duration_ms"]),
            )
            for c in obj["classes"]
        )
        return cls(classes, float(obj.get("noise_std", 0.2)), int(obj.get("seed", 0)))


def default_synth_config(
    n_classes: int = 4, noise_std: float = 0.2, seed: int = 0, hard: bool = False
) -> SynthConfig:
    """Desk-scale gesture vocabulary.

    The hard variant makes the first two classes open with the same wrist
    roll and diverge only in the second half.
    """
    if hard:
        catalog = [
            GestureSpec("g0", (("gyro_x",), ("gyro_y",)), 2.0, 3.0, 1400),
            GestureSpec("g1", (("gyro_x",), ("gyro_z", "acc_y")), 2.0, 3.0, 1400),
            GestureSpec("g2", (("gyro_z",),), 1.5, 3.5, 1400),
            GestureSpec("g3", (("gyro_y", "acc_x"),), 3.0, 2.5, 1400),
            GestureSpec("g4", (("gyro_x", "gyro_z"),), 4.0, 2.5, 1400),
            GestureSpec("g5", (("gyro_y", "acc_z"),), 1.0, 4.0, 1400),
        ]
    else:
        catalog = [
            GestureSpec("g0", (("gyro_x",),), 1.5, 3.0, 1400),
            GestureSpec("g1", (("gyro_y",),), 2.5, 3.0, 1400),
            GestureSpec("g2", (("gyro_z", "acc_x"),), 2.0, 3.5, 1400),
            GestureSpec("g3", (("gyro_x", "gyro_y"),), 3.5, 2.5, 1400),
            GestureSpec("g4", (("gyro_z", "acc_y"),), 1.0, 4.0, 1400),
            GestureSpec("g5", (("gyro_y", "acc_z"),), 4.5, 2.0, 1400),
        ]
    if not (1 <= n_classes <= len(catalog)):
        raise ConfigError(f"n_classes must be in [1, {len(catalog)}]")
    return SynthConfig(tuple(catalog[:n_classes]), noise_std=noise_std, seed=seed)


def make_script(
    cfg: SynthConfig,
    instances_per_class: int,
    idle_ms: int = 1200,
    order_seed: int | None = None,
):
    """Alternating idle/gesture script with ``instances_per_class`` of each class."""
    entries = []
    for c in cfg.classes:
        entries.extend([(c.class_id, c.duration_ms)] * instances_per_class)
    if order_seed is not None:
        rng = np.random.default_rng(order_seed)
        entries = [entries[i] for i in rng.permutation(len(entries))]
    script = [(IDLE_LABEL, idle_ms)]
    for entry in entries:
        script.append(entry)
        script.append((IDLE_LABEL, idle_ms))
    return script


def synth_generate(
    cfg: SynthConfig, script, rec_id: str = "synth", seed: int | None = None
):
    """Render a script into a Recording plus ground-truth segments.

    Gesture entries emit amplitude*sin(2*pi*f*t) on their configured
    channels (t relative to entry start); Gaussian channel noise and the
    gravity offset on acc_z apply throughout. Deterministic in the seed.
    """
    seed = cfg.seed if seed is None else seed
    counts = []
    for label, dur_ms in script:
        if label != IDLE_LABEL and dur_ms < 400:
            raise ConfigError(f"gesture entry {label!r} shorter than 400 ms")
        counts.append(max(1, int(round(dur_ms / PERIOD_MS))))
    n = int(np.sum(counts))
    rng = np.random.default_rng(seed)
    data = rng.normal(0.0, cfg.noise_std, size=(6, n))
    data[CHANNELS.index("acc_z")] += GRAVITY_MS2

    segments = []
    cursor = 0
    for (label, _), count in zip(script, counts):
        if label != IDLE_LABEL:
            spec = cfg.spec(label)
            t_rel = np.arange(count) * (PERIOD_MS / 1000.0)
            wave = spec.amplitude * np.sin(2.0 * np.pi * spec.freq_hz * t_rel)
            bounds = np.linspace(0, count, len(spec.stages) + 1).astype(int)
            for stage, lo, hi in zip(spec.stages, bounds[:-1], bounds[1:]):
                for ch in stage:
                    data[CHANNELS.index(ch), cursor + lo : cursor + hi] += wave[lo:hi]
        segments.append(
            Segment(rec_id, cursor * PERIOD_MS, (cursor + count) * PERIOD_MS, label)
        )
        cursor += count

    t_ms = PERIOD_MS * np.arange(n, dtype=np.int64)
    return Recording(rec_id, t_ms, data), segments
