"""Event binning, flat tensor files, and synthetic spiking datasets.

Event streams are lists of (t_us, x, y, p) camera events; binning wraps
them into equal-width time windows with polarity kept as two channels.
The flat tensor file format is a single JSON header line followed by a
raw little-endian float32 payload, enough to hand pre-binned data to
the trainer without any vendor formats.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataFormatError


@dataclass
class EventStream:
    """Sorted DVS-style events: (t in microseconds, column, row, polarity)."""

    events: np.ndarray  # (n, 4) int64 columns t, x, y, p
    width: int
    height: int

    def __post_init__(self) -> None:
        ev = np.asarray(self.events, dtype=np.int64).reshape(-1, 4)
        if ev.shape[0] and np.any(np.diff(ev[:, 0]) < 0):
            ev = ev[np.argsort(ev[:, 0], kind="stable")]
        if ev.shape[0]:
            if ev[:, 1].min() < 0 or ev[:, 1].max() >= self.width:
                raise ConfigError("event x coordinate outside sensor width")
            if ev[:, 2].min() < 0 or ev[:, 2].max() >= self.height:
                raise ConfigError("event y coordinate outside sensor height")
            if not np.isin(ev[:, 3], (0, 1)).all():
                raise ConfigError("event polarity must be 0 or 1")
        self.events = ev

    @classmethod
    def from_csv(cls, path, width: int, height: int) -> "EventStream":
        """Parse "t_us,x,y,p" lines; a non-numeric first line is a header."""
        rows = []
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 4:
                    raise DataFormatError(
                        f"{path}:{line_no + 1}: expected 4 comma-separated fields"
                    )
                try:
                    rows.append([int(float(p)) for p in parts])
                except ValueError:
                    if line_no == 0:
                        continue  # header line
                    raise DataFormatError(
                        f"{path}:{line_no + 1}: non-numeric event fields"
                    ) from None
        return cls(events=np.asarray(rows, dtype=np.int64).reshape(-1, 4),
                   width=width, height=height)


@dataclass
class BinnedTensor:
    """Event frames: (T, 2, H, W) counts or clamped binary."""

    data: np.ndarray
    bin_ms: float | None = None
    label: int | None = None

    def flat_frames(self) -> np.ndarray:
        """(T, 2*H*W) view for feeding a dense input layer."""
        return self.data.reshape(self.data.shape[0], -1)


def bin_events(stream: EventStream, num_bins: int, mode: str = "binary") -> BinnedTensor:
    """Wrap an event stream into num_bins equal-width time windows.

    Windows span [t_first, t_last] with the final window closed on the
    right. mode="count" accumulates events per pixel/polarity;
    mode="binary" clamps to {0, 1}.
    """
    if num_bins < 1:
        raise ConfigError(f"num_bins must be >= 1, got {num_bins}")
    if mode not in ("count", "binary"):
        raise ConfigError(f"mode must be 'count' or 'binary', got {mode!r}")
    ev = stream.events
    if ev.shape[0] == 0:
        raise ConfigError("cannot bin an empty event stream")
    t0, t1 = int(ev[0, 0]), int(ev[-1, 0])
    span = t1 - t0
    if span <= 0:
        raise ConfigError("event stream duration must be positive")

    frames = np.zeros((num_bins, 2, stream.height, stream.width))
    bins = ((ev[:, 0] - t0) * num_bins) // span
    bins = np.minimum(bins, num_bins - 1)  # right-close the last window
    np.add.at(frames, (bins, ev[:, 3], ev[:, 2], ev[:, 1]), 1.0)
    if mode == "binary":
        frames = np.minimum(frames, 1.0)
    return BinnedTensor(data=frames, bin_ms=span / num_bins / 1000.0)


@dataclass
class Dataset:
    """Train/test split of fixed-length spike sequences."""

    train_x: np.ndarray  # (n, T, width)
    train_y: np.ndarray  # (n,) class indices or (n, k) regression targets
    test_x: np.ndarray
    test_y: np.ndarray
    meta: dict = field(default_factory=dict)


def gen_pattern_task(
    classes: int,
    width: int,
    t_total: int,
    spikes_per_pattern: int,
    noise_flip_prob: float,
    seed: int,
    train_per_class: int = 20,
    test_per_class: int = 8,
) -> Dataset:
    """Noisy spatio-temporal template classification.

    Each class gets a fixed random binary (T, width) template with
    exactly spikes_per_pattern ones; samples flip each bit independently
    with noise_flip_prob. Splits are drawn disjointly and everything is
    a pure function of the arguments.
    """
    if classes < 2:
        raise ConfigError(f"need at least 2 classes, got {classes}")
    cells = t_total * width
    if not 1 <= spikes_per_pattern <= cells:
        raise ConfigError(
            f"spikes_per_pattern must be in [1, {cells}], got {spikes_per_pattern}"
        )
    if not 0.0 <= noise_flip_prob < 1.0:
        raise ConfigError(f"noise_flip_prob must be in [0, 1), got {noise_flip_prob}")

    rng = np.random.default_rng(seed)
    templates = np.zeros((classes, t_total, width))
    for c in range(classes):
        idx = rng.choice(cells, size=spikes_per_pattern, replace=False)
        templates[c].reshape(-1)[idx] = 1.0

    def draw(n_per_class: int) -> tuple[np.ndarray, np.ndarray]:
        xs, ys = [], []
        for c in range(classes):
            flips = rng.random((n_per_class, t_total, width)) < noise_flip_prob
            xs.append(np.abs(templates[c][None] - flips.astype(float)))
            ys.append(np.full(n_per_class, c, dtype=int))
        x = np.concatenate(xs)
        y = np.concatenate(ys)
        order = rng.permutation(len(y))
        return x[order], y[order]

    train_x, train_y = draw(train_per_class)
    test_x, test_y = draw(test_per_class)
    return Dataset(
        train_x=train_x,
        train_y=train_y,
        test_x=test_x,
        test_y=test_y,
        meta={
            "kind": "pattern",
            "classes": classes,
            "width": width,
            "t_total": t_total,
            "spikes_per_pattern": spikes_per_pattern,
            "noise_flip_prob": noise_flip_prob,
            "seed": seed,
        },
    )


def gen_regression_task(
    input_width: int, t_total: int, seed: int, n_samples: int = 8
) -> Dataset:
    """Random binary input repeated over T steps with a scalar target.

    The memory-scaling workload shape: each sample is one frame tiled
    across the sequence, paired with a scalar regression target.
    """
    rng = np.random.default_rng(seed)
    frames = (rng.random((n_samples, input_width)) < 0.5).astype(float)
    xs = np.repeat(frames[:, None, :], max(t_total, 1), axis=1)
    ys = rng.standard_normal((n_samples, 1))
    n_train = max(1, n_samples // 2)
    return Dataset(
        train_x=xs[:n_train],
        train_y=ys[:n_train],
        test_x=xs[n_train:],
        test_y=ys[n_train:],
        meta={
            "kind": "regression",
            "input_width": input_width,
            "t_total": t_total,
            "seed": seed,
        },
    )


def save_binned(path, tensor: BinnedTensor) -> None:
    """Write the flat tensor format: one JSON header line + f32 payload."""
    header = {
        "shape": list(tensor.data.shape),
        "dtype": "f32",
        "label": tensor.label,
        "bin_ms": tensor.bin_ms,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode("utf-8"))
        fh.write(np.ascontiguousarray(tensor.data, dtype="<f4").tobytes())


def load_binned(path) -> BinnedTensor:
    """Read a flat tensor file, validating header and payload size."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"{path}: malformed header: {exc}") from None
        for key in ("shape", "dtype"):
            if key not in header:
                raise DataFormatError(f"{path}: header missing {key!r}")
        if header["dtype"] != "f32":
            raise DataFormatError(f"{path}: unsupported dtype {header['dtype']!r}")
        shape = tuple(int(s) for s in header["shape"])
        expected = int(np.prod(shape)) * 4
        payload = fh.read()
        if len(payload) != expected:
            raise DataFormatError(
                f"{path}: payload has {len(payload)} bytes, header declares {expected}"
            )
    data = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(float)
    return BinnedTensor(data=data, bin_ms=header.get("bin_ms"), label=header.get("label"))
