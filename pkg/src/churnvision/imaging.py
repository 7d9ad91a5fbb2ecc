"""Customer images: days x channels matrices of normalized usage pixels.

Rows are days of the predictor window, oldest first; columns are behavior
channels in a fixed, versioned order (the order is a wire contract shared by
dataset files and checkpoints). Values are scaled per channel to [0, 1] with
a percentile-capped min-max fit on training data only.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

# Ten-channel layout: voice first, then data, then SMS.
DL1_CHANNELS = (
    "voice_in_freq", "voice_out_freq", "voice_in_dur", "voice_out_dur",
    "data_down_vol", "data_up_vol", "data_down_dur", "data_up_dur",
    "sms_in", "sms_out",
)
# Twelve-channel layout: the two top-up channels lead, then the ten above.
DL2_CHANNELS = ("topup_freq", "topup_amount") + DL1_CHANNELS

CHANNEL_SETS = {"dl1": DL1_CHANNELS, "dl2": DL2_CHANNELS}

# Channels whose events count as calls for last-call detection.
VOICE_CHANNELS = frozenset(c for c in DL1_CHANNELS if c.startswith("voice_"))

DATA_CHANNELS = tuple(c for c in DL1_CHANNELS if c.startswith("data_"))


@dataclass
class CustomerImage:
    customer_id: str
    pixels: np.ndarray  # (days, channels), values in [0, 1]
    label: int | None
    predictor_window: tuple


@dataclass
class Normalizer:
    """Per-channel affine scaling fitted on training matrices.

    lower is the training minimum, upper the p-th percentile (nearest rank)
    of each channel's training cells. Channels where the two coincide are
    flagged degenerate and map to 0. The fingerprint identifies the training
    data the fit came from.
    """

    lower: np.ndarray
    upper: np.ndarray
    percentile: float
    degenerate: np.ndarray  # bool per channel
    fingerprint: str

    def to_dict(self) -> dict:
        return {"lower": [float(v) for v in self.lower],
                "upper": [float(v) for v in self.upper],
                "percentile": self.percentile,
                "degenerate": [bool(v) for v in self.degenerate],
                "fingerprint": self.fingerprint}

    @staticmethod
    def from_dict(d: dict) -> "Normalizer":
        return Normalizer(np.asarray(d["lower"], dtype=np.float64),
                          np.asarray(d["upper"], dtype=np.float64),
                          float(d["percentile"]),
                          np.asarray(d["degenerate"], dtype=bool),
                          d["fingerprint"])


def rasterize(events, predictor_window, channels) -> np.ndarray:
    """Aggregate one customer's events into a raw days x channels matrix.

    cell[d][c] sums the values of the events on day d for channel c, so the
    result is invariant to event order. Events outside the window are
    ignored; events on channels missing from `channels` are rejected.
    """
    start, end = predictor_window
    days = end - start + 1
    if days < 1:
        raise ValueError(f"empty predictor window {predictor_window}")
    index = {name: i for i, name in enumerate(channels)}
    matrix = np.zeros((days, len(channels)))
    for ev in events:
        col = index.get(ev.channel)
        if col is None:
            raise ValueError(f"channel {ev.channel!r} is not in the active channel set")
        if start <= ev.day <= end:
            matrix[ev.day - start, col] += ev.value
    return matrix


def _nearest_rank(sorted_values: np.ndarray, percentile: float) -> float:
    n = sorted_values.size
    rank = int(np.ceil(percentile / 100.0 * n))
    return float(sorted_values[max(rank, 1) - 1])


def fit_normalizer(matrices, percentile: float = 99.0) -> Normalizer:
    """Fit per-channel bounds over all cells of the training matrices.

    Fit on the training split only; applying the result to test data clamps
    anything above the cap to 1.
    """
    matrices = list(matrices)
    if not matrices:
        raise ValueError("cannot fit a normalizer on zero matrices")
    if not 0.0 < percentile <= 100.0:
        raise ValueError(f"percentile must lie in (0, 100], got {percentile}")
    channels = matrices[0].shape[1]
    for m in matrices:
        if m.ndim != 2 or m.shape[1] != channels:
            raise ValueError(f"matrix shape {m.shape} does not match {channels} channels")
    stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in matrices], axis=0)
    lower = stacked.min(axis=0)
    upper = np.empty(channels)
    for c in range(channels):
        upper[c] = _nearest_rank(np.sort(stacked[:, c]), percentile)
    degenerate = upper <= lower
    digest = hashlib.blake2b(digest_size=8)
    digest.update(str(stacked.shape).encode())
    digest.update(np.ascontiguousarray(stacked).tobytes())
    return Normalizer(lower, upper, percentile, degenerate, digest.hexdigest())


def normalize(matrix, normalizer: Normalizer) -> np.ndarray:
    """Scale a raw matrix to [0, 1] pixels: clamp((v - lower) / (upper - lower), 0, 1);
    degenerate channels map to 0."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != normalizer.lower.size:
        raise ValueError(
            f"matrix has {matrix.shape[1] if matrix.ndim == 2 else '?'} channels, "
            f"normalizer was fitted on {normalizer.lower.size}")
    span = np.where(normalizer.degenerate, 1.0, normalizer.upper - normalizer.lower)
    pixels = np.clip((matrix - normalizer.lower) / span, 0.0, 1.0)
    pixels[:, normalizer.degenerate] = 0.0
    return pixels


def stack_images(images) -> tuple:
    """Stack CustomerImages into ((n, days, channels, 1) inputs, (n,) labels).

    Labels come out as -1 where unset.
    """
    if not images:
        raise ValueError("no images to stack")
    pixels = np.stack([im.pixels for im in images])[..., None]
    labels = np.array([-1 if im.label is None else im.label for im in images])
    return pixels, labels
