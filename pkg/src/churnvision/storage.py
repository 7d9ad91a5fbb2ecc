"""File formats: events, label sidecars, prepared datasets, checkpoints,
AUC reports, score files and base-image exports.

Everything is deterministic: floats are written with repr (shortest exact
round-trip), JSON manifests use sorted keys, and checkpoints carry no
wall-clock metadata, so identical runs produce byte-identical files.

A checkpoint is a single file: one ASCII header line `CV-CKPT 1 <n>`, an
n-byte JSON manifest, a newline, then the weights blob - every learnable
parameter flattened in network order (weights before biases, row-major) as
little-endian IEEE-754 float64. The manifest records the blob length and a
64-bit BLAKE2b checksum, so truncated or corrupted files fail on load.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import nn
from .autoencoder import AutoencoderSpec
from .imaging import DL2_CHANNELS, CustomerImage, Normalizer
from .labeling import EventRecord

FORMAT_VERSION = 1
TOOL_INFO = {"tool": "churnvision", "version": "0.1.0"}

CHECKPOINT_MAGIC = "CV-CKPT"
CLASSIFIER = "classifier"
AUTOENCODER = "autoencoder"


def _fmt(value: float) -> str:
    return repr(float(value))


# ---------------------------------------------------------------------------
# events and label sidecars

EVENTS_HEADER = ["customer_id", "day", "channel", "value"]


def write_events(path, events) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(EVENTS_HEADER)
        for ev in events:
            writer.writerow([ev.customer_id, ev.day, ev.channel, _fmt(ev.value)])


def read_events(path) -> list:
    """Parse an events file, rejecting malformed lines with their line number."""
    events = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != EVENTS_HEADER:
            raise ValueError(f"{path}: expected header {','.join(EVENTS_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            cid, day_s, channel, value_s = row
            if not cid:
                raise ValueError(f"{path}:{lineno}: empty customer id")
            try:
                day = int(day_s)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: day {day_s!r} is not an integer") from None
            try:
                value = float(value_s)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: value {value_s!r} is not a number") from None
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{path}:{lineno}: value must be a finite nonnegative number")
            if channel not in DL2_CHANNELS:
                raise ValueError(f"{path}:{lineno}: unknown channel {channel!r}")
            events.append(EventRecord(cid, day, channel, value))
    return events


def write_labels(path, intended: dict) -> None:
    """Sidecar of intended outcomes: customer_id,label with label in {0,1,excluded}."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["customer_id", "label"])
        for cid in sorted(intended):
            writer.writerow([cid, intended[cid]])


def read_labels(path) -> dict:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["customer_id", "label"]:
            raise ValueError(f"{path}: expected header customer_id,label")
        out = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2 or row[1] not in ("0", "1", "excluded"):
                raise ValueError(f"{path}:{lineno}: expected customer_id,label with label 0/1/excluded")
            out[row[0]] = row[1]
        return out


# ---------------------------------------------------------------------------
# prepared datasets

@dataclass
class Dataset:
    """Normalized images plus the header needed to reuse them consistently."""

    images: list  # list[CustomerImage]
    channels: tuple
    window: dict
    normalizer: Normalizer


def write_dataset(path, dataset: Dataset) -> None:
    header = {
        "format_version": FORMAT_VERSION,
        "channels": list(dataset.channels),
        "window": dataset.window,
        "normalizer": dataset.normalizer.to_dict(),
        "count": len(dataset.images),
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for im in dataset.images:
            start, end = im.predictor_window
            pixels = ",".join(_fmt(v) for v in im.pixels.ravel(order="C"))
            label = "" if im.label is None else str(im.label)
            fh.write(f"{im.customer_id},{label},{start},{end},{pixels}\n")


def read_dataset(path) -> Dataset:
    with open(path) as fh:
        header_line = fh.readline()
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError:
            raise ValueError(f"{path}: first line is not a JSON header") from None
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported format_version {header.get('format_version')}")
        channels = tuple(header["channels"])
        days = header["window"]["predictor_window_days"]
        images = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4 + days * len(channels):
                raise ValueError(f"{path}:{lineno}: expected {4 + days * len(channels)} fields")
            cid, label_s, start_s, end_s = parts[:4]
            pixels = np.array([float(v) for v in parts[4:]]).reshape(days, len(channels))
            label = None if label_s == "" else int(label_s)
            images.append(CustomerImage(cid, pixels, label, (int(start_s), int(end_s))))
        if len(images) != header["count"]:
            raise ValueError(f"{path}: header promises {header['count']} rows, found {len(images)}")
        return Dataset(images, channels, header["window"], Normalizer.from_dict(header["normalizer"]))


# ---------------------------------------------------------------------------
# checkpoints

@dataclass
class Checkpoint:
    kind: str
    network_spec: nn.NetworkSpec
    params: list
    channels: tuple
    normalizer: Normalizer | None
    window: dict | None
    train_config: dict
    seed: int
    ae_spec: AutoencoderSpec | None
    manifest: dict


def save_checkpoint(path, kind: str, network_spec: nn.NetworkSpec, params,
                    channels, normalizer: Normalizer | None, window: dict | None,
                    train_config: dict, seed: int, ae_spec: AutoencoderSpec | None = None) -> None:
    if kind not in (CLASSIFIER, AUTOENCODER):
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    blob = np.ascontiguousarray(nn.flatten_parameters(params), dtype="<f8").tobytes()
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": kind,
        "creator": TOOL_INFO,
        "network": network_spec.to_dict(),
        "autoencoder": None if ae_spec is None else ae_spec.to_dict(),
        "channels": list(channels),
        "normalizer": None if normalizer is None else normalizer.to_dict(),
        "window": window,
        "train_config": train_config,
        "seed": seed,
        "parameter_count": nn.parameter_count(network_spec),
        "blob_bytes": len(blob),
        "checksum": hashlib.blake2b(blob, digest_size=8).hexdigest(),
    }
    if manifest["blob_bytes"] != 8 * manifest["parameter_count"]:
        raise AssertionError("weights blob does not match the spec's parameter count")
    payload = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {FORMAT_VERSION} {len(payload)}\n".encode())
        fh.write(payload)
        fh.write(b"\n")
        fh.write(blob)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        head = fh.readline().decode("ascii", errors="replace").split()
        if len(head) != 3 or head[0] != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        if int(head[1]) != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {head[1]}")
        manifest = json.loads(fh.read(int(head[2])).decode())
        fh.read(1)  # newline separator
        blob = fh.read()
    if len(blob) != manifest["blob_bytes"]:
        raise ValueError(f"{path}: weights blob is {len(blob)} bytes, manifest says {manifest['blob_bytes']}")
    if hashlib.blake2b(blob, digest_size=8).hexdigest() != manifest["checksum"]:
        raise ValueError(f"{path}: checksum mismatch, file is corrupt or truncated")
    spec = nn.NetworkSpec.from_dict(manifest["network"])
    params = nn.unflatten_parameters(spec, np.frombuffer(blob, dtype="<f8"))
    normalizer = (None if manifest["normalizer"] is None
                  else Normalizer.from_dict(manifest["normalizer"]))
    ae_spec = (None if manifest["autoencoder"] is None
               else AutoencoderSpec.from_dict(manifest["autoencoder"]))
    return Checkpoint(manifest["kind"], spec, params, tuple(manifest["channels"]),
                      normalizer, manifest["window"], manifest["train_config"],
                      manifest["seed"], ae_spec, manifest)


# ---------------------------------------------------------------------------
# reports and exports

def write_auc_report(path, report) -> None:
    """Plain-text key-value block followed by the fpr,tpr point table."""
    with open(path, "w") as fh:
        fh.write(f"dataset: {report.dataset}\n")
        fh.write(f"positives: {report.positives}\n")
        fh.write(f"negatives: {report.negatives}\n")
        fh.write(f"auc: {_fmt(report.auc)}\n")
        fh.write(f"roc_points: {len(report.roc_points)}\n")
        fh.write("fpr,tpr\n")
        for fpr, tpr in report.roc_points:
            fh.write(f"{_fmt(fpr)},{_fmt(tpr)}\n")


def write_scores(path, scores: dict, exclusions) -> None:
    """Scores section (customer_id,score) followed by a commented exclusions
    section, so excluded customers are reported rather than dropped."""
    with open(path, "w") as fh:
        fh.write("customer_id,score\n")
        for cid in sorted(scores):
            fh.write(f"{cid},{_fmt(scores[cid])}\n")
        fh.write("# excluded\n")
        for cid, reason in sorted(exclusions):
            fh.write(f"# {cid},{reason}\n")


def read_scores(path) -> tuple:
    scores = {}
    exclusions = []
    with open(path) as fh:
        header = fh.readline().rstrip("\n")
        if header != "customer_id,score":
            raise ValueError(f"{path}: expected header customer_id,score")
        for line in fh:
            line = line.rstrip("\n")
            if line == "# excluded":
                continue
            if line.startswith("# "):
                cid, reason = line[2:].split(",", 1)
                exclusions.append((cid, reason))
            elif line:
                cid, score = line.split(",", 1)
                scores[cid] = float(score)
    return scores, exclusions


def write_pgm(path, pixels) -> None:
    """Plain (P2) 8-bit graymap: [min, max] of the image maps to [255, 0],
    so the largest value prints darkest. Rows are days, columns channels."""
    pixels = np.asarray(pixels, dtype=np.float64)
    lo, hi = float(pixels.min()), float(pixels.max())
    if hi > lo:
        gray = np.rint(255.0 * (hi - pixels) / (hi - lo)).astype(int)
    else:
        gray = np.full(pixels.shape, 255, dtype=int)
    with open(path, "w") as fh:
        fh.write("P2\n")
        fh.write(f"{pixels.shape[1]} {pixels.shape[0]}\n")
        fh.write("255\n")
        for row in gray:
            fh.write(" ".join(str(v) for v in row) + "\n")


def write_value_table(path, pixels) -> None:
    """Raw values as delimited text, one row per day."""
    pixels = np.asarray(pixels, dtype=np.float64)
    with open(path, "w") as fh:
        for row in pixels:
            fh.write(",".join(_fmt(v) for v in row) + "\n")
