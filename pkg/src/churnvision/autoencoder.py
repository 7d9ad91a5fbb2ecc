"""Single-hidden-layer autoencoder over customer images, plus the
maximal-activation extractor that turns its encoder weights into base images.

The network reproduces its input: flattened pixels -> sigmoid hidden layer ->
sigmoid output of the same size, trained on mean squared reconstruction
error with the shared mini-batch loop. Each hidden unit's base image is the
unit-norm input that maximizes its activation, which for a linear-into-
sigmoid unit is just its weight row scaled onto the unit sphere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .training import TrainConfig, run_training


@dataclass(frozen=True)
class AutoencoderSpec:
    days: int
    channels: int
    hidden_units: int = 16

    def __post_init__(self):
        if self.days < 1 or self.channels < 1 or self.hidden_units < 1:
            raise ValueError(f"autoencoder extents must be >= 1, got {self}")

    @property
    def input_dim(self) -> int:
        return self.days * self.channels

    def to_network_spec(self) -> nn.NetworkSpec:
        return nn.make_network((self.days, self.channels, 1), [
            nn.flatten(),
            nn.dense(self.hidden_units, name="encoder"),
            nn.activation("sigmoid"),
            nn.dense(self.input_dim, name="decoder"),
            nn.activation("sigmoid"),
        ])

    def to_dict(self) -> dict:
        return {"days": self.days, "channels": self.channels, "hidden_units": self.hidden_units}

    @staticmethod
    def from_dict(d: dict) -> "AutoencoderSpec":
        return AutoencoderSpec(d["days"], d["channels"], d["hidden_units"])


ENCODER_LAYER = 1  # index of the encoder dense layer in to_network_spec()

DEAD_ROW_NORM = 1e-12


@dataclass
class BaseImage:
    """The unit-norm input image that maximally activates one hidden unit."""

    unit: int
    pixels: np.ndarray  # (days, channels), flattened L2 norm == 1

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.pixels))


def _mse_loss(outputs, targets):
    diff = outputs - targets
    loss = float(np.mean(diff * diff))
    return loss, (2.0 / diff.size) * diff, False


def train_autoencoder(images, spec: AutoencoderSpec, config: TrainConfig):
    """Train on (n, days, channels) pixel arrays (or (n, days, channels, 1)).

    Inputs and targets are the same flattened pixels. Returns (parameters,
    history); parameters belong to spec.to_network_spec().
    """
    x = np.asarray(images, dtype=np.float64)
    if x.ndim == 3:
        x = x[..., None]
    if x.ndim != 4 or x.shape[1:3] != (spec.days, spec.channels):
        raise ValueError(f"images of shape {x.shape} do not match {spec.days}x{spec.channels}")
    targets = x.reshape(x.shape[0], -1)
    return run_training(spec.to_network_spec(), x, targets, config, _mse_loss)


def reconstruct(spec: AutoencoderSpec, params, images):
    """decoder(encoder(x)) for one image or a batch; outputs lie in (0, 1)."""
    x = np.asarray(images, dtype=np.float64)
    single = x.ndim == 2
    if single:
        x = x[None, ...]
    if x.ndim == 3:
        x = x[..., None]
    out, _ = nn.network_forward(spec.to_network_spec(), params, x, training=False)
    out = out.reshape(-1, spec.days, spec.channels)
    return out[0] if single else out


def maximal_activation_images(spec: AutoencoderSpec, params):
    """One BaseImage per live hidden unit, plus the indices of dead units.

    Unit i's pixels are its encoder weight column scaled to unit L2 norm,
    reshaped to days x channels. Rows with norm below 1e-12 are reported dead
    and skipped (never divided).
    """
    weights = params[ENCODER_LAYER].weights  # (input_dim, hidden)
    images = []
    dead = []
    for i in range(weights.shape[1]):
        row = weights[:, i]
        norm = float(np.linalg.norm(row))
        if norm < DEAD_ROW_NORM:
            dead.append(i)
            continue
        images.append(BaseImage(i, (row / norm).reshape(spec.days, spec.channels)))
    return images, dead


@dataclass
class BaseImageReport:
    """Base images for the churned subset alongside the whole-population run."""

    churned: list
    population: list
    churned_count: int
    dead_churned: list
    dead_population: list


def churner_base_images(images, labels, spec: AutoencoderSpec, config: TrainConfig) -> BaseImageReport:
    """Train one autoencoder on the churned subset and one on everybody,
    returning both sets of base images. Rejects datasets without churners."""
    x = np.asarray(images, dtype=np.float64)
    y = np.asarray(labels)
    if x.shape[0] != y.shape[0]:
        raise ValueError("images and labels differ in length")
    churned = x[y == 1]
    if churned.shape[0] == 0:
        raise ValueError("no churned customers to train on")
    churn_params, _ = train_autoencoder(churned, spec, config)
    all_params, _ = train_autoencoder(x, spec, config)
    churn_images, dead_churn = maximal_activation_images(spec, churn_params)
    pop_images, dead_pop = maximal_activation_images(spec, all_params)
    return BaseImageReport(churn_images, pop_images, int(churned.shape[0]),
                           dead_churn, dead_pop)
