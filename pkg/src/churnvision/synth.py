"""Deterministic synthetic usage-event generator.

Stands in for production event logs: emits per-customer daily events over all
twelve channels, built so the default labeling protocol reproduces the
intended outcome of every customer exactly. Churners stop all activity
before the churn window but keep a guaranteed call in the last-call window;
excluded customers go quiet before the last-call window opens.

Four archetypes shape the usage:

* balanced_active (kept): steady moderate usage on every channel.
* weekly_commuter (kept): the same usage modulated by a 7-day cycle.
* declining_user (churned): usage that ramps down to nearly nothing.
* data_only_abandoner (churned): steady top-up, data and outgoing SMS with
  zero voice usage apart from the single last call.

Daily counts are Poisson, magnitudes gamma; every draw comes from a
per-customer generator seeded by (seed, customer index), so output is
byte-identical across runs and independent of generation order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .labeling import EventRecord, WindowConfig, assess_population

# Per-archetype daily intensities, one fixed table. Tuples are
# (count lambda, magnitude gamma shape, gamma scale) for voice/topup,
# (count lambda, volume shape, volume scale, duration shape, duration scale)
# for data, and a bare count lambda for sms. Any tuning here is a versioned
# change: acceptance thresholds depend on these numbers.
ARCHETYPES = {
    "balanced_active": {
        "voice_in": (1.6, 2.0, 3.0),
        "voice_out": (2.2, 2.0, 3.0),
        "sms_in": 2.5,
        "sms_out": 1.8,
        "data_down": (2.5, 2.0, 60.0, 2.0, 12.0),
        "data_up": (2.0, 2.0, 18.0, 2.0, 6.0),
        "topup": (0.12, 2.0, 10.0),
        "weekly": False,
        "decline": False,
    },
    "weekly_commuter": {
        "voice_in": (1.8, 2.0, 3.0),
        "voice_out": (2.4, 2.0, 3.0),
        "sms_in": 2.5,
        "sms_out": 1.8,
        "data_down": (2.8, 2.0, 60.0, 2.0, 12.0),
        "data_up": (2.2, 2.0, 18.0, 2.0, 6.0),
        "topup": (0.12, 2.0, 10.0),
        "weekly": True,
        "decline": False,
    },
    "declining_user": {
        # voice-centric customer fading out: the mirror image of the
        # data-only abandoner, which keeps the voice-versus-data contrast
        # the dominant variation among churners
        "voice_in": (2.4, 2.0, 3.5),
        "voice_out": (3.2, 2.0, 3.5),
        "sms_in": 2.2,
        "sms_out": 1.6,
        "data_down": (0.7, 2.0, 40.0, 2.0, 10.0),
        "data_up": (0.5, 2.0, 12.0, 2.0, 5.0),
        "topup": (0.10, 2.0, 10.0),
        "weekly": False,
        "decline": True,
    },
    "data_only_abandoner": {
        "voice_in": (0.0, 2.0, 3.0),
        "voice_out": (0.0, 2.0, 3.0),
        "sms_in": 0.8,
        "sms_out": 2.8,
        "data_down": (4.0, 2.0, 110.0, 2.0, 16.0),
        "data_up": (3.0, 2.0, 35.0, 2.0, 8.0),
        "topup": (0.30, 2.0, 14.0),
        "weekly": False,
        "decline": False,
    },
}

# Number of trailing active days over which a declining user's intensity
# ramps from full down to the 5% floor.
DECLINE_SPAN_DAYS = 60
WEEKDAY_FACTOR = 1.3
WEEKEND_FACTOR = 0.2


@dataclass(frozen=True)
class SynthConfig:
    customer_count: int
    churn_rate: float = 0.0357  # rate within the labeled population
    excluded_fraction: float = 0.02
    seed: int = 42
    horizon_days: int = 120
    reference_day: int = 120
    nonchurn_weights: tuple = (("balanced_active", 0.6), ("weekly_commuter", 0.4))
    churn_weights: tuple = (("declining_user", 0.5), ("data_only_abandoner", 0.5))

    def __post_init__(self):
        if self.customer_count < 0:
            raise ValueError(f"customer_count must be >= 0, got {self.customer_count}")
        if not 0.0 <= self.churn_rate <= 1.0 or not 0.0 <= self.excluded_fraction <= 1.0:
            raise ValueError("churn_rate and excluded_fraction must lie in [0, 1]")
        if self.churn_rate + self.excluded_fraction > 1.0:
            raise ValueError("churn_rate + excluded_fraction must not exceed 1")
        if self.horizon_days < 90:
            raise ValueError("horizon must cover the three protocol windows (>= 90 days)")
        for weights in (self.nonchurn_weights, self.churn_weights):
            if abs(sum(w for _, w in weights) - 1.0) > 1e-9:
                raise ValueError(f"archetype weights must sum to 1, got {weights}")
            for name, _ in weights:
                if name not in ARCHETYPES:
                    raise ValueError(f"unknown archetype {name!r}")


def _pick(rng, weights) -> str:
    u = rng.random()
    acc = 0.0
    for name, w in weights:
        acc += w
        if u < acc:
            return name
    return weights[-1][0]


def _modulation(days: np.ndarray, table: dict, phase: int, last_active: int) -> np.ndarray:
    mod = np.ones(days.size)
    if table["weekly"]:
        weekday = ((days + phase) % 7) < 5
        mod *= np.where(weekday, WEEKDAY_FACTOR, WEEKEND_FACTOR)
    if table["decline"]:
        remaining = last_active - days + 1
        mod *= np.clip(remaining / DECLINE_SPAN_DAYS, 0.05, 1.0)
    return mod


def _emit_customer(cid: str, table: dict, rng, days: np.ndarray, mod: np.ndarray) -> list:
    events = []

    def emit(active, channel, values):
        active_days = days[active].tolist()
        events.extend(EventRecord(cid, d, channel, v) for d, v in zip(active_days, values))

    for side in ("voice_in", "voice_out"):
        lam, shape, scale = table[side]
        counts = rng.poisson(lam * mod)
        active = np.nonzero(counts)[0]
        if active.size:
            emit(active, f"{side}_freq", counts[active].astype(np.float64).tolist())
            emit(active, f"{side}_dur", rng.gamma(counts[active] * shape, scale).tolist())
    for direction in ("data_down", "data_up"):
        lam, vshape, vscale, dshape, dscale = table[direction]
        sessions = rng.poisson(lam * mod)
        active = np.nonzero(sessions)[0]
        if active.size:
            emit(active, f"{direction}_vol", rng.gamma(sessions[active] * vshape, vscale).tolist())
            emit(active, f"{direction}_dur", rng.gamma(sessions[active] * dshape, dscale).tolist())
    for sms in ("sms_in", "sms_out"):
        counts = rng.poisson(table[sms] * mod)
        active = np.nonzero(counts)[0]
        if active.size:
            emit(active, sms, counts[active].astype(np.float64).tolist())
    lam, shape, scale = table["topup"]
    counts = rng.poisson(lam * mod)
    active = np.nonzero(counts)[0]
    if active.size:
        emit(active, "topup_freq", counts[active].astype(np.float64).tolist())
        emit(active, "topup_amount", rng.gamma(counts[active] * shape, scale).tolist())
    return events


def generate_customers(config: SynthConfig) -> Iterator[tuple]:
    """Yield (customer_id, intended label, events) one customer at a time.

    Intended labels are "0", "1" or "excluded" and are produced by
    construction, never inferred back from the events. Events come sorted by
    (day, channel); ids are zero-padded so the stream is customer-sorted.
    """
    r = config.reference_day
    start_day = r - config.horizon_days + 1
    churn_start = r - 29            # first day of the churn window
    lc_lo, lc_hi = churn_start - 14, churn_start - 1
    width = max(6, len(str(max(config.customer_count - 1, 0))))
    for index in range(config.customer_count):
        rng = np.random.default_rng((config.seed, index))
        cid = f"C{index:0{width}d}"
        if rng.random() < config.excluded_fraction:
            intended = "excluded"
            archetype = _pick(rng, config.nonchurn_weights)
            last_active = lc_lo - 1
        elif rng.random() < config.churn_rate:
            intended = "1"
            archetype = _pick(rng, config.churn_weights)
            last_active = churn_start - 1
        else:
            intended = "0"
            archetype = _pick(rng, config.nonchurn_weights)
            last_active = r
        phase = int(rng.integers(7))
        table = ARCHETYPES[archetype]
        days = np.arange(start_day, last_active + 1)
        events = _emit_customer(cid, table, rng, days, _modulation(days, table, phase, last_active))

        if intended != "excluded":
            if not any(ev.channel in ("voice_in_freq", "voice_out_freq")
                       and lc_lo <= ev.day <= lc_hi for ev in events):
                events.append(EventRecord(cid, lc_hi - 6, "voice_out_freq", 1.0))
                events.append(EventRecord(cid, lc_hi - 6, "voice_out_dur", 2.5))
        if intended == "0":
            if not any(ev.day >= churn_start and ev.value > 0 for ev in events):
                events.append(EventRecord(cid, r - 7, "sms_out", 1.0))
        if not events:
            events.append(EventRecord(cid, start_day, "sms_in", 1.0))
        events.sort()  # tuple order: same id, so effectively (day, channel)
        yield cid, intended, events


def generate(config: SynthConfig) -> tuple:
    """Materialize the whole stream: (events customer-sorted, intended labels by id)."""
    events = []
    intended = {}
    for cid, label, customer_events in generate_customers(config):
        intended[cid] = label
        events.extend(customer_events)
    return events, intended


def default_window_config(config: SynthConfig) -> WindowConfig:
    """The labeling windows the generator constructs its timelines for."""
    return WindowConfig(reference_day=config.reference_day)


def label_fidelity_check(events, intended: dict, window_config: WindowConfig) -> float:
    """Fraction of customers whose derived outcome matches the intended label.

    The generator constructs events to satisfy the windows, so this is 1.0 on
    untampered output; vacuously 1.0 for an empty population.
    """
    if not intended:
        return 1.0
    outcomes, _ = assess_population(events, window_config)
    agree = 0
    for cid, want in intended.items():
        outcome = outcomes.get(cid)
        if outcome is None:
            continue
        if want == "excluded":
            agree += outcome.status == "excluded"
        else:
            agree += outcome.status == "labeled" and outcome.label == int(want)
    return agree / len(intended)
