"""Churn labeling from raw usage timelines, at whole-day granularity.

Counting back from a reference day r with the default window lengths, the
timeline splits into three non-overlapping windows:

    churn window      [r-29, r]     any activity here -> label 0, none -> label 1
    last-call window  [r-43, r-30]  latest voice call here is the "last call";
                                    no voice call -> the customer is excluded
    predictor window  [last_call-43, last_call-14]   the 30 days whose usage
                                    becomes the customer's image

All fences are inclusive. "Activity" means any event of any channel with a
positive value; the last call looks at voice channels only. Zero-valued
events never count, so explicit zeros equal absences.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .imaging import DL2_CHANNELS, VOICE_CHANNELS

LABELED = "labeled"
EXCLUDED = "excluded"

# exclusion reason codes
NO_LAST_CALL = "no_last_call"
BEFORE_DATA_START = "before_data_start"


class EventRecord(NamedTuple):
    """One dated usage observation. Frequency channels carry counts as values;
    volume and duration channels carry magnitudes."""

    customer_id: str
    day: int
    channel: str
    value: float


@dataclass(frozen=True)
class WindowConfig:
    reference_day: int
    churn_window_days: int = 30
    last_call_window_days: int = 14
    gap_days: int = 14
    predictor_window_days: int = 30
    earliest_day: int | None = None  # events before this day are unavailable

    def __post_init__(self):
        for field_name in ("churn_window_days", "last_call_window_days",
                           "gap_days", "predictor_window_days"):
            if getattr(self, field_name) < 1:
                raise ValueError(f"{field_name} must be >= 1, got {getattr(self, field_name)}")

    @property
    def churn_window(self) -> tuple:
        r = self.reference_day
        return (r - self.churn_window_days + 1, r)

    @property
    def last_call_window(self) -> tuple:
        start, _ = self.churn_window
        return (start - self.last_call_window_days, start - 1)

    def predictor_window(self, last_call_day: int) -> tuple:
        end = last_call_day - self.gap_days
        return (end - self.predictor_window_days + 1, end)

    def to_dict(self) -> dict:
        return {"reference_day": self.reference_day,
                "churn_window_days": self.churn_window_days,
                "last_call_window_days": self.last_call_window_days,
                "gap_days": self.gap_days,
                "predictor_window_days": self.predictor_window_days,
                "earliest_day": self.earliest_day}

    @staticmethod
    def from_dict(d: dict) -> "WindowConfig":
        return WindowConfig(**d)


@dataclass(frozen=True)
class Assessment:
    """Outcome of the labeling protocol for one customer."""

    status: str
    label: int | None = None
    last_call_day: int | None = None
    predictor_window: tuple | None = None
    reason: str | None = None


def assess(events: Iterable[EventRecord], config: WindowConfig) -> Assessment:
    """Label one customer's events, or exclude them.

    Label 0 if any positive-valued event falls in the churn window, else 1.
    The last call is the latest positive voice event in the last-call window;
    without one the customer is excluded (reason no_last_call). If the
    predictor window would start before config.earliest_day the customer is
    excluded as well (reason before_data_start).
    """
    churn_lo, churn_hi = config.churn_window
    lc_lo, lc_hi = config.last_call_window
    active = False
    last_call = None
    for ev in events:
        if ev.value <= 0.0:
            continue
        if churn_lo <= ev.day <= churn_hi:
            active = True
        elif lc_lo <= ev.day <= lc_hi and ev.channel in VOICE_CHANNELS:
            if last_call is None or ev.day > last_call:
                last_call = ev.day
    if last_call is None:
        return Assessment(EXCLUDED, reason=NO_LAST_CALL)
    window = config.predictor_window(last_call)
    if config.earliest_day is not None and window[0] < config.earliest_day:
        return Assessment(EXCLUDED, reason=BEFORE_DATA_START)
    return Assessment(LABELED, label=0 if active else 1,
                      last_call_day=last_call, predictor_window=window)


@dataclass
class PopulationTally:
    label0: int = 0
    label1: int = 0
    excluded: int = 0
    excluded_reasons: dict = None
    errors: dict = None

    def __post_init__(self):
        if self.excluded_reasons is None:
            self.excluded_reasons = {}
        if self.errors is None:
            self.errors = {}


def group_by_customer(events: Iterable[EventRecord]) -> dict:
    """Events grouped by customer_id, customers in sorted order."""
    grouped: dict[str, list] = {}
    for ev in events:
        grouped.setdefault(ev.customer_id, []).append(ev)
    return {cid: grouped[cid] for cid in sorted(grouped)}


def assess_population(events: Iterable[EventRecord], config: WindowConfig):
    """Assess every customer in the stream.

    Returns (outcomes, tally): outcomes maps customer_id -> Assessment in
    sorted id order; customers whose events fail validation are skipped and
    reported in tally.errors.
    """
    outcomes: dict[str, Assessment] = {}
    tally = PopulationTally()
    for cid, evs in group_by_customer(events).items():
        try:
            outcome = assess(evs, config)
        except ValueError as exc:
            tally.errors[cid] = str(exc)
            continue
        outcomes[cid] = outcome
        if outcome.status == EXCLUDED:
            tally.excluded += 1
            tally.excluded_reasons[outcome.reason] = tally.excluded_reasons.get(outcome.reason, 0) + 1
        elif outcome.label == 0:
            tally.label0 += 1
        else:
            tally.label1 += 1
    return outcomes, tally


def validate_event(ev: EventRecord) -> EventRecord:
    """Reject events with negative values or channels outside the enumeration."""
    if ev.value < 0.0:
        raise ValueError(f"event value must be nonnegative, got {ev.value} for {ev.customer_id}")
    if ev.channel not in DL2_CHANNELS:
        raise ValueError(f"unknown channel {ev.channel!r}")
    return ev
