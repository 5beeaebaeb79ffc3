"""Lateral-impulse detection and significance aggregation.

A concept population firing well above its own baseline without direct
stimulation is evidence of propagation through learned lateral weights.
Baselines are exponential moving averages that freeze while a concept is
being stimulated, so driven firing never contaminates them. Three or more
impulses for one concept inside the significance window trigger autonomous
reflection; contributing impulses are consumed so one sustained elevation
cannot re-fire the same significance event every detection tick.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import ImpulseConfig

__all__ = ["ImpulseEvent", "SignificanceEvent", "ExclusionLog",
           "BaselineTracker", "ImpulseDetector"]


@dataclass(frozen=True)
class ImpulseEvent:
    concept: str
    multiplier: float
    rate_hz: float
    baseline_hz: float
    t_ms: float
    event_id: int

    def to_json(self) -> dict:
        return {"t_ms": self.t_ms, "concept": self.concept,
                "multiplier": round(self.multiplier, 3),
                "rate": round(self.rate_hz, 4),
                "baseline": round(self.baseline_hz, 4),
                "id": self.event_id}


@dataclass(frozen=True)
class SignificanceEvent:
    concept: str
    contributors: tuple[ImpulseEvent, ...]
    window_start_ms: float
    window_end_ms: float
    event_id: int

    @property
    def max_multiplier(self) -> float:
        return max(e.multiplier for e in self.contributors)

    def to_json(self) -> dict:
        return {"t_ms": self.window_end_ms, "concept": self.concept,
                "impulse_ids": [e.event_id for e in self.contributors],
                "max_multiplier": round(self.max_multiplier, 3),
                "id": self.event_id}


class ExclusionLog:
    """Per-concept stimulation windows; detection and baseline updates skip
    any concept whose window (plus guard margin) covers the query time."""

    def __init__(self, guard_margin_ms: float):
        self.guard_margin_ms = float(guard_margin_ms)
        self.windows: dict[str, list[tuple[float, float]]] = {}

    def add(self, concept: str, start_ms: float, end_ms: float) -> None:
        if end_ms < start_ms:
            raise ValueError("malformed exclusion window")
        self.windows.setdefault(concept, []).append(
            (start_ms, end_ms + self.guard_margin_ms))

    def is_excluded(self, concept: str, t_ms: float) -> bool:
        return any(s <= t_ms <= e for s, e in self.windows.get(concept, ()))

    def overlaps(self, concept: str, start_ms: float, end_ms: float) -> bool:
        return any(s <= end_ms and start_ms <= e
                   for s, e in self.windows.get(concept, ()))

    def prune(self, before_ms: float) -> None:
        for concept in list(self.windows):
            kept = [w for w in self.windows[concept] if w[1] >= before_ms]
            if kept:
                self.windows[concept] = kept
            else:
                del self.windows[concept]


class BaselineTracker:
    """Per-concept EMA of population rate with a floor guard for division."""

    def __init__(self, cfg: ImpulseConfig, initial_rate_hz: float = 0.0):
        self.cfg = cfg
        self.initial_rate_hz = float(initial_rate_hz)
        self.baselines: dict[str, float] = {}

    def baseline(self, concept: str) -> float:
        return max(self.baselines.get(concept, self.initial_rate_hz),
                   self.cfg.floor_rate)

    def update(self, rates: dict[str, float], dt_s: float,
               exclusions: ExclusionLog | None = None,
               now_ms: float = 0.0) -> None:
        if dt_s <= 0:
            raise ValueError("dt must be positive")
        alpha = 1.0 - math.exp(-dt_s / self.cfg.ema_tau_s)
        for concept, rate in rates.items():
            if exclusions is not None and exclusions.is_excluded(concept, now_ms):
                continue
            prev = self.baselines.get(concept, self.initial_rate_hz)
            self.baselines[concept] = prev + alpha * (rate - prev)


class ImpulseDetector:
    """Threshold detection plus sliding-window significance with consumption."""

    def __init__(self, cfg: ImpulseConfig, tracker: BaselineTracker,
                 exclusions: ExclusionLog, start_ms: float = 0.0):
        self.cfg = cfg
        self.tracker = tracker
        self.exclusions = exclusions
        self.active_from_ms = start_ms + cfg.warmup_s * 1000.0
        self._pending: dict[str, deque[ImpulseEvent]] = {}
        self.impulse_log: list[ImpulseEvent] = []
        self.significance_log: list[SignificanceEvent] = []
        self._next_impulse_id = 0
        self._next_significance_id = 0

    def detect(self, rates: dict[str, float], now_ms: float) -> list[ImpulseEvent]:
        """One detection tick: emit at most one impulse per concept."""
        if now_ms < self.active_from_ms:
            return []
        out = []
        for concept, rate in rates.items():
            if self.exclusions.is_excluded(concept, now_ms):
                continue
            base = self.tracker.baseline(concept)
            multiplier = rate / base
            if multiplier >= self.cfg.threshold:
                ev = ImpulseEvent(concept=concept, multiplier=multiplier,
                                  rate_hz=rate, baseline_hz=base, t_ms=now_ms,
                                  event_id=self._next_impulse_id)
                self._next_impulse_id += 1
                out.append(ev)
                self.impulse_log.append(ev)
        return out

    def check_significance(self, events: list[ImpulseEvent],
                           now_ms: float) -> list[SignificanceEvent]:
        """Fold new impulses into per-concept windows; emit at threshold
        crossings. Each impulse contributes to at most one significance event."""
        window = self.cfg.significance_window_s * 1000.0
        out = []
        for ev in events:
            self._pending.setdefault(ev.concept, deque()).append(ev)
        for concept, pending in self._pending.items():
            while pending and pending[0].t_ms < now_ms - window:
                pending.popleft()
            if len(pending) >= self.cfg.significance_count:
                contributors = tuple(pending)
                pending.clear()
                sig = SignificanceEvent(
                    concept=concept, contributors=contributors,
                    window_start_ms=contributors[0].t_ms,
                    window_end_ms=contributors[-1].t_ms,
                    event_id=self._next_significance_id)
                self._next_significance_id += 1
                out.append(sig)
                self.significance_log.append(sig)
        return out

    def tick(self, rates: dict[str, float], dt_s: float,
             now_ms: float) -> tuple[list[ImpulseEvent], list[SignificanceEvent]]:
        """Full detection cadence: detect, aggregate, then update baselines."""
        impulses = self.detect(rates, now_ms)
        significant = self.check_significance(impulses, now_ms)
        self.tracker.update(rates, dt_s, self.exclusions, now_ms)
        return impulses, significant
