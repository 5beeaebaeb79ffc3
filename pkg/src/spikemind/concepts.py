"""Concept bindings: namespaced labels mapped to reserved L2 populations,
plus the conversation-capture stimulation schedule (person leads topics)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import CaptureConfig, ConfigurationError
from .substrate import Drive, SpikeRecord, Substrate

__all__ = ["ConceptBinding", "ConceptRegistry", "StimulationPlan",
           "build_capture_drive", "population_rate"]

NAMESPACES = ("person", "topic", "self")


class BindingError(ValueError):
    pass


@dataclass(frozen=True)
class ConceptBinding:
    label: str
    neuron_ids: np.ndarray   # global L2 indices
    created_at_ms: int
    concept_index: int

    @property
    def size(self) -> int:
        return self.neuron_ids.shape[0]


def _check_label(label: str) -> None:
    if ":" not in label:
        raise BindingError(f"label {label!r} must be namespaced (namespace:name)")
    ns = label.split(":", 1)[0]
    if ns not in NAMESPACES:
        raise BindingError(f"unknown namespace {ns!r} in {label!r}")


class ConceptRegistry:
    """Allocates disjoint L2 populations to labels; writes the substrate's
    neuron -> concept map used for spike counting."""

    def __init__(self, substrate: Substrate, seed: int):
        self.substrate = substrate
        lo, hi = substrate.bounds("L2_concept")
        self._l2_lo, self._l2_hi = lo, hi
        self._free = np.arange(lo, hi, dtype=np.int64)
        self._rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xC0CE]))
        self.bindings: dict[str, ConceptBinding] = {}
        self.labels: list[str] = []

    @property
    def free_count(self) -> int:
        return self._free.shape[0]

    def bind(self, label: str, size: int) -> ConceptBinding:
        _check_label(label)
        if label in self.bindings:
            raise BindingError(f"label {label!r} is already bound")
        if size < 1:
            raise BindingError("population size must be >= 1")
        if size > self._free.shape[0]:
            raise BindingError(
                f"concept layer exhausted: need {size}, {self._free.shape[0]} free")
        pick = self._rng.choice(self._free.shape[0], size=size, replace=False)
        ids = np.sort(self._free[pick])
        mask = np.ones(self._free.shape[0], dtype=bool)
        mask[pick] = False
        self._free = self._free[mask]
        index = len(self.labels)
        binding = ConceptBinding(label=label, neuron_ids=ids,
                                 created_at_ms=self.substrate.t_ms,
                                 concept_index=index)
        self.bindings[label] = binding
        self.labels.append(label)
        self.substrate.concept_of[ids] = index
        return binding

    def get(self, label: str) -> ConceptBinding:
        if label not in self.bindings:
            raise BindingError(f"unknown concept {label!r}")
        return self.bindings[label]

    def ensure(self, label: str, size: int) -> ConceptBinding:
        if label in self.bindings:
            return self.bindings[label]
        return self.bind(label, size)

    def population_mean_weight(self, a: str, b: str) -> float:
        """Mean lateral weight over existing synapses from population a to b."""
        lat = self.substrate.synapses.lateral
        n = lat.size
        if n == 0:
            return 0.0
        mask = np.isin(lat.pre[:n], self.get(a).neuron_ids) \
            & np.isin(lat.post[:n], self.get(b).neuron_ids)
        w = lat.w[:n][mask]
        return float(w.mean()) if w.shape[0] else 0.0


@dataclass
class StimulationPlan:
    """Drive schedule for one captured message.

    Stimulation is delivered in repeating cycles: within each cycle the
    person population bursts first, then each topic at its staggered
    offset. Repeating the lead relationship every cycle (rather than only
    at message onset) is what makes the pre-before-post timing visible to
    STDP throughout the message.
    """

    person: ConceptBinding | None
    topics: list[ConceptBinding]
    self_concepts: list[ConceptBinding] = field(default_factory=list)
    lead_offset_ms: float = 15.0
    topic_stagger_ms: float = 25.0
    drive_rate_hz: float = 80.0
    duration_ms: float = 1500.0
    cycle_ms: float = 100.0
    burst_ms: float = 5.0

    def __post_init__(self):
        if not (0.0 < self.lead_offset_ms):
            raise ConfigurationError("lead_offset_ms must be positive")
        if self.burst_ms <= 0 or self.cycle_ms <= self.burst_ms:
            raise ConfigurationError("need 0 < burst_ms < cycle_ms")

    def driven_bindings(self) -> list[ConceptBinding]:
        out = [self.person] if self.person is not None else []
        return out + list(self.topics) + list(self.self_concepts)

    def offsets(self) -> list[tuple[ConceptBinding, float]]:
        """(binding, within-cycle onset) pairs in stimulation order."""
        out = []
        if self.person is not None:
            out.append((self.person, 0.0))
        for i, topic in enumerate(self.topics):
            out.append((topic, self.lead_offset_ms + i * self.topic_stagger_ms))
        base = self.lead_offset_ms + len(self.topics) * self.topic_stagger_ms
        for i, sc in enumerate(self.self_concepts):
            out.append((sc, base + i * self.topic_stagger_ms))
        return out

    @classmethod
    def from_config(cls, cfg: CaptureConfig, person, topics, self_concepts=()):
        return cls(person=person, topics=list(topics),
                   self_concepts=list(self_concepts),
                   lead_offset_ms=cfg.lead_offset_ms,
                   topic_stagger_ms=cfg.topic_stagger_ms,
                   drive_rate_hz=cfg.drive_rate,
                   duration_ms=cfg.message_duration_ms,
                   cycle_ms=cfg.cycle_ms,
                   burst_ms=cfg.burst_ms)


def burst_drive(substrate: Substrate, idx: np.ndarray, onsets: np.ndarray,
                steps: int, rate_hz: float, cycle_ms: float,
                burst_ms: float) -> Drive:
    """Cyclic burst events: neuron j may fire only in the burst window at
    its onset within each cycle; in-window event probability is scaled so
    the mean rate matches rate_hz (capped by the burst duty cycle)."""
    p = min(1.0, rate_hz / 1000.0 * cycle_ms / burst_ms)
    rnd = substrate.rng.random((steps, idx.shape[0]))
    t = np.arange(steps, dtype=np.float64)[:, None]
    phase = np.mod(t - onsets[None, :], cycle_ms)
    active = (t >= onsets[None, :]) & (phase < burst_ms)
    events = ((rnd < p) & active).astype(np.uint8)
    amp = 1.5 * (substrate.lif.v_threshold - substrate.lif.v_reset)
    return Drive(idx=idx, amp=np.full(idx.shape[0], amp), events=events)


def build_capture_drive(substrate: Substrate, plan: StimulationPlan) -> Drive:
    """Concept-population drive with person-before-topic burst timing."""
    steps = int(plan.duration_ms)
    pairs = plan.offsets()
    if not pairs:
        return substrate._empty_drive
    idx = np.concatenate([b.neuron_ids for b, _ in pairs])
    onsets = np.concatenate([np.full(b.size, off) for b, off in pairs])
    return burst_drive(substrate, idx, onsets, steps, plan.drive_rate_hz,
                       plan.cycle_ms, plan.burst_ms)


def population_rate(record: SpikeRecord, binding: ConceptBinding,
                    window_ms: float | None = None) -> float:
    """Population firing rate in Hz: spikes / (window * population size)."""
    if window_ms is None:
        window_ms = record.t_end - record.t_start
    if window_ms <= 0:
        raise ConfigurationError("window must be positive")
    t_lo = record.t_end - window_ms
    in_window = record.times >= t_lo
    spikes = int(np.isin(record.ids[in_window], binding.neuron_ids).sum())
    return spikes / (binding.size * window_ms / 1000.0)
