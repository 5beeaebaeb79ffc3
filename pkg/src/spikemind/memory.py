"""Memory stores (episodic, exact-recall facts, journal), the knowledge
graph, and offline consolidation.

Consolidation replays stored episodes through the substrate concept-first
(no sensory re-encoding), time-compressed, with dopamine set to each
episode's salience, then emits knowledge-graph edges for concept pairs
whose learned lateral coupling is strong enough to count as notable.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, asdict

import numpy as np

from .concepts import ConceptRegistry, burst_drive
from .config import CaptureConfig, MemoryConfig, StdpConfig
from .plasticity import DopamineSignal, apply_reward

__all__ = ["Episode", "FactRecord", "JournalEntry", "EpisodicStore",
           "FactStore", "JournalStore", "KnowledgeGraph",
           "retrieve_journal_context", "ConsolidationReport", "consolidate"]


@dataclass(frozen=True)
class Episode:
    """Temporal sequence of concept activations from one captured message."""

    events: tuple[tuple[str, float, float], ...]  # (label, strength, offset_ms)
    session_id: str
    salience: float
    timestamp_ms: float

    def __post_init__(self):
        if not self.events:
            raise ValueError("episode must contain at least one activation")
        offsets = [e[2] for e in self.events]
        if any(b < a for a, b in zip(offsets, offsets[1:])):
            raise ValueError("episode offsets must be nondecreasing")
        if not (0.0 <= self.salience <= 1.0):
            raise ValueError("salience must be in [0, 1]")

    @property
    def concepts(self) -> list[str]:
        return [e[0] for e in self.events]

    def to_json(self) -> dict:
        return {"events": [list(e) for e in self.events],
                "session_id": self.session_id, "salience": self.salience,
                "timestamp_ms": self.timestamp_ms}

    @classmethod
    def from_json(cls, d: dict) -> "Episode":
        return cls(events=tuple((e[0], float(e[1]), float(e[2]))
                                for e in d["events"]),
                   session_id=d["session_id"], salience=float(d["salience"]),
                   timestamp_ms=float(d["timestamp_ms"]))


@dataclass(frozen=True)
class FactRecord:
    key: str
    value: str
    timestamp_ms: float
    version: int = 1


@dataclass(frozen=True)
class JournalEntry:
    text: str
    tags: tuple[str, ...]
    timestamp_ms: float
    trigger: str  # "conversation" or "significance:<id,...>"

    def __post_init__(self):
        if not self.trigger:
            raise ValueError("journal entries need a trigger provenance")


class EpisodicStore:
    """Append-only episode log; iteration order is insertion order."""

    def __init__(self):
        self.episodes: list[Episode] = []
        self.replay_counts: dict[int, int] = {}

    def record(self, episode: Episode) -> int:
        self.episodes.append(episode)
        return len(self.episodes) - 1

    def __len__(self):
        return len(self.episodes)

    def __iter__(self):
        return iter(self.episodes)

    def save(self, path) -> None:
        with open(path, "w") as f:
            for ep in self.episodes:
                f.write(json.dumps(ep.to_json()) + "\n")

    def load(self, path) -> None:
        self.episodes = []
        with open(path) as f:
            for line in f:
                if line.strip():
                    self.episodes.append(Episode.from_json(json.loads(line)))


class FactStore:
    """Exact-match key/value store; re-storing a key overwrites it and
    increments its version. No decay, ever."""

    def __init__(self):
        self.facts: dict[str, FactRecord] = {}

    def store(self, key: str, value: str, now_ms: float) -> FactRecord:
        version = self.facts[key].version + 1 if key in self.facts else 1
        rec = FactRecord(key=key, value=value, timestamp_ms=now_ms,
                         version=version)
        self.facts[key] = rec
        return rec

    def recall(self, key: str) -> FactRecord | None:
        return self.facts.get(key)

    def save(self, path) -> None:
        with open(path, "w") as f:
            for rec in self.facts.values():
                f.write(json.dumps(asdict(rec)) + "\n")

    def load(self, path) -> None:
        self.facts = {}
        with open(path) as f:
            for line in f:
                if line.strip():
                    d = json.loads(line)
                    self.facts[d["key"]] = FactRecord(**d)


class JournalStore:
    def __init__(self):
        self.entries: list[JournalEntry] = []

    def append(self, text: str, tags, now_ms: float,
               trigger: str = "conversation") -> JournalEntry:
        if self.entries and now_ms < self.entries[-1].timestamp_ms:
            raise ValueError("journal timestamps must be monotone")
        entry = JournalEntry(text=text, tags=tuple(tags), timestamp_ms=now_ms,
                             trigger=trigger)
        self.entries.append(entry)
        return entry

    def __len__(self):
        return len(self.entries)

    def save(self, path) -> None:
        with open(path, "w") as f:
            for e in self.entries:
                f.write(json.dumps(asdict(e)) + "\n")

    def load(self, path) -> None:
        self.entries = []
        with open(path) as f:
            for line in f:
                if line.strip():
                    d = json.loads(line)
                    d["tags"] = tuple(d["tags"])
                    self.entries.append(JournalEntry(**d))


def retrieve_journal_context(store: JournalStore, recent_k: int,
                             active_concepts) -> list[JournalEntry]:
    """The recent_k newest entries plus older entries sharing a tag with the
    active concepts, deduplicated, newest first."""
    if recent_k < 0:
        raise ValueError("recent_k must be >= 0")
    newest_first = list(reversed(store.entries))
    out = newest_first[:recent_k]
    active = set(active_concepts)
    for entry in newest_first[recent_k:]:
        if active.intersection(entry.tags):
            out.append(entry)
    return out


class KnowledgeGraph:
    """Undirected weighted graph over concept labels; edge weights and
    evidence counts only ever grow."""

    def __init__(self):
        self.nodes: set[str] = set()
        self.edges: dict[tuple[str, str], dict] = {}

    @staticmethod
    def _key(a: str, b: str) -> tuple[str, str]:
        return (a, b) if a <= b else (b, a)

    def upsert_edge(self, a: str, b: str, weight: float,
                    now_ms: float) -> bool:
        """Create or strengthen an edge; returns True when newly created."""
        if a == b:
            raise ValueError("self-loops are not allowed")
        if weight <= 0:
            raise ValueError("edge weight must be positive")
        key = self._key(a, b)
        self.nodes.add(a)
        self.nodes.add(b)
        if key in self.edges:
            e = self.edges[key]
            e["weight"] = max(e["weight"], weight)
            e["evidence"] += 1
            return False
        self.edges[key] = {"weight": weight, "evidence": 1,
                           "created_at_ms": now_ms}
        return True

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["a", "b", "weight", "evidence"])
            for (a, b), e in sorted(self.edges.items()):
                writer.writerow([a, b, f"{e['weight']:.6g}", e["evidence"]])

    def to_json(self) -> dict:
        return {"nodes": sorted(self.nodes),
                "edges": [{"a": a, "b": b, **e}
                          for (a, b), e in sorted(self.edges.items())]}

    @classmethod
    def from_json(cls, d: dict) -> "KnowledgeGraph":
        kg = cls()
        kg.nodes = set(d["nodes"])
        for e in d["edges"]:
            kg.edges[(e["a"], e["b"])] = {
                "weight": e["weight"], "evidence": e["evidence"],
                "created_at_ms": e["created_at_ms"]}
        return kg


@dataclass
class ConsolidationReport:
    episodes_replayed: int
    notable_before: int
    notable_after: int
    max_weight_before: float
    max_weight_after: float
    new_edges: list[tuple[str, str]]
    t_ms: float

    @property
    def notable_ratio(self) -> float:
        if self.notable_before == 0:
            return float("inf") if self.notable_after else 1.0
        return self.notable_after / self.notable_before

    def to_json(self) -> dict:
        d = asdict(self)
        d["new_edges"] = [list(e) for e in self.new_edges]
        d["notable_ratio"] = (None if self.notable_ratio == float("inf")
                              else round(self.notable_ratio, 4))
        return d


def _interleave(episodes: list[Episode]) -> list[Episode]:
    """Round-robin across sessions, oldest first within each session."""
    by_session: dict[str, list[Episode]] = {}
    order: list[str] = []
    for ep in episodes:
        if ep.session_id not in by_session:
            by_session[ep.session_id] = []
            order.append(ep.session_id)
        by_session[ep.session_id].append(ep)
    for sid in order:
        by_session[sid].sort(key=lambda e: e.timestamp_ms)
    out = []
    while any(by_session[sid] for sid in order):
        for sid in order:
            if by_session[sid]:
                out.append(by_session[sid].pop(0))
    return out


def consolidate(substrate, stdp_runtime, registry: ConceptRegistry,
                store: EpisodicStore, kg: KnowledgeGraph,
                stdp_cfg: StdpConfig, mem_cfg: MemoryConfig,
                capture_cfg: CaptureConfig | None = None,
                capture_active: bool = False,
                replay_cycles: int = 8) -> ConsolidationReport:
    """Replay all stored episodes through the substrate with reward.

    Replay is time-compressed; STDP time constants are scaled by the same
    factor so pairing statistics match real-time capture. Afterwards, every
    replayed concept pair whose mean lateral weight in either direction
    exceeds the edge threshold gains a knowledge-graph edge.
    """
    if capture_active:
        raise RuntimeError("cannot consolidate while a capture is in progress")
    if capture_cfg is None:
        capture_cfg = CaptureConfig()
    syn = substrate.synapses
    notable_before = syn.notable_count(mem_cfg.w_notable)
    max_before = syn.max_lateral_weight()
    compression = mem_cfg.replay_compression
    tau_scale = 1.0 / compression
    cycle = capture_cfg.cycle_ms / compression
    burst = max(1.0, capture_cfg.burst_ms / compression)

    replayed_pairs: set[tuple[str, str]] = set()
    index_of = {id(ep): i for i, ep in enumerate(store.episodes)}
    ordered = _interleave(list(store.episodes))
    # one pass converts only a bounded slice of eligibility into weight, so
    # fresh episodes are swept several times; episodes consolidated on an
    # earlier night only get a single maintenance pass
    rounds = max(1, mem_cfg.replay_rounds)
    passes = {id(ep): (rounds if store.replay_counts.get(index_of[id(ep)], 0) == 0
                       else 1) for ep in ordered}
    schedule = [(index_of[id(ep)], ep) for r in range(rounds)
                for ep in ordered if passes[id(ep)] > r]
    # down-state gating: at most one spike per neuron per replay cycle.
    # Without it, strong already-learned weights echo each burst back into
    # the populations that just fired, and the echo's reversed spike order
    # re-depresses exactly the directions replay is trying to build
    substrate.refrac_override = max(substrate.refrac_steps, int(cycle) // 2)
    for idx, ep in schedule:
        bindings, offsets = [], []
        for label, _strength, offset_ms in ep.events:
            if label in registry.bindings:
                bindings.append(registry.get(label))
                offsets.append(offset_ms / compression)
        if not bindings:
            continue
        # episodes are replayed with mirrored offsets (reverse order).
        # Pairing is depression-dominant, so replaying the recorded order
        # only re-carves the already-learned direction; reverse replay
        # instead shifts weight onto the return connections, turning each
        # one-way captured chain into a recurrent assembly
        offs = [max(offsets) - o for o in offsets]
        steps = int(np.ceil(max(offs) + replay_cycles * cycle))
        nidx = np.concatenate([b.neuron_ids for b in bindings])
        onsets = np.concatenate([np.full(b.size, off)
                                 for b, off in zip(bindings, offs)])
        drive = burst_drive(substrate, nidx, onsets, steps,
                            capture_cfg.drive_rate * compression, cycle,
                            burst)
        substrate.advance(steps, drive=drive, stdp=stdp_runtime,
                          tau_scale=tau_scale)
        signal = DopamineSignal(magnitude=ep.salience,
                                source="consolidation_replay",
                                t_ms=float(substrate.t_ms))
        apply_reward(syn, signal, stdp_cfg, float(substrate.t_ms),
                     tau_eligibility=stdp_cfg.tau_eligibility * tau_scale)
        labels = [b.label for b in bindings]
        for i in range(len(labels)):
            for j in range(i + 1, len(labels)):
                replayed_pairs.add((labels[i], labels[j]))
        store.replay_counts[idx] = store.replay_counts.get(idx, 0) + 1
    substrate.refrac_override = None

    new_edges = []
    now = float(substrate.t_ms)
    for a, b in sorted(replayed_pairs):
        w = max(registry.population_mean_weight(a, b),
                registry.population_mean_weight(b, a))
        if w > mem_cfg.kg_edge_threshold:
            if kg.upsert_edge(a, b, w, now):
                new_edges.append((a, b))

    return ConsolidationReport(
        episodes_replayed=len(ordered),
        notable_before=notable_before,
        notable_after=syn.notable_count(mem_cfg.w_notable),
        max_weight_before=max_before,
        max_weight_after=syn.max_lateral_weight(),
        new_edges=new_edges,
        t_ms=now)
