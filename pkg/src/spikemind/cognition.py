"""Soul state, reflection contexts, the reasoning-engine abstraction, and
the mind orchestrator that ties capture, idle detection, heartbeat, and
memory together.

The substrate decides *when* to think (significance events gate every
engine call); the engine decides *what* to do, constrained to a fixed
action vocabulary. A deterministic mock engine stands in for an LLM so the
end-to-end dynamics are reproducible.
"""

from __future__ import annotations

import json
import os
import urllib.request
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import plasticity
from .concepts import ConceptRegistry, StimulationPlan, build_capture_drive
from .config import ConfigurationError, MindConfig
from .encoding import DirectionSet, encode, generate_directions
from .impulse import (BaselineTracker, ExclusionLog, ImpulseDetector,
                      SignificanceEvent)
from .memory import (ConsolidationReport, Episode, EpisodicStore, FactStore,
                     JournalStore, KnowledgeGraph, consolidate,
                     retrieve_journal_context)
from .plasticity import DopamineSignal, StdpRuntime, apply_reward, cascade_decay
from .substrate import Substrate, default_layers

__all__ = ["SoulState", "ReflectionContext", "ActionDecision", "ActionError",
           "CaptureError", "MockEngine", "HttpEngine", "Mind", "ACTIONS"]

ACTIONS = ("journal", "reach_out", "continue", "silent")


class ActionError(ValueError):
    """A reasoning-engine decision violated the action contract."""


class CaptureError(RuntimeError):
    """Message capture failed before any state was mutated."""


@dataclass(frozen=True)
class SoulState:
    """Identity context injected into every reflection.

    immutable_values has no mutating operation anywhere in the codebase;
    the tuple plus the frozen dataclass enforce that it never changes.
    """

    drives: tuple[str, ...]
    immutable_values: tuple[str, ...]
    heuristics: tuple[str, ...]
    identity_text: str

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, d: dict) -> "SoulState":
        return cls(drives=tuple(d["drives"]),
                   immutable_values=tuple(d["immutable_values"]),
                   heuristics=tuple(d["heuristics"]),
                   identity_text=d["identity_text"])


def default_soul() -> SoulState:
    return SoulState(
        drives=("curiosity", "connection", "growth"),
        immutable_values=("honesty", "respect boundaries", "do no harm"),
        heuristics=("prefer reflection before outreach",
                    "journal uncertainty rather than act on it"),
        identity_text="An associative mind that notices what resurfaces "
                      "unbidden and reflects before acting.",
    )


@dataclass(frozen=True)
class ReflectionContext:
    soul: SoulState
    significance: tuple[SignificanceEvent, ...]
    journal_context: tuple
    recent_episodes: tuple[str, ...]
    timestamp_ms: float
    available_actions: tuple[str, ...] = ACTIONS


@dataclass(frozen=True)
class ActionDecision:
    action: str
    content: str = ""
    target: str | None = None
    provenance: tuple[int, ...] = ()

    def validate(self, require_provenance: bool = True) -> "ActionDecision":
        if self.action not in ACTIONS:
            raise ActionError(f"unknown action {self.action!r}")
        if self.action == "silent" and self.content:
            raise ActionError("silent decisions carry no content")
        if self.action != "silent" and not self.content:
            raise ActionError(f"{self.action} requires content")
        if self.action == "reach_out" and not self.target:
            raise ActionError("reach_out requires a target person")
        if self.action != "reach_out" and self.target:
            raise ActionError("only reach_out carries a target")
        if require_provenance and not self.provenance:
            raise ActionError("heartbeat decisions need significance provenance")
        return self


class MockEngine:
    """Deterministic stand-in for the LLM backend.

    Policy: a person-namespace significance at or above the reach-out
    multiplier triggers reach_out to that person, mentioning the strongest
    co-significant topic; anything else becomes a journal entry listing
    the significance concepts and multipliers. Replies are templated
    echoes embedding the active concept labels.
    """

    engine_id = "mock"

    def __init__(self, reach_out_multiplier: float = 15.0):
        self.reach_out_multiplier = reach_out_multiplier

    def respond(self, context: ReflectionContext) -> ActionDecision:
        provenance = tuple(s.event_id for s in context.significance)
        persons = [s for s in context.significance
                   if s.concept.startswith("person:")
                   and s.max_multiplier >= self.reach_out_multiplier]
        if persons:
            best = max(persons, key=lambda s: (s.max_multiplier, s.concept))
            topics = [s for s in context.significance
                      if s.concept.startswith("topic:")]
            if topics:
                topic = max(topics, key=lambda s: (s.max_multiplier, s.concept))
                about = topic.concept.split(":", 1)[1]
            else:
                about = "our recent conversations"
            name = best.concept.split(":", 1)[1]
            return ActionDecision(
                action="reach_out",
                content=f"Hey {name} — {about} keeps coming back to me. "
                        f"Wanted to pick that thread up again.",
                target=best.concept,
                provenance=provenance)
        listing = "; ".join(
            f"{s.concept} at {s.max_multiplier:.1f}x baseline"
            for s in context.significance)
        return ActionDecision(
            action="journal",
            content=f"Unprompted resurfacing noticed: {listing}.",
            provenance=provenance)

    def chat(self, message: str, active_concepts: list[str]) -> str:
        if active_concepts:
            return (f"Noted — thinking about {', '.join(active_concepts)} "
                    f"while taking that in.")
        return "Noted."


class HttpEngine:
    """Chat-style JSON-over-HTTP adapter; disabled by default, never used in
    tests.

    Request: POST {"context": {...}} — response must be a JSON object with
    keys action/content/target/provenance matching the decision schema.
    Credentials come from the named environment variable, sent as a bearer
    token.
    """

    engine_id = "http"

    def __init__(self, url: str, auth_env: str = "REASONING_ENGINE_TOKEN",
                 timeout_s: float = 30.0):
        self.url = url
        self.auth_env = auth_env
        self.timeout_s = timeout_s

    def _post(self, payload: dict) -> dict:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.auth_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        req = urllib.request.Request(self.url, data=json.dumps(payload).encode(),
                                     headers=headers, method="POST")
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            return json.loads(resp.read().decode())

    def respond(self, context: ReflectionContext) -> ActionDecision:
        payload = {"context": {
            "soul": context.soul.to_json(),
            "significance": [s.to_json() for s in context.significance],
            "journal": [asdict(e) for e in context.journal_context],
            "recent_episodes": list(context.recent_episodes),
            "available_actions": list(context.available_actions),
            "timestamp_ms": context.timestamp_ms,
        }}
        d = self._post(payload)
        return ActionDecision(action=d.get("action", ""),
                              content=d.get("content", ""),
                              target=d.get("target"),
                              provenance=tuple(d.get("provenance", ())))

    def chat(self, message: str, active_concepts: list[str]) -> str:
        d = self._post({"message": message, "active": active_concepts})
        return d.get("reply", "")


class Mind:
    """Single-writer orchestrator over the substrate and memory stores."""

    DEFAULT_DETAIL_S = 900.0

    def __init__(self, config: MindConfig, engine=None, embedder=None,
                 soul: SoulState | None = None, _calibrate: bool | None = None):
        self.config = config
        self.engine = engine or MockEngine(config.cognition.reach_out_multiplier)
        self.embedder = embedder
        self.soul = soul or default_soul()

        layers = default_layers(config.scale)
        self.substrate = Substrate(layers, config.lif, config.connectivity,
                                   config.seed)
        self.directions = generate_directions(
            self.substrate.layer_size("L1_sensory"), config.embedding_dim,
            config.seed)
        self.registry = ConceptRegistry(self.substrate, config.seed)
        self.stdp = StdpRuntime(self.substrate, config.stdp)
        self.exclusions = ExclusionLog(config.impulse.guard_margin_s * 1000.0)
        self.tracker = BaselineTracker(config.impulse,
                                       initial_rate_hz=config.calibrate_rate_hz)
        self.detector = ImpulseDetector(config.impulse, self.tracker,
                                        self.exclusions)

        self.episodes = EpisodicStore()
        self.facts = FactStore()
        self.journal = JournalStore()
        self.kg = KnowledgeGraph()

        self.significance_queue: list[SignificanceEvent] = []
        self._requeued: set[int] = set()
        self.outbox: list[dict] = []
        self.action_log: list[dict] = []
        self.incident_log: list[dict] = []
        self.active_conversation: list[str] | None = None

        self._last_counts = self.substrate.concept_counts.copy()
        self._last_decay_ms = 0.0

        do_cal = config.calibrate if _calibrate is None else _calibrate
        if config.snn_enabled and do_cal:
            self.calibrated_bias = self.substrate.calibrate_bias(
                config.calibrate_rate_hz)
        else:
            self.calibrated_bias = self.substrate.bias

    # --- clock helpers --------------------------------------------------
    @property
    def now_ms(self) -> float:
        return float(self.substrate.t_ms)

    def _maybe_decay(self, force: bool = False) -> int:
        elapsed = self.now_ms - self._last_decay_ms
        if elapsed <= 0:
            return 0
        if force or elapsed >= self.config.decay.cadence_s * 1000.0:
            pruned = cascade_decay(self.substrate.synapses, elapsed,
                                   self.config.decay, self.config.stdp.w_max)
            self._last_decay_ms = self.now_ms
            return pruned
        return 0

    # --- concept measurement --------------------------------------------
    def _concept_rates(self, window_s: float) -> dict[str, float]:
        counts = self.substrate.concept_counts
        rates = {}
        for label in self.registry.labels:
            b = self.registry.get(label)
            delta = counts[b.concept_index] - self._last_counts[b.concept_index]
            rates[label] = float(delta) / (b.size * window_s)
        self._last_counts[:] = counts
        return rates

    def _reset_rate_window(self) -> None:
        self._last_counts[:] = self.substrate.concept_counts

    # --- conversation ---------------------------------------------------
    def ensure_concept(self, label: str):
        return self.registry.ensure(label, self.config.capture.population_size)

    def converse(self, text: str, person: str | None = None,
                 topics=(), self_concepts=(), salience: float | None = None,
                 session_id: str = "session-0", annotations: dict | None = None,
                 embedding: np.ndarray | None = None) -> str:
        """Capture one message end-to-end and return the engine's reply.

        Embedding failures abort before any substrate or store mutation.
        """
        cfg = self.config
        if salience is None:
            salience = cfg.capture.default_salience
        if embedding is None:
            if self.embedder is None:
                raise CaptureError("no embedding provider configured")
            try:
                embedding = self.embedder.embed(text, annotations or {})
            except Exception as exc:
                raise CaptureError(f"embedding provider failed: {exc}") from exc
        pattern = encode(embedding, self.directions, cfg.encoder)

        person_b = self.ensure_concept(person) if person else None
        topic_bs = [self.ensure_concept(t) for t in topics]
        self_bs = [self.ensure_concept(s) for s in self_concepts]

        plan = StimulationPlan.from_config(cfg.capture, person_b, topic_bs,
                                           self_bs)
        t0 = self.now_ms
        duration = cfg.capture.message_duration_ms

        if cfg.snn_enabled:
            drive = self.substrate.merge_drives(
                self.substrate.pattern_drive(pattern, int(duration)),
                build_capture_drive(self.substrate, plan))
            for b in plan.driven_bindings():
                self.exclusions.add(b.label, t0, t0 + duration)
            self.substrate.advance(int(duration), drive=drive, stdp=self.stdp)
            apply_reward(self.substrate.synapses,
                         DopamineSignal(magnitude=salience, t_ms=self.now_ms),
                         cfg.stdp, self.now_ms)
            self._maybe_decay()
            self._reset_rate_window()

        events = []
        if person_b is not None:
            events.append((person_b.label, 1.0, 0.0))
        for i, b in enumerate(topic_bs):
            events.append((b.label, 1.0,
                           cfg.capture.lead_offset_ms + i * cfg.capture.topic_stagger_ms))
        base = cfg.capture.lead_offset_ms + len(topic_bs) * cfg.capture.topic_stagger_ms
        for i, b in enumerate(self_bs):
            events.append((b.label, 1.0, base + i * cfg.capture.topic_stagger_ms))
        if events:
            self.episodes.record(Episode(events=tuple(events),
                                         session_id=session_id,
                                         salience=salience,
                                         timestamp_ms=t0))
        active = [b.label for b in plan.driven_bindings()]
        self.active_conversation = active
        return self.engine.chat(text, active)

    def end_session(self) -> None:
        self.active_conversation = None

    # --- heartbeat and actions -------------------------------------------
    def _reflection_context(self, events) -> ReflectionContext:
        active = sorted({s.concept for s in events})
        journal_ctx = retrieve_journal_context(
            self.journal, self.config.memory.journal_recent_k, active)
        recent = tuple(
            " -> ".join(ep.concepts)
            for ep in self.episodes.episodes[-self.config.memory.journal_recent_k:])
        return ReflectionContext(soul=self.soul, significance=tuple(events),
                                 journal_context=tuple(journal_ctx),
                                 recent_episodes=recent,
                                 timestamp_ms=self.now_ms)

    def heartbeat_tick(self) -> ActionDecision | None:
        """Convert queued significance events into at most one engine call."""
        if not self.significance_queue:
            return None
        events = tuple(self.significance_queue)
        self.significance_queue.clear()
        context = self._reflection_context(events)
        try:
            decision = self.engine.respond(context).validate()
        except Exception as exc:
            self.incident_log.append({
                "t_ms": self.now_ms, "error": str(exc),
                "significance_ids": [s.event_id for s in events]})
            fresh = [s for s in events if s.event_id not in self._requeued]
            self._requeued.update(s.event_id for s in fresh)
            self.significance_queue.extend(fresh)
            return None
        self.dispatch(decision)
        return decision

    def dispatch(self, decision: ActionDecision) -> None:
        entry = {"t_ms": self.now_ms, "action": decision.action,
                 "target": decision.target,
                 "provenance": list(decision.provenance)}
        trigger = "significance:" + ",".join(map(str, decision.provenance)) \
            if decision.provenance else "conversation"
        if decision.action == "journal":
            tags = self._provenance_tags(decision)
            self.journal.append(decision.content, tags, self.now_ms, trigger)
        elif decision.action == "reach_out":
            self.outbox.append({"t_ms": self.now_ms, "target": decision.target,
                                "content": decision.content,
                                "provenance": list(decision.provenance)})
        elif decision.action == "continue":
            if self.active_conversation is not None:
                entry["continuation"] = decision.content
            else:
                entry["downgraded"] = "journal"
                self.journal.append(decision.content,
                                    self._provenance_tags(decision),
                                    self.now_ms, trigger)
        # silent: provenance-only log entry
        self.action_log.append(entry)

    def _provenance_tags(self, decision: ActionDecision) -> tuple[str, ...]:
        by_id = {s.event_id: s for s in self.detector.significance_log}
        return tuple(sorted({by_id[i].concept for i in decision.provenance
                             if i in by_id}))

    # --- idle -----------------------------------------------------------
    def run_idle(self, duration_s: float, detail_s: float | None = None) -> dict:
        """Idle with detection hooks.

        The first ``detail_s`` seconds run full spiking dynamics with the
        detection, decay, and heartbeat cadences; the remainder is
        fast-forwarded analytically (homeostatic decay applied in one pass,
        baselines relaxed toward the calibrated idle rate, clock skipped) —
        no impulses can arise there by construction.
        """
        cfg = self.config
        report = {"impulses": 0, "significance": 0, "actions": 0,
                  "pruned": 0, "duration_s": duration_s}
        if not cfg.snn_enabled:
            self.substrate.skip_time(int(duration_s * 1000))
            self._last_decay_ms = self.now_ms
            return report
        detail = min(duration_s,
                     self.DEFAULT_DETAIL_S if detail_s is None else detail_s)
        cadence = cfg.impulse.cadence_s
        since_hb = 0.0
        elapsed = 0.0
        self._reset_rate_window()
        window = min(cfg.impulse.rate_window_s, cadence)
        while elapsed + 1e-9 < detail:
            step = min(cadence, detail - elapsed)
            # no pairing during idle: with no capture there is no dopamine,
            # so idle eligibility (tau ~2 s) could never reach a reward
            lead = max(step - window, 0.0)
            if lead > 0:
                self.substrate.advance(int(lead * 1000))
                self._reset_rate_window()
            # the tick rate is measured over a short trailing window so brief
            # reactivation events register instead of averaging away
            self.substrate.advance(int((step - lead) * 1000))
            elapsed += step
            since_hb += step
            rates = self._concept_rates(step - lead)
            impulses, sigs = self.detector.tick(rates, step, self.now_ms)
            report["impulses"] += len(impulses)
            report["significance"] += len(sigs)
            self.significance_queue.extend(sigs)
            report["pruned"] += self._maybe_decay()
            if since_hb >= cfg.cognition.heartbeat_s:
                since_hb = 0.0
                if self.heartbeat_tick() is not None:
                    report["actions"] += 1
        remaining = duration_s - detail
        if remaining > 0:
            self.substrate.skip_time(int(remaining * 1000))
            report["pruned"] += self._maybe_decay(force=True)
            alpha = 1.0 - np.exp(-remaining / cfg.impulse.ema_tau_s)
            idle = cfg.calibrate_rate_hz
            for label, b in self.tracker.baselines.items():
                self.tracker.baselines[label] = b + alpha * (idle - b)
            self._reset_rate_window()
        report["pruned"] += self._maybe_decay(force=True)
        self.exclusions.prune(self.now_ms - 2 * cfg.impulse.significance_window_s * 1000)
        return report

    # --- consolidation --------------------------------------------------
    def sleep(self) -> "ConsolidationReport":
        if not self.config.snn_enabled:
            # nothing to replay into: episodes stay in the store untouched
            return ConsolidationReport(
                episodes_replayed=0, notable_before=0, notable_after=0,
                max_weight_before=0.0, max_weight_after=0.0,
                new_edges=[], t_ms=self.now_ms)
        report = consolidate(self.substrate, self.stdp, self.registry,
                             self.episodes, self.kg, self.config.stdp,
                             self.config.memory, self.config.capture,
                             capture_active=self.active_conversation is not None)
        self._last_decay_ms = self.now_ms
        self._reset_rate_window()
        return report

    # --- metrics --------------------------------------------------------
    def metrics(self) -> dict:
        syn = self.substrate.synapses
        counts = {a: 0 for a in ACTIONS}
        for entry in self.action_log:
            counts[entry["action"]] += 1
        return {
            "t_ms": self.now_ms,
            "notable_connections": syn.notable_count(self.config.memory.w_notable),
            "max_lateral_weight": syn.max_lateral_weight(),
            "max_ff_weight": syn.max_ff_weight(),
            "kg_nodes": self.kg.node_count,
            "kg_edges": self.kg.edge_count,
            "impulse_count": len(self.detector.impulse_log),
            "significance_count": len(self.detector.significance_log),
            "action_counts": counts,
            "reach_out_count": len(self.outbox),
        }

    # --- persistence ----------------------------------------------------
    def save(self, path) -> None:
        """Write a complete snapshot (arrays + JSON sidecar) to a directory."""
        path = Path(path)
        path.mkdir(parents=True, exist_ok=True)
        sub = self.substrate
        lat = sub.synapses.lateral
        n = lat.size
        np.savez_compressed(
            path / "state.npz",
            v=sub.v, refrac=sub.refrac, adapt=sub.adapt,
            buf_a=sub.buf_a, buf_b=sub.buf_b,
            concept_of=sub.concept_of, concept_counts=sub.concept_counts,
            lat_pre=lat.pre[:n], lat_post=lat.post[:n], lat_w=lat.w[:n],
            lat_elig=lat.elig[:n], lat_elig_t=lat.elig_t[:n],
            lat_created=lat.created[:n], lat_updated=lat.updated[:n],
            ff23_w=sub.synapses.ff23.w, ff23_elig=sub.synapses.ff23.elig,
            ff23_elig_t=sub.synapses.ff23.elig_t,
            ff34_w=sub.synapses.ff34.w, ff34_elig=sub.synapses.ff34.elig,
            ff34_elig_t=sub.synapses.ff34.elig_t,
            stdp_last_spike=self.stdp.last_spike,
            stdp_ring_t=self.stdp.ring_t, stdp_ring_id=self.stdp.ring_id,
            stdp_visited=self.stdp.visited,
            last_counts=self._last_counts,
            bindings_ids=np.concatenate(
                [self.registry.get(l).neuron_ids for l in self.registry.labels])
            if self.registry.labels else np.zeros(0, dtype=np.int64),
        )
        det = self.detector
        meta = {
            "config": self.config.to_dict(),
            "t_ms": sub.t_ms,
            "bias": sub.bias,
            "lcg_state": int(sub.lcg_state),
            "drive_rng": sub.rng.bit_generator.state,
            "registry_rng": self.registry._rng.bit_generator.state,
            "last_decay_ms": self._last_decay_ms,
            "soul": self.soul.to_json(),
            "bindings": [
                {"label": l, "size": self.registry.get(l).size,
                 "created_at_ms": self.registry.get(l).created_at_ms}
                for l in self.registry.labels],
            "stdp": {"ring_head": self.stdp.ring_head,
                     "visit_ctr": self.stdp.visit_ctr},
            "tracker": {"baselines": self.tracker.baselines,
                        "initial_rate_hz": self.tracker.initial_rate_hz},
            "exclusions": self.exclusions.windows,
            "detector": {
                "active_from_ms": det.active_from_ms,
                "next_impulse_id": det._next_impulse_id,
                "next_significance_id": det._next_significance_id,
                "impulse_log": [
                    {"concept": e.concept, "multiplier": e.multiplier,
                     "rate": e.rate_hz, "baseline": e.baseline_hz,
                     "t_ms": e.t_ms, "id": e.event_id}
                    for e in det.impulse_log],
                "significance_log": [
                    {"concept": s.concept, "event_id": s.event_id,
                     "window_start_ms": s.window_start_ms,
                     "window_end_ms": s.window_end_ms,
                     "contributor_ids": [e.event_id for e in s.contributors]}
                    for s in det.significance_log],
                "pending": {c: [e.event_id for e in q]
                            for c, q in det._pending.items() if q},
            },
            "queue": [s.event_id for s in self.significance_queue],
            "requeued": sorted(self._requeued),
            "episodes": [ep.to_json() for ep in self.episodes],
            "replay_counts": self.episodes.replay_counts,
            "facts": [asdict(r) for r in self.facts.facts.values()],
            "journal": [asdict(e) for e in self.journal.entries],
            "kg": self.kg.to_json(),
            "outbox": self.outbox,
            "action_log": self.action_log,
            "incident_log": self.incident_log,
            "active_conversation": self.active_conversation,
            "calibrated_bias": self.calibrated_bias,
        }
        (path / "state.json").write_text(json.dumps(meta, indent=1))

    @classmethod
    def load(cls, path, engine=None, embedder=None) -> "Mind":
        from .impulse import ImpulseEvent  # local: reconstruction only

        path = Path(path)
        meta = json.loads((path / "state.json").read_text())
        arrays = np.load(path / "state.npz")
        config = MindConfig.from_dict(meta["config"])
        mind = cls(config, engine=engine, embedder=embedder,
                   soul=SoulState.from_json(meta["soul"]), _calibrate=False)
        sub = mind.substrate
        sub.v[:] = arrays["v"]
        sub.refrac[:] = arrays["refrac"]
        sub.adapt[:] = arrays["adapt"]
        sub.buf_a[:] = arrays["buf_a"]
        sub.buf_b[:] = arrays["buf_b"]
        sub.concept_of[:] = arrays["concept_of"]
        sub.concept_counts[:] = arrays["concept_counts"]
        sub.t_ms = int(meta["t_ms"])
        sub.bias = float(meta["bias"])
        mind.calibrated_bias = float(meta["calibrated_bias"])
        sub.lcg_state = np.uint64(meta["lcg_state"])
        state = meta["drive_rng"]
        state["state"]["state"] = int(state["state"]["state"])
        state["state"]["inc"] = int(state["state"]["inc"])
        sub.rng.bit_generator.state = state
        rstate = meta["registry_rng"]
        rstate["state"]["state"] = int(rstate["state"]["state"])
        rstate["state"]["inc"] = int(rstate["state"]["inc"])
        mind.registry._rng.bit_generator.state = rstate
        mind._last_decay_ms = float(meta["last_decay_ms"])

        lat = sub.synapses.lateral
        n = arrays["lat_pre"].shape[0]
        while lat.capacity < n + 1:
            lat.grow()
        for name, arr in (("pre", "lat_pre"), ("post", "lat_post"),
                          ("w", "lat_w"), ("elig", "lat_elig"),
                          ("elig_t", "lat_elig_t"), ("created", "lat_created"),
                          ("updated", "lat_updated")):
            getattr(lat, name)[:n] = arrays[arr]
        lat.size = n
        for i in range(n):
            lat.map[int(lat.pre[i]) * lat.n_total + int(lat.post[i])] = i
        for proj, tag in ((sub.synapses.ff23, "ff23"), (sub.synapses.ff34, "ff34")):
            proj.w[:] = arrays[f"{tag}_w"]
            proj.elig[:] = arrays[f"{tag}_elig"]
            proj.elig_t[:] = arrays[f"{tag}_elig_t"]
        sub.synapses.mark_dirty()

        mind.stdp.last_spike[:] = arrays["stdp_last_spike"]
        mind.stdp.ring_t[:] = arrays["stdp_ring_t"]
        mind.stdp.ring_id[:] = arrays["stdp_ring_id"]
        mind.stdp.visited[:] = arrays["stdp_visited"]
        mind.stdp.ring_head = int(meta["stdp"]["ring_head"])
        mind.stdp.visit_ctr = int(meta["stdp"]["visit_ctr"])
        mind._last_counts[:] = arrays["last_counts"]

        from .concepts import ConceptBinding
        ids = arrays["bindings_ids"]
        pos = 0
        used = []
        for idx, b in enumerate(meta["bindings"]):
            nids = ids[pos:pos + b["size"]].copy()
            pos += b["size"]
            used.append(nids)
            binding = ConceptBinding(label=b["label"], neuron_ids=nids,
                                     created_at_ms=int(b["created_at_ms"]),
                                     concept_index=idx)
            mind.registry.bindings[b["label"]] = binding
            mind.registry.labels.append(b["label"])
        if used:
            taken = np.concatenate(used)
            mind.registry._free = mind.registry._free[
                ~np.isin(mind.registry._free, taken)]

        mind.tracker.baselines = dict(meta["tracker"]["baselines"])
        mind.tracker.initial_rate_hz = float(meta["tracker"]["initial_rate_hz"])
        mind.exclusions.windows = {
            c: [tuple(w) for w in ws] for c, ws in meta["exclusions"].items()}
        det = mind.detector
        d = meta["detector"]
        det.active_from_ms = float(d["active_from_ms"])
        det._next_impulse_id = int(d["next_impulse_id"])
        det._next_significance_id = int(d["next_significance_id"])
        det.impulse_log = [
            ImpulseEvent(concept=e["concept"], multiplier=e["multiplier"],
                         rate_hz=e["rate"], baseline_hz=e["baseline"],
                         t_ms=e["t_ms"], event_id=e["id"])
            for e in d["impulse_log"]]
        by_id = {e.event_id: e for e in det.impulse_log}
        det.significance_log = [
            SignificanceEvent(concept=s["concept"],
                              contributors=tuple(by_id[i]
                                                 for i in s["contributor_ids"]),
                              window_start_ms=s["window_start_ms"],
                              window_end_ms=s["window_end_ms"],
                              event_id=s["event_id"])
            for s in d["significance_log"]]
        from collections import deque
        det._pending = {c: deque(by_id[i] for i in ids_)
                        for c, ids_ in d["pending"].items()}
        sig_by_id = {s.event_id: s for s in det.significance_log}
        mind.significance_queue = [sig_by_id[i] for i in meta["queue"]]
        mind._requeued = set(meta["requeued"])

        for ep in meta["episodes"]:
            mind.episodes.record(Episode.from_json(ep))
        mind.episodes.replay_counts = {int(k): v for k, v
                                       in meta["replay_counts"].items()}
        from .memory import FactRecord, JournalEntry
        for r in meta["facts"]:
            mind.facts.facts[r["key"]] = FactRecord(**r)
        for e in meta["journal"]:
            e["tags"] = tuple(e["tags"])
            mind.journal.entries.append(JournalEntry(**e))
        mind.kg = KnowledgeGraph.from_json(meta["kg"])
        mind.outbox = list(meta["outbox"])
        mind.action_log = list(meta["action_log"])
        mind.incident_log = list(meta["incident_log"])
        mind.active_conversation = meta["active_conversation"]
        return mind
