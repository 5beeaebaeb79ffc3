"""Protocol harness: embedding providers, scripted conversation replay on a
simulated clock, milestone tracking, and metrics/report export.

The bundled default script mirrors the reference experiment shape: 25 user
messages over five topic domains across three days, with cross-domain
bridge sessions, two deliberately unresolved threads, 8-hour idle windows,
and nightly sleep consolidation.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cognition import Mind, MockEngine
from .config import MindConfig

__all__ = ["SyntheticEmbedder", "FileEmbedder", "RemoteEmbedder",
           "ProtocolScript", "ScriptError", "default_script", "run_protocol",
           "Milestone", "MilestoneLog", "MetricsSeries", "export_metrics",
           "export_report", "FULL_SCALE_REFERENCE"]

# Full-scale (scale = 1.0) reference trajectory, for report context only;
# desk-scale runs are not expected to match these absolute numbers.
FULL_SCALE_REFERENCE = {
    "max_weight_first_exchange": 0.062,
    "notable_after_first_conversation": 10_843,
    "notable_after_first_consolidation": 53_992,
    "consolidation_ratio": 5.0,
    "idle_decay_pct": 1.6,
    "max_weight_peak": 0.158,
    "notable_end_of_baseline": 201_394,
    "kg_end_of_baseline": (64, 124),
}


def _stable_int(text: str) -> int:
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "big")


class SyntheticEmbedder:
    """Deterministic domain-clustered unit embeddings.

    Each domain gets a mean direction; each text adds seeded noise around
    its domain mean. The mixing constants are chosen so member-level
    cosines land near 0.6 within a domain and near 0.1 across domains.
    """

    provider_id = "synthetic"
    KAPPA = 0.8165   # within-domain noise mix -> intra cosine ~ 0.6
    GAMMA = 2.236    # domain spread around the shared base -> inter ~ 0.1

    def __init__(self, dim: int = 256, seed: int = 0):
        self.dimension = dim
        self.seed = int(seed)
        base_rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, 0xBA5E]))
        self._base = base_rng.standard_normal(dim)
        self._base /= np.linalg.norm(self._base)
        self._domain_means: dict[str, np.ndarray] = {}

    def _domain_mean(self, domain: str) -> np.ndarray:
        if domain not in self._domain_means:
            rng = np.random.default_rng(
                np.random.SeedSequence([self.seed, _stable_int(domain)]))
            g = rng.standard_normal(self.dimension)
            g /= np.linalg.norm(g)
            mu = self._base + self.GAMMA * g
            self._domain_means[domain] = mu / np.linalg.norm(mu)
        return self._domain_means[domain]

    def embed(self, text: str, annotations: dict) -> np.ndarray:
        domain = annotations.get("domain")
        if not domain:
            raise ValueError("synthetic embedder requires a domain annotation")
        mu = self._domain_mean(domain)
        rng = np.random.default_rng(np.random.SeedSequence(
            [self.seed, _stable_int(domain), _stable_int(text)]))
        eps = rng.standard_normal(self.dimension)
        eps /= np.linalg.norm(eps)
        v = mu + self.KAPPA * eps
        return v / np.linalg.norm(v)


class FileEmbedder:
    """Looks up precomputed embeddings from a JSON-lines file keyed by text."""

    provider_id = "file"

    def __init__(self, path):
        self.table: dict[str, np.ndarray] = {}
        dim = None
        with open(path) as f:
            for line in f:
                if not line.strip():
                    continue
                rec = json.loads(line)
                v = np.asarray(rec["values"], dtype=np.float64)
                v /= np.linalg.norm(v)
                self.table[rec["text"]] = v
                dim = v.shape[0]
        self.dimension = dim

    def embed(self, text: str, annotations: dict) -> np.ndarray:
        if text not in self.table:
            raise KeyError(f"no precomputed embedding for text: {text[:60]!r}")
        return self.table[text]


class RemoteEmbedder:
    """JSON-over-HTTP embedding client; never used in tests."""

    provider_id = "remote"

    def __init__(self, url: str, dimension: int, timeout_s: float = 30.0):
        self.url = url
        self.dimension = dimension
        self.timeout_s = timeout_s

    def embed(self, text: str, annotations: dict) -> np.ndarray:
        req = urllib.request.Request(
            self.url,
            data=json.dumps({"text": text, "annotations": annotations}).encode(),
            headers={"Content-Type": "application/json"}, method="POST")
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            values = json.loads(resp.read().decode())["values"]
        v = np.asarray(values, dtype=np.float64)
        return v / np.linalg.norm(v)


class ScriptError(ValueError):
    """Protocol-script validation failure; .errors lists every problem with
    its location in the document."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("invalid protocol script:\n  " + "\n  ".join(errors))


SCRIPT_VERSION = 1


@dataclass
class ProtocolScript:
    """Versioned conversation protocol: sessions of annotated messages, each
    followed by idle and/or sleep steps."""

    sessions: list[dict]
    seed: int = 7
    scale: float = 0.02
    version: int = SCRIPT_VERSION

    def validate(self) -> None:
        errors: list[str] = []

        def check_label(label, where):
            if not isinstance(label, str) or ":" not in label or \
                    label.split(":", 1)[0] not in ("person", "topic", "self"):
                errors.append(f"{where}: malformed concept label {label!r}")

        if self.version != SCRIPT_VERSION:
            errors.append(f"version: expected {SCRIPT_VERSION}, got {self.version}")
        if not self.sessions:
            errors.append("sessions: must be nonempty")
        for si, sess in enumerate(self.sessions):
            where = f"sessions[{si}]"
            if not sess.get("messages"):
                errors.append(f"{where}.messages: must be nonempty")
            for mi, msg in enumerate(sess.get("messages", [])):
                mwhere = f"{where}.messages[{mi}]"
                if not msg.get("text"):
                    errors.append(f"{mwhere}.text: required")
                if not msg.get("domain"):
                    errors.append(f"{mwhere}.domain: required")
                if msg.get("person") is not None:
                    check_label(msg["person"], f"{mwhere}.person")
                for label in msg.get("topics", []):
                    check_label(label, f"{mwhere}.topics")
                for label in msg.get("self_concepts", []):
                    check_label(label, f"{mwhere}.self_concepts")
                sal = msg.get("salience", 0.5)
                if not (0.0 <= sal <= 1.0):
                    errors.append(f"{mwhere}.salience: {sal} outside [0, 1]")
            for fi, step in enumerate(sess.get("followed_by", [])):
                fwhere = f"{where}.followed_by[{fi}]"
                if "idle_s" in step:
                    if step["idle_s"] < 0:
                        errors.append(f"{fwhere}.idle_s: must be >= 0")
                elif not step.get("sleep"):
                    errors.append(f"{fwhere}: must be an idle_s or sleep step")
        if errors:
            raise ScriptError(errors)

    @property
    def message_count(self) -> int:
        return sum(len(s["messages"]) for s in self.sessions)

    def to_json(self) -> dict:
        return {"version": self.version, "seed": self.seed,
                "scale": self.scale, "sessions": self.sessions}

    @classmethod
    def from_json(cls, d: dict) -> "ProtocolScript":
        script = cls(sessions=list(d.get("sessions", [])),
                     seed=int(d.get("seed", 7)),
                     scale=float(d.get("scale", 0.02)),
                     version=int(d.get("version", SCRIPT_VERSION)))
        script.validate()
        return script

    @classmethod
    def load(cls, path) -> "ProtocolScript":
        return cls.from_json(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))


def _msg(text, domain, person=None, topics=(), self_concepts=(), salience=0.6):
    return {"text": text, "domain": domain, "person": person,
            "topics": list(topics), "self_concepts": list(self_concepts),
            "salience": salience}


def default_script(seed: int = 7, scale: float = 0.02,
                   idle_block_s: float = 28_800.0) -> ProtocolScript:
    """25 user messages, 5 domains, 3 simulated days.

    Session 1 seeds the person-topic associations; a short idle after it is
    where the first lateral impulses appear, then the first consolidation
    cycle runs. Session 2 bridges back to session 1's topics after the
    8-hour idle, pushing the learned weights far enough that overnight
    propagation crosses the significance threshold. Two threads
    (dream-logging, improvisation) are raised once and never resolved.
    """
    liam = "person:Liam"
    maya = "person:Maya"
    s1 = [
        _msg("I keep wondering whether memory is really retrieval or "
             "reconstruction.", "ai_ml", liam,
             ["topic:associative-memory"], salience=0.7),
        _msg("Pattern matching feels different from association, though.",
             "ai_ml", liam,
             ["topic:associative-memory", "topic:pattern-recognition"],
             salience=0.8),
        _msg("Training a model is mostly shaping which patterns stick.",
             "ai_ml", liam, ["topic:pattern-recognition", "topic:training"],
             salience=0.7),
        _msg("Do learned associations fade if you never revisit them?",
             "ai_ml", liam, ["topic:associative-memory", "topic:forgetting"],
             salience=0.8),
        _msg("Let's come back to this tonight — it keeps resonating.",
             "ai_ml", liam,
             ["topic:associative-memory", "topic:pattern-recognition"],
             ["self:growth"], salience=0.9),
    ]
    s2 = [
        _msg("Back again — neurons that fire together really do wire "
             "together, don't they?", "biology", liam,
             ["topic:associative-memory", "topic:synapses"], salience=0.9),
        _msg("I started logging my dreams, by the way. Curious if anything "
             "surfaces.", "biology", liam,
             ["topic:dream-logging"], salience=0.5),
    ]
    s3 = [
        _msg("Learning music is like training a model, in a way.", "music",
             maya, ["topic:harmony", "topic:training"], salience=0.6),
        _msg("Chords are just patterns your ear has consolidated.", "music",
             maya, ["topic:harmony", "topic:pattern-recognition"],
             salience=0.6),
        _msg("Improvisation scares me — maybe we'll unpack that some day.",
             "music", maya, ["topic:improvisation"], salience=0.4),
        _msg("Practice rewires what feels automatic.", "music", maya,
             ["topic:harmony", "topic:practice"], salience=0.6),
        _msg("Rhythm is memory you can dance to.", "music", maya,
             ["topic:rhythm", "topic:associative-memory"], salience=0.6),
    ]
    s4 = [
        _msg("Cooking from taste memory beats following recipes.", "cooking",
             liam, ["topic:taste-memory", "topic:associative-memory"],
             salience=0.7),
        _msg("Seasoning is pattern recognition with your tongue.", "cooking",
             liam, ["topic:taste-memory", "topic:pattern-recognition"],
             salience=0.7),
        _msg("Kneading dough has a rhythm like practice drills.", "cooking",
             liam, ["topic:rhythm", "topic:practice"], salience=0.6),
        _msg("A good broth is consolidation — slow, overnight.", "cooking",
             liam, ["topic:taste-memory", "topic:synapses"], salience=0.7),
        _msg("Recipes are training data; intuition is the trained model.",
             "cooking", liam, ["topic:training", "topic:taste-memory"],
             salience=0.8),
    ]
    s5 = [
        _msg("Is mastery just automated memory?", "philosophy", liam,
             ["topic:mastery", "topic:associative-memory"], salience=0.7),
        _msg("Consciousness might be what noticing your own associations "
             "feels like.", "philosophy", liam,
             ["topic:consciousness", "topic:mastery"],
             ["self:growth"], salience=0.8),
        _msg("Does a skill remember you back?", "philosophy", liam,
             ["topic:mastery", "topic:practice"], salience=0.6),
        _msg("Habits are beliefs your body holds.", "philosophy", liam,
             ["topic:mastery", "topic:consciousness"], salience=0.6),
        _msg("Forgetting might be a feature, not a bug.", "philosophy", liam,
             ["topic:forgetting", "topic:consciousness"], salience=0.7),
        _msg("What would you reach for if nothing prompted you?",
             "philosophy", liam, ["topic:consciousness"],
             ["self:growth"], salience=0.8),
        _msg("Quick probe: what stuck with you from our first talk?",
             "philosophy", liam,
             ["topic:associative-memory", "topic:pattern-recognition"],
             salience=0.8),
        _msg("Last one for the baseline — thanks for thinking along.",
             "philosophy", liam, ["topic:mastery"], ["self:growth"],
             salience=0.7),
    ]
    sessions = [
        {"id": "day1-morning", "messages": s1,
         "followed_by": [{"idle_s": 900.0}, {"sleep": True},
                         {"idle_s": idle_block_s}]},
        {"id": "day1-evening", "messages": s2,
         "followed_by": [{"idle_s": 1200.0}, {"sleep": True},
                         {"idle_s": idle_block_s}]},
        {"id": "day2-morning", "messages": s3,
         "followed_by": [{"idle_s": 900.0}, {"idle_s": idle_block_s}]},
        {"id": "day2-evening", "messages": s4,
         "followed_by": [{"idle_s": 900.0}, {"sleep": True},
                         {"idle_s": idle_block_s}]},
        {"id": "day3", "messages": s5,
         "followed_by": [{"idle_s": 900.0}, {"sleep": True}]},
    ]
    script = ProtocolScript(sessions=sessions, seed=seed, scale=scale)
    script.validate()
    return script


MILESTONE_NAMES = {
    1: "first lateral weight",
    2: "first lateral impulse",
    3: "first KG edge",
    4: "L3/L4 category weight",
    5: "significance threshold",
    6: "autonomous reach-out",
}


@dataclass(frozen=True)
class Milestone:
    milestone_id: int
    message_count: int
    t_ms: float
    evidence: str

    @property
    def name(self) -> str:
        return MILESTONE_NAMES[self.milestone_id]


@dataclass
class MilestoneLog:
    records: list[Milestone] = field(default_factory=list)

    def achieved(self, milestone_id: int) -> bool:
        return any(r.milestone_id == milestone_id for r in self.records)

    def get(self, milestone_id: int) -> Milestone | None:
        for r in self.records:
            if r.milestone_id == milestone_id:
                return r
        return None

    def add(self, milestone_id: int, message_count: int, t_ms: float,
            evidence: str) -> None:
        self.records.append(Milestone(milestone_id, message_count, t_ms,
                                      evidence))

    def to_json(self) -> list[dict]:
        return [{"id": r.milestone_id, "name": r.name,
                 "messages": r.message_count, "t_ms": r.t_ms,
                 "evidence": r.evidence} for r in self.records]


@dataclass
class MetricsSeries:
    samples: list[dict] = field(default_factory=list)

    COLUMNS = ("t_s", "notable_connections", "max_lateral_weight",
               "max_ff_weight", "kg_nodes", "kg_edges", "impulse_count",
               "significance_count", "actions_journal", "actions_reach_out",
               "actions_continue", "actions_silent")

    def sample(self, mind: Mind, tag: str = "") -> dict:
        m = mind.metrics()
        row = {
            "t_s": m["t_ms"] / 1000.0,
            "notable_connections": m["notable_connections"],
            "max_lateral_weight": m["max_lateral_weight"],
            "max_ff_weight": m["max_ff_weight"],
            "kg_nodes": m["kg_nodes"],
            "kg_edges": m["kg_edges"],
            "impulse_count": m["impulse_count"],
            "significance_count": m["significance_count"],
            "actions_journal": m["action_counts"]["journal"],
            "actions_reach_out": m["action_counts"]["reach_out"],
            "actions_continue": m["action_counts"]["continue"],
            "actions_silent": m["action_counts"]["silent"],
            "tag": tag,
        }
        if self.samples and row["t_s"] <= self.samples[-1]["t_s"]:
            # same-instant resample: replace so time stays strictly increasing
            self.samples[-1] = row
        else:
            self.samples.append(row)
        return row


@dataclass
class ProtocolResult:
    milestones: MilestoneLog
    metrics: MetricsSeries
    mind: Mind
    replies: list[str]
    consolidation_reports: list


def _check_milestones(mind: Mind, log: MilestoneLog, messages: int) -> None:
    m = mind.metrics()
    t = m["t_ms"]
    if not log.achieved(1) and m["max_lateral_weight"] > 0.0:
        log.add(1, messages, t, f"max weight {m['max_lateral_weight']:.4f}")
    if not log.achieved(2) and m["impulse_count"] > 0:
        log.add(2, messages, t, f"{m['impulse_count']} impulse(s)")
    if not log.achieved(3) and m["kg_edges"] > 0:
        log.add(3, messages, t, f"{m['kg_edges']} consolidation edge(s)")
    # the category milestone belongs to the first consolidation cycle, so the
    # feedforward crossing only counts once a consolidation has produced edges
    if not log.achieved(4) and m["kg_edges"] > 0 and \
            m["max_ff_weight"] > mind.config.memory.w_notable:
        log.add(4, messages, t, f"max category weight {m['max_ff_weight']:.4f}")
    if not log.achieved(5) and m["significance_count"] > 0:
        log.add(5, messages, t, f"{m['significance_count']} significant cluster(s)")
    if not log.achieved(6) and m["reach_out_count"] > 0:
        log.add(6, messages, t, f"unsolicited message to "
                                f"{mind.outbox[0]['target']}")


def run_protocol(script: ProtocolScript, config: MindConfig | None = None,
                 engine=None, embedder=None,
                 idle_detail_s: float = 900.0) -> ProtocolResult:
    """Replay a protocol script on a clean mind; fully deterministic in the
    script's seed."""
    script.validate()
    if config is None:
        config = MindConfig(seed=script.seed, scale=script.scale)
    if embedder is None:
        embedder = SyntheticEmbedder(config.embedding_dim, script.seed)
    if engine is None:
        engine = MockEngine(config.cognition.reach_out_multiplier)
    mind = Mind(config, engine=engine, embedder=embedder)
    milestones = MilestoneLog()
    metrics = MetricsSeries()
    replies: list[str] = []
    reports = []
    messages = 0
    metrics.sample(mind, "start")
    for sess in script.sessions:
        sid = sess.get("id", "session")
        for msg in sess["messages"]:
            reply = mind.converse(
                msg["text"], person=msg.get("person"),
                topics=msg.get("topics", ()),
                self_concepts=msg.get("self_concepts", ()),
                salience=msg.get("salience", 0.5),
                session_id=sid, annotations={"domain": msg["domain"]})
            replies.append(reply)
            messages += 1
            metrics.sample(mind, f"{sid}:msg{messages}")
            _check_milestones(mind, milestones, messages)
        mind.end_session()
        for step in sess.get("followed_by", []):
            if "idle_s" in step:
                mind.run_idle(step["idle_s"], detail_s=idle_detail_s)
                metrics.sample(mind, f"{sid}:idle")
            elif step.get("sleep"):
                reports.append(mind.sleep())
                metrics.sample(mind, f"{sid}:sleep")
            _check_milestones(mind, milestones, messages)
    metrics.sample(mind, "end")
    _check_milestones(mind, milestones, messages)
    return ProtocolResult(milestones=milestones, metrics=metrics, mind=mind,
                          replies=replies, consolidation_reports=reports)


def export_metrics(series: MetricsSeries, path=None) -> str:
    """Plot-ready CSV; one row per sample."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(MetricsSeries.COLUMNS + ("tag",))
    for row in series.samples:
        writer.writerow([row[c] for c in MetricsSeries.COLUMNS] + [row["tag"]])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def export_report(milestones: MilestoneLog, series: MetricsSeries,
                  reports=None, path=None) -> str:
    """Human-readable run summary with full-scale reference values alongside
    (reference context, not pass criteria)."""
    ref = FULL_SCALE_REFERENCE
    lines = ["Milestone trajectory", "=" * 60]
    for mid in sorted(MILESTONE_NAMES):
        rec = milestones.get(mid)
        if rec:
            lines.append(f"{mid}. {rec.name:28s} msg {rec.message_count:3d}  "
                         f"t={rec.t_ms / 3.6e6:7.2f} h  {rec.evidence}")
        else:
            lines.append(f"{mid}. {MILESTONE_NAMES[mid]:28s} not achieved")
    last = series.samples[-1] if series.samples else None
    lines += ["", "Run summary vs full-scale reference", "-" * 60]
    if last:
        lines.append(f"notable connections at end: {last['notable_connections']} "
                     f"(full-scale reference: {ref['notable_end_of_baseline']})")
        lines.append(f"max lateral weight: {last['max_lateral_weight']:.4f} "
                     f"(full-scale reference peak: {ref['max_weight_peak']})")
        lines.append(f"knowledge graph: {last['kg_nodes']} nodes / "
                     f"{last['kg_edges']} edges (full-scale reference: "
                     f"{ref['kg_end_of_baseline'][0]} / {ref['kg_end_of_baseline'][1]})")
        lines.append(f"notable after first conversation (reference): "
                     f"{ref['notable_after_first_conversation']}")
    if reports:
        first = reports[0]
        ratio = first.notable_ratio
        shown = "inf" if ratio == float("inf") else f"{ratio:.2f}"
        lines.append(f"first consolidation notable ratio: {shown}x "
                     f"(full-scale reference: {ref['consolidation_ratio']}x)")
        lines.append("note: the L3/L4 category milestone is proxied by the "
                     "first plastic feedforward weight crossing the notable "
                     "threshold after consolidation")
    lines.append("(reference values describe the full-scale trajectory and "
                 "are context, not expectations, at reduced scale)")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
