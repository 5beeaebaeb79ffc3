"""Population-code sensory encoding.

Embeddings are projected onto random preferred directions, standardised by
the per-call z-score of the cosine distribution, and the top-k neurons fire
at rates proportional to their positive z-scores. The z-scoring makes the
code independent of embedding dimensionality: raw cosine spread shrinks as
1/sqrt(d), but the standardised scores are always ~N(0,1).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ConfigurationError, EncoderConfig

__all__ = [
    "DirectionSet",
    "ActivationPattern",
    "RetentionReport",
    "generate_directions",
    "encode",
    "pattern_similarity",
    "discrimination_retention",
    "load_labeled_embeddings",
]

_NORM_TOL = 1e-6


class DegenerateInputError(ValueError):
    """All cosines identical: the embedding provider is broken."""


def _check_unit(values: np.ndarray, what: str) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] < 2:
        raise ConfigurationError(f"{what} must be a vector of dimension >= 2")
    norm = float(np.linalg.norm(values))
    if abs(norm - 1.0) > _NORM_TOL:
        raise ConfigurationError(f"{what} must be unit-norm (got |v| = {norm:.8f})")
    return values


@dataclass(frozen=True)
class DirectionSet:
    """N random unit vectors on the d-sphere; regenerable from (n, d, seed)."""

    directions: np.ndarray
    seed: int

    @property
    def n(self) -> int:
        return self.directions.shape[0]

    @property
    def d(self) -> int:
        return self.directions.shape[1]

    def spec(self) -> dict:
        """Persistence triple; the matrix itself is regenerated on load."""
        return {"n": self.n, "d": self.d, "seed": self.seed}

    @classmethod
    def from_spec(cls, spec: dict) -> "DirectionSet":
        return generate_directions(spec["n"], spec["d"], spec["seed"])


def generate_directions(n: int, d: int, seed: int) -> DirectionSet:
    """Sample n directions uniformly on the d-sphere (normalised Gaussians)."""
    if n < 1:
        raise ConfigurationError(f"direction count must be >= 1, got {n}")
    if d < 2:
        raise ConfigurationError(f"dimension must be >= 2, got {d}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), n, d]))
    mat = rng.standard_normal((n, d))
    mat /= np.linalg.norm(mat, axis=1, keepdims=True)
    mat.setflags(write=False)
    return DirectionSet(directions=mat, seed=int(seed))


@dataclass(frozen=True)
class ActivationPattern:
    """Sparse neuron -> rate map over a population of n_total sensory neurons.

    ``dropped_negative`` counts top-k members whose z-score was <= 0; they
    receive zero rate by construction and are omitted from the entries.
    """

    indices: np.ndarray          # ascending neuron indices
    rates: np.ndarray            # Hz, aligned with indices
    n_total: int
    dropped_negative: int = 0

    def __post_init__(self):
        if self.indices.shape != self.rates.shape:
            raise ValueError("indices and rates must align")

    @property
    def k(self) -> int:
        return int(self.indices.shape[0])

    def entries(self) -> dict[int, float]:
        return {int(i): float(r) for i, r in zip(self.indices, self.rates)}

    def as_dense(self) -> np.ndarray:
        dense = np.zeros(self.n_total)
        dense[self.indices] = self.rates
        return dense


def encode(embedding: np.ndarray, dirs: DirectionSet, cfg: EncoderConfig) -> ActivationPattern:
    """Encode a unit embedding into a sparse firing-rate pattern.

    Cosines against all preferred directions are z-scored with their own
    empirical mean/std; the k = floor(sparsity * N) highest z-scores are
    selected (ties broken toward the lower neuron index) and mapped to
    rates with the population maximum pinned at r_max.
    """
    e = _check_unit(embedding, "embedding")
    if e.shape[0] != dirs.d:
        raise ConfigurationError(
            f"embedding dimension {e.shape[0]} != direction dimension {dirs.d}")
    k = int(np.floor(cfg.sparsity * dirs.n))
    if k < 1:
        raise ConfigurationError("sparsity * N must select at least one neuron")
    cos = dirs.directions @ e
    mu = float(cos.mean())
    sigma = float(cos.std())
    if sigma == 0.0:
        raise DegenerateInputError("all cosines equal; cannot standardise")
    z = (cos - mu) / sigma
    # stable sort on -z keeps lower indices first among ties
    order = np.argsort(-z, kind="stable")
    top = order[:k]
    z_top = z[top]
    z_peak = float(z_top[0])
    positive = z_top > 0.0
    dropped = int(k - positive.sum())
    sel = top[positive]
    rates = z[sel] / z_peak * cfg.r_max
    sort = np.argsort(sel)
    return ActivationPattern(
        indices=sel[sort].astype(np.int64),
        rates=rates[sort],
        n_total=dirs.n,
        dropped_negative=dropped,
    )


def pattern_similarity(a: ActivationPattern, b: ActivationPattern) -> float:
    """Cosine similarity of two patterns viewed as dense nonnegative vectors."""
    if a.n_total != b.n_total:
        raise ConfigurationError("patterns come from different population sizes")
    na = float(np.linalg.norm(a.rates))
    nb = float(np.linalg.norm(b.rates))
    if na == 0.0 and nb == 0.0:
        raise ValueError("both patterns are empty")
    if na == 0.0 or nb == 0.0:
        return 0.0
    common_a, common_b = _intersect(a, b)
    dot = float(np.dot(a.rates[common_a], b.rates[common_b]))
    return dot / (na * nb)


def _intersect(a: ActivationPattern, b: ActivationPattern):
    common, ia, ib = np.intersect1d(a.indices, b.indices, assume_unique=True,
                                    return_indices=True)
    return ia, ib


@dataclass(frozen=True)
class RetentionReport:
    """Discrimination retention: encoded-space separation over embedding-space separation."""

    sep_embedding: float
    sep_encoded: float
    retention: float | None
    close_dist_ratio: float | None
    intra_embedding: float
    inter_embedding: float
    intra_encoded: float
    inter_encoded: float
    n_items: int
    n_domains: int
    discriminative: bool


def _pair_means(sim: np.ndarray, labels: list[str]) -> tuple[float, float]:
    """Mean intra-domain and inter-domain similarity over unordered pairs."""
    n = sim.shape[0]
    intra, inter = [], []
    for i in range(n):
        for j in range(i + 1, n):
            (intra if labels[i] == labels[j] else inter).append(sim[i, j])
    return float(np.mean(intra)), float(np.mean(inter))


def discrimination_retention(labeled, dirs: DirectionSet, cfg: EncoderConfig,
                             encode_fn=None) -> RetentionReport:
    """Compute the retention report for (embedding, domain) pairs.

    ``encode_fn`` defaults to :func:`encode`; tests may inject an identity
    encoder to pin retention at 1.0.
    """
    labels = [str(lab) for _, lab in labeled]
    domains = sorted(set(labels))
    if len(domains) < 2:
        raise ConfigurationError("need at least 2 domains")
    for dom in domains:
        if labels.count(dom) < 2:
            raise ConfigurationError(f"domain {dom!r} needs at least 2 items")
    embs = np.stack([_check_unit(e, "embedding") for e, _ in labeled])
    emb_sim = embs @ embs.T

    if encode_fn is None:
        encoded = np.stack([encode(e, dirs, cfg).as_dense() for e, _ in labeled])
    else:
        encoded = np.stack([np.asarray(encode_fn(e), dtype=np.float64) for e, _ in labeled])
    norms = np.linalg.norm(encoded, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    unit = encoded / norms
    enc_sim = unit @ unit.T

    intra_e, inter_e = _pair_means(emb_sim, labels)
    intra_p, inter_p = _pair_means(enc_sim, labels)
    sep_emb = intra_e - inter_e
    sep_enc = intra_p - inter_p
    discriminative = sep_emb > 0.0
    retention = sep_enc / sep_emb if discriminative else None
    ratio = intra_p / inter_p if inter_p > 0 else None
    return RetentionReport(
        sep_embedding=sep_emb,
        sep_encoded=sep_enc,
        retention=retention,
        close_dist_ratio=ratio,
        intra_embedding=intra_e,
        inter_embedding=inter_e,
        intra_encoded=intra_p,
        inter_encoded=inter_p,
        n_items=len(labels),
        n_domains=len(domains),
        discriminative=discriminative,
    )


def load_labeled_embeddings(path: str | Path) -> list[tuple[np.ndarray, str]]:
    """Read JSON-lines embedding records: {"id": ..., "domain": ..., "values": [...]}."""
    out = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
            values = _check_unit(np.asarray(rec["values"], dtype=np.float64),
                                 f"embedding at line {lineno}")
            out.append((values, str(rec["domain"])))
        except (KeyError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"bad embedding record at line {lineno}: {exc}") from exc
    return out
