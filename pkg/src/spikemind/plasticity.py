"""Depression-dominant STDP with eligibility traces, dopamine gating, and
cascade-scaled homeostatic decay.

Pairing accumulates eligibility only; weights move exclusively through
:func:`apply_reward` (dopamine-gated) and :func:`cascade_decay`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .config import DecayConfig, StdpConfig

__all__ = ["DopamineSignal", "stdp_kernel", "StdpRuntime", "apply_reward",
           "cascade_decay", "weight_audit"]


@dataclass(frozen=True)
class DopamineSignal:
    """Global reward pulse; magnitude in [0, 1]."""

    magnitude: float
    source: str = "conversation_salience"
    t_ms: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.magnitude <= 1.0):
            raise ValueError("dopamine magnitude must be in [0, 1]")
        if self.source not in ("conversation_salience", "consolidation_replay"):
            raise ValueError(f"unknown dopamine source {self.source!r}")


def stdp_kernel(delta_t: float, cfg: StdpConfig) -> float:
    """Eligibility increment for a spike pair with delta_t = t_post - t_pre."""
    if delta_t > 0:
        return cfg.a_plus * math.exp(-delta_t / cfg.tau_plus)
    if delta_t < 0:
        return -cfg.a_minus * math.exp(delta_t / cfg.tau_minus)
    return 0.0


class StdpRuntime:
    """Per-substrate pairing state fed by every stepped chunk's spike list."""

    def __init__(self, substrate, cfg: StdpConfig):
        n = substrate.n_total
        self.cfg = cfg
        self.last_spike = np.full(n, -1e18)
        self.ring_t = np.full(_kernels.RING_CAP, -1e18)
        self.ring_id = np.zeros(_kernels.RING_CAP, dtype=np.int32)
        self.ring_head = 0
        self.visited = np.zeros(n, dtype=np.int64)
        self.visit_ctr = 0
        self.materialize = True

    def process(self, sp_steps: np.ndarray, sp_ids: np.ndarray, n_sp: int,
                t0: int, substrate, tau_scale: float = 1.0) -> None:
        """Run nearest-neighbour pairing over one chunk of spikes."""
        syn = substrate.synapses
        lat = syn.lateral
        cfg = self.cfg
        l2 = substrate.bounds("L2_concept")
        l3 = substrate.bounds("L3_category")
        l4 = substrate.bounds("L4_meta")
        start = 0
        while start < n_sp:
            done, lat.size, self.visit_ctr, self.ring_head = _kernels.stdp_chunk(
                sp_steps, sp_ids, n_sp, start, t0,
                l2[0], l2[1], l3[0], l3[1], l4[0], l4[1],
                self.last_spike, self.ring_t, self.ring_id, self.ring_head,
                self.visited, self.visit_ctr,
                lat.map, lat.pre, lat.post, lat.w, lat.elig, lat.elig_t,
                lat.created, lat.updated, lat.size,
                substrate.n_total,
                cfg.a_plus, cfg.a_minus,
                cfg.tau_plus * tau_scale, cfg.tau_minus * tau_scale,
                cfg.tau_eligibility * tau_scale, cfg.pairing_window * tau_scale,
                self.materialize,
                syn.ff23.in_indptr, syn.ff23.in_pre, syn.ff23.in_syn,
                syn.ff23.out_indptr, syn.ff23.out_post, syn.ff23.out_syn,
                syn.ff23.elig, syn.ff23.elig_t,
                syn.ff34.in_indptr, syn.ff34.in_pre, syn.ff34.in_syn,
                syn.ff34.out_indptr, syn.ff34.out_post, syn.ff34.out_syn,
                syn.ff34.elig, syn.ff34.elig_t,
                cfg.ff_gain * cfg.a_plus, cfg.ff_gain * cfg.a_minus)
            if done < n_sp:
                lat.grow()
            start = done


def _decayed_eligibility(elig, elig_t, now_ms: float, tau: float):
    e = elig * np.exp(-(now_ms - elig_t) / tau)
    return e


def apply_reward(synapses, signal: DopamineSignal, cfg: StdpConfig,
                 now_ms: float, tau_eligibility: float | None = None) -> None:
    """Convert decayed eligibility into clamped weight change, scaled by eta
    and the dopamine magnitude. The trace is consumed by the conversion so a
    given coincidence can only ever be rewarded once."""
    if signal.magnitude == 0.0:
        return
    tau = cfg.tau_eligibility if tau_eligibility is None else tau_eligibility
    gain = cfg.eta * signal.magnitude
    lat = synapses.lateral
    n = lat.size
    if n:
        e = _decayed_eligibility(lat.elig[:n], lat.elig_t[:n], now_ms, tau)
        lat.elig[:n] = 0.0
        lat.elig_t[:n] = now_ms
        np.clip(lat.w[:n] + gain * e, cfg.w_min, cfg.w_max, out=lat.w[:n])
        lat.updated[:n] = now_ms
    for proj in (synapses.ff23, synapses.ff34):
        e = _decayed_eligibility(proj.elig, proj.elig_t, now_ms, tau)
        proj.elig[:] = 0.0
        proj.elig_t[:] = now_ms
        np.clip(proj.w + gain * e, cfg.w_min, cfg.w_max, out=proj.w)
    synapses.mark_dirty()


def cascade_decay(synapses, elapsed_ms: float, decay: DecayConfig,
                  w_max: float) -> int:
    """Weight-dependent exponential decay; strong weights are protected.

    lambda(w) = lambda0 * exp(-beta * w / w_max), lambda0 in 1/hour.
    Lateral synapses whose weight falls below the prune floor are removed.
    Returns the number of pruned synapses.
    """
    if elapsed_ms < 0:
        raise ValueError("elapsed must be nonnegative")
    if elapsed_ms == 0:
        return 0
    hours = elapsed_ms / 3.6e6
    pruned = 0
    lat = synapses.lateral
    n = lat.size
    if n:
        w = lat.w[:n]
        lam = decay.lambda0 * np.exp(-decay.beta * w / w_max)
        w *= np.exp(-lam * hours)
        keep = w >= decay.prune_floor
        pruned = int(n - keep.sum())
        if pruned:
            lat.compact(keep)
    for proj in (synapses.ff23, synapses.ff34):
        nz = proj.w > 0.0
        if nz.any():
            lam = decay.lambda0 * np.exp(-decay.beta * proj.w[nz] / w_max)
            proj.w[nz] *= np.exp(-lam * hours)
            proj.w[proj.w < decay.prune_floor] = 0.0
    synapses.mark_dirty()
    return pruned


def weight_audit(synapses, concept_of: np.ndarray, labels: list[str],
                 top_k: int = 100) -> list[dict]:
    """Top-K lateral weights with endpoints and concept labels (JSONL-ready)."""
    lat = synapses.lateral
    n = lat.size
    if n == 0:
        return []
    order = np.argsort(-lat.w[:n], kind="stable")[:top_k]

    def label_of(nid: int) -> str | None:
        ci = int(concept_of[nid])
        return labels[ci] if 0 <= ci < len(labels) else None

    return [
        {
            "pre": int(lat.pre[i]),
            "post": int(lat.post[i]),
            "weight": float(lat.w[i]),
            "pre_concept": label_of(int(lat.pre[i])),
            "post_concept": label_of(int(lat.post[i])),
            "created_ms": float(lat.created[i]),
            "updated_ms": float(lat.updated[i]),
        }
        for i in order
    ]
