"""Layered LIF substrate: state, wiring, and the chunked stepping engine.

Layer populations live in one flat neuron index space (L1, L2, L3, L4, INH
in order). Feedforward sensory wiring and the inhibitory loop are fixed;
L2 lateral synapses materialise lazily on co-activation and the L2->L3 and
L3->L4 projections have a fixed sparsity pattern with plastic weights.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .config import ConfigurationError, ConnectivityConfig, LifParams

LAYER_NAMES = ("L1_sensory", "L2_concept", "L3_category", "L4_meta", "INH_inhibitory")
BASE_SIZES = {
    "L1_sensory": 5000,
    "L2_concept": 150000,
    "L3_category": 25000,
    "L4_meta": 10000,
    "INH_inhibitory": 30000,
}

CHUNK_STEPS = 10000
SPIKE_BUF = 1 << 20
CONCEPT_CAPACITY = 4096


class CapacityError(RuntimeError):
    """Estimated synapse count exceeds the configured memory budget."""


@dataclass(frozen=True)
class LayerSpec:
    name: str
    size: int
    excitatory: bool = True

    def __post_init__(self):
        if self.name not in LAYER_NAMES:
            raise ConfigurationError(f"unknown layer name {self.name!r}")
        if self.size < 1:
            raise ConfigurationError("layer sizes must be >= 1")


def default_layers(scale: float = 1.0) -> list[LayerSpec]:
    """Production layer sizes multiplied by a single scale factor."""
    if scale <= 0:
        raise ConfigurationError("scale must be positive")
    return [
        LayerSpec(name, max(10, int(round(BASE_SIZES[name] * scale))),
                  excitatory=(name != "INH_inhibitory"))
        for name in LAYER_NAMES
    ]


@dataclass
class SpikeRecord:
    """Spikes observed over one advance call; times are absolute simulated ms."""

    t_start: int
    t_end: int
    times: np.ndarray
    ids: np.ndarray

    def ids_for_layer(self, sub: "Substrate", layer: str) -> np.ndarray:
        lo, hi = sub.bounds(layer)
        return self.ids[(self.ids >= lo) & (self.ids < hi)]


@dataclass
class PlasticProjection:
    """Fixed-sparsity plastic projection (L2->L3 or L3->L4)."""

    pre_lo: int
    pre_hi: int
    post_lo: int
    post_hi: int
    out_indptr: np.ndarray   # per local pre
    out_post: np.ndarray     # global post ids
    out_syn: np.ndarray
    in_indptr: np.ndarray    # per local post
    in_pre: np.ndarray       # global pre ids
    in_syn: np.ndarray
    w: np.ndarray
    elig: np.ndarray
    elig_t: np.ndarray

    @property
    def n_syn(self) -> int:
        return self.w.shape[0]


def _build_plastic_projection(rng, pre_lo, pre_hi, post_lo, post_hi, fanout):
    n_pre = pre_hi - pre_lo
    n_post = post_hi - post_lo
    fanout = min(fanout, n_post)
    out_indptr = np.arange(n_pre + 1, dtype=np.int64) * fanout
    out_post = np.empty(n_pre * fanout, dtype=np.int64)
    for i in range(n_pre):
        out_post[i * fanout:(i + 1) * fanout] = post_lo + rng.choice(
            n_post, size=fanout, replace=False)
    out_syn = np.arange(n_pre * fanout, dtype=np.int64)
    # invert to in-adjacency
    local_post = out_post - post_lo
    order = np.argsort(local_post, kind="stable")
    in_pre = (np.repeat(np.arange(n_pre, dtype=np.int64), fanout) + pre_lo)[order]
    in_syn = out_syn[order]
    counts = np.bincount(local_post, minlength=n_post)
    in_indptr = np.zeros(n_post + 1, dtype=np.int64)
    np.cumsum(counts, out=in_indptr[1:])
    n_syn = n_pre * fanout
    return PlasticProjection(
        pre_lo=pre_lo, pre_hi=pre_hi, post_lo=post_lo, post_hi=post_hi,
        out_indptr=out_indptr, out_post=out_post, out_syn=out_syn,
        in_indptr=in_indptr, in_pre=in_pre, in_syn=in_syn,
        w=np.zeros(n_syn), elig=np.zeros(n_syn), elig_t=np.zeros(n_syn),
    )


class LateralStore:
    """Growable arrays of directed L2 lateral synapses keyed by (pre, post)."""

    INITIAL_CAP = 1 << 16

    def __init__(self, n_total: int):
        self.n_total = n_total
        cap = self.INITIAL_CAP
        self.pre = np.zeros(cap, dtype=np.int64)
        self.post = np.zeros(cap, dtype=np.int64)
        self.w = np.zeros(cap)
        self.elig = np.zeros(cap)
        self.elig_t = np.zeros(cap)
        self.created = np.zeros(cap)
        self.updated = np.zeros(cap)
        self.size = 0
        self.map = _kernels.new_lateral_map()

    @property
    def capacity(self) -> int:
        return self.w.shape[0]

    def grow(self) -> None:
        cap = self.capacity * 2
        for name in ("pre", "post", "w", "elig", "elig_t", "created", "updated"):
            old = getattr(self, name)
            new = np.zeros(cap, dtype=old.dtype)
            new[:self.size] = old[:self.size]
            setattr(self, name, new)

    def compact(self, keep: np.ndarray) -> None:
        """Keep only the flagged synapses and rebuild the key map."""
        n = self.size
        idx = np.nonzero(keep[:n])[0]
        for name in ("pre", "post", "w", "elig", "elig_t", "created", "updated"):
            arr = getattr(self, name)
            arr[:idx.shape[0]] = arr[idx]
        self.size = idx.shape[0]
        self.map = _kernels.new_lateral_map()
        for i in range(self.size):
            self.map[int(self.pre[i]) * self.n_total + int(self.post[i])] = i

    def lookup(self, pre: int, post: int) -> int | None:
        key = int(pre) * self.n_total + int(post)
        if key in self.map:
            return int(self.map[key])
        return None


class SynapseStore:
    """All projections: fixed CSR wiring plus the plastic stores."""

    def __init__(self, layers, conn: ConnectivityConfig, offsets, n_total, rng):
        self.conn = conn
        self.n_total = n_total
        self._offsets = offsets
        l1 = offsets["L1_sensory"]
        l2 = offsets["L2_concept"]
        l3 = offsets["L3_category"]
        l4 = offsets["L4_meta"]
        inh = offsets["INH_inhibitory"]
        n_l2 = l2[1] - l2[0]
        n_exc = inh[0]
        n_inh = inh[1] - inh[0]

        inh_in = max(1, int(round(conn.inh_in_frac * n_exc)))
        inh_out = max(1, int(round(conn.inh_out_frac * n_exc)))
        ff_fanout = min(conn.ff_fanout, n_l2)
        est = ((l1[1] - l1[0]) * ff_fanout
               + n_inh * (inh_in + inh_out)
               + (l2[1] - l2[0]) * conn.l2_l3_fanout
               + (l3[1] - l3[0]) * conn.l3_l4_fanout)
        if est > conn.synapse_budget:
            raise CapacityError(
                f"estimated {est} fixed synapses exceeds budget {conn.synapse_budget}; "
                f"lower the scale or raise connectivity.synapse_budget")

        pre_list: list[np.ndarray] = []
        post_list: list[np.ndarray] = []
        w_list: list[np.ndarray] = []
        # L1 -> L2 fixed transform
        for i in range(l1[0], l1[1]):
            targets = l2[0] + rng.choice(n_l2, size=ff_fanout, replace=False)
            pre_list.append(np.full(ff_fanout, i, dtype=np.int64))
            post_list.append(targets.astype(np.int64))
            w_list.append(np.full(ff_fanout, conn.ff_weight))
        # excitatory -> inhibitory (chosen from the interneuron side)
        for j in range(inh[0], inh[1]):
            sources = rng.choice(n_exc, size=inh_in, replace=False).astype(np.int64)
            pre_list.append(sources)
            post_list.append(np.full(inh_in, j, dtype=np.int64))
            w_list.append(np.full(inh_in, conn.w_exc_to_inh))
        # inhibitory -> excitatory
        for j in range(inh[0], inh[1]):
            targets = rng.choice(n_exc, size=inh_out, replace=False).astype(np.int64)
            pre_list.append(np.full(inh_out, j, dtype=np.int64))
            post_list.append(targets)
            w_list.append(np.full(inh_out, -conn.w_inh_to_exc))
        pre = np.concatenate(pre_list)
        post = np.concatenate(post_list)
        w = np.concatenate(w_list)
        order = np.argsort(pre, kind="stable")
        self.fx_targets = post[order]
        self.fx_w = w[order]
        counts = np.bincount(pre, minlength=n_total)
        self.fx_indptr = np.zeros(n_total + 1, dtype=np.int64)
        np.cumsum(counts, out=self.fx_indptr[1:])

        self.ff23 = _build_plastic_projection(rng, l2[0], l2[1], l3[0], l3[1],
                                              conn.l2_l3_fanout)
        self.ff34 = _build_plastic_projection(rng, l3[0], l3[1], l4[0], l4[1],
                                              conn.l3_l4_fanout)
        self.lateral = LateralStore(n_total)
        self._dirty = True
        self._pl_indptr = np.zeros(n_total + 1, dtype=np.int64)
        self._pl_targets = np.zeros(0, dtype=np.int64)
        self._pl_w = np.zeros(0)

    def mark_dirty(self) -> None:
        self._dirty = True

    def plastic_csr(self):
        """CSR snapshot of every plastic synapse with nonzero weight."""
        if self._dirty:
            pres, posts, ws = [], [], []
            lat = self.lateral
            nz = np.nonzero(lat.w[:lat.size] > 0.0)[0]
            pres.append(lat.pre[nz])
            posts.append(lat.post[nz])
            ws.append(lat.w[nz])
            for proj in (self.ff23, self.ff34):
                nz = np.nonzero(proj.w > 0.0)[0]
                if nz.shape[0]:
                    # out_syn is the identity permutation, so syn index maps
                    # directly onto the out arrays
                    local_pre = np.searchsorted(proj.out_indptr, nz, side="right") - 1
                    pres.append(local_pre + proj.pre_lo)
                    posts.append(proj.out_post[nz])
                    ws.append(proj.w[nz])
            pre = np.concatenate(pres)
            post = np.concatenate(posts)
            w = np.concatenate(ws)
            order = np.argsort(pre, kind="stable")
            self._pl_targets = post[order]
            self._pl_w = w[order]
            counts = np.bincount(pre, minlength=self.n_total)
            self._pl_indptr = np.zeros(self.n_total + 1, dtype=np.int64)
            np.cumsum(counts, out=self._pl_indptr[1:])
            self._dirty = False
        return self._pl_indptr, self._pl_targets, self._pl_w

    # --- audit helpers -------------------------------------------------
    def lateral_weights(self) -> np.ndarray:
        return self.lateral.w[:self.lateral.size]

    def notable_count(self, threshold: float) -> int:
        return int(np.count_nonzero(self.lateral_weights() > threshold))

    def max_lateral_weight(self) -> float:
        w = self.lateral_weights()
        return float(w.max()) if w.shape[0] else 0.0

    def max_ff_weight(self) -> float:
        return float(max(self.ff23.w.max(initial=0.0), self.ff34.w.max(initial=0.0)))


@dataclass
class Drive:
    """Precomputed per-step suprathreshold input events for an advance call."""

    idx: np.ndarray        # int64 neuron ids
    amp: np.ndarray        # current added per event
    events: np.ndarray     # uint8[steps, len(idx)]


class Substrate:
    """Owns neuron state, synapses, and the chunked stepping loop."""

    NOISE_POOL = 1 << 22

    def __init__(self, layers: list[LayerSpec], lif: LifParams,
                 conn: ConnectivityConfig, seed: int):
        names = [l.name for l in layers]
        if names != list(LAYER_NAMES):
            raise ConfigurationError(f"layers must be {LAYER_NAMES} in order")
        self.layers = list(layers)
        self.lif = lif
        self.conn = conn
        self.seed = int(seed)
        self.offsets: dict[str, tuple[int, int]] = {}
        pos = 0
        for spec in layers:
            self.offsets[spec.name] = (pos, pos + spec.size)
            pos += spec.size
        self.n_total = pos

        ss = np.random.SeedSequence([int(seed), 0x5EED])
        conn_ss, pool_ss, drive_ss = ss.spawn(3)
        build_rng = np.random.default_rng(conn_ss)
        self.synapses = SynapseStore(layers, conn, self.offsets, self.n_total, build_rng)
        pool_rng = np.random.default_rng(pool_ss)
        self.noise_pool = pool_rng.standard_normal(self.NOISE_POOL)
        self.lcg_state = np.uint64(pool_rng.integers(0, 2**63, dtype=np.uint64) | 1)
        self.rng = np.random.default_rng(drive_ss)

        self.v = np.full(self.n_total, lif.v_rest)
        self.refrac = np.zeros(self.n_total, dtype=np.int32)
        self.adapt = np.zeros(self.n_total)
        self.buf_a = np.zeros(self.n_total)
        self.buf_b = np.zeros(self.n_total)
        self.t_ms = 0
        self.bias = lif.bias
        self.refrac_override = None  # temporary refractory (steps), e.g. replay gating
        self.concept_of = np.full(self.n_total, -1, dtype=np.int32)
        self.concept_counts = np.zeros(CONCEPT_CAPACITY, dtype=np.int64)

        self._out_steps = np.empty(SPIKE_BUF, dtype=np.int32)
        self._out_ids = np.empty(SPIKE_BUF, dtype=np.int32)
        self._empty_drive = Drive(
            idx=np.zeros(0, dtype=np.int64), amp=np.zeros(0),
            events=np.zeros((0, 0), dtype=np.uint8))

    # --- geometry ------------------------------------------------------
    def bounds(self, layer: str) -> tuple[int, int]:
        return self.offsets[layer]

    def layer_size(self, layer: str) -> int:
        lo, hi = self.offsets[layer]
        return hi - lo

    @property
    def refrac_steps(self) -> int:
        if self.refrac_override is not None:
            return int(self.refrac_override)
        return int(round(self.lif.refractory))

    @property
    def _adapt_decay(self) -> float:
        return float(np.exp(-1.0 / self.lif.adapt_tau))

    # --- drive construction --------------------------------------------
    def make_drive(self, idx: np.ndarray, rates_hz: np.ndarray, steps: int,
                   start_offsets: np.ndarray | None = None,
                   amp: float | None = None) -> Drive:
        """Independent Bernoulli(rate*dt) event trains per driven neuron."""
        idx = np.asarray(idx, dtype=np.int64)
        rates_hz = np.asarray(rates_hz, dtype=np.float64)
        p = np.clip(rates_hz / 1000.0, 0.0, 1.0)
        events = (self.rng.random((steps, idx.shape[0])) < p[None, :]).astype(np.uint8)
        if start_offsets is not None:
            for j, off in enumerate(start_offsets):
                events[:int(off), j] = 0
        if amp is None:
            amp = 1.5 * (self.lif.v_threshold - self.lif.v_reset)
        return Drive(idx=idx, amp=np.full(idx.shape[0], amp), events=events)

    def pattern_drive(self, pattern, steps: int) -> Drive:
        """Drive for an encoder activation pattern targeting the sensory layer."""
        lo, hi = self.bounds("L1_sensory")
        if pattern.n_total != hi - lo:
            raise ConfigurationError(
                f"pattern population {pattern.n_total} != sensory layer size {hi - lo}")
        return self.make_drive(pattern.indices + lo, pattern.rates, steps)

    @staticmethod
    def merge_drives(a: Drive, b: Drive) -> Drive:
        if a.idx.shape[0] == 0:
            return b
        if b.idx.shape[0] == 0:
            return a
        steps = max(a.events.shape[0], b.events.shape[0])

        def pad(ev, steps):
            if ev.shape[0] == steps:
                return ev
            out = np.zeros((steps, ev.shape[1]), dtype=np.uint8)
            out[:ev.shape[0]] = ev
            return out

        return Drive(
            idx=np.concatenate([a.idx, b.idx]),
            amp=np.concatenate([a.amp, b.amp]),
            events=np.hstack([pad(a.events, steps), pad(b.events, steps)]),
        )

    # --- stepping ------------------------------------------------------
    def advance(self, duration_ms: int, drive: Drive | None = None,
                stdp=None, collect: bool = False,
                tau_scale: float = 1.0) -> SpikeRecord | None:
        """Run the network for duration_ms of 1 ms steps.

        ``stdp`` is a plasticity runtime (see plasticity.StdpRuntime) whose
        pairing pass is applied to every chunk's spikes. With ``collect``
        the full spike list is returned as a SpikeRecord.
        """
        steps_total = int(duration_ms)
        if steps_total <= 0:
            raise ConfigurationError("duration must be positive")
        if drive is None:
            drive = self._empty_drive
        lif = self.lif
        inv_tau = 1.0 / lif.tau_m
        v_floor = lif.v_reset - 10.0 * max(lif.noise_sigma, 0.1)
        # tau_scale compresses the slow dynamics alongside the plasticity
        # constants, so a time-compressed replay adapts like its real-time
        # counterpart instead of silencing frequently replayed populations
        adapt_decay = float(np.exp(-1.0 / (lif.adapt_tau * tau_scale)))
        pl_indptr, pl_targets, pl_w = self.synapses.plastic_csr()
        t_start = self.t_ms
        done = 0
        times_acc, ids_acc = [], []
        while done < steps_total:
            steps = min(CHUNK_STEPS, steps_total - done)
            sub_done = 0
            while sub_done < steps:
                got, n_sp, lcg = _kernels.run_chunk(
                    steps - sub_done, self.v, self.refrac, self.adapt,
                    self.buf_a, self.buf_b,
                    inv_tau, lif.v_rest, lif.v_reset, lif.v_threshold, v_floor,
                    self.bias, lif.noise_sigma, self.refrac_steps,
                    adapt_decay, lif.adapt_increment,
                    self.noise_pool, self.lcg_state,
                    self.synapses.fx_indptr, self.synapses.fx_targets, self.synapses.fx_w,
                    pl_indptr, pl_targets, pl_w,
                    drive.idx, drive.amp, drive.events, done + sub_done,
                    self.concept_of, self.concept_counts,
                    self._out_steps, self._out_ids)
                # keep the LCG word unsigned: the jitted arithmetic depends
                # on the argument dtype, so a Python int here would change
                # the noise stream
                self.lcg_state = np.uint64(lcg)
                t0 = self.t_ms
                if stdp is not None and n_sp:
                    stdp.process(self._out_steps, self._out_ids, n_sp, t0,
                                 self, tau_scale)
                if collect and n_sp:
                    times_acc.append(t0 + self._out_steps[:n_sp].astype(np.int64))
                    ids_acc.append(self._out_ids[:n_sp].astype(np.int64))
                self.t_ms += got
                sub_done += got
            done += steps
        if collect:
            times = np.concatenate(times_acc) if times_acc else np.zeros(0, dtype=np.int64)
            ids = np.concatenate(ids_acc) if ids_acc else np.zeros(0, dtype=np.int64)
            return SpikeRecord(t_start=t_start, t_end=self.t_ms, times=times, ids=ids)
        return None

    def inject(self, pattern, duration_ms: int, stdp=None,
               collect: bool = False) -> SpikeRecord | None:
        """Poisson spike-train injection of an activation pattern into L1."""
        drive = self.pattern_drive(pattern, int(duration_ms))
        return self.advance(int(duration_ms), drive=drive, stdp=stdp, collect=collect)

    def skip_time(self, duration_ms: int) -> None:
        """Advance the simulated clock without dynamics (analytic fast-forward)."""
        self.t_ms += int(duration_ms)
        self.adapt *= np.exp(-float(duration_ms) / self.lif.adapt_tau)

    # --- calibration ---------------------------------------------------
    def calibrate_bias(self, target_hz: float = 0.9, trial_s: float = 4.0,
                       lo: float = -0.02, hi: float = 0.05, iters: int = 20) -> float:
        """Bisect the auxiliary drive constant until idle rate hits the target.

        Runs trials on the live arrays and restores all state afterwards,
        so calibration is invisible to the subsequent simulation.
        """
        saved = (self.v.copy(), self.refrac.copy(), self.buf_a.copy(),
                 self.buf_b.copy(), self.t_ms, self.lcg_state,
                 self.concept_counts.copy(), self.adapt.copy())

        def trial(bias: float) -> float:
            self.v[:] = self.lif.v_rest
            self.refrac[:] = 0
            self.adapt[:] = 0.0
            self.buf_a[:] = 0.0
            self.buf_b[:] = 0.0
            self.lcg_state = saved[5]
            self.bias = bias
            steps = int(trial_s * 1000)
            self._count_spikes(500)  # settle transient
            spikes = self._count_spikes(steps)
            return spikes / (self.n_total * (steps / 1000.0))

        f_lo, f_hi = trial(lo), trial(hi)
        tries = 0
        while f_lo > target_hz and tries < 5:
            lo -= 0.02
            f_lo = trial(lo)
            tries += 1
        while f_hi < target_hz and tries < 10:
            hi += 0.05
            f_hi = trial(hi)
            tries += 1
        if not (f_lo <= target_hz <= f_hi):
            raise ConfigurationError(
                f"cannot bracket target rate {target_hz} Hz: [{f_lo:.3f}, {f_hi:.3f}]")
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if trial(mid) < target_hz:
                lo = mid
            else:
                hi = mid
        bias = 0.5 * (lo + hi)
        (self.v[:], self.refrac[:], self.buf_a[:], self.buf_b[:],
         self.t_ms, self.lcg_state, self.concept_counts[:],
         self.adapt[:]) = saved
        self.bias = bias
        return bias

    def _count_spikes(self, steps: int) -> int:
        count = 0
        done = 0
        while done < steps:
            got, n_sp, lcg = _kernels.run_chunk(
                min(CHUNK_STEPS, steps - done), self.v, self.refrac,
                self.adapt, self.buf_a, self.buf_b,
                1.0 / self.lif.tau_m, self.lif.v_rest, self.lif.v_reset,
                self.lif.v_threshold, self.lif.v_reset - 1.0,
                self.bias, self.lif.noise_sigma, self.refrac_steps,
                self._adapt_decay, self.lif.adapt_increment,
                self.noise_pool, self.lcg_state,
                self.synapses.fx_indptr, self.synapses.fx_targets, self.synapses.fx_w,
                *self.synapses.plastic_csr(),
                self._empty_drive.idx, self._empty_drive.amp,
                self._empty_drive.events, 0,
                self.concept_of, np.zeros(1, dtype=np.int64),
                self._out_steps, self._out_ids)
            self.lcg_state = np.uint64(lcg)
            count += n_sp
            done += got
        return count

    # --- measurement ---------------------------------------------------
    def spontaneous_rate(self, duration_s: float) -> float:
        """Mean firing rate (Hz per neuron) over a noise-only run."""
        steps = int(duration_s * 1000)
        rec = self.advance(steps, collect=True)
        return rec.ids.shape[0] / (self.n_total * duration_s)


def build(layers: list[LayerSpec], lif: LifParams, conn: ConnectivityConfig,
          seed: int) -> tuple[Substrate, SynapseStore]:
    """Construct a clean-start substrate; every plastic weight is zero."""
    sub = Substrate(layers, lif, conn, seed)
    return sub, sub.synapses
