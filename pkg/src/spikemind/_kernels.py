"""Jitted inner loops: chunked LIF stepping and spike-pair plasticity.

Weights are only modified between chunks (reward application, homeostatic
decay), so each chunk can propagate spikes through frozen CSR snapshots of
the fixed and plastic projections. Membrane noise comes from a pregenerated
Gaussian pool indexed by a 64-bit LCG offset per step, which is far cheaper
than drawing fresh normals every step and just as reproducible.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, types
from numba.typed import Dict as NumbaDict

LCG_MULT = np.uint64(6364136223846793005)
LCG_INC = np.uint64(1442695040888963407)

RING_BITS = 14
RING_CAP = 1 << RING_BITS
RING_MASK = RING_CAP - 1

# headroom required in the lateral arrays before each spike is processed;
# the kernel returns early for regrowth when it drops below this
LAT_HEADROOM = 8192


def new_lateral_map() -> "NumbaDict":
    return NumbaDict.empty(key_type=types.int64, value_type=types.int64)


@njit(cache=True)
def run_chunk(steps, v, refrac, adapt, buf_a, buf_b,
              inv_tau, v_rest, v_reset, v_threshold, v_floor, bias, sigma,
              refrac_steps, adapt_decay, adapt_inc,
              pool, lcg_state,
              fx_indptr, fx_targets, fx_w,
              pl_indptr, pl_targets, pl_w,
              drive_idx, drive_amp, drive_ev, drive_row0,
              concept_of, concept_counts,
              out_steps, out_ids):
    """Advance the membrane dynamics for up to ``steps`` 1 ms steps.

    Returns (steps_done, n_spikes, lcg_state). steps_done < steps only when
    the spike output buffers filled up; the caller resumes the remainder.
    """
    n = v.shape[0]
    m = drive_idx.shape[0]
    pool_n = np.uint64(pool.shape[0] - n)
    cap = out_steps.shape[0]
    cnt = 0
    s = 0
    while s < steps:
        if cnt + n > cap:
            break
        if s % 2 == 0:
            cur = buf_a
            nxt = buf_b
        else:
            cur = buf_b
            nxt = buf_a
        for i in range(n):
            nxt[i] = 0.0
        for j in range(m):
            if drive_ev[drive_row0 + s, j] != 0:
                cur[drive_idx[j]] += drive_amp[j]
        lcg_state = lcg_state * LCG_MULT + LCG_INC
        off = np.int64((lcg_state >> np.uint64(16)) % pool_n)
        for i in range(n):
            adapt[i] *= adapt_decay
            if refrac[i] > 0:
                refrac[i] -= 1
                v[i] = v_reset
            else:
                vi = v[i] + inv_tau * (v_rest - v[i]) + cur[i] + bias \
                    - adapt[i] + sigma * pool[off + i]
                if vi < v_floor:
                    vi = v_floor
                if vi >= v_threshold:
                    v[i] = v_reset
                    refrac[i] = refrac_steps
                    adapt[i] += adapt_inc
                    out_steps[cnt] = s
                    out_ids[cnt] = i
                    cnt += 1
                    ci = concept_of[i]
                    if ci >= 0:
                        concept_counts[ci] += 1
                    for p in range(fx_indptr[i], fx_indptr[i + 1]):
                        nxt[fx_targets[p]] += fx_w[p]
                    for p in range(pl_indptr[i], pl_indptr[i + 1]):
                        nxt[pl_targets[p]] += pl_w[p]
                else:
                    v[i] = vi
        s += 1
    if s % 2 == 1:
        for i in range(n):
            buf_a[i] = buf_b[i]
            buf_b[i] = 0.0
    return s, cnt, lcg_state


@njit(cache=True)
def stdp_chunk(sp_steps, sp_ids, n_sp, start_idx, t0,
               l2_lo, l2_hi, l3_lo, l3_hi, l4_lo, l4_hi,
               last_spike, ring_t, ring_id, ring_head,
               visited, visit_ctr,
               lat_map, lat_pre, lat_post, lat_w, lat_elig, lat_elig_t,
               lat_created, lat_updated, lat_size,
               n_total,
               a_plus, a_minus, tau_plus, tau_minus, tau_elig, window,
               materialize,
               ff23_in_indptr, ff23_in_pre, ff23_in_syn,
               ff23_out_indptr, ff23_out_post, ff23_out_syn,
               ff23_elig, ff23_elig_t,
               ff34_in_indptr, ff34_in_pre, ff34_in_syn,
               ff34_out_indptr, ff34_out_post, ff34_out_syn,
               ff34_elig, ff34_elig_t,
               ffa_plus, ffa_minus):
    """Nearest-neighbour spike pairing over one chunk's spike list.

    Pairs each spike with the most recent in-window spike of every partner:
    eligibility on lateral synapses (materialised on first co-activation)
    and on the fixed-sparsity plastic feedforward synapses. Returns
    (spikes_processed, lat_size, visit_ctr, ring_head); spikes_processed
    may stop short when the lateral arrays need regrowth.
    """
    lat_cap = lat_w.shape[0]
    i = start_idx
    while i < n_sp:
        if materialize and lat_cap - lat_size < LAT_HEADROOM:
            return i, lat_size, visit_ctr, ring_head
        t = float(t0 + sp_steps[i])
        nid = np.int64(sp_ids[i])
        in_l2 = l2_lo <= nid < l2_hi
        if in_l2:
            visit_ctr += 1
            j = ring_head - 1
            scanned = 0
            while scanned < RING_CAP:
                jj = j & RING_MASK
                tp = ring_t[jj]
                if tp < t - window:
                    break
                pre = np.int64(ring_id[jj])
                if pre != nid and visited[pre] != visit_ctr:
                    visited[pre] = visit_ctr
                    dtp = t - tp
                    if dtp > 0.0:
                        inc_pot = a_plus * math.exp(-dtp / tau_plus)
                        inc_dep = -a_minus * math.exp(-dtp / tau_minus)
                    else:
                        inc_pot = 0.0
                        inc_dep = 0.0
                    # pre fired first: potentiate pre->nid, depress nid->pre
                    key = pre * n_total + nid
                    if key in lat_map:
                        si = lat_map[key]
                        e = lat_elig[si] * math.exp(-(t - lat_elig_t[si]) / tau_elig)
                        lat_elig[si] = e + inc_pot
                        lat_elig_t[si] = t
                        lat_updated[si] = t
                    elif materialize:
                        si = lat_size
                        lat_map[key] = si
                        lat_pre[si] = pre
                        lat_post[si] = nid
                        lat_w[si] = 0.0
                        lat_elig[si] = inc_pot
                        lat_elig_t[si] = t
                        lat_created[si] = t
                        lat_updated[si] = t
                        lat_size += 1
                    key = nid * n_total + pre
                    if key in lat_map:
                        si = lat_map[key]
                        e = lat_elig[si] * math.exp(-(t - lat_elig_t[si]) / tau_elig)
                        lat_elig[si] = e + inc_dep
                        lat_elig_t[si] = t
                        lat_updated[si] = t
                    elif materialize:
                        si = lat_size
                        lat_map[key] = si
                        lat_pre[si] = nid
                        lat_post[si] = pre
                        lat_w[si] = 0.0
                        lat_elig[si] = inc_dep
                        lat_elig_t[si] = t
                        lat_created[si] = t
                        lat_updated[si] = t
                        lat_size += 1
                j -= 1
                scanned += 1
            # this spike as pre of L2->L3: depress against earlier L3 spikes
            li = nid - l2_lo
            for p in range(ff23_out_indptr[li], ff23_out_indptr[li + 1]):
                tp = last_spike[ff23_out_post[p]]
                if tp >= t - window and tp < t:
                    syn = ff23_out_syn[p]
                    e = ff23_elig[syn] * math.exp(-(t - ff23_elig_t[syn]) / tau_elig)
                    ff23_elig[syn] = e - ffa_minus * math.exp(-(t - tp) / tau_minus)
                    ff23_elig_t[syn] = t
            ring_t[ring_head & RING_MASK] = t
            ring_id[ring_head & RING_MASK] = nid
            ring_head += 1
        elif l3_lo <= nid < l3_hi:
            li = nid - l3_lo
            # post of L2->L3: potentiate against earlier L2 spikes
            for p in range(ff23_in_indptr[li], ff23_in_indptr[li + 1]):
                tp = last_spike[ff23_in_pre[p]]
                if tp >= t - window and tp < t:
                    syn = ff23_in_syn[p]
                    e = ff23_elig[syn] * math.exp(-(t - ff23_elig_t[syn]) / tau_elig)
                    ff23_elig[syn] = e + ffa_plus * math.exp(-(t - tp) / tau_plus)
                    ff23_elig_t[syn] = t
            # pre of L3->L4: depress against earlier L4 spikes
            for p in range(ff34_out_indptr[li], ff34_out_indptr[li + 1]):
                tp = last_spike[ff34_out_post[p]]
                if tp >= t - window and tp < t:
                    syn = ff34_out_syn[p]
                    e = ff34_elig[syn] * math.exp(-(t - ff34_elig_t[syn]) / tau_elig)
                    ff34_elig[syn] = e - ffa_minus * math.exp(-(t - tp) / tau_minus)
                    ff34_elig_t[syn] = t
        elif l4_lo <= nid < l4_hi:
            li = nid - l4_lo
            for p in range(ff34_in_indptr[li], ff34_in_indptr[li + 1]):
                tp = last_spike[ff34_in_pre[p]]
                if tp >= t - window and tp < t:
                    syn = ff34_in_syn[p]
                    e = ff34_elig[syn] * math.exp(-(t - ff34_elig_t[syn]) / tau_elig)
                    ff34_elig[syn] = e + ffa_plus * math.exp(-(t - tp) / tau_plus)
                    ff34_elig_t[syn] = t
        last_spike[nid] = t
        i += 1
    return i, lat_size, visit_ctr, ring_head
