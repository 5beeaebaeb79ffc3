"""Pair-based plasticity rule: kernel shape, reward gating, cascade decay."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spikemind.config import ConnectivityConfig, DecayConfig, LifParams, StdpConfig
from spikemind.plasticity import (
    DopamineSignal,
    apply_reward,
    cascade_decay,
    stdp_kernel,
    weight_audit,
)
from spikemind.substrate import Substrate, default_layers

CFG = StdpConfig()


def tiny_substrate(seed=0):
    # smallest legal layer sizes; enough to exercise the synapse stores
    return Substrate(default_layers(0.0001), LifParams(), ConnectivityConfig(),
                     seed)


# ---------------------------------------------------------------------------
# kernel shape


def test_kernel_closed_form_values():
    # independently computed: A+ e^(-10/20) and -A- e^(-10/30)
    assert stdp_kernel(10.0, CFG) == pytest.approx(0.05 * 0.6065306597126334,
                                                  abs=1e-9)
    assert stdp_kernel(-10.0, CFG) == pytest.approx(
        -0.0525 * 0.7165313105737893, abs=1e-9)
    assert stdp_kernel(0.0, CFG) == 0.0


def test_depression_dominates_potentiation():
    assert CFG.a_minus / CFG.a_plus == pytest.approx(1.05)
    # net effect of a symmetric +dt/-dt pair is negative for all dt
    for dt in (1.0, 5.0, 20.0, 50.0, 99.0):
        assert stdp_kernel(dt, CFG) + stdp_kernel(-dt, CFG) < 0


@settings(max_examples=50, deadline=None)
@given(dt=st.floats(0.1, 100.0))
def test_kernel_signs_and_decay(dt):
    assert stdp_kernel(dt, CFG) > 0
    assert stdp_kernel(-dt, CFG) < 0
    assert abs(stdp_kernel(dt * 2, CFG)) < abs(stdp_kernel(dt, CFG))


def test_poisson_pairing_drifts_negative():
    """Uncorrelated spike trains must depress on average (kernel integral
    A+ tau+ - A- tau- = 0.05*20 - 0.0525*30 < 0)."""
    rng = np.random.default_rng(42)
    totals = []
    for _ in range(50):
        # two independent Poisson trains, nearest-neighbour pairing
        t_pre = np.cumsum(rng.exponential(50.0, size=200))
        t_post = np.cumsum(rng.exponential(50.0, size=200))
        total = 0.0
        for tp in t_post:
            earlier = t_pre[(t_pre < tp) & (t_pre >= tp - CFG.pairing_window)]
            if earlier.size:
                total += stdp_kernel(tp - earlier[-1], CFG)
        for tp in t_pre:
            earlier = t_post[(t_post < tp) & (t_post >= tp - CFG.pairing_window)]
            if earlier.size:
                total += stdp_kernel(earlier[-1] - tp, CFG)
        totals.append(total)
    totals = np.asarray(totals)
    # one-sided t-test against zero mean, p < 0.01
    from scipy import stats
    t, p = stats.ttest_1samp(totals, 0.0, alternative="less")
    assert p < 0.01, (totals.mean(), p)


# ---------------------------------------------------------------------------
# dopamine gating


def test_dopamine_magnitude_validation():
    with pytest.raises(ValueError):
        DopamineSignal(magnitude=1.5)
    with pytest.raises(ValueError):
        DopamineSignal(magnitude=-0.1)
    with pytest.raises(ValueError):
        DopamineSignal(magnitude=0.5, source="mystery")


def _seed_lateral(sub, elig, w=0.0, t=0.0):
    lat = sub.synapses.lateral
    l2_lo, _ = sub.bounds("L2_concept")
    for i, e in enumerate(elig):
        si = lat.size
        lat.map[(l2_lo + i) * sub.n_total + l2_lo + i + 1] = si
        lat.pre[si] = l2_lo + i
        lat.post[si] = l2_lo + i + 1
        lat.w[si] = w
        lat.elig[si] = e
        lat.elig_t[si] = t
        lat.size += 1
    sub.synapses.mark_dirty()


def test_reward_converts_decayed_eligibility_to_weight():
    sub = tiny_substrate()
    _seed_lateral(sub, elig=[0.4], t=0.0)
    cfg = CFG
    signal = DopamineSignal(magnitude=0.5, t_ms=1000.0)
    apply_reward(sub.synapses, signal, cfg, now_ms=1000.0)
    expected = cfg.eta * 0.5 * 0.4 * math.exp(-1000.0 / cfg.tau_eligibility)
    assert sub.synapses.lateral.w[0] == pytest.approx(expected, rel=1e-12)


def test_zero_magnitude_reward_is_a_no_op():
    sub = tiny_substrate()
    _seed_lateral(sub, elig=[0.4], t=0.0)
    apply_reward(sub.synapses, DopamineSignal(magnitude=0.0), CFG, now_ms=500.0)
    assert sub.synapses.lateral.w[0] == 0.0
    assert sub.synapses.lateral.elig[0] == 0.4  # untouched


def test_reward_clamps_to_weight_bounds():
    sub = tiny_substrate()
    _seed_lateral(sub, elig=[1e9, -1e9], w=0.1, t=0.0)
    apply_reward(sub.synapses, DopamineSignal(magnitude=1.0), CFG, now_ms=0.0)
    lat = sub.synapses.lateral
    assert lat.w[0] == CFG.w_max
    assert lat.w[1] == CFG.w_min


def test_negative_eligibility_depresses():
    sub = tiny_substrate()
    _seed_lateral(sub, elig=[-0.2], w=0.05, t=0.0)
    apply_reward(sub.synapses, DopamineSignal(magnitude=1.0), CFG, now_ms=0.0)
    assert sub.synapses.lateral.w[0] == pytest.approx(0.05 - CFG.eta * 0.2)


# ---------------------------------------------------------------------------
# cascade decay


def test_protected_weight_loses_1_6_percent_over_8_hours():
    sub = tiny_substrate()
    _seed_lateral(sub, elig=[0.0], w=0.07)
    cascade_decay(sub.synapses, 8 * 3.6e6, DecayConfig(), w_max=CFG.w_max)
    loss = 1.0 - sub.synapses.lateral.w[0] / 0.07
    assert loss == pytest.approx(0.016, abs=0.005)


def test_weak_weights_decay_faster_relative():
    sub = tiny_substrate()
    _seed_lateral(sub, elig=[0.0, 0.0, 0.0])
    lat = sub.synapses.lateral
    lat.w[:3] = [0.01, 0.07, 0.18]
    cascade_decay(sub.synapses, 8 * 3.6e6, DecayConfig(), w_max=CFG.w_max)
    rel = lat.w[:3] / np.array([0.01, 0.07, 0.18])
    assert rel[0] < rel[1] < rel[2]          # strong weights protected
    assert lat.w[0] < lat.w[1] < lat.w[2]    # ordering preserved


def test_decay_is_monotone_in_elapsed_time():
    decay = DecayConfig()
    losses = []
    for hours in (1, 4, 16):
        sub = tiny_substrate()
        _seed_lateral(sub, elig=[0.0], w=0.07)
        cascade_decay(sub.synapses, hours * 3.6e6, decay, w_max=CFG.w_max)
        losses.append(0.07 - sub.synapses.lateral.w[0])
    assert losses[0] < losses[1] < losses[2]


def test_decay_prunes_below_floor():
    sub = tiny_substrate()
    _seed_lateral(sub, elig=[0.0, 0.0], w=0.0)
    lat = sub.synapses.lateral
    lat.w[1] = 0.1
    pruned = cascade_decay(sub.synapses, 60_000.0, DecayConfig(),
                           w_max=CFG.w_max)
    assert pruned == 1
    assert lat.size == 1
    assert lat.w[0] == pytest.approx(0.1, rel=1e-3)


def test_decay_rejects_negative_elapsed():
    sub = tiny_substrate()
    with pytest.raises(ValueError):
        cascade_decay(sub.synapses, -1.0, DecayConfig(), w_max=CFG.w_max)


def test_decay_composes_over_split_intervals():
    """Splitting an interval in two gives (almost) the same result as one
    application; the error is second-order in the weight change."""
    a, b = tiny_substrate(), tiny_substrate()
    _seed_lateral(a, elig=[0.0], w=0.05)
    _seed_lateral(b, elig=[0.0], w=0.05)
    decay = DecayConfig()
    cascade_decay(a.synapses, 8 * 3.6e6, decay, w_max=CFG.w_max)
    cascade_decay(b.synapses, 4 * 3.6e6, decay, w_max=CFG.w_max)
    cascade_decay(b.synapses, 4 * 3.6e6, decay, w_max=CFG.w_max)
    assert a.synapses.lateral.w[0] == pytest.approx(b.synapses.lateral.w[0],
                                                    rel=1e-4)


# ---------------------------------------------------------------------------
# audit


def test_weight_audit_orders_and_labels():
    sub = tiny_substrate()
    _seed_lateral(sub, elig=[0.0, 0.0, 0.0])
    lat = sub.synapses.lateral
    lat.w[:3] = [0.02, 0.09, 0.01]
    rows = weight_audit(sub.synapses, sub.concept_of, labels=[], top_k=2)
    assert len(rows) == 2
    assert rows[0]["weight"] == pytest.approx(0.09)
    assert rows[0]["pre_concept"] is None
    assert rows[0]["weight"] >= rows[1]["weight"]
