import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import single_state
from lowswitch import schedule
from lowswitch.agent import (
    STEP_FUNCTIONS,
    AgentOptions,
    HorizonExceeded,
    apply_lazy_switch,
    combine_and_propagate,
    greedy_q_step,
    init_state,
    maybe_update_reference,
    run,
    select_action,
    step,
    track_staleness,
    ucb_q_advantage_eager_step,
    ucb_q_step,
    update_moments,
    update_q_lcb,
    update_q_reference,
    update_q_ucb,
    update_reference_bonus,
)
from lowswitch.mdp import RngStream, TabularMdp, make_chain_mdp, make_random_mdp
from lowswitch.oracle import value_iteration
from lowswitch.schedule import HyperParams
from transcriptions import NaiveLearner, TimeIndexedLearner, naive_mismatches


def hp_for(mdp, c_b=2.0, T=10_000, delta=0.1):
    return HyperParams(c_b, delta, T, mdp.gamma, mdp.n_states, mdp.n_actions)


# -- initialization and action selection

def test_init_state_values():
    st_ = init_state(3, 2, 0.5)
    for name in ("q", "q_ucb", "q_ref", "q_lazy", "q_snapshot"):
        assert np.all(getattr(st_, name) == 2.0)
    assert np.all(st_.v == 2.0) and np.all(st_.v_ref == 2.0)
    assert np.all(st_.q_lcb == 0) and np.all(st_.v_lcb == 0) and np.all(st_.staleness == 0)
    for name in ("mu_ref", "sigma_ref", "mu_adv", "sigma_adv", "b_big_ref", "delta_ref"):
        assert np.all(getattr(st_, name) == 0)
    assert st_.u_ref.all() and not st_.u_switch and st_.buffer == {} and st_.t == 0


def test_init_state_rejects_bad_sizes():
    with pytest.raises(ValueError):
        init_state(0, 2, 0.5)
    with pytest.raises(ValueError):
        init_state(2, 2, 0.5, initial_state=2)


@pytest.mark.parametrize("row,expect", [([2.0, 2.0, 2.0], 0), ([1, 3, 3], 1), ([0, 0, 5], 2)])
def test_select_action(row, expect):
    st_ = init_state(1, 3, 0.5)
    st_.q_lazy[0] = row
    assert select_action(st_, 0) == expect


# -- estimate updates

def test_update_q_ucb_first_visit_erases_prior():
    mdp = make_chain_mdp(2, 0.0, 0.5)
    hp = hp_for(mdp, c_b=1.0)
    st_ = init_state(2, 2, 0.5)
    st_.q_ucb[0, 1] = 123.0
    b1 = schedule.hoeffding_bonus(hp.c_b, hp.iota, 0.5, 1)
    assert update_q_ucb(st_, hp, 0, 1, 0.5, 1, 1) == 0.5 + 0.5 * 2.0 + b1


def test_update_q_ucb_direct_value():
    # Choose c_b so that b_1 = 1: r=0.5, gamma=0.5, v(s')=2 gives 2.5.
    mdp = make_chain_mdp(2, 0.0, 0.5)
    iota = hp_for(mdp).iota
    hp = hp_for(mdp, c_b=1.0 / math.sqrt(iota / 0.125))
    st_ = init_state(2, 2, 0.5)
    assert update_q_ucb(st_, hp, 0, 0, 0.5, 1, 1) == pytest.approx(2.5, abs=1e-12)
    assert update_q_lcb(st_, hp, 0, 0, 0.5, 1, 1) == pytest.approx(-0.5, abs=1e-12)


def test_ucb_and_lcb_coincide_without_bonus():
    mdp = make_chain_mdp(2, 0.0, 0.5)
    hp = hp_for(mdp, c_b=0.0)
    st_ = init_state(2, 2, 0.5)
    st_.v_lcb[:] = st_.v
    st_.q_lcb[:] = st_.q_ucb
    for n in range(1, 6):
        assert update_q_ucb(st_, hp, 1, 0, 0.3, 0, n) == update_q_lcb(st_, hp, 1, 0, 0.3, 0, n)


def test_classic_target_without_bonus(chain2):
    hp = hp_for(chain2, c_b=0.0)
    sol = value_iteration(chain2)
    st_ = init_state(2, 2, 0.5)
    st_.v[:] = sol.v_star
    got = update_q_ucb(st_, hp, 0, 1, 0.0, 1, 1)
    assert got == 0.0 + 0.5 * sol.v_star[1]


def test_update_moments_examples():
    st_ = init_state(1, 1, 0.5)
    update_moments(st_, 0, 0, 1.5, 0.7, 1, 4)
    assert st_.mu_ref[0, 0] == 0.7
    st_ = init_state(1, 1, 0.5)
    for n in range(1, 8):
        update_moments(st_, 0, 0, 1.0, 0.25, n, 4)
    assert st_.mu_ref[0, 0] == 0.25 and st_.sigma_ref[0, 0] == 0.0625
    st_ = init_state(1, 1, 0.5)
    update_moments(st_, 0, 0, 0.0, 0.0, 1, 4)
    update_moments(st_, 0, 0, 2.0, 2.0, 2, 4)
    assert st_.mu_ref[0, 0] == 1.0 and st_.sigma_ref[0, 0] == 2.0
    assert st_.sigma_ref[0, 0] - st_.mu_ref[0, 0] ** 2 == 1.0


def test_update_reference_bonus_examples():
    mdp = single_state(0.5, 0.75)
    hp = hp_for(mdp, c_b=1.0)
    st_ = init_state(1, 1, 0.75)
    update_moments(st_, 0, 0, 3.0, 3.0, 1, hp.H)
    assert update_reference_bonus(st_, hp, 0, 0, 1) == (0.0, 0.0)
    st_.mu_ref[0, 0], st_.sigma_ref[0, 0] = 0.0, 4.0
    st_.mu_adv[0, 0], st_.sigma_adv[0, 0] = 0.0, 1.0
    _, b1 = update_reference_bonus(st_, hp, 0, 0, 1)
    delta, b4 = update_reference_bonus(st_, hp, 0, 0, 4)
    assert b4 == pytest.approx(b1 / 2, rel=1e-14)
    assert delta == pytest.approx(-b1 / 2, rel=1e-14) and delta < 0


def test_update_q_reference_first_visit():
    mdp = single_state(0.5, 0.75)
    hp = hp_for(mdp, c_b=1.0)
    st_ = init_state(1, 1, 0.75)
    st_.v[0], st_.v_ref[0] = 3.0, 3.5
    update_moments(st_, 0, 0, 3.0, 3.5, 1, hp.H)
    update_reference_bonus(st_, hp, 0, 0, 1)
    got = update_q_reference(st_, hp, 0, 0, 0.5, 0, 1)
    corr = schedule.lower_order_correction(1.0, hp.iota, 0.75, 1)
    expect = 0.5 + 0.75 * (3.0 - 3.5 + 3.5) + st_.b_big_ref[0, 0] + corr
    assert got == pytest.approx(expect, rel=1e-15)


def test_combine_and_propagate_min_and_max():
    st_ = init_state(1, 2, 0.875)
    st_.q_ref[0, 0], st_.q_ucb[0, 0], st_.q[0, 0] = 4.5, 5.0, 4.0
    st_.q_lcb[0] = [1.0, -2.0]
    st_.v_lcb[0] = 1.5
    combine_and_propagate(st_, 0, 0)
    assert st_.q[0, 0] == 4.0 and st_.v[0] == 8.0 and st_.v_lcb[0] == 1.5
    st_.q_lcb[0, 1] = 2.0
    combine_and_propagate(st_, 0, 1)
    assert st_.v_lcb[0] == 2.0


# -- staleness and lazy switching

def test_staleness_hand_simulation():
    st_ = init_state(1, 1, 0.5)
    raised = []
    for q in (1.5, 1.5, 1.5, 1.5):
        st_.q[0, 0] = q
        raised.append(track_staleness(st_, 0, 0))
    assert raised == [False] * 4 and st_.staleness[0, 0] == 2.0
    st_.q[0, 0] = 1.4
    assert track_staleness(st_, 0, 0)
    assert st_.u_switch and st_.staleness[0, 0] == 0.0 and st_.q_snapshot[0, 0] == 1.4


def test_staleness_no_change_never_triggers():
    st_ = init_state(2, 2, 0.5)
    assert not any(track_staleness(st_, 1, 1) for _ in range(100))
    assert st_.staleness[1, 1] == 0


def test_staleness_single_large_drop():
    st_ = init_state(1, 1, 0.5)
    st_.q[0, 0] = -0.5
    assert track_staleness(st_, 0, 0)


def test_apply_lazy_switch_empty_buffer():
    st_ = init_state(2, 2, 0.5)
    before = st_.q_lazy.copy()
    st_.u_switch = True
    apply_lazy_switch(st_)
    assert np.array_equal(st_.q_lazy, before) and st_.switch_count == 1 and not st_.u_switch


def test_apply_lazy_switch_single_entry():
    st_ = init_state(2, 2, 0.5)
    st_.buffer[(0, 1)] = 1.5
    apply_lazy_switch(st_)
    expect = np.full((2, 2), 2.0)
    expect[0, 1] = 1.5
    assert np.array_equal(st_.q_lazy, expect) and st_.buffer == {}


def test_lazy_table_matches_full_copy(random53):
    """Keep a full snapshot of q at every switch; the buffered table must equal it."""
    hp = hp_for(random53, c_b=0.005, T=3000)
    st_ = init_state(5, 3, 0.9)
    rng = RngStream(4, 1)
    q_end_prev = st_.q.copy()
    switches = 0
    for _ in range(3000):
        rec = step(st_, random53, hp, rng)
        if rec.switched:
            switches += 1
            assert np.array_equal(st_.q_lazy, q_end_prev)
        q_end_prev = st_.q.copy()
    assert switches > 5


def test_maybe_update_reference_branches():
    st_ = init_state(1, 1, 0.9)
    st_.v[0], st_.v_lcb[0] = 6.0, 2.0
    maybe_update_reference(st_, 0)
    assert st_.v_ref[0] == 6.0 and st_.u_ref[0]
    st_.v[0] = 4.0
    maybe_update_reference(st_, 0)
    assert st_.v_ref[0] == 4.0 and not st_.u_ref[0]
    st_.v[0] = 3.9
    maybe_update_reference(st_, 0)
    assert st_.v_ref[0] == 4.0 and not st_.u_ref[0]


# -- full steps

def test_step_replay_identical(random53):
    hp = hp_for(random53)
    a, b = init_state(5, 3, 0.9), init_state(5, 3, 0.9)
    ra, rb = RngStream(1, 1), RngStream(1, 1)
    assert [step(a, random53, hp, ra) for _ in range(300)] == [step(b, random53, hp, rb) for _ in range(300)]
    assert a.equals(b)


def test_single_pair_visit_count():
    mdp = single_state(0.4, 0.9)
    hp = hp_for(mdp, T=250)
    st_ = init_state(1, 1, 0.9)
    rng = RngStream(0, 1)
    for _ in range(250):
        step(st_, mdp, hp, rng)
    assert st_.visit_count[0, 0] == 250
    with pytest.raises(HorizonExceeded):
        step(st_, mdp, hp, rng)


def assert_matches_naive(state, naive):
    assert naive_mismatches(state, naive) == []


@pytest.mark.parametrize("ref_next", [False, True])
def test_per_step_path_matches_naive_transcription(random53, ref_next):
    T = 1000
    hp = hp_for(random53, c_b=0.005, T=T)
    st_ = init_state(5, 3, 0.9)
    naive = NaiveLearner(random53.transitions.tolist(), random53.rewards.tolist(), 0.9, 0.005, 0.1, T, ref_next=ref_next)
    rng, rng2 = RngStream(3, 1), RngStream(3, 1)
    opts = AgentOptions(reference_update_next_state=ref_next)
    records = [step(st_, random53, hp, rng, opts) for _ in range(T)]
    for _ in range(T):
        naive.step(rng2.random())
    assert [tuple(r.__dict__.values()) for r in records] == naive.log
    assert_matches_naive(st_, naive)
    assert st_.switch_count > 0


@pytest.mark.parametrize("ref_next", [True, False])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_switch_timing_matches_time_indexed_form(seed, ref_next):
    mdp = make_random_mdp(4, 3, 0.8, 0.5, RngStream(seed + 100))
    T = 1500
    hp = hp_for(mdp, c_b=0.02, T=T)
    st_ = init_state(4, 3, 0.8)
    trace = run(st_, mdp, hp, RngStream(seed, 1), T, options=AgentOptions(reference_update_next_state=ref_next))
    ref = TimeIndexedLearner(mdp.transitions.tolist(), mdp.rewards.tolist(), 0.8, 0.02, 0.1, T, ref_next=ref_next)
    rng = RngStream(seed, 1)
    for _ in range(T):
        ref.step(rng.random())
    assert trace.actions.tolist() == ref.actions
    assert len(set(ref.Z.values())) > 3
    table = ref.execution_table
    assert np.array_equal(st_.q_lazy, np.array([[table[(s, a)] for a in range(3)] for s in range(4)]))
    assert np.array_equal(st_.q, np.array([[ref.inner.Q[(s, a)] for a in range(3)] for s in range(4)]))


# -- invariants over random instances

@settings(max_examples=30, deadline=None)
@given(
    S=st.integers(1, 5), A=st.integers(1, 3), gamma=st.sampled_from([0.5, 0.8, 0.9]),
    c_b=st.sampled_from([0.0, 0.01, 0.5, 2.0]), seed=st.integers(0, 2**32), ref_next=st.booleans(),
)
def test_step_invariants(S, A, gamma, c_b, seed, ref_next):
    mdp = make_random_mdp(S, A, gamma, 1.0, RngStream(seed))
    T = 400
    hp = hp_for(mdp, c_b=c_b, T=T)
    st_ = init_state(S, A, gamma)
    rng = RngStream(seed, 1)
    opts = AgentOptions(reference_update_next_state=ref_next)
    top = 1 / (1 - gamma)
    for t in range(1, T + 1):
        q_prev, vlcb_prev = st_.q.copy(), st_.v_lcb.copy()
        rec = step(st_, mdp, hp, rng, opts)
        assert np.all(st_.q <= q_prev)
        assert np.all(st_.v_lcb >= vlcb_prev)
        assert st_.v[rec.state] == st_.q[rec.state].max()
        assert st_.visit_count.sum() == t
        assert np.all(st_.q <= top)
        assert np.all(st_.sigma_ref >= st_.mu_ref ** 2 - 1e-12)
        assert np.all(st_.sigma_adv >= st_.mu_adv ** 2 - 1e-12)


# -- baselines

def test_ucb_q_without_bonus_is_greedy_q_update(random53):
    """With c_b=0 each estimate update is the plain Q-learning step.

    Trajectories can still differ because ucb_q keeps the running minimum.
    """
    hp = hp_for(random53, c_b=0.0, T=2000)
    a = init_state(5, 3, 0.9)
    rng = RngStream(2, 1)
    for _ in range(2000):
        b = a.copy()
        b.q[:] = a.q_ucb
        b.v[:] = a.v
        rec = ucb_q_step(a, random53, hp, rng)
        s, act = rec.state, rec.action
        eta = schedule.step_learning_rate(hp.H, rec.n_after)
        expect = (1.0 - eta) * b.q[s, act] + eta * (rec.reward + 0.9 * b.v[rec.next_state])
        assert a.q_ucb[s, act] == expect


def test_eager_switch_count_counts_greedy_changes(random53):
    hp = hp_for(random53, c_b=0.05, T=3000)
    for fn in (ucb_q_step, ucb_q_advantage_eager_step, greedy_q_step):
        st_ = init_state(5, 3, 0.9)
        rng = RngStream(8, 1)
        changes = 0
        for _ in range(3000):
            before = np.argmax(st_.q, axis=1)
            fn(st_, random53, hp, rng)
            changes += int(np.any(before != np.argmax(st_.q, axis=1)))
        assert st_.switch_count == changes


def test_eager_q_matches_main_on_single_state():
    mdp = single_state(0.7, 0.9)
    hp = hp_for(mdp, T=500)
    a, b = init_state(1, 1, 0.9), init_state(1, 1, 0.9)
    ra, rb = RngStream(0, 1), RngStream(0, 1)
    for _ in range(500):
        step(a, mdp, hp, ra)
        ucb_q_advantage_eager_step(b, mdp, hp, rb)
        assert a.q[0, 0] == b.q[0, 0]
    assert b.switch_count == 0


def test_eager_replay_identical(chain6):
    hp = hp_for(chain6, T=400)
    out = []
    for _ in range(2):
        st_ = init_state(6, 2, 0.95)
        rng = RngStream(5, 1)
        out.append([ucb_q_advantage_eager_step(st_, chain6, hp, rng) for _ in range(400)])
    assert out[0] == out[1]


def test_eager_switches_at_least_main_on_chain(chain6):
    T = 100_000
    hp = hp_for(chain6, c_b=2.0, T=T)
    for seed in range(10):
        counts = {}
        for algo in ("main", "ucb_q_adv_eager"):
            st_ = init_state(6, 2, 0.95)
            counts[algo] = run(st_, chain6, hp, RngStream(seed, 1), T, algo).switch_count
        assert counts["ucb_q_adv_eager"] >= counts["main"]


def test_ucb_q_optimism_on_small_mdps(chain6, random53):
    T = 100_000
    for mdp in (chain6, random53):
        q_star = value_iteration(mdp).q_star
        hp = hp_for(mdp, c_b=2.0, T=T)
        for seed in range(10):
            st_ = init_state(mdp.n_states, mdp.n_actions, mdp.gamma)
            trace = run(st_, mdp, hp, RngStream(seed, 1), T, "ucb_q", q_star=q_star)
            assert int(trace.optimism_viol.sum()) == 0


def test_greedy_q_converges_on_single_pair():
    mdp = single_state(1.0, 0.9)
    hp = hp_for(mdp, T=100_000)
    st_ = init_state(1, 1, 0.9)
    run(st_, mdp, hp, RngStream(0, 1), 100_000, "greedy_q")
    assert abs(st_.q[0, 0] - 10.0) < 0.05


def test_greedy_q_zero_rewards_decays():
    mdp = single_state(0.0, 0.9)
    hp = hp_for(mdp, T=300)
    st_ = init_state(1, 1, 0.9)
    rng = RngStream(0, 1)
    prev = st_.q[0, 0]
    for _ in range(300):
        greedy_q_step(st_, mdp, hp, rng)
        assert 0 <= st_.q[0, 0] <= prev
        prev = st_.q[0, 0]


def test_random_step_consumes_two_uniforms():
    mdp = make_chain_mdp(3, 0.2, 0.9)
    hp = hp_for(mdp, T=10)
    st_ = init_state(3, 2, 0.9)
    rng = RngStream(0, 1)
    STEP_FUNCTIONS["random"](st_, mdp, hp, rng)
    u = RngStream(0, 1).uniforms(3)
    assert rng.random() == u[2]
