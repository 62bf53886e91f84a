"""Controller math: estimator, shares, aggressiveness, window rules.

Expected numbers were fixed by evaluating the formulas independently (by
hand or with a throwaway calculator script) before wiring them to the
implementation.
"""

import math

import pytest
from hypothesis import given, settings, strategies as st

from cmtsim.congestion import (PaLedger, bwe_filter, bwe_sample,
                               compute_alpha, compute_beta, make_controller)

MTU = 1500


def berp(n=2, **kw):
    return make_controller("cmt-berp", n, **kw)


def cmtcc(n=2, **kw):
    return make_controller("cmt-cc", n, **kw)


# ---- pure functions ----

def test_bwe_sample_is_bytes_per_elapsed_second():
    assert bwe_sample(1452, 1.0, 0.0) == pytest.approx(1452.0)
    assert bwe_sample(2904, 0.51, 0.50) == pytest.approx(290400.0)


def test_bwe_sample_with_no_elapsed_time_is_suppressed():
    assert bwe_sample(1452, 5.0, 5.0) is None


def test_bwe_filter_hand_value():
    # 0.9*1000 + 0.1*(2000+1000)/2, exact in binary floating point
    assert bwe_filter(1000, 2000, 1000) == 1050.0


def test_bwe_filter_fixed_point_over_50_steps():
    est = 1000.0
    for _ in range(50):
        est = bwe_filter(est, 1000.0, 1000.0)
    assert est == pytest.approx(1000.0, abs=1e-9)


def test_bwe_filter_step_response_closed_form():
    # From zero with the raw sample held at c, the estimate after k steps
    # is c*(1 - 0.9^k).
    c = 5000.0
    est = 0.0
    for k in range(1, 51):
        est = bwe_filter(est, c, c)
        assert est == pytest.approx(c * (1.0 - 0.9 ** k), rel=1e-12)


def test_compute_beta_proportional_shares():
    assert compute_beta([3e6, 1e6]) == [0.75, 0.25]


def test_compute_beta_bootstrap_on_zero_estimates():
    assert compute_beta([0.0, 0.0]) == [0.5, 0.5]
    assert compute_beta([0.0, 0.0, 0.0]) == [pytest.approx(1 / 3)] * 3


def test_compute_alpha_hand_value():
    a = compute_alpha([30000, 15000], [0.05, 0.1], [0.75, 0.25])
    # independent evaluation: 2*45000*(0.75*30000/0.0025)/(900000**2)
    assert a == pytest.approx(1.44, abs=1e-12)


def test_compute_alpha_symmetric_two_path_is_half():
    a = compute_alpha([20000, 20000], [0.08, 0.08], [0.5, 0.5])
    assert a == pytest.approx(0.5, abs=1e-12)


@settings(deadline=None)
@given(st.floats(min_value=1500, max_value=1e6),
       st.floats(min_value=0.001, max_value=1.0))
def test_compute_alpha_single_path_identity(w, srtt):
    # Degenerate single-path case collapses to plain TCP aggressiveness.
    assert compute_alpha([w], [srtt], [0.5]) == pytest.approx(1.0, abs=1e-12)


@settings(deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=1e9), min_size=1,
                max_size=6))
def test_compute_beta_normalizes(ests):
    beta = compute_beta(ests)
    assert abs(sum(beta) - 1.0) <= 1e-12
    assert all(b >= 0 for b in beta)


# ---- P_a ledger ----

def test_pa_per_path_scope_is_isolated():
    pa = PaLedger(2, "per-path")
    pa.add(0, 1000)
    assert pa.get(0) == 1000
    assert pa.get(1) == 0
    pa.consume(0, 600)
    assert pa.get(0) == 400
    pa.consume(0, 900)
    assert pa.get(0) == 0          # floored, never negative


def test_pa_global_scope_shares_one_pool():
    pa = PaLedger(2, "global")
    pa.add(0, 700)
    pa.add(1, 300)
    assert pa.get(0) == pa.get(1) == 1000
    pa.reset(1)
    assert pa.get(0) == 0


# ---- slow start (all controllers) ----

def test_slow_start_adds_min_of_bytes_and_mtu():
    cc = cmtcc()
    w0 = cc.cwnd(0)
    cc.on_increase_check(0, 2904, cwnd_was_full=True)
    assert cc.cwnd(0) == w0 + MTU
    cc.on_increase_check(0, 1000, cwnd_was_full=True)
    assert cc.cwnd(0) == w0 + MTU + 1000


def test_no_growth_when_window_not_utilized():
    for cc in (cmtcc(), berp()):
        w0 = cc.cwnd(0)
        cc.on_increase_check(0, 2904, cwnd_was_full=False)
        assert cc.cwnd(0) == w0


# ---- CMT-CC rules ----

def test_cmtcc_avoidance_adds_one_mtu_and_debits_pa():
    cc = cmtcc(initial_ssthresh=3000)    # start in avoidance at w=3000
    cc.on_bytes_acked(0, 2999, 0.1)
    cc.on_increase_check(0, 2999, cwnd_was_full=True)
    assert cc.cwnd(0) == 3000            # P_a below window: no move
    cc.on_bytes_acked(0, 1, 0.2)
    cc.on_increase_check(0, 1, cwnd_was_full=True)
    assert cc.cwnd(0) == 3000 + MTU
    assert cc.pa.get(0) == 0             # debited by the pre-increase window


def test_cmtcc_fast_rtx_halves_with_floor():
    cc = cmtcc()
    cc.w[0] = 20000
    cc.on_fast_rtx(0)
    assert cc.cwnd(0) == 10000
    assert cc.ssthresh(0) == 10000
    cc.w[1] = 5000
    cc.on_fast_rtx(1)
    assert cc.cwnd(1) == 6000            # 4*MTU floor binds


def test_cmtcc_timeout_resets_window_to_one_mtu():
    cc = cmtcc()
    cc.w[0] = 20000
    cc.on_timeout(0)
    assert cc.cwnd(0) == MTU
    assert cc.ssthresh(0) == 10000


# ---- BERP estimator plumbing ----

def test_berp_first_sample_initializes_filter():
    cc = berp()
    cc.on_bytes_acked(0, 1452, 0.01)
    assert cc.est[0] == pytest.approx(145200.0)
    assert cc.bwe_bps(0) == pytest.approx(145200.0 * 8)


def test_berp_constant_rate_is_filter_fixed_point():
    cc = berp()
    for k in range(1, 60):
        cc.on_bytes_acked(0, 1452, k * 0.01)
    assert cc.est[0] == pytest.approx(145200.0, rel=1e-9)


def test_berp_shares_follow_estimates():
    cc = berp()
    cc.on_bytes_acked(0, 3000, 1.0)    # 3000 B/s
    cc.on_bytes_acked(1, 1000, 1.0)    # 1000 B/s
    assert cc.beta_of(0) == pytest.approx(0.75)
    assert cc.beta_of(1) == pytest.approx(0.25)


def test_berp_zero_elapsed_sack_still_accrues_pa():
    cc = berp()
    cc.on_bytes_acked(0, 1452, 0.01)
    est = cc.est[0]
    cc.on_bytes_acked(0, 1000, 0.01)   # same timestamp: sample suppressed
    assert cc.est[0] == est
    assert cc.pa.get(0) == 2452


def test_berp_bootstrap_shares_are_equal():
    cc = berp()
    assert cc.beta_of(0) == cc.beta_of(1) == 0.5


# ---- BERP window rules ----

def test_berp_avoidance_increase_equal_paths_is_quarter_mtu():
    cc = berp(initial_ssthresh=3000)
    # symmetric feed: equal estimates, equal windows, fallback srtt
    cc.on_bytes_acked(0, 1452, 0.5)
    cc.on_bytes_acked(1, 1452, 0.5)
    assert cc.alpha_now() == pytest.approx(0.5, abs=1e-12)
    cc.pa.reset(0)
    # keep the feed symmetric so the shares stay at one half
    cc.on_bytes_acked(0, 3000, 1.0)
    cc.on_bytes_acked(1, 3000, 1.0)
    assert cc.alpha_now() == pytest.approx(0.5, abs=1e-12)
    w0 = cc.cwnd(0)
    cc.on_increase_check(0, 3000, cwnd_was_full=True)
    assert cc.cwnd(0) - w0 == pytest.approx(375.0)   # MTU/4
    assert cc.pa.get(0) == 0


def test_berp_increase_never_exceeds_uncoupled_bound():
    cc = berp(initial_ssthresh=3000)
    cc.est = [1e9, 1.0]
    cc._update_shares()                  # beta[0] ~ 1: coupled arg is large
    cc.w = [3000.0, 3000.0]
    srtts = [0.05, 0.05]
    cc.alpha = compute_alpha(cc.w, srtts, cc.beta)
    cc.pa.add(0, 3000)
    cc.on_increase_check(0, 3000, cwnd_was_full=True)
    assert cc.cwnd(0) - 3000 <= MTU + 1e-9


@pytest.mark.parametrize("w,beta,want_s", [
    (100000.0, 0.25, 75000.0),
    (5000.0, 0.9, 6000.0),      # floor binds
    (20000.0, 0.5, 10000.0),    # halving special case
    (4000.0, 0.5, 6000.0),
    (8000.0, 0.1, 7200.0),
    (1e6, 0.99, 10000.0),
])
def test_berp_fast_rtx_detection_grid(w, beta, want_s):
    cc = berp()
    cc.w[0] = w
    cc.est = [beta, 1.0 - beta]          # shares proportional to estimates
    cc._update_shares()
    assert cc.beta_of(0) == pytest.approx(beta)
    cc.on_fast_rtx(0)
    assert cc.ssthresh(0) == pytest.approx(want_s)
    assert cc.cwnd(0) == pytest.approx(want_s)


def test_berp_timeout_grid_and_consecutive_timeouts():
    cc = berp()
    cc.w[0] = 100000.0
    cc.est = [0.25, 0.75]
    cc._update_shares()
    cc.on_timeout(0)
    assert cc.ssthresh(0) == pytest.approx(75000.0)
    assert cc.cwnd(0) == MTU
    # a second timeout recomputes ssthresh from the shrunken window
    cc.on_timeout(0)
    assert cc.ssthresh(0) == pytest.approx(6000.0)
    assert cc.cwnd(0) == MTU


def test_berp_cuts_clear_pa():
    cc = berp()
    cc.on_bytes_acked(0, 5000, 1.0)
    cc.on_fast_rtx(0)
    assert cc.pa.get(0) == 0
    cc.on_bytes_acked(0, 5000, 2.0)
    cc.on_timeout(0)
    assert cc.pa.get(0) == 0


@settings(deadline=None)
@given(st.floats(min_value=1500.0, max_value=1e6),
       st.floats(min_value=0.0, max_value=1.0))
def test_berp_cut_floors_hold(w, share):
    cc = berp()
    cc.w[0] = w
    cc.est = [share, 1.0 - share] if share + (1.0 - share) > 0 else [0.0, 0.0]
    cc._update_shares()
    cc.on_fast_rtx(0)
    assert cc.ssthresh(0) >= 4 * MTU - 1e-9
    assert cc.cwnd(0) >= MTU


# ---- coupled variant ----

def test_coupled_shares_pinned_to_half():
    cc = make_controller("mptcp-coupled", 2)
    assert cc.beta_of(0) == cc.beta_of(1) == 0.5
    cc.on_bytes_acked(0, 5000, 1.0)      # estimator runs, shares stay put
    cc.on_bytes_acked(1, 1000, 1.0)
    assert cc.beta_of(0) == cc.beta_of(1) == 0.5
    assert cc.est[0] > cc.est[1] > 0     # estimates still tracked for traces


def test_coupled_cut_equals_halving():
    cc = make_controller("mptcp-coupled", 2)
    cc.w[0] = 30000.0
    cc.on_fast_rtx(0)
    assert cc.ssthresh(0) == pytest.approx(15000.0)


def test_cmtcc_trace_accessors_are_inert():
    cc = cmtcc()
    assert cc.beta_of(0) == 0.5
    assert cc.bwe_bps(0) == 0.0
    assert cc.alpha_now() == 0.0


def test_unknown_algorithm_rejected():
    with pytest.raises(ValueError):
        make_controller("reno", 2)


def test_alpha_uses_fallback_rtt_before_samples():
    # before any srtt exists the fallback keeps the formula finite
    cc = berp(fallback_rtt=1.0)
    cc.on_bytes_acked(0, 1452, 0.25)
    assert math.isfinite(cc.alpha_now())
    assert cc.alpha_now() > 0
