import math
from dataclasses import replace

import numpy as np
import pytest

from etcsim import nonlinear_etc as nl
from etcsim.engine import run, run_batch, sweep, write_trace_csv
from etcsim.scenarios import scenario_from_config


def test_zero_disturbance_zero_triggers(nonlinear_cfg):
    nonlinear_cfg["plant"]["M"] = 0.0
    nonlinear_cfg["horizon_s"] = 5.0
    sc = scenario_from_config(nonlinear_cfg)
    tr = run(sc)
    assert len(tr.sends) == 0
    assert np.all(tr.z == 0.0)


def test_determinism_bit_identical(nonlinear_cfg):
    nonlinear_cfg["horizon_s"] = 5.0
    sc = scenario_from_config(nonlinear_cfg)
    a, b = run(sc), run(sc)
    assert np.array_equal(a.x, b.x)
    assert np.array_equal(a.xhat, b.xhat)
    assert np.array_equal(a.z, b.z)
    assert a.sends == b.sends
    assert a.receptions == b.receptions


def test_run_indices_differ(nonlinear_cfg):
    nonlinear_cfg["horizon_s"] = 5.0
    sc = scenario_from_config(nonlinear_cfg)
    a, b = run(sc, run_index=0), run(sc, run_index=1)
    assert not np.array_equal(a.w, b.w)


def test_trace_csv_byte_identical(nonlinear_cfg, tmp_path):
    nonlinear_cfg["horizon_s"] = 3.0
    sc = scenario_from_config(nonlinear_cfg)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trace_csv(run(sc), p1)
    write_trace_csv(run(sc), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_event_times_on_grid_and_delays_bounded(linear_cfg):
    sc = scenario_from_config(linear_cfg)
    tr = run(sc)
    delta, gamma = sc.delta_s, sc.channel.gamma_s
    for s in tr.sends:
        assert s.t == pytest.approx(s.step * delta, abs=1e-12)
    for r in tr.receptions:
        assert 0 < r.delay_s <= gamma + 1e-12
        assert r.delay_s / delta == pytest.approx(round(r.delay_s / delta), abs=1e-9)


def test_no_send_while_in_flight(linear_cfg):
    sc = scenario_from_config(linear_cfg)
    tr = run(sc)
    recs = {r.seq: r for r in tr.receptions}
    for s in tr.sends:
        if s.seq == 0:
            continue
        prev = recs[s.seq - 1]  # previous packet must have been delivered
        assert prev.t <= s.t + 1e-12


def test_reception_processed_before_send_decision(linear_cfg):
    # a step that both delivers and re-triggers must see the post-jump error
    sc = scenario_from_config(linear_cfg)
    tr = run(sc)
    send_steps = {s.step for s in tr.sends}
    for r in tr.receptions:
        if r.step in send_steps:
            assert abs(r.z_after) >= sc.linear.trigger.threshold


def test_batch_matches_scalar_linear(linear_cfg):
    sc = scenario_from_config(linear_cfg)
    sc = replace(sc, linear=replace(sc.linear, g_bits=sc.linear.g_formula_bits))
    stats = run_batch(sc, 4, phi_after_s=2.0)
    for r in range(4):
        tr = run(sc, run_index=r)
        assert len(tr.sends) == stats.n_sends[r]
        assert len(tr.receptions) == stats.n_receptions[r]
        assert np.max(np.abs(tr.z[:, 0])) == pytest.approx(stats.max_abs_z[r], abs=1e-12)
        post = max((abs(x.z_after) for x in tr.receptions), default=-np.inf)
        assert post == pytest.approx(stats.max_abs_z_post_jump[r], abs=1e-12)
        idx = int(round(2.0 / sc.delta_s))
        phi = np.max(np.abs(tr.phys[idx:, 0]))
        assert phi == pytest.approx(stats.max_abs_phi_after[r], abs=1e-12)


def test_batch_matches_scalar_nonlinear(nonlinear_cfg):
    sc = scenario_from_config(nonlinear_cfg)
    stats = run_batch(sc, 4)
    for r in range(4):
        tr = run(sc, run_index=r)
        assert len(tr.sends) == stats.n_sends[r]
        assert np.max(np.abs(tr.z)) == pytest.approx(stats.max_abs_z[r], abs=1e-12)
        post = max((abs(x.z_after) for x in tr.receptions), default=-np.inf)
        assert post == pytest.approx(stats.max_abs_z_post_jump[r], abs=1e-12)
        gaps = np.diff([s.step for s in tr.sends])
        min_gap = int(gaps.min()) if len(gaps) else 0
        assert min_gap == stats.min_interval_steps[r]


def test_batch_rates_match_metric_convention(nonlinear_cfg):
    from etcsim.metrics import compute_rate

    sc = scenario_from_config(nonlinear_cfg)
    stats = run_batch(sc, 3)
    rates = stats.rates()
    for r in range(3):
        rep = compute_rate(run(sc, run_index=r))
        assert rates[r] == pytest.approx(rep.r_s, rel=1e-12)


def test_divergence_flag(linear_cfg):
    linear_cfg["linear"]["K"] = [0.0, 0.0]  # no stabilizing feedback
    linear_cfg["horizon_s"] = 6.0
    sc = scenario_from_config(linear_cfg)
    tr = run(sc)
    assert tr.aborted == "divergence"
    assert tr.n_steps < sc.n_steps
    stats = run_batch(sc, 3)
    assert stats.diverged.all()


def test_envelope_breach_abort(nonlinear_cfg):
    # a payload far below the sufficient size eventually breaks the growth
    # envelope under worst-case disturbance and delay
    nonlinear_cfg["channel"]["gamma_s"] = 0.99
    nonlinear_cfg["plant"]["disturbance"] = "const-max"
    nonlinear_cfg["channel"]["law"] = "max"
    nonlinear_cfg["nonlinear"]["g_override_bits"] = 1  # formula needs 15
    nonlinear_cfg["horizon_s"] = 60.0
    sc = scenario_from_config(nonlinear_cfg)
    tr = run(sc)
    assert tr.aborted == "envelope-breach"
    stats = run_batch(sc, 2)
    assert stats.breached.all()


def test_pendulum_truth_mode(linear_cfg):
    linear_cfg["plant"]["kind"] = "pendulum-nonlinear"
    linear_cfg["plant"]["w2_bound"] = 0.02
    linear_cfg["horizon_s"] = 6.0
    sc = scenario_from_config(linear_cfg)
    tr = run(sc)
    assert tr.aborted is None
    assert np.max(np.abs(tr.phys[:, 0])) < 0.5  # stays in the small-angle regime
    with pytest.raises(Exception):
        run_batch(sc, 2)  # batch path is diagonal-truth only


def test_nonlinear_interval_grid(nonlinear_cfg):
    sc = scenario_from_config(nonlinear_cfg)
    p = nl.period_steps(sc.nonlinear.trigger, sc.delta_s)
    tr = run(sc)
    steps = [s.step for s in tr.sends]
    assert all(st % p == 0 for st in steps)
    gaps = np.diff(steps)
    assert np.all(gaps * sc.delta_s >= sc.nonlinear.trigger.period_s - 1e-12)


def test_isps_witness(nonlinear_cfg):
    # bounded state after the mixing horizon, uniformly over seeds and starts
    sc = scenario_from_config(nonlinear_cfg)
    cfg = sc.nonlinear.trigger
    gain = sc.nonlinear.gain
    t0 = 5.0 / cfg.lip_x
    bound = 2.0 * (1.0 + gain * nl.global_bound(cfg) + cfg.w_bound) / (gain - 2.0)
    for x0 in (-1.0, 0.5, 1.0):
        s = replace(sc, nonlinear=replace(sc.nonlinear, x0=x0, xhat0=x0))
        stats = run_batch(s, 20, x_after_s=t0)
        assert not stats.diverged.any()
        assert np.all(stats.sup_abs_x_after <= bound)


def test_sweep_singleton_matches_direct(rate_cfg):
    results = sweep(rate_cfg, [0.1], n_seeds=3)
    assert len(results) == 1 and not results[0].skipped
    rate_cfg["channel"]["gamma_s"] = 0.1
    direct = run_batch(scenario_from_config(rate_cfg), 3)
    assert np.array_equal(results[0].stats.n_sends, direct.n_sends)
    assert np.allclose(results[0].stats.max_abs_z, direct.max_abs_z, rtol=0, atol=0)


def test_sweep_deterministic(rate_cfg):
    a = sweep(rate_cfg, [0.05, 0.1], n_seeds=2)
    b = sweep(rate_cfg, [0.05, 0.1], n_seeds=2)
    for ra, rb in zip(a, b):
        assert np.array_equal(ra.stats.n_sends, rb.stats.n_sends)
        assert np.array_equal(ra.stats.max_abs_z, rb.stats.max_abs_z)


def test_sweep_skips_infeasible(rate_cfg):
    # an explicit threshold that a large delay bound makes infeasible
    del rate_cfg["nonlinear"]["J_margin"]
    rate_cfg["nonlinear"]["J_value"] = 0.1
    rate_cfg["horizon_s"] = 10.0
    results = sweep(rate_cfg, [0.1, 0.99], n_seeds=2)
    assert not results[0].skipped
    assert results[1].skipped and "J >" in results[1].error


def test_sweep_parallel_matches_serial(rate_cfg):
    rate_cfg["horizon_s"] = 10.0
    serial = sweep(rate_cfg, [0.05, 0.1, 0.2], n_seeds=2, jobs=1)
    parallel = sweep(rate_cfg, [0.05, 0.1, 0.2], n_seeds=2, jobs=3)
    for rs, rp in zip(serial, parallel):
        assert rs.gamma_s == rp.gamma_s
        assert np.array_equal(rs.stats.n_sends, rp.stats.n_sends)


def test_gamma_rounding_in_scenario(rate_cfg):
    rate_cfg["channel"]["gamma_s"] = 0.033  # not a multiple of 0.01
    with pytest.warns(UserWarning, match="rounded up"):
        sc = scenario_from_config(rate_cfg)
    assert sc.channel.gamma_s == pytest.approx(0.04)


def test_disturbance_indexed_envelope_harness(nonlinear_cfg):
    # between the threshold crossing and the reception the error stays below
    # the disturbance-indexed growth envelope (evaluated with the realized
    # running sup of |w|), up to the one-step slack
    sc = scenario_from_config(nonlinear_cfg)
    cfg = sc.nonlinear.trigger
    lip_x, lip_w = cfg.lip_x, cfg.lip_w
    slack = nl.one_step_slack(cfg, sc.delta_s)
    p_steps = nl.period_steps(cfg, sc.delta_s)
    for r in range(10):
        tr = run(sc, run_index=r)
        w_sup = np.maximum.accumulate(np.abs(tr.w[:, 0]))
        recs = {x.seq: x for x in tr.receptions}
        for s in tr.sends:
            if s.seq not in recs:
                continue
            i_s, i_c = s.step, recs[s.seq].step
            lo = max(0, i_s - p_steps)  # previous candidate
            window = np.abs(tr.z[lo : i_s + 1, 0])
            crossed = np.nonzero(window >= cfg.threshold)[0]
            assert len(crossed), "a send implies a crossing in its period"
            t_bar = lo + crossed[0]
            for m in range(t_bar, i_c):
                theta = (m - i_s) * sc.delta_s
                e = math.exp(lip_x * (cfg.alpha_s + cfg.gamma_s + theta))
                bound = cfg.threshold * e + lip_w * w_sup[m] / lip_x * (e - 1.0)
                assert abs(tr.z[m, 0]) <= bound + slack
