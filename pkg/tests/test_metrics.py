import json
import math

import numpy as np
import pytest

from etcsim import metrics
from etcsim.engine import run, sweep
from etcsim.scenarios import scenario_from_config


def test_rate_arithmetic_example():
    # eleven sends of 3 bits, 0.11 s apart: ten bit-carrying intervals
    times = np.arange(11) * 0.11
    bits = np.full(11, 3)
    r_s, span, mean_gap, min_gap = metrics.rate_from_sends(times, bits)
    assert r_s == pytest.approx(30 / 1.1)
    assert r_s == pytest.approx(27.27, abs=0.01)
    assert span == pytest.approx(1.1)
    assert mean_gap == pytest.approx(0.11)
    assert min_gap == pytest.approx(0.11)


def test_rate_periodic_exact():
    # equal spacing alpha+gamma with constant payload gives exactly g/(alpha+gamma)
    period, g = 0.11, 3
    times = np.arange(40) * period
    r_s, *_ = metrics.rate_from_sends(times, np.full(40, g))
    assert r_s == pytest.approx(g / period, rel=1e-12)


def test_rate_undefined_below_two_sends():
    assert metrics.rate_from_sends(np.array([1.0]), np.array([3]))[0] is None
    assert metrics.rate_from_sends(np.array([]), np.array([]))[0] is None


def test_rate_permutation_stable():
    rng = np.random.default_rng(0)
    times = np.cumsum(rng.uniform(0.1, 0.5, 30))
    bits = rng.integers(1, 8, 30)
    base = metrics.rate_from_sends(times, bits)
    perm = rng.permutation(30)
    shuffled = metrics.rate_from_sends(times[perm], bits[perm])
    assert base == shuffled


def test_entropy_rate_linear_values():
    assert metrics.entropy_rate_linear(7.3198) == pytest.approx(10.56, abs=0.005)
    assert metrics.entropy_rate_linear(math.log(2)) == pytest.approx(1.0, rel=1e-12)
    assert metrics.entropy_rate_linear(2 * math.log(2)) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(ValueError):
        metrics.entropy_rate_linear(0.0)


def test_demo_entropy_values():
    assert metrics.demo_entropy_floor() == 1.0
    assert metrics.demo_entropy(math.pi) == pytest.approx(1.0)
    xs = np.linspace(-10, 10, 1001)
    h = metrics.demo_entropy(xs)
    assert np.all(h >= 1.0) and np.all(h <= 3.0)


def test_entropy_reference_for_scenarios(linear_cfg, nonlinear_cfg):
    ref_l = metrics.entropy_reference_for(scenario_from_config(linear_cfg))
    assert ref_l.reference_value == pytest.approx(10.56, abs=0.005)
    ref_n = metrics.entropy_reference_for(scenario_from_config(nonlinear_cfg))
    assert ref_n.reference_value == 1.0
    assert ref_n.pointwise(0.0) == pytest.approx(3.0)


def test_compute_rate_on_run(nonlinear_cfg):
    sc = scenario_from_config(nonlinear_cfg)
    tr = run(sc)
    rep = metrics.compute_rate(tr)
    assert rep.trigger_count == len(tr.sends)
    assert rep.total_payload_bits == 3 * len(tr.sends)
    assert rep.envelope_violations == 0
    assert rep.min_interval_s >= sc.nonlinear.trigger.period_s - 1e-12
    # convention: last send's bits excluded from the numerator
    times = [s.t for s in tr.sends]
    assert rep.r_s == pytest.approx(3 * (len(times) - 1) / (times[-1] - times[0]))


def test_compute_rate_zero_triggers(nonlinear_cfg):
    nonlinear_cfg["plant"]["M"] = 0.0
    nonlinear_cfg["horizon_s"] = 2.0
    rep = metrics.compute_rate(run(scenario_from_config(nonlinear_cfg)))
    assert rep.r_s is None and rep.trigger_count == 0


def test_verify_envelopes_feasible(linear_cfg, nonlinear_cfg):
    for cfg in (linear_cfg, nonlinear_cfg):
        sc = scenario_from_config(cfg)
        env = metrics.verify_envelopes(run(sc))
        assert env.violations == 0
        assert env.global_excess == 0.0
        assert env.reception_excess == 0.0


def test_verify_envelopes_undersized_payload(nonlinear_cfg):
    # one bit below the sufficient size, worst-case disturbance and delay:
    # the reception contract must break in some runs
    nonlinear_cfg["plant"]["disturbance"] = "const-max"
    nonlinear_cfg["channel"]["law"] = "max"
    nonlinear_cfg["nonlinear"]["g_override_bits"] = 2  # sufficient size is 3
    sc = scenario_from_config(nonlinear_cfg)
    total = 0
    for r in range(20):
        total += metrics.verify_envelopes(run(sc, run_index=r)).violations
    assert total > 0


def test_summary_structure(nonlinear_cfg, tmp_path):
    sc = scenario_from_config(nonlinear_cfg)
    summary = metrics.build_summary(run(sc))
    path = tmp_path / "summary.json"
    metrics.write_summary_json(summary, path)
    loaded = json.loads(path.read_text())
    assert loaded["scheme"] == "nonlinear"
    assert loaded["scheme_params"]["g_bits_used"] == 3
    assert loaded["envelopes"]["violations"] == 0
    assert loaded["entropy_reference_bits_s"] == 1.0
    assert loaded["rate"]["r_s"] is not None


def test_sweep_rows_and_csv(rate_cfg, tmp_path):
    rate_cfg["horizon_s"] = 20.0
    results = sweep(rate_cfg, [0.05, 0.1], n_seeds=2)
    rows = metrics.sweep_rows(results)
    assert len(rows) == 2
    path = tmp_path / "sweep.csv"
    metrics.write_sweep_csv(rows, path)
    lines = path.read_text().strip().split("\n")
    assert lines[0] == "gamma,g_bits,R_s,entropy_ref,max_z,violations"
    assert len(lines) == 3
    first = lines[1].split(",")
    assert float(first[0]) == pytest.approx(0.05)
    assert int(first[1]) >= 1


def test_sweep_rows_skip_infeasible(rate_cfg):
    del rate_cfg["nonlinear"]["J_margin"]
    rate_cfg["nonlinear"]["J_value"] = 0.1
    rate_cfg["horizon_s"] = 10.0
    results = sweep(rate_cfg, [0.1, 0.99], n_seeds=2)
    rows = metrics.sweep_rows(results)
    assert len(rows) == 1
