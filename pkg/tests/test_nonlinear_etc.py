import math

import mpmath as mp
import numpy as np
import pytest

from etcsim import nonlinear_etc as nl
from etcsim.errors import ConfigError, EnvelopeBreachError
from etcsim.plants import demo_plant

mp.mp.dps = 50


def fig_config(gamma: float, w_bound: float = 0.1, margin: float = 0.01, alpha: float = 0.01):
    return nl.threshold_from_margin(margin, alpha, gamma, demo_plant(w_bound))


def envelope_oracle(cfg, theta, wbound=None):
    J = mp.mpf(repr(cfg.threshold))
    lx = mp.mpf(repr(cfg.lip_x))
    lw = mp.mpf(repr(cfg.lip_w))
    wb = mp.mpf(repr(cfg.w_bound if wbound is None else wbound))
    e = mp.e ** (lx * (mp.mpf(repr(cfg.alpha_s)) + mp.mpf(repr(cfg.gamma_s)) + mp.mpf(repr(theta))))
    return float(J * e + lw * wb / lx * (e - 1))


def packet_size_oracle(cfg):
    J = mp.mpf(repr(cfg.threshold))
    lx = mp.mpf(repr(cfg.lip_x))
    lw = mp.mpf(repr(cfg.lip_w))
    wb = mp.mpf(repr(cfg.w_bound))
    g = mp.mpf(repr(cfg.gamma_s))
    ups0 = mp.mpf(repr(envelope_oracle(cfg, 0.0)))
    ratio = ups0 * mp.e ** (lx * g) / (J - lw * wb / lx * (mp.e ** (lx * g) - 1))
    raw = mp.log(ratio) / mp.log(2)
    return max(1, int(mp.ceil(raw))), float(raw)


def test_threshold_recipe():
    cfg = fig_config(0.1)
    assert cfg.threshold == pytest.approx(0.021662, abs=1e-6)


def test_growth_envelope_value():
    cfg = fig_config(0.1)
    assert nl.growth_envelope(cfg, 0.0) == pytest.approx(0.043164, abs=1e-5)
    assert nl.growth_envelope(cfg, 0.0) == pytest.approx(envelope_oracle(cfg, 0.0), rel=1e-12)
    assert nl.growth_envelope(cfg, 0.05) == pytest.approx(envelope_oracle(cfg, 0.05), rel=1e-12)


def test_growth_envelope_no_disturbance():
    cfg = nl.NonlinearTriggerConfig(
        threshold=0.5, alpha_s=0.0, gamma_s=0.2, lip_x=3.0, lip_w=1.0, w_bound=0.0
    )
    assert nl.growth_envelope(cfg, 0.0) == pytest.approx(0.5 * math.exp(3 * 0.2), rel=1e-12)


def test_growth_envelope_monotone_in_theta():
    cfg = fig_config(0.1)
    assert nl.growth_envelope(cfg, cfg.gamma_s) > nl.growth_envelope(cfg, 0.0)


def test_growth_envelope_domain():
    cfg = fig_config(0.1)
    with pytest.raises(ValueError):
        nl.growth_envelope(cfg, -0.01)
    with pytest.raises(ValueError):
        nl.growth_envelope(cfg, cfg.gamma_s + 0.01)


def test_disturbance_indexed_envelope_below_worst_case():
    cfg = fig_config(0.1)
    for theta in (0.0, 0.03, 0.1):
        assert nl.growth_envelope(cfg, theta, wbound=0.05) <= nl.growth_envelope(cfg, theta)


@pytest.mark.parametrize(
    "gamma,expected", [(0.1, 3), (0.99, 15)]
)
def test_packet_size_reference_values(gamma, expected):
    cfg = fig_config(gamma)
    ps = nl.packet_size(cfg)
    want, raw = packet_size_oracle(cfg)
    assert ps.bits == want == expected
    assert ps.lower_bound_bits == pytest.approx(max(0.0, raw), rel=1e-9)
    # not at a ceiling boundary
    assert min(raw - math.floor(raw), math.ceil(raw) - raw) > 1e-6


def test_packet_size_small_alpha_limit():
    # with no disturbance and a vanishing delay bound the sufficient size tends
    # to lip_x * alpha / ln 2
    alpha, lip_x = 0.01, 3.0
    cfg = nl.NonlinearTriggerConfig(
        threshold=0.3, alpha_s=alpha, gamma_s=1e-12, lip_x=lip_x, lip_w=1.0, w_bound=0.0
    )
    ps = nl.packet_size(cfg)
    assert ps.lower_bound_bits == pytest.approx(lip_x * alpha / math.log(2), rel=1e-6)
    assert ps.bits == 1


def test_packet_size_infeasible_names_inequality():
    cfg = nl.NonlinearTriggerConfig(
        threshold=0.001, alpha_s=0.01, gamma_s=0.99, lip_x=3.0, lip_w=1.0, w_bound=0.1
    )
    with pytest.raises(ConfigError, match=r"J > \(L_w\*M/L_x\)"):
        nl.packet_size(cfg)


def test_trigger_inclusive():
    assert nl.check_trigger(0.0217, 0.0217)
    assert nl.check_trigger(-0.03, 0.0217)
    assert not nl.check_trigger(0.0216, 0.0217)


def test_period_steps_exact_and_ceil():
    cfg = fig_config(0.1)  # period 0.11
    assert nl.period_steps(cfg, 0.005) == 22
    assert nl.period_steps(cfg, 0.01) == 11
    odd = nl.NonlinearTriggerConfig(
        threshold=0.1, alpha_s=0.0, gamma_s=0.025, lip_x=3.0, lip_w=1.0, w_bound=0.0
    )
    # 0.025 / 0.01 = 2.5 candidates round up so spacing stays >= the period
    assert nl.period_steps(odd, 0.01) == 3


def test_quantizer_edges_and_centers():
    half = 0.043164
    q = nl.UniformErrorQuantizer(half, 3)
    assert q.encode(-half) == 0
    assert q.decode(0) == pytest.approx(-half + half / 8, rel=1e-12)
    assert q.encode(half) == 7
    assert q.decode(7) == pytest.approx(half - half / 8, rel=1e-12)
    # z = 0 decodes to within one half-cell of itself
    assert abs(q.decode(q.encode(0.0))) <= half / 8


def test_quantizer_round_trip_random():
    half = 0.043164
    q = nl.UniformErrorQuantizer(half, 3)
    rng = np.random.default_rng(3)
    z = rng.uniform(-half, half, 10_000)
    err = np.abs(z - q.decode(q.cell_of(z)))
    assert np.max(err) <= half / 2**3 + 1e-15


def test_quantizer_payload_round_trip():
    q = nl.UniformErrorQuantizer(1.0, 5)
    for idx in range(32):
        assert q.parse(q.payload(idx)) == idx
    with pytest.raises(ValueError):
        q.parse("000")


def test_quantizer_breach():
    q = nl.UniformErrorQuantizer(1.0, 3, slack=0.1)
    assert q.encode(1.05) == 7  # inside the slack: clamp to the top cell
    with pytest.raises(EnvelopeBreachError):
        q.encode(1.2)


def test_reconstruct_empty_history():
    plant = demo_plant(0.1)
    assert nl.reconstruct(plant, 0.7, np.array([]), 0.005) == 0.7


def test_reconstruct_matches_plant_flow():
    # exact payload, no disturbance: the rebuilt state equals the true state
    plant = demo_plant(0.0)
    rng = np.random.default_rng(4)
    u = rng.uniform(-2, 2, 40)
    delta = 0.005
    x = 0.9
    for ui in u:
        x = x + delta * plant.rhs(x, ui, 0.0)
    assert nl.reconstruct(plant, 0.9, u, delta) == pytest.approx(x, abs=1e-15)


def test_reconstruct_gronwall_growth():
    # decode error grows by at most e^{lip_x * T} along the rebuilt flow
    plant = demo_plant(0.0)
    rng = np.random.default_rng(5)
    delta, n = 0.005, 20  # horizon 0.1 s
    for _ in range(200):
        u = rng.uniform(-3, 3, n)
        x0 = float(rng.uniform(-1, 1))
        e0 = float(rng.uniform(-0.01, 0.01))
        xa = nl.reconstruct(plant, x0, u, delta)
        xb = nl.reconstruct(plant, x0 + e0, u, delta)
        assert abs(xb - xa) <= abs(e0) * math.exp(plant.lip_x * n * delta) + 1e-15


def test_rate_lower_bound_values():
    cfg = fig_config(0.1)
    deploy, bound = nl.rate_lower_bound(cfg, 3)
    assert deploy == pytest.approx(3 / 0.11, abs=1e-9)
    assert deploy == pytest.approx(27.27, abs=0.01)
    assert bound == pytest.approx(nl.packet_size(cfg).lower_bound_bits / 0.11, rel=1e-12)
    # a zero-size payload is admissible in principle: the event itself signals
    assert nl.rate_lower_bound(cfg, 0)[0] == 0.0


def test_rate_bound_monotone_in_gamma():
    # sufficient-rate curve under the threshold recipe rises with the delay bound
    gammas = np.linspace(0.02, 0.99, 20)
    rates = []
    for g in gammas:
        cfg = nl.threshold_from_margin(0.05, 0.01, float(g), demo_plant(0.05))
        rates.append(nl.rate_lower_bound(cfg, nl.packet_size(cfg).bits)[1])
    assert all(b >= a - 1e-12 for a, b in zip(rates, rates[1:]))


def test_envelope_bounds_type():
    cfg = fig_config(0.1)
    eb = nl.envelope_bounds(cfg)
    assert eb.upsilon0 == pytest.approx(nl.growth_envelope(cfg, 0.0))
    assert eb.upsilon_gamma == pytest.approx(nl.growth_envelope(cfg, cfg.gamma_s))
    assert eb.upsilon0 <= eb.upsilon_gamma
    assert eb.w_indexed(0.05, 0.02) <= nl.growth_envelope(cfg, 0.05)
