import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mecbo import mec_env
from mecbo.mec_env import Decision, MecConfig, MecState, edc, init_state, local_frequency, observe, oracle_optimum
from oracles import brute_force_optimum, edc_by_hand


def _state(cfg, L=None, I=None, f_c=None, h=None):
    M, N = cfg.M, cfg.N
    return MecState(
        t=1,
        h=np.full((M, N), 1e-4 + 0j) if h is None else np.asarray(h, complex),
        f_c=np.full(N, 26e9) if f_c is None else np.asarray(f_c, float),
        L=np.full(M, 1.25e8) if L is None else np.asarray(L, float),
        I=np.full(M, 1e7) if I is None else np.asarray(I, float),
        f_res=np.zeros(N), L_res=np.zeros(M), I_res=np.zeros(M),
        los_phase=np.zeros((M, N)),
    )


def _trajectory(cfg, slots, seed=0):
    rng = np.random.default_rng(seed)
    s = init_state(cfg, rng)
    out = [s]
    for _ in range(slots - 1):
        s = mec_env.advance(cfg, s, rng)
        out.append(s)
    return out


def _residuals(states, name):
    return np.array([getattr(s, name) for s in states])


# -- state generation ---------------------------------------------------------


def test_eta_zero_freezes_residuals():
    states = _trajectory(MecConfig(eta=0.0), 50)
    for name in ("f_res", "L_res", "I_res"):
        r = _residuals(states, name)
        np.testing.assert_array_equal(r, np.broadcast_to(r[0], r.shape))


@pytest.mark.parametrize("eta", [0.0, 0.2, 1.0])
def test_variance_preserved(eta):
    cfg = MecConfig(eta=eta)
    if eta == 0.0:
        # frozen residuals: variance across independent runs instead of slots
        r = np.array([init_state(cfg, np.random.default_rng(s)).L_res for s in range(5000)]).ravel()
    else:
        r = _residuals(_trajectory(cfg, 10_000), "L_res").ravel()
    assert r.var() == pytest.approx(3.0, rel=0.10)


def test_eta_one_uncorrelated():
    r = _residuals(_trajectory(MecConfig(eta=1.0), 10_000), "I_res")[:, 0]
    assert abs(np.corrcoef(r[:-1], r[1:])[0, 1]) < 0.05


def test_lag_one_autocorrelation():
    r = _residuals(_trajectory(MecConfig(eta=0.2), 10_000, seed=3), "f_res")[:, 0]
    assert np.corrcoef(r[:-1], r[1:])[0, 1] == pytest.approx(math.sqrt(0.8), abs=0.03)


def test_large_rician_factor_constant_magnitude():
    mags = np.array([np.abs(s.h) for s in _trajectory(MecConfig(K_rician=1e9), 200)])
    assert np.all(mags.std(axis=0) / mags.mean(axis=0) < 1e-3)
    np.testing.assert_allclose(mags.mean(axis=0) ** 2, MecConfig().mean_gain(), rtol=1e-3)


def test_mean_gain_matches_path_loss():
    cfg = MecConfig()
    g = np.array([np.abs(mec_env._channels(cfg, np.zeros((2, 2)), rng)) ** 2
                  for rng in [np.random.default_rng(0)] for _ in range(100_000)])
    expected = 4.11 * (3e8 / (4 * math.pi * 915e6 * cfg.distances)) ** 3
    np.testing.assert_allclose(g.mean(axis=0), expected, rtol=0.03)


def test_same_seed_same_trajectory():
    a = _trajectory(MecConfig(), 20, seed=5)
    b = _trajectory(MecConfig(), 20, seed=5)
    for s, s2 in zip(a, b):
        np.testing.assert_array_equal(s.h, s2.h)
        np.testing.assert_array_equal(s.L, s2.L)


def test_units():
    s = init_state(MecConfig(), np.random.default_rng(0))
    np.testing.assert_allclose(s.f_c, (26 + s.f_res) * 1e9)
    np.testing.assert_allclose(s.L, (125 + s.L_res) * 1e6)
    np.testing.assert_allclose(s.I, (125 + s.I_res) * 1e4 * 8)


def test_positivity_guard():
    cfg = MecConfig(f_c_mean=0.5, L_mean=0.5, I_mean=0.5, residual_var=3.0, eta=0.5)
    for s in _trajectory(cfg, 300):
        assert np.all(s.f_c > 0) and np.all(s.L > 0) and np.all(s.I > 0)


@pytest.mark.parametrize("kw", [
    dict(eta=1.5), dict(K_rician=-1.0), dict(W=0.0), dict(distances=[[1.0, 2.0]]), dict(obs_noise_std=-1.0)
])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        MecConfig(**kw)


# -- cost model ---------------------------------------------------------------


def test_local_cost_by_hand():
    cfg = MecConfig(M=1, N=1, distances=[[20.0]])
    cost = edc(cfg, _state(cfg), Decision([0], [0.1], [1e8]))
    assert cost.delay[0] == pytest.approx(1.25, rel=1e-14)
    assert cost.energy[0] == pytest.approx(1.25e-2, rel=1e-14)
    assert cost.total == pytest.approx(0.63125, rel=1e-14)
    assert cost.reward == -cost.total


def test_unit_snr_rate():
    cfg = MecConfig()
    p = 0.05
    gain = cfg.sigma2 / p
    assert mec_env.rate(cfg, p, gain) == pytest.approx(2e6, rel=1e-14)


def test_edge_sharing_doubles_compute_time():
    cfg = MecConfig()
    s = _state(cfg)
    alone = edc(cfg, s, Decision([1, 0], [0.1, 0.1], [1e8, 1e8]))
    shared = edc(cfg, s, Decision([1, 1], [0.1, 0.1], [1e8, 1e8]))
    t_up = s.I[0] / mec_env.rate(cfg, 0.1, abs(s.h[0, 0]) ** 2)
    assert shared.delay[0] - t_up == pytest.approx(2 * (alone.delay[0] - t_up), rel=1e-12)


def test_edc_matches_hand_oracle():
    cfg = MecConfig(M=3, N=2, distances=[[20, 13], [15, 18], [11, 24]])
    rng = np.random.default_rng(2)
    states = _trajectory(cfg, 20)
    for s in states:
        c = rng.integers(0, 3, 3)
        p = rng.uniform(1e-3, 0.1, 3)
        f = rng.uniform(1e6, 1e8, 3)
        np.testing.assert_allclose(edc(cfg, s, Decision(c, p, f)).per_wd, edc_by_hand(cfg, s, c, p, f), rtol=1e-12)


def test_infeasible_decisions_rejected():
    cfg = MecConfig()
    s = _state(cfg)
    for d in (Decision([3, 0], [0.1, 0.1], [1e8, 1e8]),
              Decision([0, 0], [0.0, 0.1], [1e8, 1e8]),
              Decision([0, 0], [0.1, 0.1], [1e8, 2e8]),
              Decision([0], [0.1], [1e8])):
        with pytest.raises(ValueError):
            edc(cfg, s, d)


def test_observe_noiseless_and_noisy():
    cfg = MecConfig()
    s = _state(cfg)
    d = Decision([1, 2], [0.1, 0.05], [1e8, 5e7])
    assert observe(cfg, s, d) == edc(cfg, s, d).reward
    noisy = MecConfig(obs_noise_std=0.1)
    rng = np.random.default_rng(0)
    ys = np.array([observe(noisy, s, d, rng) for _ in range(10_000)])
    assert ys.std() == pytest.approx(0.1, rel=0.05)
    a = observe(noisy, s, d, np.random.default_rng(3))
    b = observe(noisy, s, d, np.random.default_rng(3))
    assert a == b


# -- oracle -------------------------------------------------------------------


def test_local_frequency_closed_form_vs_grid():
    cfg = MecConfig()
    f_star = (0.5 / (2 * 0.5 * 1e-26)) ** (1 / 3)
    assert f_star == pytest.approx(3.684e8, rel=1e-3)
    assert local_frequency(cfg) == 1e8
    # an uncapped variant checks the stationary point itself
    free = MecConfig(f_peak=1e9)
    fs = np.linspace(1e6, 1e9, 10_000)
    cost = 0.5 * 1.25e8 / fs + 0.5 * 1e-26 * 1.25e8 * fs**2
    assert local_frequency(free) == pytest.approx(fs[np.argmin(cost)], rel=1e-4)
    fs = np.linspace(1e4, 1e8, 10_000)
    cost = 0.5 * 1.25e8 / fs + 0.5 * 1e-26 * 1.25e8 * fs**2
    assert fs[np.argmin(cost)] == pytest.approx(local_frequency(cfg), rel=1e-4)


def test_best_power_vs_grid():
    cfg = MecConfig()
    for gain in (1e-9, 3e-8, 1e-6):
        p, c = mec_env.best_power(cfg, 1e7, gain)
        ps = np.linspace(cfg.P_peak / 10_000, cfg.P_peak, 10_000)
        grid = (0.5 + 0.5 * ps) * 1e7 / mec_env.rate(cfg, ps, gain)
        assert c <= grid.min() * (1 + 1e-12)
        assert c == pytest.approx(grid.min(), rel=1e-4)


def test_oracle_prefers_local_without_channel():
    cfg = MecConfig(M=1, N=1, distances=[[20.0]])
    res = oracle_optimum(cfg, _state(cfg, h=[[1e-12]]))
    np.testing.assert_array_equal(res.c, [0])


def test_oracle_matches_brute_force():
    cfg = MecConfig()
    for s in _trajectory(cfg, 5, seed=4):
        res = oracle_optimum(cfg, s)
        ref = brute_force_optimum(cfg, s)
        assert res.value >= ref - 1e-12
        assert res.value == pytest.approx(ref, rel=1e-4)
        assert res.value == edc(cfg, s, res.decision).reward


def test_oracle_dominates_random_decisions():
    """1000 random feasible decisions per slot over 50 slots."""
    cfg = MecConfig()
    rng = np.random.default_rng(6)
    for s in _trajectory(cfg, 50, seed=6):
        best = oracle_optimum(cfg, s).value
        for _ in range(1000):
            d = Decision(rng.integers(0, 3, 2), rng.uniform(1e-9, 1, 2) * 0.1, rng.uniform(1e-9, 1, 2) * 1e8)
            assert edc(cfg, s, d).reward <= best + 1e-9


def test_oracle_tie_breaks_lexicographically():
    cfg = MecConfig(M=2, N=2, distances=[[15.0, 15.0], [15.0, 15.0]])
    h = np.full((2, 2), 1e-4 + 0j)
    res = oracle_optimum(cfg, _state(cfg, h=h))
    # BS 1 and BS 2 are interchangeable; the first such assignment must win
    alt = res.c.copy()
    alt[alt > 0] = 3 - alt[alt > 0]
    assert tuple(res.c) <= tuple(alt)


def test_export_trajectory(tmp_path):
    cfg = MecConfig()
    mec_env.export_trajectory(tmp_path / "t.csv", _trajectory(cfg, 3))
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].split(",")[:3] == ["slot", "L_1", "L_2"]
    assert len(lines) == 4


# -- properties -----------------------------------------------------------------


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31), st.lists(st.integers(0, 2), min_size=2, max_size=2),
       st.lists(st.floats(1e-6, 1.0), min_size=4, max_size=4))
def test_edc_positive_and_exclusive(seed, c, x):
    cfg = MecConfig()
    s = init_state(cfg, np.random.default_rng(seed))
    d = Decision(c, np.array(x[:2]) * 0.1, np.array(x[2:]) * 1e8)
    cost = edc(cfg, s, d)
    assert np.all(cost.per_wd > 0) and cost.reward < 0
    for m in range(2):
        if c[m] == 0:
            # no upload energy: energy is purely the local CPU term
            assert cost.energy[m] == pytest.approx(cfg.xi * s.L[m] * d.f[m] ** 2, rel=1e-14)
        else:
            # local frequency plays no role once offloaded
            other = Decision(c, d.p, np.where(np.arange(2) == m, 1e8, d.f))
            assert edc(cfg, s, other).per_wd[m] == cost.per_wd[m]
