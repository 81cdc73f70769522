import numpy as np
import pytest

from mecbo.agents import BOSettings, TimeVaryingBOAgent
from mecbo.baselines import BCOAgent, BCOParams, DiscretizedMABAgent, OnePointGradient, time_invariant_bo_agent
from mecbo.harness.runner import rep_streams
from mecbo.kernels import KernelConfig, MixedPoint, full_kernel, mixed_kernel
from mecbo import mec_env
from mecbo.mec_env import MecConfig


def _drive(agent, env, slots, seed=0):
    rng = np.random.default_rng(seed)
    state = mec_env.init_state(env, rng)
    decisions = []
    for slot in range(1, slots + 1):
        if slot > 1:
            state = mec_env.advance(env, state, rng)
        ctx = (state.I, state.L) if agent.contextual else None
        d = agent.act(slot, ctx)
        d.check(env)
        decisions.append(d)
        agent.feedback(mec_env.observe(env, state, d))
    return decisions


def test_time_invariant_matches_forced_rho_zero():
    env = MecConfig()
    settings = BOSettings(rho=0.048, refit_every=5, restarts=2)
    a = _drive(time_invariant_bo_agent(env, settings, rep_streams(3)), env, 25)
    b = _drive(TimeVaryingBOAgent(env, BOSettings(rho=0.0, refit_every=5, restarts=2), rep_streams(3)), env, 25)
    for d, d2 in zip(a, b):
        np.testing.assert_array_equal(d.c, d2.c)
        np.testing.assert_array_equal(d.p, d2.p)
        np.testing.assert_array_equal(d.f, d2.f)


def test_time_invariant_kernel_ignores_slot():
    cfg = KernelConfig(rho=0.0)
    z = MixedPoint([1, 2], [0.3, 0.4, 0.5, 0.6], 1)
    z2 = MixedPoint([1, 0], [0.2, 0.4, 0.9, 0.6], 150)
    assert full_kernel(z, z2, cfg) == mixed_kernel(z, z2, cfg)


def test_time_invariant_regret_nonnegative():
    from mecbo.harness import load_preset, run_repetition

    spec = load_preset("a").spec("ti-bo", slots=200)
    recs = run_repetition(spec, 0)
    g = np.array([r.regret for r in recs])
    assert np.all(np.isfinite(g)) and g.min() >= -1e-6


def test_mab_emits_grid_levels():
    env = MecConfig()
    agent = DiscretizedMABAgent(env, 0.1, rep_streams(0))
    grid = np.array([0.2, 0.4, 0.6, 0.8, 1.0])
    for d in _drive(agent, env, 200):
        assert np.all(np.isin(np.round(d.p / env.P_peak, 12), grid))
        assert np.all(np.isin(np.round(d.f / env.f_peak, 12), grid))


def test_mab_full_exploration_uniform():
    # at gamma = 1 the weights cannot matter, so feedback is skipped
    env = MecConfig()
    agent = DiscretizedMABAgent(env, 1.0, rep_streams(1))
    n = 100_000
    c = np.empty((n, 2), int)
    p = np.empty((n, 2))
    for i in range(n):
        d = agent.act(i + 1)
        c[i], p[i] = d.c, d.p
    for m in range(2):
        assert np.all(np.abs(np.bincount(c[:, m], minlength=3) / n - 1 / 3) < 0.01)
        levels = np.round(p[:, m] / env.P_peak * 5).astype(int) - 1
        assert np.all(np.abs(np.bincount(levels, minlength=5) / n - 0.2) < 0.01)


def test_mab_bank_invariants():
    env = MecConfig()
    agent = DiscretizedMABAgent(env, 0.1, rep_streams(2))
    _drive(agent, env, 300)
    for bank in (agent.offload, agent.power, agent.freq):
        q = bank.probabilities()
        np.testing.assert_allclose(q.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(q >= 0.1 / bank.n_arms - 1e-15)
        assert np.all(np.isfinite(bank.log_w))


def test_bco_feasible():
    env = MecConfig()
    for d in _drive(BCOAgent(env, 0.1, BCOParams(), rep_streams(0)), env, 300):
        assert np.all(d.p > 0) and np.all(d.p <= env.P_peak)
        assert np.all(d.f > 0) and np.all(d.f <= env.f_peak)


def test_bco_zero_reward_stationary():
    g = OnePointGradient(4, BCOParams(delta=1e-9), np.random.default_rng(0))
    start = g.center.copy()
    for _ in range(100):
        g.play()
        g.update(0.0, y_hat=0.0)
    np.testing.assert_array_equal(g.center, start)


def test_bco_converges_on_concave_quadratic():
    target = np.array([0.7, 0.35, 0.6, 0.8])

    def reward(x):
        return -np.sum((x - target) ** 2)

    g = OnePointGradient(4, BCOParams(delta=0.2, step=1e-4), np.random.default_rng(5))
    for _ in range(5000):
        x = g.play()
        g.update(reward(x))
    assert np.linalg.norm(g.center - target) < 0.1
