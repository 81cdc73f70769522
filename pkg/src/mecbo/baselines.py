"""Comparison methods: time-invariant BO, discretized EXP3, bandit convex optimization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agents import Agent, BOSettings, TimeVaryingBOAgent, time_invariant_settings
from .bandit import Exp3Bank, RewardScaler
from .mec_env import Decision, MecConfig



def time_invariant_bo_agent(env: MecConfig, settings: BOSettings, rngs: dict) -> TimeVaryingBOAgent:
    """The proposed agent with the temporal factor and context switched off."""
    return TimeVaryingBOAgent(env, time_invariant_settings(settings), rngs)


class DiscretizedMABAgent(Agent):
    """Three EXP3 learners per WD: offloading target, power level, frequency level."""

    def __init__(self, env: MecConfig, gamma: float, rngs: dict, levels: int = 5):
        self.env = env
        self.grid = np.arange(1, levels + 1) / levels
        self.scaler = RewardScaler()
        self.offload = Exp3Bank(env.M, env.N + 1, gamma, scaler=self.scaler)
        self.power = Exp3Bank(env.M, levels, gamma, scaler=self.scaler)
        self.freq = Exp3Bank(env.M, levels, gamma, scaler=self.scaler)
        self.rng = rngs["bandit"]
        self._pending = None

    def act(self, slot: int, context=None) -> Decision:
        q = (self.offload.probabilities(), self.power.probabilities(), self.freq.probabilities())
        c = self.offload.sample_actions(self.rng)
        kp = self.power.sample_actions(self.rng)
        kf = self.freq.sample_actions(self.rng)
        self._pending = (c, kp, kf, q)
        return Decision(c, self.grid[kp] * self.env.P_peak, self.grid[kf] * self.env.f_peak)

    def feedback(self, y: float) -> None:
        c, kp, kf, q = self._pending
        y_hat = self.scaler(y)
        self.offload.update_normalized(c, y_hat, q[0])
        self.power.update_normalized(kp, y_hat, q[1])
        self.freq.update_normalized(kf, y_hat, q[2])
        self._pending = None


@dataclass
class BCOParams:
    delta: float = 0.1
    step: float = 0.05
    x0: float = 0.5
    x_floor: float = 0.1


class OnePointGradient:
    """One-point (spherical) gradient ascent on a box, fed normalized rewards.

    Kept separate from the MEC agent so it can be driven by any scalar
    function in tests.
    """

    def __init__(self, dim: int, params: BCOParams, rng: np.random.Generator):
        self.dim = dim
        self.params = params
        self.rng = rng
        self.center = np.full(dim, params.x0)
        self.scaler = RewardScaler()
        self._u = None

    def play(self) -> np.ndarray:
        u = self.rng.standard_normal(self.dim)
        u /= np.linalg.norm(u)
        self._u = u
        return np.clip(self.center + self.params.delta * u, self.params.x_floor, 1.0)

    def update(self, y_raw: float, y_hat: float | None = None) -> None:
        y_hat = self.scaler(y_raw) if y_hat is None else y_hat
        g = (self.dim / self.params.delta) * y_hat * self._u
        self.center = np.clip(self.center + self.params.step * g, self.params.x_floor, 1.0)


class BCOAgent(Agent):
    """EXP3 for offloading, one-point gradient ascent for resources."""

    def __init__(self, env: MecConfig, gamma: float, params: BCOParams, rngs: dict):
        self.env = env
        self.scaler = RewardScaler()
        self.bank = Exp3Bank(env.M, env.N + 1, gamma, scaler=self.scaler)
        self.grad = OnePointGradient(2 * env.M, params, rngs["acquisition"])
        self.rng = rngs["bandit"]
        self.x_peak = env.x_peak
        self._pending = None

    def act(self, slot: int, context=None) -> Decision:
        q = self.bank.probabilities()
        c = self.bank.sample_actions(self.rng)
        x = self.grad.play() * self.x_peak
        self._pending = (c, q)
        M = self.env.M
        return Decision(c, x[:M], x[M:])

    def feedback(self, y: float) -> None:
        c, q = self._pending
        y_hat = self.scaler(y)
        self.bank.update_normalized(c, y_hat, q)
        self.grad.update(y, y_hat)
        self._pending = None
