"""Multi-agent EXP3 with log-domain weights.

One :class:`Exp3Bank` holds ``n_agents`` independent EXP3 learners with the
same arm count and exploration rate.  EXP3 wants rewards in ``[0, 1]``; raw
rewards (negative energy-delay costs) are squashed by :class:`RewardScaler`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

RECENTER_AT = 512.0


@dataclass
class RewardScaler:
    """Running min-max normalization to ``[0, 1]``.

    The range is seeded at the first observation +/- ``margin`` of its
    magnitude and only ever widens.  A degenerate range maps to 0.
    """

    margin: float = 0.1
    lo: Optional[float] = None
    hi: Optional[float] = None

    def __call__(self, y_raw: float) -> float:
        y_raw = float(y_raw)
        if not math.isfinite(y_raw):
            raise ValueError(f"non-finite reward {y_raw}")
        if self.lo is None:
            half = self.margin * abs(y_raw)
            self.lo, self.hi = y_raw - half, y_raw + half
        else:
            self.lo = min(self.lo, y_raw)
            self.hi = max(self.hi, y_raw)
        width = self.hi - self.lo
        if width <= 0.0:
            return 0.0
        return min(max((y_raw - self.lo) / width, 0.0), 1.0)


@dataclass
class Exp3Bank:
    n_agents: int
    n_arms: int
    gamma: float = 0.1
    log_w: np.ndarray = field(default=None)
    scaler: RewardScaler = field(default_factory=RewardScaler)

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.n_agents < 1 or self.n_arms < 1:
            raise ValueError("need at least one agent and one arm")
        if self.log_w is None:
            self.log_w = np.zeros((self.n_agents, self.n_arms))
        else:
            self.log_w = np.array(self.log_w, dtype=float)
            if self.log_w.shape != (self.n_agents, self.n_arms):
                raise ValueError("log_w shape does not match (n_agents, n_arms)")

    def probabilities(self) -> np.ndarray:
        """``(n_agents, n_arms)`` matrix of sampling distributions."""
        w = np.exp(self.log_w - self.log_w.max(axis=1, keepdims=True))
        w *= (1.0 - self.gamma) / w.sum(axis=1, keepdims=True)
        w += self.gamma / self.n_arms
        return w

    def action_probabilities(self, m: int) -> np.ndarray:
        if not 0 <= m < self.n_agents:
            raise IndexError(f"agent index {m} out of range")
        return self.probabilities()[m]

    def sample_actions(self, rng: np.random.Generator) -> np.ndarray:
        q = self.probabilities()
        u = rng.random(self.n_agents)
        cdf = np.cumsum(q, axis=1)
        actions = (u[:, None] > cdf).sum(axis=1)
        return np.minimum(actions, self.n_arms - 1)

    def update_normalized(self, actions, y_hat: float, q: Optional[np.ndarray] = None) -> np.ndarray:
        """Importance-weighted exponential update with a reward in ``[0, 1]``.

        ``q`` are the probabilities the actions were drawn from (defaults to
        the current ones).  Returns the per-agent reward estimates.
        """
        actions = np.asarray(actions, dtype=np.int64)
        if actions.shape != (self.n_agents,) or actions.min() < 0 or actions.max() >= self.n_arms:
            raise ValueError(f"invalid actions {actions}")
        q = self.probabilities() if q is None else q
        rows = np.arange(self.n_agents)
        gain = y_hat / q[rows, actions]
        est = np.zeros((self.n_agents, self.n_arms))
        est[rows, actions] = gain
        self.log_w[rows, actions] += self.gamma * gain / self.n_arms
        # probabilities are shift invariant; re-center rows that drift far
        top = self.log_w.max(axis=1)
        if top.max() > RECENTER_AT:
            self.log_w -= np.where(top > RECENTER_AT, top, 0.0)[:, None]
        return est

    def update(self, actions, y_raw: float) -> np.ndarray:
        return self.update_normalized(actions, self.scaler(y_raw))
