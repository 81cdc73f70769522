"""Per-slot decision makers.

Every agent exposes ``act(slot, context) -> Decision`` followed by
``feedback(y)``.  Agents never touch the environment state; the harness
hands contextual agents the revealed task sizes and workloads only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .acquisition import propose
from .bandit import Exp3Bank
from .gp import FactorizationError, GPModel
from .kernels import KernelConfig, MixedPoint, denormalize_resources, standardize_context
from .mec_env import Decision, MecConfig

log = logging.getLogger(__name__)


@dataclass
class BOSettings:
    rho: float = 0.048
    contextual: bool = False
    l_s: float = 0.2
    learn_l_s: bool = False
    lam: float = 0.5
    l_x: float = 0.5
    omega: float = 1.0
    sigma_o2: float = 0.1
    zeta: float = 2.0
    gamma: float = 0.1
    refit_every: int = 10
    restarts: int = 5
    sigma_exponent: int = 1
    standardize_y: bool = True
    warm_start: int = 0
    n_starts: int = 10
    max_iter: int = 200
    x_floor: float = 0.1

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(
            l_x=self.l_x,
            omega=self.omega,
            lam=self.lam,
            rho=self.rho,
            l_s=self.l_s,
            sigma_o2=self.sigma_o2,
            contextual=self.contextual,
            learn_l_s=self.learn_l_s,
        )


class Agent:
    contextual = False

    def act(self, slot: int, context=None) -> Decision:
        raise NotImplementedError

    def feedback(self, y: float) -> None:
        raise NotImplementedError


class TimeVaryingBOAgent(Agent):
    """GP-UCB over resources with EXP3 offloading, time-augmented inputs.

    ``settings.contextual`` switches on the context kernel; ``rho = 0``
    removes the temporal factor (the time-invariant baseline).

    Targets are standardized with a shift/scale frozen between refits so the
    zero-mean prior sits at the data average.
    """

    def __init__(self, env: MecConfig, settings: BOSettings, rngs: dict):
        self.env = env
        self.settings = settings
        self.contextual = settings.contextual
        self.model = GPModel(settings.kernel_config())
        self.bank = Exp3Bank(env.M, env.N + 1, settings.gamma)
        self.rng_acq = rngs["acquisition"]
        self.rng_bank = rngs["bandit"]
        self.rng_hyper = rngs["hyper"]
        self.x_peak = env.x_peak
        self.raw_y: list[float] = []
        self.shift, self.scale = 0.0, 1.0
        self._pending: Optional[tuple] = None
        self.refits = 0
        self.failures = 0

    def _context(self, context):
        if not self.contextual:
            return None
        if context is None:
            raise ValueError("contextual agent needs the revealed context")
        I_bits, L_cycles = context
        return standardize_context(I_bits, L_cycles, self.env.I_mean, self.env.L_mean)

    def _refit(self):
        st = self.settings
        y = np.asarray(self.raw_y)
        if st.standardize_y:
            self.shift = float(y.mean())
            sd = float(y.std())
            self.scale = sd if sd > 1e-12 else 1.0
        points = self.model.points
        try:
            model = GPModel(self.model.cfg, points, (y - self.shift) / self.scale)
            model.fit_hyperparameters(st.restarts, self.rng_hyper)
            self.model = model
            self.refits += 1
        except (FactorizationError, ValueError) as exc:
            self.failures += 1
            log.warning("refit failed at n=%d: %s", len(y), exc)

    def act(self, slot: int, context=None) -> Decision:
        st = self.settings
        t = slot - 1
        if t > 0 and t % st.refit_every == 1 % st.refit_every:
            self._refit()
        s = self._context(context)
        if t < st.warm_start:
            c = self.bank.sample_actions(self.rng_bank)
            x = self.rng_acq.uniform(st.x_floor, 1.0, size=2 * self.env.M) * self.x_peak
        else:
            c, x = propose(
                self.model, self.bank, slot, s, st.zeta, self.rng_acq,
                x_peak=self.x_peak, sigma_exponent=st.sigma_exponent, bank_rng=self.rng_bank,
                lower=st.x_floor, n_starts=st.n_starts, max_iter=st.max_iter,
            )
        x = np.minimum(np.maximum(x, 1e-6 * self.x_peak), self.x_peak)
        p, f = denormalize_resources(x / self.x_peak, self.env.P_peak, self.env.f_peak)
        self._pending = (MixedPoint(c, x / self.x_peak, slot, s), c)
        return Decision(c, p, f)

    def feedback(self, y: float) -> None:
        z, c = self._pending
        self.raw_y.append(float(y))
        self.model.add_observation(z, (y - self.shift) / self.scale)
        self.bank.update(c, y)
        self._pending = None


def time_invariant_settings(settings: BOSettings) -> BOSettings:
    return replace(settings, rho=0.0, contextual=False)
