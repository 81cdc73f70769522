"""Dynamic multi-user multi-server MEC world.

Per slot the hidden state is a Rician channel matrix plus AR(1)-driven edge
CPU frequencies, task workloads and task input sizes.  Agents only ever see
the scalar reward returned by :func:`observe`; :func:`oracle_optimum` is the
clairvoyant reference used for regret.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

LIGHT_SPEED = 3e8
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class MecConfig:
    M: int = 2
    N: int = 2
    distances: np.ndarray = field(default_factory=lambda: np.array([[20.0, 13.0], [15.0, 18.0]]))
    K_rician: float = 4.0
    eta: float = 0.2
    W: float = 2e6
    sigma2: float = 1e-10
    xi: float = 1e-26
    beta_d: float = 0.5
    beta_e: float = 0.5
    P_peak: float = 0.1
    f_peak: float = 1e8
    A_d: float = 4.11
    phi: float = 915e6
    PL: float = 3.0
    f_c_mean: float = 26.0  # 1e9 Hz
    L_mean: float = 125.0  # 1e6 cycles
    I_mean: float = 125.0  # 1e4 bytes
    residual_var: float = 3.0
    obs_noise_std: float = 0.0

    def __post_init__(self):
        self.distances = np.asarray(self.distances, dtype=float)
        if self.distances.shape != (self.M, self.N):
            raise ValueError(f"distances must be {self.M}x{self.N}, got {self.distances.shape}")
        positive = ("W", "sigma2", "xi", "beta_d", "beta_e", "P_peak", "f_peak", "A_d", "phi", "PL",
                    "f_c_mean", "L_mean", "I_mean", "residual_var")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if np.any(self.distances <= 0):
            raise ValueError("distances must be positive")
        if self.M < 1 or self.N < 1:
            raise ValueError("need M >= 1 and N >= 1")
        if self.K_rician < 0:
            raise ValueError("Rician factor must be >= 0")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("eta must lie in [0, 1]")
        if self.obs_noise_std < 0:
            raise ValueError("obs_noise_std must be >= 0")

    @property
    def x_peak(self) -> np.ndarray:
        return np.concatenate([np.full(self.M, self.P_peak), np.full(self.M, self.f_peak)])

    def mean_gain(self) -> np.ndarray:
        """Path-loss average channel power ``A_d (c / (4 pi phi d))^PL``."""
        return self.A_d * (LIGHT_SPEED / (4.0 * math.pi * self.phi * self.distances)) ** self.PL


@dataclass
class MecState:
    t: int
    h: np.ndarray  # (M, N) complex
    f_c: np.ndarray  # Hz, (N,)
    L: np.ndarray  # cycles, (M,)
    I: np.ndarray  # bits, (M,)
    f_res: np.ndarray
    L_res: np.ndarray
    I_res: np.ndarray
    los_phase: np.ndarray


@dataclass
class Decision:
    c: np.ndarray
    p: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.int64).ravel()
        self.p = np.asarray(self.p, dtype=float).ravel()
        self.f = np.asarray(self.f, dtype=float).ravel()

    def check(self, cfg: MecConfig):
        if not (self.c.size == self.p.size == self.f.size == cfg.M):
            raise ValueError("decision vectors must have length M")
        if np.any(self.c < 0) or np.any(self.c > cfg.N):
            raise ValueError(f"offloading decision out of range: {self.c}")
        if np.any(~(self.p > 0)) or np.any(self.p > cfg.P_peak * (1 + 1e-12)):
            raise ValueError(f"transmit power outside (0, P_peak]: {self.p}")
        if np.any(~(self.f > 0)) or np.any(self.f > cfg.f_peak * (1 + 1e-12)):
            raise ValueError(f"CPU frequency outside (0, f_peak]: {self.f}")


@dataclass
class Cost:
    per_wd: np.ndarray
    total: float
    reward: float
    delay: np.ndarray
    energy: np.ndarray


# --------------------------------------------------------------------------
# state generation


def _channels(cfg: MecConfig, los_phase: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    gain = cfg.mean_gain()
    K = cfg.K_rician
    los = np.sqrt(gain) * np.exp(1j * los_phase)
    nlos = np.sqrt(gain / 2.0) * (rng.standard_normal(gain.shape) + 1j * rng.standard_normal(gain.shape))
    return math.sqrt(K / (K + 1.0)) * los + math.sqrt(1.0 / (K + 1.0)) * nlos


def _assemble(cfg, t, h, f_res, L_res, I_res, phase) -> MecState:
    return MecState(
        t=t,
        h=h,
        f_c=(cfg.f_c_mean + f_res) * 1e9,
        L=(cfg.L_mean + L_res) * 1e6,
        I=(cfg.I_mean + I_res) * 1e4 * 8,
        f_res=f_res,
        L_res=L_res,
        I_res=I_res,
        los_phase=phase,
    )


def _draw_residuals(cfg, rng, prev=None):
    """One AR(1) step (or the initial draw when ``prev`` is None).

    Innovations that would push a physical quantity to <= 0 are redrawn.
    """
    sd = math.sqrt(cfg.residual_var)
    means = (cfg.f_c_mean, cfg.L_mean, cfg.I_mean)
    sizes = (cfg.N, cfg.M, cfg.M)
    out = []
    for k in range(3):
        e = sd * rng.standard_normal(sizes[k])
        new = e if prev is None else math.sqrt(1.0 - cfg.eta) * prev[k] + math.sqrt(cfg.eta) * e
        for _ in range(100):
            bad = means[k] + new <= 0
            if not bad.any():
                break
            e[bad] = sd * rng.standard_normal(bad.sum())
            new = e if prev is None else math.sqrt(1.0 - cfg.eta) * prev[k] + math.sqrt(cfg.eta) * e
        else:
            raise RuntimeError("could not draw a positive state; check the configured means")
        out.append(new)
    return out


def init_state(cfg: MecConfig, rng: np.random.Generator) -> MecState:
    phase = rng.uniform(0.0, 2.0 * math.pi, size=(cfg.M, cfg.N))
    f_res, L_res, I_res = _draw_residuals(cfg, rng)
    h = _channels(cfg, phase, rng)
    return _assemble(cfg, 1, h, f_res, L_res, I_res, phase)


def advance(cfg: MecConfig, state: MecState, rng: np.random.Generator) -> MecState:
    f_res, L_res, I_res = _draw_residuals(cfg, rng, (state.f_res, state.L_res, state.I_res))
    h = _channels(cfg, state.los_phase, rng)
    return _assemble(cfg, state.t + 1, h, f_res, L_res, I_res, state.los_phase)


# --------------------------------------------------------------------------
# cost model


def rate(cfg: MecConfig, p, gain) -> np.ndarray:
    """Uplink rate in bit/s for power ``p`` over channel power ``|h|^2``."""
    return cfg.W * np.log2(1.0 + np.asarray(p) * np.asarray(gain) / cfg.sigma2)


def edc(cfg: MecConfig, state: MecState, d: Decision) -> Cost:
    d.check(cfg)
    gain = np.abs(state.h) ** 2
    delay = np.zeros(cfg.M)
    energy = np.zeros(cfg.M)
    counts = np.bincount(d.c, minlength=cfg.N + 1)
    for m in range(cfg.M):
        n = d.c[m]
        if n == 0:
            delay[m] = state.L[m] / d.f[m]
            energy[m] = cfg.xi * state.L[m] * d.f[m] ** 2
        else:
            R = rate(cfg, d.p[m], gain[m, n - 1])
            tau_u = state.I[m] / R if R > 0 else math.inf
            tau_c = state.L[m] * counts[n] / state.f_c[n - 1]
            delay[m] = tau_u + tau_c
            energy[m] = d.p[m] * tau_u
    per_wd = cfg.beta_d * delay + cfg.beta_e * energy
    total = float(per_wd.sum())
    return Cost(per_wd=per_wd, total=total, reward=-total, delay=delay, energy=energy)


def observe(cfg: MecConfig, state: MecState, d: Decision, rng: Optional[np.random.Generator] = None) -> float:
    y = edc(cfg, state, d).reward
    if cfg.obs_noise_std > 0:
        if rng is None:
            raise ValueError("observation noise requires an rng")
        y += cfg.obs_noise_std * rng.standard_normal()
    return float(y)


# --------------------------------------------------------------------------
# clairvoyant optimum


def local_frequency(cfg: MecConfig) -> float:
    """Minimizer of ``beta_d L / f + beta_e xi L f^2`` over ``(0, f_peak]``."""
    f_star = (cfg.beta_d / (2.0 * cfg.beta_e * cfg.xi)) ** (1.0 / 3.0)
    return min(cfg.f_peak, f_star)


def _upload_cost(cfg, I, gain, p):
    R = rate(cfg, p, gain)
    with np.errstate(divide="ignore"):
        return np.where(R > 0, (cfg.beta_d + cfg.beta_e * p) * I / np.where(R > 0, R, 1.0), np.inf)


def best_power(cfg: MecConfig, I: float, gain: float, grid: int = 200, tol: float = 1e-12) -> tuple[float, float]:
    """Minimize the upload part of the EDC over ``p in (0, P_peak]``.

    A uniform grid locates the bracket, golden-section search refines it.
    """
    ps = cfg.P_peak * np.arange(1, grid + 1) / grid
    costs = _upload_cost(cfg, I, gain, ps)
    k = int(np.argmin(costs))
    a = ps[k - 1] if k > 0 else cfg.P_peak * 1e-9
    b = ps[k + 1] if k < grid - 1 else cfg.P_peak
    best_p, best_c = ps[k], costs[k]
    x1 = b - GOLDEN * (b - a)
    x2 = a + GOLDEN * (b - a)
    f1 = float(_upload_cost(cfg, I, gain, x1))
    f2 = float(_upload_cost(cfg, I, gain, x2))
    while b - a > tol * cfg.P_peak:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = float(_upload_cost(cfg, I, gain, x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = float(_upload_cost(cfg, I, gain, x2))
    for p in (x1, x2, cfg.P_peak):
        c = float(_upload_cost(cfg, I, gain, p))
        if c < best_c:
            best_p, best_c = p, c
    return float(best_p), float(best_c)


@dataclass
class OracleResult:
    c: np.ndarray
    x: np.ndarray  # physical (p, f)
    value: float

    @property
    def decision(self) -> Decision:
        M = self.c.size
        return Decision(self.c, self.x[:M], self.x[M:])


def oracle_optimum(cfg: MecConfig, state: MecState) -> OracleResult:
    """Exhaustive search over offloading vectors with per-WD optimal resources."""
    gain = np.abs(state.h) ** 2
    f_loc = local_frequency(cfg)
    local = cfg.beta_d * state.L / f_loc + cfg.beta_e * cfg.xi * state.L * f_loc**2
    p_opt = np.full((cfg.M, cfg.N), cfg.P_peak)
    up = np.zeros((cfg.M, cfg.N))
    for m in range(cfg.M):
        for n in range(cfg.N):
            p_opt[m, n], up[m, n] = best_power(cfg, state.I[m], gain[m, n])
    best_val, best_c = -np.inf, None
    for combo in itertools.product(range(cfg.N + 1), repeat=cfg.M):
        c = np.array(combo)
        counts = np.bincount(c, minlength=cfg.N + 1)
        total = 0.0
        for m, n in enumerate(combo):
            if n == 0:
                total += local[m]
            else:
                total += up[m, n - 1] + cfg.beta_d * state.L[m] * counts[n] / state.f_c[n - 1]
        if -total > best_val:  # strict: ties keep the lexicographically first
            best_val, best_c = -total, c
    p = np.array([p_opt[m, n - 1] if n > 0 else cfg.P_peak for m, n in enumerate(best_c)])
    f = np.full(cfg.M, f_loc)
    # re-evaluate through the cost model so value and reward share one code path
    value = edc(cfg, state, Decision(best_c, p, f)).reward
    return OracleResult(best_c, np.concatenate([p, f]), value)


def export_trajectory(path, states) -> None:
    """Write slot, per-WD L and I, per-BS f_c and |h|^2 entries to CSV."""
    states = list(states)
    if not states:
        raise ValueError("no states to export")
    M, N = states[0].h.shape
    header = ["slot"] + [f"L_{m+1}" for m in range(M)] + [f"I_{m+1}" for m in range(M)]
    header += [f"f_c_{n+1}" for n in range(N)]
    header += [f"gain_{m+1}_{n+1}" for m in range(M) for n in range(N)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for s in states:
            g = (np.abs(s.h) ** 2).ravel()
            row = [s.t, *s.L, *s.I, *s.f_c, *g]
            w.writerow([row[0]] + [f"{v:.12g}" for v in row[1:]])
