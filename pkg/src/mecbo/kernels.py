"""Covariance functions over mixed categorical/continuous/temporal inputs.

A query point carries an offloading vector ``c`` (integers in ``0..N``), a
normalized resource vector ``x`` in ``(0, 1]``, a slot index ``t`` and, in
contextual mode, a standardized context vector ``s``.  The full covariance is

    k(z, z') = k_s(s, s') * k_temp(t, t') * k_xc(c, x; c', x')

with ``k_xc = (1 - lam) (k_c + k_x) + lam k_c k_x``.  ``k_x`` and ``k_s`` are
unit-amplitude Matern-5/2 kernels; the signal variance lives in ``omega``.

Scalar helpers (``matern_52``, ``full_kernel``, ...) mirror the textbook
formulas and are what the tests poke at.  The GP layer uses the vectorized
:func:`cross_kernel` / :func:`gram` / :func:`gram_gradients`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

SQRT5 = math.sqrt(5.0)

# log-space bounds used when hyperparameters are learned
LOG_BOUNDS = {
    "l_x": (math.log(1e-2), math.log(1e1)),
    "omega": (math.log(1e-3), math.log(1e3)),
    "sigma_o2": (math.log(1e-6), math.log(1e1)),
    "l_s": (math.log(1e-2), math.log(1e2)),
}


@dataclass(frozen=True)
class MixedPoint:
    """One GP input.

    ``x`` and ``s`` are stored already scaled (see :func:`normalize_resources`
    and :func:`standardize_context`).
    """

    c: np.ndarray
    x: np.ndarray
    t: int
    s: Optional[np.ndarray] = None

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.int64).ravel()
        x = np.asarray(self.x, dtype=float).ravel()
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite continuous input")
        if np.any(c < 0):
            raise ValueError("categorical entries must be >= 0")
        if int(self.t) < 1:
            raise ValueError(f"slot index must be >= 1, got {self.t}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", int(self.t))
        if self.s is not None:
            s = np.asarray(self.s, dtype=float).ravel()
            if not np.all(np.isfinite(s)):
                raise ValueError("non-finite context")
            object.__setattr__(self, "s", s)

    @property
    def contextual(self) -> bool:
        return self.s is not None


def normalize_resources(p, f, p_peak: float, f_peak: float) -> np.ndarray:
    """Physical ``(p, f)`` -> normalized ``x = [p / P_peak, f / f_peak]``."""
    return np.concatenate([np.asarray(p, float) / p_peak, np.asarray(f, float) / f_peak])


def denormalize_resources(x, p_peak: float, f_peak: float):
    x = np.asarray(x, float)
    m = x.size // 2
    return x[:m] * p_peak, x[m:] * f_peak


def standardize_context(I_bits, L_cycles, I_mean=125.0, L_mean=125.0, scale=3.0) -> np.ndarray:
    """Fixed affine map for contexts ``[I^1..I^M, L^1..L^M]``.

    ``I_mean`` is in units of 1e4 bytes and ``L_mean`` in 1e6 cycles, the
    units the environment generates them in; ``scale`` is in the same units.
    """
    I_bits = np.asarray(I_bits, float)
    L_cycles = np.asarray(L_cycles, float)
    s_I = (I_bits - I_mean * 1e4 * 8) / (scale * 1e4 * 8)
    s_L = (L_cycles - L_mean * 1e6) / (scale * 1e6)
    return np.concatenate([s_I, s_L])


@dataclass(frozen=True)
class KernelConfig:
    l_x: float = 0.5
    omega: float = 1.0
    lam: float = 0.5
    rho: float = 0.0
    l_s: float = 1.0
    sigma_o2: float = 0.1
    contextual: bool = False
    learn_l_s: bool = False
    nu: float = field(default=2.5)

    def __post_init__(self):
        for name in ("l_x", "omega", "l_s", "sigma_o2"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if self.nu != 2.5:
            raise ValueError("only nu = 5/2 is supported")

    @property
    def free_names(self) -> tuple[str, ...]:
        names = ("l_x", "omega", "sigma_o2")
        if self.contextual and self.learn_l_s:
            names = names + ("l_s",)
        return names

    def log_params(self) -> np.ndarray:
        return np.log([getattr(self, n) for n in self.free_names])

    def with_log_params(self, theta) -> "KernelConfig":
        theta = np.asarray(theta, float)
        return replace(self, **{n: float(np.exp(v)) for n, v in zip(self.free_names, theta)})

    def log_bounds(self) -> list[tuple[float, float]]:
        return [LOG_BOUNDS[n] for n in self.free_names]


# --------------------------------------------------------------------------
# scalar kernels


def _matern_from_scaled(r):
    return (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * np.exp(-SQRT5 * r)


def matern_52(x, x2, l_x: float) -> float:
    x = np.asarray(x, float)
    x2 = np.asarray(x2, float)
    if x.shape != x2.shape:
        raise ValueError("inputs must have the same length")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x2))):
        raise ValueError("non-finite input")
    if not l_x > 0:
        raise ValueError(f"lengthscale must be positive, got {l_x}")
    r = float(np.linalg.norm(x - x2)) / l_x
    return float(_matern_from_scaled(r))


def categorical_kernel(c, c2, omega: float) -> float:
    c = np.asarray(c)
    c2 = np.asarray(c2)
    if c.shape != c2.shape:
        raise ValueError("categorical vectors must have equal length")
    return float(omega * np.mean(c == c2))


def _mix(kc, kx, lam):
    return (1.0 - lam) * (kc + kx) + lam * kc * kx


def mixed_kernel(z: MixedPoint, z2: MixedPoint, cfg: KernelConfig) -> float:
    kc = categorical_kernel(z.c, z2.c, cfg.omega)
    kx = matern_52(z.x, z2.x, cfg.l_x)
    return float(_mix(kc, kx, cfg.lam))


def temporal_kernel(t, t2, rho: float) -> float:
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    if t < 1 or t2 < 1:
        raise ValueError("slot indices must be >= 1")
    dt = abs(int(t) - int(t2))
    if dt == 0:
        return 1.0
    return float((1.0 - rho) ** (dt / 2.0))


def _check_mode(cfg: KernelConfig, *points: MixedPoint):
    for z in points:
        if z.contextual != cfg.contextual:
            raise ValueError(
                f"context mode mismatch: kernel contextual={cfg.contextual}, "
                f"point contextual={z.contextual}"
            )


def full_kernel(z: MixedPoint, z2: MixedPoint, cfg: KernelConfig) -> float:
    _check_mode(cfg, z, z2)
    k = temporal_kernel(z.t, z2.t, cfg.rho) * mixed_kernel(z, z2, cfg)
    if cfg.contextual:
        k *= matern_52(z.s, z2.s, cfg.l_s)
    return float(k)


# --------------------------------------------------------------------------
# vectorized kernels


@dataclass
class PointBatch:
    """Column-stacked arrays for a set of :class:`MixedPoint`."""

    C: np.ndarray
    X: np.ndarray
    T: np.ndarray
    S: Optional[np.ndarray] = None

    def __len__(self):
        return self.X.shape[0]

    @classmethod
    def from_points(cls, points: Sequence[MixedPoint]) -> "PointBatch":
        if len(points) == 0:
            raise ValueError("empty point list")
        modes = {z.contextual for z in points}
        if len(modes) > 1:
            raise ValueError("points mix contextual and non-contextual inputs")
        C = np.stack([z.c for z in points])
        X = np.stack([z.x for z in points])
        T = np.array([z.t for z in points], dtype=float)
        S = np.stack([z.s for z in points]) if points[0].contextual else None
        return cls(C, X, T, S)

    def subset(self, idx) -> "PointBatch":
        return PointBatch(self.C[idx], self.X[idx], self.T[idx], None if self.S is None else self.S[idx])


def _dist(A, B):
    diff = A[:, None, :] - B[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def _temporal_matrix(Ta, Tb, rho):
    dt = np.abs(Ta[:, None] - Tb[None, :])
    if rho == 0.0:
        return np.ones_like(dt)
    if rho == 1.0:
        return (dt == 0).astype(float)
    return np.exp(0.5 * dt * math.log1p(-rho))


def _check_batch_mode(cfg, *batches):
    for b in batches:
        if (b.S is not None) != cfg.contextual:
            raise ValueError("context mode mismatch between points and kernel config")


def cross_kernel(A: PointBatch, B: PointBatch, cfg: KernelConfig) -> np.ndarray:
    """Matrix ``K[i, j] = k(A_i, B_j)``."""
    _check_batch_mode(cfg, A, B)
    kc = cfg.omega * (A.C[:, None, :] == B.C[None, :, :]).mean(-1)
    kx = _matern_from_scaled(_dist(A.X, B.X) / cfg.l_x)
    K = _mix(kc, kx, cfg.lam) * _temporal_matrix(A.T, B.T, cfg.rho)
    if cfg.contextual:
        K *= _matern_from_scaled(_dist(A.S, B.S) / cfg.l_s)
    return K


def prior_variance(cfg: KernelConfig) -> float:
    """``k(z, z)``; identical for every point (stationary diagonal)."""
    return float(_mix(cfg.omega, 1.0, cfg.lam))


def gram(points, cfg: KernelConfig) -> np.ndarray:
    """Noise-free Gram matrix of a point list or :class:`PointBatch`."""
    batch = points if isinstance(points, PointBatch) else PointBatch.from_points(points)
    K = cross_kernel(batch, batch, cfg)
    return 0.5 * (K + K.T)


@dataclass
class PairwiseCache:
    """Hyperparameter-free pairwise quantities of one batch (reused across LML calls)."""

    match: np.ndarray
    dx: np.ndarray
    dt: np.ndarray
    ds: Optional[np.ndarray] = None

    @classmethod
    def from_batch(cls, batch: PointBatch) -> "PairwiseCache":
        match = (batch.C[:, None, :] == batch.C[None, :, :]).mean(-1)
        dt = np.abs(batch.T[:, None] - batch.T[None, :])
        ds = None if batch.S is None else _dist(batch.S, batch.S)
        return cls(match, _dist(batch.X, batch.X), dt, ds)


def gram_and_gradients(cache: PairwiseCache, cfg: KernelConfig) -> tuple[np.ndarray, list[np.ndarray]]:
    """Noise-free Gram matrix and the derivatives of ``K + sigma_o2 I``.

    Derivatives are w.r.t. each log free hyperparameter, in ``cfg.free_names``
    order.
    """
    if (cache.ds is not None) != cfg.contextual:
        raise ValueError("context mode mismatch between points and kernel config")
    n = cache.dx.shape[0]
    kc = cfg.omega * cache.match
    r = cache.dx / cfg.l_x
    e = np.exp(-SQRT5 * r)
    kx = (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * e
    dkx_dlog_l = (5.0 / 3.0) * r * r * (1.0 + SQRT5 * r) * e
    if cfg.rho == 0.0:
        temp = np.ones_like(cache.dt)
    elif cfg.rho == 1.0:
        temp = (cache.dt == 0).astype(float)
    else:
        temp = np.exp(0.5 * cache.dt * math.log1p(-cfg.rho))
    outer = temp
    if cfg.contextual:
        rs = cache.ds / cfg.l_s
        es = np.exp(-SQRT5 * rs)
        ks = (1.0 + SQRT5 * rs + (5.0 / 3.0) * rs * rs) * es
        dks_dlog_l = (5.0 / 3.0) * rs * rs * (1.0 + SQRT5 * rs) * es
        outer = temp * ks
    lam = cfg.lam
    mixed = _mix(kc, kx, lam)
    K = outer * mixed
    grads = {
        "l_x": outer * ((1.0 - lam) + lam * kc) * dkx_dlog_l,
        "omega": outer * ((1.0 - lam) * kc + lam * kc * kx),
        "sigma_o2": cfg.sigma_o2 * np.eye(n),
    }
    if cfg.contextual:
        grads["l_s"] = temp * dks_dlog_l * mixed
    sym = lambda A: 0.5 * (A + A.T)
    return sym(K), [sym(grads[k]) for k in cfg.free_names]


def gram_gradients(points, cfg: KernelConfig) -> list[np.ndarray]:
    """Derivatives of ``K + sigma_o2 I`` w.r.t. each log free hyperparameter.

    Order follows ``cfg.free_names``.
    """
    batch = points if isinstance(points, PointBatch) else PointBatch.from_points(points)
    _check_batch_mode(cfg, batch)
    return gram_and_gradients(PairwiseCache.from_batch(batch), cfg)[1]
