"""UCB acquisition over the normalized resource box.

With the offloading vector, slot and context fixed, the kernel vector
between a candidate ``x`` and the stored data factors as

    k(x) = A + B * matern(x, X_data)

so the posterior and its x-gradient only need one Matern evaluation per
data point.  All starts of the multi-start ascent are advanced as a batch.
"""

from __future__ import annotations

from typing import Optional

import numpy as np
from scipy.linalg import cho_solve
from scipy.optimize import minimize

from .bandit import Exp3Bank
from .gp import GPModel
from .kernels import SQRT5, _dist, _temporal_matrix, prior_variance

EPS = 1e-6
STEP_TOL = 1e-5  # normalized units
VALUE_TOL = 1e-6  # minimum UCB gain over PROGRESS_WINDOW iterations
PROGRESS_WINDOW = 10
COARSE_ITER = 30


def _fast_dist(A, B):
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    return np.sqrt(np.maximum(d2, 0.0))


def _coefficients(model: GPModel, c, t, s):
    cfg = model.cfg
    b = model.batch
    if (s is not None) != cfg.contextual:
        raise ValueError("context mode mismatch between query and model")
    c = np.asarray(c, dtype=np.int64).ravel()
    kc = cfg.omega * (b.C == c[None, :]).mean(1)
    g = _temporal_matrix(np.array([float(t)]), b.T, cfg.rho)[0]
    if cfg.contextual:
        rs = _dist(np.asarray(s, float)[None, :], b.S)[0] / cfg.l_s
        g = g * (1.0 + SQRT5 * rs + (5.0 / 3.0) * rs * rs) * np.exp(-SQRT5 * rs)
    A = g * (1.0 - cfg.lam) * kc
    B = g * ((1.0 - cfg.lam) + cfg.lam * kc)
    return A, B


def posterior_batch(model: GPModel, Xn, c, t, s=None, grad=False, coef=None):
    """Posterior mean/variance at normalized points ``Xn`` (rows).

    With ``grad=True`` also returns their gradients w.r.t. ``Xn``.  ``coef``
    caches the ``(A, B)`` pair for repeated calls with the same ``(c, t, s)``.
    """
    Xn = np.atleast_2d(np.asarray(Xn, float))
    kzz = prior_variance(model.cfg)
    if len(model) == 0:
        if (s is not None) != model.cfg.contextual:
            raise ValueError("context mode mismatch between query and model")
        mu = np.zeros(len(Xn))
        var = np.full(len(Xn), kzz)
        if grad:
            return mu, var, np.zeros_like(Xn), np.zeros_like(Xn)
        return mu, var
    A, B = _coefficients(model, c, t, s) if coef is None else coef
    X = model.batch.X
    l = model.cfg.l_x
    r = _fast_dist(Xn, X) / l
    e = np.exp(-SQRT5 * r)
    kx = (1.0 + SQRT5 * r + (5.0 / 3.0) * r * r) * e
    Kq = A[None, :] + B[None, :] * kx
    mu = Kq @ model.alpha
    V = cho_solve((model.chol, True), Kq.T)
    var = np.maximum(kzz - np.einsum("qi,iq->q", Kq, V), 0.0)
    if not grad:
        return mu, var
    G = -(5.0 / 3.0) * (1.0 + SQRT5 * r) * e / (l * l)
    Wm = G * (B * model.alpha)[None, :]
    dmu = Wm.sum(1)[:, None] * Xn - Wm @ X
    Wv = G * B[None, :] * V.T
    dvar = -2.0 * (Wv.sum(1)[:, None] * Xn - Wv @ X)
    return mu, var, dmu, dvar


def _ucb_batch(model, Xn, c, t, s, zeta, sigma_exponent, grad=False, coef=None):
    root = np.sqrt(zeta)
    if not grad:
        mu, var = posterior_batch(model, Xn, c, t, s, coef=coef)
        spread = np.sqrt(var) if sigma_exponent == 1 else var
        return mu + root * spread
    mu, var, dmu, dvar = posterior_batch(model, Xn, c, t, s, grad=True, coef=coef)
    if sigma_exponent == 1:
        sd = np.sqrt(var)
        val = mu + root * sd
        dval = dmu + root * dvar / (2.0 * np.maximum(sd, 1e-12))[:, None]
    else:
        val = mu + root * var
        dval = dmu + root * dvar
    return val, dval


def ucb(model: GPModel, x, c, t: int, s=None, zeta: float = 2.0, sigma_exponent: int = 1, x_peak=None) -> float:
    """``mu + sqrt(zeta) * sigma**sigma_exponent`` at one resource vector.

    ``x`` is physical when ``x_peak`` is given, otherwise already normalized.
    """
    if zeta < 0:
        raise ValueError("zeta must be non-negative")
    if sigma_exponent not in (1, 2):
        raise ValueError("sigma_exponent must be 1 or 2")
    x = np.asarray(x, float).ravel()
    bound = np.ones_like(x) if x_peak is None else np.asarray(x_peak, float)
    if np.any(~(x > 0)) or np.any(x > bound * (1 + 1e-12)):
        raise ValueError(f"infeasible resource vector {x}")
    xn = x if x_peak is None else x / bound
    return float(_ucb_batch(model, xn[None, :], c, t, s, zeta, sigma_exponent)[0])


def maximize_ucb(
    model: GPModel,
    c,
    t: int,
    s=None,
    zeta: float = 2.0,
    rng: Optional[np.random.Generator] = None,
    dim: Optional[int] = None,
    x_peak=None,
    n_starts: int = 10,
    max_iter: int = 200,
    sigma_exponent: int = 1,
    return_value: bool = False,
    lower: float = EPS,
    n_polish: int = 2,
):
    """Multi-start maximization of UCB on ``[lower, 1]^dim``.

    Starts are ``n_starts`` uniform draws plus the best observed resource
    vector.  All starts take a few batched projected-gradient steps (each
    with its own step length, grown on success and halved on failure); the
    ``n_polish`` best are then refined with L-BFGS-B for up to ``max_iter``
    iterations.  Returns the physical vector when ``x_peak`` is given, else
    the normalized one.
    """
    rng = rng if rng is not None else np.random.default_rng()
    if dim is None:
        if x_peak is not None:
            dim = len(x_peak)
        elif len(model):
            dim = model.batch.X.shape[1]
        else:
            raise ValueError("cannot infer dimension from an empty model; pass dim")
    starts = rng.uniform(lower, 1.0, size=(n_starts, dim))
    if len(model):
        starts = np.vstack([starts, model.batch.X[int(np.argmax(model.y))]])
    X = np.clip(starts, lower, 1.0)
    coef = _coefficients(model, c, t, s) if len(model) else None
    vals, grads = _ucb_batch(model, X, c, t, s, zeta, sigma_exponent, grad=True, coef=coef)
    step = np.full(len(X), 0.1)
    active = np.ones(len(X), dtype=bool)
    anchor = vals.copy()
    for it in range(1, min(COARSE_ITER, max_iter) + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        g = grads[idx]
        gn = np.linalg.norm(g, axis=1)
        direction = g / np.maximum(gn, 1e-300)[:, None]
        cand = np.clip(X[idx] + step[idx, None] * direction, lower, 1.0)
        moved = np.linalg.norm(cand - X[idx], axis=1)
        cv, cg = _ucb_batch(model, cand, c, t, s, zeta, sigma_exponent, grad=True, coef=coef)
        better = cv > vals[idx]
        up = idx[better]
        X[up], vals[up], grads[up] = cand[better], cv[better], cg[better]
        step[up] *= 1.5
        step[idx[~better]] *= 0.5
        done = (gn < 1e-10) | (moved < STEP_TOL) | (step[idx] < STEP_TOL)
        active[idx[done]] = False
        if it % PROGRESS_WINDOW == 0:
            stalled = vals - anchor < VALUE_TOL
            active &= ~stalled
            anchor = vals.copy()

    if len(model) and n_polish > 0:

        def negative(x):
            v, dv = _ucb_batch(model, x[None, :], c, t, s, zeta, sigma_exponent, grad=True, coef=coef)
            return -v[0], -dv[0]

        bounds = [(lower, 1.0)] * dim
        for i in np.argsort(-vals)[:n_polish]:
            res = minimize(negative, X[i], jac=True, method="L-BFGS-B", bounds=bounds,
                           options={"maxiter": max_iter, "gtol": 1e-9, "ftol": 1e-13})
            if np.isfinite(res.fun) and -res.fun > vals[i]:
                X[i] = np.clip(res.x, lower, 1.0)
                vals[i] = -res.fun
    best = int(np.argmax(vals))
    x = X[best].copy()
    if x_peak is not None:
        x = x * np.asarray(x_peak, float)
    return (x, float(vals[best])) if return_value else x


def propose(
    model: GPModel,
    bank: Exp3Bank,
    t_next: int,
    s_next=None,
    zeta: float = 2.0,
    rng: Optional[np.random.Generator] = None,
    x_peak=None,
    sigma_exponent: int = 1,
    bank_rng: Optional[np.random.Generator] = None,
    lower: float = EPS,
    n_starts: int = 10,
    max_iter: int = 200,
):
    """Draw offloading actions from EXP3, then maximize UCB over resources.

    ``bank_rng`` lets the categorical draws use their own stream.
    """
    rng = rng if rng is not None else np.random.default_rng()
    c = bank.sample_actions(bank_rng if bank_rng is not None else rng)
    dim = 2 * bank.n_agents
    x = maximize_ucb(
        model, c, t_next, s_next, zeta, rng, dim=dim, x_peak=x_peak,
        n_starts=n_starts, max_iter=max_iter, sigma_exponent=sigma_exponent, lower=lower,
    )
    return c, x
