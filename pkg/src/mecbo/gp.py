"""Exact GP regression over :class:`~mecbo.kernels.MixedPoint` inputs.

Everything goes through a cached Cholesky factor of ``K + sigma_o2 I``;
explicit inverses are never formed outside the trace term of the LML
gradient, where ``cho_solve`` against the identity is the cheapest route.
"""

from __future__ import annotations

import logging
import math
import warnings
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .kernels import (
    KernelConfig,
    MixedPoint,
    PairwiseCache,
    PointBatch,
    cross_kernel,
    gram,
    gram_and_gradients,
    prior_variance,
)

log = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)
LOG_2PI = math.log(2.0 * math.pi)


class FactorizationError(np.linalg.LinAlgError):
    """``K + sigma_o2 I`` stayed indefinite across the whole jitter ladder."""


def stable_cholesky(A: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``A``, escalating diagonal jitter on failure."""
    n = A.shape[0]
    for jitter in JITTER_LADDER:
        try:
            L = np.linalg.cholesky(A + jitter * np.eye(n) if jitter else A)
        except np.linalg.LinAlgError:
            continue
        if jitter:
            log.info("cholesky needed jitter %.0e (n=%d)", jitter, n)
        return L, jitter
    raise FactorizationError(f"matrix of size {n} not positive definite after jitter {JITTER_LADDER[-1]:g}")


def _lml_terms(batch: PointBatch, y: np.ndarray, cfg: KernelConfig):
    K = gram(batch, cfg) + cfg.sigma_o2 * np.eye(len(y))
    L, _ = stable_cholesky(K)
    alpha = cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(y) * LOG_2PI
    return L, alpha, float(lml)


def lml_and_gradient(
    batch: PointBatch, y: np.ndarray, cfg: KernelConfig, cache: Optional[PairwiseCache] = None
) -> tuple[float, np.ndarray]:
    """LML and its gradient w.r.t. ``cfg.log_params()``.

    ``cache`` holds the batch's pairwise distances when called repeatedly.
    """
    cache = PairwiseCache.from_batch(batch) if cache is None else cache
    K, dK = gram_and_gradients(cache, cfg)
    n = len(y)
    L, _ = stable_cholesky(K + cfg.sigma_o2 * np.eye(n))
    alpha = cho_solve((L, True), y)
    lml = float(-0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * LOG_2PI)
    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    grad = np.array([0.5 * np.sum(W * D) for D in dK])
    return lml, grad


class GPModel:
    """Zero-mean GP with an incrementally maintained Cholesky factor.

    Parameters
    ----------
    cfg : KernelConfig
        Kernel hyperparameters; replaced wholesale by :meth:`set_config`.
    points, y : optional
        Initial dataset.
    """

    def __init__(self, cfg: KernelConfig, points=None, y=None):
        self.cfg = cfg
        self.points: list[MixedPoint] = []
        self.y = np.zeros(0)
        self.batch: Optional[PointBatch] = None
        self.chol = np.zeros((0, 0))
        self.alpha = np.zeros(0)
        self.jitter = 0.0
        if points is not None:
            if y is None or len(points) != len(y):
                raise ValueError("points and y must have the same length")
            for z in points:
                self._check_point(z)
            self.points = list(points)
            self.y = np.asarray(y, float).copy()
            if not np.all(np.isfinite(self.y)):
                raise ValueError("non-finite observation")
            self._refactor()

    def __len__(self):
        return len(self.points)

    # -- data management ---------------------------------------------------

    def _check_point(self, z: MixedPoint):
        if z.contextual != self.cfg.contextual:
            raise ValueError(
                f"context mode mismatch: model contextual={self.cfg.contextual}, point contextual={z.contextual}"
            )

    def _refactor(self):
        if not self.points:
            self.batch = None
            self.chol = np.zeros((0, 0))
            self.alpha = np.zeros(0)
            self.jitter = 0.0
            return
        self.batch = PointBatch.from_points(self.points)
        K = gram(self.batch, self.cfg) + self.cfg.sigma_o2 * np.eye(len(self.y))
        self.chol, self.jitter = stable_cholesky(K)
        self.alpha = cho_solve((self.chol, True), self.y)

    def set_config(self, cfg: KernelConfig):
        self.cfg = cfg
        self._refactor()

    def add_observation(self, z: MixedPoint, y: float) -> "GPModel":
        """Append ``(z, y)`` and extend the factor by one row.

        Falls back to a full refactorization when the new pivot is not
        safely positive.  Returns ``self`` for chaining.
        """
        self._check_point(z)
        y = float(y)
        if not math.isfinite(y):
            raise ValueError(f"non-finite observation {y}")
        if self.points and self.points[-1].t > z.t:
            raise ValueError("observations must arrive in slot order")
        if not self.points:
            self.points = [z]
            self.y = np.array([y])
            self._refactor()
            return self
        zb = PointBatch.from_points([z])
        k = cross_kernel(self.batch, zb, self.cfg)[:, 0]
        kzz = prior_variance(self.cfg) + self.cfg.sigma_o2 + self.jitter
        row = solve_triangular(self.chol, k, lower=True)
        pivot2 = kzz - row @ row
        self.points.append(z)
        self.y = np.append(self.y, y)
        if pivot2 <= 1e-12 * kzz:
            self._refactor()
            return self
        n = len(self.y)
        L = np.zeros((n, n))
        L[:-1, :-1] = self.chol
        L[-1, :-1] = row
        L[-1, -1] = math.sqrt(pivot2)
        self.chol = L
        self.batch = PointBatch(
            np.vstack([self.batch.C, zb.C]),
            np.vstack([self.batch.X, zb.X]),
            np.append(self.batch.T, zb.T),
            None if zb.S is None else np.vstack([self.batch.S, zb.S]),
        )
        self.alpha = cho_solve((self.chol, True), self.y)
        return self

    # -- inference ------------------------------------------------------------

    def predict(self, query) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and variance at a :class:`PointBatch` or point list."""
        qb = query if isinstance(query, PointBatch) else PointBatch.from_points(list(query))
        if (qb.S is not None) != self.cfg.contextual:
            raise ValueError("context mode mismatch between query and model")
        kzz = prior_variance(self.cfg)
        if not self.points:
            return np.zeros(len(qb)), np.full(len(qb), kzz)
        Ks = cross_kernel(self.batch, qb, self.cfg)
        mu = Ks.T @ self.alpha
        V = solve_triangular(self.chol, Ks, lower=True)
        var = np.maximum(kzz - np.einsum("ij,ij->j", V, V), 0.0)
        return mu, var

    def posterior(self, z: MixedPoint) -> tuple[float, float]:
        self._check_point(z)
        mu, var = self.predict([z])
        return float(mu[0]), float(var[0])

    def log_marginal_likelihood(self) -> float:
        if not self.points:
            raise ValueError("log marginal likelihood needs at least one observation")
        return float(
            -0.5 * self.y @ self.alpha - np.log(np.diag(self.chol)).sum() - 0.5 * len(self.y) * LOG_2PI
        )

    def lml_gradient(self) -> np.ndarray:
        """Gradient of the LML w.r.t. ``cfg.log_params()``."""
        if not self.points:
            raise ValueError("log marginal likelihood needs at least one observation")
        return lml_and_gradient(self.batch, self.y, self.cfg)[1]

    # -- hyperparameters --------------------------------------------------------

    def fit_hyperparameters(
        self,
        restarts: int = 5,
        rng: Optional[np.random.Generator] = None,
        max_iter: int = 100,
        gtol: float = 1e-5,
        perturb_scale: float = 1.0,
    ) -> KernelConfig:
        """Multi-start LML maximization over the free log-hyperparameters.

        Restart 0 starts from the current config, the rest from Gaussian
        perturbations of it in log space.  The winning config is installed
        and returned; if no restart yields a finite LML the old config stays.
        """
        if not self.points:
            raise ValueError("cannot fit hyperparameters without data")
        if restarts <= 0:
            return self.cfg
        rng = rng if rng is not None else np.random.default_rng(0)
        base = self.cfg
        theta0 = base.log_params()
        bounds = base.log_bounds()
        lo = np.array([b[0] for b in bounds])
        hi = np.array([b[1] for b in bounds])
        starts = [np.clip(theta0, lo, hi)]
        for _ in range(restarts - 1):
            starts.append(np.clip(theta0 + perturb_scale * rng.standard_normal(theta0.size), lo, hi))

        cache = PairwiseCache.from_batch(self.batch)

        def objective(theta):
            try:
                lml, grad = lml_and_gradient(self.batch, self.y, base.with_log_params(theta), cache)
            except FactorizationError:
                return np.inf, np.zeros_like(theta)
            if not np.isfinite(lml):
                return np.inf, np.zeros_like(theta)
            return -lml, -grad

        best_theta, best_val = None, np.inf
        for start in starts:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                res = minimize(
                    objective,
                    start,
                    jac=True,
                    method="L-BFGS-B",
                    bounds=bounds,
                    options={"maxiter": max_iter, "gtol": gtol},
                )
            if np.isfinite(res.fun) and res.fun < best_val:
                best_theta, best_val = res.x, float(res.fun)
        if best_theta is None:
            warnings.warn("hyperparameter refit failed on every restart; keeping previous config")
            log.warning("hyperparameter refit failed on every restart (n=%d)", len(self.y))
            return self.cfg
        try:
            self.set_config(base.with_log_params(best_theta))
        except FactorizationError:
            warnings.warn("refit config could not be factorized; keeping previous config")
            self.set_config(base)
        return self.cfg
