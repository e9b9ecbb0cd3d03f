"""Sampling distributions that minimise g(p) = E[max delay] / (1 - B_p)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import SelectionDecision
from .objectives import AssumptionViolation, SamplingObjective, g_dist_value


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection onto {p >= 0, sum p = 1} (sort-and-threshold)."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, len(v) + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(v - theta, 0.0)


@dataclass(frozen=True)
class SamplingResult:
    p: np.ndarray
    value: float
    flagged: bool = False


def _value(obj: SamplingObjective, p: np.ndarray) -> float:
    # B_p can reach 1 inside the simplex even when every vertex is fine
    try:
        return g_dist_value(obj, p)
    except AssumptionViolation:
        return np.inf


def _pgd(obj: SamplingObjective, p0: np.ndarray, max_iter: int, tol: float) -> tuple[np.ndarray, float]:
    p = project_simplex(p0)
    f, grad = obj.value_and_grad(p)
    if not np.isfinite(f):
        return p, f
    step = 1.0 / max(float(np.abs(grad).max()), 1e-12)
    for _ in range(max_iter):
        while True:
            q = project_simplex(p - step * grad)
            diff = q - p
            fq, gq = obj.value_and_grad(q)
            # sufficient decrease for projected gradient with a local Lipschitz guess of 1/step
            if fq <= f + grad @ diff + (diff @ diff) / (2 * step) or step < 1e-20:
                break
            step *= 0.5
        moved = float(np.abs(diff).max())
        improved = f - fq
        p, f, grad = q, fq, gq
        step *= 2.0
        if moved <= tol or 0 <= improved <= tol * max(abs(f), 1.0):
            break
    return p, f


def minimize_g_sampling(
    obj: SamplingObjective,
    restarts: int = 5,
    rng_seed: int = 0,
    max_iter: int = 3000,
    tol: float = 1e-12,
) -> SamplingResult:
    """Projected gradient descent on the simplex from several starts.

    Starts: the uniform distribution, ``restarts`` Dirichlet(1) draws and the
    best vertex. The best final value wins; ties keep the earliest start.
    Points where B_p >= 1 count as infeasible.
    """
    m = obj.m
    uniform = np.full(m, 1.0 / m)
    rng = np.random.default_rng(rng_seed)
    vertex_vals = [_value(obj, np.eye(m)[i]) for i in range(m)]
    starts = [uniform, *rng.dirichlet(np.ones(m), size=restarts), np.eye(m)[int(np.argmin(vertex_vals))]]

    g_uniform = _value(obj, uniform)
    best_p, best_v = uniform, g_uniform
    for p0 in starts:
        p, _ = _pgd(obj, p0, max_iter, tol)
        p = np.maximum(p, 0.0)
        p /= p.sum()
        v = _value(obj, p)
        if v < best_v:
            best_p, best_v = p, v
    if not np.isfinite(best_v):
        raise AssumptionViolation("B_p >= 1 at every start; rescale B first")
    return SamplingResult(best_p, best_v, flagged=best_v >= g_uniform)


def sample_multiset(p: np.ndarray, K: int, rng: np.random.Generator) -> SelectionDecision:
    """K draws with replacement; every draw adds 1/K to its client's coefficient."""
    if K < 1:
        raise ValueError("K must be >= 1")
    p = np.asarray(p, dtype=float)
    draws = rng.choice(len(p), size=K, replace=True, p=p / p.sum())
    return SelectionDecision.uniform(draws)
