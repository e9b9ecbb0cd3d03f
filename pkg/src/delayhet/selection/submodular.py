"""Set selection by minimising g(S) = max delay / (1 - B_S).

The default path for small rosters is exhaustive search. Larger rosters go
through the Fujishige-Wolfe minimum-norm-point algorithm on the Lovasz
extension, followed by a level-set sweep and single-flip local search: g is
not submodular in general, so the min-norm point alone carries no optimality
guarantee.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..core import SelectionDecision
from ..heterogeneity import coefficients_for_set
from .objectives import SubmodularObjective, g_set_value

logger = logging.getLogger(__name__)

EXHAUSTIVE_MAX_M = 15
EXHAUSTIVE_HARD_CAP = 20


@dataclass(frozen=True)
class SubmodularResult:
    S: tuple[int, ...]
    value: float
    decision: SelectionDecision
    method: str
    converged: bool = True


# -- Fujishige-Wolfe ------------------------------------------------------------


def greedy_vertex(x: np.ndarray, F: Callable[[Sequence[int]], float]) -> np.ndarray:
    """Vertex of the base polytope of F minimising <x, q> (Edmonds' greedy)."""
    order = np.argsort(x, kind="stable")
    q = np.empty(len(x))
    prev = 0.0
    for k in range(len(x)):
        cur = F(order[: k + 1])
        q[order[k]] = cur - prev
        prev = cur
    return q


def _affine_minimizer(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Min-norm point of the affine hull of the rows of P, with its barycentric weights."""
    k = P.shape[0]
    M = np.zeros((k + 1, k + 1))
    M[0, 1:] = 1.0
    M[1:, 0] = 1.0
    M[1:, 1:] = P @ P.T
    rhs = np.zeros(k + 1)
    rhs[0] = 1.0
    sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
    a = sol[1:]
    return a, a @ P


def min_norm_point(
    F: Callable[[Sequence[int]], float],
    m: int,
    max_iter: int = 1000,
    eps: float = 1e-10,
) -> tuple[np.ndarray, bool]:
    """Wolfe's minimum-norm-point algorithm on the base polytope of a normalised F.

    Returns the final point and whether the optimality gap closed before
    ``max_iter`` major cycles.
    """
    x = greedy_vertex(np.zeros(m), F)
    P = x[None, :].copy()
    lam = np.array([1.0])
    vmax = float(x @ x)
    for _ in range(max_iter):
        q = greedy_vertex(x, F)
        vmax = max(vmax, float(q @ q))
        xx = float(x @ x)
        if xx - x @ q <= eps * max(vmax, 1.0):
            return x, True
        if np.any(np.all(P == q, axis=1)):
            # q already in the corral: no further progress possible in floating point
            return x, True
        P = np.vstack([P, q])
        lam = np.append(lam, 0.0)
        while True:
            a, y = _affine_minimizer(P)
            if np.all(a > 1e-12):
                x, lam = y, a
                break
            neg = a <= 1e-12
            with np.errstate(divide="ignore", invalid="ignore"):
                ratios = np.where(neg, lam / (lam - a), np.inf)
            theta = min(1.0, float(np.min(ratios)))
            x = theta * y + (1 - theta) * x
            lam = theta * a + (1 - theta) * lam
            keep = lam > 1e-12
            if keep.all():
                keep[np.argmin(lam)] = False
            P, lam = P[keep], lam[keep]
            lam = lam / lam.sum()
            if len(lam) == 1:
                x = P[0].copy()
                break
        if float(x @ x) >= xx * (1 - 1e-14):
            # norm stopped decreasing: rounding floor reached
            return x, True
    return x, False


# -- search ---------------------------------------------------------------------


def _all_subset_values(obj: SubmodularObjective) -> np.ndarray:
    """g over every non-empty subset, indexed by bitmask (entry 0 unused)."""
    m = obj.m
    if m > EXHAUSTIVE_HARD_CAP:
        raise ValueError(f"exhaustive search refused for m={m} > {EXHAUSTIVE_HARD_CAP}")
    n = 1 << m
    col_min = np.empty((n, m))
    col_min[0] = np.inf
    vals = np.full(n, np.nan)
    for b in range(m):
        lo, hi = 1 << b, 1 << (b + 1)
        np.minimum(col_min[: lo], obj.B[b], out=col_min[lo:hi])
        h = col_min[lo:hi].mean(axis=1)
        bias = 2.0 * h * h
        with np.errstate(divide="ignore"):
            vals[lo:hi] = np.where(bias < 1.0, obj.tau[b] / (1.0 - bias), np.inf)
    return vals


def _mask_to_set(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


def exhaustive_minimize(obj: SubmodularObjective) -> tuple[tuple[int, ...], float]:
    vals = _all_subset_values(obj)
    vals[0] = np.inf
    best = int(np.argmin(vals))  # first minimiser in mask order
    return _mask_to_set(best), float(vals[best])


def prefix_minimize(obj: SubmodularObjective) -> tuple[tuple[int, ...], float]:
    """Best set among the k fastest clients, k = 1..m.

    For a fixed slowest member, adding faster clients never raises the delay
    and never raises B_S, so some prefix is a global minimiser.
    """
    best_S, best_v = (0,), np.inf
    for k in range(1, obj.m + 1):
        v = g_set_value(obj, range(k))
        if v < best_v:
            best_S, best_v = tuple(range(k)), v
    return best_S, best_v


def _local_search(g: Callable[[frozenset], float], S: frozenset, m: int) -> tuple[frozenset, float]:
    cur = g(S)
    while True:
        best_T, best_v = None, cur
        for i in range(m):
            T = S - {i} if i in S else S | {i}
            if not T:
                continue
            v = g(T)
            if v < best_v - 1e-15 * abs(best_v):
                best_T, best_v = T, v
        if best_T is None:
            return S, cur
        S, cur = best_T, best_v


def mnp_minimize(obj: SubmodularObjective, max_iter: int = 1000) -> tuple[tuple[int, ...], float, bool]:
    m = obj.m
    cache: dict[frozenset, float] = {}

    def g(S: frozenset) -> float:
        if S not in cache:
            cache[S] = g_set_value(obj, S)
        return cache[S]

    g_empty = obj.empty_value()

    def F(S: Sequence[int]) -> float:
        return g(frozenset(int(i) for i in S)) - g_empty if len(S) else 0.0

    x, converged = min_norm_point(F, m, max_iter=max_iter)
    order = np.argsort(x, kind="stable")
    candidates = [frozenset(int(i) for i in order[:k]) for k in range(1, m + 1)]
    start = min(candidates, key=lambda S: (g(S), len(S)))
    S, v = _local_search(g, start, m)
    return tuple(sorted(S)), v, converged


def minimize_g_submodular(obj: SubmodularObjective, method: str = "auto") -> SubmodularResult:
    """Minimise g over non-empty client sets and attach proxy-count coefficients.

    ``method`` is one of "auto" (exhaustive up to m=15, else "mnp"),
    "exhaustive", "mnp" or "prefix".
    """
    if method == "auto":
        method = "exhaustive" if obj.m <= EXHAUSTIVE_MAX_M else "mnp"
    converged = True
    if method == "exhaustive":
        S, v = exhaustive_minimize(obj)
    elif method == "prefix":
        S, v = prefix_minimize(obj)
    elif method == "mnp":
        S, v, converged = mnp_minimize(obj)
        if not converged:
            logger.warning("min-norm-point hit its iteration cap; returning best set found")
    else:
        raise ValueError(f"unknown method {method!r}")
    decision, _ = coefficients_for_set(S, obj.B)
    if not converged:
        decision = SelectionDecision(decision.clients, decision.coefficients, note="mnp-not-converged")
    return SubmodularResult(S, v, decision, method, converged)
