"""Comparison selectors: Random, Power-of-Choice, DivFL and FLANP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import SelectionDecision
from ..heterogeneity import coefficients_for_set


def _check_k(K: int, m: int) -> None:
    if not 1 <= K <= m:
        raise ValueError(f"K={K} must lie in [1, m={m}]")


def select_random(m: int, K: int, rng: np.random.Generator) -> SelectionDecision:
    """K distinct clients uniformly at random, equal weights."""
    _check_k(K, m)
    return SelectionDecision.uniform(rng.choice(m, size=K, replace=False))


def select_power_of_choice(
    losses: np.ndarray, K: int, rng: np.random.Generator, candidates: int | None = None
) -> SelectionDecision:
    """Draw a candidate set, keep the K candidates with the largest local loss."""
    m = len(losses)
    _check_k(K, m)
    d = min(2 * K, m) if candidates is None else candidates
    if not K <= d <= m:
        raise ValueError(f"candidate set size {d} must lie in [K={K}, m={m}]")
    cand = np.sort(rng.choice(m, size=d, replace=False))
    top = cand[np.argsort(-np.asarray(losses)[cand], kind="stable")[:K]]
    return SelectionDecision.uniform(top)


def facility_location_greedy(D: np.ndarray, K: int) -> list[int]:
    """Greedy K-medoid cover: repeatedly add the client that most reduces sum_j min_{i in S} D_ij."""
    m = D.shape[0]
    _check_k(K, m)
    chosen: list[int] = []
    cover = np.full(m, np.inf)
    for _ in range(K):
        best, best_cost = -1, np.inf
        for i in range(m):
            if i in chosen:
                continue
            cost = np.minimum(cover, D[i]).sum()
            if cost < best_cost:
                best, best_cost = i, cost
        chosen.append(best)
        cover = np.minimum(cover, D[best])
    return sorted(chosen)


def select_divfl(gradients: np.ndarray, K: int) -> SelectionDecision:
    """Representative subset under gradient-difference norms, proxy-count weights."""
    G = np.asarray(gradients, dtype=float)
    D = np.linalg.norm(G[:, None, :] - G[None, :, :], axis=2)
    S = facility_location_greedy(D, K)
    decision, _ = coefficients_for_set(S, D)
    return decision


@dataclass
class FlanpState:
    """Active prefix of fastest clients; doubles when the loss stalls."""

    active: int = 2
    patience: int = 3
    threshold: float = 0.01
    best_loss: float = np.inf
    stale: int = 0

    def observe(self, train_loss: float, m: int) -> None:
        if train_loss < self.best_loss * (1 - self.threshold):
            self.best_loss = train_loss
            self.stale = 0
            return
        self.best_loss = min(self.best_loss, train_loss)
        self.stale += 1
        if self.stale >= self.patience and self.active < m:
            self.active = min(2 * self.active, m)
            self.stale = 0


def select_flanp(state: FlanpState, m: int) -> SelectionDecision:
    return SelectionDecision.uniform(range(min(state.active, m)))
