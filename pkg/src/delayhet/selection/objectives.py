"""Theoretical runtime objectives for set selection and sampling distributions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ..heterogeneity import bias_for_distribution, check_distribution, expected_max_delay, proxy_mean


class AssumptionViolation(ValueError):
    """The bias coefficient reached 1, so the runtime bound is undefined."""


@dataclass(frozen=True)
class SubmodularObjective:
    """g(S) = max_{i in S} tau_i / (1 - B_S) over client sets."""

    tau: np.ndarray
    B: np.ndarray

    def __post_init__(self) -> None:
        if np.any(np.diff(self.tau) < 0):
            raise ValueError("tau must be sorted ascending")
        if self.B.shape != (len(self.tau), len(self.tau)):
            raise ValueError("B must be m x m")

    @property
    def m(self) -> int:
        return len(self.tau)

    def empty_value(self) -> float:
        return max(g_set_value(self, (i,)) for i in range(self.m))


def g_set_value(obj: SubmodularObjective, S: Iterable[int]) -> float:
    S = sorted(set(int(i) for i in S))
    if not S:
        return obj.empty_value()
    b = 2.0 * proxy_mean(S, obj.B) ** 2
    if b >= 1.0:
        raise AssumptionViolation(f"B_S = {b:.6g} >= 1 for S = {S}")
    return float(obj.tau[S[-1]]) / (1.0 - b)


@dataclass(frozen=True)
class SamplingObjective:
    """g(p) = E[max delay of K draws] / (1 - B_p).

    ``mode="k1"`` evaluates both factors with K=1 (the cheap surrogate);
    ``mode="exact"`` uses the real K.
    """

    tau: np.ndarray
    B_sq: np.ndarray
    K: int
    mode: str = "k1"

    def __post_init__(self) -> None:
        if self.mode not in ("k1", "exact"):
            raise ValueError(f"mode must be 'k1' or 'exact', got {self.mode!r}")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if np.any(np.diff(self.tau) < 0):
            raise ValueError("tau must be sorted ascending")

    @property
    def m(self) -> int:
        return len(self.tau)

    @property
    def k_eff(self) -> int:
        return 1 if self.mode == "k1" else self.K

    def value_and_grad(self, p: np.ndarray) -> tuple[float, np.ndarray]:
        """Objective and its gradient w.r.t. p in the ambient space R^m."""
        K = self.k_eff
        m = self.m
        P = np.cumsum(p)
        # Abel summation: numerator = sum_i P_i^K (tau_i - tau_{i+1}) with tau_{m+1} = 0
        dtau = self.tau - np.append(self.tau[1:], 0.0)
        num = float(P**K @ dtau)
        w = K * P ** (K - 1) * dtau
        num_grad = np.cumsum(w[::-1])[::-1]
        row = self.B_sq.sum(axis=1)
        Bp = 2.0 * (float(p @ row) / m + float(p @ self.B_sq @ p) / K)
        Bp_grad = 2.0 * (row / m + ((self.B_sq + self.B_sq.T) @ p) / K)
        den = 1.0 - Bp
        if den <= 0:
            return np.inf, np.zeros(m)
        return num / den, num_grad / den + num * Bp_grad / den**2


def g_dist_value(obj: SamplingObjective, p: np.ndarray) -> float:
    p = check_distribution(p)
    K = obj.k_eff
    num = expected_max_delay(p, obj.tau, K)
    b = bias_for_distribution(p, obj.B_sq, np.zeros_like(obj.B_sq), K).B_term
    if b >= 1.0:
        raise AssumptionViolation(f"B_p = {b:.6g} >= 1")
    return num / (1.0 - b)
