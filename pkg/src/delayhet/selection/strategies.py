"""Stateful selectors plugged into the training loop.

Each selector sees a read-only server view exposing ``round``, ``w``, ``m``,
``tau`` (sorted mean delays), ``B`` (current heterogeneity estimate),
``client_losses()`` and ``gradient_table`` (last reported client gradients).
"""

from __future__ import annotations

from typing import Any

import numpy as np

from ..core import RoundRecord, SelectionDecision
from ..heterogeneity import coefficients_for_set, rescale_to_assumption
from .baselines import FlanpState, select_divfl, select_flanp, select_power_of_choice, select_random
from .objectives import SamplingObjective, SubmodularObjective
from .sampling import minimize_g_sampling, sample_multiset
from .submodular import minimize_g_submodular


class Selector:
    name = "selector"
    needs_warmup = True  # one full-participation round to collect covariances/gradients

    def select(self, view: Any, rng: np.random.Generator) -> SelectionDecision:
        raise NotImplementedError

    def observe(self, record: RoundRecord) -> None:
        pass


def _key(view: Any) -> tuple[bytes, bytes]:
    return view.B.tobytes(), view.tau.tobytes()


class SubmodularSelector(Selector):
    """DelayHetSubmodular: the fixed set minimising max delay / (1 - B_S)."""

    name = "submodular"

    def __init__(self, method: str = "auto", margin: float = 0.05, every_round: bool = True):
        self.method = method
        self.margin = margin
        self.every_round = every_round
        self._cache: tuple[Any, SelectionDecision] | None = None
        self.last_result = None

    def select(self, view: Any, rng: np.random.Generator) -> SelectionDecision:
        key = _key(view)
        if self._cache is not None and (self._cache[0] == key or not self.every_round):
            return self._cache[1]
        B = rescale_to_assumption(view.B, self.margin, "set")
        res = minimize_g_submodular(SubmodularObjective(view.tau, B), self.method)
        self.last_result = res
        self._cache = (key, res.decision)
        return res.decision


class SamplingSelector(Selector):
    """DelayHetSampling: draw K clients from the distribution minimising expected runtime."""

    name = "sampling"

    def __init__(
        self, K: int, mode: str = "k1", margin: float = 0.05, every_round: bool = True, restarts: int = 5
    ):
        self.K = K
        self.mode = mode
        self.margin = margin
        self.every_round = every_round
        self.restarts = restarts
        self._cache: tuple[Any, np.ndarray] | None = None
        self.last_result = None

    def distribution(self, view: Any) -> np.ndarray:
        key = _key(view)
        if self._cache is not None and (self._cache[0] == key or not self.every_round):
            return self._cache[1]
        B = rescale_to_assumption(view.B, self.margin, "sampling")
        obj = SamplingObjective(view.tau, B**2, self.K, self.mode)
        res = minimize_g_sampling(obj, restarts=self.restarts)
        self.last_result = res
        self._cache = (key, res.p)
        return res.p

    def select(self, view: Any, rng: np.random.Generator) -> SelectionDecision:
        if self.K > view.m:
            raise ValueError(f"K={self.K} exceeds m={view.m}")
        return sample_multiset(self.distribution(view), self.K, rng)


class RandomSelector(Selector):
    name = "random"
    needs_warmup = False

    def __init__(self, K: int):
        self.K = K

    def select(self, view: Any, rng: np.random.Generator) -> SelectionDecision:
        return select_random(view.m, self.K, rng)


class PowerOfChoiceSelector(Selector):
    name = "power_of_choice"

    def __init__(self, K: int, candidates: int | None = None):
        self.K = K
        self.candidates = candidates

    def select(self, view: Any, rng: np.random.Generator) -> SelectionDecision:
        return select_power_of_choice(view.client_losses(), self.K, rng, self.candidates)


class DivFLSelector(Selector):
    name = "divfl"

    def __init__(self, K: int):
        self.K = K

    def select(self, view: Any, rng: np.random.Generator) -> SelectionDecision:
        return select_divfl(view.gradient_table, self.K)


class FlanpSelector(Selector):
    name = "flanp"

    def __init__(self, initial: int = 2, patience: int = 3, threshold: float = 0.01):
        self.state = FlanpState(active=initial, patience=patience, threshold=threshold)
        self._m: int | None = None

    def select(self, view: Any, rng: np.random.Generator) -> SelectionDecision:
        self._m = view.m
        return select_flanp(self.state, view.m)

    def observe(self, record: RoundRecord) -> None:
        if self._m is not None:
            self.state.observe(record.train_loss, self._m)


class FixedSetSelector(Selector):
    """Always the same set, weighted by proxy counts under B."""

    name = "fixed_set"
    needs_warmup = False

    def __init__(self, S, B: np.ndarray):
        self.decision, _ = coefficients_for_set(S, B)

    def select(self, view: Any, rng: np.random.Generator) -> SelectionDecision:
        return self.decision


class FixedDistributionSelector(Selector):
    name = "fixed_distribution"
    needs_warmup = False

    def __init__(self, p: np.ndarray, K: int):
        self.p = np.asarray(p, dtype=float)
        self.K = K

    def select(self, view: Any, rng: np.random.Generator) -> SelectionDecision:
        return sample_multiset(self.p, self.K, rng)
