"""Shared domain types: the delay-sorted client roster, selection decisions, round records.

Clients are identified by their position in the delay-sorted roster (0-based
inside the library). Files written by the CLI use 1-based ids.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

COEFF_TOL = 1e-12


@dataclass(frozen=True)
class ClientRoster:
    """Clients re-indexed by ascending mean delay.

    ``order[k]`` is the original (input) index of the client at sorted position k.
    """

    mean_delays: np.ndarray
    order: np.ndarray

    def __post_init__(self) -> None:
        self.mean_delays.setflags(write=False)
        self.order.setflags(write=False)

    @property
    def m(self) -> int:
        return len(self.mean_delays)

    @property
    def permutation(self) -> tuple[int, ...]:
        """1-based original ids in sorted order, e.g. (2, 3, 1)."""
        return tuple(int(i) + 1 for i in self.order)


def make_roster(delays: Sequence[float] | np.ndarray) -> ClientRoster:
    delays = np.asarray(delays, dtype=float)
    if delays.ndim != 1 or len(delays) == 0:
        raise ValueError("need a non-empty 1-d vector of delays")
    for i, t in enumerate(delays):
        if not math.isfinite(t) or t <= 0:
            raise ValueError(f"delay at index {i} must be positive and finite, got {t!r}")
    order = np.argsort(delays, kind="stable")
    return ClientRoster(mean_delays=delays[order].copy(), order=order)


@dataclass(frozen=True)
class SelectionDecision:
    """A multiset of selected clients and their aggregation coefficients.

    ``clients`` lists every draw (duplicates allowed, sorted); ``coefficients``
    holds one summed weight per distinct client.
    """

    clients: tuple[int, ...]
    coefficients: Mapping[int, float]
    note: str | None = None

    def __post_init__(self) -> None:
        if not self.clients:
            raise ValueError("selection must be non-empty")
        if set(self.clients) != set(self.coefficients):
            raise ValueError("coefficients must cover exactly the selected clients")
        if any(a <= 0 for a in self.coefficients.values()):
            raise ValueError("coefficients must be positive")
        total = math.fsum(self.coefficients.values())
        if abs(total - 1.0) > COEFF_TOL:
            raise ValueError(f"coefficients sum to {total!r}, expected 1")

    @property
    def distinct(self) -> list[int]:
        return sorted(self.coefficients)

    @classmethod
    def uniform(cls, clients: Iterable[int], note: str | None = None) -> SelectionDecision:
        """Each draw carries 1/K; repeated draws sum their weights."""
        draws = sorted(int(c) for c in clients)
        counts = Counter(draws)
        k = len(draws)
        return cls(tuple(draws), {c: n / k for c, n in counts.items()}, note)


@dataclass(frozen=True)
class RoundRecord:
    round: int
    round_delay: float
    cumulative_time: float
    train_loss: float
    test_metric: float
    selected: tuple[int, ...] = field(default_factory=tuple)


def round_delay(
    roster: ClientRoster,
    selected: Iterable[int],
    sampled: Mapping[int, float] | np.ndarray,
) -> float:
    """Wall-clock cost of a round: the slowest distinct selected client."""
    distinct = set(int(i) for i in selected)
    if not distinct:
        raise ValueError("cannot compute the delay of an empty selection")
    for i in distinct:
        if not 0 <= i < roster.m:
            raise ValueError(f"client {i} not in roster of size {roster.m}")
    return float(max(sampled[i] for i in distinct))
