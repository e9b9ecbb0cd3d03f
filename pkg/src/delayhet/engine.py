"""FedAvg with pluggable client selection and simulated wall-clock accounting."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import datagen
from .core import ClientRoster, RoundRecord, SelectionDecision, round_delay
from .datagen import CurvatureConstants, QuadraticProblem
from .delays import DelayModel
from .heterogeneity import BiasBound, compute_B_linreg
from .selection.strategies import Selector

logger = logging.getLogger(__name__)

TARGET_METRICS = ("test_metric", "train_loss")


class DivergenceError(RuntimeError):
    """Non-finite iterate; ``records`` holds the rounds completed before it."""

    def __init__(self, round_: int, message: str, records: list[RoundRecord] | None = None):
        super().__init__(f"round {round_}: {message}")
        self.round = round_
        self.records = list(records or [])


class SelectionError(RuntimeError):
    def __init__(self, message: str, records: list[RoundRecord] | None = None):
        super().__init__(message)
        self.records = list(records or [])


@dataclass(frozen=True)
class EngineConfig:
    eta: float | str | None = None  # None/"auto": 1/L of f; "auto_local": 1/max_i L_i
    local_steps: int = 1
    max_rounds: int = 100
    target_metric: str = "test_metric"
    target_value: float | None = None
    seed: int = 0
    covariance_batch: int | None = None  # None: whole local dataset
    charge_warmup: bool = False

    def __post_init__(self) -> None:
        if isinstance(self.eta, str):
            if self.eta not in ("auto", "auto_local"):
                raise ValueError(f"eta must be a positive number, 'auto' or 'auto_local', got {self.eta!r}")
        elif self.eta is not None and not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.local_steps < 1:
            raise ValueError("local_steps must be >= 1")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")
        if self.target_metric not in TARGET_METRICS:
            raise ValueError(f"target_metric must be one of {TARGET_METRICS}")


@dataclass
class RunResult:
    records: list[RoundRecord]
    time_to_target: float | None
    final_model: np.ndarray
    selection_seconds: list[float] = field(default_factory=list)

    @property
    def reached_target(self) -> bool:
        return self.time_to_target is not None


def local_update(prob: QuadraticProblem, i: int, w: np.ndarray, eta: float, E: int) -> np.ndarray:
    """E full-gradient steps on client i's loss, starting from the server model."""
    w = np.array(w, dtype=float, copy=True)
    for _ in range(E):
        w = w - eta * datagen.client_gradient(prob, i, w)
    if not np.all(np.isfinite(w)):
        raise FloatingPointError(f"client {i} produced a non-finite model")
    return w


def aggregate(decision: SelectionDecision, models: Mapping[int, np.ndarray]) -> np.ndarray:
    if set(models) != set(decision.coefficients):
        raise ValueError("client models do not match the selected clients")
    out = None
    for i in decision.distinct:
        term = decision.coefficients[i] * models[i]
        out = term if out is None else out + term
    return out


def theoretical_rounds(curv: CurvatureConstants, bias: BiasBound | float, delta0: float, eps: float) -> int:
    """Rounds sufficient for the biased-gradient bound: L/(mu(1-B)) * ln(delta0/eps)."""
    b = bias.B_term if isinstance(bias, BiasBound) else float(bias)
    if b >= 1:
        raise ValueError(f"bias coefficient {b} >= 1: no convergence guarantee")
    if not delta0 > eps > 0:
        raise ValueError("need delta0 > eps > 0")
    return math.ceil(curv.L / (curv.mu * (1.0 - b)) * math.log(delta0 / eps))


def step_size(prob: QuadraticProblem, rule: float | str | None) -> float:
    """Resolve a step-size rule.

    "auto_local" uses 1/max_i L_i, which keeps any convex combination of client
    Hessians stable even when the aggregate is far from the global A.
    """
    if rule is None or rule == "auto":
        return 1.0 / datagen.curvature(prob).L
    if rule == "auto_local":
        return 1.0 / float(np.linalg.eigvalsh(prob.covariances)[:, -1].max())
    return float(rule)


class HeterogeneityTracker:
    """Server-side estimate of B from per-client covariance estimates.

    Every client reports once at warm-up; afterwards only participants
    re-estimate, and only the B entries touching them are recomputed.
    """

    def __init__(self, prob: QuadraticProblem, batch_size: int | None, rng: np.random.Generator):
        self.prob = prob
        self.batch_size = batch_size
        self.rng = rng
        self.covariances = np.stack(
            [datagen.estimate_covariance(prob, i, batch_size, rng) for i in range(prob.m)]
        )
        self.B = compute_B_linreg(self.covariances)

    def refresh(self, clients) -> None:
        clients = sorted(set(int(i) for i in clients))
        if not clients or self.batch_size is None or self.batch_size >= self.prob.n:
            return  # full-data estimates never change
        for i in clients:
            self.covariances[i] = datagen.estimate_covariance(self.prob, i, self.batch_size, self.rng)
        self.B = compute_B_linreg(self.covariances, rows=clients, B=self.B)


class ServerView:
    def __init__(self, prob: QuadraticProblem, roster: ClientRoster, tracker: HeterogeneityTracker, w: np.ndarray):
        self.prob = prob
        self.tau = roster.mean_delays
        self.m = roster.m
        self.tracker = tracker
        self.w = w
        self.round = 0
        self.gradient_table = datagen.client_gradients(prob, w)

    @property
    def B(self) -> np.ndarray:
        return self.tracker.B

    def client_losses(self) -> np.ndarray:
        return datagen.client_losses(self.prob, self.w)


def run(
    prob: QuadraticProblem,
    roster: ClientRoster,
    delays: DelayModel,
    selector: Selector,
    cfg: EngineConfig,
    w0: np.ndarray | None = None,
) -> RunResult:
    """Run FedAvg until the target is met or ``cfg.max_rounds`` rounds have passed.

    Client k of ``prob`` must be the client at sorted position k of ``roster``.
    Record 0 describes the initial model; record r the model after round r.
    """
    if prob.m != roster.m or delays.m != roster.m:
        raise ValueError("problem, roster and delay model disagree on m")
    if np.any(np.abs(delays.mean_delays - roster.mean_delays) > 1e-9 * roster.mean_delays):
        raise ValueError("delay model is not aligned with the sorted roster")
    L = datagen.curvature(prob).L
    eta = step_size(prob, cfg.eta)
    if eta > (1.0 + 1e-12) / L:
        raise ValueError(f"eta={eta} exceeds 1/L={1.0 / L}")

    delay_rng, select_rng, batch_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(3)
    )
    w = np.zeros(prob.d) if w0 is None else np.array(w0, dtype=float)
    tracker = HeterogeneityTracker(prob, cfg.covariance_batch, batch_rng)
    view = ServerView(prob, roster, tracker, w)

    def metric(rec: RoundRecord) -> float:
        return rec.test_metric if cfg.target_metric == "test_metric" else rec.train_loss

    def reached(rec: RoundRecord) -> bool:
        return cfg.target_value is not None and metric(rec) <= cfg.target_value

    clock = float(delays.mean_delays.max()) if cfg.charge_warmup and selector.needs_warmup else 0.0
    rec = RoundRecord(0, clock, clock, datagen.global_loss(prob, w), datagen.normalized_test_loss(prob, w), ())
    records = [rec]
    timings: list[float] = []
    if reached(rec):
        return RunResult(records, clock, w, timings)

    for r in range(1, cfg.max_rounds + 1):
        view.round, view.w = r, w
        t0 = time.perf_counter()
        try:
            decision = selector.select(view, select_rng)
        except Exception as exc:
            raise SelectionError(f"{selector.name} failed in round {r}: {exc}", records) from exc
        timings.append(time.perf_counter() - t0)

        models = {}
        for i in decision.distinct:
            try:
                models[i] = local_update(prob, i, w, eta, cfg.local_steps)
            except FloatingPointError as exc:
                raise DivergenceError(r, str(exc), records) from None
        w = aggregate(decision, models)
        train = datagen.global_loss(prob, w)
        if not np.all(np.isfinite(w)) or not math.isfinite(train):
            raise DivergenceError(r, "global model diverged", records)

        sampled = delays.sample(delay_rng)
        dt = round_delay(roster, decision.clients, sampled)
        clock += dt
        rec = RoundRecord(r, dt, clock, train, datagen.normalized_test_loss(prob, w), decision.clients)
        records.append(rec)
        selector.observe(rec)

        participants = decision.distinct
        view.gradient_table[participants] = datagen.client_gradients(prob, view.w)[participants]
        tracker.refresh(participants)
        if reached(rec):
            return RunResult(records, clock, w, timings)

    return RunResult(records, None, w, timings)

