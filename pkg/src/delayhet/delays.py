"""Per-client round delays: constant synthetic delays and jittered trace delays."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

KB = 1_000
MB = 1_000_000


@dataclass(frozen=True)
class SyntheticDelayConfig:
    model_size_bytes: int = 1 * MB
    link_speed_range: tuple[float, float] = (200 * KB, 5 * MB)
    compute_range: tuple[float, float] = (15.0, 100.0)

    def __post_init__(self) -> None:
        c_lo, c_hi = self.link_speed_range
        a, b = self.compute_range
        if not 0 < c_lo <= c_hi:
            raise ValueError(f"link_speed_range must satisfy 0 < lo <= hi, got {self.link_speed_range}")
        if not 0 <= a <= b:
            raise ValueError(f"compute_range must satisfy 0 <= a <= b, got {self.compute_range}")
        if self.model_size_bytes < 0:
            raise ValueError("model_size_bytes must be >= 0")


def synthesize_delays(cfg: SyntheticDelayConfig, m: int, rng_seed: int) -> np.ndarray:
    """Mean delay per client: upload time MS/c_i plus a uniform compute time."""
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(rng_seed)
    speed = rng.uniform(*cfg.link_speed_range, size=m)
    compute = rng.uniform(*cfg.compute_range, size=m)
    return cfg.model_size_bytes / speed + compute


class DelayModel:
    """Draws one delay per client per round.

    All m clients are drawn every round, whatever the selection, so the delay
    stream depends only on the generator state.
    """

    def __init__(self, mean_delays: np.ndarray, sigma: float | np.ndarray = 0.0):
        self.mean_delays = np.asarray(mean_delays, dtype=float)
        self.sigma = np.broadcast_to(np.asarray(sigma, dtype=float), self.mean_delays.shape).copy()
        if np.any(self.mean_delays <= 0) or not np.all(np.isfinite(self.mean_delays)):
            raise ValueError("mean delays must be positive and finite")
        if np.any(self.sigma < 0):
            raise ValueError("lognormal sigma must be >= 0")

    @property
    def m(self) -> int:
        return len(self.mean_delays)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal(self.m)
        # unit-mean multiplicative jitter; exp(0) == 1.0 exactly when sigma == 0
        return self.mean_delays * np.exp(self.sigma * z - 0.5 * self.sigma**2)

    def reordered(self, order: np.ndarray) -> DelayModel:
        return type(self)(self.mean_delays[order], self.sigma[order])


class ConstantDelays(DelayModel):
    """Synthetic model: each client always takes its mean delay."""

    def __init__(self, mean_delays: np.ndarray, sigma: float | np.ndarray = 0.0):
        super().__init__(mean_delays, 0.0)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        rng.standard_normal(self.m)  # keep the stream aligned with jittered models
        return self.mean_delays.copy()


@dataclass(frozen=True)
class TraceDelayConfig:
    mean_delays: np.ndarray
    lognormal_sigma: float | np.ndarray = 0.5

    def model(self) -> DelayModel:
        return DelayModel(self.mean_delays, self.lognormal_sigma)


def sample_round_delay(
    cfg: TraceDelayConfig | SyntheticDelayConfig | DelayModel,
    i: int,
    rng: np.random.Generator,
    mean_delays: np.ndarray | None = None,
) -> float:
    """One delay draw for client i.

    A synthetic config needs the client means it produced (``mean_delays``).
    """
    if isinstance(cfg, SyntheticDelayConfig):
        if mean_delays is None:
            raise ValueError("synthetic delays need the per-client mean delays")
        return float(mean_delays[i])
    model = cfg.model() if isinstance(cfg, TraceDelayConfig) else cfg
    sigma = model.sigma[i]
    return float(model.mean_delays[i] * math.exp(sigma * rng.standard_normal() - 0.5 * sigma**2))


def synth_long_tail_means(
    m: int, rng_seed: int, median_s: float = 100.0, spread: float = 1.5
) -> np.ndarray:
    """Mean delays drawn log-normally around ``median_s``; a stand-in for a measured trace."""
    rng = np.random.default_rng(rng_seed)
    return median_s * np.exp(spread * rng.standard_normal(m))


TRACE_HEADER = ("client_id", "mean_delay_s")


def write_trace(path: str | Path, mean_delays: np.ndarray, sigma: np.ndarray | None = None) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER + (("sigma",) if sigma is not None else ()))
        for k, t in enumerate(mean_delays):
            row = [k + 1, repr(float(t))]
            if sigma is not None:
                row.append(repr(float(sigma[k])))
            w.writerow(row)


def read_trace(path: str | Path) -> tuple[np.ndarray, np.ndarray | None]:
    """Read ``client_id,mean_delay_s[,sigma]``; rows are returned ordered by client_id."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty trace file")
    header = tuple(h.strip() for h in rows[0])
    if header[:2] != TRACE_HEADER or len(header) > 3 or (len(header) == 3 and header[2] != "sigma"):
        raise ValueError(f"{path}: bad header {','.join(header)!r}")
    ids, means, sigmas = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            ids.append(int(row[0]))
            means.append(float(row[1]))
            if len(header) == 3:
                sigmas.append(float(row[2]))
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        if not means[-1] > 0 or not math.isfinite(means[-1]):
            raise ValueError(f"{path}:{lineno}: mean delay must be positive, got {row[1]}")
        if sigmas and sigmas[-1] < 0:
            raise ValueError(f"{path}:{lineno}: sigma must be >= 0")
    if not ids:
        raise ValueError(f"{path}: no clients")
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate client_id")
    order = np.argsort(ids, kind="stable")
    sig = np.asarray(sigmas)[order] if sigmas else None
    return np.asarray(means)[order], sig
