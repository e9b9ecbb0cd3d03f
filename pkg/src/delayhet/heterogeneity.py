"""Pairwise heterogeneity constants, bias bounds and the expected round delay.

For linear regression the gradient gap between two clients satisfies

    ||grad f_i(w) - grad f_j(w)|| <= B_ij ||grad f(w)|| + Gamma_ij

with B_ij = ||(A_i - A_j) A^-1||_2 and Gamma_ij = ||A_i(w* - w_i*) - A_j(w* - w_j*)||.
B governs how many rounds a selection needs, Gamma the error floor it reaches.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

SQRT_HALF = 1.0 / np.sqrt(2.0)
# a values-only SVD beats power iteration up to about this size (small eigengaps need many iterations)
DENSE_MAX_DIM = 1024


@dataclass(frozen=True)
class HeterogeneityMatrix:
    B: np.ndarray
    Gamma: np.ndarray

    def __post_init__(self) -> None:
        for name, M in (("B", self.B), ("Gamma", self.Gamma)):
            if M.ndim != 2 or M.shape[0] != M.shape[1]:
                raise ValueError(f"{name} must be square")
            if not np.all(np.isfinite(M)) or np.any(M < 0):
                raise ValueError(f"{name} must be finite and non-negative")
            if np.any(np.diag(M) != 0):
                raise ValueError(f"{name} must have a zero diagonal")

    @property
    def m(self) -> int:
        return self.B.shape[0]

    @property
    def B_sq(self) -> np.ndarray:
        return self.B**2

    @property
    def Gamma_sq(self) -> np.ndarray:
        return self.Gamma**2


@dataclass(frozen=True)
class BiasBound:
    B_term: float
    Gamma_term: float


@dataclass(frozen=True)
class HeterogeneityCheck:
    set_ok: bool
    sampling_ok: bool
    max_row_mean: float
    max_row_mean_sq: float


# -- linear algebra ---------------------------------------------------------


def spectral_norm(
    M: np.ndarray,
    tol: float = 1e-9,
    max_iter: int = 10_000,
    dense_max_dim: int = DENSE_MAX_DIM,
) -> float:
    """Largest singular value of M.

    Small matrices go through a dense SVD; larger ones use power iteration on
    M^T M, stopping once the estimate changes by less than ``tol`` (relative).
    """
    M = np.asarray(M, dtype=float)
    if min(M.shape) <= dense_max_dim:
        return float(np.linalg.svd(M, compute_uv=False)[0])
    return float(_power_norms(M[None], tol, max_iter)[0])


def _power_norms(Ms: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    """Batched power iteration for the spectral norm of each matrix in a stack.

    The estimate converges geometrically, so the remaining error is about
    change * r / (1 - r), with r the ratio of successive changes; iteration stops
    once that extrapolated error drops below ``tol`` (relative).
    """
    p, _, d = Ms.shape
    rng = np.random.default_rng(0)
    v = rng.standard_normal((p, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    est = np.zeros(p)
    prev_change = np.full(p, np.inf)
    for _ in range(max_iter):
        u = np.einsum("pij,pj->pi", Ms, v)
        x = np.einsum("pij,pi->pj", Ms, u)
        nx = np.linalg.norm(x, axis=1)
        new = np.sqrt(nx)
        zero = nx == 0
        v = np.where(zero[:, None], v, x / np.where(zero, 1.0, nx)[:, None])
        change = np.abs(new - est)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.clip(np.nan_to_num(change / prev_change, nan=0.0), 0.0, 1.0 - 1e-12)
        remaining = np.where(np.isfinite(prev_change), change * r / (1.0 - r), np.inf)
        done = (remaining <= tol * np.maximum(new, 1e-300)) & (change <= tol * np.maximum(new, 1e-300))
        est, prev_change = new, change
        if np.all(done | zero):
            break
    return est


def _stack_norms(Ms: np.ndarray, dense_max_dim: int = DENSE_MAX_DIM) -> np.ndarray:
    if Ms.shape[0] == 0:
        return np.zeros(0)
    if Ms.shape[-1] <= dense_max_dim:
        return np.linalg.svd(Ms, compute_uv=False)[:, 0]
    return _power_norms(Ms, 1e-9, 10_000)


def inverse_apply_factor(A: np.ndarray) -> np.ndarray:
    """A^-1 via one Cholesky factorisation, ridged when A is badly conditioned."""
    A = 0.5 * (np.asarray(A, dtype=float) + np.asarray(A, dtype=float).T)
    d = A.shape[0]
    eig = np.linalg.eigvalsh(A)
    if eig[-1] <= 0:
        raise ValueError("covariance matrix is not positive definite")
    if eig[0] <= 0 or eig[-1] / eig[0] > 1e12:
        A = A + 1e-10 * np.trace(A) / d * np.eye(d)
    try:
        c = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise ValueError("covariance matrix is singular") from None
    c_inv = np.linalg.solve(c, np.eye(d))
    return c_inv.T @ c_inv


# -- pairwise constants -----------------------------------------------------


def compute_B_linreg(
    covariances: np.ndarray, A: np.ndarray | None = None, rows: Iterable[int] | None = None,
    B: np.ndarray | None = None, dense_max_dim: int = DENSE_MAX_DIM,
) -> np.ndarray:
    """B_ij = ||(A_i - A_j) A^-1||_2.

    With ``rows`` and an existing ``B``, only entries involving those clients are
    recomputed; the rest are copied from ``B``.
    """
    covs = np.asarray(covariances, dtype=float)
    m = covs.shape[0]
    if A is None:
        A = covs.mean(axis=0)
    A_inv = inverse_apply_factor(A)
    C = covs @ A_inv
    out = np.zeros((m, m)) if B is None else np.array(B, dtype=float, copy=True)
    if rows is None:
        ii, jj = np.triu_indices(m, k=1)
    else:
        if B is None:
            raise ValueError("partial refresh needs the previous B")
        changed = sorted(set(int(r) for r in rows))
        pairs = {(min(i, j), max(i, j)) for i in changed for j in range(m) if i != j}
        if not pairs:
            return out
        ii, jj = (np.array(t) for t in zip(*sorted(pairs)))
    # chunked to bound memory at large d
    chunk = max(1, int(2e7 // max(C.shape[1] ** 2, 1)))
    for s in range(0, len(ii), chunk):
        a, b = ii[s : s + chunk], jj[s : s + chunk]
        norms = _stack_norms(C[a] - C[b], dense_max_dim)
        out[a, b] = norms
        out[b, a] = norms
    np.fill_diagonal(out, 0.0)
    return out


def compute_Gamma_linreg(
    covariances: np.ndarray, optima: np.ndarray, A: np.ndarray | None = None, w_star: np.ndarray | None = None
) -> np.ndarray:
    """Gamma_ij = ||A_i (w* - w_i*) - A_j (w* - w_j*)||."""
    covs = np.asarray(covariances, dtype=float)
    optima = np.asarray(optima, dtype=float)
    if w_star is None:
        if A is None:
            A = covs.mean(axis=0)
        w_star = np.linalg.solve(A, np.einsum("mde,me->d", covs, optima) / len(covs))
    r = np.einsum("mde,me->md", covs, w_star[None, :] - optima)
    diff = r[:, None, :] - r[None, :, :]
    G = np.linalg.norm(diff, axis=2)
    np.fill_diagonal(G, 0.0)
    return G


def linreg_heterogeneity(prob) -> HeterogeneityMatrix:
    """Exact (B, Gamma) of a QuadraticProblem from its empirical covariances and optima."""
    B = compute_B_linreg(prob.covariances, prob.A)
    G = compute_Gamma_linreg(prob.covariances, prob.optima, prob.A, prob.w_star)
    return HeterogeneityMatrix(B, G)


# -- set selections ---------------------------------------------------------


def _as_index(S: Iterable[int], m: int) -> np.ndarray:
    idx = np.array(sorted(set(int(i) for i in S)), dtype=int)
    if idx.size == 0:
        raise ValueError("client set must be non-empty")
    if idx[0] < 0 or idx[-1] >= m:
        raise ValueError(f"client ids must lie in [0, {m})")
    return idx


def proxies(S: Iterable[int], B: np.ndarray) -> np.ndarray:
    """beta_j(S): the member of S with the smallest B_ij; ties go to the lower id."""
    idx = _as_index(S, B.shape[0])
    return idx[np.argmin(B[idx], axis=0)]


def coefficients_for_set(S: Iterable[int], B: np.ndarray):
    """Aggregation weights: each selected client weighs (#clients it proxies for)/m."""
    from .core import SelectionDecision

    m = B.shape[0]
    beta = proxies(S, B)
    counts = np.bincount(beta, minlength=m)
    members = _as_index(S, m)
    # a member can proxy for nobody only when another member ties it at B=0
    alpha = {int(i): counts[i] / m for i in members if counts[i] > 0}
    return SelectionDecision(tuple(sorted(alpha)), alpha), beta


def proxy_mean(S: Iterable[int], M: np.ndarray, beta: np.ndarray | None = None) -> float:
    if beta is None:
        beta = proxies(S, M)
    m = M.shape[0]
    return float(M[np.arange(m), beta].mean())


def bias_for_set(S: Iterable[int], B: np.ndarray, Gamma: np.ndarray) -> BiasBound:
    beta = proxies(S, B)
    m = B.shape[0]
    j = np.arange(m)
    return BiasBound(
        B_term=2.0 * float(B[j, beta].mean()) ** 2,
        Gamma_term=2.0 * float(Gamma[j, beta].mean()) ** 2,
    )


# -- sampling distributions -------------------------------------------------


def check_distribution(p: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or np.any(p < -tol) or abs(p.sum() - 1.0) > tol:
        raise ValueError("p must be a probability vector")
    return p


def bias_for_distribution(p: np.ndarray, B_sq: np.ndarray, Gamma_sq: np.ndarray, K: int) -> BiasBound:
    p = check_distribution(p)
    m = len(p)

    def term(M: np.ndarray) -> float:
        return 2.0 * (float(p @ M.sum(axis=1)) / m + float(p @ M @ p) / K)

    return BiasBound(term(B_sq), term(Gamma_sq))


def expected_max_delay(p: np.ndarray, tau: np.ndarray, K: int) -> float:
    """E[max delay] of K iid draws from p, with tau sorted ascending.

    P(max <= tau_i) = (p_1 + ... + p_i)^K, so each client contributes the jump in
    that CDF times its delay.
    """
    p = np.asarray(p, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(np.diff(tau) < 0):
        raise ValueError("delays must be sorted ascending")
    cdf = np.minimum(np.cumsum(p), 1.0) ** K
    return float(np.diff(cdf, prepend=0.0) @ tau)


# -- assumptions ------------------------------------------------------------


def check_bounded_heterogeneity(B: np.ndarray) -> HeterogeneityCheck:
    """Set selection needs max row-mean of B below 1/sqrt(2); sampling needs max row-mean of B^2 below 1/2."""
    row = float(B.mean(axis=1).max())
    row_sq = float((B**2).mean(axis=1).max())
    return HeterogeneityCheck(row < SQRT_HALF, row_sq < 0.5, row, row_sq)


def rescale_to_assumption(B: np.ndarray, margin: float = 0.05, assumption: str = "set") -> np.ndarray:
    """Shrink B uniformly until it satisfies the bounded-heterogeneity condition.

    ``assumption`` picks the condition: "set" targets a max row-mean of
    (1 - margin)/sqrt(2), "sampling" a max row-mean of B^2 of (1 - margin)/2,
    "both" the stricter of the two. B is returned unchanged when already inside.
    """
    if not 0 <= margin < 1:
        raise ValueError("margin must lie in [0, 1)")
    if assumption not in ("set", "sampling", "both"):
        raise ValueError(f"unknown assumption {assumption!r}")
    chk = check_bounded_heterogeneity(B)
    s = 1.0
    if assumption in ("set", "both") and chk.max_row_mean > 0:
        s = min(s, (1 - margin) * SQRT_HALF / chk.max_row_mean)
    if assumption in ("sampling", "both") and chk.max_row_mean_sq > 0:
        s = min(s, np.sqrt((1 - margin) * 0.5 / chk.max_row_mean_sq))
    return B if s >= 1.0 else B * s
