"""Heterogeneous linear-regression ("Quadratic") problems.

Every client shares one orthonormal eigenbasis but draws its own eigenvalues,
so clients differ in feature covariance. Client i's training loss is

    f_i(w) = 1/(2n) * sum_q (y_iq - <w, x_iq>)^2 = 1/2 (w - w_i*)^T A_i (w - w_i*) + c_i

with A_i the empirical (uncentred) second-moment matrix of its features.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np


@dataclass(frozen=True)
class CurvatureConstants:
    mu: float
    L: float

    @property
    def condition(self) -> float:
        return self.L / self.mu


@dataclass(frozen=True)
class QuadraticProblem:
    features: np.ndarray  # (m, n, d)
    labels: np.ndarray  # (m, n)
    test_features: np.ndarray
    test_labels: np.ndarray
    covariances: np.ndarray  # (m, d, d) empirical A_i
    moments: np.ndarray  # (m, d) b_i = X_i^T y_i / n, so grad f_i = A_i w - b_i
    optima: np.ndarray  # (m, d) least-squares w_i* (minimum norm when A_i is singular)
    population_covariances: np.ndarray
    generating_model: np.ndarray
    noise_std: float
    A: np.ndarray
    w_star: np.ndarray

    @property
    def m(self) -> int:
        return self.features.shape[0]

    @property
    def n(self) -> int:
        return self.features.shape[1]

    @property
    def d(self) -> int:
        return self.features.shape[2]

    def permuted(self, order: np.ndarray) -> QuadraticProblem:
        """Relabel clients so that new client k is old client ``order[k]``."""
        order = np.asarray(order)
        return replace(
            self,
            features=self.features[order],
            labels=self.labels[order],
            test_features=self.test_features[order],
            test_labels=self.test_labels[order],
            covariances=self.covariances[order],
            moments=self.moments[order],
            optima=self.optima[order],
            population_covariances=self.population_covariances[order],
        )


def _global_optimum(covariances: np.ndarray, moments: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    A = covariances.mean(axis=0)
    A = 0.5 * (A + A.T)
    eig = np.linalg.eigvalsh(A)
    if eig[0] <= 1e-12 * max(eig[-1], 1.0):
        raise ValueError(
            f"global covariance is singular (lambda_min={eig[0]:.3e}); "
            "need m*n comfortably above d"
        )
    w_star = np.linalg.solve(A, moments.mean(axis=0))
    return A, w_star


def problem_from_data(
    features: np.ndarray,
    labels: np.ndarray,
    test_features: np.ndarray | None = None,
    test_labels: np.ndarray | None = None,
    population_covariances: np.ndarray | None = None,
    generating_model: np.ndarray | None = None,
    noise_std: float = 0.0,
) -> QuadraticProblem:
    """Build a problem from explicit per-client data arrays of shape (m, n, d) and (m, n)."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim != 3 or y.shape != X.shape[:2]:
        raise ValueError(f"inconsistent shapes {X.shape} and {y.shape}")
    m, n, d = X.shape
    covs = np.einsum("mnd,mne->mde", X, X) / n
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    moments = np.einsum("mnd,mn->md", X, y) / n
    optima = np.stack([np.linalg.lstsq(X[i], y[i], rcond=None)[0] for i in range(m)])
    A, w_star = _global_optimum(covs, moments)
    return QuadraticProblem(
        features=X,
        labels=y,
        test_features=X if test_features is None else np.asarray(test_features, dtype=float),
        test_labels=y if test_labels is None else np.asarray(test_labels, dtype=float),
        covariances=covs,
        moments=moments,
        optima=optima,
        population_covariances=covs if population_covariances is None else population_covariances,
        generating_model=w_star if generating_model is None else generating_model,
        noise_std=float(noise_std),
        A=A,
        w_star=w_star,
    )


def generate_quadratic(
    m: int,
    n: int,
    d: int,
    eig_range: tuple[float, float] = (1.0, 10.0),
    noise_std: float = 0.001,
    rng_seed: int = 0,
) -> QuadraticProblem:
    """Sample a Quadratic federated problem.

    A shared eigenbasis comes from the QR factor of a Gaussian matrix; each client
    draws eigenvalues uniformly from ``eig_range``. Labels are ``<w, x> + noise``
    with one generating ``w`` whose coordinates are Bernoulli(0.5). Test sets are
    fresh draws of the same size from each client's distribution.
    """
    lo, hi = map(float, eig_range)
    if min(m, n, d) < 1:
        raise ValueError("m, n and d must all be >= 1")
    if not 0 < lo <= hi:
        raise ValueError(f"eig_range must satisfy 0 < lo <= hi, got {eig_range}")
    if noise_std < 0:
        raise ValueError("noise_std must be non-negative")

    rng = np.random.default_rng(rng_seed)
    basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
    w_gen = rng.binomial(1, 0.5, size=d).astype(float)
    eigvals = rng.uniform(lo, hi, size=(m, d))
    scale = np.sqrt(eigvals)[:, None, :]

    def draw() -> tuple[np.ndarray, np.ndarray]:
        z = rng.standard_normal((m, n, d))
        X = (z * scale) @ basis.T
        y = X @ w_gen + noise_std * rng.standard_normal((m, n))
        return X, y

    X, y = draw()
    X_test, y_test = draw()
    pop = np.einsum("dk,mk,ek->mde", basis, eigvals, basis)
    return problem_from_data(X, y, X_test, y_test, pop, w_gen, noise_std)


def client_loss(prob: QuadraticProblem, i: int, w: np.ndarray) -> float:
    r = prob.labels[i] - prob.features[i] @ w
    return 0.5 * float(r @ r) / prob.n


def client_losses(prob: QuadraticProblem, w: np.ndarray) -> np.ndarray:
    r = prob.labels - prob.features @ w
    return 0.5 * np.einsum("mn,mn->m", r, r) / prob.n


def client_gradient(prob: QuadraticProblem, i: int, w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (prob.d,):
        raise ValueError(f"model has shape {w.shape}, expected ({prob.d},)")
    return prob.covariances[i] @ w - prob.moments[i]


def client_gradients(prob: QuadraticProblem, w: np.ndarray) -> np.ndarray:
    return prob.covariances @ w - prob.moments


def global_loss(prob: QuadraticProblem, w: np.ndarray) -> float:
    return float(client_losses(prob, w).mean())


def global_gradient(prob: QuadraticProblem, w: np.ndarray) -> np.ndarray:
    return prob.A @ w - prob.moments.mean(axis=0)


def suboptimality(prob: QuadraticProblem, w: np.ndarray) -> float:
    """f(w) - f(w*) through the exact quadratic form (no cancellation error)."""
    e = np.asarray(w, dtype=float) - prob.w_star
    return 0.5 * float(e @ prob.A @ e)


def normalized_test_loss(prob: QuadraticProblem, w: np.ndarray) -> float:
    """Mean squared test loss over all clients' test points, divided by sqrt(d)."""
    r = prob.test_labels - prob.test_features @ w
    return 0.5 * float(np.mean(r * r)) / np.sqrt(prob.d)


def curvature(prob_or_A: QuadraticProblem | np.ndarray) -> CurvatureConstants:
    A = prob_or_A.A if isinstance(prob_or_A, QuadraticProblem) else np.asarray(prob_or_A, dtype=float)
    eig = np.linalg.eigvalsh(0.5 * (A + A.T))
    if eig[0] <= 0:
        raise ValueError(f"lambda_min = {eig[0]:.3e} <= 0: loss is not PL")
    return CurvatureConstants(mu=float(eig[0]), L=float(eig[-1]))


def estimate_covariance(
    prob: QuadraticProblem, i: int, batch_size: int | None, rng: np.random.Generator
) -> np.ndarray:
    """Empirical feature covariance of client i from one batch of its training data."""
    X = prob.features[i]
    if batch_size is not None and batch_size < prob.n:
        X = X[rng.choice(prob.n, size=batch_size, replace=False)]
    C = X.T @ X / len(X)
    return 0.5 * (C + C.T)
