"""Gaussian-process regression on unit-cube inputs.

One independent GP per objective. Kernel is Matern 5/2 with one lengthscale
per input dimension; targets are standardised and modelled with a zero prior
mean plus homoscedastic Gaussian noise. Hyperparameters are fit by
maximising the log marginal likelihood with multi-start L-BFGS-B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

SQRT5 = math.sqrt(5.0)
NOISE_FLOOR = 1e-6
LENGTHSCALE_BOUNDS = (1e-3, 10.0)
SIGNAL_BOUNDS = (1e-2, 1e2)
NOISE_BOUNDS = (NOISE_FLOOR, 1.0)
RESTARTS = 8
MAX_STEPS = 200
GRAD_TOL = 1e-5


class SingularCovarianceError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class KernelParams:
    lengthscales: np.ndarray
    signal_variance: float = 1.0
    noise_variance: float = NOISE_FLOOR

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        object.__setattr__(self, "lengthscales", ls)
        if np.any(ls <= 0):
            raise ValueError("lengthscales must be positive")
        if self.signal_variance <= 0:
            raise ValueError("signal_variance must be positive")
        if self.noise_variance < NOISE_FLOOR:
            object.__setattr__(self, "noise_variance", NOISE_FLOOR)

    def to_vector(self) -> np.ndarray:
        """Log-space parameter vector ``[log l_1..l_d, log s2, log n2]``."""
        return np.concatenate(
            [np.log(self.lengthscales), [math.log(self.signal_variance), math.log(self.noise_variance)]]
        )

    @classmethod
    def from_vector(cls, theta) -> "KernelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(np.exp(theta[:-2]), float(np.exp(theta[-2])), float(np.exp(theta[-1])))

    @classmethod
    def default(cls, dim: int) -> "KernelParams":
        return cls(np.full(dim, 0.5), 1.0, NOISE_FLOOR)


def _scaled_diff(A, B, lengthscales):
    return (A[:, None, :] - B[None, :, :]) / lengthscales


def matern52(A, B, params: KernelParams) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if A.shape[1] == 0:
        return np.full((A.shape[0], B.shape[0]), params.signal_variance)
    r = np.sqrt(np.sum(_scaled_diff(A, B, params.lengthscales) ** 2, axis=-1))
    return params.signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r**2) * np.exp(-SQRT5 * r)


def _cholesky(K):
    try:
        return cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        jitter = 1e-10 * max(1.0, float(np.mean(np.diag(K))))
        for _ in range(6):
            try:
                return cholesky(K + jitter * np.eye(K.shape[0]), lower=True)
            except np.linalg.LinAlgError:
                jitter *= 10
    raise SingularCovarianceError("covariance matrix is not positive definite")


def lml_and_grad(theta, X, y):
    """Log marginal likelihood and its gradient w.r.t. log-parameters."""
    params = KernelParams.from_vector(theta)
    X = np.atleast_2d(X)
    n, d = X.shape
    if d:
        D2 = _scaled_diff(X, X, params.lengthscales) ** 2
        r = np.sqrt(np.sum(D2, axis=-1))
        e = np.exp(-SQRT5 * r)
        Kf = params.signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r**2) * e
    else:
        D2 = np.zeros((n, n, 0))
        r = e = np.zeros((n, n))
        Kf = np.full((n, n), params.signal_variance)
    K = Kf + params.noise_variance * np.eye(n)
    L = _cholesky(K)
    alpha = cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)

    Kinv = cho_solve((L, True), np.eye(n))
    W = np.outer(alpha, alpha) - Kinv
    grad = np.empty(d + 2)
    if d:
        # dk/dlog(l_j) = s2 * 5/3 * (1 + sqrt5 r) exp(-sqrt5 r) * (dx_j / l_j)^2
        base = params.signal_variance * 5.0 / 3.0 * (1.0 + SQRT5 * r) * e
        grad[:d] = 0.5 * np.einsum("ij,ij,ijk->k", W, base, D2)
    grad[d] = 0.5 * np.sum(W * Kf)
    grad[d + 1] = 0.5 * params.noise_variance * np.trace(W)
    return float(lml), grad


def _standardize(y):
    mean = float(np.mean(y)) if len(y) else 0.0
    sd = float(np.std(y)) if len(y) > 1 else 1.0
    if not np.isfinite(sd) or sd < 1e-12:
        sd = 1.0
    return (y - mean) / sd, mean, sd


@dataclass
class SurrogateModel:
    params: KernelParams
    train_inputs: np.ndarray
    train_targets: np.ndarray
    target_mean: float = 0.0
    target_sd: float = 1.0
    trace: list = field(default_factory=list)
    _chol: np.ndarray | None = field(default=None, repr=False)
    _alpha: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.train_targets = np.asarray(self.train_targets, dtype=float)
        self.train_inputs = np.asarray(self.train_inputs, dtype=float)
        if self.train_inputs.ndim != 2:
            self.train_inputs = self.train_inputs.reshape(len(self.train_targets), -1)
        if self._chol is None and len(self.train_targets):
            K = matern52(self.train_inputs, self.train_inputs, self.params)
            K[np.diag_indices_from(K)] += self.params.noise_variance
            self._chol = _cholesky(K)
            self._alpha = cho_solve((self._chol, True), self.train_targets)

    @property
    def n(self) -> int:
        return len(self.train_targets)

    def predict(self, X, full_cov: bool = False):
        """Posterior mean and latent variance (or covariance) at rows of ``X``.

        Values are on the original target scale.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        s2 = self.params.signal_variance
        if self.n == 0:
            mean = np.zeros(len(X))
            cov = matern52(X, X, self.params) if full_cov else np.full(len(X), s2)
        else:
            Ks = matern52(X, self.train_inputs, self.params)
            mean = Ks @ self._alpha
            v = solve_triangular(self._chol, Ks.T, lower=True)
            if full_cov:
                cov = matern52(X, X, self.params) - v.T @ v
            else:
                cov = np.clip(s2 - np.sum(v**2, axis=0), 0.0, s2)
        sd = self.target_sd
        return self.target_mean + sd * mean, cov * sd**2

    def log_marginal_likelihood(self) -> float:
        return log_marginal_likelihood(self)


def log_marginal_likelihood(model: SurrogateModel) -> float:
    """LML of the standardised training targets under ``model.params``."""
    if model.n == 0:
        raise ValueError("log marginal likelihood needs at least one training point")
    L = model._chol
    y = model.train_targets
    return float(
        -0.5 * y @ model._alpha - np.sum(np.log(np.diag(L))) - 0.5 * model.n * math.log(2 * math.pi)
    )


def _bounds(dim):
    lb = [math.log(LENGTHSCALE_BOUNDS[0])] * dim + [math.log(SIGNAL_BOUNDS[0]), math.log(NOISE_BOUNDS[0])]
    ub = [math.log(LENGTHSCALE_BOUNDS[1])] * dim + [math.log(SIGNAL_BOUNDS[1]), math.log(NOISE_BOUNDS[1])]
    return np.array(lb), np.array(ub)


def _starts(dim, restarts, seed):
    lb, ub = _bounds(dim)
    starts = [KernelParams(np.full(dim, 0.3), 1.0, 1e-4).to_vector()]
    for k in range(1, restarts):
        rng = np.random.default_rng([seed, k])
        theta = rng.uniform(lb, ub)
        # noise starts in the low-noise half; measured objectives are mostly signal
        theta[-1] = rng.uniform(lb[-1], math.log(1e-1))
        starts.append(theta)
    return starts


def fit(inputs, targets, restarts: int = RESTARTS, seed: int = 0,
        max_steps: int = MAX_STEPS) -> SurrogateModel:
    """Fit a GP to ``targets`` observed at unit-cube ``inputs``.

    With no data the prior is returned. With one point the default
    hyperparameters are kept since the likelihood has no interior optimum.
    ``model.trace`` holds the LML after each accepted step of the best
    restart.
    """
    targets = np.asarray(targets, dtype=float).ravel()
    if not np.all(np.isfinite(targets)):
        raise ValueError("targets must be finite")
    n = len(targets)
    X = np.asarray(inputs, dtype=float)
    if n == 0:
        dim = X.shape[1] if X.ndim == 2 else 0
        return SurrogateModel(KernelParams.default(dim), np.empty((0, dim)), np.empty(0))
    X = X.reshape(n, -1)
    dim = X.shape[1]
    y, mean, sd = _standardize(targets)
    if n == 1:
        return SurrogateModel(KernelParams.default(dim), X, y, mean, sd)

    lb, ub = _bounds(dim)
    best = None
    for theta0 in _starts(dim, restarts, seed):
        trace = []

        def objective(theta):
            try:
                value, grad = lml_and_grad(theta, X, y)
            except np.linalg.LinAlgError:
                return 1e25, np.zeros_like(theta)
            return -value, -grad

        def record(xk):
            trace.append(-objective(xk)[0])

        res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                       bounds=list(zip(lb, ub)), callback=record,
                       options={"maxiter": max_steps, "gtol": GRAD_TOL})
        if not np.isfinite(res.fun) or res.fun >= 1e25:
            continue
        if best is None or res.fun < best[0]:
            best = (res.fun, res.x, [-objective(theta0)[0]] + trace)
    if best is None:
        raise SingularCovarianceError("all restarts failed to factorise the covariance")
    return SurrogateModel(KernelParams.from_vector(best[1]), X, y, mean, sd, trace=best[2])


def posterior(model: SurrogateModel, x) -> tuple[float, float]:
    mean, var = model.predict(np.atleast_2d(x))
    return float(mean[0]), float(var[0])
