"""Gaussian-process surrogate with a squared-exponential ARD kernel and Expected Improvement.

Configurations live in the unit hypercube (log-scaled parameters normalized in
log space); scores are standardized before fitting.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.stats import norm

from ..search_space import HyperparamSpace, sample_config
from ._common import derive_seed

log = logging.getLogger(__name__)

_JITTERS = (0.0, 1e-10, 1e-8, 1e-6, 1e-4, 1e-2)
_LS_BOUNDS = (1e-2, 1e1)
_SV_BOUNDS = (1e-2, 1e2)
_NOISE_BOUNDS = (1e-8, 1.0)


@dataclass
class SurrogateState:
    X: np.ndarray  # (n, d) unit-cube observations
    y: np.ndarray  # (n,) scores, larger is better
    length_scales: np.ndarray
    noise_variance: float = 1e-4
    signal_variance: float = 1.0

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=np.float64))
        self.y = np.asarray(self.y, dtype=np.float64).ravel()
        self.length_scales = np.broadcast_to(np.asarray(self.length_scales, dtype=np.float64),
                                             (self.X.shape[1],)).copy()
        if np.any(self.length_scales <= 0) or self.noise_variance < 0 or self.signal_variance <= 0:
            raise ValueError("kernel hyperparameters must be positive")

    @property
    def n_observations(self) -> int:
        return len(self.y)


def sq_exp_kernel(A: np.ndarray, B: np.ndarray, length_scales, signal_variance: float) -> np.ndarray:
    diff = (A[:, None, :] - B[None, :, :]) / length_scales
    return signal_variance * np.exp(-0.5 * np.sum(diff * diff, axis=-1))


def _cholesky(K: np.ndarray) -> np.ndarray:
    scale = max(float(np.mean(np.diag(K))), 1e-12)
    for jitter in _JITTERS:
        try:
            return cholesky(K + jitter * scale * np.eye(len(K)), lower=True)
        except np.linalg.LinAlgError:
            continue
    raise np.linalg.LinAlgError("kernel matrix not positive definite after jitter escalation")


class GaussianProcess:
    def __init__(self, state: SurrogateState):
        self.state = state
        y = state.y
        self.y_mean = float(y.mean())
        sd = float(y.std())
        self.y_scale = sd if sd > 0 else 1.0
        self._y = (y - self.y_mean) / self.y_scale
        K = sq_exp_kernel(state.X, state.X, state.length_scales, state.signal_variance)
        K[np.diag_indices_from(K)] += state.noise_variance
        self.L = _cholesky(K)
        self.alpha = cho_solve((self.L, True), self._y)

    def predict(self, Xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation of the latent function, in score units."""
        Xs = np.atleast_2d(Xs)
        st = self.state
        Ks = sq_exp_kernel(Xs, st.X, st.length_scales, st.signal_variance)
        mu = Ks @ self.alpha
        v = solve_triangular(self.L, Ks.T, lower=True)
        var = np.maximum(st.signal_variance - np.sum(v * v, axis=0), 0.0)
        return mu * self.y_scale + self.y_mean, np.sqrt(var) * self.y_scale


def expected_improvement(mu, sigma, best) -> np.ndarray:
    """E[max(0, f - best)] for f ~ N(mu, sigma^2); exact limit max(0, mu - best) at sigma = 0."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    imp = mu - best
    out = np.maximum(imp, 0.0)
    pos = sigma > 0
    # a subnormal sigma sends z to +-inf, where cdf/pdf take their exact limits
    with np.errstate(over="ignore"):
        z = np.where(pos, imp / np.where(pos, sigma, 1.0), 0.0)
        ei = imp * norm.cdf(z) + sigma * norm.pdf(z)
    out = np.where(pos, ei, out)
    return np.maximum(out, 0.0)


def _neg_log_marginal(theta: np.ndarray, X: np.ndarray, y: np.ndarray) -> float:
    d = X.shape[1]
    ls = np.exp(theta[:d])
    sv = np.exp(theta[d])
    noise = np.exp(theta[d + 1])
    K = sq_exp_kernel(X, X, ls, sv)
    K[np.diag_indices_from(K)] += noise
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError:
        return 1e25
    a = cho_solve((L, True), y)
    return float(0.5 * y @ a + np.log(np.diag(L)).sum() + 0.5 * len(y) * np.log(2 * np.pi))


def median_length_scales(X: np.ndarray) -> np.ndarray:
    if len(X) < 2:
        return np.full(X.shape[1], 0.5)
    diffs = np.abs(X[:, None, :] - X[None, :, :])
    iu = np.triu_indices(len(X), k=1)
    med = np.median(diffs[iu], axis=0)
    return np.clip(med, *_LS_BOUNDS)


def fit_surrogate(X, y, rng_seed: int = 0, n_restarts: int = 3) -> SurrogateState:
    """Fit kernel hyperparameters by multi-start maximization of the marginal likelihood.

    Falls back to median-heuristic length-scales if every start fails.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    d = X.shape[1]
    ls0 = median_length_scales(X)
    fallback = SurrogateState(X, y, ls0, noise_variance=1e-2, signal_variance=1.0)
    if len(y) < 2:
        return fallback
    sd = y.std()
    yn = (y - y.mean()) / (sd if sd > 0 else 1.0)
    bounds = [tuple(np.log(_LS_BOUNDS))] * d + [tuple(np.log(_SV_BOUNDS)), tuple(np.log(_NOISE_BOUNDS))]
    rng = np.random.default_rng(rng_seed)
    starts = [np.concatenate([np.log(ls0), [0.0, np.log(1e-2)]])]
    for _ in range(max(0, n_restarts - 1)):
        starts.append(np.array([rng.uniform(lo, hi) for lo, hi in bounds]))
    best = None
    for x0 in starts:
        try:
            res = minimize(_neg_log_marginal, x0, args=(X, yn), method="L-BFGS-B", bounds=bounds)
        except (ValueError, np.linalg.LinAlgError):
            continue
        if np.isfinite(res.fun) and res.fun < 1e24 and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        log.warning("marginal-likelihood fit failed; using median-heuristic length-scales")
        return fallback
    th = best.x
    return SurrogateState(X, y, np.exp(th[:d]), noise_variance=float(np.exp(th[d + 1])),
                          signal_variance=float(np.exp(th[d])))


def propose(state: SurrogateState, space: HyperparamSpace, candidate_pool_size: int,
            rng_seed: int) -> tuple[dict, bool]:
    """Like :func:`gp_ei_propose` but also reports whether the model was used."""
    if state.n_observations < 2:
        return sample_config(space, rng_seed), False
    pool = [sample_config(space, derive_seed(rng_seed, i)) for i in range(max(1, candidate_pool_size))]
    try:
        gp = GaussianProcess(state)
    except np.linalg.LinAlgError as exc:
        log.warning("surrogate unusable (%s); falling back to random sampling", exc)
        return pool[0], False
    mu, sigma = gp.predict(np.array([space.to_unit(c) for c in pool]))
    ei = expected_improvement(mu, sigma, float(state.y.max()))
    return pool[int(np.argmax(ei))], True


def gp_ei_propose(state: SurrogateState, space: HyperparamSpace, candidate_pool_size: int = 256,
                  rng_seed: int = 0) -> dict:
    """Candidate with the largest Expected Improvement over the best observation so far.

    With fewer than two observations this is plain random sampling.
    """
    return propose(state, space, candidate_pool_size, rng_seed)[0]
