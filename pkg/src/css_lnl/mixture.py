"""Two-component Gaussian mixtures (1-D and 2-D) fitted by EM."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateFitError, InsufficientDataError, ParameterError

EIG_FLOOR = 1e-6
MASS_FLOOR = 1e-8
MIN_SAMPLES = 10
MAX_RESTARTS = 3


@dataclass(frozen=True)
class GmmParams:
    """Fitted two-component mixture in ``dim`` dimensions.

    ``means`` is (2, dim) and ``covs`` is (2, dim, dim). ``clean_component``
    indexes the component whose mean along axis 0 is smallest (or largest when
    the fit was asked for ``clean="high"``).
    """

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    clean_component: int
    log_likelihood: list = field(default_factory=list, compare=False)
    n_iter: int = 0
    restarts: int = 0

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
            "clean_component": self.clean_component,
            "n_iter": self.n_iter,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "GmmParams":
        return cls(np.array(d["weights"], dtype=float), np.array(d["means"], dtype=float),
                   np.array(d["covs"], dtype=float), int(d["clean_component"]), n_iter=int(d.get("n_iter", 0)))


# 2-D fits are the selection mixture; 1-D fits reuse the same container.
Gmm2Params = GmmParams
Gmm1Params = GmmParams


def normalize_losses(losses) -> np.ndarray:
    """Per-epoch min-max scaling to [0, 1]; constant input maps to zeros."""
    v = np.asarray(losses, dtype=np.float64)
    if v.size == 0:
        raise ParameterError("normalize_losses needs at least one value")
    lo, hi = v.min(), v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def component_log_pdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    d = mean.shape[0]
    chol = np.linalg.cholesky(cov)
    diff = np.linalg.solve(chol, (x - mean).T)
    maha = np.sum(diff ** 2, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(chol)))
    return -0.5 * (d * np.log(2 * np.pi) + logdet + maha)


def gaussian_pdf(x, mean, cov) -> np.ndarray:
    """Multivariate normal density; ``x`` is (n, d) or (d,)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    return np.exp(component_log_pdf(x, np.asarray(mean, float), np.atleast_2d(np.asarray(cov, float))))


def _floor_cov(cov: np.ndarray) -> np.ndarray:
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() >= EIG_FLOOR:
        return cov
    vals = np.maximum(vals, EIG_FLOOR)
    return (vecs * vals) @ vecs.T


def _weighted_log_pdfs(x, weights, means, covs):
    """(n, 2) array of log(alpha_k) + log N(x; mu_k, Sigma_k)."""
    d = x.shape[1]
    diff = x[None, :, :] - means[:, None, :]
    inv = np.linalg.inv(covs)
    logdet = np.linalg.slogdet(covs)[1]
    if d == 1:
        maha = inv[:, 0, 0, None] * diff[..., 0] ** 2
    elif d == 2:
        dx, dy = diff[..., 0], diff[..., 1]
        maha = (inv[:, 0, 0, None] * dx * dx + 2.0 * inv[:, 0, 1, None] * dx * dy
                + inv[:, 1, 1, None] * dy * dy)
    else:
        maha = np.einsum("kni,kij,knj->kn", diff, inv, diff)
    logp = np.log(weights)[:, None] - 0.5 * (d * np.log(2 * np.pi) + logdet[:, None] + maha)
    return logp.T


def _log_normalize(logp):
    mx = logp.max(axis=1, keepdims=True)
    lse = mx + np.log(np.exp(logp - mx).sum(axis=1, keepdims=True))
    return np.exp(logp - lse), lse[:, 0]


def _m_step(x, resp, shared):
    nk = resp.sum(axis=0)
    weights = nk / nk.sum()
    means = (resp.T @ x) / nk[:, None]
    covs = np.empty((2, x.shape[1], x.shape[1]))
    for k in range(2):
        diff = x - means[k]
        covs[k] = (resp[:, k, None] * diff).T @ diff / nk[k]
    if shared:
        covs[:] = (nk[0] * covs[0] + nk[1] * covs[1]) / nk.sum()
    return weights, means, np.stack([_floor_cov(c) for c in covs])


INIT_QUANTILES = (0.5, 0.2, 0.8)


def _split_resp(x, axis, q):
    n = len(x)
    order = np.argsort(x[:, axis], kind="stable")
    cut = min(max(int(round(q * n)), 1), n - 1)
    resp = np.zeros((n, 2))
    resp[order[:cut], 0] = 1.0
    resp[order[cut:], 1] = 1.0
    return resp


def _random_resp(x, seed, restart):
    rng = np.random.default_rng([seed, restart])
    r = rng.uniform(size=len(x))
    return np.stack([r, 1.0 - r], axis=1)


def _run_em(x, resp, max_iters, tol, shared):
    trace = []
    it = 0
    params = None
    for it in range(1, max_iters + 1):
        if resp.sum(axis=0).min() < MASS_FLOOR * len(x):
            return None
        params = _m_step(x, resp, shared)
        resp, lse = _log_normalize(_weighted_log_pdfs(x, *params))
        trace.append(float(lse.mean()))
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            break
    if resp.sum(axis=0).min() < MASS_FLOOR * len(x):
        return None
    return params, trace, it


def fit_gmm(x, max_iters: int = 200, tol: float = 1e-8, seed: int = 0, shared_covariance: bool = False,
            clean: str = "low") -> GmmParams:
    """EM for a two-component Gaussian mixture on an (n, d) array.

    EM is started from rank splits of every axis at its median and at the 20%
    and 80% quantiles; the run with the highest final log-likelihood wins. If
    every start collapses, up to three seeded random starts are tried. EM stops
    once the mean log-likelihood improves by less than ``tol``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < MIN_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_SAMPLES} samples to fit a mixture, got {len(x)}")
    if max_iters < 1:
        raise ParameterError("max_iters must be >= 1")
    if not np.all(np.isfinite(x)):
        raise ParameterError("mixture inputs must be finite")
    if np.ptp(x, axis=0).max() == 0:
        raise DegenerateFitError("all samples are identical; a two-component mixture is not identifiable")
    if clean not in ("low", "high"):
        raise ParameterError("clean must be 'low' or 'high'")

    starts = [_split_resp(x, a, q) for a in range(x.shape[1]) for q in INIT_QUANTILES]
    best = None
    for resp in starts:
        run = _run_em(x, resp, max_iters, tol, shared_covariance)
        if run is not None and (best is None or run[1][-1] > best[1][-1]):
            best = run
    restarts = 0
    while best is None and restarts < MAX_RESTARTS:
        restarts += 1
        best = _run_em(x, _random_resp(x, seed, restarts), max_iters, tol, shared_covariance)
    if best is None:
        raise DegenerateFitError(f"EM collapsed to a single component after {MAX_RESTARTS} restarts")
    (weights, means, covs), trace, it = best
    axis0 = means[:, 0]
    clean_k = int(np.argmin(axis0)) if clean == "low" else int(np.argmax(axis0))
    return GmmParams(weights, means, covs, clean_k, trace, it, restarts)


def fit_gmm2(omegas, max_iters: int = 200, tol: float = 1e-8, seed: int = 0,
             shared_covariance: bool = False) -> GmmParams:
    x = np.asarray(omegas, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != 2:
        raise ParameterError("fit_gmm2 expects an (n, 2) array of score vectors")
    return fit_gmm(x, max_iters, tol, seed, shared_covariance, clean="low")


def fit_gmm1(values, max_iters: int = 200, tol: float = 1e-8, seed: int = 0, clean: str = "low") -> GmmParams:
    x = np.asarray(values, dtype=np.float64).reshape(-1, 1)
    return fit_gmm(x, max_iters, tol, seed, False, clean=clean)


def component_posteriors(params: GmmParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None] if params.dim == 1 else x[None, :]
    resp, _ = _log_normalize(_weighted_log_pdfs(x, params.weights, params.means, params.covs))
    return resp


def posterior_clean(params: GmmParams, omega):
    """Posterior responsibility of the clean component; scalar in, scalar out."""
    scalar = np.ndim(omega) == 0 or (params.dim > 1 and np.ndim(omega) == 1)
    resp = component_posteriors(params, omega)[:, params.clean_component]
    return float(resp[0]) if scalar else resp


def log_likelihood(params: GmmParams, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    _, lse = _log_normalize(_weighted_log_pdfs(x, params.weights, params.means, params.covs))
    return float(lse.mean())


def weighted_1d_clean_prob(p_loss, p_aux, beta: float = 0.2):
    """Convex blend of the loss-based and auxiliary clean posteriors."""
    if not 0.0 <= beta <= 1.0:
        raise ParameterError("beta must lie in [0, 1]")
    out = beta * np.asarray(p_loss, dtype=np.float64) + (1.0 - beta) * np.asarray(p_aux, dtype=np.float64)
    return float(out) if out.ndim == 0 else out
