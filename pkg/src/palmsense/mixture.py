"""Gaussian mixture density over joint (tactile, force) vectors and regression from it.

``fit_em`` runs expectation-maximization with k-means++ seeding and several
restarts, ``select_k`` picks the component count by BIC, and ``gmr_predict``
returns E[F | S] by conditioning each component on the tactile block.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .errors import DegenerateComponent, InsufficientData, LengthMismatch, SingularInputCovariance
from .types import FORCE_DIM, MixtureModel

log = logging.getLogger(__name__)

MIN_COMPONENT_MASS = 1e-8
# covariance floor for force models, in standardized input units; see fit_force_model
FORCE_REGULARIZATION = 3e-2
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class EmConfig:
    max_iterations: int = 200
    loglik_tolerance: float = 1e-6
    covariance_regularization: float = 1e-6
    restarts: int = 5
    rng_seed: int = 0

    def __post_init__(self):
        if self.max_iterations < 1 or self.restarts < 1:
            raise ValueError("max_iterations and restarts must be at least 1")
        if not (self.loglik_tolerance > 0 and self.covariance_regularization > 0):
            raise ValueError("tolerance and regularization must be positive")


@dataclass
class FitReport:
    k: int
    final_loglik: float
    iterations_used: int
    bic: float
    converged: bool
    loglik_trace: list[float] = field(default_factory=list)
    reseeded: bool = False
    restart: int = 0

    def summary(self) -> dict:
        return {
            "k": self.k,
            "bic": float(self.bic),
            "final_loglik": float(self.final_loglik),
            "iterations": self.iterations_used,
            "converged": self.converged,
            "restart": self.restart,
        }


def n_parameters(k: int, dim: int) -> int:
    """Free parameters of a full-covariance mixture."""
    return (k - 1) + k * dim + k * dim * (dim + 1) // 2


def bic_score(total_loglik: float, k: int, dim: int, n: int) -> float:
    return -2.0 * total_loglik + n_parameters(k, dim) * np.log(n)


def _precision_factors(covs: np.ndarray):
    """Inverse Cholesky factors and log-determinants for a stack of covariances."""
    k, d, _ = covs.shape
    inv_chol = np.empty_like(covs)
    logdet = np.empty(k)
    eye = np.eye(d)
    for j in range(k):
        chol = np.linalg.cholesky(covs[j])
        inv_chol[j] = linalg.solve_triangular(chol, eye, lower=True)
        logdet[j] = 2.0 * np.log(np.diag(chol)).sum()
    return inv_chol, logdet


def component_log_pdf(x: np.ndarray, means: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """(n, K) matrix of log N(x_i | mu_k, Sigma_k)."""
    x = np.atleast_2d(x)
    d = x.shape[1]
    inv_chol, logdet = _precision_factors(covs)
    out = np.empty((x.shape[0], means.shape[0]))
    for j in range(means.shape[0]):
        z = (x - means[j]) @ inv_chol[j].T
        out[:, j] = -0.5 * (d * _LOG_2PI + logdet[j] + np.einsum("ij,ij->i", z, z))
    return out


def gmm_log_density(x, model: MixtureModel) -> np.ndarray | float:
    """Log of the mixture density at raw joint vector(s) ``x``."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xw = model.to_working(np.atleast_2d(x))
    lp = logsumexp(component_log_pdf(xw, model.means, model.covariances) + np.log(model.priors), axis=1)
    # change of variables for the input standardization
    lp = lp - model.input_dim * np.log(model.input_scale)
    return float(lp[0]) if single else lp


def gmm_density(x, model: MixtureModel):
    return np.exp(gmm_log_density(x, model))


def m_step(x: np.ndarray, resp: np.ndarray, reg: float):
    """Weighted MLE of priors, means and covariances, plus ``reg * I`` on each covariance."""
    nk = resp.sum(axis=0)
    priors = nk / nk.sum()
    means = (resp.T @ x) / nk[:, None]
    d = x.shape[1]
    covs = np.empty((means.shape[0], d, d))
    for j in range(means.shape[0]):
        diff = x - means[j]
        c = (resp[:, j, None] * diff).T @ diff / nk[j]
        c = 0.5 * (c + c.T)
        c.flat[::d + 1] += reg
        covs[j] = c
    return priors, means, covs


def kmeans_pp(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: indices of ``k`` rows, each drawn with probability proportional to D^2."""
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    d2 = ((x - x[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            idx = int(rng.integers(n))
        chosen.append(idx)
        d2 = np.minimum(d2, ((x - x[idx]) ** 2).sum(axis=1))
    return np.array(chosen)


def _hard_assignment(x: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    d2 = np.stack([((x - c) ** 2).sum(axis=1) for c in centers], axis=1)
    resp = np.zeros_like(d2)
    resp[np.arange(x.shape[0]), d2.argmin(axis=1)] = 1.0
    return resp, -d2.min(axis=1)


def _reseeded_params(x, resp, bad, fit_score, reg):
    """M-step for the live components; empty ones move onto the worst-explained points."""
    n, d = x.shape
    good = np.setdiff1d(np.arange(resp.shape[1]), bad)
    priors = np.empty(resp.shape[1])
    means = np.empty((resp.shape[1], d))
    covs = np.empty((resp.shape[1], d, d))
    pg, mg, cg = m_step(x, resp[:, good], reg)
    priors[good], means[good], covs[good] = pg, mg, cg
    global_cov = np.cov(x, rowvar=False, bias=True).reshape(d, d) + reg * np.eye(d)
    worst = np.argsort(fit_score, kind="stable")[:len(bad)]
    for j, i in zip(bad, worst):
        means[j] = x[i]
        covs[j] = global_cov
        priors[j] = 1.0 / n
    return priors / priors.sum(), means, covs


def _run_em(x: np.ndarray, k: int, config: EmConfig, rng: np.random.Generator):
    reg = config.covariance_regularization
    resp, fit_score = _hard_assignment(x, x[kmeans_pp(x, k, rng)])
    reseeded = False
    trace: list[float] = []
    converged = False
    iterations = 0
    while True:
        bad = np.flatnonzero(resp.sum(axis=0) < MIN_COMPONENT_MASS)
        if bad.size:
            if reseeded:
                raise DegenerateComponent(
                    f"component(s) {bad.tolist()} collapsed again after reseeding (K={k})")
            log.debug("reseeding empty components %s", bad.tolist())
            params = _reseeded_params(x, resp, bad, fit_score, reg)
            reseeded = True
            # likelihood is only monotone between reseeds; start a fresh trace
            trace = []
        else:
            params = m_step(x, resp, reg)
        priors, means, covs = params
        log_prob = component_log_pdf(x, means, covs) + np.log(priors)
        rows = logsumexp(log_prob, axis=1)
        ll = float(rows.mean())
        done = bool(trace) and abs(ll - trace[-1]) < config.loglik_tolerance * abs(trace[-1])
        trace.append(ll)
        if done:
            converged = True
            break
        if iterations >= config.max_iterations:
            break
        resp = np.exp(log_prob - rows[:, None])
        fit_score = rows
        iterations += 1
    return params, trace, iterations, converged, reseeded


def _restart_rng(seed: int, k: int, restart: int) -> np.random.Generator:
    return np.random.default_rng([seed, k, restart])


def fit_em(data, k: int, config: EmConfig | None = None, output_dim: int = FORCE_DIM
           ) -> tuple[MixtureModel, FitReport]:
    """Fit a ``k``-component full-covariance mixture; best of ``config.restarts`` by final log-likelihood."""
    config = config or EmConfig()
    x = np.asarray(data, dtype=float)
    if x.ndim != 2:
        raise ValueError("data must be a 2-D array of samples")
    n, d = x.shape
    if k < 1:
        raise ValueError("k must be at least 1")
    if n < 10 * k:
        raise InsufficientData(f"need at least {10 * k} samples for K={k}, got {n}")
    if not 0 <= output_dim < d:
        raise ValueError("output_dim must be smaller than the data dimension")

    best = None
    failure = None
    for r in range(config.restarts):
        try:
            params, trace, iters, conv, reseeded = _run_em(x, k, config, _restart_rng(config.rng_seed, k, r))
        except DegenerateComponent as exc:
            failure = exc
            continue
        if best is None or trace[-1] > best[1][-1]:
            best = (params, trace, iters, conv, reseeded, r)
    if best is None:
        raise failure
    (priors, means, covs), trace, iters, conv, reseeded, r = best
    model = MixtureModel(priors, means, covs, input_dim=d - output_dim, output_dim=output_dim)
    report = FitReport(
        k=k,
        final_loglik=trace[-1],
        iterations_used=iters,
        bic=bic_score(trace[-1] * n, k, d, n),
        converged=conv,
        loglik_trace=trace,
        reseeded=reseeded,
        restart=r,
    )
    return model, report


def select_k(data, k_range, config: EmConfig | None = None, output_dim: int = FORCE_DIM
             ) -> tuple[MixtureModel, list[FitReport]]:
    """Fit every K in the inclusive ``k_range`` and return the minimum-BIC model."""
    k_min, k_max = int(k_range[0]), int(k_range[-1])
    if k_min < 1 or k_max < k_min:
        raise ValueError(f"invalid k range [{k_min}..{k_max}]")
    best_model, best_bic = None, np.inf
    reports = []
    for k in range(k_min, k_max + 1):
        model, report = fit_em(data, k, config, output_dim)
        log.info("K=%d  BIC=%.1f  loglik=%.4f  iters=%d", k, report.bic, report.final_loglik,
                 report.iterations_used)
        reports.append(report)
        if report.bic < best_bic:
            best_model, best_bic = model, report.bic
    return best_model, reports


def _conditioning(model: MixtureModel):
    """Per-component regression matrices and input-marginal factors."""
    i = model.input_dim
    coefs, chols = [], []
    for c in model.covariances:
        try:
            chol = linalg.cho_factor(c[:i, :i], lower=True)
        except linalg.LinAlgError:
            raise SingularInputCovariance("input block of a component covariance is not invertible") from None
        coefs.append(linalg.cho_solve(chol, c[:i, i:]).T)
        chols.append(chol)
    return np.array(coefs), chols


def gmr_predict_many(model: MixtureModel, s) -> tuple[np.ndarray, np.ndarray]:
    """Conditional means E[F | S] for an (n, input_dim) block, and the (n, K) mixing weights."""
    s = np.atleast_2d(np.asarray(s, dtype=float))
    if s.shape[1] != model.input_dim:
        raise LengthMismatch(f"expected {model.input_dim} input values, got {s.shape[1]}")
    i = model.input_dim
    sw = (s - model.input_shift) / model.input_scale
    coefs, _ = _conditioning(model)
    mu_in = model.means[:, :i]
    mu_out = model.means[:, i:]
    log_h = component_log_pdf(sw, mu_in, model.covariances[:, :i, :i]) + np.log(model.priors)
    h = np.exp(log_h - logsumexp(log_h, axis=1, keepdims=True))
    out = np.zeros((s.shape[0], model.output_dim))
    for j in range(model.n_components):
        fj = mu_out[j] + (sw - mu_in[j]) @ coefs[j].T
        out += h[:, j, None] * fj
    return out, h


def gmr_predict(model: MixtureModel, s) -> tuple[np.ndarray, np.ndarray]:
    f, h = gmr_predict_many(model, np.asarray(s, dtype=float).reshape(1, -1))
    return f[0], h[0]


def _errors(predictions, truths) -> np.ndarray:
    p = np.atleast_2d(np.asarray(predictions, dtype=float))
    t = np.atleast_2d(np.asarray(truths, dtype=float))
    if p.shape != t.shape:
        raise LengthMismatch(f"prediction shape {p.shape} does not match truth shape {t.shape}")
    if p.shape[0] == 0:
        raise LengthMismatch("cannot score an empty prediction set")
    return p - t


def rmse(predictions, truths) -> float:
    """sqrt(mean_i |pred_i - truth_i|^2), the Euclidean error over all axes."""
    e = _errors(predictions, truths)
    return float(np.sqrt(np.mean(np.sum(e ** 2, axis=1))))


def rmse_per_axis(predictions, truths) -> np.ndarray:
    e = _errors(predictions, truths)
    return np.sqrt(np.mean(e ** 2, axis=0))


def standardize_inputs(tactile: np.ndarray, baselines=None) -> tuple[np.ndarray, float]:
    """Shift (per channel) and single global scale used before fitting a force model."""
    tactile = np.asarray(tactile, dtype=float)
    shift = tactile.mean(axis=0) if baselines is None else np.asarray(baselines, dtype=float)
    scale = float(np.sqrt(np.mean((tactile - shift) ** 2)))
    if not scale > 0:
        scale = 1.0
    return shift, scale


def fit_force_model(tactile, force, k_range=(1, 10), config: EmConfig | None = None,
                    baselines=None, geometry_hash: str | None = None
                    ) -> tuple[MixtureModel, list[FitReport]]:
    """Standardize the tactile block, select K by BIC over the joint data and attach the transform.

    Without an explicit ``config`` the covariance floor is ``FORCE_REGULARIZATION``
    rather than the generic EM default: the simulated tactile data lie close to a
    low-dimensional surface, and a near-singular input block makes the GMR
    gating brittle between training contacts.
    """
    if config is None:
        config = EmConfig(covariance_regularization=FORCE_REGULARIZATION)
    tactile = np.asarray(tactile, dtype=float)
    force = np.asarray(force, dtype=float)
    if tactile.shape[0] != force.shape[0]:
        raise LengthMismatch("tactile and force row counts differ")
    shift, scale = standardize_inputs(tactile, baselines)
    joint = np.hstack([(tactile - shift) / scale, force])
    model, reports = select_k(joint, k_range, config, output_dim=force.shape[1])
    model = MixtureModel(model.priors, model.means, model.covariances,
                         input_dim=model.input_dim, output_dim=model.output_dim,
                         input_shift=shift, input_scale=scale, geometry_hash=geometry_hash)
    return model, reports
