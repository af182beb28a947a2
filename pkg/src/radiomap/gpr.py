"""Gaussian-process regression over waypoint throughput measurements.

A constant mean (the training-target average) is subtracted before
fitting and re-added at prediction.  Observation noise has two additive
parts: the fixed per-waypoint measurement variance (heteroscedastic, from
repeated samples at each location) and a global white-noise floor that is
co-optimized with the kernel hyperparameters.  Hyperparameters are fitted
by multi-restart maximization of the log marginal likelihood with
analytic gradients, using plain gradient ascent with a backtracking line
search in log-parameter space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist, pdist

from .dataset import MeasurementSet
from .kernels import JITTER_REL, KernelKind, KernelSpec, base_eval, covariance_gradients, covariance_matrix
from .raster import GridMap

#: Maximum diagonal-jitter escalations (each a factor of 10) before a
#: factorization attempt is abandoned.
MAX_JITTER_ESCALATIONS = 3

DEFAULT_RESTARTS = 5
DEFAULT_MAX_ITER = 200
DEFAULT_TOL = 1e-9

_ARMIJO_C1 = 1e-4
_MIN_STEP = 1e-18


class FactorizationError(RuntimeError):
    """Covariance factorization failed even after jitter escalation."""


class FitError(RuntimeError):
    """Model fitting could not produce a usable model."""

    def __init__(self, message, fit_log=None):
        super().__init__(message)
        self.fit_log = fit_log or []


@dataclass(frozen=True)
class Prediction:
    """Posterior mean and variance at one query location."""

    mean: float
    variance: float

    def __post_init__(self):
        if self.variance < 0.0:
            raise ValueError("variance must be >= 0")


@dataclass
class RestartRecord:
    """Initial and final objective values for one optimizer restart."""

    restart: int
    lml_initial: float
    lml_final: float
    iterations: int
    converged: bool

    def as_dict(self) -> dict:
        return {
            "restart": self.restart,
            "lml_initial": self.lml_initial,
            "lml_final": self.lml_final,
            "iterations": self.iterations,
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RestartRecord":
        return cls(
            restart=int(d["restart"]),
            lml_initial=float(d["lml_initial"]),
            lml_final=float(d["lml_final"]),
            iterations=int(d["iterations"]),
            converged=bool(d["converged"]),
        )


@dataclass
class GprModel:
    """Fitted GP state: training data, hyperparameters, factorization.

    ``train_targets`` are mean-centered; ``target_offset`` holds the
    constant mean.  ``per_point_noise`` carries the fixed per-waypoint
    measurement variances (the global noise floor lives in
    ``spec.noise_variance`` and is added on top during assembly).
    """

    train_points: np.ndarray
    train_targets: np.ndarray
    target_offset: float
    per_point_noise: np.ndarray
    spec: KernelSpec
    chol_factor: np.ndarray
    weights: np.ndarray
    fit_log: list


def _total_noise(per_point_noise, spec: KernelSpec):
    """Effective per-point noise passed to matrix assembly."""
    if per_point_noise is None:
        return None
    return np.asarray(per_point_noise, dtype=float) + spec.noise_variance


def _factorize(K: np.ndarray, signal_variance: float) -> np.ndarray:
    """Lower Cholesky factor with escalating diagonal jitter on failure."""
    base_jitter = JITTER_REL * signal_variance
    extra = 0.0
    for escalation in range(MAX_JITTER_ESCALATIONS + 1):
        try:
            if extra:
                return cholesky(K + extra * np.eye(K.shape[0]), lower=True)
            return cholesky(K, lower=True)
        except LinAlgError:
            extra = base_jitter * 10.0 ** (escalation + 1)
    raise FactorizationError(
        f"Cholesky failed after {MAX_JITTER_ESCALATIONS} jitter escalations "
        f"(final extra jitter {extra:.3e})"
    )


def log_marginal_likelihood(points, targets, per_point_noise, spec: KernelSpec) -> float:
    """Log marginal likelihood of the targets under the GP prior.

    Computed via the Cholesky factor:
    -1/2 y^T K^-1 y - 1/2 log det K - (N/2) log 2pi.
    """
    pts = np.asarray(points, dtype=float)
    y = np.asarray(targets, dtype=float)
    K = covariance_matrix(spec, pts, _total_noise(per_point_noise, spec))
    L = _factorize(K, spec.signal_variance)
    alpha = solve_triangular(L, y, lower=True)
    n = y.shape[0]
    return float(-0.5 * alpha @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2.0 * math.pi))


def _lml_and_grad(points, y, per_point_noise, spec: KernelSpec):
    """LML value and gradient w.r.t. the free log-hyperparameters."""
    K = covariance_matrix(spec, points, _total_noise(per_point_noise, spec))
    L = _factorize(K, spec.signal_variance)
    n = y.shape[0]
    # same floating-point path as log_marginal_likelihood so line-search
    # values and gradient-step values agree exactly
    alpha = solve_triangular(L, y, lower=True)
    lml = float(-0.5 * alpha @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2.0 * math.pi))
    w = cho_solve((L, True), y)
    K_inv = cho_solve((L, True), np.eye(n))
    grads = covariance_gradients(spec, points)
    grad = np.array(
        [0.5 * (w @ dK @ w - np.sum(K_inv * dK)) for dK in grads.values()]
    )
    return lml, grad


def init_heuristics(train: MeasurementSet, kind: KernelKind) -> KernelSpec:
    """Empirical hyperparameter initialization from the training set.

    signal variance: sample variance of the training targets;
    length scale: median distance to the 10th nearest neighbor (median
    pairwise distance when fewer than 11 waypoints);
    noise variance: median per-point measurement variance;
    alpha: 1 (rational quadratic only).
    """
    n = len(train)
    if n < 2:
        raise FitError(f"need at least 2 waypoints to initialize, got {n}")
    y = train.targets()
    pts = train.points()

    sf2 = float(np.var(y, ddof=1))
    sf2 = max(sf2, 1e-8)  # keep log-space finite for constant targets

    if n >= 11:
        d = np.sort(cdist(pts, pts), axis=1)
        ell = float(np.median(d[:, 10]))  # column 0 is the self-distance
    else:
        ell = float(np.median(pdist(pts)))
    ell = max(ell, 1e-8)

    sn2 = float(np.median(train.noise_variances()))
    sn2 = max(sn2, 1e-6 * sf2)  # all-single-sample sets would give 0

    return KernelSpec(kind=kind, signal_variance=sf2, length_scale=ell,
                      noise_variance=sn2, alpha=1.0)


def _ascend(points, y, per_point_noise, spec0: KernelSpec, theta0: np.ndarray,
            max_iter: int, tol: float):
    """Gradient ascent with backtracking line search on the LML surface.

    Returns (theta, lml_initial, lml_final, iterations, converged).
    Every accepted step strictly improves the objective, so the final
    value is never below the initial one.
    """

    def evaluate(theta):
        try:
            return _lml_and_grad(points, y, per_point_noise, spec0.with_log_params(theta))
        except (FactorizationError, OverflowError, ValueError):
            return -math.inf, None

    def value_only(theta):
        try:
            spec = spec0.with_log_params(theta)
            return log_marginal_likelihood(points, y, per_point_noise, spec)
        except (FactorizationError, OverflowError, ValueError):
            return -math.inf

    theta = np.asarray(theta0, dtype=float)
    f, g = evaluate(theta)
    f_initial = f
    if not math.isfinite(f):
        return theta, f_initial, f, 0, False

    iterations = 0
    converged = False
    step = 1.0 / max(1.0, float(np.max(np.abs(g))))
    prev_theta = None
    prev_g = None
    for it in range(1, max_iter + 1):
        g_norm2 = float(g @ g)
        if g_norm2 == 0.0:
            converged = True
            break
        # Barzilai-Borwein estimate seeds the backtracking search; plain
        # doubling of the last accepted step is the fallback
        if prev_theta is not None:
            s = theta - prev_theta
            dg = g - prev_g
            curvature = -float(s @ dg)
            if curvature > 0.0:
                step = float(s @ s) / curvature
        step = min(max(step, _MIN_STEP), 1e3)
        accepted = False
        while step >= _MIN_STEP:
            candidate = theta + step * g
            f_cand = value_only(candidate)
            if math.isfinite(f_cand) and f_cand > f + _ARMIJO_C1 * step * g_norm2:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            converged = True  # no ascent direction progress possible
            break
        delta = f_cand - f
        prev_theta = theta
        prev_g = g
        theta = candidate
        f = f_cand
        iterations = it
        if abs(delta) < tol * max(1.0, abs(f)):
            converged = True
            break
        _, g = evaluate(theta)
        if g is None:
            break
        step = min(step * 2.0, 1e3)
    return theta, f_initial, f, iterations, converged


def _assemble(train_points, y_centered, target_offset, per_point_noise,
              spec: KernelSpec, fit_log) -> GprModel:
    K = covariance_matrix(spec, train_points, _total_noise(per_point_noise, spec))
    L = _factorize(K, spec.signal_variance)
    weights = cho_solve((L, True), y_centered)
    return GprModel(
        train_points=np.asarray(train_points, dtype=float),
        train_targets=np.asarray(y_centered, dtype=float),
        target_offset=float(target_offset),
        per_point_noise=np.asarray(per_point_noise, dtype=float),
        spec=spec,
        chol_factor=L,
        weights=weights,
        fit_log=list(fit_log),
    )


def build_model(train: MeasurementSet, spec: KernelSpec) -> GprModel:
    """Assemble a model from an explicit spec without optimizing."""
    if len(train) < 1:
        raise FitError("training set is empty")
    y = train.targets()
    offset = float(np.mean(y))
    return _assemble(train.points(), y - offset, offset, train.noise_variances(), spec, [])


def fit(train: MeasurementSet, kind: KernelKind, n_restarts: int = DEFAULT_RESTARTS,
        seed: int = 0, max_iter: int = DEFAULT_MAX_ITER, tol: float = DEFAULT_TOL) -> GprModel:
    """Fit hyperparameters by multi-restart LML maximization.

    Restart 0 starts at the empirical initialization; each further
    restart perturbs every initial log-parameter by uniform noise in
    [-1, +1] natural-log units.  The restart with the highest final LML
    wins (ties break to the lower restart index), so results do not
    depend on evaluation order.  Identical inputs produce identical
    models.
    """
    if n_restarts < 1:
        raise ValueError("n_restarts must be >= 1")
    if len(train) < 1:
        raise FitError("training set is empty")

    spec0 = init_heuristics(train, kind)
    pts = train.points()
    y_raw = train.targets()
    offset = float(np.mean(y_raw))
    y = y_raw - offset
    noise = train.noise_variances()
    theta0 = spec0.log_params()

    rng = np.random.default_rng(seed)
    records: list[RestartRecord] = []
    best_theta = None
    best_lml = -math.inf
    for r in range(n_restarts):
        if r == 0:
            theta_init = theta0.copy()
        else:
            theta_init = theta0 + rng.uniform(-1.0, 1.0, size=theta0.shape)
        theta, f0, f_final, iterations, converged = _ascend(
            pts, y, noise, spec0, theta_init, max_iter, tol
        )
        records.append(RestartRecord(r, f0, f_final, iterations, converged))
        if math.isfinite(f_final) and f_final > best_lml:
            best_lml = f_final
            best_theta = theta

    if best_theta is None:
        raise FitError(
            "all restarts failed covariance factorization", fit_log=records
        )
    spec_best = spec0.with_log_params(best_theta)
    return _assemble(pts, y, offset, noise, spec_best, records)


def _predict_batch(model: GprModel, queries: np.ndarray, include_noise: bool):
    spec = model.spec
    d = cdist(model.train_points, queries)
    k_star = spec.signal_variance * base_eval(spec.kind, spec.length_scale, spec.alpha, d)
    means = model.target_offset + k_star.T @ model.weights
    v = solve_triangular(model.chol_factor, k_star, lower=True)
    prior = spec.signal_variance + (spec.noise_variance if include_noise else 0.0)
    variances = np.maximum(prior - np.sum(v * v, axis=0), 0.0)
    return means, variances


def predict(model: GprModel, query, include_noise: bool = True) -> Prediction:
    """Posterior mean and variance at a single query location.

    ``include_noise`` adds the fitted white-noise level to the reported
    variance (observation-level uncertainty); pass False for the
    latent-function variance.
    """
    q = np.asarray(query, dtype=float)
    if q.shape != (2,) or not np.all(np.isfinite(q)):
        raise ValueError(f"query must be a finite 2D point, got {query!r}")
    means, variances = _predict_batch(model, q[None, :], include_noise)
    return Prediction(mean=float(means[0]), variance=float(variances[0]))


def predict_grid(model: GprModel, grid: GridMap, include_noise: bool = True) -> GridMap:
    """Elementwise prediction over all unmasked grid cell centers.

    Payload fields are ``mean_mbps`` and ``std_mbps`` (std is the square
    root of the predictive variance), matching the grid CSV interchange
    format.
    """
    if grid.n_cells < 1:
        raise ValueError("grid is empty")
    out = grid.like()
    centers = grid.cell_centers()
    active = [i for i in range(grid.n_cells) if not grid.mask[i]]
    if active:
        means, variances = _predict_batch(model, centers[active], include_noise)
        for j, i in enumerate(active):
            out.values[i] = {
                "mean_mbps": float(means[j]),
                "std_mbps": float(math.sqrt(variances[j])),
            }
    return out


def model_to_dict(model: GprModel) -> dict:
    return {
        "format": "radiomap-gpr",
        "version": 1,
        "kernel": model.spec.as_dict(),
        "target_offset": model.target_offset,
        "train_points": model.train_points.tolist(),
        "train_targets_centered": model.train_targets.tolist(),
        "per_point_noise": model.per_point_noise.tolist(),
        "fit_log": [rec.as_dict() for rec in model.fit_log],
    }


def model_from_dict(data: dict) -> GprModel:
    """Rebuild a model; the factorization is recomputed deterministically."""
    if data.get("format") != "radiomap-gpr":
        raise ValueError("not a radiomap GPR model document")
    spec = KernelSpec.from_dict(data["kernel"])
    fit_log = [RestartRecord.from_dict(d) for d in data.get("fit_log", [])]
    return _assemble(
        np.asarray(data["train_points"], dtype=float),
        np.asarray(data["train_targets_centered"], dtype=float),
        float(data["target_offset"]),
        np.asarray(data["per_point_noise"], dtype=float),
        spec,
        fit_log,
    )


def save_model(model: GprModel, dest) -> None:
    text = json.dumps(model_to_dict(model), indent=2) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text, encoding="utf-8")


def load_model(src) -> GprModel:
    if hasattr(src, "read"):
        text = src.read()
    else:
        text = Path(src).read_text(encoding="utf-8")
    return model_from_dict(json.loads(text))
