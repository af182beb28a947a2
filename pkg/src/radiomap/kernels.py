"""Stationary covariance kernels for 2D throughput fields.

Three base kernels (RBF, Matern with fixed smoothness 1.5, rational
quadratic) are combined into a composite covariance: a constant signal
variance scaling the base kernel, plus a white-noise term that fires only
on the diagonal during matrix assembly.  All hyperparameters are handled
in log space by the fitting layer, so the gradient helpers here return
derivatives with respect to log-parameters.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import pdist, squareform

_SQRT3 = math.sqrt(3.0)

#: Matern smoothness; fixed by construction, never optimized.
MATERN_SMOOTHNESS = 1.5

#: Relative diagonal jitter added during matrix assembly, scaled by the
#: signal variance.  Keeps the Cholesky factorization stable without
#: visibly perturbing predictions.
JITTER_REL = 1e-8


class KernelKind(enum.Enum):
    """Supported stationary base kernels."""

    RBF = "rbf"
    MATERN15 = "matern15"
    RQ = "rq"


@dataclass(frozen=True)
class KernelSpec:
    """Kernel kind plus hyperparameters of the composite covariance.

    Parameters
    ----------
    kind : KernelKind
        Base kernel selector.
    signal_variance : float
        Signal variance (Mbps^2) scaling the base kernel; > 0.
    length_scale : float
        Isotropic correlation length scale (meters); > 0.
    noise_variance : float
        White-noise level (Mbps^2) added on the diagonal; >= 0.
    alpha : float
        Scale-mixture parameter of the rational quadratic kernel; > 0.
        Ignored by the other kinds.
    """

    kind: KernelKind
    signal_variance: float
    length_scale: float
    noise_variance: float = 0.0
    alpha: float = 1.0

    def __post_init__(self):
        for name in ("signal_variance", "length_scale", "noise_variance", "alpha"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if self.signal_variance <= 0.0:
            raise ValueError("signal_variance must be > 0")
        if self.length_scale <= 0.0:
            raise ValueError("length_scale must be > 0")
        if self.noise_variance < 0.0:
            raise ValueError("noise_variance must be >= 0")
        if self.kind is KernelKind.RQ and self.alpha <= 0.0:
            raise ValueError("alpha must be > 0 for the rational quadratic kernel")

    def free_parameter_names(self) -> tuple[str, ...]:
        """Names of the hyperparameters optimized for this kernel kind."""
        if self.kind is KernelKind.RQ:
            return ("signal_variance", "length_scale", "alpha", "noise_variance")
        return ("signal_variance", "length_scale", "noise_variance")

    def log_params(self) -> np.ndarray:
        """Free hyperparameters as a vector of natural logs."""
        return np.log([getattr(self, n) for n in self.free_parameter_names()])

    def with_log_params(self, log_vec) -> "KernelSpec":
        """New spec with free hyperparameters replaced by exp(log_vec)."""
        names = self.free_parameter_names()
        log_vec = np.asarray(log_vec, dtype=float)
        if log_vec.shape != (len(names),):
            raise ValueError(f"expected {len(names)} log-parameters, got shape {log_vec.shape}")
        return replace(self, **{n: float(math.exp(v)) for n, v in zip(names, log_vec)})

    def as_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "signal_variance": self.signal_variance,
            "length_scale": self.length_scale,
            "alpha": self.alpha,
            "noise_variance": self.noise_variance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KernelSpec":
        return cls(
            kind=KernelKind(str(data["kind"]).lower()),
            signal_variance=float(data["signal_variance"]),
            length_scale=float(data["length_scale"]),
            noise_variance=float(data.get("noise_variance", 0.0)),
            alpha=float(data.get("alpha", 1.0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "KernelSpec":
        return cls.from_dict(json.loads(text))


def base_eval(kind: KernelKind, length_scale: float, alpha: float, r):
    """Evaluate the unit-variance base kernel at separation distance r.

    Parameters
    ----------
    kind : KernelKind
    length_scale : float
        Correlation length scale (meters); > 0.
    alpha : float
        Scale-mixture parameter; used by the rational quadratic kind only.
    r : float or ndarray
        Separation distance(s) (meters); >= 0.

    Returns
    -------
    float or ndarray
        Correlation in (0, 1]; 1 exactly at r = 0.
    """
    if not (math.isfinite(length_scale) and length_scale > 0.0):
        raise ValueError(f"length_scale must be finite and > 0, got {length_scale!r}")
    r_arr = np.asarray(r, dtype=float)
    if not np.all(np.isfinite(r_arr)):
        raise ValueError("separation distances must be finite")
    if np.any(r_arr < 0.0):
        raise ValueError("separation distances must be >= 0")

    if kind is KernelKind.RBF:
        out = np.exp(-0.5 * (r_arr / length_scale) ** 2)
    elif kind is KernelKind.MATERN15:
        a = _SQRT3 * r_arr / length_scale
        out = (1.0 + a) * np.exp(-a)
    elif kind is KernelKind.RQ:
        if not (math.isfinite(alpha) and alpha > 0.0):
            raise ValueError(f"alpha must be finite and > 0, got {alpha!r}")
        out = (1.0 + r_arr**2 / (2.0 * alpha * length_scale**2)) ** (-alpha)
    else:  # pragma: no cover
        raise ValueError(f"unknown kernel kind {kind!r}")

    if np.ndim(r) == 0:
        return float(out)
    return out


def composite_eval(spec: KernelSpec, x, x_prime) -> float:
    """Composite covariance between two 2D points.

    The white-noise term fires only when ``x`` and ``x_prime`` are the
    identical point (exact coordinate equality); in matrix assembly the
    equivalent rule is index identity, so prediction at a training
    location returns the noise-free posterior.
    """
    x = np.asarray(x, dtype=float)
    x_prime = np.asarray(x_prime, dtype=float)
    if x.shape != (2,) or x_prime.shape != (2,):
        raise ValueError("points must be 2D coordinates")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x_prime))):
        raise ValueError("points must be finite")
    r = float(np.hypot(x[0] - x_prime[0], x[1] - x_prime[1]))
    value = spec.signal_variance * base_eval(spec.kind, spec.length_scale, spec.alpha, r)
    if x[0] == x_prime[0] and x[1] == x_prime[1]:
        value += spec.noise_variance
    return float(value)


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
        raise ValueError(f"points must have shape (N, 2) with N >= 1, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("points must be finite")
    return pts


def _pairwise_distances(pts: np.ndarray) -> np.ndarray:
    n = pts.shape[0]
    if n == 1:
        return np.zeros((1, 1))
    return squareform(pdist(pts))


def covariance_matrix(spec: KernelSpec, points, per_point_noise=None) -> np.ndarray:
    """Assemble the N x N training covariance matrix.

    Off-diagonal entries are the scaled base kernel.  The diagonal carries
    the signal variance plus the noise term plus a small stabilizing
    jitter (``JITTER_REL`` times the signal variance).

    Parameters
    ----------
    spec : KernelSpec
    points : array_like, shape (N, 2)
    per_point_noise : array_like of length N, optional
        Per-point noise variances (Mbps^2).  When given they replace the
        global ``noise_variance`` on the diagonal; callers wanting both
        pass the sum.

    Returns
    -------
    ndarray, shape (N, N)
        Symmetric by construction.
    """
    pts = _as_points(points)
    n = pts.shape[0]
    if per_point_noise is not None:
        noise = np.asarray(per_point_noise, dtype=float)
        if noise.shape != (n,):
            raise ValueError(f"per_point_noise must have length {n}, got shape {noise.shape}")
        if np.any(noise < 0.0) or not np.all(np.isfinite(noise)):
            raise ValueError("per_point_noise entries must be finite and >= 0")
    else:
        noise = np.full(n, spec.noise_variance)

    r = _pairwise_distances(pts)
    K = spec.signal_variance * base_eval(spec.kind, spec.length_scale, spec.alpha, r)
    K[np.diag_indices(n)] += noise + JITTER_REL * spec.signal_variance
    return K


def covariance_gradients(spec: KernelSpec, points) -> dict[str, np.ndarray]:
    """Derivatives of the covariance matrix w.r.t. log-hyperparameters.

    Returns a dict keyed by free parameter name (see
    ``KernelSpec.free_parameter_names``), each value an N x N matrix
    dK / d(log theta).  The jitter term scales with the signal variance,
    so its derivative is folded into the signal-variance gradient; the
    gradients therefore match finite differences of
    ``covariance_matrix`` exactly.
    """
    pts = _as_points(points)
    n = pts.shape[0]
    r = _pairwise_distances(pts)
    sv, ell, alpha = spec.signal_variance, spec.length_scale, spec.alpha

    base = base_eval(spec.kind, ell, alpha, r)
    signal = sv * base

    grads: dict[str, np.ndarray] = {}
    d_sv = signal.copy()
    d_sv[np.diag_indices(n)] += JITTER_REL * sv
    grads["signal_variance"] = d_sv

    if spec.kind is KernelKind.RBF:
        grads["length_scale"] = signal * (r / ell) ** 2
    elif spec.kind is KernelKind.MATERN15:
        a = _SQRT3 * r / ell
        grads["length_scale"] = sv * a * a * np.exp(-a)
    else:
        u = r**2 / (2.0 * ell**2)
        q = 1.0 + u / alpha
        grads["length_scale"] = sv * 2.0 * u * q ** (-alpha - 1.0)
        grads["alpha"] = signal * (-alpha * np.log(q) + u / q)

    grads["noise_variance"] = spec.noise_variance * np.eye(n)
    return {name: grads[name] for name in spec.free_parameter_names()}
