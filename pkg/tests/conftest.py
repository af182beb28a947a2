"""Shared helpers for the test suite."""

import math

import numpy as np

from radiomap.dataset import MeasurementSet, Waypoint
from radiomap.kernels import KernelKind, KernelSpec, covariance_matrix


def waypoint_set(points, targets, stds=None, counts=None) -> MeasurementSet:
    """MeasurementSet from plain arrays (std defaults to 0, n to 1)."""
    points = np.asarray(points, dtype=float)
    targets = np.asarray(targets, dtype=float)
    n = len(targets)
    stds = np.zeros(n) if stds is None else np.asarray(stds, dtype=float)
    counts = np.ones(n, dtype=int) if counts is None else np.asarray(counts)
    waypoints = [
        Waypoint(
            x=float(points[i, 0]),
            y=float(points[i, 1]),
            mean_throughput=float(targets[i]),
            std_throughput=float(stds[i]),
            n_samples=int(counts[i]) if counts[i] > 1 else max(1, int(counts[i])),
        )
        for i in range(n)
    ]
    return MeasurementSet(waypoints)


def draw_gp_dataset(seed=2024, n=200, signal_variance=1.0, length_scale=2.0,
                    noise_variance=0.01, extent=20.0):
    """Sample a noisy draw from a known RBF GP on a 1D line (y = 0).

    Returns (MeasurementSet, generator KernelSpec).  Waypoint stds are 0;
    the generator noise is left for the fitted white-noise term.
    """
    rng = np.random.default_rng(seed)
    # jittered line keeps neighbors comfortably above the 1 mm separation rule
    spacing = extent / n
    xs = np.linspace(0.0, extent, n) + rng.uniform(-0.4 * spacing, 0.4 * spacing, size=n)
    pts = np.column_stack([xs, np.zeros(n)])
    spec = KernelSpec(
        kind=KernelKind.RBF,
        signal_variance=signal_variance,
        length_scale=length_scale,
        noise_variance=noise_variance,
    )
    K = covariance_matrix(spec, pts)  # includes the noise and jitter terms
    L = np.linalg.cholesky(K)
    targets = L @ rng.standard_normal(n)
    return waypoint_set(pts, targets), spec


def field_mbps(x, y):
    """Smooth planted throughput field for synthetic campaigns."""
    return 100.0 + 300.0 * math.exp(-((x - 3.0) ** 2 + (y - 1.5) ** 2) / 8.0)


def write_raw_csv(path, seed=5, n_samples=5):
    """Synthetic raw measurement CSV: 72 waypoints on a 0.5 m grid."""
    rng = np.random.default_rng(seed)
    lines = ["x,y,t,dl_mbps"]
    t = 0
    for ix in range(12):
        for iy in range(6):
            x = 0.25 + 0.5 * ix
            y = 0.25 + 0.5 * iy
            base = field_mbps(x, y)
            for _ in range(n_samples):
                lines.append(f"{x},{y},{t},{base + rng.normal(scale=5.0):.6f}")
                t += 1
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
