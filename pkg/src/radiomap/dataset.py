"""Measurement ingestion, per-location aggregation, splits, and pairing.

Raw samples arrive as CSV rows (one modem/iperf sample each) and are
aggregated into per-waypoint statistics.  Waypoint sets can be split into
train/test subsets and paired against prediction grids by nearest
neighbor.  All types are immutable after construction and all operations
are pure functions of their inputs.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .raster import GridMap

#: Minimum allowed separation between waypoints (meters); guards
#: duplicate-location degeneracy in the GP covariance.
MIN_SEPARATION_M = 1e-3

#: Default clustering radius: half the 0.5 m waypoint step.
DEFAULT_AGGREGATION_RADIUS_M = 0.25

REQUIRED_FIELDS = ("x", "y", "timestamp", "throughput")
OPTIONAL_FIELDS = ("rsrp", "sinr", "mcs", "ri")

#: Waypoint CSV columns, in order; the optional block is all-or-none.
WAYPOINT_BASE_COLUMNS = ("x", "y", "mean_mbps", "std_mbps", "n")
WAYPOINT_OPTIONAL_COLUMNS = ("mean_sinr", "mean_mcs", "mean_ri")


class SchemaError(ValueError):
    """The CSV schema map and the file header disagree."""


class PairingError(RuntimeError):
    """Nearest-neighbor pairing cannot proceed."""


@dataclass(frozen=True)
class RawSample:
    """One measurement sample at one location and instant."""

    x: float
    y: float
    timestamp: float
    throughput: float
    rsrp: float | None = None
    sinr: float | None = None
    mcs: int | None = None
    ri: int | None = None

    def __post_init__(self):
        for name in ("x", "y", "timestamp", "throughput"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.throughput < 0.0:
            raise ValueError("throughput must be >= 0")
        if self.mcs is not None and not 0 <= self.mcs <= 27:
            raise ValueError("mcs must be in [0, 27]")
        if self.ri is not None and not 1 <= self.ri <= 4:
            raise ValueError("ri must be in [1, 4]")


@dataclass(frozen=True)
class Waypoint:
    """Aggregated statistics for one spatial location.

    mean_ri may be non-integer: the rank indicator switches rapidly over
    the sampling window at some locations.
    """

    x: float
    y: float
    mean_throughput: float
    std_throughput: float
    n_samples: int
    mean_sinr: float | None = None
    mean_mcs: float | None = None
    mean_ri: float | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.std_throughput < 0.0:
            raise ValueError("std_throughput must be >= 0")
        if self.n_samples == 1 and self.std_throughput != 0.0:
            raise ValueError("std_throughput must be 0 when n_samples == 1")
        if self.mean_ri is not None and not 1.0 <= self.mean_ri <= 4.0:
            raise ValueError("mean_ri must lie in [1, 4]")


class MeasurementSet:
    """Ordered collection of waypoints plus free-form metadata."""

    def __init__(self, waypoints, metadata: dict | None = None):
        self.waypoints: tuple[Waypoint, ...] = tuple(waypoints)
        self.metadata: dict = dict(metadata or {})
        self._check_separation()

    def _check_separation(self):
        n = len(self.waypoints)
        if n < 2:
            return
        pts = self.points()
        # O(N^2) but N ~ 1e3 at most in practice
        d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        d2[np.diag_indices(n)] = np.inf
        i, j = np.unravel_index(int(np.argmin(d2)), d2.shape)
        if d2[i, j] < MIN_SEPARATION_M**2:
            raise ValueError(
                f"waypoints {i} and {j} are {math.sqrt(d2[i, j]):.2e} m apart "
                f"(< {MIN_SEPARATION_M} m minimum separation)"
            )

    def __len__(self) -> int:
        return len(self.waypoints)

    def __iter__(self):
        return iter(self.waypoints)

    def __getitem__(self, idx) -> Waypoint:
        return self.waypoints[idx]

    def points(self) -> np.ndarray:
        """Waypoint coordinates, shape (N, 2)."""
        if not self.waypoints:
            return np.zeros((0, 2))
        return np.array([(w.x, w.y) for w in self.waypoints])

    def targets(self) -> np.ndarray:
        """Mean throughputs (Mbps), shape (N,)."""
        return np.array([w.mean_throughput for w in self.waypoints])

    def noise_variances(self) -> np.ndarray:
        """Per-waypoint measurement variances (std^2, Mbps^2)."""
        return np.array([w.std_throughput**2 for w in self.waypoints])

    def to_csv(self, dest) -> None:
        """Write the fixed-header waypoint CSV."""
        has_optional = any(
            w.mean_sinr is not None or w.mean_mcs is not None or w.mean_ri is not None
            for w in self.waypoints
        )
        columns = WAYPOINT_BASE_COLUMNS + (WAYPOINT_OPTIONAL_COLUMNS if has_optional else ())
        lines = [",".join(columns)]
        for w in self.waypoints:
            cells = [repr(w.x), repr(w.y), repr(w.mean_throughput), repr(w.std_throughput), str(w.n_samples)]
            if has_optional:
                for value in (w.mean_sinr, w.mean_mcs, w.mean_ri):
                    cells.append("" if value is None else repr(value))
            lines.append(",".join(cells))
        text = "\n".join(lines) + "\n"
        if hasattr(dest, "write"):
            dest.write(text)
        else:
            Path(dest).write_text(text, encoding="utf-8")

    @classmethod
    def from_csv(cls, src, metadata: dict | None = None) -> "MeasurementSet":
        if hasattr(src, "read"):
            text = src.read()
        else:
            text = Path(src).read_text(encoding="utf-8")
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError("waypoint CSV is empty") from None
        base = list(WAYPOINT_BASE_COLUMNS)
        full = base + list(WAYPOINT_OPTIONAL_COLUMNS)
        if header == base:
            has_optional = False
        elif header == full:
            has_optional = True
        else:
            raise SchemaError(f"unexpected waypoint CSV header {header!r}")
        waypoints = []
        for row in reader:
            if not row:
                continue
            kwargs = dict(
                x=float(row[0]),
                y=float(row[1]),
                mean_throughput=float(row[2]),
                std_throughput=float(row[3]),
                n_samples=int(row[4]),
            )
            if has_optional:
                for name, cell in zip(WAYPOINT_OPTIONAL_COLUMNS, row[5:8]):
                    key = {"mean_sinr": "mean_sinr", "mean_mcs": "mean_mcs", "mean_ri": "mean_ri"}[name]
                    kwargs[key] = float(cell) if cell != "" else None
            waypoints.append(Waypoint(**kwargs))
        return cls(waypoints, metadata=metadata)


@dataclass(frozen=True)
class PairedPoint:
    """A measured waypoint matched to a predicted value nearby."""

    measured: Waypoint
    predicted_value: float
    pairing_distance: float


@dataclass
class RowDiagnostic:
    """A rejected or malformed CSV row, with its 1-based line number."""

    line: int
    message: str

    def __str__(self) -> str:
        return f"line {self.line}: {self.message}"


@dataclass
class ParseResult:
    samples: list
    diagnostics: list


def _open_text(source):
    if isinstance(source, (str, Path)):
        return io.StringIO(Path(source).read_text(encoding="utf-8"))
    data = source.read()
    if isinstance(data, bytes):
        return io.StringIO(data.decode("utf-8"))
    return io.StringIO(data)


def parse_raw_csv(source, schema: dict) -> ParseResult:
    """Parse raw measurement samples from CSV.

    Parameters
    ----------
    source : path or file-like (text or bytes)
        UTF-8 CSV with a header row.
    schema : dict
        Maps logical field names (x, y, timestamp, throughput, and
        optionally rsrp, sinr, mcs, ri) to column names in the file.

    Returns
    -------
    ParseResult
        ``samples`` in file order; every rejected row appears in
        ``diagnostics`` with its line number.
    """
    unknown = set(schema) - set(REQUIRED_FIELDS) - set(OPTIONAL_FIELDS)
    if unknown:
        raise SchemaError(f"unknown logical fields in schema: {sorted(unknown)}")
    for field_name in REQUIRED_FIELDS:
        if field_name not in schema:
            raise SchemaError(f"schema missing required field '{field_name}'")

    reader = csv.reader(_open_text(source))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise SchemaError("input CSV is empty (no header row)") from None

    col_index = {}
    for field_name, column in schema.items():
        if column not in header:
            raise SchemaError(f"column '{column}' (field '{field_name}') not found in header")
        col_index[field_name] = header.index(column)

    samples: list[RawSample] = []
    diagnostics: list[RowDiagnostic] = []
    max_needed = max(col_index.values())

    for line, row in enumerate(reader, start=2):
        if not row or all(c.strip() == "" for c in row):
            diagnostics.append(RowDiagnostic(line, "empty row"))
            continue
        if len(row) <= max_needed:
            diagnostics.append(RowDiagnostic(line, f"expected at least {max_needed + 1} columns, got {len(row)}"))
            continue

        def cell(field_name):
            return row[col_index[field_name]].strip()

        try:
            values = {}
            for field_name in REQUIRED_FIELDS:
                raw = cell(field_name)
                try:
                    v = float(raw)
                except ValueError:
                    raise ValueError(f"unparsable value {raw!r} in column '{schema[field_name]}'") from None
                if not math.isfinite(v):
                    raise ValueError(f"non-finite value {raw!r} in column '{schema[field_name]}'")
                values[field_name] = v
            if values["throughput"] < 0.0:
                raise ValueError(f"negative throughput {values['throughput']}")

            optional = {}
            for field_name in OPTIONAL_FIELDS:
                if field_name not in schema:
                    continue
                raw = cell(field_name)
                if raw == "":
                    continue
                try:
                    v = float(raw)
                except ValueError:
                    raise ValueError(f"unparsable value {raw!r} in column '{schema[field_name]}'") from None
                if field_name in ("mcs", "ri"):
                    if not math.isfinite(v) or v != int(v):
                        raise ValueError(f"{field_name} must be an integer, got {raw!r}")
                    v = int(v)
                    if field_name == "mcs" and not 0 <= v <= 27:
                        raise ValueError(f"mcs {v} outside [0, 27]")
                    if field_name == "ri" and not 1 <= v <= 4:
                        raise ValueError(f"ri {v} outside [1, 4]")
                elif not math.isfinite(v):
                    raise ValueError(f"non-finite value {raw!r} in column '{schema[field_name]}'")
                optional[field_name] = v

            samples.append(RawSample(**values, **optional))
        except ValueError as exc:
            diagnostics.append(RowDiagnostic(line, str(exc)))

    return ParseResult(samples=samples, diagnostics=diagnostics)


def aggregate_by_location(samples, radius: float = DEFAULT_AGGREGATION_RADIUS_M,
                          metadata: dict | None = None) -> MeasurementSet:
    """Cluster samples into waypoints and compute per-cluster statistics.

    Greedy single-pass clustering in file order: each sample joins the
    first existing cluster whose running centroid lies within ``radius``,
    else it opens a new cluster.  Waypoint coordinates are the final
    cluster centroid; std uses the n-1 denominator (0 for single-sample
    clusters).
    """
    if radius <= 0.0:
        raise ValueError("radius must be > 0")
    samples = list(samples)
    if not samples:
        return MeasurementSet([], metadata=metadata)

    centroids_x = np.zeros(len(samples))
    centroids_y = np.zeros(len(samples))
    counts = np.zeros(len(samples))
    members: list[list[RawSample]] = []
    n_clusters = 0
    r2 = radius * radius

    for s in samples:
        if n_clusters:
            cx = centroids_x[:n_clusters] / counts[:n_clusters]
            cy = centroids_y[:n_clusters] / counts[:n_clusters]
            d2 = (cx - s.x) ** 2 + (cy - s.y) ** 2
            hits = np.nonzero(d2 <= r2)[0]
        else:
            hits = ()
        if len(hits):
            k = int(hits[0])
        else:
            k = n_clusters
            members.append([])
            n_clusters += 1
        centroids_x[k] += s.x
        centroids_y[k] += s.y
        counts[k] += 1
        members[k].append(s)

    waypoints = []
    for k in range(n_clusters):
        group = members[k]
        n = len(group)
        tp = np.array([s.throughput for s in group])
        std = float(np.std(tp, ddof=1)) if n > 1 else 0.0

        def opt_mean(attr):
            vals = [getattr(s, attr) for s in group if getattr(s, attr) is not None]
            return float(np.mean(vals)) if vals else None

        waypoints.append(
            Waypoint(
                x=float(centroids_x[k] / counts[k]),
                y=float(centroids_y[k] / counts[k]),
                mean_throughput=float(np.mean(tp)),
                std_throughput=std,
                n_samples=n,
                mean_sinr=opt_mean("sinr"),
                mean_mcs=opt_mean("mcs"),
                mean_ri=opt_mean("ri"),
            )
        )
    return MeasurementSet(waypoints, metadata=metadata)


def split_train_test(measurements: MeasurementSet, train_fraction: float,
                     seed: int) -> tuple[MeasurementSet, MeasurementSet]:
    """Deterministic random partition into train and test subsets.

    Train size is round(train_fraction * N); identical inputs always
    produce the identical partition.  Waypoint order within each subset
    follows the input order.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(measurements)
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(round(train_fraction * n))
    train_idx = np.sort(perm[:n_train])
    test_idx = np.sort(perm[n_train:])
    meta = dict(measurements.metadata)
    train = MeasurementSet([measurements[i] for i in train_idx], metadata=meta)
    test = MeasurementSet([measurements[i] for i in test_idx], metadata=dict(meta))
    return train, test


@dataclass
class PairingResult:
    """Pairs plus the waypoints that found no grid cell within threshold."""

    pairs: list
    unmatched: list  # (Waypoint, nearest_distance_m) tuples

    def unmatched_report(self) -> str:
        """Line-oriented report of unmatched waypoints."""
        lines = [
            f"x={w.x!r} y={w.y!r} nearest_cell_m={d!r}"
            for w, d in self.unmatched
        ]
        return "\n".join(lines) + ("\n" if lines else "")


def pair_nearest_neighbor(measurements: MeasurementSet, prediction_grid: GridMap,
                          threshold: float, value_field: str | None = None) -> PairingResult:
    """Match each waypoint to its nearest usable grid cell center.

    A waypoint pairs with the nearest unmasked, payload-carrying cell iff
    the distance is <= ``threshold``; exact distance ties break to the
    lexicographically smaller (x, y) cell center.  Unmatched waypoints
    are reported with their nearest-cell distance, never silently
    dropped.

    ``value_field`` selects the payload field used as the predicted
    value; by default ``mean_mbps`` then ``throughput_mbps`` is tried.
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be > 0")
    centers = prediction_grid.cell_centers()
    usable = [
        i
        for i in range(prediction_grid.n_cells)
        if not prediction_grid.mask[i] and prediction_grid.values[i] is not None
    ]
    if not usable:
        raise PairingError("prediction grid has no usable (unmasked, payload-carrying) cells")

    if value_field is None:
        sample = prediction_grid.values[usable[0]]
        for candidate in ("mean_mbps", "throughput_mbps"):
            if candidate in sample:
                value_field = candidate
                break
        else:
            raise PairingError(
                f"cannot infer value field from payload keys {sorted(sample)}; pass value_field"
            )
    usable = [i for i in usable if value_field in prediction_grid.values[i]]
    if not usable:
        raise PairingError(f"no grid cell payload carries field {value_field!r}")

    idx = np.array(usable)
    cx = centers[idx, 0]
    cy = centers[idx, 1]

    pairs: list[PairedPoint] = []
    unmatched: list[tuple[Waypoint, float]] = []
    for w in measurements:
        d2 = (cx - w.x) ** 2 + (cy - w.y) ** 2
        dmin2 = d2.min()
        ties = np.nonzero(d2 == dmin2)[0]
        if len(ties) > 1:
            best = min(ties, key=lambda t: (cx[t], cy[t]))
        else:
            best = ties[0]
        distance = math.sqrt(dmin2)
        if distance <= threshold:
            cell_index = int(idx[best])
            predicted = float(prediction_grid.values[cell_index][value_field])
            pairs.append(PairedPoint(measured=w, predicted_value=predicted, pairing_distance=distance))
        else:
            unmatched.append((w, distance))
    return PairingResult(pairs=pairs, unmatched=unmatched)
