"""Command-line surface tying the modules into the end-to-end pipeline.

Subcommands cover the full workflow from raw measurement CSV to scorecard
and heatmap: aggregate -> fit -> predict / baseline -> compare -> report.
Exit status 0 on success, 1 on usage errors, 2 on data or numerical
errors.  All outputs are byte-deterministic for identical inputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dataset, gpr, linklayer, raster, scorecard
from .kernels import KernelKind

USAGE_EXIT = 1
DATA_EXIT = 2

KERNEL_CHOICES = ("rbf", "matern15", "rq")

SITE_EXAMPLE = {
    "_note": "illustrative floor plan, approximate proportions only; not surveyed",
    "bounds": [0.0, 0.0, 30.0, 20.0],
    "cell_size": 0.5,
    "mask_polygons": [[[12.0, 7.0], [18.0, 7.0], [18.0, 13.0], [12.0, 13.0]]],
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2) + "\n", encoding="utf-8")


def _parse_floats(text: str, n: int, what: str) -> list[float]:
    parts = text.split(",")
    if len(parts) != n:
        raise UsageError(f"{what} needs {n} comma-separated numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError:
        raise UsageError(f"{what} contains a non-numeric value: {text!r}") from None


def _load_mask(path) -> list | None:
    if path is None:
        return None
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = data.get("mask_polygons", [])
    return data


def _build_grid_from_args(args) -> raster.GridMap:
    bounds = _parse_floats(args.bounds, 4, "--bounds")
    if args.cell <= 0:
        raise UsageError("--cell must be > 0")
    return raster.build_grid(bounds, args.cell, mask_polygons=_load_mask(args.mask))


def _cmd_aggregate(args) -> int:
    if args.radius <= 0:
        raise UsageError("--radius must be > 0")
    schema = json.loads(Path(args.schema).read_text(encoding="utf-8"))
    result = dataset.parse_raw_csv(args.infile, schema)
    measurements = dataset.aggregate_by_location(result.samples, radius=args.radius)
    measurements.to_csv(args.out)
    if args.diagnostics_out:
        Path(args.diagnostics_out).write_text(
            "".join(f"{d}\n" for d in result.diagnostics), encoding="utf-8"
        )
    print(
        f"wrote {args.out}: {len(measurements)} waypoints from "
        f"{len(result.samples)} samples ({len(result.diagnostics)} rows rejected)"
    )
    return 0


def _cmd_fit(args) -> int:
    if not 0.0 < args.split < 1.0:
        raise UsageError("--split must be in (0, 1)")
    if args.restarts < 1:
        raise UsageError("--restarts must be >= 1")
    measurements = dataset.MeasurementSet.from_csv(args.train)
    train, test = dataset.split_train_test(measurements, args.split, args.seed)
    model = gpr.fit(train, KernelKind(args.kernel), n_restarts=args.restarts, seed=args.seed)
    gpr.save_model(model, args.model_out)
    if args.test_out:
        test.to_csv(args.test_out)
    best = max(r.lml_final for r in model.fit_log)
    print(
        f"fitted {args.kernel} on {len(train)} waypoints "
        f"(test {len(test)}); best LML {best:.3f}; wrote {args.model_out}"
    )
    return 0


def _cmd_predict(args) -> int:
    model = gpr.load_model(args.model)
    grid = _build_grid_from_args(args)
    out_grid = gpr.predict_grid(model, grid)
    raster.write_grid_csv(out_grid, args.out, ["mean_mbps", "std_mbps"])
    print(f"wrote {args.out}: {out_grid.n_cols}x{out_grid.n_rows} grid")
    return 0


def _cmd_baseline(args) -> int:
    if args.config:
        config, pl_model = linklayer.load_radio_config(args.config)
    else:
        config, pl_model = linklayer.RadioConfig(), linklayer.FREE_SPACE
    if args.mcs_table:
        table = linklayer.mcs_table_from_dict(
            json.loads(Path(args.mcs_table).read_text(encoding="utf-8"))
        )
    else:
        table = linklayer.default_mcs_table()
    if args.layer_rule:
        rule = linklayer.layer_rule_from_dict(
            json.loads(Path(args.layer_rule).read_text(encoding="utf-8"))
        )
    else:
        rule = linklayer.DEFAULT_LAYER_RULE
    grid = _build_grid_from_args(args)
    out_grid = linklayer.predict_map(
        config, grid, table=table, rule=rule, mode=args.mode, path_loss_model=pl_model
    )
    raster.write_grid_csv(out_grid, args.out, ["sinr_db", "mcs", "layers", "throughput_mbps"])
    print(f"wrote {args.out}: {out_grid.n_cols}x{out_grid.n_rows} grid ({args.mode} mode)")
    return 0


def _cmd_compare(args) -> int:
    if args.threshold <= 0:
        raise UsageError("--threshold must be > 0")
    measured = dataset.MeasurementSet.from_csv(args.measured)
    grid, _ = raster.read_grid_csv(args.predicted)
    pairing = dataset.pair_nearest_neighbor(
        measured, grid, args.threshold, value_field=args.value_field
    )
    if not pairing.pairs:
        raise dataset.PairingError(
            f"no waypoint paired within {args.threshold} m "
            f"({len(pairing.unmatched)} unmatched)"
        )
    errors = scorecard.signed_errors(pairing.pairs)
    card = scorecard.compute_scorecard(errors)
    Path(args.out).write_text(card.to_json(), encoding="utf-8")
    if args.unmatched_out:
        Path(args.unmatched_out).write_text(pairing.unmatched_report(), encoding="utf-8")
    if args.hist_out:
        edges = (
            [float(v) for v in args.hist_edges.split(",")]
            if args.hist_edges
            else None
        )
        if edges is None or len(edges) < 2:
            raise UsageError("--hist-out requires --hist-edges with at least 2 values")
        hist = scorecard.pdf_histogram(errors, edges)
        scorecard.histogram_to_csv(hist, args.hist_out)
    print(
        f"paired {len(pairing.pairs)} waypoints "
        f"({len(pairing.unmatched)} unmatched); wrote {args.out}"
    )
    sys.stdout.write(scorecard.render_text(card))
    return 0


def _cmd_report(args) -> int:
    scale = _parse_floats(args.scale, 2, "--scale")
    if scale[1] <= scale[0]:
        raise UsageError("--scale must be min,max with max > min")
    grid, fields = raster.read_grid_csv(args.grid)
    if args.field not in fields:
        raise UsageError(f"--field {args.field!r} not among grid fields {fields}")
    data = raster.export_heatmap(grid, args.field, (scale[0], scale[1]))
    Path(args.out).write_bytes(data)
    print(f"wrote {args.out}: {grid.n_cols}x{grid.n_rows} pixmap")
    return 0


def _cmd_dump_defaults(args) -> int:
    what = args.what
    if what == "radio":
        _write_json(args.out, linklayer.radio_config_defaults_dict())
    elif what == "mcs":
        _write_json(args.out, linklayer.mcs_table_to_dict(linklayer.default_mcs_table()))
    elif what == "layers":
        _write_json(args.out, linklayer.layer_rule_to_dict(linklayer.DEFAULT_LAYER_RULE))
    elif what == "site":
        _write_json(args.out, SITE_EXAMPLE)
    else:  # pragma: no cover - argparse restricts choices
        raise UsageError(f"unknown defaults kind {what!r}")
    print(f"wrote {args.out}")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="radiomap", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("aggregate", help="aggregate raw samples into waypoints")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--schema", required=True, help="JSON map of logical field -> column name")
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=float, default=dataset.DEFAULT_AGGREGATION_RADIUS_M)
    p.add_argument("--diagnostics-out", default=None)
    p.set_defaults(func=_cmd_aggregate)

    p = sub.add_parser("fit", help="fit a GPR model on a train split")
    p.add_argument("--train", required=True, help="waypoint CSV")
    p.add_argument("--kernel", required=True, choices=KERNEL_CHOICES)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--restarts", type=int, default=gpr.DEFAULT_RESTARTS)
    p.add_argument("--split", type=float, default=0.7)
    p.add_argument("--model-out", required=True)
    p.add_argument("--test-out", default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="predict a throughput grid from a model")
    p.add_argument("--model", required=True)
    p.add_argument("--bounds", required=True, help="xmin,ymin,xmax,ymax (meters)")
    p.add_argument("--cell", type=float, default=0.5)
    p.add_argument("--mask", default=None, help="JSON mask polygons (e.g. the pit)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("baseline", help="channel-centric baseline prediction grid")
    p.add_argument("--config", default=None, help="radio config JSON (embedded defaults if omitted)")
    p.add_argument("--mcs-table", default=None)
    p.add_argument("--layer-rule", default=None)
    p.add_argument("--mode", choices=("adaptive", "rank4"), default="adaptive")
    p.add_argument("--bounds", required=True)
    p.add_argument("--cell", type=float, default=0.5)
    p.add_argument("--mask", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("compare", help="score a prediction grid against measurements")
    p.add_argument("--measured", required=True, help="waypoint CSV")
    p.add_argument("--predicted", required=True, help="grid CSV")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--value-field", default=None)
    p.add_argument("--out", required=True, help="scorecard JSON")
    p.add_argument("--hist-edges", default=None, help="comma-separated bin edges (Mbps)")
    p.add_argument("--hist-out", default=None)
    p.add_argument("--unmatched-out", default=None)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("report", help="render a grid field as a P6 heatmap")
    p.add_argument("--grid", required=True)
    p.add_argument("--field", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--scale", required=True, help="min,max color scale")
    p.set_defaults(func=_cmd_report)

    p = sub.add_parser("dump-defaults", help="write embedded default configs for editing")
    p.add_argument("--what", required=True, choices=("radio", "mcs", "layers", "site"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dump_defaults)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_EXIT
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except (
        dataset.SchemaError,
        dataset.PairingError,
        gpr.FitError,
        gpr.FactorizationError,
        json.JSONDecodeError,
        ValueError,
        OSError,
        KeyError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_EXIT


def entry_point() -> None:  # pragma: no cover - console script shim
    sys.exit(main())


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
