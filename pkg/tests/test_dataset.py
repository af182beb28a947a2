"""Raw CSV parsing, aggregation, splitting, and nearest-neighbor pairing."""

import io
import math

import numpy as np
import pytest
from conftest import waypoint_set

from radiomap.dataset import (
    MeasurementSet,
    PairingError,
    RawSample,
    SchemaError,
    Waypoint,
    aggregate_by_location,
    pair_nearest_neighbor,
    parse_raw_csv,
    split_train_test,
)
from radiomap.raster import build_grid

SCHEMA = {"x": "x", "y": "y", "timestamp": "t", "throughput": "dl_mbps"}


def make_grid_with_values(bounds, cell, value, field="mean_mbps"):
    grid = build_grid(bounds, cell)
    for i in range(grid.n_cells):
        if not grid.mask[i]:
            grid.values[i] = {field: value}
    return grid


class TestParseRawCsv:
    def test_direct_field_mapping(self):
        result = parse_raw_csv(io.StringIO("x,y,t,dl_mbps\n1.0,2.0,0.0,350.5\n"), SCHEMA)
        assert len(result.samples) == 1
        assert result.diagnostics == []
        s = result.samples[0]
        assert (s.x, s.y, s.timestamp, s.throughput) == (1.0, 2.0, 0.0, 350.5)

    def test_negative_throughput_rejected(self):
        result = parse_raw_csv(io.StringIO("x,y,t,dl_mbps\n1,2,0,-3\n"), SCHEMA)
        assert result.samples == []
        assert len(result.diagnostics) == 1
        assert result.diagnostics[0].line == 2
        assert "throughput" in result.diagnostics[0].message

    def test_unparsable_cell_reports_line_number(self):
        text = "x,y,t,dl_mbps\n1,2,0,100\n1,2,zz,100\n1,2,1,100\n"
        result = parse_raw_csv(io.StringIO(text), SCHEMA)
        assert len(result.samples) == 2
        assert len(result.diagnostics) == 1
        assert result.diagnostics[0].line == 3

    def test_missing_required_column(self):
        with pytest.raises(SchemaError, match="dl_mbps"):
            parse_raw_csv(io.StringIO("x,y,t\n1,2,0\n"), SCHEMA)

    def test_missing_schema_field(self):
        with pytest.raises(SchemaError, match="throughput"):
            parse_raw_csv(io.StringIO("x,y,t\n"), {"x": "x", "y": "y", "timestamp": "t"})

    def test_unknown_schema_field(self):
        bad = dict(SCHEMA, wavelength="wl")
        with pytest.raises(SchemaError, match="wavelength"):
            parse_raw_csv(io.StringIO("x,y,t,dl_mbps,wl\n"), bad)

    def test_optional_fields(self):
        schema = dict(SCHEMA, rsrp="rsrp", sinr="sinr", mcs="mcs", ri="ri")
        text = "x,y,t,dl_mbps,rsrp,sinr,mcs,ri\n1,2,0,100,-80,20,17,3\n1,2,1,90,,,,\n"
        result = parse_raw_csv(io.StringIO(text), schema)
        assert len(result.samples) == 2
        assert result.samples[0].mcs == 17
        assert result.samples[0].ri == 3
        assert result.samples[1].mcs is None

    def test_mcs_and_ri_range_checks(self):
        schema = dict(SCHEMA, mcs="mcs", ri="ri")
        text = "x,y,t,dl_mbps,mcs,ri\n1,2,0,100,28,2\n1,2,1,100,5,5\n1,2,2,100,5,2\n"
        result = parse_raw_csv(io.StringIO(text), schema)
        assert len(result.samples) == 1
        assert len(result.diagnostics) == 2

    def test_byte_stream_input(self):
        data = io.BytesIO(b"x,y,t,dl_mbps\n1,2,0,50\n")
        result = parse_raw_csv(data, SCHEMA)
        assert len(result.samples) == 1

    def test_bulk_file_with_malformed_rows(self):
        # 9000 rows of which 2000 are malformed in assorted ways
        rng = np.random.default_rng(1)
        lines = ["x,y,t,dl_mbps"]
        bad = set(rng.choice(9000, size=2000, replace=False))
        for i in range(9000):
            if i in bad:
                kind = i % 3
                if kind == 0:
                    lines.append(f"1.0,2.0,{i},-5")  # negative throughput
                elif kind == 1:
                    lines.append(f"1.0,2.0,{i},oops")  # unparsable
                else:
                    lines.append(f"1.0,2.0,{i}")  # short row
            else:
                lines.append(f"{i % 30},{i % 20},{i},{100 + i % 50}")
        result = parse_raw_csv(io.StringIO("\n".join(lines) + "\n"), SCHEMA)
        assert len(result.samples) == 7000
        assert len(result.diagnostics) == 2000
        assert all(2 <= d.line <= 9001 for d in result.diagnostics)


class TestAggregation:
    def mk(self, x, y, t, tp):
        return RawSample(x=x, y=y, timestamp=t, throughput=tp)

    def test_mean_and_sample_std(self):
        samples = [self.mk(0, 0, t, tp) for t, tp in enumerate([100.0, 110.0, 120.0])]
        mset = aggregate_by_location(samples, radius=0.25)
        assert len(mset) == 1
        w = mset[0]
        assert w.mean_throughput == pytest.approx(110.0, rel=1e-12)
        assert w.std_throughput == pytest.approx(10.0, rel=1e-12)
        assert w.n_samples == 3

    def test_single_sample_zero_std(self):
        mset = aggregate_by_location([self.mk(1, 1, 0, 42.0)])
        assert mset[0].std_throughput == 0.0
        assert mset[0].n_samples == 1

    def test_separated_samples_form_distinct_waypoints(self):
        mset = aggregate_by_location([self.mk(0, 0, 0, 1.0), self.mk(5, 5, 1, 2.0)], radius=0.25)
        assert len(mset) == 2

    def test_empty_input(self):
        mset = aggregate_by_location([])
        assert len(mset) == 0

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            aggregate_by_location([self.mk(0, 0, 0, 1.0)], radius=0.0)

    def test_mass_preservation_and_brute_force_stats(self):
        rng = np.random.default_rng(5)
        samples = []
        t = 0.0
        for cx, cy in [(0, 0), (0.5, 0), (3, 4), (10, 10)]:
            for _ in range(int(rng.integers(1, 12))):
                samples.append(
                    self.mk(cx + rng.uniform(-0.05, 0.05), cy + rng.uniform(-0.05, 0.05),
                            t, float(rng.uniform(50, 400)))
                )
                t += 1.0
        mset = aggregate_by_location(samples, radius=0.25)
        assert sum(w.n_samples for w in mset) == len(samples)

        # brute-force recompute per waypoint by re-clustering membership
        for w in mset:
            members = [s for s in samples if math.hypot(s.x - w.x, s.y - w.y) <= 0.25]
            assert len(members) == w.n_samples
            values = np.array([s.throughput for s in members])
            assert w.mean_throughput == pytest.approx(values.mean(), rel=1e-9)
            expected_std = values.std(ddof=1) if len(values) > 1 else 0.0
            assert w.std_throughput == pytest.approx(expected_std, rel=1e-9, abs=1e-12)

    def test_centroid_is_cluster_mean(self):
        samples = [self.mk(0.0, 0.0, 0, 1.0), self.mk(0.1, 0.0, 1, 2.0)]
        mset = aggregate_by_location(samples, radius=0.25)
        assert mset[0].x == pytest.approx(0.05)

    def test_optional_link_metrics_averaged(self):
        samples = [
            RawSample(x=0, y=0, timestamp=0, throughput=10, sinr=20.0, mcs=17, ri=3),
            RawSample(x=0, y=0, timestamp=1, throughput=20, sinr=22.0, mcs=19, ri=2),
            RawSample(x=0, y=0, timestamp=2, throughput=30),
        ]
        w = aggregate_by_location(samples)[0]
        assert w.mean_sinr == pytest.approx(21.0)
        assert w.mean_mcs == pytest.approx(18.0)
        assert w.mean_ri == pytest.approx(2.5)  # non-integer average is expected


class TestSplitTrainTest:
    def test_sizes(self):
        mset = waypoint_set([[i, 0] for i in range(10)], np.arange(10.0))
        train, test = split_train_test(mset, 0.7, seed=13)
        assert (len(train), len(test)) == (7, 3)

    def test_deterministic(self):
        mset = waypoint_set([[i, 0] for i in range(25)], np.arange(25.0))
        a = split_train_test(mset, 0.7, seed=13)
        b = split_train_test(mset, 0.7, seed=13)
        assert [w.x for w in a[0]] == [w.x for w in b[0]]
        assert [w.x for w in a[1]] == [w.x for w in b[1]]

    def test_partition_disjoint_exhaustive(self):
        mset = waypoint_set([[i, 0] for i in range(40)], np.arange(40.0))
        train, test = split_train_test(mset, 0.3, seed=2)
        train_x = {w.x for w in train}
        test_x = {w.x for w in test}
        assert train_x | test_x == {float(i) for i in range(40)}
        assert train_x & test_x == set()

    def test_different_seeds_differ(self):
        n = 900
        mset = waypoint_set([[i % 30, i // 30] for i in range(n)], np.arange(float(n)))
        one = split_train_test(mset, 0.7, seed=1)
        two = split_train_test(mset, 0.7, seed=2)
        membership1 = [w in set((v.x, v.y) for v in one[0]) for w in ((v.x, v.y) for v in mset)]
        membership2 = [w in set((v.x, v.y) for v in two[0]) for w in ((v.x, v.y) for v in mset)]
        assert membership1 != membership2

    def test_fraction_bounds(self):
        mset = waypoint_set([[0, 0], [1, 0]], [1.0, 2.0])
        for bad in (0.0, 1.0, -0.2, 1.7):
            with pytest.raises(ValueError):
                split_train_test(mset, bad, seed=0)


class TestMeasurementSet:
    def test_rejects_near_duplicate_locations(self):
        with pytest.raises(ValueError, match="separation"):
            waypoint_set([[0, 0], [0.0005, 0]], [1.0, 2.0])

    def test_csv_round_trip(self):
        waypoints = [
            Waypoint(x=1.0, y=2.0, mean_throughput=350.5, std_throughput=12.25,
                     n_samples=7, mean_sinr=21.5, mean_mcs=17.3, mean_ri=2.6),
            Waypoint(x=3.5, y=4.0, mean_throughput=120.0, std_throughput=0.0, n_samples=1),
        ]
        mset = MeasurementSet(waypoints)
        buf = io.StringIO()
        mset.to_csv(buf)
        again = MeasurementSet.from_csv(io.StringIO(buf.getvalue()))
        assert again.waypoints == mset.waypoints

    def test_csv_base_header_when_no_link_metrics(self):
        mset = waypoint_set([[0, 0], [1, 0]], [1.0, 2.0])
        buf = io.StringIO()
        mset.to_csv(buf)
        assert buf.getvalue().splitlines()[0] == "x,y,mean_mbps,std_mbps,n"

    def test_csv_rejects_unknown_header(self):
        with pytest.raises(SchemaError):
            MeasurementSet.from_csv(io.StringIO("a,b,c\n1,2,3\n"))


class TestPairing:
    def test_pairs_within_threshold(self):
        mset = waypoint_set([[1.0, 1.0]], [100.0])
        grid = make_grid_with_values((0.95, 0.75, 1.45, 1.25), 0.5, 90.0)
        # single cell centered at (1.2, 1.0)
        result = pair_nearest_neighbor(mset, grid, threshold=0.5)
        assert len(result.pairs) == 1
        pair = result.pairs[0]
        assert pair.pairing_distance == pytest.approx(0.2, abs=1e-12)
        assert pair.predicted_value == 90.0
        assert result.unmatched == []

    def test_unmatched_beyond_threshold(self):
        mset = waypoint_set([[1.0, 1.0]], [100.0])
        grid = make_grid_with_values((1.55, 0.75, 2.05, 1.25), 0.5, 90.0)
        # single cell centered at (1.8, 1.0): 0.8 m away
        result = pair_nearest_neighbor(mset, grid, threshold=0.5)
        assert result.pairs == []
        assert len(result.unmatched) == 1
        w, distance = result.unmatched[0]
        assert distance == pytest.approx(0.8, abs=1e-12)
        assert "nearest_cell_m" in result.unmatched_report()

    def test_exact_tie_breaks_lexicographically(self):
        # dyadic coordinates make the cells at (-0.25, 0) and (0.25, 0)
        # exactly equidistant from the waypoint at the origin
        mset = waypoint_set([[0.0, 0.0]], [100.0])
        grid = build_grid((-0.5, -0.25, 0.5, 0.25), 0.5)
        assert grid.n_cells == 2
        assert grid.cell_center(0) == (-0.25, 0.0)
        assert grid.cell_center(1) == (0.25, 0.0)
        grid.values[0] = {"mean_mbps": 1.0}
        grid.values[1] = {"mean_mbps": 2.0}
        result = pair_nearest_neighbor(mset, grid, threshold=0.5)
        assert result.pairs[0].predicted_value == 1.0

    def test_distance_never_exceeds_threshold(self):
        rng = np.random.default_rng(31)
        pts = rng.uniform(0.0, 10.0, size=(50, 2))
        mset = waypoint_set(pts, rng.uniform(0, 100, size=50))
        grid = make_grid_with_values((0, 0, 10, 10), 0.5, 1.0)
        result = pair_nearest_neighbor(mset, grid, threshold=0.4)
        assert len(result.pairs) + len(result.unmatched) == 50
        for pair in result.pairs:
            assert pair.pairing_distance <= 0.4

    def test_masked_cells_never_pair(self):
        mset = waypoint_set([[0.25, 0.25]], [10.0])
        grid = make_grid_with_values((0, 0, 1, 0.5), 0.5, 5.0)
        grid.mask[0] = True  # mask the nearest cell at (0.25, 0.25)
        result = pair_nearest_neighbor(mset, grid, threshold=10.0)
        # pairs with the other cell at (0.75, 0.25) instead
        assert result.pairs[0].pairing_distance == pytest.approx(0.5, abs=1e-12)

    def test_empty_grid_is_error(self):
        mset = waypoint_set([[0, 0]], [1.0])
        grid = build_grid((0, 0, 1, 1), 0.5)  # no payload anywhere
        with pytest.raises(PairingError):
            pair_nearest_neighbor(mset, grid, threshold=0.5)

    def test_throughput_field_fallback(self):
        mset = waypoint_set([[0.25, 0.25]], [10.0])
        grid = make_grid_with_values((0, 0, 0.5, 0.5), 0.5, 123.0, field="throughput_mbps")
        result = pair_nearest_neighbor(mset, grid, threshold=0.5)
        assert result.pairs[0].predicted_value == 123.0

    def test_explicit_value_field(self):
        mset = waypoint_set([[0.25, 0.25]], [10.0])
        grid = build_grid((0, 0, 0.5, 0.5), 0.5)
        grid.values[0] = {"mean_mbps": 1.0, "throughput_mbps": 2.0}
        result = pair_nearest_neighbor(mset, grid, threshold=0.5, value_field="throughput_mbps")
        assert result.pairs[0].predicted_value == 2.0

    def test_bad_threshold(self):
        mset = waypoint_set([[0, 0]], [1.0])
        grid = make_grid_with_values((0, 0, 1, 1), 0.5, 1.0)
        with pytest.raises(ValueError):
            pair_nearest_neighbor(mset, grid, threshold=0.0)


class TestRawSampleInvariants:
    def test_rejects_negative_throughput(self):
        with pytest.raises(ValueError):
            RawSample(x=0, y=0, timestamp=0, throughput=-1.0)

    def test_rejects_bad_mcs_and_ri(self):
        with pytest.raises(ValueError):
            RawSample(x=0, y=0, timestamp=0, throughput=1.0, mcs=28)
        with pytest.raises(ValueError):
            RawSample(x=0, y=0, timestamp=0, throughput=1.0, ri=0)

    def test_waypoint_single_sample_std(self):
        with pytest.raises(ValueError):
            Waypoint(x=0, y=0, mean_throughput=1.0, std_throughput=2.0, n_samples=1)
