import gzip
import logging

import numpy as np
import pytest
from scipy import stats

from gevforecast import data, gev
from gevforecast.data import (
    CsvSchema,
    EmptyDatasetError,
    ParseError,
    Series,
    WindowSpec,
    generate_synthetic,
    ingest_csv,
    ingest_hurdat2,
    persistence_forecast,
    window,
)
from gevforecast.global_fit import DegenerateDataError, fit_global


def hurdat_storm(storm_id, name, winds, start_day=1, extra=()):
    lines = [f"{storm_id}, {name:>18},{len(winds) + len(extra):>7},"]
    for k, w in enumerate(winds):
        day, hour = start_day + (6 * k) // 24, (6 * k) % 24
        lines.append(
            f"198008{day:02d}, {hour:02d}00,  , HU, 11.7N,  52.8W, {w:>3}, 1009,    0,    0,    0,    0,"
            "    0,    0,    0,    0,    0,    0,    0,    0, -999"
        )
    lines.extend(extra)
    return lines


@pytest.fixture
def two_storms(tmp_path):
    a = list(range(30, 30 + 24 * 5, 5))
    b = [40] * 10 + [-99] + [60] * 15  # one missing wind, filled by interpolation
    lines = hurdat_storm("AL011980", "ALLEN", a) + hurdat_storm("EP021980", "BLAS", b, start_day=10)
    p = tmp_path / "hurdat2.txt"
    p.write_text("\n".join(lines) + "\n")
    return p, a, b


class TestWindow:
    def test_single_window(self):
        ds = window([Series("s", np.arange(1, 25))], WindowSpec(16, 8))
        assert len(ds) == 1
        np.testing.assert_array_equal(ds.x_raw[0, :, 0], np.arange(1, 17))
        assert ds.y_raw[0] == 24

    def test_hurricane_spec(self):
        assert (data.HURRICANE_WINDOWS.alpha, data.HURRICANE_WINDOWS.beta, data.HURRICANE_WINDOWS.length) == (16, 8, 24)

    def test_constant_series(self):
        ds = window([Series("s", np.full(48, 7.0))], WindowSpec(16, 8))
        np.testing.assert_array_equal(ds.y_raw, 7.0)
        with pytest.raises(DegenerateDataError):
            fit_global(ds.y_raw)

    def test_too_short(self):
        with pytest.raises(EmptyDatasetError):
            window([Series("s", np.arange(23))], WindowSpec(16, 8))

    def test_stride_and_overlap(self):
        with pytest.raises(ValueError):
            WindowSpec(16, 8, stride=4)
        ds = window([Series("s", np.arange(30))], WindowSpec(16, 8, stride=2, allow_overlap=True))
        assert len(ds) == 4
        with pytest.raises(ValueError):
            WindowSpec(0, 8)

    def test_targets_recompute_exactly(self):
        rng = np.random.default_rng(0)
        series = [Series(f"s{i}", rng.normal(size=(rng.integers(24, 200), 2))) for i in range(20)]
        spec = WindowSpec(5, 3)
        ds = window(series, spec, target_col=1)
        by_entity = {s.entity: s.values for s in series}
        for k in range(len(ds)):
            v = by_entity[ds.entity[k]]
            a = int(ds.start[k])
            assert ds.y_raw[k] == v[a + spec.alpha : a + spec.length, 1].max()
            np.testing.assert_array_equal(ds.x_raw[k], v[a : a + spec.alpha])

    def test_standardization_uses_training_rows(self):
        rng = np.random.default_rng(1)
        ds = window([Series("s", rng.normal(3, 2, size=(2000, 3)))], WindowSpec(4, 2), target_col=2)
        xt = ds.x[ds.mask("train")].reshape(-1, 3)
        np.testing.assert_allclose(xt.mean(axis=0), 0, atol=1e-9)
        np.testing.assert_allclose(xt.std(axis=0), 1, atol=1e-9)
        # targets share the target column's units
        assert (ds.y_mean, ds.y_std) == (ds.x_mean[2], ds.x_std[2])

    def test_split_ratio_and_order(self):
        ds = window([Series("a", np.arange(24 * 37.0)), Series("b", np.arange(24 * 63.0))], WindowSpec(16, 8))
        n = len(ds)
        counts = [int(np.sum(ds.split == s)) for s in data.SPLITS]
        assert counts == [round(0.7 * n), round(0.2 * n), n - round(0.7 * n) - round(0.2 * n)]
        # chronological: every train window starts no later than any val or test window
        assert ds.start[ds.split == "train"].max() <= ds.start[ds.split != "train"].min()

    def test_save_load_round_trip(self, tmp_path):
        ds = window([Series("s", np.arange(240.0))], WindowSpec(16, 8))
        ds.save(tmp_path / "d.npz")
        back = data.WindowedDataset.load(tmp_path / "d.npz")
        np.testing.assert_array_equal(back.x_raw, ds.x_raw)
        np.testing.assert_array_equal(back.split, ds.split)
        assert back.spec == ds.spec and back.y_std == ds.y_std


class TestPersistence:
    def test_ramp(self):
        ds = window([Series("s", np.arange(1, 25))], WindowSpec(16, 8))
        assert persistence_forecast(ds)[0] == 16 and ds.y_raw[0] == 24

    def test_decreasing_overforecasts(self):
        ds = window([Series("s", np.arange(240.0, 0, -1))], WindowSpec(16, 8))
        assert np.all(persistence_forecast(ds) > ds.y_raw)

    def test_needs_target_series(self):
        ds, _ = generate_synthetic(20, 0)
        with pytest.raises(ValueError):
            persistence_forecast(ds)


class TestHurdat2:
    def test_two_storm_fixture(self, two_storms):
        path, a, b = two_storms
        out = ingest_hurdat2(path)
        assert [s.entity for s in out] == ["AL011980", "EP021980"]
        np.testing.assert_array_equal(out[0].values[:, 0], a)
        expected_b = np.array(b, dtype=float)
        expected_b[10] = 50.0
        np.testing.assert_array_equal(out[1].values[:, 0], expected_b)
        assert out[0].times[1] - out[0].times[0] == np.timedelta64(6, "h")

    def test_gzip_is_transparent(self, two_storms, tmp_path):
        path, a, _ = two_storms
        gz = tmp_path / "h.txt.gz"
        gz.write_bytes(gzip.compress(path.read_bytes()))
        assert data.is_hurdat2(gz)
        np.testing.assert_array_equal(ingest_hurdat2(gz)[0].values[:, 0], a)

    def test_23_records_excluded(self, tmp_path):
        p = tmp_path / "h.txt"
        p.write_text("\n".join(hurdat_storm("AL051990", "SHORT", [50] * 23) + hurdat_storm("AL061990", "LONG", [50] * 24)))
        assert [s.entity for s in ingest_hurdat2(p)] == ["AL061990"]

    def test_off_synoptic_rows_dropped(self, tmp_path):
        extra = [
            "19800807, 1230, L, HU, 11.7N,  52.8W, 120, 1009,    0,    0,    0,    0,    0,    0,    0,    0,"
            "    0,    0,    0,    0, -999"
        ]
        p = tmp_path / "h.txt"
        p.write_text("\n".join(hurdat_storm("AL011980", "ALLEN", [50] * 24, extra=extra)))
        s = ingest_hurdat2(p)[0]
        assert len(s) == 24 and s.values.max() == 50

    def test_malformed_header(self, tmp_path):
        p = tmp_path / "h.txt"
        p.write_text("\n".join(hurdat_storm("AL011980", "ALLEN", [50] * 24) + ["garbage line"]))
        with pytest.raises(ParseError) as exc:
            ingest_hurdat2(p)
        assert exc.value.lineno == 26

    def test_malformed_row(self, tmp_path):
        lines = hurdat_storm("AL011980", "ALLEN", [50] * 24)
        lines[5] = lines[5].replace(" 50,", " xx,")
        p = tmp_path / "h.txt"
        p.write_text("\n".join(lines))
        with pytest.raises(ParseError) as exc:
            ingest_hurdat2(p)
        assert exc.value.lineno == 6

    def test_truncated_storm(self, tmp_path):
        lines = hurdat_storm("AL011980", "ALLEN", [50] * 24)[:-3]
        p = tmp_path / "h.txt"
        p.write_text("\n".join(lines))
        with pytest.raises(ParseError, match="ended"):
            ingest_hurdat2(p)

    def test_bundled_archive(self, caplog):
        from helpers import HURDAT2

        with caplog.at_level(logging.INFO, logger="gevforecast.data"):
            storms = ingest_hurdat2(HURDAT2)
        assert len(storms) > 500
        assert "kept" in caplog.text
        assert len(window(storms, data.HURRICANE_WINDOWS)) > 0


class TestCsv:
    def write(self, tmp_path, text):
        p = tmp_path / "d.csv"
        p.write_text(text)
        return p

    def test_three_rows(self, tmp_path):
        p = self.write(tmp_path, "timestamp,value\n2020-01-01T00:00,1\n2020-01-01T01:00,2\n2020-01-01T02:00,3\n")
        (s,) = ingest_csv(p)
        np.testing.assert_array_equal(s.values[:, 0], [1, 2, 3])

    def test_sorted(self, tmp_path):
        p = self.write(tmp_path, "timestamp,value\n2020-01-03,3\n2020-01-01,1\n2020-01-02,2\n")
        np.testing.assert_array_equal(ingest_csv(p)[0].values[:, 0], [1, 2, 3])

    def test_two_entities(self, tmp_path):
        p = self.write(tmp_path, "site;timestamp;value\na;2020-01-01;1\nb;2020-01-01;10\na;2020-01-02;2\nb;2020-01-02;20\n")
        out = ingest_csv(p, CsvSchema(entity_col="site", delimiter=";"))
        assert {s.entity: s.values[:, 0].tolist() for s in out} == {"a": [1, 2], "b": [10, 20]}

    def test_gap_policies(self, tmp_path):
        p = self.write(tmp_path, "timestamp,value\n1,1\n2,\n3,3\n4,NA\n")
        np.testing.assert_array_equal(ingest_csv(p)[0].values[:, 0], [1, 2, 3])
        np.testing.assert_array_equal(ingest_csv(p, CsvSchema(gap_policy="drop"))[0].values[:, 0], [1, 3])

    def test_bad_rows_reported(self, tmp_path):
        p = self.write(tmp_path, "timestamp,value\n1,1\n2,abc\nnope,3\n4,4\n")
        with pytest.raises(ParseError, match="2 unparseable rows") as exc:
            ingest_csv(p)
        assert exc.value.lineno == 3

    def test_missing_column(self, tmp_path):
        p = self.write(tmp_path, "time,value\n1,1\n")
        with pytest.raises(ParseError, match="missing"):
            ingest_csv(p)

    def test_load_dataset_dispatch(self, tmp_path):
        rows = "\n".join(f"{k},{k % 7}" for k in range(240))
        p = self.write(tmp_path, "timestamp,value\n" + rows + "\n")
        ds = data.load_dataset(p, WindowSpec(16, 8))
        assert len(ds) == 10
        with pytest.raises(FileNotFoundError):
            data.load_dataset(tmp_path / "missing.csv")


@pytest.fixture(scope="module")
def big():
    return generate_synthetic(8192, 7)


class TestSynthetic:
    def test_shape(self, big):
        ds, truth = big
        assert ds.x_raw.shape == (8192, 1, 6) and truth.y.shape == (8192,)
        assert np.all((truth.x >= 0) & (truth.x < 1))
        assert np.all(truth.sigma > 0)
        lo, hi = data.SYNTH_XI_RANGE
        assert np.all((truth.xi > lo) & (truth.xi < hi))

    def test_deterministic(self):
        a, ta = generate_synthetic(300, 3)
        b, tb = generate_synthetic(300, 3)
        np.testing.assert_array_equal(a.y_raw, b.y_raw)
        np.testing.assert_array_equal(ta.w_xi, tb.w_xi)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            generate_synthetic(0, 0)

    def test_ks_per_parameter_bin(self, big):
        """Probability-integral transform under the stored truth is uniform.

        Samples are grouped 100 at a time by nearest true parameters (sorted on
        the shape, then scale) and each group is tested against U(0, 1).
        """
        _, truth = big
        pit = gev.cdf(truth.params(), truth.y)
        order = np.lexsort((truth.sigma, truth.xi))
        bins = [order[k : k + 100] for k in range(0, len(order) - 99, 100)]
        passed = [stats.kstest(pit[b], "uniform").pvalue > 0.01 for b in bins]
        assert np.mean(passed) >= 0.95

    def test_truth_beats_global_fit(self, big):
        _, truth = big
        fit = fit_global(truth.y)
        assert gev.log_likelihood(truth.params(), truth.y) / 8192 > -fit.nll / 8192

    def test_truth_round_trip(self, big, tmp_path):
        _, truth = big
        truth.save(tmp_path / "t.npz")
        back = data.SyntheticTruth.load(tmp_path / "t.npz")
        np.testing.assert_array_equal(back.xi, truth.xi)
        assert back.seed == 7
