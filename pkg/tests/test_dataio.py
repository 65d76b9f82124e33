"""CSV ingestion, splitting, and the synthetic recording generator."""

import numpy as np
import pytest

from motortemp.dataio import (
    ATTRIBUTES,
    ConfigError,
    CsvParseError,
    ProfileFrame,
    SchemaError,
    load_csv,
    save_csv,
    split,
    synthesize,
)


def _write_csv(path, header, rows):
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")


def _rows(pid, count, base=1.0):
    return [[pid] + [base + 0.1 * (i + j) for j in range(len(ATTRIBUTES))]
            for i in range(count)]


class TestLoadCsv:
    def test_groups_rows_by_profile(self, tmp_path):
        path = tmp_path / "rec.csv"
        _write_csv(path, ["profile_id", *ATTRIBUTES],
                   _rows(1, 4) + _rows(65, 2, base=5.0))
        frames = load_csv(path)
        assert [f.profile_id for f in frames] == [1, 65]
        assert [len(f) for f in frames] == [4, 2]
        assert frames[0].columns["ambient"][0] == pytest.approx(1.0)
        assert frames[1].columns["ambient"][0] == pytest.approx(5.0)

    def test_extra_column_warns_but_loads(self, tmp_path):
        path = tmp_path / "rec.csv"
        rows = [[r[0], 99.0] + r[1:] for r in _rows(1, 3)]
        _write_csv(path, ["profile_id", "bogus", *ATTRIBUTES], rows)
        with pytest.warns(UserWarning, match="bogus"):
            frames = load_csv(path)
        assert len(frames) == 1
        assert "bogus" not in frames[0].columns

    def test_missing_column_is_schema_error(self, tmp_path):
        path = tmp_path / "rec.csv"
        partial = [a for a in ATTRIBUTES if a != "torque"]
        _write_csv(path, ["profile_id", *partial],
                   [[1] + [0.0] * len(partial)])
        with pytest.raises(SchemaError, match="torque"):
            load_csv(path)

    def test_non_numeric_cell_reports_row(self, tmp_path):
        path = tmp_path / "rec.csv"
        rows = _rows(1, 3)
        rows[1][3] = "oops"
        _write_csv(path, ["profile_id", *ATTRIBUTES], rows)
        with pytest.raises(CsvParseError, match="row 3"):
            load_csv(path)

    def test_empty_file_is_schema_error(self, tmp_path):
        path = tmp_path / "rec.csv"
        path.write_text("")
        with pytest.raises(SchemaError):
            load_csv(path)

    def test_roundtrip_is_exact(self, tmp_path):
        frames = synthesize(seed=4, profiles=2, length=50)
        path = tmp_path / "out.csv"
        save_csv(frames, path)
        reloaded = load_csv(path)
        assert len(reloaded) == 2
        for orig, back in zip(frames, reloaded):
            assert orig.profile_id == back.profile_id
            for name in ATTRIBUTES:
                np.testing.assert_array_equal(
                    orig.columns[name], back.columns[name]
                )


class TestProfileFrame:
    def test_rejects_mismatched_lengths(self):
        with pytest.raises(ValueError, match="lengths differ"):
            ProfileFrame(1, {"a": np.zeros(3), "b": np.zeros(2)})

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            ProfileFrame(1, {"a": np.zeros(0)})

    def test_require_names_missing(self):
        f = ProfileFrame(7, {"a": np.zeros(2)})
        with pytest.raises(SchemaError, match="coolant"):
            f.require(["a", "coolant"])


class TestSplit:
    def test_partitions_by_id(self):
        frames = synthesize(seed=1, profiles=5, length=10)
        out = split(frames, [2, 5])
        assert [f.profile_id for f in out.train] == [1, 3, 4]
        assert [f.profile_id for f in out.test] == [2, 5]

    def test_empty_test_set_allowed(self):
        frames = synthesize(seed=1, profiles=3, length=10)
        out = split(frames, [])
        assert len(out.train) == 3 and out.test == []

    def test_unknown_id_is_config_error(self):
        frames = synthesize(seed=1, profiles=3, length=10)
        with pytest.raises(ConfigError, match="65"):
            split(frames, [65])


class TestSynthesize:
    def test_deterministic(self):
        a = synthesize(seed=9, profiles=2, length=100)
        b = synthesize(seed=9, profiles=2, length=100)
        for fa, fb in zip(a, b):
            for name in ATTRIBUTES:
                np.testing.assert_array_equal(
                    fa.columns[name], fb.columns[name]
                )

    def test_seed_changes_output(self):
        a = synthesize(seed=9, profiles=1, length=100)[0]
        b = synthesize(seed=10, profiles=1, length=100)[0]
        assert not np.array_equal(a.columns["pm"], b.columns["pm"])

    def test_profiles_are_independent_streams(self):
        one = synthesize(seed=9, profiles=1, length=100)[0]
        two = synthesize(seed=9, profiles=2, length=100)
        np.testing.assert_array_equal(
            one.columns["i_q"], two[0].columns["i_q"]
        )
        assert not np.array_equal(
            two[0].columns["i_q"], two[1].columns["i_q"]
        )

    def test_schema_and_shapes(self):
        frames = synthesize(seed=0, profiles=3, length=42)
        assert [f.profile_id for f in frames] == [1, 2, 3]
        for f in frames:
            assert set(f.columns) == set(ATTRIBUTES)
            assert all(len(col) == 42 for col in f.columns.values())
            assert all(np.isfinite(col).all() for col in f.columns.values())

    def test_magnet_lags_winding(self):
        frame = synthesize(seed=3, profiles=1, length=4000)[0]
        pm = frame.columns["pm"]
        winding = frame.columns["stator_winding"]

        def corr_at(tau):
            # correlation of pm[t] against winding[t - tau]
            if tau > 0:
                return np.corrcoef(pm[tau:], winding[:-tau])[0, 1]
            if tau < 0:
                return np.corrcoef(pm[:tau], winding[-tau:])[0, 1]
            return np.corrcoef(pm, winding)[0, 1]

        lags = range(-300, 301, 5)
        best = max(lags, key=corr_at)
        assert best > 0, f"peak cross-correlation at lag {best}"

    def test_bad_arguments(self):
        with pytest.raises(ConfigError):
            synthesize(seed=0, profiles=0, length=10)
        with pytest.raises(ConfigError):
            synthesize(seed=0, profiles=1, length=1)
