import json
import os
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from rainstore import ingest, synth
from rainstore.grid import make_grid
from rainstore.store import (
    ALIGNMENT,
    BadMagicError,
    BadVersionError,
    FrameRangeError,
    SizeMismatchError,
    StoreError,
    UnknownVariableError,
    UnsupportedDtypeError,
    accumulate_time,
    convert,
    open_store,
)

from conftest import make_store, write_raw_store
from oracles import bilinear_regrid_reference


def _ingest_dataset(tmp_path, arrays_by_var, res_deg=45.0):
    d = tmp_path / "ingest"
    from rainstore.store import parse_timestamp

    for name, arr in arrays_by_var.items():
        kind = "temporal" if arr.ndim == 3 else "static"
        ingest.write_variable(str(d), name, kind, "", res_deg, arr,
                              time_start=parse_timestamp("2017-01-01"),
                              time_step_s=3600)
    return str(d)


class TestConvert:
    def test_static_roundtrip_alignment(self, tmp_path):
        g = make_grid(90.0)  # 2x4 grid
        values = np.arange(8, dtype=np.float32).reshape(2, 4)
        d = _ingest_dataset(tmp_path, {"oro": values}, res_deg=90.0)
        handle = convert(d, str(tmp_path / "st"))
        var = handle.header.variable("oro")
        assert var.offset_bytes % ALIGNMENT == 0
        assert var.region_bytes(handle.header) == 32
        assert np.array_equal(handle.read_frame("oro").values, values)

    def test_second_variable_offset(self, tmp_path):
        g = make_grid(45.0)
        shape = (3, g.n_lat, g.n_lon)
        d = _ingest_dataset(tmp_path, {
            "a": np.zeros(shape, np.float32),
            "b": np.ones(shape, np.float32),
        })
        handle = convert(d, str(tmp_path / "st"))
        a = handle.header.variable("a")
        b = handle.header.variable("b")
        raw = a.offset_bytes + 3 * g.n_lat * g.n_lon * 4
        expected = (raw + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT
        assert b.offset_bytes == expected

    def test_roundtrip_bit_exact(self, tmp_path, rng):
        g = make_grid(45.0)
        frames = rng.normal(size=(5, g.n_lat, g.n_lon)).astype(np.float32)
        static = rng.normal(size=(g.n_lat, g.n_lon)).astype(np.float32)
        d = _ingest_dataset(tmp_path, {"tp": frames, "lsm": static})
        handle = convert(d, str(tmp_path / "st"))
        for t in range(5):
            assert handle.read_frame("tp", t).values.tobytes() == frames[t].tobytes()
        assert handle.read_frame("lsm").values.tobytes() == static.tobytes()

    def test_regrid_on_convert_matches_oracle(self, tmp_path, rng):
        src = make_grid(11.25)
        dst = make_grid(45.0)
        frames = rng.normal(size=(2, src.n_lat, src.n_lon)).astype(np.float32)
        d = _ingest_dataset(tmp_path, {"q": frames}, res_deg=11.25)
        handle = convert(d, str(tmp_path / "st"), grid=dst)
        for t in range(2):
            ref = bilinear_regrid_reference(
                src.lat_centers, src.lon_centers,
                frames[t].astype(np.float64),
                dst.lat_centers, dst.lon_centers)
            assert np.allclose(handle.read_frame("q", t).values, ref, rtol=1e-6,
                               atol=1e-7)

    def test_inconsistent_timestamps_named(self, tmp_path):
        g = make_grid(90.0)
        from rainstore.store import parse_timestamp

        d = tmp_path / "ingest"
        ingest.write_variable(str(d), "a", "temporal", "", 90.0,
                              np.zeros((2, 2, 4), np.float32),
                              time_start=parse_timestamp("2017-01-01"),
                              time_step_s=3600)
        ingest.write_variable(str(d), "b", "temporal", "", 90.0,
                              np.zeros((2, 2, 4), np.float32),
                              time_start=parse_timestamp("2017-06-01"),
                              time_step_s=3600)
        with pytest.raises(StoreError, match="'b'"):
            convert(str(d), str(tmp_path / "st"))


class TestOpenStore:
    def _store(self, tmp_path):
        return make_store(tmp_path, [synth.SynthVariable("x", "ar1-noise")],
                          n_steps=4)

    def test_header_roundtrip(self, tmp_path):
        handle = self._store(tmp_path)
        reopened = open_store(handle.prefix)
        assert reopened.header.to_json() == handle.header.to_json()

    def test_truncated_data_file(self, tmp_path):
        handle = self._store(tmp_path)
        path = handle.prefix + ".bin"
        with open(path, "r+b") as f:
            f.truncate(os.path.getsize(path) - 4)
        with pytest.raises(SizeMismatchError):
            open_store(handle.prefix)

    def test_bad_magic(self, tmp_path):
        handle = self._store(tmp_path)
        self._patch_header(handle, "magic", "NOTASTORE")
        with pytest.raises(BadMagicError):
            open_store(handle.prefix)

    def test_bad_version(self, tmp_path):
        handle = self._store(tmp_path)
        self._patch_header(handle, "version", 99)
        with pytest.raises(BadVersionError):
            open_store(handle.prefix)

    def test_unsupported_dtype(self, tmp_path):
        handle = self._store(tmp_path)
        with open(handle.prefix + ".json") as f:
            obj = json.load(f)
        obj["variables"][0]["dtype"] = ">f8"
        with open(handle.prefix + ".json", "w") as f:
            json.dump(obj, f)
        with pytest.raises(UnsupportedDtypeError):
            open_store(handle.prefix)

    @staticmethod
    def _patch_header(handle, key, value):
        with open(handle.prefix + ".json") as f:
            obj = json.load(f)
        obj[key] = value
        with open(handle.prefix + ".json", "w") as f:
            json.dump(obj, f)

    def test_open_is_lazy_on_sparse_multi_gb_store(self, tmp_path):
        # header for a ~4 GiB store over a sparse (hole-only) data file:
        # open must not touch the payload, so it stays fast
        g = make_grid(5.625)
        n_steps = 4 * 1024 ** 3 // (g.n_lat * g.n_lon * 4)
        from datetime import timezone, datetime
        from rainstore.store import StoreHeader, VariableSpec, _layout_variables

        header = StoreHeader(grid=g,
                             time_start=datetime(2017, 1, 1, tzinfo=timezone.utc),
                             time_step_s=3600, n_steps=n_steps,
                             variables=[VariableSpec(name="x", kind="temporal")])
        _layout_variables(header.variables, header)
        prefix = str(tmp_path / "big")
        with open(prefix + ".json", "w") as f:
            json.dump(header.to_json(), f)
        with open(prefix + ".bin", "wb") as f:
            f.truncate(header.data_size())
        start = time.monotonic()
        handle = open_store(prefix)
        elapsed = time.monotonic() - start
        assert elapsed < 0.1
        assert handle.header.n_steps == n_steps


class TestReads:
    def test_frame_value_equals_index(self, tmp_path):
        g = make_grid(45.0)
        frames = np.stack([np.full((g.n_lat, g.n_lon), t, np.float32)
                           for t in range(8)])
        handle = write_raw_store(tmp_path, {"x": frames})
        assert (handle.read_frame("x", 5).values == 5).all()

    def test_static_same_for_all_t(self, tmp_path):
        g = make_grid(45.0)
        static = np.arange(g.n_lat * g.n_lon, dtype=np.float32).reshape(g.n_lat, g.n_lon)
        handle = write_raw_store(tmp_path, {
            "x": np.zeros((3, g.n_lat, g.n_lon), np.float32), "oro": static})
        for t in (0, 1, 2):
            assert np.array_equal(handle.read_frame("oro", t).values, static)

    def test_errors(self, tmp_path):
        handle = make_store(tmp_path, [synth.SynthVariable("x", "constant")],
                            n_steps=3)
        with pytest.raises(FrameRangeError):
            handle.read_frame("x", 3)
        with pytest.raises(UnknownVariableError):
            handle.read_frame("nope", 0)

    def test_window_examples(self, tmp_path):
        g = make_grid(45.0)
        frames = np.stack([np.full((g.n_lat, g.n_lon), t, np.float32)
                           for t in range(6)])
        handle = write_raw_store(tmp_path, {"x": frames})
        single = handle.read_window("x", [0])
        assert np.array_equal(single[0], handle.read_frame("x", 0).values)
        strided = handle.read_window("x", [0, 2, 4])
        assert [w[0, 0] for w in strided] == [0, 2, 4]

    def test_window_permutation_matches_per_frame(self, tmp_path, rng):
        g = make_grid(45.0)
        frames = rng.normal(size=(10, g.n_lat, g.n_lon)).astype(np.float32)
        handle = write_raw_store(tmp_path, {"x": frames})
        perm = list(rng.permutation(10))
        window = handle.read_window("x", perm)
        for row, t in zip(window, perm):
            assert np.array_equal(row, handle.read_frame("x", t).values)

    def test_window_validates_before_reading(self, tmp_path):
        handle = make_store(tmp_path, [synth.SynthVariable("x", "constant")],
                            n_steps=3)
        with pytest.raises(FrameRangeError):
            handle.read_window("x", [0, 99])

    def test_concurrent_readers_identical(self, tmp_path, rng):
        g = make_grid(45.0)
        frames = rng.normal(size=(32, g.n_lat, g.n_lon)).astype(np.float32)
        handle = write_raw_store(tmp_path, {"x": frames})
        windows = [list(rng.integers(0, 32, size=5)) for _ in range(40)]
        expected = [handle.read_window("x", w).tobytes() for w in windows]

        def work(w):
            return handle.read_window("x", w).tobytes()

        with ThreadPoolExecutor(max_workers=8) as pool:
            got = list(pool.map(work, windows))
        assert got == expected


class TestAccumulate:
    def test_identity_k1(self, tmp_path, rng):
        g = make_grid(45.0)
        frames = rng.normal(size=(4, g.n_lat, g.n_lon)).astype(np.float32)
        handle = write_raw_store(tmp_path, {"x": frames})
        out = accumulate_time(handle, "x", 1, str(tmp_path / "acc"))
        for t in range(4):
            assert out.read_frame("x", t).values.tobytes() == frames[t].tobytes()

    def test_half_hour_to_hour(self, tmp_path):
        g = make_grid(45.0)
        frames = np.full((2, g.n_lat, g.n_lon), 0.5, np.float32)
        handle = write_raw_store(tmp_path, {"x": frames}, time_step_s=1800)
        out = accumulate_time(handle, "x", 2, str(tmp_path / "acc"))
        assert out.header.n_steps == 1
        assert out.header.time_step_s == 3600
        assert (out.read_frame("x", 0).values == 1.0).all()

    def test_matches_left_to_right_float32_oracle(self, tmp_path, rng):
        g = make_grid(45.0)
        frames = (rng.normal(size=(12, g.n_lat, g.n_lon)) * 100).astype(np.float32)
        handle = write_raw_store(tmp_path, {"x": frames})
        out = accumulate_time(handle, "x", 3, str(tmp_path / "acc"))
        for j in range(4):
            acc = frames[3 * j].copy()
            acc = acc + frames[3 * j + 1]
            acc = acc + frames[3 * j + 2]
            assert out.read_frame("x", j).values.tobytes() == acc.tobytes()

    def test_nan_propagates(self, tmp_path):
        g = make_grid(45.0)
        frames = np.zeros((2, g.n_lat, g.n_lon), np.float32)
        frames[1, 0, 0] = np.nan
        handle = write_raw_store(tmp_path, {"x": frames})
        out = accumulate_time(handle, "x", 2, str(tmp_path / "acc"))
        assert np.isnan(out.read_frame("x", 0).values[0, 0])
        assert out.read_frame("x", 0).values[0, 1] == 0

    def test_non_divisible_rejected(self, tmp_path):
        handle = make_store(tmp_path, [synth.SynthVariable("x", "constant")],
                            n_steps=5)
        with pytest.raises(StoreError):
            accumulate_time(handle, "x", 2, str(tmp_path / "acc"))

    def test_total_sum_conserved(self, tmp_path, rng):
        g = make_grid(45.0)
        frames = rng.integers(0, 8, size=(8, g.n_lat, g.n_lon)).astype(np.float32)
        handle = write_raw_store(tmp_path, {"x": frames})
        out = accumulate_time(handle, "x", 4, str(tmp_path / "acc"))
        total_in = frames.astype(np.float64).sum()
        total_out = sum(out.read_frame("x", t).values.astype(np.float64).sum()
                        for t in range(2))
        # small-integer frames sum exactly in float32
        assert total_in == total_out
