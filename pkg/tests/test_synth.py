import json

import numpy as np
import pytest

from rainstore import synth
from rainstore.ingest import read_ingest_dir
from rainstore.sampler import class_indices
from rainstore.store import open_store

from conftest import make_store


def _config(seed=0, n_steps=20, variables=None):
    return synth.SynthConfig(
        res_deg=22.5, n_steps=n_steps, seed=seed,
        variables=variables or [
            synth.SynthVariable("tp", "mixed-exponential-rain",
                                units="mm/h"),
            synth.SynthVariable("t2m", "ar1-noise",
                                params={"mean": 280.0, "std": 5.0}),
            synth.SynthVariable("orog", "linear-in-lon", kind="static"),
        ])


class TestGenerators:
    def test_unknown_generator_rejected(self):
        with pytest.raises(synth.SynthError, match="perlin"):
            synth.SynthVariable("x", "perlin")

    def test_constant(self, tmp_path):
        handle = make_store(tmp_path, [
            synth.SynthVariable("c", "constant", params={"value": -3.5})],
            n_steps=5)
        assert np.all(handle.read_window("c", range(5)) == -3.5)

    def test_linear_in_lon(self, tmp_path):
        handle = make_store(tmp_path, [
            synth.SynthVariable("x", "linear-in-lon",
                                params={"slope": 2.0, "intercept": 1.0})],
            n_steps=2)
        g = handle.grid
        want = 2.0 * g.lon_centers[None, :] + 1.0
        got = handle.read_frame("x", 0).values
        assert np.allclose(got, np.broadcast_to(want, got.shape), atol=1e-4)

    def test_seasonal_sine_period(self, tmp_path):
        handle = make_store(tmp_path, [
            synth.SynthVariable("s", "seasonal-sine",
                                params={"offset": 1.0, "amplitude": 2.0,
                                        "period_steps": 8})],
            n_steps=16)
        a = handle.read_frame("s", 3).values
        b = handle.read_frame("s", 11).values
        assert np.array_equal(a, b)
        assert np.allclose(handle.read_frame("s", 2).values, 3.0, atol=1e-6)

    def test_ar1_moments(self, tmp_path):
        handle = make_store(tmp_path, [
            synth.SynthVariable("n", "ar1-noise",
                                params={"mean": 10.0, "std": 2.0,
                                        "phi": 0.5})],
            res_deg=11.25, n_steps=400)
        w = handle.read_window("n", range(400)).astype(np.float64)
        n = w.size
        assert abs(w.mean() - 10.0) < 3 * 2.0 / np.sqrt(n / 4)
        assert abs(w.std() - 2.0) < 0.05

    def test_rain_class_proportions_3sigma(self, tmp_path):
        props = (0.9, 0.07, 0.02, 0.01)
        handle = make_store(tmp_path, [
            synth.SynthVariable("tp", "mixed-exponential-rain",
                                params={"proportions": list(props)})],
            res_deg=11.25, n_steps=200)
        w = handle.read_window("tp", range(200))
        cls = class_indices(w)
        n = w.size
        for idx, p in enumerate(props):
            count = int((cls == idx).sum())
            sigma = np.sqrt(n * p * (1 - p))
            assert abs(count - n * p) < 3 * sigma, (idx, count, n * p)
        # membership is exact by construction: class 3 values all >= 50
        assert np.all(w[cls == 3] >= 50.0)
        assert np.all(w[cls == 0] < 2.0)


class TestGenerate:
    def test_ingest_round_trip(self, tmp_path):
        cfg = _config()
        synth.generate(cfg, str(tmp_path / "ing"))
        variables = read_ingest_dir(str(tmp_path / "ing"))
        assert sorted(v.name for v in variables) == ["orog", "t2m", "tp"]
        tp = next(v for v in variables if v.name == "tp")
        assert tp.n_steps == 20
        assert tp.units == "mm/h"

    def test_truth_sidecar(self, tmp_path):
        cfg = _config()
        synth.generate(cfg, str(tmp_path / "ing"))
        truth = synth.load_truth(str(tmp_path / "ing"))
        assert truth["seed"] == 0
        per_var = truth["variables"]
        assert per_var["t2m"]["mean"] == 280.0
        assert per_var["t2m"]["phi"] == 0.8
        assert per_var["tp"]["proportions"] == [0.9, 0.07, 0.02, 0.01]
        with open(tmp_path / "ing" / "truth.json") as f:
            assert json.load(f) == truth

    def test_deterministic_byte_identical(self, tmp_path):
        for name in ("a", "b"):
            synth.generate(_config(seed=42), str(tmp_path / name))
        for fn in sorted((tmp_path / "a").iterdir()):
            assert fn.read_bytes() == (tmp_path / "b" / fn.name).read_bytes()

    def test_seed_changes_noise(self, tmp_path):
        synth.generate(_config(seed=1), str(tmp_path / "a"))
        synth.generate(_config(seed=2), str(tmp_path / "b"))
        assert (tmp_path / "a" / "t2m.f32").read_bytes() != \
            (tmp_path / "b" / "t2m.f32").read_bytes()


class TestGenerateStore:
    def test_matches_generate_plus_convert(self, tmp_path):
        from rainstore.store import convert

        cfg = _config(seed=9)
        synth.generate(cfg, str(tmp_path / "ing"))
        convert(str(tmp_path / "ing"), str(tmp_path / "via_ingest"))
        direct = synth.generate_store(cfg, str(tmp_path / "direct"))
        other = open_store(str(tmp_path / "via_ingest"))
        for name in ("tp", "t2m"):
            assert np.array_equal(direct.read_window(name, range(20)),
                                  other.read_window(name, range(20)))
        assert np.array_equal(direct.read_frame("orog").values,
                              other.read_frame("orog").values)

    def test_header_metadata(self, tmp_path):
        handle = make_store(tmp_path, [
            synth.SynthVariable("tp", "constant", units="mm/h")],
            res_deg=22.5, n_steps=7, time_step_s=7200)
        h = handle.header
        assert h.n_steps == 7
        assert h.time_step_s == 7200
        assert h.variable("tp").units == "mm/h"
        assert h.grid.res_deg == 22.5
