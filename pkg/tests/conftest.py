import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rainstore import store as store_mod
from rainstore import synth


def make_store(tmp_path, variables, res_deg=45.0, n_steps=24, seed=0,
               time_start="2017-01-01T00:00:00Z", time_step_s=3600,
               name="store"):
    cfg = synth.SynthConfig(res_deg=res_deg, n_steps=n_steps, seed=seed,
                            time_start=time_start, time_step_s=time_step_s,
                            variables=variables)
    return synth.generate_store(cfg, str(tmp_path / name))


def write_raw_store(tmp_path, arrays_by_var, res_deg=45.0,
                    time_start="2017-01-01T00:00:00Z", time_step_s=3600,
                    name="raw"):
    """Store whose temporal frames are given explicitly (t, lat, lon)."""
    from rainstore.grid import make_grid

    grid = make_grid(res_deg)
    first = next(iter(arrays_by_var.values()))
    header = store_mod.StoreHeader(
        grid=grid,
        time_start=store_mod.parse_timestamp(time_start),
        time_step_s=time_step_s,
        n_steps=first.shape[0] if first.ndim == 3 else 1,
        variables=[
            store_mod.VariableSpec(name=k, kind="temporal" if v.ndim == 3 else "static")
            for k, v in arrays_by_var.items()
        ],
    )
    store_mod._layout_variables(header.variables, header)

    def frames_of(var):
        arr = arrays_by_var[var.name]
        return arr if arr.ndim == 3 else arr[None]

    return store_mod.write_store(str(tmp_path / name), header, frames_of)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
