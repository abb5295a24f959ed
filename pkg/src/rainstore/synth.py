"""Deterministic synthetic gridded datasets in the ingest format.

Stands in for the real archives at desk scale. Every generated dataset
carries a ``truth.json`` sidecar recording the generating parameters so
statistical tests can be written as oracle tests.
"""

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import ingest
from .grid import make_grid
from .store import StoreHeader, VariableSpec, _layout_variables, parse_timestamp, write_store

GENERATOR_KINDS = ("constant", "linear-in-lon", "seasonal-sine", "ar1-noise",
                   "mixed-exponential-rain")


class SynthError(ValueError):
    pass


@dataclass
class SynthVariable:
    name: str
    generator: str
    kind: str = "temporal"
    units: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.generator not in GENERATOR_KINDS:
            raise SynthError("unknown generator kind %r (have %s)"
                             % (self.generator, ", ".join(GENERATOR_KINDS)))


@dataclass
class SynthConfig:
    res_deg: float = 5.625
    n_steps: int = 100
    time_start: str = "2017-01-01T00:00:00Z"
    time_step_s: int = 3600
    seed: int = 0
    variables: list = field(default_factory=list)

    @classmethod
    def from_json(cls, obj):
        variables = [SynthVariable(name=v["name"], generator=v["generator"],
                                   kind=v.get("kind", "temporal"),
                                   units=v.get("units", ""),
                                   params=v.get("params", {}))
                     for v in obj["variables"]]
        return cls(res_deg=float(obj.get("res_deg", 5.625)),
                   n_steps=int(obj.get("n_steps", 100)),
                   time_start=obj.get("time_start", "2017-01-01T00:00:00Z"),
                   time_step_s=int(obj.get("time_step_s", 3600)),
                   seed=int(obj.get("seed", 0)),
                   variables=variables)


def _frame_generator(var, grid, n_steps, rng):
    """Yield float32 frames one at a time; bounded memory at any scale."""
    shape = (grid.n_lat, grid.n_lon)
    p = var.params
    if var.generator == "constant":
        value = float(p.get("value", 0.0))
        for _ in range(n_steps):
            yield np.full(shape, value, dtype=np.float32)
    elif var.generator == "linear-in-lon":
        slope = float(p.get("slope", 1.0))
        intercept = float(p.get("intercept", 0.0))
        plane = (slope * grid.lon_centers[None, :] + intercept
                 + np.zeros((grid.n_lat, 1)))
        for _ in range(n_steps):
            yield plane.astype(np.float32)
    elif var.generator == "seasonal-sine":
        offset = float(p.get("offset", 0.0))
        amplitude = float(p.get("amplitude", 1.0))
        period = float(p.get("period_steps", max(n_steps, 1)))
        lat_gradient = float(p.get("lat_gradient", 0.0))
        base = lat_gradient * grid.lat_centers[:, None] + np.zeros((1, grid.n_lon))
        for t in range(n_steps):
            value = offset + amplitude * np.sin(2 * np.pi * t / period)
            yield (base + value).astype(np.float32)
    elif var.generator == "ar1-noise":
        phi = float(p.get("phi", 0.8))
        mean = float(p.get("mean", 0.0))
        std = float(p.get("std", 1.0))
        eps_std = std * np.sqrt(1.0 - phi * phi)
        x = mean + std * rng.standard_normal(shape)
        yield x.astype(np.float32)
        for _ in range(n_steps - 1):
            x = mean + phi * (x - mean) + eps_std * rng.standard_normal(shape)
            yield x.astype(np.float32)
    elif var.generator == "mixed-exponential-rain":
        props = np.asarray(p.get("proportions", (0.9, 0.07, 0.02, 0.01)),
                           dtype=np.float64)
        props = props / props.sum()
        tail_scale = float(p.get("tail_scale", 20.0))
        edges = (0.0, 2.0, 10.0, 50.0)
        for _ in range(n_steps):
            cls = rng.choice(4, size=shape, p=props)
            u = rng.random(shape)
            frame = np.empty(shape)
            for idx in range(3):
                lo, hi = edges[idx], (edges + (50.0,))[idx + 1]
                sel = cls == idx
                frame[sel] = lo + u[sel] * (hi - lo)
            sel = cls == 3
            frame[sel] = 50.0 + rng.exponential(tail_scale, size=int(sel.sum()))
            yield frame.astype(np.float32)


def _truth_entry(var):
    entry = {"generator": var.generator, "kind": var.kind}
    entry.update(var.params)
    if var.generator == "ar1-noise":
        entry.setdefault("phi", 0.8)
        entry.setdefault("mean", 0.0)
        entry.setdefault("std", 1.0)
    if var.generator == "mixed-exponential-rain":
        entry.setdefault("proportions", [0.9, 0.07, 0.02, 0.01])
    return entry


def generate(config, out_dir):
    """Write an ingest-format dataset plus a truth sidecar; byte-identical
    output for identical config and seed."""
    grid = make_grid(config.res_deg)
    rng = np.random.default_rng(config.seed)
    os.makedirs(out_dir, exist_ok=True)
    truth = {"seed": config.seed, "res_deg": config.res_deg,
             "n_steps": config.n_steps, "variables": {}}
    for var in config.variables:
        n = config.n_steps if var.kind == "temporal" else 1
        frames = np.stack(list(_frame_generator(var, grid, n, rng)))
        ingest.write_variable(
            out_dir, var.name, var.kind, var.units, config.res_deg, frames,
            time_start=parse_timestamp(config.time_start),
            time_step_s=config.time_step_s,
            level_hpa=var.params.get("level_hpa"),
        )
        truth["variables"][var.name] = _truth_entry(var)
    with open(os.path.join(out_dir, "truth.json"), "w") as f:
        json.dump(truth, f, indent=2)
        f.write("\n")
    return out_dir


def generate_store(config, out_prefix):
    """Generate directly into store files, streaming frame by frame.

    Skips the intermediate ingest copy; used for large benchmark stores."""
    grid = make_grid(config.res_deg)
    header = StoreHeader(
        grid=grid,
        time_start=parse_timestamp(config.time_start),
        time_step_s=config.time_step_s,
        n_steps=config.n_steps,
        variables=[VariableSpec(name=v.name, kind=v.kind, units=v.units)
                   for v in config.variables],
    )
    _layout_variables(header.variables, header)
    rng = np.random.default_rng(config.seed)
    by_name = {v.name: v for v in config.variables}

    def frames_of(spec):
        var = by_name[spec.name]
        n = config.n_steps if var.kind == "temporal" else 1
        return _frame_generator(var, grid, n, rng)

    return write_store(out_prefix, header, frames_of)


def load_truth(ingest_dir):
    with open(os.path.join(ingest_dir, "truth.json")) as f:
        return json.load(f)
