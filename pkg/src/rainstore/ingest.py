"""Portable ingest format: per-variable JSON descriptor + raw float32 frames.

A dataset is a directory containing, for each variable, ``<name>.json`` and
a frame file of raw little-endian float32 values laid out [t][lat][lon]
(temporal) or [lat][lon] (static), latitude index 0 being the northernmost
row. Any producer emitting these two files per variable can feed `convert`.

Descriptor fields::

    {
      "name": "tp", "kind": "temporal", "units": "mm/h",
      "level_hpa": null, "res_deg": 5.625,
      "time_start": "2017-01-01T00:00:00Z", "time_step_s": 3600,
      "n_steps": 240, "frames_file": "tp.f32"
    }

Static variables omit the time fields and hold a single frame.
"""

import json
import os
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .grid import GridSpec, make_grid
from .store import DTYPE, ITEMSIZE, StoreError, format_timestamp, parse_timestamp


@dataclass
class IngestVariable:
    name: str
    kind: str
    units: str
    grid: GridSpec
    frames_path: str
    level_hpa: float | None = None
    time_start: datetime | None = None
    time_step_s: int | None = None
    n_steps: int = 1

    def __post_init__(self):
        expected = self.n_steps * self.grid.n_lat * self.grid.n_lon * ITEMSIZE
        actual = os.path.getsize(self.frames_path)
        if actual != expected:
            raise StoreError(
                "frame file %s is %d bytes, descriptor requires %d"
                % (self.frames_path, actual, expected)
            )

    def read_frame(self, t):
        per_frame = self.grid.n_lat * self.grid.n_lon
        mm = np.memmap(self.frames_path, dtype=DTYPE, mode="r")
        frame = mm[t * per_frame:(t + 1) * per_frame]
        return np.array(frame).reshape(self.grid.n_lat, self.grid.n_lon)


def read_ingest_dir(path):
    """Load all variable descriptors in a dataset directory, sorted by name."""
    variables = []
    for entry in sorted(os.listdir(path)):
        if not entry.endswith(".json") or entry == "truth.json":
            continue
        with open(os.path.join(path, entry)) as f:
            obj = json.load(f)
        if "name" not in obj or "kind" not in obj:
            continue
        kind = obj["kind"]
        if kind not in ("temporal", "static"):
            raise StoreError("variable %r has unknown kind %r" % (obj["name"], kind))
        var = IngestVariable(
            name=obj["name"],
            kind=kind,
            units=obj.get("units", ""),
            grid=make_grid(float(obj["res_deg"])),
            frames_path=os.path.join(path, obj["frames_file"]),
            level_hpa=obj.get("level_hpa"),
            time_start=(parse_timestamp(obj["time_start"])
                        if kind == "temporal" else None),
            time_step_s=(int(obj["time_step_s"]) if kind == "temporal" else None),
            n_steps=int(obj.get("n_steps", 1)) if kind == "temporal" else 1,
        )
        variables.append(var)
    return variables


def write_variable(out_dir, name, kind, units, res_deg, frames,
                   time_start=None, time_step_s=None, level_hpa=None):
    """Write one variable (descriptor + frame file) into an ingest directory."""
    os.makedirs(out_dir, exist_ok=True)
    frames = np.ascontiguousarray(frames, dtype=DTYPE)
    if frames.ndim == 2:
        frames = frames[None]
    n_steps = frames.shape[0]
    frames_file = name + ".f32"
    with open(os.path.join(out_dir, frames_file), "wb") as f:
        f.write(frames.tobytes())
    desc = {
        "name": name,
        "kind": kind,
        "units": units,
        "level_hpa": level_hpa,
        "res_deg": res_deg,
        "frames_file": frames_file,
    }
    if kind == "temporal":
        desc["time_start"] = format_timestamp(time_start)
        desc["time_step_s"] = int(time_step_s)
        desc["n_steps"] = int(n_steps)
    with open(os.path.join(out_dir, name + ".json"), "w") as f:
        json.dump(desc, f, indent=2)
        f.write("\n")
