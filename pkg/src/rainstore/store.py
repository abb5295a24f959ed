"""On-disk memory-mapped datastore: header + contiguous dense float32 regions.

Layout: one data file holding every variable at a 64-byte-aligned offset,
time-major [t][lat][lon] for temporal variables and [lat][lon] for static
ones, 32-bit little-endian IEEE-754 floats. The header is a separate JSON
text file. Stores are read-only after open and safe to share across
threads and processes.
"""

import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .grid import Field, GridSpec, regrid_bilinear

MAGIC = "RAINSTORE"
VERSION = 1
ALIGNMENT = 64
DTYPE = "<f4"
ITEMSIZE = 4

HEADER_SUFFIX = ".json"
DATA_SUFFIX = ".bin"


class StoreError(Exception):
    """Base class for datastore failures."""


class BadMagicError(StoreError):
    pass


class BadVersionError(StoreError):
    pass


class SizeMismatchError(StoreError):
    pass


class UnsupportedDtypeError(StoreError):
    pass


class UnknownVariableError(StoreError, KeyError):
    pass


class FrameRangeError(StoreError, IndexError):
    pass


def parse_timestamp(text):
    """ISO-8601 UTC timestamp; a bare date means midnight UTC."""
    ts = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def format_timestamp(ts):
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class VariableSpec:
    name: str
    kind: str  # "temporal" | "static"
    units: str = ""
    level_hpa: float | None = None
    offset_bytes: int = 0
    dtype: str = DTYPE

    @property
    def layout(self):
        return "[t][lat][lon]" if self.kind == "temporal" else "[lat][lon]"

    def region_bytes(self, header):
        per_frame = header.grid.n_lat * header.grid.n_lon * ITEMSIZE
        return per_frame * (header.n_steps if self.kind == "temporal" else 1)

    def to_json(self):
        return {
            "name": self.name,
            "kind": self.kind,
            "units": self.units,
            "level_hpa": self.level_hpa,
            "offset_bytes": self.offset_bytes,
            "dtype": self.dtype,
            "layout": self.layout,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            name=obj["name"],
            kind=obj["kind"],
            units=obj.get("units", ""),
            level_hpa=obj.get("level_hpa"),
            offset_bytes=int(obj["offset_bytes"]),
            dtype=obj.get("dtype", DTYPE),
        )


@dataclass
class StoreHeader:
    grid: GridSpec
    time_start: datetime
    time_step_s: int
    n_steps: int
    variables: list = field(default_factory=list)
    magic: str = MAGIC
    version: int = VERSION

    def variable(self, name):
        for v in self.variables:
            if v.name == name:
                return v
        raise UnknownVariableError("unknown variable %r" % name)

    def var_names(self):
        return [v.name for v in self.variables]

    def frame_index(self, ts):
        """Frame index of a UTC timestamp; raises if off the time lattice."""
        delta = (ts - self.time_start).total_seconds()
        idx = delta / self.time_step_s
        if abs(idx - round(idx)) > 1e-9:
            raise FrameRangeError(
                "timestamp %s not on the store time lattice" % format_timestamp(ts)
            )
        idx = int(round(idx))
        if not 0 <= idx < self.n_steps:
            raise FrameRangeError(
                "timestamp %s outside stored range" % format_timestamp(ts)
            )
        return idx

    def timestamp(self, t):
        from datetime import timedelta

        return self.time_start + timedelta(seconds=t * self.time_step_s)

    def data_size(self):
        return max(v.offset_bytes + v.region_bytes(self) for v in self.variables)

    def to_json(self):
        return {
            "magic": self.magic,
            "version": self.version,
            "grid": self.grid.to_json(),
            "time_start": format_timestamp(self.time_start),
            "time_step_s": self.time_step_s,
            "n_steps": self.n_steps,
            "variables": [v.to_json() for v in self.variables],
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            grid=GridSpec.from_json(obj["grid"]),
            time_start=parse_timestamp(obj["time_start"]),
            time_step_s=int(obj["time_step_s"]),
            n_steps=int(obj["n_steps"]),
            variables=[VariableSpec.from_json(v) for v in obj["variables"]],
            magic=obj.get("magic", ""),
            version=int(obj.get("version", -1)),
        )


class Datastore:
    """Read-only memory-mapped view over a converted store."""

    def __init__(self, header, prefix):
        self.header = header
        self.prefix = str(prefix)
        self._mmap = np.memmap(self.prefix + DATA_SUFFIX, dtype=np.uint8, mode="r")

    @property
    def grid(self):
        return self.header.grid

    def _frame_view(self, var, t):
        g = self.header.grid
        per_frame = g.n_lat * g.n_lon * ITEMSIZE
        if var.kind == "static":
            t = 0
        elif not 0 <= t < self.header.n_steps:
            raise FrameRangeError(
                "frame %d out of range [0, %d) for %r"
                % (t, self.header.n_steps, var.name)
            )
        start = var.offset_bytes + t * per_frame
        raw = self._mmap[start:start + per_frame]
        return raw.view(DTYPE).reshape(g.n_lat, g.n_lon)

    def read_frame(self, name, t=0):
        """One frame as a Field; zero-copy view into the mapping."""
        var = self.header.variable(name)
        return Field(grid=self.grid, values=self._frame_view(var, t),
                     units=var.units)

    def read_window(self, name, t_indices):
        """Frames stacked in the given (possibly non-contiguous) order."""
        var = self.header.variable(name)
        if var.kind == "temporal":
            for t in t_indices:
                if not 0 <= t < self.header.n_steps:
                    raise FrameRangeError(
                        "frame %d out of range [0, %d) for %r"
                        % (t, self.header.n_steps, name)
                    )
        return np.stack([self._frame_view(var, t) for t in t_indices])

    def frame_bytes(self, name, t=0):
        """Raw little-endian frame payload (for parity/benchmark checks)."""
        return self._frame_view(self.header.variable(name), t).tobytes()


def _layout_variables(descriptors, header):
    offset = 0
    for var in descriptors:
        var.offset_bytes = offset
        size = var.region_bytes(header)
        offset += size
        offset = (offset + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


def aligned_offset(offset):
    return (offset + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


def write_store(out_prefix, header, frames_of):
    """Write header + data files; `frames_of(var)` yields float32 frames."""
    out_prefix = str(out_prefix)
    os.makedirs(os.path.dirname(os.path.abspath(out_prefix)), exist_ok=True)
    g = header.grid
    per_frame = g.n_lat * g.n_lon * ITEMSIZE
    with open(out_prefix + DATA_SUFFIX, "wb") as f:
        for var in header.variables:
            f.seek(var.offset_bytes)
            for frame in frames_of(var):
                arr = np.ascontiguousarray(frame, dtype=DTYPE)
                if arr.nbytes != per_frame:
                    raise StoreError(
                        "frame of %d bytes for %r, expected %d"
                        % (arr.nbytes, var.name, per_frame)
                    )
                f.write(arr.tobytes())
        f.truncate(header.data_size())
    with open(out_prefix + HEADER_SUFFIX, "w") as f:
        json.dump(header.to_json(), f, indent=2)
        f.write("\n")
    return open_store(out_prefix)


def convert(ingest_dir, out_prefix, grid=None):
    """Convert an ingest directory into a store, regridding when needed."""
    from . import ingest

    variables = ingest.read_ingest_dir(ingest_dir)
    if not variables:
        raise StoreError("no variable descriptors found in %s" % ingest_dir)
    temporal = [v for v in variables if v.kind == "temporal"]
    if temporal:
        ref = temporal[0]
        for v in temporal[1:]:
            if (v.time_start != ref.time_start or v.time_step_s != ref.time_step_s
                    or v.n_steps != ref.n_steps):
                raise StoreError(
                    "variable %r time axis (start=%s step=%ss n=%d) inconsistent "
                    "with %r (start=%s step=%ss n=%d)"
                    % (v.name, v.time_start, v.time_step_s, v.n_steps,
                       ref.name, ref.time_start, ref.time_step_s, ref.n_steps)
                )
        time_start, time_step_s, n_steps = ref.time_start, ref.time_step_s, ref.n_steps
    else:
        time_start = parse_timestamp("1970-01-01T00:00:00Z")
        time_step_s, n_steps = 3600, 1

    if grid is None:
        grid = variables[0].grid
    specs = [
        VariableSpec(name=v.name, kind=v.kind, units=v.units, level_hpa=v.level_hpa)
        for v in variables
    ]
    header = StoreHeader(grid=grid, time_start=time_start,
                         time_step_s=time_step_s, n_steps=n_steps,
                         variables=specs)
    _layout_variables(header.variables, header)

    by_name = {v.name: v for v in variables}

    def frames_of(var):
        src = by_name[var.name]
        n = src.n_steps if var.kind == "temporal" else 1
        for t in range(n):
            values = src.read_frame(t)
            if src.grid != grid:
                f = regrid_bilinear(Field(grid=src.grid, values=values,
                                          units=src.units), grid)
                values = f.values
            yield values

    return write_store(out_prefix, header, frames_of)


def open_store(prefix):
    """Open a store read-only; no bulk reads (lazy OS demand paging)."""
    prefix = str(prefix)
    with open(prefix + HEADER_SUFFIX) as f:
        obj = json.load(f)
    header = StoreHeader.from_json(obj)
    if header.magic != MAGIC:
        raise BadMagicError("bad magic %r (expected %r)" % (header.magic, MAGIC))
    if header.version != VERSION:
        raise BadVersionError(
            "unsupported version %d (expected %d)" % (header.version, VERSION)
        )
    for v in header.variables:
        if v.dtype != DTYPE:
            raise UnsupportedDtypeError(
                "variable %r has unsupported dtype %r" % (v.name, v.dtype)
            )
    expected = header.data_size()
    actual = os.path.getsize(prefix + DATA_SUFFIX)
    if actual != expected:
        raise SizeMismatchError(
            "data file is %d bytes, header requires %d" % (actual, expected)
        )
    return Datastore(header, prefix)


def accumulate_time(store, name, k, out_prefix):
    """Sum consecutive groups of k frames into a new store written alongside.

    The result has n_steps/k frames, a k-fold longer time step, and exact
    left-to-right float32 summation; NaN in any summand yields NaN.
    """
    k = int(k)
    if k < 1:
        raise StoreError("accumulation factor must be positive")
    var = store.header.variable(name)
    if var.kind != "temporal":
        raise StoreError("variable %r is not temporal" % name)
    n = store.header.n_steps
    if n % k:
        raise StoreError("n_steps=%d not divisible by k=%d" % (n, k))

    out_header = StoreHeader(
        grid=store.grid,
        time_start=store.header.time_start,
        time_step_s=store.header.time_step_s * k,
        n_steps=n // k,
        variables=[VariableSpec(name=name, kind="temporal", units=var.units,
                                level_hpa=var.level_hpa)],
    )
    _layout_variables(out_header.variables, out_header)

    def frames_of(_var):
        for j in range(n // k):
            acc = store.read_frame(name, j * k).values.astype(np.float32, copy=True)
            for t in range(j * k + 1, j * k + k):
                acc = acc + store.read_frame(name, t).values
            yield acc

    return write_store(out_prefix, out_header, frames_of)
