"""Sample composition, train/val/test partitioning and pixel sampling.

A sample pairs an input window (temporal variables at regular offsets
before the issue time t0, plus static variables and hour/day/month
features repeated per timestep) with a precipitation target at t0 + tau
and a lead-time one-hot vector.

Partition semantics: train and val bounds constrain every frame a sample
touches (inputs and target alike), while the test bound names the first
evaluated valid time, whose input windows may reach earlier. Disjointness
of the touched frame sets across splits is what `validate_partition`
checks, not any fixed margin.
"""

import json
import random
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone

import numpy as np

from .grid import Field
from .normalize import identity_stats
from .store import format_timestamp, parse_timestamp

CLASS_EDGES = (2.0, 10.0, 50.0)
CLASS_LABELS = ("slight", "moderate", "heavy", "violent")

SPLITS = ("train", "val", "test")


class SamplerError(ValueError):
    pass


class MissingFrameError(SamplerError):
    pass


@dataclass
class SampleSpec:
    input_vars: tuple
    static_vars: tuple
    target_var: str
    history_h: int = 12
    step_h: int = 3
    lead_interval_h: int = 24
    max_lead_h: int = 120
    time_features: tuple = ("hour", "day", "month")

    def __post_init__(self):
        self.input_vars = tuple(self.input_vars)
        self.static_vars = tuple(self.static_vars)
        if self.step_h <= 0 or self.history_h < 0:
            raise SamplerError("history/step hours must be positive")
        if self.history_h % self.step_h:
            raise SamplerError(
                "history %dh not a multiple of step %dh"
                % (self.history_h, self.step_h)
            )
        if self.max_lead_h % self.lead_interval_h:
            raise SamplerError(
                "max lead %dh not a multiple of interval %dh"
                % (self.max_lead_h, self.lead_interval_h)
            )

    @property
    def n_channels(self):
        return len(self.input_vars) + len(self.static_vars) + 3

    @property
    def n_timesteps(self):
        return self.history_h // self.step_h + 1

    @property
    def n_leads(self):
        return self.max_lead_h // self.lead_interval_h

    def to_json(self):
        return {
            "input_vars": list(self.input_vars),
            "static_vars": list(self.static_vars),
            "target_var": self.target_var,
            "history_h": self.history_h,
            "step_h": self.step_h,
            "lead_interval_h": self.lead_interval_h,
            "max_lead_h": self.max_lead_h,
        }

    @classmethod
    def from_json(cls, obj):
        return cls(
            input_vars=obj["input_vars"],
            static_vars=obj.get("static_vars", []),
            target_var=obj["target_var"],
            history_h=int(obj.get("history_h", 12)),
            step_h=int(obj.get("step_h", 3)),
            lead_interval_h=int(obj.get("lead_interval_h", 24)),
            max_lead_h=int(obj.get("max_lead_h", 120)),
        )


@dataclass
class PartitionSpec:
    train: tuple  # (start, end) UTC datetimes; bounds on touched frames
    val: tuple
    test: tuple  # (first_eval, end); first evaluated valid time
    margin_h: int = 132

    def to_json(self):
        return {
            "train": [format_timestamp(t) for t in self.train],
            "val": [format_timestamp(t) for t in self.val],
            "test": [format_timestamp(t) for t in self.test],
            "margin_h": self.margin_h,
        }

    @classmethod
    def from_json(cls, obj):
        def pair(v):
            a, b = v
            return (parse_timestamp(a), parse_timestamp(b))

        return cls(train=pair(obj["train"]), val=pair(obj["val"]),
                   test=pair(obj["test"]), margin_h=int(obj.get("margin_h", 132)))

    @classmethod
    def defaults(cls, spec=None):
        """Benchmark split: train through end of 2017, val 2018, test
        evaluated from 6 January 2019."""
        margin = (spec.max_lead_h + spec.history_h) if spec else 132
        return cls(
            train=(parse_timestamp("2016-04-01"), parse_timestamp("2017-12-31")),
            val=(parse_timestamp("2018-01-01"), parse_timestamp("2018-12-31")),
            test=(parse_timestamp("2019-01-06"), parse_timestamp("2019-12-31")),
            margin_h=margin,
        )


@dataclass
class ClassBinning:
    edges: tuple = CLASS_EDGES
    labels: tuple = CLASS_LABELS

    def __post_init__(self):
        self.edges = tuple(float(e) for e in self.edges)
        self.labels = tuple(self.labels)
        if len(self.labels) != len(self.edges) + 1:
            raise SamplerError("need one more label than edges")


def class_of(value, binning=None):
    """Intensity class of a precipitation value; intervals are right-open."""
    binning = binning or ClassBinning()
    v = float(value)
    if not np.isfinite(v) or v < 0:
        raise SamplerError("precipitation value must be finite and >= 0, got %r" % value)
    idx = int(np.searchsorted(binning.edges, v, side="right"))
    return binning.labels[idx]


def class_indices(values, binning=None):
    """Vectorized class index (0..3) per value; right-open intervals."""
    binning = binning or ClassBinning()
    return np.searchsorted(binning.edges, values, side="right")


@dataclass
class Sample:
    inputs: np.ndarray  # (timesteps, channels, lat, lon) float32
    lead_onehot: np.ndarray
    target: Field
    t0: datetime
    tau_h: int
    valid: bool = True
    channel_names: tuple = ()


def window_offsets(spec):
    """Hour offsets of the input window: -T, -T+dt, ..., 0."""
    return list(range(-spec.history_h, 1, spec.step_h))


def lead_hours(spec):
    return list(range(spec.lead_interval_h, spec.max_lead_h + 1,
                      spec.lead_interval_h))


def lead_onehot(tau_h, spec):
    if tau_h <= 0 or tau_h % spec.lead_interval_h or tau_h > spec.max_lead_h:
        raise SamplerError(
            "lead %sh not on the lattice {%d, ..., %d} step %d"
            % (tau_h, spec.lead_interval_h, spec.max_lead_h, spec.lead_interval_h)
        )
    vec = np.zeros(spec.n_leads, dtype=np.float32)
    vec[tau_h // spec.lead_interval_h - 1] = 1.0
    return vec


def _hours(dt):
    return int(dt.total_seconds() // 3600)


def _split_bounds(part, split):
    return {"train": part.train, "val": part.val, "test": part.test}[split]


def split_t0_range(part, spec, split):
    """Issue-time range such that the whole lead lattice is usable.

    Train/val: every touched frame stays inside the split bounds. Test:
    the earliest valid time equals the split's first evaluated date."""
    start, end = _split_bounds(part, split)
    if split == "test":
        t0_min = start - timedelta(hours=spec.lead_interval_h)
    else:
        t0_min = start + timedelta(hours=spec.history_h)
    t0_max = end - timedelta(hours=spec.max_lead_h)
    return t0_min, t0_max


def _iter_t0(t0_min, t0_max, cadence_h):
    t = t0_min
    step = timedelta(hours=cadence_h)
    while t <= t0_max:
        yield t
        t += step


def sample_frame_times(spec, t0, tau_h=None):
    """UTC timestamps of every frame a sample reads (inputs + targets)."""
    times = [t0 + timedelta(hours=off) for off in window_offsets(spec)]
    taus = [tau_h] if tau_h is not None else lead_hours(spec)
    times += [t0 + timedelta(hours=tau) for tau in taus]
    return times


def touched_frame_hours(part, spec, split, cadence_h=1):
    """Epoch-hour set of all frames any sample of the split reads."""
    t0_min, t0_max = split_t0_range(part, spec, split)
    epoch = datetime(1970, 1, 1, tzinfo=timezone.utc)
    touched = set()
    offsets = [off for off in window_offsets(spec)] + lead_hours(spec)
    for t0 in _iter_t0(t0_min, t0_max, cadence_h):
        base = _hours(t0 - epoch)
        for off in offsets:
            touched.add(base + off)
    return touched


@dataclass
class PartitionReport:
    ok: bool
    split: str = ""
    other_split: str = ""
    t0: datetime | None = None
    tau_h: int | None = None
    frame_time: datetime | None = None

    def describe(self):
        if self.ok:
            return "partition ok: no cross-split frame overlap"
        return (
            "violation: %s sample (t0=%s, tau=%dh) reads frame %s touched by %s"
            % (self.split, format_timestamp(self.t0), self.tau_h,
               format_timestamp(self.frame_time), self.other_split)
        )

    def to_json(self):
        out = {"ok": self.ok}
        if not self.ok:
            out.update(split=self.split, other_split=self.other_split,
                       t0=format_timestamp(self.t0), tau_h=self.tau_h,
                       frame_time=format_timestamp(self.frame_time))
        return out


def validate_partition(part, spec, cadence_h=1):
    """Check that no sample of one split reads a frame touched by another.

    Returns the chronologically earliest violating sample when the splits
    overlap; a report, never an exception."""
    epoch = datetime(1970, 1, 1, tzinfo=timezone.utc)
    touched = {s: touched_frame_hours(part, spec, s, cadence_h) for s in SPLITS}
    violations = []
    in_offsets = window_offsets(spec)
    for split in SPLITS:
        others = {s: touched[s] for s in SPLITS if s != split}
        t0_min, t0_max = split_t0_range(part, spec, split)
        found = None
        for t0 in _iter_t0(t0_min, t0_max, cadence_h):
            base = _hours(t0 - epoch)
            for tau in lead_hours(spec):
                for off in in_offsets + [tau]:
                    h = base + off
                    for name, other in others.items():
                        if h in other:
                            found = (t0, tau, h, name)
                            break
                    if found:
                        break
                if found:
                    break
            if found:
                break
        if found:
            t0, tau, h, name = found
            violations.append(PartitionReport(
                ok=False, split=split, other_split=name, t0=t0, tau_h=tau,
                frame_time=epoch + timedelta(hours=h)))
    if not violations:
        return PartitionReport(ok=True)
    return min(violations, key=lambda v: (v.t0, v.tau_h))


def iter_indices(part, spec, split, seed, cadence_h=1):
    """Deterministic shuffled epoch of (t0, tau_h) pairs for a split."""
    t0_min, t0_max = split_t0_range(part, spec, split)
    pairs = [(t0, tau) for t0 in _iter_t0(t0_min, t0_max, cadence_h)
             for tau in lead_hours(spec)]
    if not pairs:
        raise SamplerError("split %r is empty" % split)
    rng = random.Random(seed)
    rng.shuffle(pairs)
    return pairs


def _locate(stores, name):
    for s in stores:
        if name in s.header.var_names():
            return s
    return None


def _frame_at(store, name, ts):
    try:
        t = store.header.frame_index(ts)
    except Exception:
        raise MissingFrameError(
            "variable %r has no frame at %s" % (name, format_timestamp(ts)))
    return store.read_frame(name, t).values


def build_sample(stores, spec, t0, tau_h, stats=None):
    """Compose one (inputs, lead one-hot, target) sample.

    `stores` is a Datastore or a sequence of them sharing one grid; `stats`
    maps variable name to VarStats (missing names pass through raw, which
    is how time features and synthesized lat/lon default). The target is
    left unstandardized. A NaN anywhere in the target flags the sample
    invalid rather than raising."""
    if not isinstance(stores, (list, tuple)):
        stores = [stores]
    grid = stores[0].grid
    for s in stores[1:]:
        if s.grid != grid:
            raise SamplerError("stores must share one grid")
        if (spec.step_h * 3600) % s.header.time_step_s:
            raise SamplerError(
                "store cadence %ds does not divide the %dh sampling step"
                % (s.header.time_step_s, spec.step_h))
    stats = stats or {}

    def stat(name):
        return stats.get(name, identity_stats(name))

    offsets = window_offsets(spec)
    n_t = len(offsets)
    inputs = np.empty((n_t, spec.n_channels, grid.n_lat, grid.n_lon),
                      dtype=np.float32)
    names = []

    static_planes = []
    for name in spec.static_vars:
        store = _locate(stores, name)
        if store is not None:
            plane = store.read_frame(name).values.astype(np.float64)
        elif name == "lat":
            plane = np.broadcast_to(grid.lat_centers[:, None],
                                    (grid.n_lat, grid.n_lon)).astype(np.float64)
        elif name == "lon":
            plane = np.broadcast_to(grid.lon_centers[None, :],
                                    (grid.n_lat, grid.n_lon)).astype(np.float64)
        else:
            raise SamplerError("static variable %r not found in any store" % name)
        st = stat(name)
        static_planes.append((plane - st.mean) / st.std)

    for k, off in enumerate(offsets):
        ts = t0 + timedelta(hours=off)
        c = 0
        for name in spec.input_vars:
            store = _locate(stores, name)
            if store is None:
                raise SamplerError("variable %r not found in any store" % name)
            raw = _frame_at(store, name, ts).astype(np.float64)
            st = stat(name)
            inputs[k, c] = (raw - st.mean) / st.std
            if k == 0:
                names.append(name)
            c += 1
        for plane, name in zip(static_planes, spec.static_vars):
            inputs[k, c] = plane
            if k == 0:
                names.append(name)
            c += 1
        # scalar time features, fixed encodings, constant over the grid
        feats = (ts.hour / 24.0, (ts.day - 1) / 31.0, (ts.month - 1) / 12.0)
        for fname, value in zip(("hour", "day", "month"), feats):
            inputs[k, c] = value
            if k == 0:
                names.append(fname)
            c += 1

    target_store = _locate(stores, spec.target_var)
    if target_store is None:
        raise SamplerError("target %r not found in any store" % spec.target_var)
    target_ts = t0 + timedelta(hours=tau_h)
    target_values = _frame_at(target_store, spec.target_var, target_ts)
    target = Field(grid=grid, values=np.array(target_values),
                   units=target_store.header.variable(spec.target_var).units)
    valid = bool(np.isfinite(target.values).all())
    return Sample(inputs=inputs, lead_onehot=lead_onehot(tau_h, spec),
                  target=target, t0=t0, tau_h=tau_h, valid=valid,
                  channel_names=tuple(names))


def iter_samples(stores, spec, part, split, seed, stats=None, cadence_h=1):
    """Built samples in iter_indices order; invalid (NaN-target) ones skipped."""
    for t0, tau in iter_indices(part, spec, split, seed, cadence_h):
        sample = build_sample(stores, spec, t0, tau, stats=stats)
        if sample.valid:
            yield sample


def dump_sample_bytes(sample):
    """Serialized sample: one JSON header line + float32 payload."""
    header = {
        "t0": format_timestamp(sample.t0),
        "tau_h": sample.tau_h,
        "inputs_shape": list(sample.inputs.shape),
        "n_leads": int(sample.lead_onehot.shape[0]),
        "target_shape": list(sample.target.values.shape),
    }
    payload = (sample.inputs.astype("<f4").tobytes()
               + sample.lead_onehot.astype("<f4").tobytes()
               + sample.target.values.astype("<f4").tobytes())
    return json.dumps(header, sort_keys=True).encode() + b"\n" + payload


def _load_target_block(store, name, t_range):
    start, stop = t_range if t_range is not None else (0, store.header.n_steps)
    return store.read_window(name, range(start, stop)), start


def balanced_pixel_indices(store, target_var, binning, n_per_class, seed,
                           t_range=None):
    """Exactly n_per_class (t, lat, lon) pixels per intensity class,
    sampled uniformly without replacement within each class."""
    binning = binning or ClassBinning()
    if n_per_class == 0:
        return []
    block, t_offset = _load_target_block(store, target_var, t_range)
    flat = block.reshape(-1)
    finite = np.isfinite(flat)
    cls = np.full(flat.shape, -1, dtype=np.int8)
    cls[finite] = class_indices(flat[finite], binning)
    rng = np.random.default_rng(seed)
    picks = []
    for idx, label in enumerate(binning.labels):
        pool = np.flatnonzero(cls == idx)
        if len(pool) < n_per_class:
            raise SamplerError(
                "class %r has only %d pixels available, need %d"
                % (label, len(pool), n_per_class))
        picks.append(rng.choice(pool, size=n_per_class, replace=False))
    chosen = np.concatenate(picks)
    n_lat, n_lon = block.shape[1], block.shape[2]
    t, rem = np.divmod(chosen, n_lat * n_lon)
    i, j = np.divmod(rem, n_lon)
    return [(int(tt) + t_offset, int(ii), int(jj)) for tt, ii, jj in zip(t, i, j)]


def unbalanced_pixel_indices(store, target_var, n, seed, t_range=None):
    """n pixels uniform over all finite pixels, without replacement."""
    block, t_offset = _load_target_block(store, target_var, t_range)
    flat = block.reshape(-1)
    pool = np.flatnonzero(np.isfinite(flat))
    if len(pool) < n:
        raise SamplerError("only %d pixels available, need %d" % (len(pool), n))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(pool, size=n, replace=False)
    n_lat, n_lon = block.shape[1], block.shape[2]
    t, rem = np.divmod(chosen, n_lat * n_lon)
    i, j = np.divmod(rem, n_lon)
    return [(int(tt) + t_offset, int(ii), int(jj)) for tt, ii, jj in zip(t, i, j)]
