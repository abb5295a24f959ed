"""Dataloading throughput benchmark: memory-mapped reads versus a naive
open-seek-read loader under randomized sliding-window access.

Correctness precedes speed: before timing, both loaders replay the same
seeded access sequence and must produce equal checksums over the bytes
they read. Timing then measures sample materialization without the
checksum arithmetic.
"""

import json
import multiprocessing as mp
import os
import time
import zlib
from dataclasses import dataclass, field
from datetime import timedelta

import numpy as np

from . import sampler, store as store_mod

LOADER_KINDS = ("memmap", "naive")


class BenchError(Exception):
    pass


class ChecksumMismatchError(BenchError):
    pass


@dataclass
class Workload:
    input_vars: list
    target_var: str
    history_h: int = 12
    step_h: int = 3
    lead_interval_h: int = 24
    max_lead_h: int = 120
    epoch_size: int = 1000
    seed: int = 0

    def to_json(self):
        return {
            "input_vars": list(self.input_vars),
            "target_var": self.target_var,
            "history_h": self.history_h,
            "step_h": self.step_h,
            "lead_interval_h": self.lead_interval_h,
            "max_lead_h": self.max_lead_h,
            "epoch_size": self.epoch_size,
            "seed": self.seed,
        }


@dataclass
class BenchReport:
    loader: str
    workers: int
    samples: int
    wall_s: float
    samples_per_s: float
    bytes_read: int
    checksum: int
    cache_mode: str
    warmup_dropped: bool
    config: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "loader": self.loader,
            "workers": self.workers,
            "samples": self.samples,
            "wall_s": self.wall_s,
            "samples_per_s": self.samples_per_s,
            "bytes_read": self.bytes_read,
            "checksum": self.checksum,
            "cache_mode": self.cache_mode,
            "warmup_dropped": self.warmup_dropped,
            "config": self.config,
        }


def access_sequence(header, workload):
    """Seeded (t0 frame, window frame offsets, target frame) sequence drawn
    through the sampler's epoch iteration over the whole store."""
    spec = sampler.SampleSpec(
        input_vars=workload.input_vars, static_vars=(),
        target_var=workload.target_var, history_h=workload.history_h,
        step_h=workload.step_h, lead_interval_h=workload.lead_interval_h,
        max_lead_h=workload.max_lead_h)
    step_h = header.time_step_s / 3600.0
    cadence_h = max(int(step_h), 1)
    first = header.time_start
    last = header.timestamp(header.n_steps - 1)
    part = sampler.PartitionSpec(
        train=(first, last),
        val=(last + timedelta(hours=10 ** 6), last + timedelta(hours=10 ** 6 + 1)),
        test=(last + timedelta(hours=2 * 10 ** 6), last + timedelta(hours=2 * 10 ** 6 + 1)),
    )
    pairs = sampler.iter_indices(part, spec, "train", workload.seed,
                                 cadence_h=cadence_h)
    pairs = pairs[:workload.epoch_size]
    t0_frames = np.array([header.frame_index(t0) for t0, _ in pairs])
    tau_frames = np.array([int(tau * 3600 // header.time_step_s)
                           for _, tau in pairs])
    window = np.array([int(off * 3600 // header.time_step_s)
                       for off in sampler.window_offsets(spec)])
    return t0_frames, tau_frames, window, spec


# Worker-process state, set once by the pool initializer.
_W = {}


def _init_worker(prefix, var_names, target_var, t0_frames, tau_frames, window):
    with open(prefix + store_mod.HEADER_SUFFIX) as f:
        header = store_mod.StoreHeader.from_json(json.load(f))
    g = header.grid
    frame_bytes = g.n_lat * g.n_lon * store_mod.ITEMSIZE
    offsets = [header.variable(name).offset_bytes for name in var_names]
    _W.update(
        frame_bytes=frame_bytes,
        shape=(g.n_lat, g.n_lon),
        offsets=offsets,
        target_offset=header.variable(target_var).offset_bytes,
        t0=t0_frames,
        tau=tau_frames,
        window=window,
    )
    _W["mmap"] = np.memmap(prefix + store_mod.DATA_SUFFIX,
                           dtype=np.uint8, mode="r")
    # plain-ndarray view: slicing the memmap subclass re-runs its
    # __array_finalize__ per access and dominates small-frame reads
    _W["data"] = _W["mmap"].view(np.ndarray)
    _W["file"] = open(prefix + store_mod.DATA_SUFFIX, "rb")


_GATHER_CHUNK = 512


def _run_slice(args):
    start, stride, verify, loader_kind = args
    t0s, taus, window = _W["t0"], _W["tau"], _W["window"]
    fb = _W["frame_bytes"]
    cells = fb // store_mod.ITEMSIZE
    # flat frame indices read per sample: each input variable over the
    # history window, then the target frame at the drawn lead
    sel = np.arange(start, len(t0s), stride)
    t0 = t0s[sel].astype(np.int64)
    for off in _W["offsets"] + [_W["target_offset"]]:
        if off % fb:
            raise BenchError("variable region at byte %d is not frame-aligned"
                             % off)
    cols = [t0 + off // fb + int(w) for off in _W["offsets"] for w in window]
    cols.append(t0 + _W["target_offset"] // fb + taus[sel].astype(np.int64))
    fidx = np.stack(cols, axis=1)
    n_frames = fidx.shape[1]
    checksum = 0
    if loader_kind == "memmap":
        frames = _W["data"].view("<f4")[:fidx.max() * cells + cells]
        frames = frames.reshape(-1, cells)
        if verify:
            chunk = np.empty((_GATHER_CHUNK, n_frames, cells), dtype="<f4")
            for i in range(0, len(sel), _GATHER_CHUNK):
                rows = fidx[i:i + _GATHER_CHUNK]
                out = chunk[:len(rows)]
                np.take(frames, rows, axis=0, out=out)
                for j in range(len(rows)):
                    checksum ^= zlib.crc32(out[j].tobytes(),
                                           int(sel[i + j]) & 0xFFFFFFFF)
        else:
            # mapped pages are process memory: a sample is a tuple of
            # zero-copy frame views, no read() and no buffer copies
            for row in fidx:
                sample = tuple(frames[j] for j in row)
    else:
        f = _W["file"]
        buf = np.empty((n_frames, cells), dtype="<f4")
        for i in range(len(sel)):
            for slot in range(n_frames):
                f.seek(int(fidx[i, slot]) * fb)
                buf[slot] = np.frombuffer(f.read(fb), dtype="<f4")
            if verify:
                checksum ^= zlib.crc32(buf.tobytes(),
                                       int(sel[i]) & 0xFFFFFFFF)
    n = len(sel)
    return n, n * n_frames * fb, checksum


def _make_pool(prefix, workload, workers):
    handle = store_mod.open_store(prefix)
    t0s, taus, window, _spec = access_sequence(handle.header, workload)
    init_args = (str(prefix), list(workload.input_vars), workload.target_var,
                 t0s, taus, window)
    ctx = mp.get_context("fork")
    pool = ctx.Pool(workers, initializer=_init_worker, initargs=init_args)
    return pool


def _one_pass(pool, workers, kind, verify):
    tasks = [(w, workers, verify, kind) for w in range(workers)]
    start = time.monotonic()
    results = pool.map(_run_slice, tasks)
    wall = time.monotonic() - start
    checksum = 0
    for _, _, crc in results:
        checksum ^= crc
    return (sum(r[0] for r in results), sum(r[1] for r in results),
            checksum, wall)


def _report(kind, workers, workload, samples, nbytes, checksum, wall,
            cache_mode, drop_warmup):
    return BenchReport(
        loader=kind,
        workers=workers,
        samples=samples,
        wall_s=wall,
        samples_per_s=samples / wall if wall > 0 else float("inf"),
        bytes_read=nbytes,
        checksum=checksum,
        cache_mode=cache_mode,
        warmup_dropped=drop_warmup,
        config=workload.to_json(),
    )


def run_bench(prefix, workload, workers=1, loader_kind="memmap",
              drop_warmup=False, verify=True, cache_mode="warm"):
    """One loader's verified and timed epoch; returns a BenchReport."""
    if loader_kind not in LOADER_KINDS:
        raise BenchError("unknown loader kind %r" % loader_kind)
    pool = _make_pool(prefix, workload, workers)
    with pool:
        checksum = 0
        if verify:
            _, _, checksum, _ = _one_pass(pool, workers, loader_kind, True)
        if drop_warmup:
            _one_pass(pool, workers, loader_kind, False)
        samples, nbytes, _, wall = _one_pass(pool, workers, loader_kind, False)
    return _report(loader_kind, workers, workload, samples, nbytes, checksum,
                   wall, cache_mode, drop_warmup)


def compare_loaders(prefix, workload, workers=1, drop_warmup=False,
                    cache_mode="warm", repeats=1):
    """Run both loaders on the identical sequence; checksum equality is a
    hard gate before the speedup is reported.

    Both loaders run in the same worker pool, alternating `repeats` times;
    the speedup is the median of the per-repeat ratios, so slow phases of a
    shared or oversubscribed host cancel out instead of skewing one side."""
    pool = _make_pool(prefix, workload, workers)
    with pool:
        checksums = {}
        for kind in LOADER_KINDS:
            _, _, checksums[kind], _ = _one_pass(pool, workers, kind, True)
        if checksums["memmap"] != checksums["naive"]:
            raise ChecksumMismatchError(
                "loaders read different bytes: memmap crc %08x vs naive crc %08x"
                % (checksums["memmap"], checksums["naive"]))
        if drop_warmup:
            for kind in LOADER_KINDS:
                _one_pass(pool, workers, kind, False)
        ratios = []
        best = {}
        for _rep in range(repeats):
            walls = {}
            for kind in LOADER_KINDS:
                samples, nbytes, _, wall = _one_pass(pool, workers, kind, False)
                walls[kind] = wall
                rep = _report(kind, workers, workload, samples, nbytes,
                              checksums[kind], wall, cache_mode, drop_warmup)
                if kind not in best or rep.samples_per_s > best[kind].samples_per_s:
                    best[kind] = rep
            ratios.append(walls["naive"] / walls["memmap"])
    ratios.sort()
    speedup = ratios[len(ratios) // 2]
    return {"memmap": best["memmap"], "naive": best["naive"],
            "speedup": speedup, "ratios": ratios}


def report_table(comparison):
    m, n = comparison["memmap"], comparison["naive"]
    lines = [
        "loader    workers   samples/s        wall_s",
        "memmap  %9d %11.1f %13.3f" % (m.workers, m.samples_per_s, m.wall_s),
        "naive   %9d %11.1f %13.3f" % (n.workers, n.samples_per_s, n.wall_s),
        "speedup: %.2fx (checksums equal: %08x)"
        % (comparison["speedup"], m.checksum),
    ]
    return "\n".join(lines)
