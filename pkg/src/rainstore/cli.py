"""Command-line entry point exposing the full toolchain."""

import argparse
import json
import os
import sys

import numpy as np

from . import analysis, baselines, bench, normalize, sampler, store, synth
from .sampler import PartitionSpec, SampleSpec


def _emit(args, payload, human_text=None):
    """JSON to stdout under --json (tables go to stderr); text otherwise."""
    if args.json:
        json.dump(payload, sys.stdout, indent=2)
        sys.stdout.write("\n")
        if human_text:
            print(human_text, file=sys.stderr)
    elif human_text:
        print(human_text)
    else:
        json.dump(payload, sys.stdout, indent=2)
        sys.stdout.write("\n")


def load_task_config(path, seed_vars=None):
    """Task JSON with `sample` and `partition` sections; missing fields
    fall back to the benchmark defaults. Accepts a path or a parsed dict."""
    obj = {}
    if isinstance(path, dict):
        obj = path
    elif path:
        with open(path) as f:
            obj = json.load(f)
    sample_obj = obj.get("sample", obj if "input_vars" in obj else None)
    if sample_obj:
        spec = SampleSpec.from_json(sample_obj)
    else:
        if not seed_vars:
            raise SystemExit("error: task config with a `sample` section required")
        spec = SampleSpec(input_vars=seed_vars, static_vars=(),
                          target_var=seed_vars[0])
    if "partition" in obj:
        part = PartitionSpec.from_json(obj["partition"])
    else:
        part = PartitionSpec.defaults(spec)
    return spec, part


def _parse_range(handle, range_arg):
    if not range_arg:
        return None
    start, stop = range_arg.split(":")
    return int(start), int(stop)


def cmd_generate(args):
    with open(args.config) as f:
        cfg = synth.SynthConfig.from_json(json.load(f))
    if args.seed is not None:
        cfg.seed = args.seed
    if args.store_prefix:
        handle = synth.generate_store(cfg, args.store_prefix)
        _emit(args, {"store": args.store_prefix,
                     "n_steps": handle.header.n_steps,
                     "variables": handle.header.var_names()},
              "wrote store %s (%d steps)" % (args.store_prefix,
                                             handle.header.n_steps))
    else:
        synth.generate(cfg, args.out)
        _emit(args, {"ingest_dir": args.out, "seed": cfg.seed},
              "wrote ingest dataset %s" % args.out)
    return 0


def cmd_convert(args):
    grid = None
    if args.res is not None:
        from .grid import make_grid

        grid = make_grid(args.res)
    handle = store.convert(args.inp, args.out, grid)
    h = handle.header
    _emit(args, {"store": args.out, "n_steps": h.n_steps,
                 "grid": [h.grid.n_lat, h.grid.n_lon],
                 "variables": h.var_names()},
          "wrote %s: %d variables, %d steps, grid %dx%d"
          % (args.out, len(h.variables), h.n_steps, h.grid.n_lat, h.grid.n_lon))
    return 0


def cmd_info(args):
    handle = store.open_store(args.store)
    _emit(args, handle.header.to_json())
    return 0


def cmd_validate_partition(args):
    spec, part = load_task_config(args.config)
    report = sampler.validate_partition(part, spec, cadence_h=args.cadence)
    _emit(args, report.to_json(), report.describe())
    return 0 if report.ok else 1


def _open_stores(args):
    return [store.open_store(p) for p in args.store]


def compute_stats(stores, spec, part, stats_path=None):
    """Standardization stats for a task: a sidecar if given, otherwise
    global stats over each variable's training range."""
    if stats_path and os.path.exists(stats_path):
        return normalize.load_stats(stats_path)
    stats = {}
    for name in list(spec.input_vars) + list(spec.static_vars):
        for s in stores:
            if name in s.header.var_names():
                t_range = _train_range(s, part)
                stats[name] = normalize.global_stats(s, name, t_range)
                break
    return stats


def _train_range(handle, part):
    h = handle.header
    lo = max(part.train[0], h.time_start)
    hi = min(part.train[1], h.timestamp(h.n_steps - 1))
    if lo > hi:
        return (0, h.n_steps)
    return (h.frame_index(lo), h.frame_index(hi) + 1)


def cmd_stats(args):
    handle = store.open_store(args.store[0])
    t_range = _parse_range(handle, args.range)
    out = {}
    names = args.var or handle.header.var_names()
    for name in names:
        out[name] = normalize.global_stats(handle, name, t_range)
    if args.out:
        normalize.save_stats(out, args.out)
    _emit(args, {k: v.to_json() for k, v in out.items()})
    return 0


def cmd_dump_sample(args):
    stores = _open_stores(args)
    spec, part = load_task_config(args.config)
    stats = compute_stats(stores, spec, part, stats_path=args.stats)
    pairs = sampler.iter_indices(part, spec, args.split, args.seed,
                                 cadence_h=args.cadence)
    if not 0 <= args.index < len(pairs):
        raise SystemExit("error: sample index %d out of range [0, %d)"
                         % (args.index, len(pairs)))
    t0, tau = pairs[args.index]
    sample = sampler.build_sample(stores, spec, t0, tau, stats=stats)
    blob = sampler.dump_sample_bytes(sample)
    if args.out:
        with open(args.out, "wb") as f:
            f.write(blob)
    else:
        sys.stdout.buffer.write(blob)
    return 0


def cmd_count_samples(args):
    spec, part = load_task_config(args.config)
    pairs = sampler.iter_indices(part, spec, args.split, args.seed,
                                 cadence_h=args.cadence)
    _emit(args, {"split": args.split, "count": len(pairs)},
          "%s: %d samples per epoch" % (args.split, len(pairs)))
    return 0


def cmd_baseline(args):
    handle = store.open_store(args.store[0])
    spec, part = load_task_config(args.config)
    report = baselines.evaluate_baselines(
        handle, spec, part, split=args.split, cadence_h=args.cadence,
        max_t0=args.max_t0)
    _emit(args, report.to_json(), report.to_text())
    return 0


def cmd_evaluate(args):
    pred_store = store.open_store(args.predictions)
    target_store = store.open_store(args.store[0])
    t_range = _parse_range(target_store, args.range)
    start, stop = t_range if t_range else (0, target_store.header.n_steps)
    preds = pred_store.read_window(args.pred_var, range(start, stop))
    targets = target_store.read_window(args.var, range(start, stop))
    from .metrics import class_rmse, lw_rmse

    report = class_rmse(preds, targets)
    value = lw_rmse(preds, targets, target_store.grid)
    payload = {"lw_rmse": value, "class_rmse": report.to_json()}
    _emit(args, payload, report.to_text() + "\nlw-RMSE: %.6f" % value)
    return 0


def cmd_correlate(args):
    stores = _open_stores(args)
    t_range = _parse_range(stores[0], args.range)
    report = analysis.correlation_matrix(
        stores, args.var, lat_band=(args.lat_min, args.lat_max),
        t_range=t_range, subsample=args.subsample, seed=args.seed or 0)
    _emit(args, report.to_json())
    return 0


def cmd_histogram(args):
    handle = store.open_store(args.store[0])
    t_range = _parse_range(handle, args.range)
    report = analysis.precip_histogram(handle, args.var[0], t_range,
                                       n_bins=args.bins)
    _emit(args, report.to_json())
    return 0


def cmd_classmap(args):
    handle = store.open_store(args.store[0])
    t_range = _parse_range(handle, args.range)
    maps = analysis.class_frequency_map(handle, args.var[0], t_range=t_range)
    payload = {label: [[float(v) for v in row] for row in f.values]
               for label, f in maps.items()}
    _emit(args, payload)
    return 0


def cmd_bench(args):
    with open(args.workload) as f:
        workload = bench.Workload(**json.load(f))
    if args.seed is not None:
        workload.seed = args.seed
    workers = args.workers or int(os.environ.get("RAINSTORE_WORKERS", "1"))
    if args.loader == "both":
        comparison = bench.compare_loaders(args.store[0], workload, workers,
                                           drop_warmup=args.drop_warmup)
        payload = {k: (v.to_json() if hasattr(v, "to_json") else v)
                   for k, v in comparison.items()}
        _emit(args, payload, bench.report_table(comparison))
    else:
        report = bench.run_bench(args.store[0], workload, workers, args.loader,
                                 drop_warmup=args.drop_warmup)
        _emit(args, report.to_json())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rainstore",
        description="Memory-mapped gridded datastore and precipitation "
                    "forecasting evaluation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--json", action="store_true",
                       help="machine-readable output on stdout")
        return p

    p = add("generate", cmd_generate, help="generate a synthetic dataset")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="ingest directory to write")
    p.add_argument("--store-prefix", help="write store files directly")

    p = add("convert", cmd_convert, help="convert an ingest directory to a store")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--res", type=float, default=None,
                   help="target grid resolution in degrees")

    p = add("info", cmd_info, help="print a store header")
    p.add_argument("--store", required=True)

    p = add("validate-partition", cmd_validate_partition,
            help="check train/val/test frame disjointness")
    p.add_argument("--config")
    p.add_argument("--cadence", type=int, default=1)

    def add_store_cmd(name, fn, **kwargs):
        p = add(name, fn, **kwargs)
        p.add_argument("--store", action="append", required=True)
        return p

    p = add_store_cmd("stats", cmd_stats, help="global mean/std per variable")
    p.add_argument("--var", action="append")
    p.add_argument("--range", help="frame range start:stop")
    p.add_argument("--out", help="stats sidecar JSON to write")

    p = add_store_cmd("dump-sample", cmd_dump_sample,
                      help="serialize one training sample")
    p.add_argument("--config")
    p.add_argument("--split", default="train", choices=sampler.SPLITS)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--cadence", type=int, default=1)
    p.add_argument("--stats", help="stats sidecar JSON")
    p.add_argument("--out", help="output file (default: stdout)")

    p = add("count-samples", cmd_count_samples, help="epoch size for a split")
    p.add_argument("--config")
    p.add_argument("--split", default="train", choices=sampler.SPLITS)
    p.add_argument("--cadence", type=int, default=1)

    p = add_store_cmd("baseline", cmd_baseline,
                      help="persistence/climatology lead-time table")
    p.add_argument("--config")
    p.add_argument("--split", default="test", choices=sampler.SPLITS)
    p.add_argument("--cadence", type=int, default=1)
    p.add_argument("--max-t0", type=int, default=None)

    p = add_store_cmd("evaluate", cmd_evaluate,
                      help="lw-RMSE and per-class RMSE of a prediction store")
    p.add_argument("--predictions", required=True)
    p.add_argument("--pred-var", required=True)
    p.add_argument("--var", required=True)
    p.add_argument("--range")

    p = add_store_cmd("correlate", cmd_correlate,
                      help="pairwise Spearman matrix with significance")
    p.add_argument("--var", action="append", required=True)
    p.add_argument("--lat-min", type=float, default=-60.0)
    p.add_argument("--lat-max", type=float, default=60.0)
    p.add_argument("--range")
    p.add_argument("--subsample", type=int, default=10000)

    p = add_store_cmd("histogram", cmd_histogram,
                      help="log-binned precipitation histogram")
    p.add_argument("--var", action="append", required=True)
    p.add_argument("--range")
    p.add_argument("--bins", type=int, default=50)

    p = add_store_cmd("classmap", cmd_classmap,
                      help="per-pixel class frequency maps")
    p.add_argument("--var", action="append", required=True)
    p.add_argument("--range")

    p = add_store_cmd("bench", cmd_bench, help="dataloader throughput benchmark")
    p.add_argument("--workload", required=True)
    p.add_argument("--loader", default="both",
                   choices=("memmap", "naive", "both"))
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--drop-warmup", action="store_true")

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except BrokenPipeError:
        return 0
    except Exception as exc:  # single-line machine-parsable failure
        print("error: %s: %s" % (type(exc).__name__, exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
