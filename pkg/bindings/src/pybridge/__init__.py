"""Thin bindings for training loops: open a store, iterate samples.

Pure delegation to the core package — same config format, same sampler,
same standardization code path — so sample payloads are byte-identical to
the CLI's `dump-sample` output and all correctness tests live in the core.
"""

from rainstore import sampler
from rainstore.cli import compute_stats, load_task_config
from rainstore.store import open_store

__all__ = ["open", "samples", "sample_count"]


def open(prefix):
    """Open a store lazily; the handle is read-only and shareable."""
    return open_store(prefix)


def _setup(handle, spec_json, stats_path):
    stores = list(handle) if isinstance(handle, (list, tuple)) else [handle]
    spec, part = load_task_config(spec_json)
    stats = compute_stats(stores, spec, part, stats_path=stats_path)
    return stores, spec, part, stats


def samples(handle, spec_json, split="train", seed=0, cadence_h=1,
            stats_path=None):
    """Iterate (inputs, lead one-hot, target) arrays for one epoch.

    `spec_json` is a task-config path or parsed dict, as accepted by the
    CLI. Order equals the seeded epoch order of `sampler.iter_indices`;
    the target array is a zero-copy view into the store where possible.
    """
    stores, spec, part, stats = _setup(handle, spec_json, stats_path)
    for t0, tau_h in sampler.iter_indices(part, spec, split, seed,
                                          cadence_h=cadence_h):
        s = sampler.build_sample(stores, spec, t0, tau_h, stats=stats)
        yield s.inputs, s.lead_onehot, s.target.values


def sample_count(spec_json, split="train", cadence_h=1):
    """Epoch length for a split; equals the CLI `count-samples` output."""
    spec, part = load_task_config(spec_json)
    return len(sampler.iter_indices(part, spec, split, 0,
                                    cadence_h=cadence_h))
