"""Persistence and (weekly) climatology forecasts with lead-time evaluation."""

import logging
from dataclasses import dataclass
from datetime import timedelta

import numpy as np

from .grid import Field
from .metrics import lw_rmse
from .sampler import split_t0_range, _iter_t0

log = logging.getLogger(__name__)

N_WEEK_BUCKETS = 53


class BaselineError(ValueError):
    pass


def persistence(store, var, t0, tau_h):
    """The frame at issue time, reused unchanged as the forecast at t0+tau."""
    t = store.header.frame_index(t0)
    return store.read_frame(var, t)


def _frame_indices(store, t_range):
    if t_range is None:
        return range(store.header.n_steps)
    start, stop = t_range
    if start >= stop:
        raise BaselineError("empty training range")
    return range(start, stop)


def climatology(store, var, t_range=None):
    """Per-pixel mean over the training frames; NaNs excluded per pixel."""
    indices = _frame_indices(store, t_range)
    g = store.grid
    total = np.zeros((g.n_lat, g.n_lon))
    count = np.zeros((g.n_lat, g.n_lon))
    for t in indices:
        v = store.read_frame(var, t).values.astype(np.float64)
        m = np.isfinite(v)
        total[m] += v[m]
        count[m] += 1
    if (count == 0).any():
        log.warning("climatology: %d pixels have no valid frames (NaN output)",
                    int((count == 0).sum()))
    with np.errstate(invalid="ignore"):
        mean = np.where(count > 0, total / np.maximum(count, 1), np.nan)
    return Field(grid=g, values=mean, units=store.header.variable(var).units)


def week_of(ts):
    """Bucket index: day-of-year (from 0) // 7, partial last week clamped."""
    doy = ts.timetuple().tm_yday - 1
    return min(doy // 7, N_WEEK_BUCKETS - 1)


@dataclass
class WeeklyClimatology:
    fields: list  # one Field per week bucket

    def lookup(self, ts):
        return self.fields[week_of(ts)]


def weekly_climatology(store, var, t_range=None):
    """Per-pixel means conditioned on week of year; empty buckets fall back
    to the all-time climatology."""
    indices = _frame_indices(store, t_range)
    g = store.grid
    totals = np.zeros((N_WEEK_BUCKETS, g.n_lat, g.n_lon))
    counts = np.zeros((N_WEEK_BUCKETS, g.n_lat, g.n_lon))
    for t in indices:
        ts = store.header.timestamp(t)
        w = week_of(ts)
        v = store.read_frame(var, t).values.astype(np.float64)
        m = np.isfinite(v)
        totals[w][m] += v[m]
        counts[w][m] += 1
    fallback = None
    units = store.header.variable(var).units
    fields = []
    for w in range(N_WEEK_BUCKETS):
        if counts[w].sum() == 0:
            if fallback is None:
                log.warning("weekly climatology: empty week buckets fall back "
                            "to the all-time mean")
                fallback = climatology(store, var, t_range)
            fields.append(fallback)
            continue
        with np.errstate(invalid="ignore"):
            mean = np.where(counts[w] > 0, totals[w] / np.maximum(counts[w], 1),
                            np.nan)
        fields.append(Field(grid=g, values=mean, units=units))
    return WeeklyClimatology(fields=fields)


@dataclass
class BaselineReport:
    leads: list
    persistence: dict  # lead_h -> lw-RMSE
    climatology: float
    weekly_climatology: float
    n_samples: int

    def to_json(self):
        return {
            "leads_h": self.leads,
            "persistence": {str(k): v for k, v in self.persistence.items()},
            "climatology": self.climatology,
            "weekly_climatology": self.weekly_climatology,
            "n_samples": self.n_samples,
        }

    def to_text(self):
        width = 14
        head = "method".ljust(20) + "".join(
            ("%dh" % lead).rjust(width) for lead in self.leads)
        lines = [head]
        lines.append("persistence".ljust(20) + "".join(
            ("%.4f" % self.persistence[lead]).rjust(width) for lead in self.leads))
        for name, value in (("climatology", self.climatology),
                            ("weekly clim.", self.weekly_climatology)):
            lines.append(name.ljust(20)
                         + ("%.4f" % value).rjust(width)
                         + " (lead-independent)")
        return "\n".join(lines)


def evaluate_baselines(store, spec, part, leads=None, split="test",
                       climatology_range=None, cadence_h=1, max_t0=None):
    """Lead-time table of lw-RMSE for persistence against the (weekly)
    climatology baselines, evaluated over a split's issue times.

    The climatology training range defaults to the split's train range."""
    var = spec.target_var
    leads = list(leads) if leads is not None else list(
        range(spec.lead_interval_h, spec.max_lead_h + 1, spec.lead_interval_h))
    if climatology_range is None:
        start = store.header.frame_index(max(part.train[0], store.header.timestamp(0)))
        try:
            stop = store.header.frame_index(part.train[1]) + 1
        except Exception:
            stop = store.header.n_steps
        climatology_range = (start, stop)
    clim = climatology(store, var, climatology_range)
    weekly = weekly_climatology(store, var, climatology_range)

    t0_min, t0_max = split_t0_range(part, spec, split)
    t0s = list(_iter_t0(t0_min, t0_max, cadence_h))
    if max_t0 is not None:
        t0s = t0s[:max_t0]
    if not t0s:
        raise BaselineError("no issue times in split %r" % split)

    grid = store.grid
    pers_rmse = {}
    clim_preds, weekly_preds, all_targets = [], [], []
    for lead in leads:
        preds, targets = [], []
        for t0 in t0s:
            valid_ts = t0 + timedelta(hours=lead)
            try:
                t_target = store.header.frame_index(valid_ts)
            except Exception:
                continue
            target = store.read_frame(var, t_target).values
            if not np.isfinite(target).all():
                continue
            preds.append(persistence(store, var, t0, lead).values)
            targets.append(target)
            clim_preds.append(clim.values)
            weekly_preds.append(weekly.lookup(valid_ts).values)
            all_targets.append(target)
        if not preds:
            raise BaselineError("no evaluable samples at lead %dh" % lead)
        pers_rmse[lead] = lw_rmse(np.stack(preds), np.stack(targets), grid)

    clim_rmse = lw_rmse(np.stack(clim_preds), np.stack(all_targets), grid)
    weekly_rmse = lw_rmse(np.stack(weekly_preds), np.stack(all_targets), grid)
    return BaselineReport(leads=leads, persistence=pers_rmse,
                          climatology=clim_rmse, weekly_climatology=weekly_rmse,
                          n_samples=len(all_targets))
