"""Dataset diagnostics: Spearman correlations, precipitation histograms and
per-pixel class-frequency maps."""

from dataclasses import dataclass

import numpy as np
from scipy import stats as scipy_stats

from .grid import Field
from .sampler import ClassBinning, class_indices


class AnalysisError(ValueError):
    pass


def average_ranks(x):
    """Ranks 1..n with ties assigned the average of their rank positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    sx = x[order]
    i = 0
    while i < len(sx):
        j = i
        while j + 1 < len(sx) and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y):
    """Spearman rank correlation with average-rank ties and a two-sided
    t-distribution p-value; NaN pairs are dropped pairwise."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise AnalysisError("inputs must have equal length")
    keep = np.isfinite(x) & np.isfinite(y)
    x, y = x[keep], y[keep]
    n = len(x)
    if n < 3:
        raise AnalysisError("need at least 3 valid pairs, got %d" % n)
    rx = average_ranks(x)
    ry = average_ranks(y)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    sx = np.sqrt((dx * dx).sum())
    sy = np.sqrt((dy * dy).sum())
    if sx == 0.0 or sy == 0.0:
        raise AnalysisError("constant input has zero rank variance")
    rho = float((dx * dy).sum() / (sx * sy))
    rho = max(-1.0, min(1.0, rho))
    if abs(rho) == 1.0:
        return rho, 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    p = float(2.0 * scipy_stats.t.sf(abs(t), df=n - 2))
    return rho, p


@dataclass
class CorrelationReport:
    var_names: list
    rho: np.ndarray
    p_values: np.ndarray
    significant: np.ndarray  # p < 0.05
    n_points: int

    def to_json(self):
        return {
            "var_names": self.var_names,
            "rho": [[float(v) for v in row] for row in self.rho],
            "p_values": [[float(v) for v in row] for row in self.p_values],
            "significant": [[bool(v) for v in row] for row in self.significant],
            "n_points": self.n_points,
        }


def correlation_matrix(stores, var_names, lat_band=(-60.0, 60.0), t_range=None,
                       subsample=10000, seed=0):
    """Pairwise Spearman matrix over seeded uniform (t, pixel) draws inside
    a latitude band, with a p < 0.05 significance mask."""
    if not isinstance(stores, (list, tuple)):
        stores = [stores]
    if subsample < 3:
        raise AnalysisError("need at least 3 sample points")
    grid = stores[0].grid
    lo, hi = min(lat_band), max(lat_band)
    rows = np.flatnonzero((grid.lat_centers >= lo) & (grid.lat_centers <= hi))
    if len(rows) == 0:
        raise AnalysisError("latitude band contains no grid rows")

    def locate(name):
        for s in stores:
            if name in s.header.var_names():
                return s
        raise AnalysisError("variable %r not found" % name)

    n_steps = min(s.header.n_steps for s in stores)
    start, stop = t_range if t_range is not None else (0, n_steps)
    rng = np.random.default_rng(seed)
    ts = rng.integers(start, stop, size=subsample)
    ii = rows[rng.integers(0, len(rows), size=subsample)]
    jj = rng.integers(0, grid.n_lon, size=subsample)

    columns = {}
    for name in var_names:
        store = locate(name)
        var = store.header.variable(name)
        col = np.empty(subsample)
        if var.kind == "static":
            plane = store.read_frame(name).values
            col[:] = plane[ii, jj]
        else:
            for t in np.unique(ts):
                sel = ts == t
                frame = store.read_frame(name, int(t)).values
                col[sel] = frame[ii[sel], jj[sel]]
        columns[name] = col

    k = len(var_names)
    rho = np.eye(k)
    p = np.zeros((k, k))
    for a in range(k):
        for b in range(a + 1, k):
            r, pv = spearman(columns[var_names[a]], columns[var_names[b]])
            rho[a, b] = rho[b, a] = r
            p[a, b] = p[b, a] = pv
    return CorrelationReport(var_names=list(var_names), rho=rho, p_values=p,
                             significant=p < 0.05, n_points=subsample)


@dataclass
class HistogramReport:
    bin_edges: np.ndarray  # log-spaced over (0, max]
    counts: np.ndarray
    zero_count: int
    negative_clipped: int
    class_edges: tuple
    total: int

    def to_json(self):
        return {
            "bin_edges": [float(v) for v in self.bin_edges],
            "counts": [int(v) for v in self.counts],
            "zero_count": self.zero_count,
            "negative_clipped": self.negative_clipped,
            "class_edges": list(self.class_edges),
            "total": self.total,
        }


def precip_histogram(store, var, t_range=None, n_bins=50, binning=None):
    """Log-binned precipitation histogram; zeros counted separately and
    negatives clipped to zero (count reported)."""
    binning = binning or ClassBinning()
    start, stop = t_range if t_range is not None else (0, store.header.n_steps)
    values = store.read_window(var, range(start, stop)).astype(np.float64)
    values = values[np.isfinite(values)]
    negative = int((values < 0).sum())
    values = np.clip(values, 0.0, None)
    zeros = int((values == 0).sum())
    positive = values[values > 0]
    if len(positive):
        lo = positive.min()
        hi = positive.max()
        if lo == hi:
            hi = lo * (1 + 1e-9)
        edges = np.logspace(np.log10(lo), np.log10(hi), n_bins + 1)
        edges[0] = lo  # guard against round-down excluding the minimum
        edges[-1] = hi
        counts, _ = np.histogram(positive, bins=edges)
    else:
        edges = np.array([0.0, 1.0])
        counts = np.zeros(1, dtype=int)
    return HistogramReport(bin_edges=edges, counts=counts, zero_count=zeros,
                           negative_clipped=negative,
                           class_edges=binning.edges, total=len(values))


def class_frequency_map(store, var, binning=None, t_range=None):
    """Per-pixel percentage of frames in each intensity class; the maps
    sum to 100% per pixel."""
    binning = binning or ClassBinning()
    start, stop = t_range if t_range is not None else (0, store.header.n_steps)
    if start >= stop:
        raise AnalysisError("empty time range")
    g = store.grid
    counts = np.zeros((len(binning.labels), g.n_lat, g.n_lon))
    valid = np.zeros((g.n_lat, g.n_lon))
    for t in range(start, stop):
        v = store.read_frame(var, t).values
        m = np.isfinite(v)
        cls = class_indices(np.where(m, v, 0.0), binning)
        for idx in range(len(binning.labels)):
            counts[idx] += (cls == idx) & m
        valid += m
    with np.errstate(invalid="ignore"):
        pct = 100.0 * counts / np.maximum(valid, 1)
        pct = np.where(valid > 0, pct, np.nan)
    units = "% of events"
    return {label: Field(grid=g, values=pct[idx], units=units)
            for idx, label in enumerate(binning.labels)}
