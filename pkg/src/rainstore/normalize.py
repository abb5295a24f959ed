"""Feature standardization: global stats, local area-wise (LAS) and
latitude-adjusted local area-wise (LALAS) standardization."""

import json
from dataclasses import dataclass

import numpy as np

from .grid import KM_PER_DEG, Field

STD_FLOOR = 1e-8


class NormalizeError(ValueError):
    pass


@dataclass
class VarStats:
    mean: float
    std: float
    var_name: str = ""
    computed_over: str = ""

    def to_json(self):
        return {"mean": self.mean, "std": self.std, "var_name": self.var_name,
                "computed_over": self.computed_over}

    @classmethod
    def from_json(cls, obj):
        return cls(mean=float(obj["mean"]), std=float(obj["std"]),
                   var_name=obj.get("var_name", ""),
                   computed_over=obj.get("computed_over", ""))


def identity_stats(name=""):
    return VarStats(mean=0.0, std=1.0, var_name=name, computed_over="identity")


def save_stats(stats_by_var, path):
    with open(path, "w") as f:
        json.dump({k: s.to_json() for k, s in stats_by_var.items()}, f, indent=2)
        f.write("\n")


def load_stats(path):
    with open(path) as f:
        obj = json.load(f)
    return {k: VarStats.from_json(v) for k, v in obj.items()}


def global_stats(store, name, t_range=None):
    """Population mean/std over all non-NaN cells of the frames in range.

    Two passes (exact mean first, then variance) in float64; a std below
    the floor is replaced by 1 so constant variables standardize to zero.
    """
    var = store.header.variable(name)
    if var.kind == "static":
        indices = [0]
    else:
        start, stop = t_range if t_range is not None else (0, store.header.n_steps)
        indices = range(start, stop)
        if start >= stop:
            raise NormalizeError("empty time range for %r" % name)

    total = 0.0
    count = 0
    for t in indices:
        v = store.read_frame(name, t).values.astype(np.float64)
        m = np.isfinite(v)
        total += v[m].sum()
        count += int(m.sum())
    if count == 0:
        raise NormalizeError("variable %r is all-NaN over the range" % name)
    mean = total / count

    ssq = 0.0
    for t in indices:
        v = store.read_frame(name, t).values.astype(np.float64)
        m = np.isfinite(v)
        d = v[m] - mean
        ssq += (d * d).sum()
    std = float(np.sqrt(ssq / count))
    if std < STD_FLOOR:
        std = 1.0
    over = "%s frames [%d, %d)" % (name, indices[0], indices[-1] + 1)
    return VarStats(mean=float(mean), std=std, var_name=name, computed_over=over)


def standardize_global(field, stats):
    """(x - mean) / std elementwise in float64; NaN preserved."""
    values = np.asarray(field.values, dtype=np.float64)
    return Field(grid=field.grid, values=(values - stats.mean) / stats.std,
                 units="standardized")


def destandardize_global(field, stats):
    return Field(grid=field.grid, values=field.values * stats.std + stats.mean,
                 units="")


def _force_odd(k):
    k = max(1, int(round(k)))
    return k if k % 2 == 1 else k + 1


def _row_local_standardize(values, row, lat_half, lon_k):
    """Standardize one latitude row by its (lat_k x lon_k) neighborhood.

    Latitude clamps at the outermost rows, longitude wraps; NaN neighbors
    are excluded from the local statistics."""
    n_lat, n_lon = values.shape
    rows = np.clip(np.arange(row - lat_half, row + lat_half + 1), 0, n_lat - 1)
    block = values[rows]
    hw = lon_k // 2
    if hw:
        block = np.concatenate([block[:, -hw:], block, block[:, :hw]], axis=1)
    windows = np.lib.stride_tricks.sliding_window_view(block, lon_k, axis=1)
    mask = np.isfinite(windows)
    cnt = mask.sum(axis=(0, 2))
    safe = np.maximum(cnt, 1)
    filled = np.where(mask, windows, 0.0)
    mean = filled.sum(axis=(0, 2)) / safe
    var = (filled * filled).sum(axis=(0, 2)) / safe - mean * mean
    std = np.sqrt(np.clip(var, 0.0, None))
    std = np.where(std < STD_FLOOR, 1.0, std)
    center = values[row]
    out = np.where(cnt > 0, (center - mean) / std, np.nan)
    return np.where(np.isfinite(center), out, np.nan)


def standardize_las(field, kernel_cells):
    """Local area-wise standardization over a square kernel of cells."""
    k = int(kernel_cells)
    if k % 2 == 0:
        raise NormalizeError("LAS kernel must be odd, got %d" % k)
    g = field.grid
    if k > min(g.n_lat, g.n_lon):
        raise NormalizeError("LAS kernel %d exceeds grid (%d, %d)"
                             % (k, g.n_lat, g.n_lon))
    values = np.asarray(field.values, dtype=np.float64)
    out = np.empty_like(values)
    for i in range(g.n_lat):
        out[i] = _row_local_standardize(values, i, k // 2, k)
    return Field(grid=g, values=out, units="standardized")


def lalas_lat_width(grid, base_kernel_km):
    return _force_odd(base_kernel_km / (KM_PER_DEG * grid.res_deg))


def lalas_lon_widths(grid, base_kernel_km, rounded=True):
    """Per-row longitude kernel width; 1/cos(lat) widening toward the poles.

    With rounded=False, returns the raw (pre-odd-rounding) widths."""
    cos_lat = np.cos(np.deg2rad(grid.lat_centers))
    raw = base_kernel_km / (KM_PER_DEG * grid.res_deg * cos_lat)
    if not rounded:
        return raw
    widths = np.array([_force_odd(w) for w in raw], dtype=int)
    widths = np.minimum(widths, grid.n_lon if grid.n_lon % 2 else grid.n_lon - 1)
    return np.maximum(widths, 1)


def standardize_lalas(field, base_kernel_km):
    """Latitude-adjusted LAS: the longitude kernel grows with 1/cos(lat)
    so the physical normalization context stays constant in kilometers."""
    if base_kernel_km <= 0:
        raise NormalizeError("base kernel must be positive, got %r" % base_kernel_km)
    g = field.grid
    lat_k = min(lalas_lat_width(g, base_kernel_km),
                g.n_lat if g.n_lat % 2 else g.n_lat - 1)
    lon_ks = lalas_lon_widths(g, base_kernel_km)
    values = np.asarray(field.values, dtype=np.float64)
    out = np.empty_like(values)
    for i in range(g.n_lat):
        out[i] = _row_local_standardize(values, i, lat_k // 2, int(lon_ks[i]))
    return Field(grid=g, values=out, units="standardized")
