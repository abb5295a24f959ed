"""Regular global latitude/longitude grids, latitude weights and resampling."""

from dataclasses import dataclass, field

import numpy as np

# kilometres per degree of great-circle arc (mean Earth radius 6371 km)
KM_PER_DEG = 111.195


class GridError(ValueError):
    """Invalid grid definition or grid/field mismatch."""


@dataclass(frozen=True)
class GridSpec:
    """Regular global grid with cell centers offset half a cell from the poles.

    Latitude centers run north to south (index 0 is the northernmost row),
    longitude centers run east from the prime meridian over [0, 360).
    """

    n_lat: int
    n_lon: int
    res_deg: float
    lat_centers: np.ndarray = field(repr=False)
    lon_centers: np.ndarray = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, GridSpec):
            return NotImplemented
        return (
            self.n_lat == other.n_lat
            and self.n_lon == other.n_lon
            and abs(self.res_deg - other.res_deg) < 1e-12
        )

    def __hash__(self):
        return hash((self.n_lat, self.n_lon, round(self.res_deg, 12)))

    def to_json(self):
        return {
            "n_lat": self.n_lat,
            "n_lon": self.n_lon,
            "res_deg": self.res_deg,
            "lat_centers": [float(v) for v in self.lat_centers],
            "lon_centers": [float(v) for v in self.lon_centers],
        }

    @classmethod
    def from_json(cls, obj):
        g = make_grid(float(obj["res_deg"]))
        if g.n_lat != int(obj["n_lat"]) or g.n_lon != int(obj["n_lon"]):
            raise GridError(
                "grid dimensions %r x %r inconsistent with res_deg=%r"
                % (obj["n_lat"], obj["n_lon"], obj["res_deg"])
            )
        return g


@dataclass
class Field:
    """One gridded variable snapshot; missing data is quiet NaN."""

    grid: GridSpec
    values: np.ndarray
    units: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.grid.n_lat, self.grid.n_lon):
            raise GridError(
                "field shape %s does not match grid (%d, %d)"
                % (self.values.shape, self.grid.n_lat, self.grid.n_lon)
            )


def make_grid(res_deg):
    """Build the regular global grid at the given resolution in degrees."""
    for span, name in ((180.0, "latitude"), (360.0, "longitude")):
        n = span / res_deg
        if abs(n - round(n)) > 1e-9:
            raise GridError(
                "resolution %g deg does not divide the %s span of %g deg"
                % (res_deg, name, span)
            )
    n_lat = int(round(180.0 / res_deg))
    n_lon = int(round(360.0 / res_deg))
    lat = 90.0 - res_deg / 2.0 - res_deg * np.arange(n_lat)
    lon = res_deg / 2.0 + res_deg * np.arange(n_lon)
    lat.setflags(write=False)
    lon.setflags(write=False)
    return GridSpec(n_lat=n_lat, n_lon=n_lon, res_deg=float(res_deg),
                    lat_centers=lat, lon_centers=lon)


def latitude_weights(grid):
    """Per-row weights proportional to cos(latitude), normalized to mean 1."""
    w = np.cos(np.deg2rad(grid.lat_centers))
    return w / w.mean()


def _lon_interp_indices(dst_lon, src_lon, n_src):
    """Wrapped bracketing indices and weights along longitude."""
    res = src_lon[1] - src_lon[0] if n_src > 1 else 360.0
    t = (dst_lon - src_lon[0]) / res
    f = np.floor(t)
    frac = t - f
    j0 = (f.astype(int)) % n_src
    j1 = (f.astype(int) + 1) % n_src
    return j0, j1, frac


def _lat_interp_indices(dst_lat, src_lat):
    """Clamped bracketing indices and weights along (decreasing) latitude."""
    n = len(src_lat)
    # searchsorted needs ascending order; latitudes decrease northward-first
    asc = src_lat[::-1]
    pos = np.searchsorted(asc, dst_lat, side="right")
    hi_asc = np.clip(pos, 1, n - 1) if n > 1 else np.zeros_like(pos)
    lo_asc = hi_asc - 1
    if n == 1:
        i0 = np.zeros(len(dst_lat), dtype=int)
        return i0, i0, np.zeros(len(dst_lat))
    lat_lo = asc[lo_asc]
    lat_hi = asc[hi_asc]
    frac = (dst_lat - lat_lo) / (lat_hi - lat_lo)
    frac = np.clip(frac, 0.0, 1.0)  # clamp beyond outermost centers
    # convert ascending indices back to the stored descending order
    i_lo = n - 1 - lo_asc
    i_hi = n - 1 - hi_asc
    # weight `frac` applies to the higher-latitude (ascending) neighbor
    return i_lo, i_hi, frac


def regrid_bilinear(src, dst):
    """Bilinear interpolation of a field onto destination cell centers.

    Longitude wraps periodically; latitudes beyond the outermost source
    centers clamp to the nearest source row. NaN in any contributing source
    cell propagates to the destination cell.
    """
    if not isinstance(src, Field):
        raise GridError("regrid_bilinear expects a Field")
    sg, values = src.grid, np.asarray(src.values, dtype=np.float64)
    i0, i1, wlat = _lat_interp_indices(dst.lat_centers, sg.lat_centers)
    j0, j1, wlon = _lon_interp_indices(dst.lon_centers, sg.lon_centers, sg.n_lon)
    wlat = wlat[:, None]
    wlon = wlon[None, :]
    v00 = values[np.ix_(i0, j0)]
    v01 = values[np.ix_(i0, j1)]
    v10 = values[np.ix_(i1, j0)]
    v11 = values[np.ix_(i1, j1)]
    lo = v00 * (1.0 - wlon) + v01 * wlon
    hi = v10 * (1.0 - wlon) + v11 * wlon
    out = lo * (1.0 - wlat) + hi * wlat
    return Field(grid=dst, values=out, units=src.units)


def downscale_maxpool(src, factor):
    """Block-max downscaling preserving pixel-wise extremes.

    NaN cells are ignored unless the whole block is NaN.
    """
    factor = int(factor)
    if factor < 1:
        raise GridError("pool factor must be a positive integer")
    g = src.grid
    if g.n_lat % factor or g.n_lon % factor:
        raise GridError(
            "grid (%d, %d) not divisible by pool factor %d"
            % (g.n_lat, g.n_lon, factor)
        )
    if factor == 1:
        return Field(grid=g, values=src.values.copy(), units=src.units)
    blocks = src.values.reshape(g.n_lat // factor, factor,
                                g.n_lon // factor, factor)
    blocks = blocks.swapaxes(1, 2).reshape(g.n_lat // factor,
                                           g.n_lon // factor, factor * factor)
    all_nan = np.all(np.isnan(blocks), axis=-1)
    filled = np.where(np.isnan(blocks), -np.inf, blocks)
    out = filled.max(axis=-1)
    out = np.where(all_nan, np.nan, out)
    return Field(grid=make_grid(g.res_deg * factor), values=out, units=src.units)
