"""Raster ingestion and environment construction.

Rasters are kept in file order (northern row first).  Everything that turns a
raster into a model layer flips rows so that model row 0 is the southern edge.
"""
from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .grid import OFFSETS, FuelField, GridState, WindField, new_grid

HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
_ALIASES = {"xllcenter": "xllcorner", "yllcenter": "yllcorner"}
_INT_TOKEN = re.compile(r"[+-]?\d+\Z")


class RasterError(ValueError):
    """Malformed or inconsistent raster input."""


@dataclass(frozen=True, eq=False)
class Raster:
    values: np.ndarray
    cellsize: float
    xll: float = 0.0
    yll: float = 0.0
    nodata: float | int | None = None
    centered: bool = False

    def __post_init__(self):
        values = np.asarray(self.values)
        if values.ndim != 2 or min(values.shape) < 1:
            raise RasterError(f"raster must be at least 1x1, got shape {values.shape}")
        if not self.cellsize > 0:
            raise RasterError("cellsize must be positive")
        object.__setattr__(self, "values", values)

    @property
    def dims(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def nodata_mask(self) -> np.ndarray:
        if self.nodata is None:
            return np.zeros(self.dims, dtype=bool)
        return self.values == self.nodata

    def to_model(self) -> np.ndarray:
        """Values with rows flipped into model orientation (row 0 = south)."""
        return self.values[::-1].copy()


def _number(token: str):
    if _INT_TOKEN.match(token):
        return int(token)
    try:
        return float(token)
    except ValueError:
        raise RasterError(f"non-numeric token {token!r}") from None


def parse_ascii_grid(stream) -> Raster:
    """Read an ESRI ASCII grid from a text stream or string."""
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    lines = [ln for ln in stream.read().splitlines() if ln.strip()]
    header: dict[str, object] = {}
    centered = False
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if not parts[0][0].isalpha():
            break
        if len(parts) != 2:
            raise RasterError(f"malformed header line: {lines[i]!r}")
        key = parts[0].lower()
        centered = centered or key in _ALIASES
        key = _ALIASES.get(key, key)
        if key not in HEADER_KEYS:
            raise RasterError(f"unknown header key {parts[0]!r}")
        header[key] = _number(parts[1])
        i += 1
    for key in HEADER_KEYS[:5]:
        if key not in header:
            raise RasterError(f"missing header key {key!r}")
    ncols, nrows = header["ncols"], header["nrows"]
    if not (isinstance(ncols, int) and isinstance(nrows, int)) or ncols < 1 or nrows < 1:
        raise RasterError("ncols and nrows must be positive integers")
    rows = lines[i:]
    if len(rows) != nrows:
        raise RasterError(f"header declares {nrows} rows, found {len(rows)}")
    tokens = []
    for r, line in enumerate(rows):
        parts = line.split()
        if len(parts) != ncols:
            raise RasterError(f"row {r} has {len(parts)} values, header declares ncols={ncols}")
        tokens.append([_number(t) for t in parts])
    integral = all(isinstance(v, int) for row in tokens for v in row)
    values = np.array(tokens, dtype=np.int64 if integral else np.float64)
    return Raster(values, float(header["cellsize"]), float(header["xllcorner"]), float(header["yllcorner"]),
                  header.get("nodata_value"), centered)


def read_ascii_grid(path) -> Raster:
    with open(path, encoding="ascii") as fh:
        return parse_ascii_grid(fh)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def serialize_ascii_grid(raster: Raster) -> str:
    """ASCII grid text; floats use shortest round-trip repr so re-reading is exact."""
    ll = "center" if raster.centered else "corner"
    out = [
        f"ncols {raster.dims[1]}",
        f"nrows {raster.dims[0]}",
        f"xll{ll} {_fmt(raster.xll)}",
        f"yll{ll} {_fmt(raster.yll)}",
        f"cellsize {_fmt(raster.cellsize)}",
    ]
    if raster.nodata is not None:
        out.append(f"NODATA_value {_fmt(raster.nodata)}")
    integral = raster.values.dtype.kind in "iu"
    for row in raster.values:
        out.append(" ".join(str(int(v)) if integral else repr(float(v)) for v in row))
    return "\n".join(out) + "\n"


def write_ascii_grid(path, raster: Raster) -> None:
    Path(path).write_text(serialize_ascii_grid(raster), encoding="ascii")


# -- terrain -------------------------------------------------------------------


def slope_from_elevation(elev: np.ndarray, cellsize: float, nodata_mask: np.ndarray | None = None) -> np.ndarray:
    """Inclination (radians) from each cell toward each neighbor, model orientation.

    Out-of-bounds directions and any direction touching a nodata cell get 0.
    """
    elev = np.asarray(elev, dtype=np.float64)
    h, w = elev.shape
    bad = np.zeros((h, w), dtype=bool) if nodata_mask is None else np.asarray(nodata_mask, dtype=bool)
    padded = np.pad(elev, 1)
    padded_bad = np.pad(bad, 1, constant_values=True)
    slope = np.zeros((len(OFFSETS), h, w))
    for k, d in enumerate(OFFSETS):
        nb = padded[1 + d.dy:1 + d.dy + h, 1 + d.dx:1 + d.dx + w]
        nb_bad = padded_bad[1 + d.dy:1 + d.dy + h, 1 + d.dx:1 + d.dx + w]
        s = np.arctan((nb - elev) / (cellsize * d.length))
        s[nb_bad | bad] = 0.0
        slope[k] = s
    return slope


def slope_from_dem(dem: Raster) -> np.ndarray:
    """8-direction slope field ``(8, H, W)`` in model orientation."""
    return slope_from_elevation(dem.to_model(), dem.cellsize, dem.nodata_mask[::-1])


# -- fuel ----------------------------------------------------------------------


class FuelTable:
    """Landcover class code -> ``(mu_veg, mu_den)`` lookup with optional default."""

    def __init__(self, entries: dict[int, tuple[float, float]], default: tuple[float, float] | None = None):
        for code, pair in list(entries.items()) + ([("default", default)] if default else []):
            if len(pair) != 2 or not all(-1.0 <= float(x) <= 1.0 for x in pair):
                raise ValueError(f"fuel entry {code}: modifiers must lie in [-1, 1], got {pair}")
        self.entries = {int(k): (float(v[0]), float(v[1])) for k, v in entries.items()}
        self.default = None if default is None else (float(default[0]), float(default[1]))

    def __getitem__(self, code: int) -> tuple[float, float]:
        try:
            return self.entries[int(code)]
        except KeyError:
            if self.default is None:
                raise KeyError(f"landcover code {int(code)} missing from fuel table") from None
            return self.default

    @classmethod
    def parse(cls, text: str) -> FuelTable:
        """Parse ``code mu_veg mu_den`` lines; ``#`` starts a comment, ``default`` is a code."""
        entries, default = {}, None
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"fuel table line {lineno}: expected 'code mu_veg mu_den'")
            try:
                pair = (float(parts[1]), float(parts[2]))
                if parts[0].lower() == "default":
                    default = pair
                else:
                    entries[int(parts[0])] = pair
            except ValueError:
                raise ValueError(f"fuel table line {lineno}: bad number in {raw!r}") from None
        return cls(entries, default)

    @classmethod
    def load(cls, path) -> FuelTable:
        return cls.parse(Path(path).read_text())

    @classmethod
    def worldcover(cls) -> FuelTable:
        """The shipped heuristic table for the 11 ESA WorldCover classes."""
        return cls.parse(resources.files("emberline.data").joinpath("worldcover_fuel.txt").read_text())


def fuel_from_landcover(lc: Raster, table: FuelTable) -> FuelField:
    """Look up fuel modifiers per cell; nodata cells become unburnable."""
    codes = lc.to_model()
    if codes.dtype.kind == "f":
        if not np.all(codes == np.round(codes)):
            raise RasterError("landcover raster must be integer-valued")
        codes = codes.astype(np.int64)
    nodata = lc.nodata_mask[::-1]
    veg = np.full(codes.shape, -1.0)
    den = np.full(codes.shape, -1.0)
    for code in np.unique(codes[~nodata]):
        v, d = table[code]
        sel = (codes == code) & ~nodata
        veg[sel], den[sel] = v, d
    return FuelField(veg, den)


def environment_from_rasters(dem: Raster, landcover: Raster, table: FuelTable, *,
                             wind: WindField | None = None) -> GridState:
    """GridState with no fire, from matching DEM and landcover rasters."""
    if dem.dims != landcover.dims:
        raise RasterError(f"DEM {dem.dims} and landcover {landcover.dims} differ in size")
    if not math.isclose(dem.cellsize, landcover.cellsize, rel_tol=1e-9):
        raise RasterError(f"DEM cellsize {dem.cellsize} != landcover cellsize {landcover.cellsize}")
    fuel = fuel_from_landcover(landcover, table)
    no_elev = dem.nodata_mask[::-1]
    if no_elev.any():
        fuel = FuelField(np.where(no_elev, -1.0, fuel.veg), np.where(no_elev, -1.0, fuel.den))
    dims = dem.dims
    return new_grid(dims, np.zeros(dims, dtype=np.int8), wind or WindField.uniform(dims),
                    fuel, slope_from_dem(dem))


# -- synthetic -----------------------------------------------------------------


def _smooth_noise(rng: np.random.Generator, dims, sigma: float) -> np.ndarray:
    noise = gaussian_filter(rng.standard_normal(dims), sigma=sigma, mode="reflect")
    std = noise.std()
    return noise / std if std > 0 else noise


def synthetic_environment(dims, seed: int, *, forest_density: float = 0.7, roughness: float = 20.0,
                          cellsize: float = 30.0, smoothness: float = 3.0) -> GridState:
    """Random forest on rolling terrain.

    ``forest_density`` is the fraction of burnable cells, ``roughness`` the
    elevation standard deviation in meters.  Burnable cells get fuel modifiers
    in roughly [-0.4, 0.6]; the rest are set unburnable.  Wind starts calm.
    """
    dims = tuple(int(n) for n in dims)
    if len(dims) != 2 or min(dims) < 2:
        raise ValueError("synthetic environments need at least 2x2 cells")
    if not 0.0 <= forest_density <= 1.0:
        raise ValueError("forest_density must lie in [0, 1]")
    if roughness < 0:
        raise ValueError("roughness must be nonnegative")
    rng = np.random.default_rng(seed)
    elevation = roughness * _smooth_noise(rng, dims, smoothness)
    cover = _smooth_noise(rng, dims, smoothness)
    texture = _smooth_noise(rng, dims, 1.0)
    if forest_density >= 1.0:
        forest = np.ones(dims, dtype=bool)
    elif forest_density <= 0.0:
        forest = np.zeros(dims, dtype=bool)
    else:
        forest = cover >= np.quantile(cover, 1.0 - forest_density)
    veg = np.where(forest, np.clip(0.1 + 0.25 * texture, -0.4, 0.6), -1.0)
    den = np.where(forest, np.clip(0.1 + 0.25 * cover, -0.4, 0.6), -1.0)
    return new_grid(dims, np.zeros(dims, dtype=np.int8), WindField.uniform(dims),
                    FuelField(veg, den), slope_from_elevation(elevation, cellsize))
