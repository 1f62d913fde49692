"""Procedural heightfield terrains with surface, edge, and projection queries.

Heights are stored per cell and queries are cell-constant (no interpolation),
so stair treads and stone tops are exactly flat. All feature terrains keep a
flat approach pad for x < 0; features start at x = 0 and extend toward +x.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .fileio import atomic_write_text

# Query defaults; override per call where a keyword is exposed.
HORIZONTAL_EPS = 0.02  # max neighbor height difference for a "horizontal" cell
EDGE_SEARCH_RADIUS = 1.0  # cap for edge-distance queries and projection search
DEFAULT_EDGE_MARGIN = 0.05
DEFAULT_RESOLUTION = 0.05
DEFAULT_GAP_DEPTH = 1.0


class InvalidTerrainError(ValueError):
    pass


class TerrainKind(str, Enum):
    FLAT = "flat"
    ROUGH = "rough"
    SLOPE = "slope"
    STAIRS_UP = "stairs_up"
    STAIRS_DOWN = "stairs_down"
    STEPPING_STONES = "stepping_stones"
    NARROW_BEAM = "narrow_beam"


_PARAM_DEFAULTS: dict[str, float] = {
    "length": 12.0,
    "width": 6.0,
    "pad": 2.0,
    "amplitude": 0.05,
    "feature_size": 0.4,
    "angle": 0.2,
    "step_width": 0.25,
    "step_height": 0.2,
    "num_steps": 0.0,  # 0 = fill the grid
    "stone_size": 0.35,
    "gap": 0.2,
    "gap_depth": DEFAULT_GAP_DEPTH,
    "height_var": 0.0,
    "beam_width": 0.3,
}


@dataclass
class TerrainSpec:
    """Recipe for one terrain: kind, kind-specific parameters, and a seed."""

    kind: TerrainKind
    params: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    resolution: float = DEFAULT_RESOLUTION

    def param(self, name: str) -> float:
        return float(self.params.get(name, _PARAM_DEFAULTS[name]))

    def validate(self) -> None:
        if self.resolution <= 0.0:
            raise InvalidTerrainError("resolution must be positive")
        if self.param("length") <= 0.0 or self.param("width") <= 0.0:
            raise InvalidTerrainError("terrain extents must be positive")
        kind = TerrainKind(self.kind)
        if kind in (TerrainKind.STAIRS_UP, TerrainKind.STAIRS_DOWN):
            if self.param("step_width") <= 0.0:
                raise InvalidTerrainError("step_width must be positive")
            if self.param("step_height") < 0.0:
                raise InvalidTerrainError("step_height must be non-negative")
        if kind is TerrainKind.STEPPING_STONES:
            if self.param("stone_size") <= 0.0:
                raise InvalidTerrainError("stone_size must be positive")
            if self.param("gap") < 0.0:
                raise InvalidTerrainError("gap must be non-negative")
        if kind is TerrainKind.NARROW_BEAM and self.param("beam_width") <= 0.0:
            raise InvalidTerrainError("beam_width must be positive")

    def scaled(self, factor: float) -> "TerrainSpec":
        """Difficulty-scaled copy: feature magnitudes shrink toward flat as factor -> 0."""
        f = min(max(factor, 0.0), 1.0)
        p = dict(self.params)
        kind = TerrainKind(self.kind)
        if kind in (TerrainKind.STAIRS_UP, TerrainKind.STAIRS_DOWN):
            p["step_height"] = self.param("step_height") * f
        elif kind is TerrainKind.ROUGH:
            p["amplitude"] = self.param("amplitude") * f
        elif kind is TerrainKind.SLOPE:
            p["angle"] = self.param("angle") * f
        elif kind is TerrainKind.STEPPING_STONES:
            p["gap"] = self.param("gap") * f
            p["height_var"] = self.param("height_var") * f
        elif kind is TerrainKind.NARROW_BEAM:
            # Wide and easy at factor 0, narrowing to the target width.
            easy = max(self.param("beam_width"), 0.8)
            p["beam_width"] = easy + (self.param("beam_width") - easy) * f
        return TerrainSpec(kind=kind, params=p, seed=self.seed, resolution=self.resolution)


@dataclass
class Heightfield:
    """Grid terrain. heights[ix, iy] is the elevation of the cell whose corner
    is origin + (ix, iy) * resolution; queries clamp to the boundary cells."""

    resolution: float
    size_x: int
    size_y: int
    heights: np.ndarray  # (size_x, size_y)
    origin: np.ndarray  # world XY of cell (0, 0)'s corner

    def __post_init__(self) -> None:
        self.heights = np.asarray(self.heights, dtype=np.float64)
        self.origin = np.asarray(self.origin, dtype=np.float64)
        if self.resolution <= 0.0:
            raise InvalidTerrainError("resolution must be positive")
        if self.heights.shape != (self.size_x, self.size_y):
            raise InvalidTerrainError("heights shape does not match size_x/size_y")
        if not np.all(np.isfinite(self.heights)):
            raise InvalidTerrainError("heights must be finite")
        self._horizontal: np.ndarray | None = None
        self._edge_dist: np.ndarray | None = None

    # -- indexing ---------------------------------------------------------

    def cell_index(self, x, y):
        ix = np.clip(np.floor((np.asarray(x) - self.origin[0]) / self.resolution), 0, self.size_x - 1)
        iy = np.clip(np.floor((np.asarray(y) - self.origin[1]) / self.resolution), 0, self.size_y - 1)
        return ix.astype(np.int64), iy.astype(np.int64)

    def cell_center(self, ix, iy):
        cx = self.origin[0] + (np.asarray(ix) + 0.5) * self.resolution
        cy = self.origin[1] + (np.asarray(iy) + 0.5) * self.resolution
        return cx, cy

    # -- cached masks -----------------------------------------------------

    @property
    def horizontal_mask(self) -> np.ndarray:
        if self._horizontal is None:
            h = self.heights
            ok = np.ones(h.shape, dtype=bool)
            d = np.abs(np.diff(h, axis=0)) < HORIZONTAL_EPS
            ok[:-1] &= d
            ok[1:] &= d
            d = np.abs(np.diff(h, axis=1)) < HORIZONTAL_EPS
            ok[:, :-1] &= d
            ok[:, 1:] &= d
            self._horizontal = ok
        return self._horizontal

    @property
    def edge_dist_grid(self) -> np.ndarray:
        """Per cell: XY distance from the cell center to the center of the
        nearest cell differing by more than HORIZONTAL_EPS, capped at
        EDGE_SEARCH_RADIUS."""
        if self._edge_dist is None:
            h = self.heights
            res = self.resolution
            nx, ny = h.shape
            cap = EDGE_SEARCH_RADIUS
            kmax = int(math.ceil(cap / res))
            offsets = []
            for dx in range(-kmax, kmax + 1):
                for dy in range(-kmax, kmax + 1):
                    if dx == 0 and dy == 0:
                        continue
                    d = res * math.hypot(dx, dy)
                    if d <= cap:
                        offsets.append((d, dx, dy))
            offsets.sort()
            dist = np.full(h.shape, cap)
            for d, dx, dy in offsets:
                sl_dst_x = slice(max(0, -dx), nx - max(0, dx))
                sl_dst_y = slice(max(0, -dy), ny - max(0, dy))
                sl_src_x = slice(max(0, dx), nx + min(0, dx))
                sl_src_y = slice(max(0, dy), ny + min(0, dy))
                differs = (
                    np.abs(h[sl_src_x, sl_src_y] - h[sl_dst_x, sl_dst_y]) > HORIZONTAL_EPS
                )
                block = dist[sl_dst_x, sl_dst_y]
                np.minimum(block, np.where(differs, d, cap), out=block)
            self._edge_dist = dist
        return self._edge_dist


# -- queries ---------------------------------------------------------------


def height_at(hf: Heightfield, x, y):
    """Stored height of the cell containing (x, y); out-of-range clamps."""
    ix, iy = hf.cell_index(x, y)
    return hf.heights[ix, iy]


def edge_distance(hf: Heightfield, p: np.ndarray) -> float:
    """XY distance from p to the center of the nearest cell whose height
    differs from p's cell by more than HORIZONTAL_EPS; EDGE_SEARCH_RADIUS
    when no such cell lies within the cap."""
    res = hf.resolution
    cap = EDGE_SEARCH_RADIUS
    ix, iy = (int(v) for v in hf.cell_index(p[0], p[1]))
    h_here = hf.heights[ix, iy]
    k = int(math.ceil(cap / res)) + 1
    x0, x1 = max(0, ix - k), min(hf.size_x, ix + k + 1)
    y0, y1 = max(0, iy - k), min(hf.size_y, iy + k + 1)
    window = hf.heights[x0:x1, y0:y1]
    differs = np.abs(window - h_here) > HORIZONTAL_EPS
    if not differs.any():
        return cap
    cx = hf.origin[0] + (np.arange(x0, x1) + 0.5) * res
    cy = hf.origin[1] + (np.arange(y0, y1) + 0.5) * res
    d2 = (cx[:, None] - p[0]) ** 2 + (cy[None, :] - p[1]) ** 2
    dmin = math.sqrt(float(d2[differs].min()))
    return min(dmin, cap)


def _cell_valid(hf: Heightfield, ix: int, iy: int, edge_margin: float) -> bool:
    return bool(hf.horizontal_mask[ix, iy]) and float(hf.edge_dist_grid[ix, iy]) >= edge_margin


def nearest_horizontal_surface(
    hf: Heightfield, p: np.ndarray, edge_margin: float = DEFAULT_EDGE_MARGIN
) -> np.ndarray | None:
    """Closest surface point to p (3D Euclidean) whose cell is horizontal and
    at least edge_margin from any edge; None if no candidate lies within
    EDGE_SEARCH_RADIUS. The query point's own cell keeps p's XY; other cells
    contribute their centers, ties broken by lowest (ix, iy). Distance is
    measured in 3D so points hovering over a chasm project to the nearest
    walkable top, not to the chasm floor below them."""
    res = hf.resolution
    ix, iy = (int(v) for v in hf.cell_index(p[0], p[1]))

    if hf.horizontal_mask[ix, iy] and abs(hf.heights[ix, iy] - p[2]) < res:
        # Near-surface fast path: nothing can beat the own cell's snap.
        d_cached = float(hf.edge_dist_grid[ix, iy])
        if d_cached >= edge_margin + res or (
            d_cached + res >= edge_margin and edge_distance(hf, p) >= edge_margin
        ):
            return np.array([p[0], p[1], hf.heights[ix, iy]])

    cap = EDGE_SEARCH_RADIUS
    best: tuple[float, int, int] | None = None
    kmax = int(math.ceil(cap / res)) + 1
    for ring in range(0, kmax + 1):
        if best is not None and (ring - 1) * res > best[0] + 1e-12:
            break
        cells = (
            [(ix, iy)] if ring == 0 else _ring_cells(ix, iy, ring, hf.size_x, hf.size_y)
        )
        for jx, jy in cells:
            if not (0 <= jx < hf.size_x and 0 <= jy < hf.size_y):
                continue
            if jx == ix and jy == iy:
                if not hf.horizontal_mask[jx, jy]:
                    continue
                q = (p[0], p[1], hf.heights[jx, jy])
                if edge_distance(hf, np.asarray(q)) < edge_margin:
                    continue
                d = abs(q[2] - p[2])
            else:
                if not _cell_valid(hf, jx, jy, edge_margin):
                    continue
                cx, cy = hf.cell_center(jx, jy)
                q = (float(cx), float(cy), hf.heights[jx, jy])
                d = math.sqrt(
                    (q[0] - p[0]) ** 2 + (q[1] - p[1]) ** 2 + (q[2] - p[2]) ** 2
                )
            if d > cap:
                continue
            cand = (d, jx, jy)
            if best is None or cand < best:
                best = cand
    if best is None:
        return None
    _, jx, jy = best
    if jx == ix and jy == iy:
        return np.array([p[0], p[1], hf.heights[jx, jy]])
    cx, cy = hf.cell_center(jx, jy)
    return np.array([float(cx), float(cy), hf.heights[jx, jy]])


def _ring_cells(ix: int, iy: int, ring: int, nx: int, ny: int):
    lo_x, hi_x = ix - ring, ix + ring
    lo_y, hi_y = iy - ring, iy + ring
    for jx in range(max(0, lo_x), min(nx - 1, hi_x) + 1):
        for jy in (lo_y, hi_y):
            if 0 <= jy < ny:
                yield jx, jy
    for jy in range(max(0, lo_y + 1), min(ny - 1, hi_y - 1) + 1):
        for jx in (lo_x, hi_x):
            if 0 <= jx < nx:
                yield jx, jy


# -- generators --------------------------------------------------------------


def generate_terrain(spec: TerrainSpec) -> Heightfield:
    """Build the heightfield for a spec; bit-identical for equal seeds."""
    spec.validate()
    res = spec.resolution
    pad = spec.param("pad")
    length, width = spec.param("length"), spec.param("width")
    nx = int(round(length / res))
    ny = int(round(width / res))
    origin = np.array([-pad, -width / 2.0])
    cx = origin[0] + (np.arange(nx) + 0.5) * res  # (nx,)
    cy = origin[1] + (np.arange(ny) + 0.5) * res  # (ny,)
    kind = TerrainKind(spec.kind)

    if kind is TerrainKind.FLAT:
        heights = np.zeros((nx, ny))
    elif kind is TerrainKind.SLOPE:
        heights = np.where(cx >= 0.0, math.tan(spec.param("angle")) * cx, 0.0)[:, None].repeat(
            ny, axis=1
        )
    elif kind in (TerrainKind.STAIRS_UP, TerrainKind.STAIRS_DOWN):
        idx = np.floor(cx / spec.param("step_width"))
        num = spec.param("num_steps")
        idx = np.clip(idx, 0.0, num if num > 0 else None)
        sign = 1.0 if kind is TerrainKind.STAIRS_UP else -1.0
        heights = (sign * spec.param("step_height") * idx)[:, None].repeat(ny, axis=1)
    elif kind is TerrainKind.STEPPING_STONES:
        heights = _stepping_stones(spec, cx, cy)
    elif kind is TerrainKind.NARROW_BEAM:
        on_beam = np.abs(cy) < spec.param("beam_width") / 2.0
        heights = np.where(
            (cx[:, None] < 0.0) | on_beam[None, :], 0.0, -spec.param("gap_depth")
        )
    elif kind is TerrainKind.ROUGH:
        heights = _rough(spec, cx, cy)
    else:  # pragma: no cover - enum is exhaustive
        raise InvalidTerrainError(f"unknown terrain kind {spec.kind!r}")

    return Heightfield(resolution=res, size_x=nx, size_y=ny, heights=heights, origin=origin)


def _stepping_stones(spec: TerrainSpec, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    stone = spec.param("stone_size")
    period = stone + spec.param("gap")
    # Align a stone centered on y = 0 so a straight path exists.
    in_x = np.mod(cx, period) < stone
    in_y = np.mod(cy + stone / 2.0, period) < stone
    on_stone = in_x[:, None] & in_y[None, :]
    heights = np.where(on_stone, 0.0, -spec.param("gap_depth"))
    var = spec.param("height_var")
    if var > 0.0:
        rng = np.random.default_rng(spec.seed)
        sx = np.floor(cx / period).astype(int)
        sy = np.floor((cy + stone / 2.0) / period).astype(int)
        tops = rng.uniform(-var, var, size=(sx.max() - sx.min() + 1, sy.max() - sy.min() + 1))
        heights = np.where(on_stone, tops[sx[:, None] - sx.min(), sy[None, :] - sy.min()], heights)
    heights[cx < 0.0, :] = 0.0
    return heights


def _rough(spec: TerrainSpec, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    rng = np.random.default_rng(spec.seed)
    amp = spec.param("amplitude")
    feat = max(spec.param("feature_size"), 2.0 * spec.resolution)
    gx = np.arange(math.floor(cx[0] / feat), math.ceil(cx[-1] / feat) + 2) * feat
    gy = np.arange(math.floor(cy[0] / feat), math.ceil(cy[-1] / feat) + 2) * feat
    coarse = rng.uniform(-amp, amp, size=(len(gx), len(gy)))
    # Bilinear upsample of the coarse noise grid at the cell centers.
    fx = np.clip((cx - gx[0]) / feat, 0.0, len(gx) - 1.001)
    fy = np.clip((cy - gy[0]) / feat, 0.0, len(gy) - 1.001)
    ix, tx = np.floor(fx).astype(int), fx - np.floor(fx)
    iy, ty = np.floor(fy).astype(int), fy - np.floor(fy)
    h00 = coarse[np.ix_(ix, iy)]
    h10 = coarse[np.ix_(ix + 1, iy)]
    h01 = coarse[np.ix_(ix, iy + 1)]
    h11 = coarse[np.ix_(ix + 1, iy + 1)]
    wx = tx[:, None]
    wy = ty[None, :]
    heights = (
        h00 * (1 - wx) * (1 - wy) + h10 * wx * (1 - wy) + h01 * (1 - wx) * wy + h11 * wx * wy
    )
    # Flat pad, ramping the noise in over the first half meter of features.
    ramp = np.clip(cx / 0.5, 0.0, 1.0)[:, None]
    return heights * ramp


# -- serialization -----------------------------------------------------------


def terrain_to_dict(spec: TerrainSpec, hf: Heightfield) -> dict:
    return {
        "kind": TerrainKind(spec.kind).value,
        "parameters": {k: float(v) for k, v in spec.params.items()},
        "seed": int(spec.seed),
        "resolution": float(hf.resolution),
        "origin": [float(hf.origin[0]), float(hf.origin[1])],
        "size_x": int(hf.size_x),
        "size_y": int(hf.size_y),
        "heights": [float(v) for v in hf.heights.reshape(-1)],
    }


def terrain_from_dict(data: dict) -> tuple[TerrainSpec, Heightfield]:
    spec = TerrainSpec(
        kind=TerrainKind(data["kind"]),
        params=dict(data.get("parameters", {})),
        seed=int(data.get("seed", 0)),
        resolution=float(data["resolution"]),
    )
    nx, ny = int(data["size_x"]), int(data["size_y"])
    hf = Heightfield(
        resolution=float(data["resolution"]),
        size_x=nx,
        size_y=ny,
        heights=np.asarray(data["heights"], dtype=np.float64).reshape(nx, ny),
        origin=np.asarray(data["origin"], dtype=np.float64),
    )
    return spec, hf


def save_terrain(path, spec: TerrainSpec, hf: Heightfield) -> None:
    atomic_write_text(path, json.dumps(terrain_to_dict(spec, hf)))


def load_terrain(path) -> tuple[TerrainSpec, Heightfield]:
    with open(path) as f:
        return terrain_from_dict(json.load(f))
