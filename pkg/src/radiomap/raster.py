"""Grid construction, grid CSV interchange, and heatmap export.

A GridMap is a regular 2D raster of cells over the site floor, row-major
with cell (0, 0) at the lower-left corner.  Producers (GPR prediction,
link-layer baseline) attach a per-cell payload dict; masked cells mark
non-traversable areas and never carry payload in exports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

#: Payload fields written/read as integers in grid CSV files.
INT_FIELDS = frozenset({"mcs", "layers"})

#: Neutral color for masked or payload-free cells in heatmaps.
MASK_RGB = (128, 128, 128)

# Anchor colors of the shipped ramp: monotone-luminance dark blue to pale
# rose, linearly interpolated to 256 entries.
_RAMP_ANCHORS = (
    (0x01, 0x19, 0x59),
    (0x10, 0x50, 0x5E),
    (0x3C, 0x73, 0x4C),
    (0x7F, 0x81, 0x33),
    (0xC8, 0x8A, 0x33),
    (0xF2, 0x9B, 0x68),
    (0xFB, 0xBB, 0xA8),
    (0xFA, 0xCC, 0xFA),
)


def _build_ramp() -> tuple[tuple[int, int, int], ...]:
    anchors = np.asarray(_RAMP_ANCHORS, dtype=float)
    pos = np.linspace(0.0, 1.0, len(anchors))
    t = np.linspace(0.0, 1.0, 256)
    channels = [np.interp(t, pos, anchors[:, c]) for c in range(3)]
    rgb = np.rint(np.stack(channels, axis=1)).astype(int)
    return tuple(tuple(int(v) for v in row) for row in rgb)


#: Fixed 256-entry color ramp used for all heatmaps.
COLOR_RAMP = _build_ramp()


@dataclass
class GridMap:
    """Regular raster of cells with optional per-cell payload and mask.

    ``values`` is row-major (index = row * n_cols + col); entry ``None``
    means no payload.  ``mask[i]`` True marks a non-traversable cell.
    """

    origin: tuple[float, float]
    cell_size: float
    n_cols: int
    n_rows: int
    values: list = field(default_factory=list)
    mask: list = field(default_factory=list)

    def __post_init__(self):
        if self.cell_size <= 0.0 or not math.isfinite(self.cell_size):
            raise ValueError("cell_size must be finite and > 0")
        if self.n_cols < 1 or self.n_rows < 1:
            raise ValueError("grid must have at least one column and one row")
        self.origin = (float(self.origin[0]), float(self.origin[1]))
        if not self.values:
            self.values = [None] * self.n_cells
        if not self.mask:
            self.mask = [False] * self.n_cells
        if len(self.values) != self.n_cells:
            raise ValueError(f"values length {len(self.values)} != {self.n_cells} cells")
        if len(self.mask) != self.n_cells:
            raise ValueError(f"mask length {len(self.mask)} != {self.n_cells} cells")

    @property
    def n_cells(self) -> int:
        return self.n_cols * self.n_rows

    def cell_center(self, index: int) -> tuple[float, float]:
        row, col = divmod(index, self.n_cols)
        return (
            self.origin[0] + (col + 0.5) * self.cell_size,
            self.origin[1] + (row + 0.5) * self.cell_size,
        )

    def cell_centers(self) -> np.ndarray:
        """All cell centers, row-major, shape (n_cells, 2)."""
        cols = np.arange(self.n_cols)
        rows = np.arange(self.n_rows)
        xs = self.origin[0] + (cols + 0.5) * self.cell_size
        ys = self.origin[1] + (rows + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def like(self) -> "GridMap":
        """Empty grid with identical geometry and mask."""
        return GridMap(
            origin=self.origin,
            cell_size=self.cell_size,
            n_cols=self.n_cols,
            n_rows=self.n_rows,
            values=[None] * self.n_cells,
            mask=list(self.mask),
        )


def _on_segment(px, py, ax, ay, bx, by, tol=1e-9) -> bool:
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    if abs(cross) > tol:
        return False
    if min(ax, bx) - tol <= px <= max(ax, bx) + tol and min(ay, by) - tol <= py <= max(ay, by) + tol:
        return True
    return False


def point_in_polygons(point, rings) -> bool:
    """Even-odd containment over a list of rings, boundary inclusive.

    A point exactly on any ring edge counts as inside.  Parity is taken
    over all edges of all rings, so a ring enclosed by another acts as a
    hole.
    """
    px, py = float(point[0]), float(point[1])
    inside = False
    for ring in rings:
        m = len(ring)
        if m < 3:
            raise ValueError("mask polygon rings need at least 3 vertices")
        j = m - 1
        for i in range(m):
            ax, ay = float(ring[i][0]), float(ring[i][1])
            bx, by = float(ring[j][0]), float(ring[j][1])
            if _on_segment(px, py, ax, ay, bx, by):
                return True
            if (ay > py) != (by > py):
                x_cross = (bx - ax) * (py - ay) / (by - ay) + ax
                if px < x_cross:
                    inside = not inside
            j = i
    return inside


def build_grid(bounds, cell_size: float, mask_polygons=None) -> GridMap:
    """Build an empty grid over rectangular bounds.

    Parameters
    ----------
    bounds : (xmin, ymin, xmax, ymax) in meters
    cell_size : float
        Edge length of square cells (meters).
    mask_polygons : list of rings, optional
        Each ring a list of [x, y] vertices; cells whose center falls
        inside (even-odd rule, boundary inclusive) are masked.
    """
    xmin, ymin, xmax, ymax = (float(v) for v in bounds)
    if not (xmax > xmin and ymax > ymin):
        raise ValueError(f"degenerate bounds {bounds!r}")
    if cell_size <= 0.0:
        raise ValueError("cell_size must be > 0")
    n_cols = max(1, math.ceil((xmax - xmin) / cell_size - 1e-9))
    n_rows = max(1, math.ceil((ymax - ymin) / cell_size - 1e-9))
    grid = GridMap(origin=(xmin, ymin), cell_size=cell_size, n_cols=n_cols, n_rows=n_rows)
    if mask_polygons:
        for i in range(grid.n_cells):
            if point_in_polygons(grid.cell_center(i), mask_polygons):
                grid.mask[i] = True
    return grid


def export_heatmap(grid: GridMap, field_name: str, color_scale) -> bytes:
    """Render one payload field as a binary P6 portable pixmap.

    One pixel per cell, image rows top to bottom.  Values are mapped onto
    the fixed 256-entry ramp after clipping to ``color_scale``
    (min, max); masked or payload-free cells render neutral gray.
    Identical inputs produce byte-identical output.
    """
    lo, hi = float(color_scale[0]), float(color_scale[1])
    if not hi > lo:
        raise ValueError(f"color scale must satisfy max > min, got {color_scale!r}")
    known = any(
        v is not None and field_name in v
        for v, m in zip(grid.values, grid.mask)
        if not m
    )
    if not known:
        raise ValueError(f"field {field_name!r} not present in any grid cell payload")

    out = bytearray()
    out += f"P6\n{grid.n_cols} {grid.n_rows}\n255\n".encode("ascii")
    for row in range(grid.n_rows - 1, -1, -1):
        for col in range(grid.n_cols):
            idx = row * grid.n_cols + col
            payload = grid.values[idx]
            if grid.mask[idx] or payload is None or field_name not in payload:
                out += bytes(MASK_RGB)
                continue
            value = float(payload[field_name])
            if not math.isfinite(value):
                out += bytes(MASK_RGB)
                continue
            t = (value - lo) / (hi - lo)
            t = min(1.0, max(0.0, t))
            out += bytes(COLOR_RAMP[int(round(t * 255))])
    return bytes(out)


def _format_value(field_name: str, value) -> str:
    if field_name in INT_FIELDS:
        return str(int(value))
    return repr(float(value))


def write_grid_csv(grid: GridMap, dest, fields) -> None:
    """Write the grid to the interchange CSV format.

    The first line is a ``# grid ...`` metadata comment carrying exact
    geometry so re-import reproduces an identical GridMap; the fixed
    header row follows.  Masked cells are written with empty payload
    fields.
    """
    fields = list(fields)
    lines = [
        "# grid origin_x={!r} origin_y={!r} cell_size={!r} n_cols={} n_rows={}".format(
            grid.origin[0], grid.origin[1], grid.cell_size, grid.n_cols, grid.n_rows
        ),
        ",".join(["x", "y"] + fields),
    ]
    for idx in range(grid.n_cells):
        x, y = grid.cell_center(idx)
        if grid.mask[idx]:
            payload_cells = [""] * len(fields)
        else:
            payload = grid.values[idx]
            if payload is None:
                raise ValueError(f"unmasked cell {idx} has no payload; grid is incomplete")
            try:
                payload_cells = [_format_value(f, payload[f]) for f in fields]
            except KeyError as exc:
                raise ValueError(f"cell {idx} payload missing field {exc.args[0]!r}") from None
        lines.append(",".join([repr(x), repr(y)] + payload_cells))
    text = "\n".join(lines) + "\n"
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text, encoding="utf-8")


def read_grid_csv(src) -> tuple[GridMap, list[str]]:
    """Read a grid CSV written by ``write_grid_csv``.

    Returns the GridMap and the list of payload field names.  Rows with
    empty payload fields become masked cells.
    """
    if hasattr(src, "read"):
        text = src.read()
    else:
        text = Path(src).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("# grid "):
        raise ValueError("not a grid CSV: missing '# grid' metadata line")
    meta = {}
    for token in lines[0][len("# grid ") :].split():
        key, _, raw = token.partition("=")
        meta[key] = raw
    try:
        grid = GridMap(
            origin=(float(meta["origin_x"]), float(meta["origin_y"])),
            cell_size=float(meta["cell_size"]),
            n_cols=int(meta["n_cols"]),
            n_rows=int(meta["n_rows"]),
        )
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed grid metadata line: {exc}") from None

    header = lines[1].split(",")
    if header[:2] != ["x", "y"]:
        raise ValueError(f"grid CSV header must start with x,y, got {lines[1]!r}")
    fields = header[2:]

    rows = lines[2:]
    if len(rows) != grid.n_cells:
        raise ValueError(f"expected {grid.n_cells} cell rows, got {len(rows)}")
    for idx, row in enumerate(rows):
        cells = row.split(",")
        if len(cells) != 2 + len(fields):
            raise ValueError(f"row {idx}: expected {2 + len(fields)} columns, got {len(cells)}")
        if fields and all(c == "" for c in cells[2:]):
            grid.mask[idx] = True
            grid.values[idx] = None
            continue
        payload = {}
        for name, cell in zip(fields, cells[2:]):
            payload[name] = int(cell) if name in INT_FIELDS else float(cell)
        grid.values[idx] = payload
    return grid, fields
