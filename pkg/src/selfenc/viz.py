"""Nearest-anchor region maps in the plane, rendered as PPM or SVG.

Pixel ``(row, col)`` of a :class:`GridSpec` sits at the centre of its cell;
row 0 is the top of the image (largest y).
"""

from __future__ import annotations

import base64
import zlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoder import AffineTransform, SelfEncoderModel, predict_proba
from .linalg import ShapeError, as_matrix
from .neighbors import squared_distances

# Region colours, cycled when there are more regions than entries.
PALETTE = (
    (230, 159, 0),
    (86, 180, 233),
    (0, 158, 115),
    (240, 228, 66),
    (0, 114, 178),
    (213, 94, 0),
    (204, 121, 167),
    (153, 153, 153),
)
ANCHOR_COLOR = (0, 0, 0)


@dataclass(frozen=True)
class GridSpec:
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    width: int = 400
    height: int = 400

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("grid bounds must satisfy x_min < x_max and y_min < y_max")
        if self.width < 2 or self.height < 2:
            raise ValueError("grid needs at least 2x2 pixels")

    @classmethod
    def around(cls, points, pad: float = 0.2, width: int = 400, height: int = 400) -> GridSpec:
        """Bounding box of ``points`` grown by ``pad`` of its extent on every side."""
        points = as_matrix(points, "points")
        lo, hi = points.min(axis=0), points.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        lo, hi = lo - pad * span, hi + pad * span
        return cls(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]), width, height)

    def pixel_centers(self) -> np.ndarray:
        """Coordinates of every pixel centre, shape (height * width, 2), row-major."""
        xs = self.x_min + (np.arange(self.width) + 0.5) * (self.x_max - self.x_min) / self.width
        ys = self.y_max - (np.arange(self.height) + 0.5) * (self.y_max - self.y_min) / self.height
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    def pixel_of(self, point) -> tuple[int, int]:
        col = int((point[0] - self.x_min) / (self.x_max - self.x_min) * self.width)
        row = int((self.y_max - point[1]) / (self.y_max - self.y_min) * self.height)
        return row, col


@dataclass(frozen=True)
class RegionMap:
    regions: np.ndarray
    grid: GridSpec
    anchors: np.ndarray

    @property
    def n_regions(self) -> int:
        return self.anchors.shape[0]


def assign(points, metric, queries) -> np.ndarray:
    """Nearest-anchor index for each query, lowest index on ties.

    ``metric`` is ``"euclidean"`` or a :class:`SelfEncoderModel` trained on ``points``.
    """
    points = as_matrix(points, "points")
    queries = as_matrix(queries, "queries")
    if isinstance(metric, SelfEncoderModel):
        if metric.n_anchors != points.shape[0]:
            raise ValueError(f"model has {metric.n_anchors} anchors but {points.shape[0]} points were given")
        out = np.empty(queries.shape[0], dtype=np.intp)
        for s in range(0, queries.shape[0], 65536):
            out[s : s + 65536] = np.argmax(predict_proba(metric, queries[s : s + 65536]), axis=1)
        return out
    if metric != "euclidean":
        raise ValueError(f"unknown metric {metric!r}")
    out = np.empty(queries.shape[0], dtype=np.intp)
    for s in range(0, queries.shape[0], 65536):
        out[s : s + 65536] = np.argmin(squared_distances(points, queries[s : s + 65536]), axis=1)
    return out


def region_map(points, metric, grid: GridSpec) -> RegionMap:
    points = as_matrix(points, "points")
    if points.shape[1] != 2:
        raise ShapeError(f"region maps need 2-D points, got dimension {points.shape[1]}")
    labels = assign(points, metric, grid.pixel_centers())
    return RegionMap(labels.reshape(grid.height, grid.width), grid, points.copy())


def transported_map(m: RegionMap, metric, t: AffineTransform) -> RegionMap:
    """Regions of ``t(points)`` sampled at ``t(pixel centre)`` for every pixel of ``m``'s grid.

    With ``metric`` the image of a model under :func:`transfer_weights`, this is
    the original map carried through ``t`` and should equal ``m`` pixel for pixel.
    """
    centers = t.apply(m.grid.pixel_centers())
    labels = assign(t.apply(m.anchors), metric, centers)
    return RegionMap(labels.reshape(m.regions.shape), m.grid, m.anchors.copy())


def agreement(a: RegionMap, b: RegionMap, slack: int = 0) -> float:
    """Fraction of pixels where the maps agree, ignoring pixels within ``slack`` of a boundary of ``b``."""
    if a.regions.shape != b.regions.shape:
        raise ShapeError(f"maps have shapes {a.regions.shape} and {b.regions.shape}")
    keep = np.ones(b.regions.shape, dtype=bool)
    if slack > 0:
        r = b.regions
        near = np.zeros_like(keep)
        h, w = r.shape
        for dy in range(-slack, slack + 1):
            for dx in range(-slack, slack + 1):
                shifted = np.full(r.shape, -1)
                ys, yd = slice(max(dy, 0), h + min(dy, 0)), slice(max(-dy, 0), h + min(-dy, 0))
                xs, xd = slice(max(dx, 0), w + min(dx, 0)), slice(max(-dx, 0), w + min(-dx, 0))
                shifted[yd, xd] = r[ys, xs]
                near |= (shifted != r) & (shifted >= 0)
        keep = ~near
    return float(np.mean(a.regions[keep] == b.regions[keep]))


def to_rgb(m: RegionMap, dot_radius: int = 4) -> np.ndarray:
    palette = np.array(PALETTE, dtype=np.uint8)
    img = palette[m.regions % len(PALETTE)]
    rr, cc = np.mgrid[0 : m.grid.height, 0 : m.grid.width]
    for p in m.anchors:
        row, col = m.grid.pixel_of(p)
        img[(rr - row) ** 2 + (cc - col) ** 2 <= dot_radius**2] = ANCHOR_COLOR
    return img


def _png_bytes(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    raw = b"".join(b"\x00" + img[r].tobytes() for r in range(h))

    def chunk(tag: bytes, payload: bytes) -> bytes:
        body = tag + payload
        return struct.pack(">I", len(payload)) + body + struct.pack(">I", zlib.crc32(body) & 0xFFFFFFFF)

    header = struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)
    return b"\x89PNG\r\n\x1a\n" + chunk(b"IHDR", header) + chunk(b"IDAT", zlib.compress(raw, 9)) + chunk(b"IEND", b"")


def render(m: RegionMap, path, fmt: str | None = None) -> Path:
    """Write the map as binary PPM (P6) or as SVG embedding the same pixels.

    The format follows ``fmt`` or, if omitted, the file extension.
    """
    path = Path(path)
    fmt = (fmt or path.suffix.lstrip(".")).lower()
    if m.regions.size == 0:
        raise ValueError("cannot render an empty map")
    img = to_rgb(m)
    h, w, _ = img.shape
    if fmt == "ppm":
        payload = f"P6\n{w} {h}\n255\n".encode() + img.tobytes()
    elif fmt == "svg":
        png = base64.b64encode(_png_bytes(img)).decode("ascii")
        payload = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" xmlns:xlink="http://www.w3.org/1999/xlink" '
            f'version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">\n'
            f'<image x="0" y="0" width="{w}" height="{h}" style="image-rendering:pixelated" '
            f'xlink:href="data:image/png;base64,{png}"/>\n'
            "</svg>\n"
        ).encode()
    else:
        raise ValueError(f"unsupported format {fmt!r}; use ppm or svg")
    try:
        path.write_bytes(payload)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def read_ppm(path) -> np.ndarray:
    """Read a P6 file in the layout :func:`render` writes (no header comments)."""
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        end = pos
        while not data[end : end + 1].isspace():
            end += 1
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P6":
        raise ValueError(f"{path} is not a binary PPM")
    w, h = int(fields[1]), int(fields[2])
    body = data[pos + 1 : pos + 1 + w * h * 3]
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)
