"""Rigid moving-least-squares warps of sketches, random distortions and augmentation."""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass

import numpy as np

from .sketchimg import BinaryMask, SketchImage


@dataclass(frozen=True, eq=False)
class ControlPairSet:
    """Control points ``sources`` (p) dragged onto ``targets`` (q).

    Weights are ``1 / |p_i - v| ** (2 * alpha)``.
    """

    sources: np.ndarray
    targets: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        p = np.array(self.sources, dtype=np.float64).reshape(-1, 2)
        q = np.array(self.targets, dtype=np.float64).reshape(-1, 2)
        if len(p) == 0 or len(p) != len(q):
            raise ValueError(f"need |p| = |q| >= 1, got {len(p)} sources and {len(q)} targets")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise ValueError("control points must be finite")
        if len(np.unique(p, axis=0)) != len(p):
            raise ValueError("source control points must be pairwise distinct")
        object.__setattr__(self, "sources", p)
        object.__setattr__(self, "targets", q)
        object.__setattr__(self, "alpha", float(self.alpha))

    def __len__(self):
        return len(self.sources)

    def __eq__(self, other):
        if not isinstance(other, ControlPairSet):
            return NotImplemented
        return (
            self.alpha == other.alpha
            and np.array_equal(self.sources, other.sources)
            and np.array_equal(self.targets, other.targets)
        )

    def swapped(self) -> "ControlPairSet":
        return ControlPairSet(self.targets, self.sources, self.alpha)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.sources, self.targets))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"alpha={self.alpha!r}\n")
        for (px, py), (qx, qy) in zip(self.sources.tolist(), self.targets.tolist()):
            buf.write(f"{px!r},{py!r},{qx!r},{qy!r}\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ControlPairSet":
        """Parse the ``alpha=<value>`` header plus ``px,py,qx,qy`` rows.

        Malformed input raises ``ValueError`` naming the 1-based line number.
        """
        lines = text.splitlines()
        if not lines or not lines[0].strip().startswith("alpha="):
            raise ValueError("line 1: expected header 'alpha=<value>'")
        try:
            alpha = float(lines[0].strip()[len("alpha="):])
        except ValueError:
            raise ValueError(f"line 1: bad alpha value {lines[0]!r}") from None
        rows = []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"line {lineno}: expected 4 comma-separated values, got {len(parts)}")
            try:
                rows.append([float(v) for v in parts])
            except ValueError:
                raise ValueError(f"line {lineno}: non-numeric value in {line!r}") from None
        if not rows:
            raise ValueError("no control rows")
        arr = np.array(rows)
        return cls(arr[:, :2], arr[:, 2:], alpha)

    @classmethod
    def read(cls, path: str | os.PathLike) -> "ControlPairSet":
        with open(path) as fh:
            return cls.from_csv(fh.read())

    def write(self, path: str | os.PathLike) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_csv())


def _perp(v: np.ndarray) -> np.ndarray:
    # (x, y) -> (-y, x)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def mls_rigid(controls: ControlPairSet, points) -> np.ndarray:
    """Vectorised rigid MLS map of an ``(..., 2)`` array of points."""
    v = np.asarray(points, dtype=np.float64)
    shape = v.shape
    v = v.reshape(-1, 2)
    p, q = controls.sources, controls.targets
    if controls.is_identity():
        return v.reshape(shape).copy()
    if len(p) == 1:
        return (v + (q[0] - p[0])).reshape(shape)

    diff = p[None, :, :] - v[:, None, :]                      # (N, n, 2)
    d2 = np.einsum("nij,nij->ni", diff, diff)
    hit = d2 == 0.0
    with np.errstate(divide="ignore"):
        w = 1.0 / d2 ** controls.alpha
    w[hit] = 0.0                                              # patched below
    wsum = w.sum(axis=1, keepdims=True)
    p_star = (w @ p) / wsum
    q_star = (w @ q) / wsum
    p_hat = p[None, :, :] - p_star[:, None, :]
    q_hat = q[None, :, :] - q_star[:, None, :]
    vp = v - p_star

    # f = sum_i w_i q_hat_i [p_hat_i; -p_hat_i^perp] [vp; -vp^perp]^T
    a = p_hat
    b = -_perp(p_hat)
    c = vp[:, None, :]
    d = -_perp(vp)[:, None, :]
    # row vector q_hat times 2x2 matrix with rows a, b  ->  (q.a, q.b) then times columns (c, d)
    qa = np.einsum("nij,nij->ni", q_hat, a)
    qb = np.einsum("nij,nij->ni", q_hat, b)
    f = (w * qa)[..., None] * c + (w * qb)[..., None] * d
    f = f.sum(axis=1)

    fnorm = np.hypot(f[:, 0], f[:, 1])
    vnorm = np.hypot(vp[:, 0], vp[:, 1])
    out = np.empty_like(v)
    ok = fnorm > 0.0
    out[ok] = q_star[ok] + (vnorm[ok] / fnorm[ok])[:, None] * f[ok]
    out[~ok] = q_star[~ok] + vp[~ok]

    rows, cols = np.nonzero(hit)
    out[rows] = q[cols]
    return out.reshape(shape)


def mls_rigid_point(controls: ControlPairSet, v) -> np.ndarray:
    """Rigid MLS image of one 2D point.

    At a control source the matching target is returned exactly; a single
    control translates by ``q - p``; a vanishing rotation vector falls back
    to ``q* + (v - p*)``.
    """
    return mls_rigid(controls, np.asarray(v, dtype=np.float64).reshape(1, 2))[0]


@dataclass(frozen=True, eq=False)
class DeformField:
    """MLS images of a lattice covering the canvas.

    ``mapped[j, i]`` is the image of pixel ``(i*spacing, j*spacing)``; the
    lattice gets one extra node past the last pixel when needed.
    """

    spacing: int
    width: int
    height: int
    mapped: np.ndarray

    @property
    def displacement(self) -> np.ndarray:
        ny, nx = self.mapped.shape[:2]
        gy, gx = np.mgrid[0:ny, 0:nx].astype(np.float64) * self.spacing
        return self.mapped - np.stack([gx, gy], axis=-1)

    def sample(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Bilinear interpolation of the mapped positions at pixels ``(xs, ys)``."""
        gx = np.asarray(xs, dtype=np.float64) / self.spacing
        gy = np.asarray(ys, dtype=np.float64) / self.spacing
        mx = _bilinear(self.mapped[..., 0], gx, gy, cval=None)
        my = _bilinear(self.mapped[..., 1], gx, gy, cval=None)
        return np.stack([mx, my], axis=-1)


def build_field(controls: ControlPairSet, width: int, height: int, spacing: int = 4) -> DeformField:
    if spacing < 1:
        raise ValueError(f"spacing must be >= 1, got {spacing}")
    nx = -(-(width - 1) // spacing) + 1
    ny = -(-(height - 1) // spacing) + 1
    gy, gx = np.mgrid[0:ny, 0:nx].astype(np.float64) * spacing
    return DeformField(spacing, width, height, mls_rigid(controls, np.stack([gx, gy], axis=-1)))


def _bilinear(grid: np.ndarray, xs, ys, cval: float | None = 1.0) -> np.ndarray:
    """Sample ``grid[row, col]`` at fractional ``(xs, ys)``.

    Lerps are written ``a + t * (b - a)`` so equal neighbours give exact
    results.  Outside the grid the value is ``cval``; ``cval=None`` clamps
    to the border instead.
    """
    h, w = grid.shape
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if cval is None:
        xs = np.clip(xs, 0, w - 1)
        ys = np.clip(ys, 0, h - 1)
        padded = np.pad(grid, 1, mode="edge")
    else:
        padded = np.pad(grid, 1, constant_values=cval)
    x0 = np.floor(xs)
    y0 = np.floor(ys)
    tx = xs - x0
    ty = ys - y0
    inside = (x0 >= -1) & (x0 <= w - 1) & (y0 >= -1) & (y0 <= h - 1)
    # padded index of the top-left neighbour
    xi = np.clip(x0, -1, w - 1).astype(np.intp) + 1
    yi = np.clip(y0, -1, h - 1).astype(np.intp) + 1
    a, b = padded[yi, xi], padded[yi, xi + 1]
    c, d = padded[yi + 1, xi], padded[yi + 1, xi + 1]
    top = a + tx * (b - a)
    bot = c + tx * (d - c)
    out = top + ty * (bot - top)
    if cval is not None:
        out[~inside] = cval
    return out


def deform_sketch(img: SketchImage, controls: ControlPairSet, spacing: int = 4) -> SketchImage:
    """Warp ``img`` so content at each source moves to its target.

    Backward warping: every output pixel looks up the input at the
    role-swapped MLS image of its own position, samples bilinearly and
    thresholds at 0.5.  Identity controls return an unchanged copy.
    """
    if controls.is_identity():
        return SketchImage(img.pixels.copy())
    field = build_field(controls.swapped(), img.width, img.height, spacing)
    ys, xs = np.mgrid[0:img.height, 0:img.width].astype(np.float64)
    src = field.sample(xs, ys)
    values = _bilinear(img.pixels, src[..., 0], src[..., 1])
    return SketchImage(np.where(values < 0.5, 0.0, 1.0))


def random_deformation(mask: BinaryMask, k: int = 8, sigma: float | None = None,
                       rng_seed=None, alpha: float = 1.0) -> ControlPairSet:
    """Pick ``k`` distinct ink pixels and jitter each by isotropic Gaussian noise.

    ``sigma`` defaults to 5% of the canvas diagonal.  Targets are clamped to
    the canvas.
    """
    if sigma is None:
        sigma = 0.05 * math.hypot(mask.width, mask.height)
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    rows, cols = np.nonzero(mask.bits)
    if len(rows) < k:
        raise ValueError(f"random deformation needs {k} ink pixels, mask has {len(rows)}")
    rng = np.random.default_rng(rng_seed)
    pick = rng.choice(len(rows), size=k, replace=False)
    sources = np.stack([cols[pick], rows[pick]], axis=1).astype(np.float64)
    targets = sources + rng.normal(0.0, 1.0, size=(k, 2)) * sigma
    targets[:, 0] = np.clip(targets[:, 0], 0, mask.width - 1)
    targets[:, 1] = np.clip(targets[:, 1], 0, mask.height - 1)
    return ControlPairSet(sources, targets, alpha)


def augment(img: SketchImage, dx: float = 0.0, dy: float = 0.0, theta: float = 0.0) -> SketchImage:
    """Rotate by ``theta`` degrees about the image centre, then shift by ``(dx, dy)``.

    Rotation acts on ``(x, y)`` pixel coordinates with matrix
    ``[[cos, -sin], [sin, cos]]``.  Bilinear backward warp, background fill 1.
    """
    if dx == 0 and dy == 0 and theta == 0:
        return SketchImage(img.pixels.copy())
    t = math.radians(theta)
    cos_t, sin_t = math.cos(t), math.sin(t)
    cx, cy = (img.width - 1) / 2.0, (img.height - 1) / 2.0
    ys, xs = np.mgrid[0:img.height, 0:img.width].astype(np.float64)
    ux = xs - dx - cx
    uy = ys - dy - cy
    sx = cos_t * ux + sin_t * uy + cx
    sy = -sin_t * ux + cos_t * uy + cy
    return SketchImage(np.clip(_bilinear(img.pixels, sx, sy), 0.0, 1.0))
