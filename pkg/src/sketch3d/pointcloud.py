"""Point clouds, Chamfer / Earth Mover's distances and rotation helpers.

Chamfer uses squared distances, EMD plain Euclidean ones.  Points are
column vectors: rotating by ``A`` maps ``p`` to ``A @ p``.
"""

from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

EMD_SIZE_WARNING = 2048
ORTHO_TOL = 1e-6

# Below this many point pairs the dense path is cheaper than building trees.
_DENSE_PAIRS = 1 << 14


class PointCloud:
    """``(n, 3)`` array of finite coordinates, ``n >= 1``."""

    __slots__ = ("points",)

    def __init__(self, points):
        arr = np.array(points, dtype=np.float64)
        if arr.ndim == 1 and arr.size == 3:
            arr = arr.reshape(1, 3)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError(f"point cloud must have shape (n, 3), got {arr.shape}")
        if len(arr) == 0:
            raise ValueError("point cloud is empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("point cloud has non-finite coordinates")
        self.points = arr

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.points.shape == other.points.shape and bool(np.array_equal(self.points, other.points))

    def __repr__(self):
        return f"PointCloud(n={len(self)})"


def _as_points(cloud) -> np.ndarray:
    return cloud.points if isinstance(cloud, PointCloud) else PointCloud(cloud).points


class RotationMatrix:
    """3x3 view matrix.

    ``RotationMatrix.raw`` accepts any finite matrix (an unconstrained
    estimate); ``RotationMatrix.checked`` additionally requires
    ``||I - A A^T||_F <= 1e-6`` and ``det(A) > 0``.
    """

    __slots__ = ("m", "is_checked")

    def __init__(self, m, checked: bool = False):
        arr = np.array(m, dtype=np.float64)
        if arr.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("rotation has non-finite entries")
        if checked:
            resid = np.linalg.norm(np.eye(3) - arr @ arr.T)
            if resid > ORTHO_TOL:
                raise ValueError(f"matrix is not orthogonal: ||I - AA^T||_F = {resid:.3e}")
            if np.linalg.det(arr) <= 0:
                raise ValueError("matrix is orthogonal but improper (det <= 0)")
        self.m = arr
        self.is_checked = checked

    @classmethod
    def raw(cls, m) -> "RotationMatrix":
        return cls(m, checked=False)

    @classmethod
    def checked(cls, m) -> "RotationMatrix":
        return cls(m, checked=True)

    def __repr__(self):
        kind = "Checked" if self.is_checked else "Raw"
        return f"RotationMatrix.{kind.lower()}({self.m.tolist()})"


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, RotationMatrix):
        return a.m
    m = np.asarray(a, dtype=np.float64)
    if m.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got {m.shape}")
    return m


def _sqdist_rows(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Squared distances between row-aligned point arrays.

    Both Chamfer paths go through here so they agree bit for bit.
    """
    d = x - y
    return d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1] + d[..., 2] * d[..., 2]


def _nearest_dense(src: np.ndarray, dst: np.ndarray):
    d2 = _sqdist_rows(src[:, None, :], dst[None, :, :])
    idx = np.argmin(d2, axis=1)          # first minimum = lowest index
    return idx, d2[np.arange(len(src)), idx]


def _nearest_tree(src: np.ndarray, dst: np.ndarray, tree: cKDTree):
    """Exact nearest neighbour with lowest-index tie breaking.

    The tree proposes a radius; every point within a slightly inflated ball
    is then re-scored with the dense formula.
    """
    dist, _ = tree.query(src, k=1)
    radius = dist * (1.0 + 1e-9) + 1e-12
    idx = np.empty(len(src), dtype=np.intp)
    best = np.empty(len(src))
    for i, cand in enumerate(tree.query_ball_point(src, radius)):
        cand = np.sort(np.asarray(cand, dtype=np.intp))
        d2 = _sqdist_rows(src[i][None, :], dst[cand])
        j = int(np.argmin(d2))
        idx[i] = cand[j]
        best[i] = d2[j]
    return idx, best


def nearest(src, dst, accelerate: bool | None = None):
    """Index of and squared distance to the nearest ``dst`` point for each ``src`` point."""
    a, b = _as_points(src), _as_points(dst)
    if accelerate is None:
        accelerate = len(a) * len(b) > _DENSE_PAIRS
    if accelerate:
        return _nearest_tree(a, b, cKDTree(b))
    return _nearest_dense(a, b)


def _directional_sum(d2: np.ndarray) -> float:
    # fixed left-to-right accumulation in index order
    total = 0.0
    for v in d2.tolist():
        total += v
    return total


def chamfer(P, Q, accelerate: bool | None = None) -> float:
    """Sum of squared nearest-neighbour distances, P->Q then Q->P.

    Each directional sum accumulates in index order; the two are then
    added, so ``chamfer(P, Q) == chamfer(Q, P)`` exactly.
    """
    a, b = _as_points(P), _as_points(Q)
    _, d_ab = nearest(a, b, accelerate)
    _, d_ba = nearest(b, a, accelerate)
    return _directional_sum(d_ab) + _directional_sum(d_ba)


def chamfer_grad(P, Q, accelerate: bool | None = None) -> np.ndarray:
    """Gradient of :func:`chamfer` with respect to the points of ``P``.

    ``2 (p - nn_Q(p)) + sum over q with nn_P(q) = p of 2 (p - q)``;
    nearest-neighbour ties go to the lowest index.
    """
    a, b = _as_points(P), _as_points(Q)
    nn_ab, _ = nearest(a, b, accelerate)
    nn_ba, _ = nearest(b, a, accelerate)
    grad = 2.0 * (a - b[nn_ab])
    np.add.at(grad, nn_ba, 2.0 * (a[nn_ba] - b))
    return grad


@dataclass(frozen=True)
class Assignment:
    """Bijection ``i -> permutation[i]``."""

    permutation: tuple

    def __post_init__(self):
        perm = tuple(int(i) for i in self.permutation)
        if sorted(perm) != list(range(len(perm))):
            raise ValueError("assignment is not a permutation")
        object.__setattr__(self, "permutation", perm)

    def __len__(self):
        return len(self.permutation)


def solve_assignment(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost perfect matching of a square cost matrix.

    Shortest augmenting paths with dual potentials (Hungarian / Jonker-Volgenant
    family), O(n^3).  Returns ``col`` with row ``i`` matched to ``col[i]``.
    """
    c = np.asarray(cost, dtype=np.float64)
    n = c.shape[0]
    if c.shape != (n, n):
        raise ValueError(f"cost matrix must be square, got {c.shape}")
    if n == 0:
        return np.empty(0, dtype=np.intp)
    INF = np.inf
    # 1-based columns; column 0 is the virtual source.
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.intp)    # match[j] = row (1-based) owning column j
    way = np.zeros(n + 1, dtype=np.intp)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cur = c[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], INF)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    col = np.empty(n, dtype=np.intp)
    col[match[1:] - 1] = np.arange(n)
    return col


def pairwise_distances(P, Q) -> np.ndarray:
    a, b = _as_points(P), _as_points(Q)
    return np.sqrt(_sqdist_rows(a[:, None, :], b[None, :, :]))


def matching_cost(dist: np.ndarray, permutation) -> float:
    """Sum of ``dist[i, permutation[i]]`` accumulated in row order."""
    total = 0.0
    for i, j in enumerate(permutation):
        total += float(dist[i, j])
    return total


def emd_exact(P, Q) -> tuple[float, Assignment]:
    """Optimal bijection between equal-size clouds under Euclidean ground cost."""
    a, b = _as_points(P), _as_points(Q)
    if len(a) != len(b):
        raise ValueError(f"EMD needs equal-size clouds, got {len(a)} and {len(b)} points")
    if len(a) > EMD_SIZE_WARNING:
        warnings.warn(f"exact EMD on {len(a)} points is O(n^3) and may be slow", RuntimeWarning, stacklevel=2)
    dist = pairwise_distances(a, b)
    perm = solve_assignment(dist)
    return matching_cost(dist, perm), Assignment(tuple(perm.tolist()))


def rotate(P, A) -> PointCloud:
    """Apply ``p -> A p`` to every point."""
    return PointCloud(_as_points(P) @ _as_matrix(A).T)


def orth_loss(A) -> float:
    """``||I - A A^T||_F^2``."""
    m = _as_matrix(A)
    e = np.eye(3) - m @ m.T
    return float(np.sum(e * e))


def orth_loss_grad(A) -> np.ndarray:
    m = _as_matrix(A)
    return -4.0 * (np.eye(3) - m @ m.T) @ m


def nearest_rotation(A) -> RotationMatrix:
    """Closest proper rotation in Frobenius norm (polar factor with det fix-up)."""
    m = _as_matrix(A)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    u, s, vt = np.linalg.svd(m)
    if s[-1] <= s[0] * 1e-12:
        raise ValueError(f"matrix is rank deficient (singular values {s.tolist()})")
    d = np.sign(np.linalg.det(u @ vt))
    r = u @ np.diag([1.0, 1.0, d]) @ vt
    return RotationMatrix.checked(r)


# --- I/O ---------------------------------------------------------------------

_MAGIC = b"PC3D"


def write_xyz(cloud, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        for x, y, z in _as_points(cloud).tolist():
            fh.write(f"{x!r} {y!r} {z!r}\n")


def read_xyz(path: str | os.PathLike) -> PointCloud:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 coordinates, got {len(parts)}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric coordinate") from None
    return PointCloud(rows if rows else np.empty((0, 3)))


def write_pc3d(cloud, path: str | os.PathLike) -> None:
    pts = _as_points(cloud)
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<I", len(pts)))
        fh.write(pts.astype("<f8").tobytes())


def read_pc3d(path: str | os.PathLike) -> PointCloud:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 8:
        raise ValueError(f"{path}: truncated header")
    (n,) = struct.unpack("<I", data[4:8])
    need = 8 + 24 * n
    if len(data) < need:
        raise ValueError(f"{path}: expected {need} bytes, got {len(data)}")
    return PointCloud(np.frombuffer(data[8:need], dtype="<f8").reshape(n, 3))


def load_cloud(path: str | os.PathLike) -> PointCloud:
    """Read ``.pc3d`` binary or, for any other extension, ASCII XYZ."""
    if str(path).endswith(".pc3d"):
        return read_pc3d(path)
    return read_xyz(path)
