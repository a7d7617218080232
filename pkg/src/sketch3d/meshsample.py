"""Meshes, area-weighted surface sampling, camera viewpoints and pseudo-sketches."""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .pointcloud import PointCloud, RotationMatrix, _as_matrix
from .sketchimg import BinaryMask, SketchImage, StructuringElement, dilate, thin


class ObjError(ValueError):
    pass


class ObjIndexError(ObjError):
    pass


class ObjValueError(ObjError):
    pass


class EmptyMeshError(ObjError):
    pass


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.array(self.faces, dtype=np.intp).reshape(-1, 3)
        if len(v) == 0 or len(f) == 0:
            raise EmptyMeshError("mesh has no vertices or no faces")
        if f.min() < 0 or f.max() >= len(v):
            raise ObjIndexError(f"face index out of range [0, {len(v)})")
        if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
            raise ObjIndexError("face repeats a vertex index")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def triangle_areas(self) -> np.ndarray:
        a, b, c = (self.vertices[self.faces[:, k]] for k in range(3))
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def _resolve(token: str, nverts: int, lineno: int) -> int:
    ref = token.split("/")[0]
    try:
        k = int(ref)
    except ValueError:
        raise ObjValueError(f"line {lineno}: bad face index {token!r}") from None
    idx = k - 1 if k > 0 else nverts + k
    if k == 0 or not 0 <= idx < nverts:
        raise ObjIndexError(f"line {lineno}: face index {k} out of range for {nverts} vertices")
    return idx


def parse_obj(text: str) -> TriangleMesh:
    """Parse the ``v`` / ``f`` / ``#`` subset of Wavefront OBJ.

    Polygons are fan-triangulated from their first vertex; negative indices
    count back from the most recent vertex.  Any other record is rejected.
    """
    verts, faces = [], []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tag, *rest = line.split()
        if tag == "v":
            if len(rest) != 3:
                raise ObjValueError(f"line {lineno}: vertex needs 3 coordinates, got {len(rest)}")
            try:
                xyz = [float(t) for t in rest]
            except ValueError:
                raise ObjValueError(f"line {lineno}: non-numeric vertex {rest!r}") from None
            if not all(math.isfinite(t) for t in xyz):
                raise ObjValueError(f"line {lineno}: non-finite vertex")
            verts.append(xyz)
        elif tag == "f":
            if len(rest) < 3:
                raise ObjValueError(f"line {lineno}: face needs >= 3 vertices")
            idx = [_resolve(t, len(verts), lineno) for t in rest]
            for k in range(1, len(idx) - 1):
                faces.append((idx[0], idx[k], idx[k + 1]))
        else:
            raise ObjError(f"line {lineno}: unsupported record {tag!r}")
    if not verts or not faces:
        raise EmptyMeshError("OBJ contains no vertices or no faces")
    return TriangleMesh(np.array(verts), np.array(faces))


def load_obj(path: str | os.PathLike) -> TriangleMesh:
    with open(path) as fh:
        return parse_obj(fh.read())


def write_obj(mesh: TriangleMesh, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.faces.tolist():
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


def sample_surface(mesh: TriangleMesh, n: int, rng_seed=None, return_faces: bool = False):
    """Draw ``n`` points uniformly by area over the mesh surface.

    Triangles are picked with probability proportional to area, then a point
    inside is ``(1 - sqrt(r1)) a + sqrt(r1) (1 - r2) b + sqrt(r1) r2 c``.
    """
    areas = mesh.triangle_areas()
    keep = np.nonzero(areas > 0)[0]
    total = areas[keep].sum()
    if not total > 0:
        raise ValueError("mesh has zero total surface area")
    rng = np.random.default_rng(rng_seed)
    cdf = np.cumsum(areas[keep])
    pick = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    pick = keep[np.minimum(pick, len(keep) - 1)]
    tri = mesh.vertices[mesh.faces[pick]]
    r1 = np.sqrt(rng.random((n, 1)))
    r2 = rng.random((n, 1))
    pts = (1 - r1) * tri[:, 0] + r1 * (1 - r2) * tri[:, 1] + r1 * r2 * tri[:, 2]
    cloud = PointCloud(pts)
    return (cloud, pick) if return_faces else cloud


def shape_seed(seed: int, shape_index: int) -> int:
    """Per-shape seed: ``seed XOR shape_index``."""
    return int(seed) ^ int(shape_index)


def spaced_sample(mesh: TriangleMesh, n: int, min_spacing: float, rng_seed=None,
                  oversample: int = 8) -> PointCloud:
    """Surface sample whose points are pairwise at least ``min_spacing`` apart.

    Greedy rejection over an oversampled draw, keeping the first ``n``
    survivors in draw order.
    """
    cand = sample_surface(mesh, n * oversample, rng_seed).points
    kept = []
    for p in cand:
        if kept:
            d = np.linalg.norm(np.asarray(kept) - p, axis=1)
            if d.min() < min_spacing:
                continue
        kept.append(p)
        if len(kept) == n:
            return PointCloud(np.asarray(kept))
    raise ValueError(f"only {len(kept)} of {n} points fit at spacing {min_spacing}")


# --- viewpoints ----------------------------------------------------------------


def _rot_x(deg: float) -> np.ndarray:
    t = math.radians(deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])


def _rot_y(deg: float) -> np.ndarray:
    t = math.radians(deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])


def rot_z(deg: float) -> np.ndarray:
    t = math.radians(deg)
    c, s = math.cos(t), math.sin(t)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


def make_viewpoints(count: int = 24, elevation: float = 20.0) -> list[RotationMatrix]:
    """``count`` cameras at azimuths ``360 k / count`` degrees about the up (y) axis.

    View ``k`` is ``Rx(elevation) @ Ry(azimuth_k)``; the camera looks down
    the z axis of the rotated frame.
    """
    if count < 1:
        raise ValueError(f"need at least one viewpoint, got {count}")
    return [RotationMatrix.checked(_rot_x(elevation) @ _rot_y(360.0 * k / count)) for k in range(count)]


def viewpoints_to_csv(views) -> str:
    return "".join(",".join(repr(x) for x in _as_matrix(v).ravel().tolist()) + "\n" for v in views)


def viewpoints_from_csv(text: str) -> list[RotationMatrix]:
    views = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        vals = line.split(",")
        if len(vals) != 9:
            raise ValueError(f"line {lineno}: expected 9 matrix entries, got {len(vals)}")
        views.append(RotationMatrix.checked(np.array([float(v) for v in vals]).reshape(3, 3)))
    return views


# --- pseudo-sketches -------------------------------------------------------------


def project_points(cloud, view, width: int, height: int, margin: float = 0.05) -> np.ndarray:
    """Orthographic pixel coordinates ``(x, y)`` of the rotated cloud.

    The fit uses the cloud's bounding sphere about its centroid, which does
    not depend on the view, so the image scale is the same for every camera.
    Image y points down.
    """
    pts = cloud.points if isinstance(cloud, PointCloud) else PointCloud(cloud).points
    centre = pts.mean(axis=0)
    radius = np.linalg.norm(pts - centre, axis=1).max()
    rel = (pts - centre) @ _as_matrix(view).T
    half = (1.0 - margin) * (min(width, height) - 1) / 2.0
    scale = half / radius if radius > 0 else 0.0
    cx, cy = (width - 1) / 2.0, (height - 1) / 2.0
    return np.stack([cx + scale * rel[:, 0], cy - scale * rel[:, 1]], axis=1)


def project_silhouette(cloud, view, width: int = 128, height: int = 128,
                       splat_radius: int = 1) -> SketchImage:
    """Contour pseudo-sketch of a cloud seen from ``view``.

    Points are splatted, grown by ``splat_radius`` to close sampling gaps,
    hole-filled into a silhouette, and the silhouette boundary is thinned.
    """
    xy = np.rint(project_points(cloud, view, width, height)).astype(int)
    xy[:, 0] = np.clip(xy[:, 0], 0, width - 1)
    xy[:, 1] = np.clip(xy[:, 1], 0, height - 1)
    bits = np.zeros((height, width), dtype=bool)
    bits[xy[:, 1], xy[:, 0]] = True
    grown = dilate(BinaryMask(bits), StructuringElement(1), splat_radius).bits
    solid = ndimage.binary_fill_holes(grown)
    inner = ndimage.binary_erosion(solid, structure=np.ones((3, 3), dtype=bool), border_value=0)
    boundary = BinaryMask(solid & ~inner)
    return thin(boundary).to_image()


# --- built-in primitives ------------------------------------------------------------


def _box(sx=1.0, sy=1.0, sz=1.0) -> TriangleMesh:
    v = np.array([[x, y, z] for x in (-0.5, 0.5) for y in (-0.5, 0.5) for z in (-0.5, 0.5)])
    v *= [sx, sy, sz]
    quads = [(0, 1, 3, 2), (4, 6, 7, 5), (0, 4, 5, 1), (2, 3, 7, 6), (0, 2, 6, 4), (1, 5, 7, 3)]
    faces = [(q[0], q[k], q[k + 1]) for q in quads for k in (1, 2)]
    return TriangleMesh(v, faces)


def _prism(sides: int, radius=0.5, height=1.0, apex=False) -> TriangleMesh:
    ang = 2 * math.pi * np.arange(sides) / sides
    ring = np.stack([radius * np.cos(ang), np.full(sides, -height / 2), radius * np.sin(ang)], axis=1)
    verts = [*ring]
    faces = []
    bottom = len(verts)
    verts.append([0.0, -height / 2, 0.0])
    if apex:
        top = len(verts)
        verts.append([0.0, height / 2, 0.0])
        for k in range(sides):
            j = (k + 1) % sides
            faces.append((k, j, top))
            faces.append((j, k, bottom))
    else:
        ring_top = ring + [0.0, height, 0.0]
        off = len(verts)
        verts.extend(ring_top)
        top = len(verts)
        verts.append([0.0, height / 2, 0.0])
        for k in range(sides):
            j = (k + 1) % sides
            faces.append((k, j, off + j))
            faces.append((k, off + j, off + k))
            faces.append((j, k, bottom))
            faces.append((off + k, off + j, top))
    return TriangleMesh(np.array(verts), faces)


def _octahedron(scale=(0.5, 0.5, 0.5)) -> TriangleMesh:
    sx, sy, sz = scale
    v = [[sx, 0, 0], [-sx, 0, 0], [0, sy, 0], [0, -sy, 0], [0, 0, sz], [0, 0, -sz]]
    f = [(0, 2, 4), (2, 1, 4), (1, 3, 4), (3, 0, 4), (2, 0, 5), (1, 2, 5), (3, 1, 5), (0, 3, 5)]
    return TriangleMesh(v, f)


def primitive_meshes() -> dict[str, TriangleMesh]:
    """Small fixed library of closed meshes used for synthetic datasets."""
    return {
        "cube": _box(),
        "slab": _box(1.0, 0.2, 0.6),
        "pillar": _box(0.3, 1.0, 0.3),
        "plank": _box(1.0, 0.1, 0.3),
        "tetra_pyramid": _prism(4, apex=True),
        "cone": _prism(16, apex=True),
        "cylinder": _prism(16),
        "hex_prism": _prism(6),
        "tri_prism": _prism(3),
        "octahedron": _octahedron(),
        "flat_octahedron": _octahedron((0.6, 0.2, 0.4)),
        "tall_box": _box(0.5, 1.0, 0.5),
        "wide_box": _box(1.0, 0.5, 0.8),
    }
