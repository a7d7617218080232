"""Batch evaluation of predicted clouds against a manifest, and a synthetic demo dataset."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .meshsample import make_viewpoints, primitive_meshes, project_silhouette, shape_seed, spaced_sample
from .pipeline import CATEGORIES, DatasetEntry, EvalManifest, format_manifest
from .pointcloud import PointCloud, chamfer, emd_exact, load_cloud, write_xyz
from .sketchimg import write_pgm

CD_SCALE = 1e4
EMD_SCALE = 1e2


@dataclass(frozen=True)
class CategoryRow:
    category: str
    count: int
    cd: float
    emd: float


@dataclass(frozen=True)
class MetricTable:
    """Per-category raw mean CD / EMD plus the unweighted mean over categories."""

    rows: tuple
    avg: CategoryRow

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["category", "n", "cd_e4", "emd_e2"])
        for r in (*self.rows, self.avg):
            w.writerow([r.category, r.count, repr(r.cd * CD_SCALE), repr(r.emd * EMD_SCALE)])
        return buf.getvalue()

    def to_text(self) -> str:
        lines = [f"{'category':<12} {'n':>4} {'CD(x1e-4)':>12} {'EMD(x1e-2)':>12}"]
        for r in (*self.rows, self.avg):
            lines.append(f"{r.category:<12} {r.count:>4} {r.cd * CD_SCALE:>12.4f} {r.emd * EMD_SCALE:>12.4f}")
        return "\n".join(lines)


@dataclass(frozen=True)
class EntryResult:
    id: str
    category: str
    cd: float
    emd: float


def _ordered_sum(values) -> float:
    total = 0.0
    for v in values:
        total += v
    return total


def aggregate(results) -> MetricTable:
    """Category means in category-name order; entries summed in id order."""
    by_cat: dict[str, list[EntryResult]] = {}
    for r in results:
        by_cat.setdefault(r.category, []).append(r)
    if not by_cat:
        raise ValueError("nothing to aggregate")
    rows = []
    for cat in sorted(by_cat):
        items = sorted(by_cat[cat], key=lambda r: r.id)
        n = len(items)
        rows.append(CategoryRow(cat, n, _ordered_sum(r.cd for r in items) / n,
                                _ordered_sum(r.emd for r in items) / n))
    k = len(rows)
    avg = CategoryRow("avg.", sum(r.count for r in rows),
                      _ordered_sum(r.cd for r in rows) / k, _ordered_sum(r.emd for r in rows) / k)
    return MetricTable(tuple(rows), avg)


class MissingPredictions(FileNotFoundError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"missing predictions for ids: {', '.join(self.ids)}")


def evaluate_entry(pred: PointCloud, gt: PointCloud) -> tuple[float, float]:
    return chamfer(pred, gt), emd_exact(pred, gt)[0]


def evaluate_manifest(manifest: EvalManifest, predictions_dir: str | os.PathLike) -> tuple[MetricTable, list[EntryResult]]:
    pred_dir = Path(predictions_dir)
    missing = [e.id for e in manifest.entries if not (pred_dir / f"{e.id}.xyz").exists()]
    if missing:
        raise MissingPredictions(missing)
    results = []
    for e in manifest.entries:
        pred = load_cloud(pred_dir / f"{e.id}.xyz")
        gt = load_cloud(manifest.resolve(e.cloud_path))
        if len(pred) != len(gt):
            raise ValueError(f"entry {e.id}: prediction has {len(pred)} points, ground truth {len(gt)}")
        cd, emd = evaluate_entry(pred, gt)
        results.append(EntryResult(e.id, e.category, cd, emd))
    return aggregate(results), results


def make_demo_dataset(out_dir: str | os.PathLike, shapes_per_category: int = 2, n_points: int = 128,
                      seed: int = 0, canvas: int = 64, min_spacing: float = 0.03,
                      n_views: int = 24) -> Path:
    """Write clouds, pseudo-sketches and ``manifest.tsv`` for every category.

    Shapes come from :func:`primitive_meshes` with a per-shape scale; points
    are kept ``min_spacing`` apart so that small translations keep every
    point's nearest neighbour its own pre-image.
    """
    out = Path(out_dir)
    (out / "clouds").mkdir(parents=True, exist_ok=True)
    (out / "sketches").mkdir(parents=True, exist_ok=True)
    meshes = list(primitive_meshes().values())
    views = make_viewpoints(n_views)
    entries = []
    for ci, cat in enumerate(CATEGORIES):
        for s in range(shapes_per_category):
            idx = ci * shapes_per_category + s
            mesh = meshes[idx % len(meshes)]
            rng = np.random.default_rng(shape_seed(seed, idx))
            scale = rng.uniform(0.8, 1.2, size=3)
            mesh = type(mesh)(mesh.vertices * scale, mesh.faces)
            cloud = spaced_sample(mesh, n_points, min_spacing, shape_seed(seed, idx))
            view = int(rng.integers(len(views)))
            eid = f"{cat}_{s:02d}"
            cloud_rel = f"clouds/{eid}.xyz"
            sketch_rel = f"sketches/{eid}.pgm"
            write_xyz(cloud, out / cloud_rel)
            write_pgm(project_silhouette(cloud, views[view], canvas, canvas), out / sketch_rel)
            entries.append(DatasetEntry(eid, cat, sketch_rel, cloud_rel, view))
    path = out / "manifest.tsv"
    path.write_text(format_manifest(entries))
    return path


def write_predictions(manifest: EvalManifest, out_dir: str | os.PathLike, offset=(0.0, 0.0, 0.0)) -> Path:
    """Copy every ground-truth cloud, translated by ``offset``, to ``<id>.xyz``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shift = np.asarray(offset, dtype=np.float64)
    for e in manifest.entries:
        gt = load_cloud(manifest.resolve(e.cloud_path))
        write_xyz(PointCloud(gt.points + shift), out / f"{e.id}.xyz")
    return out
