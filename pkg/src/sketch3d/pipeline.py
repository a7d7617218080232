"""Sketch standardization (refine after dilate), the training-time chain and batch planning."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .mlsdeform import ControlPairSet, deform_sketch
from .sketchimg import SketchImage, StructuringElement, binarize, dilate, thin

CATEGORIES = (
    "airplane", "bench", "cabinet", "car", "chair", "display", "lamp",
    "speaker", "rifle", "sofa", "table", "telephone", "watercraft",
)


class IdentityRefiner:
    name = "identity"

    def __call__(self, img: SketchImage) -> SketchImage:
        return SketchImage(img.pixels.copy())


class ThinningRefiner:
    """Non-learned stand-in for the refinement network: thin strokes back to unit width."""

    name = "thinning"

    def __init__(self, threshold: float = 0.5):
        self.threshold = threshold

    def __call__(self, img: SketchImage) -> SketchImage:
        return thin(binarize(img, self.threshold)).to_image()


REFINERS: dict[str, Callable[[], Callable[[SketchImage], SketchImage]]] = {
    IdentityRefiner.name: IdentityRefiner,
    ThinningRefiner.name: ThinningRefiner,
}


def register_refiner(name: str, factory) -> None:
    """Make a refiner available to :class:`StandardizeConfig` by name."""
    REFINERS[name] = factory


def get_refiner(name: str):
    try:
        return REFINERS[name]()
    except KeyError:
        raise ValueError(f"unknown refiner {name!r}; known: {sorted(REFINERS)}") from None


@dataclass(frozen=True)
class StandardizeConfig:
    threshold: float = 0.5
    radius: int = 1
    iterations: int = 5
    refiner: str = "thinning"

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold must lie in (0, 1), got {self.threshold}")
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        StructuringElement(self.radius)
        if self.refiner not in REFINERS:
            raise ValueError(f"unknown refiner {self.refiner!r}; known: {sorted(REFINERS)}")


def standardize(img: SketchImage, cfg: StandardizeConfig = StandardizeConfig()) -> SketchImage:
    """binarize -> dilate -> refine; returns an ink-0 / background-1 image."""
    mask = dilate(binarize(img, cfg.threshold), StructuringElement(cfg.radius), cfg.iterations)
    out = get_refiner(cfg.refiner)(mask.to_image())
    if out.pixels.shape != img.pixels.shape:
        raise ValueError(f"refiner {cfg.refiner!r} changed image size")
    return out


def train_chain(img: SketchImage, deform: ControlPairSet,
                cfg: StandardizeConfig = StandardizeConfig(), spacing: int = 4) -> SketchImage:
    """Random deformation followed by standardization (training-time path)."""
    return standardize(deform_sketch(img, deform, spacing), cfg)


# --- dataset manifest and batch planning ------------------------------------------


@dataclass(frozen=True)
class DatasetEntry:
    id: str
    category: str
    sketch_path: str
    cloud_path: str
    viewpoint: int = 0

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        if not self.id or not self.sketch_path or not self.cloud_path:
            raise ValueError("id and paths must be non-empty")
        if self.viewpoint < 0:
            raise ValueError(f"viewpoint index must be >= 0, got {self.viewpoint}")


def parse_manifest(text: str) -> list[DatasetEntry]:
    """Tab-separated ``id category sketch_path cloud_path viewpoint`` records.

    Blank lines and lines starting with ``#`` are ignored.
    """
    entries = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.rstrip("\r\n").split("\t")
        if len(fields) != 5:
            raise ValueError(f"manifest line {lineno}: expected 5 tab-separated fields, got {len(fields)}")
        try:
            view = int(fields[4])
        except ValueError:
            raise ValueError(f"manifest line {lineno}: bad viewpoint index {fields[4]!r}") from None
        try:
            entry = DatasetEntry(fields[0], fields[1], fields[2], fields[3], view)
        except ValueError as exc:
            raise ValueError(f"manifest line {lineno}: {exc}") from None
        if entry.id in seen:
            raise ValueError(f"manifest line {lineno}: duplicate id {entry.id!r}")
        seen.add(entry.id)
        entries.append(entry)
    return entries


def format_manifest(entries: Sequence[DatasetEntry]) -> str:
    lines = ["# id\tcategory\tsketch_path\tcloud_path\tviewpoint"]
    lines += [f"{e.id}\t{e.category}\t{e.sketch_path}\t{e.cloud_path}\t{e.viewpoint}" for e in entries]
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class EvalManifest:
    entries: tuple
    base_dir: Path

    @classmethod
    def load(cls, path: str | os.PathLike, check_files: bool = True) -> "EvalManifest":
        path = Path(path)
        entries = parse_manifest(path.read_text())
        base = path.parent
        if check_files:
            missing = [p for e in entries for p in (e.sketch_path, e.cloud_path) if not (base / p).exists()]
            if missing:
                raise FileNotFoundError(f"manifest references missing files: {missing}")
        return cls(tuple(entries), base)

    def resolve(self, rel: str) -> Path:
        return self.base_dir / rel


@dataclass(frozen=True)
class BatchPlan:
    batches: tuple
    batch_size: int


def plan_batches(entries: Sequence[DatasetEntry], batch_size: int, rng_seed=0,
                 num_batches: int | None = None) -> BatchPlan:
    """Class-balanced mini-batches.

    Every batch holds ``batch_size / n_categories`` entries of each category
    present.  Each category is drawn from a seeded shuffle of its ids; a
    category that runs out is reshuffled and drawn again, so small
    categories repeat while the largest one appears at most once when
    ``num_batches`` is left at its default ``max_count // per_category``.
    """
    by_cat: dict[str, list[str]] = {}
    for e in entries:
        by_cat.setdefault(e.category, []).append(e.id)
    if not by_cat:
        raise ValueError("no entries to plan")
    cats = sorted(by_cat)
    if batch_size <= 0 or batch_size % len(cats):
        raise ValueError(f"batch size {batch_size} is not divisible by {len(cats)} categories")
    per_cat = batch_size // len(cats)
    if num_batches is None:
        num_batches = max(1, max(len(v) for v in by_cat.values()) // per_cat)
    rng = np.random.default_rng(rng_seed)

    pools = {c: sorted(by_cat[c]) for c in cats}
    queues = {c: [] for c in cats}
    batches = []
    for _ in range(num_batches):
        batch = []
        for c in cats:
            taken = []
            while len(taken) < per_cat:
                if not queues[c]:
                    order = [pools[c][i] for i in rng.permutation(len(pools[c]))]
                    if len(pools[c]) >= per_cat:
                        # keep ids already in this batch out of the refill's head
                        order = [i for i in order if i not in taken] + [i for i in order if i in taken]
                    queues[c] = order
                taken.append(queues[c].pop(0))
            batch.extend(taken)
        batches.append(tuple(batch[i] for i in rng.permutation(len(batch))))
    return BatchPlan(tuple(batches), batch_size)
