import numpy as np
import pytest

from sketch3d.sketchimg import BinaryMask, StructuringElement, dilate, rasterize_polyline


def stroke_corpus(count=20, size=64, seed=7):
    """Synthetic sketches: random polylines dilated to 1-4 px thick strokes."""
    rng = np.random.default_rng(seed)
    out = []
    for k in range(count):
        npts = int(rng.integers(2, 6))
        pts = rng.uniform(6, size - 7, size=(npts, 2))
        mask = BinaryMask(rasterize_polyline(pts, size, size).pixels < 0.5)
        thickness = k % 4
        if thickness:
            mask = dilate(mask, StructuringElement(1), thickness)
        out.append(mask)
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
