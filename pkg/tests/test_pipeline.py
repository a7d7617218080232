import numpy as np
import pytest
from collections import Counter

from sketch3d import oracles
from sketch3d.mlsdeform import ControlPairSet, deform_sketch, random_deformation
from sketch3d.pipeline import (
    CATEGORIES, DatasetEntry, EvalManifest, StandardizeConfig, format_manifest, get_refiner, parse_manifest,
    plan_batches, register_refiner, REFINERS, standardize, train_chain,
)
from sketch3d.sketchimg import (
    BinaryMask, SketchImage, StructuringElement, binarize, components, dilate, rasterize_polyline, thin,
)

from conftest import stroke_corpus


def thin_stroke(size=64):
    return rasterize_polyline([(8, 10), (50, 20), (40, 55)], size, size)


class TestStandardize:
    def test_no_dilation_identity_refiner(self, rng):
        img = SketchImage(rng.random((20, 20)))
        out = standardize(img, StandardizeConfig(iterations=0, refiner="identity"))
        assert out == binarize(img, 0.5).to_image()

    def test_single_pixel_ball(self):
        img = BinaryMask.from_points(32, 32, [(15, 15)]).to_image()
        out = binarize(standardize(img, StandardizeConfig(radius=1, iterations=5, refiner="identity")))
        assert out.ink_points() == {(x, y) for x in range(10, 21) for y in range(10, 21)}

    def test_thinning_preserves_topology(self):
        img = thin_stroke()
        out = standardize(img, StandardizeConfig(iterations=5, refiner="thinning"))
        assert components(binarize(out)) == components(binarize(img)) == 1

    @pytest.mark.parametrize("mask", stroke_corpus(10, seed=3), ids=lambda m: f"ink{m.count()}")
    def test_thinning_after_dilation_on_thin_strokes(self, mask):
        skeleton = thin(mask)
        out = standardize(skeleton.to_image(), StandardizeConfig())
        assert components(binarize(out)) == components(skeleton)

    def test_deterministic(self, rng):
        img = thin_stroke()
        assert standardize(img) == standardize(img)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            StandardizeConfig(iterations=-1)
        with pytest.raises(ValueError):
            StandardizeConfig(radius=0)
        with pytest.raises(ValueError):
            StandardizeConfig(refiner="pix2pix")
        with pytest.raises(ValueError):
            get_refiner("nope")

    def test_custom_refiner(self):
        class Invert:
            name = "invert"

            def __call__(self, img):
                return SketchImage(1.0 - img.pixels)

        register_refiner("invert", Invert)
        try:
            img = BinaryMask.from_points(8, 8, [(1, 1)]).to_image()
            out = standardize(img, StandardizeConfig(iterations=0, refiner="invert"))
            assert binarize(out).count() == 63
        finally:
            del REFINERS["invert"]


class TestTrainChain:
    def test_identity_deform_no_dilation(self, rng):
        img = SketchImage(rng.random((16, 16)))
        p = rng.uniform(0, 15, (3, 2))
        out = train_chain(img, ControlPairSet(p, p), StandardizeConfig(iterations=0, refiner="identity"))
        assert out == binarize(img).to_image()

    def test_identity_deform_equals_standardize(self):
        img = thin_stroke()
        p = np.array([[3.0, 3.0], [40.0, 9.0]])
        assert train_chain(img, ControlPairSet(p, p)) == standardize(img)

    @pytest.mark.parametrize("seed", range(3))
    def test_composition(self, seed):
        img = thin_stroke()
        ctl = random_deformation(binarize(img), 6, 3.0, seed)
        cfg = StandardizeConfig()
        assert train_chain(img, ctl, cfg) == standardize(deform_sketch(img, ctl), cfg)


def entries_for(counts):
    return [DatasetEntry(f"{c}_{i:02d}", c, f"s/{c}{i}.pgm", f"c/{c}{i}.xyz", 0)
            for c, n in counts.items() for i in range(n)]


class TestManifest:
    def test_roundtrip(self):
        entries = entries_for({"car": 2, "lamp": 1})
        assert parse_manifest(format_manifest(entries)) == entries

    def test_unknown_category(self):
        with pytest.raises(ValueError, match="line 1.*unknown category"):
            parse_manifest("a\tspaceship\ts.pgm\tc.xyz\t0\n")

    def test_bad_field_count(self):
        with pytest.raises(ValueError, match="line 2"):
            parse_manifest("# comment\na\tcar\ts.pgm\n")

    def test_duplicate_ids(self):
        with pytest.raises(ValueError, match="duplicate"):
            parse_manifest("a\tcar\ts\tc\t0\na\tcar\ts\tc\t1\n")

    def test_load_checks_files(self, tmp_path):
        (tmp_path / "m.tsv").write_text("a\tcar\ts.pgm\tc.xyz\t0\n")
        with pytest.raises(FileNotFoundError):
            EvalManifest.load(tmp_path / "m.tsv")
        (tmp_path / "s.pgm").write_bytes(b"")
        (tmp_path / "c.xyz").write_text("")
        m = EvalManifest.load(tmp_path / "m.tsv")
        assert m.resolve("c.xyz") == tmp_path / "c.xyz"

    def test_thirteen_categories(self):
        assert len(CATEGORIES) == 13 and CATEGORIES[0] == "airplane" and CATEGORIES[-1] == "watercraft"


class TestPlanBatches:
    def test_one_per_category(self):
        entries = entries_for({c: 10 for c in CATEGORIES})
        plan = plan_batches(entries, 13, 0)
        cat = {e.id: e.category for e in entries}
        assert len(plan.batches) == 10
        for b in plan.batches:
            assert sorted(cat[i] for i in b) == sorted(CATEGORIES)
        # every id exactly once across the epoch
        assert Counter(i for b in plan.batches for i in b) == Counter(e.id for e in entries)

    def test_small_category_repeats(self):
        entries = entries_for({"car": 6, "lamp": 2})
        plan = plan_batches(entries, 4, 1)
        cat = {e.id: e.category for e in entries}
        assert len(plan.batches) == 3
        for b in plan.batches:
            assert Counter(cat[i] for i in b) == {"car": 2, "lamp": 2}
            assert len(set(b)) == 4
        used = Counter(i for b in plan.batches for i in b)
        assert all(used[e.id] == 1 for e in entries if e.category == "car")
        assert all(used[e.id] == 3 for e in entries if e.category == "lamp")

    def test_deterministic(self):
        entries = entries_for({"car": 5, "lamp": 3, "sofa": 4})
        assert plan_batches(entries, 6, 9) == plan_batches(entries, 6, 9)
        assert plan_batches(entries, 6, 9) != plan_batches(entries, 6, 10)

    def test_indivisible(self):
        with pytest.raises(ValueError, match="batch size 5 is not divisible by 2"):
            plan_batches(entries_for({"car": 3, "lamp": 3}), 5, 0)

    def test_input_order_irrelevant(self, rng):
        entries = entries_for({"car": 5, "lamp": 3, "sofa": 4})
        shuffled = [entries[i] for i in rng.permutation(len(entries))]
        assert plan_batches(entries, 6, 2) == plan_batches(shuffled, 6, 2)

    def test_balance_random(self, rng):
        for _ in range(20):
            cats = rng.choice(CATEGORIES, size=int(rng.integers(1, 6)), replace=False)
            counts = {str(c): int(rng.integers(1, 9)) for c in cats}
            per = int(rng.integers(1, 4))
            entries = entries_for(counts)
            cat = {e.id: e.category for e in entries}
            plan = plan_batches(entries, per * len(counts), int(rng.integers(1000)))
            for b in plan.batches:
                assert Counter(cat[i] for i in b) == {c: per for c in counts}
