"""Dataset, loader, split, aux-set and augmentation tests."""

import numpy as np
import numpy.testing as npt
import pytest

from neve.data import (AugmentRecipe, SplitSpec, augment, gen_blobs, gen_digits,
                       hflip, load_cifar10, load_idx, make_aux_from_samples,
                       make_aux_noise, split, standardize, write_idx)
from neve.engine import Optimizer, backward_and_step, build_model, evaluate
from neve.errors import ConfigError, DataFormatError


class TestBlobs:
    def test_deterministic(self):
        a = gen_blobs(200, 4, seed=9)
        b = gen_blobs(200, 4, seed=9)
        assert a.samples.tobytes() == b.samples.tobytes()
        assert np.array_equal(a.labels, b.labels)

    def test_balanced_classes(self):
        ds = gen_blobs(203, 4, seed=0)
        counts = np.bincount(ds.labels)
        assert counts.max() - counts.min() <= 1
        assert counts.sum() == 203

    def test_separable_blobs_are_learnable(self):
        # margin >> sigma: a linear classifier fits to >= 99% train accuracy
        centers = np.array([[-1.0, -1.0], [1.0, 1.0]])
        ds = gen_blobs(400, 2, centers=centers, sigma=0.1, seed=3)
        model = build_model("mlp:2-2", seed=0)
        opt = Optimizer(lr=0.5)
        for _ in range(60):
            backward_and_step(model, ds.samples, ds.labels, opt)
        _, acc = evaluate(model, ds.samples, ds.labels)
        assert acc >= 0.99

    def test_tiny_sigma_near_duplicates(self):
        ds = gen_blobs(20, 2, sigma=1e-9, seed=1)
        for c in range(2):
            pts = ds.samples[ds.labels == c]
            assert np.ptp(pts, axis=0).max() < 1e-7

    def test_validation(self):
        with pytest.raises(ConfigError):
            gen_blobs(1, 2)
        with pytest.raises(ConfigError):
            gen_blobs(10, 2, sigma=0.0)
        with pytest.raises(ConfigError):
            gen_blobs(10, 2, centers=[[1.0, 1.0], [1.0, 1.0]])


class TestDigits:
    def test_deterministic_and_quantized(self):
        a = gen_digits(50, seed=4)
        b = gen_digits(50, seed=4)
        assert a.samples.tobytes() == b.samples.tobytes()
        npt.assert_array_equal(np.round(a.samples * 255), a.samples * 255)

    def test_shape_and_classes(self):
        ds = gen_digits(40, seed=0)
        assert ds.samples.shape == (40, 1, 28, 28)
        assert ds.n_classes == 10
        assert set(np.unique(ds.labels)) == set(range(10))


class TestIdx:
    def test_round_trip_bit_identical(self, tmp_path):
        ds = gen_digits(30, seed=2)
        write_idx(ds, tmp_path / "imgs.idx", tmp_path / "labels.idx")
        back = load_idx(tmp_path / "imgs.idx", tmp_path / "labels.idx")
        assert back.samples.tobytes() == ds.samples.tobytes()
        assert np.array_equal(back.labels, ds.labels)

    def test_magic_bytes(self, tmp_path):
        ds = gen_digits(10, seed=1)
        write_idx(ds, tmp_path / "i.idx", tmp_path / "l.idx")
        assert (tmp_path / "i.idx").read_bytes()[:4] == b"\x00\x00\x08\x03"
        assert (tmp_path / "l.idx").read_bytes()[:4] == b"\x00\x00\x08\x01"

    def test_wrong_magic_rejected(self, tmp_path):
        p = tmp_path / "bad.idx"
        p.write_bytes(b"\x00\x00\x09\x03" + b"\x00" * 16)
        with pytest.raises(DataFormatError, match="magic"):
            load_idx(p, p)

    def test_truncated_file_is_format_error(self, tmp_path):
        ds = gen_digits(10, seed=1)
        write_idx(ds, tmp_path / "i.idx", tmp_path / "l.idx")
        blob = (tmp_path / "i.idx").read_bytes()
        (tmp_path / "trunc.idx").write_bytes(blob[:len(blob) // 2])
        with pytest.raises(DataFormatError, match="bytes"):
            load_idx(tmp_path / "trunc.idx", tmp_path / "l.idx")

    def test_length_mismatch(self, tmp_path):
        a = gen_digits(10, seed=1)
        b = gen_digits(20, seed=1)
        write_idx(a, tmp_path / "i10.idx", tmp_path / "l10.idx")
        write_idx(b, tmp_path / "i20.idx", tmp_path / "l20.idx")
        with pytest.raises(DataFormatError, match="images vs"):
            load_idx(tmp_path / "i10.idx", tmp_path / "l20.idx")

    def test_pixel_255_scales_to_one(self, tmp_path):
        import struct
        img = np.full((1, 2, 2), 255, dtype=np.uint8)
        with open(tmp_path / "i.idx", "wb") as f:
            f.write(struct.pack(">IIII", 0x803, 1, 2, 2))
            f.write(img.tobytes())
        with open(tmp_path / "l.idx", "wb") as f:
            f.write(struct.pack(">II", 0x801, 1))
            f.write(b"\x07")
        ds = load_idx(tmp_path / "i.idx", tmp_path / "l.idx")
        assert ds.samples.max() == 1.0
        assert ds.labels[0] == 7


class TestCifar10:
    def test_synthetic_batch_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        n = 12
        labels = rng.integers(0, 10, n, dtype=np.uint8)
        pixels = rng.integers(0, 256, (n, 3072), dtype=np.uint8)
        records = np.concatenate([labels[:, None], pixels], axis=1)
        p = tmp_path / "data_batch_1.bin"
        p.write_bytes(records.tobytes())
        ds = load_cifar10([p])
        assert ds.samples.shape == (n, 3, 32, 32)
        assert np.array_equal(ds.labels, labels)
        npt.assert_allclose(ds.samples[0].reshape(-1) * 255, pixels[0])

    def test_bad_record_size(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"\x00" * 100)
        with pytest.raises(DataFormatError, match="3073"):
            load_cifar10([p])


class TestSplit:
    def test_fraction_zero(self):
        ds = gen_blobs(100, 4, seed=0)
        train, val = split(ds, SplitSpec(0.0))
        assert len(train) == 100 and len(val) == 0
        assert train.samples.tobytes() == ds.samples.tobytes()

    def test_ten_percent_arithmetic(self):
        ds = gen_digits(500, seed=0)
        train, val = split(ds, SplitSpec(0.1, seed=1))
        assert (len(train), len(val)) == (450, 50)

    def test_partition_disjoint_exhaustive_deterministic(self):
        ds = gen_blobs(300, 3, seed=5)
        t1, v1 = split(ds, SplitSpec(0.25, seed=7))
        t2, v2 = split(ds, SplitSpec(0.25, seed=7))
        assert t1.samples.tobytes() == t2.samples.tobytes()
        assert v1.samples.tobytes() == v2.samples.tobytes()
        joined = np.concatenate([t1.samples, v1.samples])
        assert len(joined) == len(ds)
        key = lambda arr: sorted(map(tuple, arr))
        assert key(joined) == key(ds.samples)

    def test_stratified_within_one(self):
        ds = gen_digits(1000, seed=0)
        train, val = split(ds, SplitSpec(0.3, seed=2))
        for part, total in ((train, 700), (val, 300)):
            counts = np.bincount(part.labels, minlength=10)
            for c in range(10):
                exact = total * np.bincount(ds.labels)[c] / 1000
                assert abs(counts[c] - exact) <= 1

    def test_empty_train_class_rejected(self):
        ds = gen_blobs(4, 2, seed=0)
        with pytest.raises(ConfigError, match="class"):
            split(ds, SplitSpec(0.9, seed=0))


class TestAuxSets:
    def test_noise_deterministic(self):
        a = make_aux_noise(100, (1, 28, 28), seed=3)
        b = make_aux_noise(100, (1, 28, 28), seed=3)
        assert a.content_hash() == b.content_hash()

    def test_noise_is_standard_normal(self):
        # n = 78 400 values: mean within +-0.05, std within +-0.05
        aux = make_aux_noise(100, (1, 28, 28), seed=0)
        assert -0.05 < aux.samples.mean() < 0.05
        assert 0.95 < aux.samples.std() < 1.05

    def test_singleton_aux(self):
        aux = make_aux_noise(1, (2,), seed=0)
        assert aux.samples.shape == (1, 2)

    def test_heldout_draws_without_replacement(self):
        ds = gen_blobs(50, 2, seed=1)
        aux = make_aux_from_samples(ds.samples, 20, seed=4)
        assert aux.samples.shape == (20, 2)
        pool = set(map(tuple, ds.samples))
        assert all(tuple(s) in pool for s in aux.samples)
        assert len(set(map(tuple, aux.samples))) == 20

    def test_count_validation(self):
        ds = gen_blobs(10, 2, seed=1)
        with pytest.raises(ConfigError):
            make_aux_from_samples(ds.samples, 11)
        with pytest.raises(ConfigError):
            make_aux_noise(0, (2,))


class TestAugment:
    def test_double_flip_identity(self):
        batch = np.random.default_rng(0).random((4, 1, 8, 8))
        npt.assert_array_equal(hflip(hflip(batch)), batch)

    def test_pad_crop_preserves_shape(self):
        batch = np.random.default_rng(1).random((6, 3, 32, 32))
        out = augment(batch, AugmentRecipe("pad_crop_flip", pad=4),
                      np.random.default_rng(2))
        assert out.shape == batch.shape

    def test_none_recipe_unchanged(self):
        batch = np.random.default_rng(3).random((5, 1, 8, 8))
        out = augment(batch, AugmentRecipe("none"), np.random.default_rng(4))
        assert out.tobytes() == batch.tobytes()

    def test_crop_larger_than_padded_rejected(self):
        batch = np.zeros((2, 1, 8, 8))
        with pytest.raises(ConfigError, match="crop"):
            augment(batch, AugmentRecipe("pad_crop_flip", pad=1, crop=12),
                    np.random.default_rng(0))

    def test_unknown_recipe_rejected(self):
        with pytest.raises(ConfigError):
            AugmentRecipe("cutmix")

    def test_seeded_generator_reproduces(self):
        batch = np.random.default_rng(5).random((8, 1, 10, 10))
        r = AugmentRecipe("pad_crop_flip", pad=2)
        out1 = augment(batch, r, np.random.default_rng(42))
        out2 = augment(batch, r, np.random.default_rng(42))
        assert out1.tobytes() == out2.tobytes()


class TestStandardize:
    def test_reference_statistics(self):
        ds = gen_digits(200, seed=0)
        out, = standardize(ds)
        assert abs(out.samples.mean()) < 1e-12
        assert out.samples.std() == pytest.approx(1.0, abs=1e-12)

    def test_other_sets_share_reference_transform(self):
        train = gen_digits(200, seed=0)
        test = gen_digits(50, seed=1)
        t1, t2 = standardize(train, test)
        mean = train.samples.mean()
        std = train.samples.std()
        npt.assert_allclose(t2.samples, (test.samples - mean) / std, atol=1e-12)
