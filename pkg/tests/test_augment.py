"""Geometric transforms and the paired augmentation set."""

import numpy as np
import pytest

from otbench.augment import AUGMENT_TAGS, SamplePair, augment_pair, flip_h, flip_v, rotate90, zoom_center
from otbench.errors import ValidationError


def letters():
    return np.array([[1.0, 2.0], [3.0, 4.0]]) / 10.0  # a,b / c,d


class TestRotate:
    def test_one_turn_index_permutation(self):
        # [[a,b],[c,d]] -> [[c,a],[d,b]]
        np.testing.assert_array_equal(rotate90(letters(), 1), np.array([[3.0, 1.0], [4.0, 2.0]]) / 10.0)

    def test_four_turns_identity(self):
        p = np.random.default_rng(0).random((5, 7))
        out = p
        for _ in range(4):
            out = rotate90(out, 1)
        assert np.array_equal(out, p)

    def test_two_turns_equal_double_flip(self):
        p = np.random.default_rng(1).random((6, 4))
        assert np.array_equal(rotate90(p, 2), flip_v(flip_h(p)))

    def test_dimension_swap(self):
        p = np.zeros((3, 5))
        assert rotate90(p, 1).shape == (5, 3)
        assert rotate90(p, 2).shape == (3, 5)
        assert rotate90(p, 3).shape == (5, 3)

    def test_arbitrary_angles_rejected(self):
        with pytest.raises(ValidationError):
            rotate90(letters(), 0)
        with pytest.raises(ValidationError):
            rotate90(letters(), 4)

    def test_rgb_rotation(self):
        img = np.random.default_rng(2).random((4, 6, 3))
        out = rotate90(img, 1)
        assert out.shape == (6, 4, 3)
        for c in range(3):
            assert np.array_equal(out[:, :, c], rotate90(img[:, :, c], 1))


class TestFlips:
    def test_flip_h_index_permutation(self):
        np.testing.assert_array_equal(flip_h(letters()), np.array([[2.0, 1.0], [4.0, 3.0]]) / 10.0)

    def test_involutions(self):
        p = np.random.default_rng(3).random((5, 8))
        assert np.array_equal(flip_h(flip_h(p)), p)
        assert np.array_equal(flip_v(flip_v(p)), p)

    def test_mask_alignment(self):
        rng = np.random.default_rng(4)
        mask = rng.random((6, 9)) > 0.5
        flipped = flip_h(mask)
        w = mask.shape[1]
        for r in range(mask.shape[0]):
            for c in range(w):
                assert flipped[r, c] == mask[r, w - 1 - c]


class TestZoom:
    def test_shape_preserved(self):
        p = np.random.default_rng(5).random((20, 20))
        assert zoom_center(p).shape == p.shape

    def test_constant_invariant(self):
        p = np.full((10, 10), 0.25)
        np.testing.assert_array_equal(zoom_center(p), p)


class TestAugmentPair:
    def make_pair(self, seed=6, shape=(8, 10)):
        rng = np.random.default_rng(seed)
        return SamplePair(image=rng.random(shape), mask=rng.random(shape) > 0.6)

    def test_exactly_six_tagged_derivatives(self):
        derived = augment_pair(self.make_pair())
        assert tuple(d.tag for d in derived) == AUGMENT_TAGS
        assert len(derived) == 6

    def test_mask_equals_same_transform(self):
        pair = self.make_pair()
        derived = {d.tag: d for d in augment_pair(pair)}
        assert np.array_equal(derived["rot90"].mask, rotate90(pair.mask, 1))
        assert np.array_equal(derived["rot180"].mask, rotate90(pair.mask, 2))
        assert np.array_equal(derived["rot270"].mask, rotate90(pair.mask, 3))
        assert np.array_equal(derived["hflip"].mask, flip_h(pair.mask))
        assert np.array_equal(derived["vflip"].mask, flip_v(pair.mask))
        assert np.array_equal(derived["normalized"].mask, pair.mask)

    def test_all_background_mask_stays_empty(self):
        pair = SamplePair(image=np.random.default_rng(7).random((5, 5)), mask=np.zeros((5, 5), dtype=bool))
        for d in augment_pair(pair):
            assert not d.mask.any()

    def test_lesion_count_preserved(self):
        pair = self.make_pair(seed=8)
        count = int(pair.mask.sum())
        for d in augment_pair(pair):
            assert int(d.mask.sum()) == count

    def test_pixel_multiset_preserved_by_geometric_transforms(self):
        pair = self.make_pair(seed=9)
        for d in augment_pair(pair):
            if d.tag == "normalized":
                continue
            assert np.array_equal(np.sort(d.image.ravel()), np.sort(pair.image.ravel()))

    def test_deterministic(self):
        pair = self.make_pair(seed=10)
        a = augment_pair(pair)
        b = augment_pair(pair)
        for x, y in zip(a, b):
            assert x.tag == y.tag and np.array_equal(x.image, y.image) and np.array_equal(x.mask, y.mask)

    def test_zoom_flag_appends_seventh(self):
        derived = augment_pair(self.make_pair(seed=11), include_zoom=True)
        assert len(derived) == 7 and derived[-1].tag == "zoom"

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValidationError):
            SamplePair(image=np.zeros((4, 4)), mask=np.zeros((4, 5), dtype=bool))

    def test_mask_optional(self):
        derived = augment_pair(SamplePair(image=np.random.default_rng(12).random((6, 6))))
        assert len(derived) == 6 and all(d.mask is None for d in derived)

    def test_normalized_copy_is_max_scaled(self):
        pair = self.make_pair(seed=13)
        derived = {d.tag: d for d in augment_pair(pair)}
        assert derived["normalized"].image.max() == pytest.approx(1.0)
        np.testing.assert_allclose(derived["normalized"].image, pair.image / pair.image.max())
