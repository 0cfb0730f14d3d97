import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import erfc

from cooc.data_io import read_idx_image_array
from cooc.domain import Image
from cooc.sparsity import (
    TexturizeParams,
    baseline_bits_r0,
    significance_map,
    texturize_batch,
    texturize_digit,
    threshold_for_density,
)

from conftest import MNIST_DIR, mnist_available


class TestSignificanceMap:
    def test_zero_values(self):
        assert significance_map(np.zeros(5), 0.0).cardinality == 0

    def test_small_example(self):
        assert significance_map([3, -5, 1], 2).indices().tolist() == [0, 1]

    def test_threshold_at_max_is_empty(self, rng):
        v = rng.normal(size=50)
        assert significance_map(v, np.abs(v).max()).cardinality == 0

    def test_negative_threshold_rejected(self):
        with pytest.raises(ValueError):
            significance_map([1.0], -1.0)

    @settings(max_examples=60, deadline=None)
    @given(values=st.lists(st.floats(-10, 10), min_size=1, max_size=40),
           t1=st.floats(0, 10), t2=st.floats(0, 10))
    def test_monotone_in_threshold(self, values, t1, t2):
        lo, hi = sorted((t1, t2))
        small = significance_map(values, hi).members
        large = significance_map(values, lo).members
        assert np.all(large[small])


class TestThresholdForDensity:
    def test_sort_oracle(self):
        t = threshold_for_density([4, 3, 2, 1], 0.5)
        assert significance_map([4, 3, 2, 1], t).indices().tolist() == [0, 1]

    def test_all_equal_values(self):
        for rho in (0.1, 0.5, 0.9):
            assert significance_map(np.ones(10), threshold_for_density(np.ones(10), rho)).cardinality == 0

    def test_zero_target(self):
        v = [5.0, 1.0, 2.0]
        assert significance_map(v, threshold_for_density(v, 0.2)).cardinality == 0

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 10_000), rho=st.floats(0.01, 0.99))
    def test_keeps_floor_count_without_ties(self, seed, rho):
        v = np.random.default_rng(seed).normal(size=97)
        kept = significance_map(v, threshold_for_density(v, rho)).members
        assert kept.sum() == math.floor(rho * 97)
        order = np.argsort(-np.abs(v))
        assert np.all(kept[order[: kept.sum()]])


class TestBaselineBits:
    def test_empty_set(self):
        assert baseline_bits_r0(100, 0) == 0.0

    def test_sixteen_choose_eight(self):
        assert baseline_bits_r0(16, 8) == pytest.approx(math.log2(12870), abs=1e-12)
        assert baseline_bits_r0(16, 8) == pytest.approx(13.652, abs=5e-4)

    def test_log_sum_oracle(self):
        n, k = 784, 100
        oracle = sum(math.log2((n - k + i) / i) for i in range(1, k + 1))
        assert baseline_bits_r0(n, k) == pytest.approx(oracle, abs=1e-9)

    def test_large_domain(self):
        assert math.isfinite(baseline_bits_r0(10**6, 5 * 10**5))

    def test_too_many(self):
        with pytest.raises(ValueError):
            baseline_bits_r0(4, 5)

    @given(n=st.integers(1, 5000), frac=st.floats(0, 1))
    def test_symmetry(self, n, frac):
        k = int(frac * n)
        assert baseline_bits_r0(n, k) == pytest.approx(baseline_bits_r0(n, n - k), abs=1e-9)


class TestTexturize:
    def _rate(self, value, params):
        img = Image(1000, 1000, np.full(10**6, value))
        return texturize_digit(img, params)[1].members.mean()

    @pytest.mark.parametrize("value,cut", [(0.0, 2.0), (1.0, 1.0)])
    def test_tail_probability(self, value, cut):
        # background: |W| > T / C; foreground: |W| > T / (1 + C)
        p = erfc(cut / math.sqrt(2))
        rate = self._rate(value, TexturizeParams(1.0, 2.0, seed=4))
        assert abs(rate - p) <= 3 * math.sqrt(p * (1 - p) / 10**6)

    def test_tail_values(self):
        assert erfc(2 / math.sqrt(2)) == pytest.approx(0.0455, abs=1e-4)
        assert erfc(1 / math.sqrt(2)) == pytest.approx(0.3173, abs=1e-4)

    def test_deterministic(self, rng):
        img = Image(28, 28, rng.random(784))
        a = texturize_digit(img, TexturizeParams(seed=3))
        b = texturize_digit(img, TexturizeParams(seed=3))
        assert a[0] == b[0] and a[1] == b[1]
        assert texturize_digit(img, TexturizeParams(seed=4))[1] != a[1]

    def test_product_form(self, rng):
        img = Image(4, 4, rng.random(16))
        textured, y = texturize_digit(img, TexturizeParams(1.0, 2.0, seed=1), stream=5)
        from cooc import rng as prng
        np.testing.assert_array_equal(textured.samples, (img.samples + 1.0) * prng.normals(1, 5, 16))
        np.testing.assert_array_equal(y.members, np.abs(textured.samples) > 2.0)

    def test_batch_matches_single(self, rng):
        pixels = rng.random((3, 5, 5))
        params = TexturizeParams(seed=2)
        batch = texturize_batch(pixels, params, first_stream=10)
        for i in range(3):
            _, y = texturize_digit(Image.from_array(pixels[i]), params, stream=10 + i)
            np.testing.assert_array_equal(batch[i], y.members)

    def test_invalid_params(self):
        with pytest.raises(ValueError):
            TexturizeParams(offset=0.0)

    @pytest.mark.skipif(not mnist_available(), reason="MNIST files not found")
    def test_support_denser_than_background_on_mnist(self):
        pixels = read_idx_image_array(MNIST_DIR / "t10k-images-idx3-ubyte")[:500] / 255.0
        Y = texturize_batch(pixels, TexturizeParams(1.0, 2.0, seed=0))
        support = pixels.reshape(500, -1) > 0.5
        background = pixels.reshape(500, -1) == 0
        fg, bg = Y[support].mean(), Y[background].mean()
        sigma = math.sqrt(fg * (1 - fg) / support.sum()) + math.sqrt(bg * (1 - bg) / background.sum())
        assert fg - bg > 3 * sigma
