import math

import numpy as np
import pytest

from sparsemask.sparse_core import SparseVector, TopK, TopP, top_k_mask
from sparsemask.toy_encoder import (
    HeadParams,
    aggregate,
    encode,
    encode_unmasked,
    gelu,
    layer_norm,
    spar_term_row,
    splitmix64,
    token_states,
)


@pytest.fixture(scope="module")
def params():
    return HeadParams.generate(seed=3, hidden_dim=16, vocab_size=1000)


def reference_row(h, prm: HeadParams):
    """Plain-Python loops over the same formula, independent of numpy matmul."""
    hd = prm.hidden_dim
    z = [sum(prm.linear_weights[i][j] * h[j] for j in range(hd)) + prm.linear_bias[i] for i in range(hd)]
    g = [x * 0.5 * (1 + math.erf(x / math.sqrt(2))) for x in z]
    mean = sum(g) / hd
    var = sum((x - mean) ** 2 for x in g) / hd
    t = [(x - mean) / math.sqrt(var + 1e-5) * prm.ln_gain[i] + prm.ln_bias[i] for i, x in enumerate(g)]
    return [sum(prm.embeddings[j][i] * t[i] for i in range(hd)) + prm.vocab_bias[j] for j in range(prm.vocab_size)]


class TestGelu:
    def test_values(self):
        assert gelu(0.0) == 0.0
        assert gelu(1.0) == pytest.approx(1.0 * 0.5 * (1 + math.erf(1 / math.sqrt(2))), abs=1e-15)
        assert gelu(1.0) == pytest.approx(0.841345, abs=1e-6)
        for x in (6.0, 8.0, 20.0):
            assert abs(gelu(x) - x) <= 1e-6

    def test_vectorized(self):
        xs = np.linspace(-5, 5, 41)
        expected = [x * 0.5 * (1 + math.erf(x / math.sqrt(2))) for x in xs]
        np.testing.assert_allclose(gelu(xs), expected, atol=1e-15)


class TestLayerNorm:
    def test_constant_row(self):
        np.testing.assert_array_equal(layer_norm([3.0, 3.0, 3.0], [1, 1, 1], [0, 0, 0]), [0, 0, 0])

    def test_two_values(self):
        out = layer_norm([1.0, -1.0], [1.0, 1.0], [0.0, 0.0])
        expected = 1.0 / math.sqrt(1.0 + 1e-5)
        np.testing.assert_allclose(out, [expected, -expected], rtol=0, atol=1e-15)
        assert 0.99999 < out[0] < 1.0

    def test_zero_gain_gives_bias(self):
        bias = [0.3, -1.2, 7.0]
        np.testing.assert_array_equal(layer_norm([5.0, 1.0, 2.0], [0, 0, 0], bias), bias)

    def test_mean_is_zero(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            row = rng.normal(0, 10, 16)
            assert abs(layer_norm(row, np.ones(16), np.zeros(16)).mean()) <= 1e-9

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            layer_norm([1.0, 2.0, 3.0], [1.0, 1.0], [0.0, 0.0, 0.0])
        with pytest.raises(ValueError):
            layer_norm([1.0], [1.0], [0.0])


class TestSparTermRow:
    def test_zero_embeddings_give_bias(self, params):
        prm = HeadParams(**{**params.__dict__, "embeddings": np.zeros((1000, 16))})
        h = token_states([5], 16, 0)[0]
        np.testing.assert_array_equal(spar_term_row(h, prm), prm.vocab_bias)

    def test_coordinate_selector(self):
        prm = HeadParams(
            hidden_dim=2, vocab_size=1,
            linear_weights=np.eye(2), linear_bias=np.zeros(2),
            ln_gain=np.ones(2), ln_bias=np.zeros(2),
            embeddings=np.array([[1.0, 0.0]]), vocab_bias=np.zeros(1),
        )
        h = np.array([0.7, -0.2])
        g = [x * 0.5 * (1 + math.erf(x / math.sqrt(2))) for x in h]
        m = sum(g) / 2
        t0 = (g[0] - m) / math.sqrt(((g[0] - m) ** 2 + (g[1] - m) ** 2) / 2 + 1e-5)
        assert spar_term_row(h, prm)[0] == pytest.approx(t0, abs=1e-12)

    def test_matches_reference_implementation(self, params):
        for tok in (0, 17, 999):
            h = token_states([tok], 16, params.seed)[0]
            np.testing.assert_allclose(spar_term_row(h, params), reference_row(h.tolist(), params), atol=1e-9)

    def test_linear_in_embeddings(self, params):
        doubled = HeadParams(**{**params.__dict__, "embeddings": params.embeddings * 2})
        h = token_states([42], 16, params.seed)[0]
        base = spar_term_row(h, params) - params.vocab_bias
        np.testing.assert_allclose(spar_term_row(h, doubled) - params.vocab_bias, 2 * base, atol=1e-9)

    def test_dimension_mismatch(self, params):
        with pytest.raises(ValueError):
            spar_term_row(np.zeros(15), params)


class TestAggregate:
    def test_negative_dropped(self):
        v = aggregate([[-5.0, 1.0]])
        assert v.support() == {1}

    def test_log1p_inverse(self):
        v = aggregate([[0.0, math.e - 1]])
        assert v.to_dict() == {1: pytest.approx(1.0, abs=1e-15)}

    def test_two_rows(self):
        v = aggregate([[1.0], [1.0]])
        assert v.to_dict()[0] == pytest.approx(2 * math.log(2), abs=1e-12)
        assert v.to_dict()[0] == pytest.approx(1.386294, abs=1e-6)

    def test_strictly_positive(self):
        rng = np.random.default_rng(1)
        v = aggregate(rng.normal(-1, 1, (20, 300)))
        assert np.all(v.weights > 0)


class TestStates:
    def test_splitmix_known_value(self):
        # first output of the reference SplitMix64 stream seeded with 0
        assert int(splitmix64(np.array([0], dtype=np.uint64))[0]) == 0xE220A8397B1DCDAF

    def test_range_and_determinism(self):
        a = token_states([1, 2, 3, 1], 16, 9)
        assert a.shape == (4, 16)
        assert np.all(a >= -1) and np.all(a < 1)
        np.testing.assert_array_equal(a[0], a[3])
        np.testing.assert_array_equal(a, token_states([1, 2, 3, 1], 16, 9))
        assert not np.array_equal(a, token_states([1, 2, 3, 1], 16, 10))

    def test_params_regenerate_bit_identical(self):
        a, b = HeadParams.generate(7), HeadParams.generate(7)
        for name in ("linear_weights", "embeddings", "vocab_bias", "ln_gain"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


class TestEncode:
    def test_deterministic(self, params):
        toks = [3, 1, 4, 1, 5, 9, 2, 6]
        assert encode(toks, params, TopP(0.9)) == encode(toks, HeadParams.generate(3), TopP(0.9))

    def test_noop_masks_agree(self, params):
        toks = list(range(40))
        assert encode(toks, params, TopP(1.0)) == encode(toks, params, TopK(1000)) == encode_unmasked(toks, params)

    def test_top1(self, params):
        toks = [10, 20, 30]
        raw = encode_unmasked(toks, params)
        best = max(raw, key=lambda tw: (tw[1], -tw[0]))
        assert list(encode(toks, params, TopK(1))) == [best]

    def test_nnz_monotone_in_p(self, params):
        toks = list(range(0, 200, 3))
        sizes = [encode(toks, params, TopP(p)).nnz for p in np.linspace(0, 1, 21)]
        assert sizes == sorted(sizes)

    def test_rejects_bad_input(self, params):
        with pytest.raises(ValueError):
            encode([], params)
        with pytest.raises(ValueError):
            encode([1000], params)
        with pytest.raises(ValueError):
            encode([-1], params)

    def test_output_is_valid_vector(self, params):
        v = encode(list(range(100)), params)
        assert isinstance(v, SparseVector)
        assert v.vocab_size == 1000
        assert top_k_mask(v, 5).nnz == 5
