import numpy as np
import pytest

from oracles import conv_loop, conv_vec_loop


@pytest.mark.parametrize("shape, k", [((2, 6, 9), 3), ((1, 4, 4), 13), ((1, 3, 7), 9), ((2, 1, 1), 5)])
def test_shift_oracle_matches_loop(shape, k):
    rng = np.random.default_rng(k)
    X = rng.standard_normal(shape)
    W = rng.standard_normal((shape[0], k, k))
    np.testing.assert_allclose(conv_vec_loop(X, W), conv_loop(X, W), rtol=1e-12, atol=1e-12)
