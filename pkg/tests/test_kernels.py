import numpy as np
import pytest

from bcsa.graph import FrameInstance, receiver_view, sic_decode
from bcsa.kernels import _draw_slots_numpy, decode_batch_numba, decode_batch_numpy
from bcsa.model import DegreeDistribution, sample_degrees


def batch(seed, T, m, n, dist):
    rng = np.random.default_rng(seed)
    degrees = sample_degrees(dist, rng.random((T, m)))
    u = rng.random((T, m, dist.max_degree))
    return degrees, u


@pytest.mark.parametrize("n, m, text", [(12, 8, "0.5x^2+0.5x^3"), (20, 15, "0.3x+0.3x^2+0.4x^4"),
                                        (172, 100, "0.86x^3+0.14x^8"), (6, 5, "x^6")])
def test_numba_and_numpy_agree(n, m, text):
    dist = DegreeDistribution.parse(text)
    degrees, u = batch(5, 300, m, n, dist)
    a = decode_batch_numba(degrees, u, n, dist.max_degree)
    b = decode_batch_numpy(degrees, u, n, dist.max_degree)
    assert np.array_equal(a, b)


def test_kernel_matches_reference_decoder():
    n, m = 15, 10
    dist = DegreeDistribution.parse("0.2x+0.5x^2+0.3x^3")
    degrees, u = batch(8, 500, m, n, dist)
    out = decode_batch_numba(degrees, u, n, dist.max_degree)
    slots = _draw_slots_numpy(degrees, u, n)
    for t in range(len(degrees)):
        frame = FrameInstance.from_slot_sets(n, [slots[t, j, :degrees[t, j]] for j in range(m)])
        view = receiver_view(frame, 0)
        res = sic_decode(view)
        expected = np.zeros(dist.max_degree + 1, dtype=np.int64)
        for j in res.unresolved:
            expected[view.perceived_degree(j)] += 1
        assert np.array_equal(out[t], expected)


def test_slot_draws_are_distinct_and_uniform():
    n, l = 7, 3
    rng = np.random.default_rng(0)
    degrees = np.full((20000, 1), l)
    slots = _draw_slots_numpy(degrees, rng.random((20000, 1, l)), n)[:, 0, :]
    assert all(len(set(row)) == l for row in slots[:200])
    freq = np.bincount(slots.ravel(), minlength=n) / slots.size
    assert np.allclose(freq, 1 / n, atol=0.01)
