"""Both kernel backends must agree exactly."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynims import kernels
from dynims.units import GB

pytestmark = pytest.mark.skipif(not kernels.HAVE_NUMBA, reason="numba not installed")


def test_backend_flag_is_consistent():
    assert kernels.BACKEND in ("numba", "numpy")
    assert (kernels.lfu_order is kernels.lfu_order_nb) == kernels.USE_NUMBA


@settings(max_examples=300, deadline=None)
@given(data=st.data(), n=st.integers(0, 40))
def test_lfu_order_backends_agree(data, n):
    counts = np.array(data.draw(st.lists(st.integers(0, 4), min_size=n, max_size=n)), dtype=np.int64)
    last = np.array(data.draw(st.lists(st.integers(0, 6), min_size=n, max_size=n)), dtype=np.int64)
    ids = np.array(data.draw(st.permutations(range(n))), dtype=np.int64)
    sizes = np.array(data.draw(st.lists(st.integers(1, 9), min_size=n, max_size=n)), dtype=np.int64)
    need = data.draw(st.integers(-3, int(sizes.sum()) + 3))
    a = kernels.lfu_order_nb(counts, last, ids, sizes, need)
    b = kernels.lfu_order_np(counts, last, ids, sizes, need)
    assert a.tolist() == b.tolist()


def test_closed_loop_backends_agree():
    lams = np.array([0.1, 0.25, 0.5, 1.0, 1.5, 1.9, 2.0])
    for base in (0, 40 * GB, 75 * GB, 125 * GB):
        a = kernels.closed_loop_nb(lams, 0.95, 125 * GB, 0, 60 * GB, base, 60 * GB, 300)
        b = kernels.closed_loop_np(lams, 0.95, 125 * GB, 0, 60 * GB, base, 60 * GB, 300)
        assert np.array_equal(a, b)


def test_slowdown_backends_agree():
    rng = np.random.default_rng(3)
    r = rng.uniform(0.0, 1.2, 5000)
    s = rng.uniform(0.0, 0.03, 5000)
    s[::3] = 0.0
    a = kernels.slowdown_many_nb(r, s, 0.95, 1.0, 2.0, 5.0, 10.0)
    b = kernels.slowdown_many_np(r, s, 0.95, 1.0, 2.0, 5.0, 10.0)
    assert np.array_equal(a, b)


def test_sample_timeline_backends_agree():
    rng = np.random.default_rng(4)
    for _ in range(50):
        ts = np.cumsum(rng.uniform(0.5, 100, rng.integers(1, 60)))
        vals = rng.uniform(0, 1e11, len(ts))
        q = np.concatenate([rng.uniform(ts[0] - 50, ts[-1] + 50, 200), ts])
        assert np.array_equal(kernels.sample_timeline_nb(ts, vals, q), kernels.sample_timeline_np(ts, vals, q))
