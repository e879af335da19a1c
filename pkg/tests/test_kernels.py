import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goalienet.tensor import kernels

BACKENDS = kernels.available_backends()
DTYPES = (np.float32, np.float64)


def test_active_backend_is_known():
    assert kernels.BACKEND in BACKENDS


def test_compiled_backend_built():
    # the package build compiles the extension; the fallback alone means the build was skipped
    assert "cython" in BACKENDS


def conv_geometry():
    return st.tuples(st.integers(1, 2), st.integers(1, 7), st.integers(1, 7), st.integers(1, 3),
                     st.sampled_from([1, 3, 5]), st.integers(1, 3), st.integers(0, 2))


def valid(h, w, k, s, p):
    return h + 2 * p >= k and w + 2 * p >= k


def brute_im2col(x, k, s, p):
    n, h, w, c = x.shape
    xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    ho, wo = (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1
    rows = []
    for b in range(n):
        for oy in range(ho):
            for ox in range(wo):
                rows.append([xp[b, oy * s + ky, ox * s + kx, ch]
                             for ky in range(k) for kx in range(k) for ch in range(c)])
    return np.array(rows, dtype=x.dtype).reshape(n * ho * wo, k * k * c)


@pytest.mark.parametrize("name", sorted(BACKENDS))
@given(geo=conv_geometry(), seed=st.integers(0, 2 ** 31), dt=st.sampled_from(DTYPES))
def test_im2col_matches_brute_force(name, geo, seed, dt):
    n, h, w, c, k, s, p = geo
    if not valid(h, w, k, s, p):
        return
    x = np.random.default_rng(seed).standard_normal((n, h, w, c)).astype(dt)
    got = BACKENDS[name].im2col(x, k, s, p)
    assert np.array_equal(got, brute_im2col(x, k, s, p))


@pytest.mark.parametrize("name", sorted(BACKENDS))
@given(geo=conv_geometry(), seed=st.integers(0, 2 ** 31))
def test_col2im_is_adjoint(name, geo, seed):
    n, h, w, c, k, s, p = geo
    if not valid(h, w, k, s, p):
        return
    r = np.random.default_rng(seed)
    x = r.standard_normal((n, h, w, c))
    cols = BACKENDS[name].im2col(x, k, s, p)
    y = r.standard_normal(cols.shape)
    back = BACKENDS[name].col2im(y, (n, h, w, c), k, s, p)
    assert np.sum(cols * y) == pytest.approx(np.sum(x * back), rel=1e-10, abs=1e-10)


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled backend not built")
@given(geo=conv_geometry(), seed=st.integers(0, 2 ** 31), dt=st.sampled_from(DTYPES))
def test_backends_bit_identical_conv(geo, seed, dt):
    n, h, w, c, k, s, p = geo
    if not valid(h, w, k, s, p):
        return
    r = np.random.default_rng(seed)
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    x = r.standard_normal((n, h, w, c)).astype(dt)
    a, b = py.im2col(x, k, s, p), cy.im2col(x, k, s, p)
    assert a.dtype == b.dtype and np.array_equal(a, b)
    cols = r.standard_normal(a.shape).astype(dt)
    a, b = py.col2im(cols, (n, h, w, c), k, s, p), cy.col2im(cols, (n, h, w, c), k, s, p)
    assert a.dtype == b.dtype and np.array_equal(a, b)


@pytest.mark.skipif("cython" not in BACKENDS, reason="compiled backend not built")
@given(seed=st.integers(0, 2 ** 31), dt=st.sampled_from(DTYPES), shape=st.tuples(
    st.integers(1, 2), st.integers(1, 3), st.integers(1, 4), st.integers(1, 4)))
def test_backends_bit_identical_pool_and_upsample(seed, dt, shape):
    r = np.random.default_rng(seed)
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    n, c, h, w = shape
    # small integers force ties inside pooling windows
    x = r.integers(0, 3, (n, c, 2 * h, 2 * w)).astype(dt)
    (oa, aa), (ob, ab) = py.maxpool2x2(x), cy.maxpool2x2(x)
    assert np.array_equal(oa, ob) and np.array_equal(aa, ab)
    g = r.standard_normal(oa.shape).astype(dt)
    assert np.array_equal(py.maxpool2x2_backward(g, aa), cy.maxpool2x2_backward(g, ab))
    small = r.standard_normal((n, c, h, w)).astype(dt)
    assert np.array_equal(py.upsample2x(small), cy.upsample2x(small))
    big = r.standard_normal((n, c, 2 * h, 2 * w)).astype(dt)
    assert np.array_equal(py.upsample2x_backward(big), cy.upsample2x_backward(big))


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_pool_brute_force_and_ties(name, rng):
    mod = BACKENDS[name]
    x = rng.standard_normal((2, 3, 4, 4))
    out, arg = mod.maxpool2x2(x)
    for idx in np.ndindex(*out.shape):
        b, c, i, j = idx
        win = x[b, c, 2 * i:2 * i + 2, 2 * j:2 * j + 2].reshape(-1)
        assert out[idx] == win.max() and arg[idx] == int(np.argmax(win))
    _, arg = mod.maxpool2x2(np.ones((1, 1, 4, 4)))
    assert np.all(arg == 0)
