"""Transforms, convolutions and the Toeplitz expansion equivalences."""

import numpy as np
import pytest

from hunfold.cplx import ComplexArray
from hunfold.spectral import (ToeplitzMat2D, ToeplitzVec, conv1d, conv1d_fft,
                              conv2d, dbt_expand, dbt_extract, fft, ifft,
                              next_pow2, toeplitz_expand, toeplitz_extract)

from conftest import rand_carray


def dft_oracle(z, n):
    """Direct O(n^2) transform sum."""
    k = np.arange(n)
    return np.array([np.sum(z * np.exp(-2j * np.pi * k[: len(z)] * kk / n))
                     for kk in k])


def rand_toeplitz(rng, m):
    return ToeplitzVec(rand_carray(rng, (2 * m - 1,)), m)


def rand_toeplitz2(rng, m1, m2):
    return ToeplitzMat2D(rand_carray(rng, (2 * m1 - 1, 2 * m2 - 1)), m1, m2)


def test_next_pow2():
    assert [next_pow2(v) for v in (1, 2, 3, 5, 16, 17)] == [1, 2, 4, 8, 16, 32]


def test_fft_unit_impulse():
    x = ComplexArray.from_complex(np.array([1, 0, 0, 0], dtype=complex))
    assert np.max(np.abs(fft(x, 4).to_complex() - 1.0)) < 1e-15


def test_fft_constant():
    x = ComplexArray.from_complex(np.ones(4, dtype=complex))
    ref = np.array([4, 0, 0, 0], dtype=complex)
    assert np.max(np.abs(fft(x, 4).to_complex() - ref)) < 1e-14


def test_fft_matches_direct_sum():
    rng = np.random.default_rng(10)
    z = rng.standard_normal(13) + 1j * rng.standard_normal(13)
    got = fft(ComplexArray.from_complex(z), 16).to_complex()
    ref = dft_oracle(z, 16)
    assert np.max(np.abs(got - ref)) < 1e-10 * np.max(np.abs(ref))


def test_fft_length_validation():
    x = ComplexArray.from_complex(np.ones(5, dtype=complex))
    with pytest.raises(ValueError):
        fft(x, 12)  # not a power of two
    with pytest.raises(ValueError):
        fft(x, 4)  # shorter than the input
    with pytest.raises(ValueError):
        ifft(x, 12)


def test_ifft_constant_spectrum():
    x = ComplexArray.from_complex(np.array([4, 0, 0, 0], dtype=complex))
    assert np.max(np.abs(ifft(x, 4).to_complex() - 1.0)) < 1e-14


def test_fft_round_trip():
    rng = np.random.default_rng(11)
    for ln, n in ((13, 16), (16, 16), (7, 8), (30, 32)):
        z = rng.standard_normal(ln) + 1j * rng.standard_normal(ln)
        back = ifft(fft(ComplexArray.from_complex(z), n), n).to_complex()[:ln]
        assert np.max(np.abs(back - z)) < 1e-10 * max(1.0, np.max(np.abs(z)))


def test_ifft_linearity():
    rng = np.random.default_rng(12)
    for _ in range(10):
        a = rand_carray(rng, (16,))
        b = rand_carray(rng, (16,))
        s, t = -0.7, 2.1
        mix = ComplexArray(s * a.re + t * b.re, s * a.im + t * b.im)
        lhs = ifft(mix, 16).to_complex()
        rhs = s * ifft(a, 16).to_complex() + t * ifft(b, 16).to_complex()
        assert np.max(np.abs(lhs - rhs)) < 1e-10 * max(1.0, np.max(np.abs(rhs)))


def test_parseval():
    rng = np.random.default_rng(13)
    for n in (8, 16, 64):
        x = rand_carray(rng, (n,))
        spec = fft(x, n)
        assert abs(spec.norm() ** 2 - n * x.norm() ** 2) < 1e-10 * n * x.norm() ** 2


def test_conv1d_identity_kernel():
    rng = np.random.default_rng(14)
    m = 9
    diags = ComplexArray.zeros((2 * m - 1,))
    diags.re[m - 1] = 1.0  # offset-zero tap only
    t = ToeplitzVec(diags, m)
    x = rand_carray(rng, (m,))
    out = conv1d(t, x)
    assert np.max(np.abs(out.to_complex() - x.to_complex())) < 1e-15


def test_conv1d_shift_kernel():
    m = 3
    diags = ComplexArray.zeros((2 * m - 1,))
    diags.re[m] = 1.0  # offset +1: one-step shift
    t = ToeplitzVec(diags, m)
    x = ComplexArray.from_complex(np.array([1 + 1j, 2.0, 3 - 1j]))
    out = conv1d(t, x).to_complex()
    assert np.array_equal(out, np.array([0, 1 + 1j, 2.0]))


def test_conv1d_matches_dense_expansion():
    rng = np.random.default_rng(15)
    m = 17
    t = rand_toeplitz(rng, m)
    x = rand_carray(rng, (m,))
    ref = toeplitz_expand(t).to_complex() @ x.to_complex()
    got = conv1d(t, x).to_complex()
    assert np.max(np.abs(got - ref)) < 1e-10 * np.max(np.abs(ref))


def test_conv1d_fft_matches_direct_many_sizes():
    rng = np.random.default_rng(16)
    for case in range(200):
        m = int(rng.integers(4, 65))
        t = rand_toeplitz(rng, m)
        x = rand_carray(rng, (m,))
        a = conv1d(t, x).to_complex()
        b = conv1d_fft(t, x).to_complex()
        assert np.max(np.abs(a - b)) < 1e-9 * max(1.0, np.max(np.abs(a)))


def test_conv1d_fft_identity_and_zero_kernels():
    rng = np.random.default_rng(17)
    m = 11
    x = rand_carray(rng, (m,))
    ident = ComplexArray.zeros((2 * m - 1,))
    ident.re[m - 1] = 1.0
    out = conv1d_fft(ToeplitzVec(ident, m), x)
    assert np.max(np.abs(out.to_complex() - x.to_complex())) < 1e-12
    zero = ToeplitzVec(ComplexArray.zeros((2 * m - 1,)), m)
    assert conv1d_fft(zero, x).norm() < 1e-14


def test_conv1d_size_mismatch():
    rng = np.random.default_rng(18)
    t = rand_toeplitz(rng, 8)
    with pytest.raises(ValueError):
        conv1d(t, rand_carray(rng, (9,)))
    with pytest.raises(ValueError):
        conv1d_fft(t, rand_carray(rng, (7,)))


def test_conv2d_identity_kernel():
    rng = np.random.default_rng(19)
    m1, m2 = 4, 6
    diags = ComplexArray.zeros((2 * m1 - 1, 2 * m2 - 1))
    diags.re[m1 - 1, m2 - 1] = 1.0
    x = rand_carray(rng, (m1, m2))
    out = conv2d(ToeplitzMat2D(diags, m1, m2), x)
    assert np.max(np.abs(out.to_complex() - x.to_complex())) < 1e-12


def test_conv2d_zero_kernel():
    rng = np.random.default_rng(20)
    t = ToeplitzMat2D(ComplexArray.zeros((5, 7)), 3, 4)
    assert conv2d(t, rand_carray(rng, (3, 4))).norm() < 1e-14


def test_conv2d_matches_dense_expansion():
    rng = np.random.default_rng(21)
    m1, m2 = 5, 7
    t = rand_toeplitz2(rng, m1, m2)
    x = rand_carray(rng, (m1, m2))
    w = dbt_expand(t).to_complex()
    vec = x.to_complex().flatten(order="F")
    ref = (w @ vec).reshape((m2, m1)).T  # invert the column stacking
    got = conv2d(t, x).to_complex()
    assert np.max(np.abs(got - ref)) < 1e-10 * np.max(np.abs(ref))


def test_conv2d_shape_mismatch():
    rng = np.random.default_rng(22)
    t = rand_toeplitz2(rng, 3, 4)
    with pytest.raises(ValueError):
        conv2d(t, rand_carray(rng, (4, 3)))


def test_toeplitz_expand_small_example():
    diags = ComplexArray.from_complex(np.array([5.0, 1.0, 7.0], dtype=complex))
    out = toeplitz_expand(ToeplitzVec(diags, 2)).to_complex()
    assert np.array_equal(out, np.array([[1.0, 5.0], [7.0, 1.0]]))


def test_toeplitz_expand_zero():
    t = ToeplitzVec(ComplexArray.zeros((9,)), 5)
    assert toeplitz_expand(t).norm() == 0.0


def test_toeplitz_extract_round_trip():
    rng = np.random.default_rng(23)
    t = rand_toeplitz(rng, 12)
    back = toeplitz_extract(toeplitz_expand(t), 12)
    assert np.array_equal(back.diags.re, t.diags.re)
    assert np.array_equal(back.diags.im, t.diags.im)


def test_dbt_expand_degenerate_cases():
    one = ToeplitzMat2D(ComplexArray.from_complex(np.array([[3 + 1j]])), 1, 1)
    assert dbt_expand(one).to_complex()[0, 0] == 3 + 1j
    # single block column: plain Toeplitz of the kernel's only column
    rng = np.random.default_rng(24)
    diags = rand_carray(rng, (3, 1))
    t = ToeplitzMat2D(diags, 2, 1)
    expect = toeplitz_expand(
        ToeplitzVec(ComplexArray(diags.re[:, 0], diags.im[:, 0]), 2))
    assert np.array_equal(dbt_expand(t).re, expect.re)
    assert np.array_equal(dbt_expand(t).im, expect.im)


def test_dbt_expand_index_relation_exhaustive():
    rng = np.random.default_rng(25)
    m1, m2 = 3, 4
    t = rand_toeplitz2(rng, m1, m2)
    w = dbt_expand(t).to_complex()
    dk = t.diags.to_complex()
    for s in range(m1):
        for tt in range(m2):
            for i in range(m1):
                for j in range(m2):
                    assert w[s + tt * m1, i + j * m1] == \
                        dk[s - i + m1 - 1, tt - j + m2 - 1]


def test_dbt_extract_round_trip():
    rng = np.random.default_rng(26)
    t = rand_toeplitz2(rng, 4, 5)
    back = dbt_extract(dbt_expand(t), 4, 5)
    assert np.array_equal(back.diags.re, t.diags.re)
    assert np.array_equal(back.diags.im, t.diags.im)


def test_equivalence_sweep_random_sizes():
    rng = np.random.default_rng(27)
    for _ in range(25):
        m = int(rng.integers(2, 65))
        t = rand_toeplitz(rng, m)
        x = rand_carray(rng, (m,))
        ref = toeplitz_expand(t).to_complex() @ x.to_complex()
        got = conv1d(t, x).to_complex()
        assert np.max(np.abs(got - ref)) < 1e-10 * max(1.0, np.max(np.abs(ref)))
    for _ in range(25):
        m1 = int(rng.integers(1, 17))
        m2 = int(rng.integers(1, max(2, 256 // max(m1, 1) + 1)))
        m2 = max(1, min(m2, 256 // m1))
        t = rand_toeplitz2(rng, m1, m2)
        x = rand_carray(rng, (m1, m2))
        w = dbt_expand(t).to_complex()
        ref = w @ x.to_complex().flatten(order="F")
        got = conv2d(t, x).to_complex().flatten(order="F")
        assert np.max(np.abs(got - ref)) < 1e-10 * max(1.0, np.max(np.abs(ref)))
