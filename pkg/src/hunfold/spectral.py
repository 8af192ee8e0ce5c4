"""FFT kernels and Toeplitz-structured linear convolution.

The transforms are iterative radix-2 with precomputed permutation/twiddle
tables, vectorised over leading axes, so batches of rows transform in one
call.  Linear convolution comes in a direct form and an FFT-accelerated
form; dense expansions tie a generator vector (or matrix) to the Toeplitz
(or doubly-block-Toeplitz) operator it induces.

Index conventions used throughout the package:

* a length ``2*size - 1`` kernel stores diagonal value d(p) at position
  ``p + size - 1`` for offsets p in ``-(size-1) .. size-1``;
* ``toeplitz_expand`` places d(i - k) at matrix entry (i, k);
* the two-axis kernel stores d(p, q) at ``(p + rows - 1, q + cols - 1)``
  and ``dbt_expand`` places d(s - i, t - j) at entry
  ``(s + t*rows, i + j*rows)`` -- the first kernel axis runs inside blocks,
  the second across blocks, matching a column-stacked vectorisation of a
  ``rows x cols`` array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cplx import ComplexArray

__all__ = [
    "ToeplitzMat2D",
    "ToeplitzVec",
    "conv1d",
    "conv1d_fft",
    "conv2d",
    "conv_full_planes",
    "conv_full2_planes",
    "dbt_expand",
    "dbt_extract",
    "fft",
    "fft_planes",
    "ifft",
    "is_pow2",
    "next_pow2",
    "toeplitz_expand",
    "toeplitz_extract",
]


def is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_pow2(n: int) -> int:
    if n <= 1:
        return 1
    return 1 << (n - 1).bit_length()


# One table set per transform length: bit-reversal permutation plus the
# half-circle twiddles cos(2*pi*k/n), sin(2*pi*k/n).  Immutable once built.
_PLANS: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}


def _plan(n: int):
    plan = _PLANS.get(n)
    if plan is None:
        bits = n.bit_length() - 1
        perm = np.zeros(n, dtype=np.intp)
        for i in range(1, n):
            perm[i] = (perm[i >> 1] >> 1) | ((i & 1) << (bits - 1))
        ang = 2.0 * np.pi * np.arange(n // 2, dtype=np.float64) / n
        plan = (perm, np.cos(ang), np.sin(ang))
        _PLANS[n] = plan
    return plan


def fft_planes(re, im, inverse: bool = False):
    """Radix-2 transform along the last axis of a pair of float planes.

    The last-axis length must be a power of two.  Forward uses the
    e^{-j2*pi*k/n} kernel; the inverse flips the twiddle sign and divides
    by n.  Leading axes are carried along, so (batch, n) arrays work.
    """
    n = re.shape[-1]
    if not is_pow2(n):
        raise ValueError(f"transform length {n} is not a power of two")
    perm, cos_t, sin_t = _plan(n)
    re = np.ascontiguousarray(re[..., perm], dtype=np.float64)
    im = np.ascontiguousarray(im[..., perm], dtype=np.float64)
    sign = 1.0 if inverse else -1.0
    m = 2
    while m <= n:
        half = m // 2
        stride = n // m
        wr = cos_t[: n // 2: stride]
        wi = sign * sin_t[: n // 2: stride]
        shape = re.shape[:-1] + (n // m, m)
        re_v = re.reshape(shape)
        im_v = im.reshape(shape)
        ar = re_v[..., :half]
        ai = im_v[..., :half]
        br = re_v[..., half:]
        bi = im_v[..., half:]
        tr = br * wr - bi * wi
        ti = br * wi + bi * wr
        br[...] = ar - tr
        bi[...] = ai - ti
        ar += tr
        ai += ti
        m <<= 1
    if inverse:
        re = re / n
        im = im / n
    return re, im


def _pad_last(arr, n):
    out_shape = arr.shape[:-1] + (n,)
    out = np.zeros(out_shape)
    out[..., : arr.shape[-1]] = arr
    return out


def fft(x: ComplexArray, n: int) -> ComplexArray:
    """n-point DFT of a vector, zero-padded up to n.

    n must be a power of two no smaller than the input length.
    """
    if x.ndim != 1:
        raise ValueError("fft expects a rank-1 input")
    if not is_pow2(n):
        raise ValueError(f"transform length {n} is not a power of two")
    if n < x.shape[0]:
        raise ValueError(f"transform length {n} shorter than input {x.shape[0]}")
    re, im = fft_planes(_pad_last(x.re, n), _pad_last(x.im, n))
    return ComplexArray(re, im)


def ifft(x: ComplexArray, n: int) -> ComplexArray:
    """Inverse of :func:`fft` (same length rules, 1/n scaling)."""
    if x.ndim != 1:
        raise ValueError("ifft expects a rank-1 input")
    if not is_pow2(n):
        raise ValueError(f"transform length {n} is not a power of two")
    if n < x.shape[0]:
        raise ValueError(f"transform length {n} shorter than input {x.shape[0]}")
    re, im = fft_planes(_pad_last(x.re, n), _pad_last(x.im, n), inverse=True)
    return ComplexArray(re, im)


@dataclass(frozen=True)
class ToeplitzVec:
    """Generator of a size x size Toeplitz matrix.

    ``diags`` has length ``2*size - 1``; position p holds the value of
    diagonal offset ``p - (size - 1)``.
    """

    diags: ComplexArray
    size: int

    def __post_init__(self):
        if self.diags.ndim != 1 or self.diags.shape[0] != 2 * self.size - 1:
            raise ValueError(
                f"generator length {self.diags.shape} does not match size {self.size}")


@dataclass(frozen=True)
class ToeplitzMat2D:
    """Generator of a doubly-block-Toeplitz matrix.

    ``diags`` has shape ``(2*rows - 1, 2*cols - 1)``: the first axis indexes
    offsets inside an individual Toeplitz block, the second axis offsets
    between blocks.  The expanded operator acts on column-stacked
    ``rows x cols`` arrays.
    """

    diags: ComplexArray
    rows: int
    cols: int

    def __post_init__(self):
        want = (2 * self.rows - 1, 2 * self.cols - 1)
        if self.diags.shape != want:
            raise ValueError(f"generator shape {self.diags.shape}, expected {want}")


def conv1d(t: ToeplitzVec, x: ComplexArray) -> ComplexArray:
    """Windowed linear convolution: out[i] = sum_k d(i - k) x[k].

    Output index i runs over 0 .. size-1, exactly the action of the
    expanded Toeplitz matrix on x.  Direct summation.
    """
    if x.ndim != 1 or x.shape[0] != t.size:
        raise ValueError(f"input shape {x.shape} does not match grid size {t.size}")
    hr, hi = t.diags.re, t.diags.im
    full_r = np.convolve(hr, x.re) - np.convolve(hi, x.im)
    full_i = np.convolve(hr, x.im) + np.convolve(hi, x.re)
    lo = t.size - 1
    return ComplexArray(full_r[lo:lo + t.size], full_i[lo:lo + t.size])


def conv_full_planes(kr, ki, xr, xi):
    """Full complex linear convolution along the last axis, via FFT.

    The kernel planes (kr, ki) are rank-1; (xr, xi) may carry leading batch
    axes.  Returns planes of length ``len(k) + x.shape[-1] - 1``.
    """
    lk = kr.shape[-1]
    lx = xr.shape[-1]
    full = lk + lx - 1
    n = next_pow2(full)
    fkr, fki = fft_planes(_pad_last(kr, n), _pad_last(ki, n))
    fxr, fxi = fft_planes(_pad_last(xr, n), _pad_last(xi, n))
    pr = fkr * fxr - fki * fxi
    pi = fkr * fxi + fki * fxr
    rr, ri = fft_planes(pr, pi, inverse=True)
    return rr[..., :full], ri[..., :full]


def conv1d_fft(t: ToeplitzVec, x: ComplexArray) -> ComplexArray:
    """FFT-accelerated :func:`conv1d` (identical contract).

    Pads to the next power of two at or above 3*size - 2 so the circular
    product realises the linear convolution, then extracts the window that
    starts size - 1 past the stored kernel origin.
    """
    if x.ndim != 1 or x.shape[0] != t.size:
        raise ValueError(f"input shape {x.shape} does not match grid size {t.size}")
    rr, ri = conv_full_planes(t.diags.re, t.diags.im, x.re, x.im)
    lo = t.size - 1
    return ComplexArray(rr[lo:lo + t.size], ri[lo:lo + t.size])


def _fft2_planes(re, im, inverse: bool = False):
    re, im = fft_planes(re, im, inverse)
    re = np.ascontiguousarray(re.swapaxes(-1, -2))
    im = np.ascontiguousarray(im.swapaxes(-1, -2))
    re, im = fft_planes(re, im, inverse)
    return re.swapaxes(-1, -2), im.swapaxes(-1, -2)


def _pad_last2(arr, n1, n2):
    out = np.zeros(arr.shape[:-2] + (n1, n2))
    out[..., : arr.shape[-2], : arr.shape[-1]] = arr
    return out


def conv_full2_planes(kr, ki, xr, xi):
    """Full complex linear convolution over the last two axes, via 2-D FFT."""
    f1 = kr.shape[-2] + xr.shape[-2] - 1
    f2 = kr.shape[-1] + xr.shape[-1] - 1
    n1, n2 = next_pow2(f1), next_pow2(f2)
    fkr, fki = _fft2_planes(_pad_last2(kr, n1, n2), _pad_last2(ki, n1, n2))
    fxr, fxi = _fft2_planes(_pad_last2(xr, n1, n2), _pad_last2(xi, n1, n2))
    pr = fkr * fxr - fki * fxi
    pi = fkr * fxi + fki * fxr
    rr, ri = _fft2_planes(pr, pi, inverse=True)
    return rr[..., :f1, :f2], ri[..., :f1, :f2]


def conv2d(t: ToeplitzMat2D, x: ComplexArray) -> ComplexArray:
    """Windowed 2-D linear convolution:
    out[s, t] = sum_{i,j} d(s - i, t - j) x[i, j].

    Output indices run over the ``rows x cols`` grid; column-stacking the
    output equals the expanded doubly-block-Toeplitz matrix acting on the
    column-stacked input.
    """
    if x.ndim != 2 or x.shape != (t.rows, t.cols):
        raise ValueError(f"input shape {x.shape}, expected {(t.rows, t.cols)}")
    rr, ri = conv_full2_planes(t.diags.re, t.diags.im, x.re, x.im)
    lo1, lo2 = t.rows - 1, t.cols - 1
    return ComplexArray(rr[lo1:lo1 + t.rows, lo2:lo2 + t.cols],
                        ri[lo1:lo1 + t.rows, lo2:lo2 + t.cols])


def toeplitz_expand(t: ToeplitzVec) -> ComplexArray:
    """Dense size x size matrix with entry (i, k) equal to d(i - k)."""
    m = t.size
    idx = np.arange(m)[:, None] - np.arange(m)[None, :] + (m - 1)
    return ComplexArray(t.diags.re[idx], t.diags.im[idx])


def toeplitz_extract(g: ComplexArray, size: int) -> ToeplitzVec:
    """Read a Toeplitz generator back out of a dense matrix.

    Takes the first row (negative offsets) and first column (non-negative
    offsets); exact only when the matrix really is Toeplitz.
    """
    if g.shape != (size, size):
        raise ValueError(f"matrix shape {g.shape}, expected {(size, size)}")
    re = np.concatenate([g.re[0, :0:-1], g.re[:, 0]])
    im = np.concatenate([g.im[0, :0:-1], g.im[:, 0]])
    return ToeplitzVec(ComplexArray(re, im), size)


def dbt_expand(t: ToeplitzMat2D) -> ComplexArray:
    """Dense doubly-block-Toeplitz matrix of a two-axis generator.

    Entry at (s + t*rows, i + j*rows) is d(s - i, t - j): an expanded grid
    of cols x cols Toeplitz-arranged blocks, each block a rows x rows
    Toeplitz matrix.
    """
    m1, m2 = t.rows, t.cols
    flat = np.arange(m1 * m2)
    s = flat % m1
    blk = flat // m1
    i1 = s[:, None] - s[None, :] + (m1 - 1)
    i2 = blk[:, None] - blk[None, :] + (m2 - 1)
    return ComplexArray(t.diags.re[i1, i2], t.diags.im[i1, i2])


def dbt_extract(g: ComplexArray, rows: int, cols: int) -> ToeplitzMat2D:
    """Read a doubly-block-Toeplitz generator back out of a dense matrix."""
    total = rows * cols
    if g.shape != (total, total):
        raise ValueError(f"matrix shape {g.shape}, expected {(total, total)}")
    p1 = np.arange(-(rows - 1), rows)
    p2 = np.arange(-(cols - 1), cols)
    s = np.maximum(p1, 0)
    i = np.maximum(-p1, 0)
    t = np.maximum(p2, 0)
    j = np.maximum(-p2, 0)
    row_idx = s[:, None] + t[None, :] * rows
    col_idx = i[:, None] + j[None, :] * rows
    diags = ComplexArray(g.re[row_idx, col_idx], g.im[row_idx, col_idx])
    return ToeplitzMat2D(diags, rows, cols)
