"""2-D discrete Fourier transforms, centered low-frequency masks and bands.

Layout is always ``N x H x W x C``; transforms act on axes 1 and 2.  The
forward transform is unnormalized and the inverse carries ``1/(H*W)``.  A
*centered* spectrum has its zero frequency rolled to ``(H//2, W//2)``.

The fast path is a recursive mixed-radix Cooley-Tukey FFT, vectorized over
every axis except the one being transformed.  Prime lengths up to
``DIRECT_PRIME_MAX`` use a direct kernel; larger primes go through
Bluestein's chirp-z algorithm on a power-of-two grid.  ``naive_dft2`` is an
independent O((HW)^2) direct sum kept as the test oracle.
"""

from dataclasses import dataclass
from functools import lru_cache

import numba as nb
import numpy as np

from .errors import DimensionError, ValidationError
from .numerics import as_tensor, _node

DIRECT_PRIME_MAX = 7
SMALL_GRID_MAX = 16


# ---------------------------------------------------------------------------
# 1-D fast transform


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _radix_stage(sr, si, dr, di, b, m, p, cols, twr, twi, kr, ki, shift):
    """One Stockham stage: length-``m`` transforms become length ``m*p``.

    Real and imaginary parts live in separate flat planes of ``(b, n, cols)``
    data, which keeps every inner loop a unit-stride real loop.  The input is
    read as ``(b, m, p, cols)`` sub-results; output row ``q*m + k`` receives
    ``sum_j kern[q, j] * tw[k, j] * src[k, j]``, cyclically moved down by
    ``shift`` rows (only meaningful on the final stage, where rows are in
    natural frequency order).

    Offsets are unsigned so numba drops its negative-index check, which
    otherwise blocks vectorization of the inner loops.
    """
    n = m * p
    width = nb.uint64(cols)
    ar = np.empty(p, dtype=sr.dtype)
    ai = np.empty(p, dtype=sr.dtype)
    for bb in range(b):
        base = bb * n * cols
        for k in range(m):
            i0 = nb.uint64(base + p * k * cols)
            if p == 2:
                wr, wi = twr[k, 1], twi[k, 1]
                i1 = i0 + width
                o0 = nb.uint64(base + ((k + shift) % n) * cols)
                o1 = nb.uint64(base + ((k + m + shift) % n) * cols)
                for r in range(width):
                    yr = sr[i1 + r] * wr - si[i1 + r] * wi
                    yi = sr[i1 + r] * wi + si[i1 + r] * wr
                    dr[o0 + r] = sr[i0 + r] + yr
                    di[o0 + r] = si[i0 + r] + yi
                    dr[o1 + r] = sr[i0 + r] - yr
                    di[o1 + r] = si[i0 + r] - yi
            elif p == 4:
                w1r, w1i = twr[k, 1], twi[k, 1]
                w2r, w2i = twr[k, 2], twi[k, 2]
                w3r, w3i = twr[k, 3], twi[k, 3]
                # kern[1, 1] = exp(sign * 0.5j*pi) = sign * 1j
                rot = ki[1, 1]
                i1, i2, i3 = i0 + width, i0 + 2 * width, i0 + 3 * width
                o0 = nb.uint64(base + ((k + shift) % n) * cols)
                o1 = nb.uint64(base + ((k + m + shift) % n) * cols)
                o2 = nb.uint64(base + ((k + 2 * m + shift) % n) * cols)
                o3 = nb.uint64(base + ((k + 3 * m + shift) % n) * cols)
                for r in range(width):
                    x0r, x0i = sr[i0 + r], si[i0 + r]
                    x1r = sr[i1 + r] * w1r - si[i1 + r] * w1i
                    x1i = sr[i1 + r] * w1i + si[i1 + r] * w1r
                    x2r = sr[i2 + r] * w2r - si[i2 + r] * w2i
                    x2i = sr[i2 + r] * w2i + si[i2 + r] * w2r
                    x3r = sr[i3 + r] * w3r - si[i3 + r] * w3i
                    x3i = sr[i3 + r] * w3i + si[i3 + r] * w3r
                    s02r, s02i = x0r + x2r, x0i + x2i
                    d02r, d02i = x0r - x2r, x0i - x2i
                    s13r, s13i = x1r + x3r, x1i + x3i
                    # (x1 - x3) * rot with rot purely imaginary
                    d13r, d13i = -(x1i - x3i) * rot, (x1r - x3r) * rot
                    dr[o0 + r] = s02r + s13r
                    di[o0 + r] = s02i + s13i
                    dr[o1 + r] = d02r + d13r
                    di[o1 + r] = d02i + d13i
                    dr[o2 + r] = s02r - s13r
                    di[o2 + r] = s02i - s13i
                    dr[o3 + r] = d02r - d13r
                    di[o3 + r] = d02i - d13i
            elif p == 8:
                # radix-4 butterflies over the even and odd inputs, then a
                # radix-2 combine with the eighth roots of unity
                c = kr[1, 1]
                rot = ki[2, 1]
                w1r, w1i = twr[k, 1], twi[k, 1]
                w2r, w2i = twr[k, 2], twi[k, 2]
                w3r, w3i = twr[k, 3], twi[k, 3]
                w4r, w4i = twr[k, 4], twi[k, 4]
                w5r, w5i = twr[k, 5], twi[k, 5]
                w6r, w6i = twr[k, 6], twi[k, 6]
                w7r, w7i = twr[k, 7], twi[k, 7]
                i1, i2, i3 = i0 + width, i0 + 2 * width, i0 + 3 * width
                i4, i5, i6, i7 = i0 + 4 * width, i0 + 5 * width, i0 + 6 * width, i0 + 7 * width
                o0 = nb.uint64(base + ((k + shift) % n) * cols)
                o1 = nb.uint64(base + ((k + m + shift) % n) * cols)
                o2 = nb.uint64(base + ((k + 2 * m + shift) % n) * cols)
                o3 = nb.uint64(base + ((k + 3 * m + shift) % n) * cols)
                o4 = nb.uint64(base + ((k + 4 * m + shift) % n) * cols)
                o5 = nb.uint64(base + ((k + 5 * m + shift) % n) * cols)
                o6 = nb.uint64(base + ((k + 6 * m + shift) % n) * cols)
                o7 = nb.uint64(base + ((k + 7 * m + shift) % n) * cols)
                for r in range(width):
                    x0r, x0i = sr[i0 + r], si[i0 + r]
                    x1r = sr[i1 + r] * w1r - si[i1 + r] * w1i
                    x1i = sr[i1 + r] * w1i + si[i1 + r] * w1r
                    x2r = sr[i2 + r] * w2r - si[i2 + r] * w2i
                    x2i = sr[i2 + r] * w2i + si[i2 + r] * w2r
                    x3r = sr[i3 + r] * w3r - si[i3 + r] * w3i
                    x3i = sr[i3 + r] * w3i + si[i3 + r] * w3r
                    x4r = sr[i4 + r] * w4r - si[i4 + r] * w4i
                    x4i = sr[i4 + r] * w4i + si[i4 + r] * w4r
                    x5r = sr[i5 + r] * w5r - si[i5 + r] * w5i
                    x5i = sr[i5 + r] * w5i + si[i5 + r] * w5r
                    x6r = sr[i6 + r] * w6r - si[i6 + r] * w6i
                    x6i = sr[i6 + r] * w6i + si[i6 + r] * w6r
                    x7r = sr[i7 + r] * w7r - si[i7 + r] * w7i
                    x7i = sr[i7 + r] * w7i + si[i7 + r] * w7r
                    # even half: x0 x2 x4 x6
                    ar_, ai_ = x0r + x4r, x0i + x4i
                    br_, bi_ = x0r - x4r, x0i - x4i
                    cr_, ci_ = x2r + x6r, x2i + x6i
                    dr_, di_ = -(x2i - x6i) * rot, (x2r - x6r) * rot
                    e0r, e0i = ar_ + cr_, ai_ + ci_
                    e1r, e1i = br_ + dr_, bi_ + di_
                    e2r, e2i = ar_ - cr_, ai_ - ci_
                    e3r, e3i = br_ - dr_, bi_ - di_
                    # odd half: x1 x3 x5 x7
                    ar_, ai_ = x1r + x5r, x1i + x5i
                    br_, bi_ = x1r - x5r, x1i - x5i
                    cr_, ci_ = x3r + x7r, x3i + x7i
                    dr_, di_ = -(x3i - x7i) * rot, (x3r - x7r) * rot
                    f0r, f0i = ar_ + cr_, ai_ + ci_
                    f1r, f1i = br_ + dr_, bi_ + di_
                    f2r, f2i = ar_ - cr_, ai_ - ci_
                    f3r, f3i = br_ - dr_, bi_ - di_
                    # odd half times w^q with w = c * (1 + rot*1j)
                    g1r, g1i = c * (f1r - rot * f1i), c * (f1i + rot * f1r)
                    g2r, g2i = -rot * f2i, rot * f2r
                    g3r, g3i = -c * (f3r + rot * f3i), c * (rot * f3r - f3i)
                    dr[o0 + r] = e0r + f0r
                    di[o0 + r] = e0i + f0i
                    dr[o4 + r] = e0r - f0r
                    di[o4 + r] = e0i - f0i
                    dr[o1 + r] = e1r + g1r
                    di[o1 + r] = e1i + g1i
                    dr[o5 + r] = e1r - g1r
                    di[o5 + r] = e1i - g1i
                    dr[o2 + r] = e2r + g2r
                    di[o2 + r] = e2i + g2i
                    dr[o6 + r] = e2r - g2r
                    di[o6 + r] = e2i - g2i
                    dr[o3 + r] = e3r + g3r
                    di[o3 + r] = e3i + g3i
                    dr[o7 + r] = e3r - g3r
                    di[o7 + r] = e3i - g3i
            else:
                for r in range(width):
                    for j in range(p):
                        at = i0 + nb.uint64(j) * width + r
                        ar[j] = sr[at] * twr[k, j] - si[at] * twi[k, j]
                        ai[j] = sr[at] * twi[k, j] + si[at] * twr[k, j]
                    for q in range(p):
                        accr, acci = ar[0], ai[0]
                        for j in range(1, p):
                            accr += kr[q, j] * ar[j] - ki[q, j] * ai[j]
                            acci += kr[q, j] * ai[j] + ki[q, j] * ar[j]
                        o = nb.uint64(base + ((q * m + k + shift) % n) * cols) + r
                        dr[o] = accr
                        di[o] = acci


def _factorize(n):
    """Prime factors of ``n``, largest last."""
    out, f = [], 2
    while f * f <= n:
        while n % f == 0:
            out.append(f)
            n //= f
        f += 1
    if n > 1:
        out.append(n)
    return out


def _radices(n):
    """Stage radices for ``n``: twos merge into radix-8 and radix-4 stages."""
    factors = _factorize(n)
    twos = factors.count(2)
    eights, rest = divmod(twos, 3)
    if rest == 1 and eights:
        eights, rest = eights - 1, 4
    small = {0: [], 1: [2], 2: [4], 4: [4, 4]}[rest]
    return [8] * eights + small + [f for f in factors if f != 2]


@lru_cache(maxsize=None)
def _plan(n, sign, real_dtype):
    """Stages ``(p, m, col_factor, twiddles, kernel)`` in execution order.

    Radices ``p_1 .. p_k`` are peeled outermost first, so the stage for
    ``p_i`` works on columns widened by ``p_1 * .. * p_{i-1}`` and runs after
    the stages of every later radix.  Twiddles and kernels are stored as
    (real, imaginary) plane pairs.
    """
    radices = _radices(n)
    widen = [1]
    for p in radices[:-1]:
        widen.append(widen[-1] * p)
    stages, length = [], 1
    for i in reversed(range(len(radices))):
        p, m = radices[i], length
        length *= p
        k, j = np.arange(m)[:, None], np.arange(p)[None, :]
        tw = np.exp(sign * 2j * np.pi * k * j / length)
        kern = _dft_matrix(p, sign, np.complex128)
        stages.append((p, m, widen[i],
                       tw.real.astype(real_dtype), tw.imag.astype(real_dtype),
                       kern.real.astype(real_dtype), kern.imag.astype(real_dtype)))
    return tuple(stages)


@lru_cache(maxsize=None)
def _dft_matrix(n, sign, dtype):
    k = np.arange(n)
    return np.exp(sign * 2j * np.pi * np.outer(k, k) / n).astype(dtype)


@lru_cache(maxsize=None)
def _bluestein_plan(n, sign, dtype):
    size = 1 << (2 * n - 1).bit_length()
    k = np.arange(n)
    # k^2 mod 2n keeps the chirp phase exact for large n
    chirp = np.exp(sign * 1j * np.pi * ((k * k) % (2 * n)) / n)
    kernel = np.zeros((1, size, 1), dtype=np.complex128)
    kernel[0, :n, 0] = np.conj(chirp)
    kernel[0, size - n + 1:, 0] = np.conj(chirp[1:])[::-1]
    kernel_hat = _transform_axis(kernel, -1)
    return size, chirp.astype(dtype)[:, None], kernel_hat.astype(dtype)


def _bluestein(x, sign):
    b, n, cols = x.shape
    size, chirp, kernel_hat = _bluestein_plan(n, sign, x.dtype)
    a = np.zeros((b, size, cols), dtype=x.dtype)
    a[:, :n] = x * chirp
    conv = _transform_axis(_transform_axis(a, -1) * kernel_hat, 1) / size
    return conv[:, :n] * chirp


def _real_of(dtype):
    return np.float32 if np.dtype(dtype) in (np.float32, np.complex64) else np.float64


def _planes(x):
    """Contiguous (real, imaginary) planes of ``x``."""
    rdt = _real_of(x.dtype)
    re = np.ascontiguousarray(x.real, dtype=rdt)
    im = np.ascontiguousarray(x.imag, dtype=rdt) if np.iscomplexobj(x) else np.zeros_like(re)
    return re, im


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _interleave(re, im, out):
    for i in range(re.size):
        out[2 * i] = re[i]
        out[2 * i + 1] = im[i]


def _join(re, im):
    out = np.empty(re.shape, dtype=np.complex64 if re.dtype == np.float32 else np.complex128)
    _interleave(np.ascontiguousarray(re).reshape(-1), np.ascontiguousarray(im).reshape(-1),
                out.view(re.dtype).reshape(-1))
    return out


def _transform_planes(re, im, axis, sign, shift=0):
    """Unnormalized DFT along ``axis`` of the complex array ``re + 1j*im``.

    The kernel is ``exp(sign * 2j*pi * j*k / n)``; the result is rolled by
    ``shift`` along the axis.  Lengths that are primes above
    ``DIRECT_PRIME_MAX`` go through Bluestein's algorithm; otherwise a large
    prime factor costs O(p) per element in its own stage.
    """
    shape = re.shape
    n = shape[axis]
    b = int(np.prod(shape[:axis], dtype=np.int64))
    cols = int(np.prod(shape[axis + 1:], dtype=np.int64))
    if n > DIRECT_PRIME_MAX and _factorize(n) == [n]:
        out = _bluestein(_join(re, im).reshape(b, n, cols), sign)
        if shift:
            out = np.roll(out, shift, axis=1)
        return _planes(out.reshape(shape))
    stages = _plan(n, sign, re.dtype.type)
    if not stages:
        return re.copy(), im.copy()
    src = (re.reshape(-1), im.reshape(-1))
    bufs = [(np.empty(re.size, re.dtype), np.empty(re.size, re.dtype)) for _ in range(2)]
    last = len(stages) - 1
    for i, (p, m, widen, twr, twi, kr, ki) in enumerate(stages):
        dst = bufs[i % 2]
        _radix_stage(src[0], src[1], dst[0], dst[1], b, m, p, widen * cols,
                     twr, twi, kr, ki, shift if i == last else 0)
        src = dst
    return src[0].reshape(shape), src[1].reshape(shape)


def _transform_axis(x, sign):
    """Unnormalized DFT along axis 1 of a complex ``(batch, n, cols)`` array."""
    return _join(*_transform_planes(*_planes(x), 1, sign))


def fft(x, axis=-1, inverse=False):
    """Unnormalized 1-D DFT of ``x`` along ``axis`` (inverse: conjugate kernel, no scaling)."""
    x = np.asarray(x)
    return _join(*_transform_planes(*_planes(x), axis % x.ndim, 1 if inverse else -1))


# ---------------------------------------------------------------------------
# 2-D transforms


def _check4(x, what):
    if x.ndim != 4:
        raise DimensionError(f"{what}: expected N x H x W x C, got shape {x.shape}")
    if x.shape[1] < 1 or x.shape[2] < 1:
        raise DimensionError(f"{what}: empty spatial grid {x.shape}")


def center(spectrum):
    """Roll the zero frequency to (H//2, W//2)."""
    h, w = spectrum.shape[1], spectrum.shape[2]
    return np.roll(spectrum, (h // 2, w // 2), axis=(1, 2))


def uncenter(spectrum):
    h, w = spectrum.shape[1], spectrum.shape[2]
    return np.roll(spectrum, (-(h // 2), -(w // 2)), axis=(1, 2))


# Grids up to SMALL_GRID_MAX on a side skip the FFT: each axis becomes one
# BLAS product with a real block matrix acting on stacked (real, imaginary)
# planes, with centering and scaling folded into the matrix.  At these sizes
# memory passes, not arithmetic, set the cost, and this needs only two.


@lru_cache(maxsize=None)
def _axis_block(n, sign, centered, scale, dtype, interleaved):
    """``2n x 2n`` real form of a (centered) length-``n`` DFT matrix.

    Rows are ordered (part, index).  Columns are ordered (part, index), or
    (index, part) when ``interleaved``.  A centered forward matrix emits
    frequencies rolled by ``n//2``; a centered inverse one reads them so.
    """
    s = n // 2 if centered else 0
    a = np.arange(n)
    if sign < 0:
        k = np.exp(-2j * np.pi * np.outer(a - s, a) / n)
    else:
        k = np.exp(2j * np.pi * np.outer(a, a - s) / n)
    k = k * scale
    block = np.block([[k.real, -k.imag], [k.imag, k.real]])
    if interleaved:
        block = block.reshape(2 * n, 2, n).transpose(0, 2, 1).reshape(2 * n, 2 * n)
    return np.ascontiguousarray(block, dtype=dtype)


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _split_spatial(x, z):
    """``z[h, 0|1, w, n, c]`` = real | imaginary part of ``x[n, h, w, c]``."""
    n, h, w, c = x.shape
    for i in range(n):
        for j in range(h):
            for k in range(w):
                for l in range(c):
                    v = x[i, j, k, l]
                    z[j, 0, k, i, l] = v.real
                    z[j, 1, k, i, l] = v.imag


def _matrix_pass_w(x, sign, centered, rdt):
    """Transform along W; returns ``(H, 2, W, N*C)`` stacked planes."""
    n, h, w, c = x.shape
    xs = x.transpose(1, 2, 0, 3)
    bw = _axis_block(w, sign, centered, 1.0, rdt, False)
    if np.iscomplexobj(x):
        z = np.empty((h, 2, w, n, c), rdt)
        _split_spatial(x, z)
        return np.matmul(bw, z.reshape(h, 2 * w, n * c))
    z = np.ascontiguousarray(xs, dtype=rdt).reshape(h, w, n * c)
    return np.matmul(bw[:, :w], z)


def _matrix_forward2(x, centered, scale):
    n, h, w, c = x.shape
    rdt = _real_of(x.dtype)
    y = _matrix_pass_w(x, -1, centered, rdt)
    bh = _axis_block(h, -1, centered, scale, rdt, True)
    y = (bh @ y.reshape(2 * h, w * n * c)).reshape(2, h, w, n, c)
    return _join(y[0], y[1]).transpose(2, 0, 1, 3)


def _matrix_inverse2_real(spectrum, centered, scale, with_residual):
    n, h, w, c = spectrum.shape
    rdt = _real_of(spectrum.dtype)
    y = _matrix_pass_w(spectrum, 1, centered, rdt).reshape(2 * h, w * n * c)
    bh = _axis_block(h, 1, centered, scale, rdt, True)
    re = (bh[:h] @ y).reshape(h, w, n, c).transpose(2, 0, 1, 3)
    if with_residual:
        im = bh[h:] @ y
        return re, float(np.abs(im).max()) if im.size else 0.0
    return re


def _small(h, w):
    return h <= SMALL_GRID_MAX and w <= SMALL_GRID_MAX


def _forward2(x, centered, scale=1.0):
    h, w = x.shape[1], x.shape[2]
    if _small(h, w):
        return _matrix_forward2(x, centered, scale)
    re, im = _transform_planes(*_planes(x), 1, -1, h // 2 if centered else 0)
    re, im = _transform_planes(re, im, 2, -1, w // 2 if centered else 0)
    if scale != 1:
        re *= re.dtype.type(scale)
        im *= re.dtype.type(scale)
    return _join(re, im)


@lru_cache(maxsize=None)
def _uncenter_ramp(h, w, scale, dtype):
    """Output-side phase that replaces uncentering the input of an inverse DFT.

    Reading a spectrum rolled by ``s`` multiplies the inverse transform at
    ``t`` by ``exp(-2j*pi*s*t/n)``; for even sizes this is just ``(-1)^t``.
    """
    th, tw = np.arange(h)[:, None], np.arange(w)[None, :]
    ramp = np.exp(-2j * np.pi * ((h // 2) * th / h + (w // 2) * tw / w)) * scale
    ramp = ramp[None, :, :, None]
    if h % 2 == 0 and w % 2 == 0:
        return np.rint(ramp.real).astype(dtype) if scale == 1 else ramp.real.astype(dtype)
    return ramp.astype(np.complex64 if dtype == np.float32 else np.complex128)


def _inverse2_real(spectrum, centered, scale, with_residual=False):
    """``scale * Re(inverse DFT)`` of a (centered) spectrum, plus max |imag| if asked."""
    h, w = spectrum.shape[1], spectrum.shape[2]
    if _small(h, w):
        return _matrix_inverse2_real(spectrum, centered, scale, with_residual)
    re, im = _transform_planes(*_planes(spectrum), 1, 1)
    re, im = _transform_planes(re, im, 2, 1)
    rdt = re.dtype.type
    if centered:
        ramp = _uncenter_ramp(h, w, scale, rdt)
        if np.iscomplexobj(ramp):
            re, im = re * ramp.real - im * ramp.imag, re * ramp.imag + im * ramp.real
        else:
            re *= ramp
            if with_residual:
                im *= ramp
    elif scale != 1:
        re *= rdt(scale)
        im *= rdt(scale)
    if with_residual:
        return re, float(np.abs(im).max()) if im.size else 0.0
    return re


def dft2(x, centered=True):
    """Forward 2-D DFT of an ``N x H x W x C`` array."""
    x = np.asarray(x)
    _check4(x, "dft2")
    return _forward2(x, centered)


def idft2(spectrum, centered=True, return_residual=False):
    """Inverse 2-D DFT; returns the real part (and optionally max |imag|)."""
    spectrum = np.asarray(spectrum)
    _check4(spectrum, "idft2")
    h, w = spectrum.shape[1], spectrum.shape[2]
    return _inverse2_real(spectrum, centered, 1.0 / (h * w), return_residual)


def naive_dft2(x, inverse=False):
    """Direct-sum 2-D DFT (uncentered, unnormalized); the test oracle."""
    x = np.asarray(x)
    _check4(x, "naive_dft2")
    n, h, w, c = x.shape
    sign = 1.0 if inverse else -1.0
    hh, ww = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    pos = np.stack([hh.ravel(), ww.ravel()], axis=1)
    # kernel[(u,v), (h,w)] = exp(sign*2j*pi*(h*u/H + w*v/W))
    phase = (np.outer(pos[:, 0], pos[:, 0]) / h + np.outer(pos[:, 1], pos[:, 1]) / w)
    kernel = np.exp(sign * 2j * np.pi * phase)
    flat = x.reshape(n, h * w, c).astype(np.complex128)
    out = np.einsum("fs,nsc->nfc", kernel, flat)
    return out.reshape(n, h, w, c)


# ---------------------------------------------------------------------------
# taped transforms (gradients flow through FFTs on the autodiff tape)


def dft2_t(x, centered=True):
    """Taped ``dft2`` of a real tensor; adjoint is ``Re(H*W * idft2(g))``."""
    x = as_tensor(x)
    _check4(x.data, "dft2_t")

    def backward(g):
        return (_inverse2_real(g, centered, 1.0).astype(x.dtype, copy=False),)

    return _node(_forward2(x.data, centered), (x,), backward)


def idft2_t(spectrum, centered=True):
    """Taped real part of ``idft2``; adjoint is ``dft2(g) / (H*W)``."""
    spectrum = as_tensor(spectrum)
    _check4(spectrum.data, "idft2_t")
    h, w = spectrum.shape[1], spectrum.shape[2]

    def backward(g):
        return (_forward2(g, centered, 1.0 / (h * w)),)

    return _node(idft2(spectrum.data, centered), (spectrum,), backward)


# ---------------------------------------------------------------------------
# masks and bands


@dataclass(frozen=True, eq=False)
class FrequencyMask:
    """Centered box mask: 1 where max(|u-h//2|, |v-w//2|) <= ratio*min(h,w)/2."""

    h: int
    w: int
    ratio: float
    bits: np.ndarray

    @property
    def support(self):
        return int(self.bits.sum())


def build_mask(h, w, ratio):
    if not 0.0 <= ratio <= 1.0:
        raise ValidationError(f"mask ratio must lie in [0, 1], got {ratio}")
    if h < 1 or w < 1:
        raise ValidationError(f"mask dims must be positive, got {h}x{w}")
    bound = ratio * min(h, w) / 2
    du = np.abs(np.arange(h) - h // 2)[:, None]
    dv = np.abs(np.arange(w) - w // 2)[None, :]
    bits = np.maximum(du, dv) <= bound
    bits.setflags(write=False)
    return FrequencyMask(h, w, float(ratio), bits)


@dataclass
class BandPair:
    low: np.ndarray
    high: np.ndarray
    mask: FrequencyMask


def _check_mask(spectrum, mask, what):
    if spectrum.shape[1:3] != (mask.h, mask.w):
        raise DimensionError(
            f"{what}: spectrum grid {spectrum.shape[1:3]} does not match mask {(mask.h, mask.w)}")


def split_bands(spectrum, mask):
    """Low band ``M * F`` and high band ``(1 - M) * F``; they sum back to ``F`` exactly."""
    spectrum = np.asarray(spectrum)
    _check_mask(spectrum, mask, "split_bands")
    keep = mask.bits[None, :, :, None]
    zero = np.zeros((), dtype=spectrum.dtype)
    return BandPair(np.where(keep, spectrum, zero), np.where(keep, zero, spectrum), mask)


def filter_image(x, ratio, band="low"):
    """Keep one band of each image's centered spectrum and transform back.

    Accepts ``H x W x C`` or ``N x H x W x C``.
    """
    if band not in ("low", "high"):
        raise ValidationError(f"band must be 'low' or 'high', got {band!r}")
    x = np.asarray(x)
    single = x.ndim == 3
    batch = x[None] if single else x
    _check4(batch, "filter_image")
    mask = build_mask(batch.shape[1], batch.shape[2], ratio)
    if mask.bits.all():
        out = batch.copy() if band == "low" else np.zeros_like(batch)
    else:
        bands = split_bands(dft2(batch, centered=True), mask)
        out, residual = idft2(bands.low if band == "low" else bands.high,
                              centered=True, return_residual=True)
        scale = max(1.0, float(np.abs(batch).max())) if batch.size else 1.0
        assert residual < 1e-4 * scale, f"non-real filtered image (residual {residual:.2e})"
        out = out.astype(batch.dtype, copy=False)
    return out[0] if single else out
