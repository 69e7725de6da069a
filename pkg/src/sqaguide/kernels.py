"""Hot numeric kernels.

Each kernel has a numba implementation and a pure-numpy implementation with
the same contract. ``_accel.dispatch`` picks one at import time; the other
stays reachable through ``.numba_impl`` / ``.numpy_impl`` for tests and the
benchmark in ``benchmarks/bench_kernels.py``.
"""
import numpy as np

from ._accel import dispatch, njit


def _check_pow2(n):
    if n < 1 or n & (n - 1):
        raise ValueError(f"FFT length must be a power of two, got {n}")


# --------------------------------------------------------------------------
# radix-2 FFT over the rows of a 2-D complex array

@njit
def _bitrev_nb(n):
    bits = 0
    m = n
    while m > 1:
        m >>= 1
        bits += 1
    rev = np.zeros(n, np.int64)
    for i in range(n):
        r = 0
        v = i
        for _ in range(bits):
            r = (r << 1) | (v & 1)
            v >>= 1
        rev[i] = r
    return rev


@njit
def _fft_rows_nb(x, inverse):
    rows, n = x.shape
    rev = _bitrev_nb(n)
    out = np.empty((rows, n), np.complex128)
    for r in range(rows):
        for i in range(n):
            out[r, rev[i]] = x[r, i]
    sign = 1.0 if inverse else -1.0
    half_n = n // 2
    tw = np.empty(max(half_n, 1), np.complex128)
    for k in range(half_n):
        ang = sign * 2.0 * np.pi * k / n
        tw[k] = complex(np.cos(ang), np.sin(ang))
    size = 2
    while size <= n:
        half = size // 2
        step = n // size
        for r in range(rows):
            for start in range(0, n, size):
                for k in range(half):
                    w = tw[k * step]
                    u = out[r, start + k]
                    v = out[r, start + k + half] * w
                    out[r, start + k] = u + v
                    out[r, start + k + half] = u - v
        size *= 2
    if inverse:
        out /= n
    return out


def _bitrev_np(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_rows_np(x, inverse):
    rows, n = x.shape
    out = x[:, _bitrev_np(n)]
    sign = 1.0 if inverse else -1.0
    half_n = n // 2
    tw_full = np.exp(sign * 2j * np.pi * np.arange(half_n) / n)
    size = 2
    while size <= n:
        half = size // 2
        tw = tw_full[:: n // size][:half]
        blocks = out.reshape(rows, n // size, size)
        u = blocks[..., :half]
        v = blocks[..., half:] * tw
        out = np.concatenate([u + v, u - v], axis=-1).reshape(rows, n)
        size *= 2
    if inverse:
        out = out / n
    return out


_fft_rows = dispatch(_fft_rows_nb, _fft_rows_np)


def fft(x, inverse=False):
    """Complex radix-2 FFT along the last axis of a 1-D or 2-D array."""
    x = np.asarray(x, dtype=np.complex128)
    one_d = x.ndim == 1
    x2 = np.ascontiguousarray(x.reshape(1, -1) if one_d else x)
    _check_pow2(x2.shape[1])
    out = _fft_rows(x2, inverse)
    return out[0] if one_d else out


# real transforms: rows are packed in pairs as the real and imaginary parts
# of one complex row, so two real transforms cost one complex transform

@njit
def _rfft_rows_nb(x, n):
    rows, m = x.shape
    m = min(m, n)
    pairs = (rows + 1) // 2
    buf = np.zeros((pairs, n), np.complex128)
    for r in range(rows):
        for i in range(m):
            if r % 2 == 0:
                buf[r // 2, i] += x[r, i]
            else:
                buf[r // 2, i] += 1j * x[r, i]
    z = _fft_rows_nb(buf, False)
    h = n // 2 + 1
    out = np.empty((rows, h), np.complex128)
    for p in range(pairs):
        for k in range(h):
            a = z[p, k]
            b = np.conj(z[p, (n - k) % n])
            out[2 * p, k] = 0.5 * (a + b)
            if 2 * p + 1 < rows:
                out[2 * p + 1, k] = -0.5j * (a - b)
    return out


def _rfft_rows_np(x, n):
    rows, m = x.shape
    m = min(m, n)
    buf = np.zeros(((rows + 1) // 2, n), np.complex128)
    buf[:, :m].real = x[0::2, :m]
    buf[: rows // 2, :m].imag = x[1::2, :m]
    z = _fft_rows_np(buf, False)
    zr = np.conj(z[:, (-np.arange(n // 2 + 1)) % n])  # conj(Z[N - k])
    zk = z[:, : n // 2 + 1]
    out = np.empty((rows, n // 2 + 1), np.complex128)
    out[0::2] = 0.5 * (zk + zr)
    out[1::2] = (-0.5j * (zk - zr))[: rows // 2]
    return out


@njit
def _irfft_rows_nb(spec, n):
    rows = spec.shape[0]
    h = n // 2 + 1
    pairs = (rows + 1) // 2
    buf = np.zeros((pairs, n), np.complex128)
    for r in range(rows):
        for k in range(n):
            if k < h:
                v = spec[r, k]
                if k == 0 or 2 * k == n:
                    v = complex(v.real, 0.0)
            else:
                v = np.conj(spec[r, n - k])
            if r % 2 == 0:
                buf[r // 2, k] += v
            else:
                buf[r // 2, k] += 1j * v
    z = _fft_rows_nb(buf, True)
    out = np.empty((rows, n))
    for r in range(rows):
        for i in range(n):
            out[r, i] = z[r // 2, i].real if r % 2 == 0 else z[r // 2, i].imag
    return out


def _irfft_rows_np(spec, n):
    rows = spec.shape[0]
    full = np.zeros((rows, n), np.complex128)
    full[:, : n // 2 + 1] = spec
    # DC and Nyquist of a real signal are real
    full[:, 0] = full[:, 0].real
    if n > 1:
        full[:, n // 2] = full[:, n // 2].real
    full[:, n // 2 + 1:] = np.conj(spec[:, 1: n // 2][:, ::-1])
    packed = full[0::2].copy()
    packed[: rows // 2] += 1j * full[1::2]
    z = _fft_rows_np(packed, True)
    out = np.empty((rows, n))
    out[0::2] = z.real
    out[1::2] = z[: rows // 2].imag
    return out


_rfft_rows = dispatch(_rfft_rows_nb, _rfft_rows_np)
_irfft_rows = dispatch(_irfft_rows_nb, _irfft_rows_np)


def rfft(x, n=None):
    """One-sided FFT of real rows, zero-padded or truncated to ``n``."""
    x = np.asarray(x, dtype=np.float64)
    one_d = x.ndim == 1
    x2 = np.ascontiguousarray(x.reshape(1, -1) if one_d else x)
    n = x2.shape[1] if n is None else int(n)
    _check_pow2(n)
    out = _rfft_rows(x2, n)
    return out[0] if one_d else out


def irfft(spec, n):
    """Inverse of :func:`rfft` for length-``n`` real signals."""
    spec = np.asarray(spec, dtype=np.complex128)
    one_d = spec.ndim == 1
    s2 = np.ascontiguousarray(spec.reshape(1, -1) if one_d else spec)
    _check_pow2(n)
    if s2.shape[1] != n // 2 + 1:
        raise ValueError(f"expected {n // 2 + 1} bins for n={n}, got {s2.shape[1]}")
    out = _irfft_rows(s2, n)
    return out[0] if one_d else out


# --------------------------------------------------------------------------
# overlap-add

@njit
def _overlap_add_nb(frames, hop):
    t, length = frames.shape
    out = np.zeros((t - 1) * hop + length)
    for i in range(t):
        base = i * hop
        for j in range(length):
            out[base + j] += frames[i, j]
    return out


def _overlap_add_np(frames, hop):
    t, length = frames.shape
    idx = (np.arange(t)[:, None] * hop + np.arange(length)[None, :]).ravel()
    return np.bincount(idx, weights=frames.ravel(), minlength=(t - 1) * hop + length)


_overlap_add = dispatch(_overlap_add_nb, _overlap_add_np)


def overlap_add(frames, hop):
    """Sum ``frames`` (T x L) into a signal of length (T-1)*hop + L."""
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValueError("overlap_add expects a non-empty 2-D frame matrix")
    return _overlap_add(frames, int(hop))


# --------------------------------------------------------------------------
# Levenshtein distance on integer-coded sequences

@njit
def _levenshtein_nb(a, b):
    n = a.shape[0]
    m = b.shape[0]
    prev = np.arange(m + 1)
    cur = np.zeros(m + 1, np.int64)
    for i in range(1, n + 1):
        cur[0] = i
        for j in range(1, m + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            best = prev[j - 1] + cost
            if prev[j] + 1 < best:
                best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            cur[j] = best
        prev, cur = cur, prev
    return prev[m]


def _levenshtein_np(a, b):
    m = b.shape[0]
    cols = np.arange(m + 1)
    prev = cols.copy()
    for i in range(1, a.shape[0] + 1):
        sub = prev[:-1] + (b != a[i - 1])
        t = np.empty(m + 1, np.int64)
        t[0] = i
        t[1:] = np.minimum(prev[1:] + 1, sub)
        # insertions chain left to right: cur[j] = min_k<=j t[k] + (j - k)
        prev = np.minimum.accumulate(t - cols) + cols
    return prev[m]


_levenshtein = dispatch(_levenshtein_nb, _levenshtein_np)


def levenshtein(a, b):
    """Unit-cost edit distance between two int64 code arrays."""
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    if a.shape[0] == 0:
        return int(b.shape[0])
    if b.shape[0] == 0:
        return int(a.shape[0])
    return int(_levenshtein(a, b))


# --------------------------------------------------------------------------
# normal equations of a causal FIR fit, est[n] ~ sum_j b[j] ref[n - j]

@njit
def _fir_normal_eq_nb(ref, est, taps):
    n = ref.shape[0]
    acf = np.zeros(taps)
    xc = np.zeros(taps)
    for k in range(taps):
        s = 0.0
        c = 0.0
        for m in range(n - k):
            s += ref[m] * ref[m + k]
            c += est[m + k] * ref[m]
        acf[k] = s
        xc[k] = c
    # tails[k, d]: the d samples of lag-k products that fall off the end
    tails = np.zeros((taps, taps))
    for k in range(taps):
        for d in range(1, taps - k):
            tails[k, d] = tails[k, d - 1] + ref[n - k - d] * ref[n - d]
    gram = np.empty((taps, taps))
    for i in range(taps):
        for j in range(taps):
            k = i - j if i >= j else j - i
            d = j if i >= j else i
            gram[i, j] = acf[k] - tails[k, d]
    return gram, xc


def _fir_normal_eq_np(ref, est, taps):
    n = ref.shape[0]
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    r_spec = np.fft.rfft(ref, nfft)
    acf = np.fft.irfft(np.abs(r_spec) ** 2, nfft)[:taps]
    xc = np.fft.irfft(np.fft.rfft(est, nfft) * np.conj(r_spec), nfft)[:taps]
    k = np.arange(taps)[:, None]
    d = np.arange(1, taps)[None, :]
    valid = d <= taps - 1 - k
    i1 = np.where(valid, n - k - d, 0)
    i2 = np.where(valid, n - d, 0)
    prod = np.where(valid, ref[i1] * ref[i2], 0.0)
    tails = np.zeros((taps, taps))
    tails[:, 1:] = np.cumsum(prod, axis=1)
    ii, jj = np.meshgrid(np.arange(taps), np.arange(taps), indexing="ij")
    gram = acf[np.abs(ii - jj)] - tails[np.abs(ii - jj), np.minimum(ii, jj)]
    return gram, xc


_fir_normal_eq = dispatch(_fir_normal_eq_nb, _fir_normal_eq_np)


def fir_normal_equations(ref, est, taps):
    """Gram matrix and cross-correlation of the truncated causal FIR fit.

    Returns ``(G, c)`` with ``G[i, j] = sum_{n >= max(i, j)} ref[n-i] ref[n-j]``
    and ``c[i] = sum_{n >= i} est[n] ref[n-i]`` over ``n < len(ref)``.
    """
    ref = np.ascontiguousarray(ref, dtype=np.float64)
    est = np.ascontiguousarray(est, dtype=np.float64)
    if ref.shape != est.shape or ref.ndim != 1:
        raise ValueError("ref and est must be 1-D arrays of equal length")
    if not 1 <= taps <= ref.shape[0]:
        raise ValueError(f"filter length {taps} must be in [1, {ref.shape[0]}]")
    return _fir_normal_eq(ref, est, int(taps))
