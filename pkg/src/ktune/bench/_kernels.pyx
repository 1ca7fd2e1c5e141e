# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled CPU kernels for the built-in benchmarks.

Each kernel takes its tuning parameters as plain arguments. Scratch buffers
are allocated by the caller so allocation stays out of the timed region.
"""
from libc.stdint cimport int32_t, int64_t
from libc.string cimport memcpy

cdef extern from *:
    """
    static inline void ktune_prefetch(const void *p) { __builtin_prefetch(p, 0, 1); }
    """
    void ktune_prefetch(const void *p) nogil


cdef inline int64_t _chunk_sum(const int32_t *x, Py_ssize_t n, int unroll) noexcept nogil:
    cdef int64_t a0 = 0, a1 = 0, a2 = 0, a3 = 0, a4 = 0, a5 = 0, a6 = 0, a7 = 0
    cdef Py_ssize_t i = 0
    if unroll >= 8:
        while i + 8 <= n:
            a0 += x[i]; a1 += x[i + 1]; a2 += x[i + 2]; a3 += x[i + 3]
            a4 += x[i + 4]; a5 += x[i + 5]; a6 += x[i + 6]; a7 += x[i + 7]
            i += 8
    elif unroll >= 4:
        while i + 4 <= n:
            a0 += x[i]; a1 += x[i + 1]; a2 += x[i + 2]; a3 += x[i + 3]
            i += 4
    elif unroll >= 2:
        while i + 2 <= n:
            a0 += x[i]; a1 += x[i + 1]
            i += 2
    while i < n:
        a0 += x[i]
        i += 1
    return ((a0 + a1) + (a2 + a3)) + ((a4 + a5) + (a6 + a7))


def reduce_sum(const int32_t[::1] x, Py_ssize_t chunk, int unroll, bint two_phase,
               int64_t[::1] scratch):
    """Sum of ``x`` computed chunk by chunk.

    With ``two_phase`` every chunk writes a partial sum to ``scratch`` and a
    second pass adds the partials; otherwise chunks accumulate into one total.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t nchunks = (n + chunk - 1) // chunk
    cdef Py_ssize_t c, start, length
    cdef int64_t total = 0
    if n == 0:
        return 0
    if two_phase and scratch.shape[0] < nchunks:
        raise ValueError("scratch too small")
    with nogil:
        for c in range(nchunks):
            start = c * chunk
            length = chunk if start + chunk <= n else n - start
            if two_phase:
                scratch[c] = _chunk_sum(&x[start], length, unroll)
            else:
                total += _chunk_sum(&x[start], length, unroll)
        if two_phase:
            total = 0
            for c in range(nchunks):
                total += scratch[c]
    return total


def transpose(const float[:, ::1] src, float[:, ::1] dst, int tile, int pad, bint prefetch,
              float[::1] scratch):
    """Tiled transpose staged through a ``tile x (tile + pad)`` scratch tile."""
    cdef Py_ssize_t rows = src.shape[0], cols = src.shape[1]
    cdef Py_ssize_t stride = tile + pad
    cdef Py_ssize_t bi, bj, r, c, ti, tj, nbi, nbj
    if dst.shape[0] != cols or dst.shape[1] != rows:
        raise ValueError("dst shape must be the transpose of src")
    if scratch.shape[0] < tile * stride:
        raise ValueError("scratch too small")
    with nogil:
        bi = 0
        while bi < rows:
            ti = tile if bi + tile <= rows else rows - bi
            bj = 0
            while bj < cols:
                tj = tile if bj + tile <= cols else cols - bj
                if prefetch:
                    nbi = bi
                    nbj = bj + tile
                    if nbj >= cols:
                        nbi = bi + tile
                        nbj = 0
                    if nbi < rows:
                        r = 0
                        while r < tile and nbi + r < rows:
                            ktune_prefetch(&src[nbi + r, nbj])
                            r += 1
                for r in range(ti):
                    for c in range(tj):
                        scratch[r * stride + c] = src[bi + r, bj + c]
                for c in range(tj):
                    for r in range(ti):
                        dst[bj + c, bi + r] = scratch[r * stride + c]
                bj += tile
            bi += tile


def batched_gemm(const float[:, :, ::1] a, const float[:, :, ::1] b, float[:, :, ::1] c,
                 int y, int z, bint local_stage, float[::1] scratch):
    """``c[n] = a[n] @ b[n]`` for every matrix in the batch.

    ``y`` output rows are computed together (coarsening), ``z`` matrices are
    interleaved per row block, and with ``local_stage`` a group's results are
    assembled in ``scratch`` and copied out in one block.
    """
    cdef Py_ssize_t batch = a.shape[0], m = a.shape[1], inner = a.shape[2]
    cdef Py_ssize_t ncol = b.shape[2]
    cdef Py_ssize_t g0, gz, r0, ry, zz, n, col, t, k
    cdef float bv
    cdef float acc[8]
    if y < 1 or y > 8:
        raise ValueError("y must be in 1..8")
    if b.shape[0] != batch or b.shape[1] != inner:
        raise ValueError("b shape mismatch")
    if c.shape[0] != batch or c.shape[1] != m or c.shape[2] != ncol:
        raise ValueError("c shape mismatch")
    if local_stage and scratch.shape[0] < z * m * ncol:
        raise ValueError("scratch too small")
    with nogil:
        g0 = 0
        while g0 < batch:
            gz = z if g0 + z <= batch else batch - g0
            r0 = 0
            while r0 < m:
                ry = y if r0 + y <= m else m - r0
                for zz in range(gz):
                    n = g0 + zz
                    for col in range(ncol):
                        for k in range(ry):
                            acc[k] = 0.0
                        for t in range(inner):
                            bv = b[n, t, col]
                            for k in range(ry):
                                acc[k] += a[n, r0 + k, t] * bv
                        if local_stage:
                            for k in range(ry):
                                scratch[(zz * m + r0 + k) * ncol + col] = acc[k]
                        else:
                            for k in range(ry):
                                c[n, r0 + k, col] = acc[k]
                r0 += y
            if local_stage:
                memcpy(&c[g0, 0, 0], &scratch[0], gz * m * ncol * sizeof(float))
            g0 += z
