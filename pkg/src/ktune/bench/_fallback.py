"""Pure-Python/numpy versions of the compiled kernels, same signatures and results.

Python-level loops stand in for the compiled loops, so the tuning
parameters still change how much work each iteration does.
"""
import numpy as np


def reduce_sum(x, chunk, unroll, two_phase, scratch):
    n = x.shape[0]
    nchunks = -(-n // chunk)
    total = 0
    for c in range(nchunks):
        part = x[c * chunk:(c + 1) * chunk]
        body = part.size - part.size % unroll
        lanes = part[:body].reshape(-1, unroll).sum(axis=0, dtype=np.int64)
        s = int(lanes.sum()) + int(part[body:].sum(dtype=np.int64))
        if two_phase:
            scratch[c] = s
        else:
            total += s
    if two_phase:
        total = int(scratch[:nchunks].sum())
    return total


def transpose(src, dst, tile, pad, prefetch, scratch):
    rows, cols = src.shape
    if dst.shape != (cols, rows):
        raise ValueError("dst shape must be the transpose of src")
    stage = scratch[:tile * (tile + pad)].reshape(tile, tile + pad)
    for bi in range(0, rows, tile):
        ti = min(tile, rows - bi)
        for bj in range(0, cols, tile):
            tj = min(tile, cols - bj)
            if prefetch:
                nbj = bj + tile
                nbi = bi
                if nbj >= cols:
                    nbi, nbj = bi + tile, 0
                if nbi < rows:
                    src[nbi, nbj]
            stage[:ti, :tj] = src[bi:bi + ti, bj:bj + tj]
            dst[bj:bj + tj, bi:bi + ti] = stage[:ti, :tj].T


def batched_gemm(a, b, c, y, z, local_stage, scratch):
    batch, m, _ = a.shape
    ncol = b.shape[2]
    if local_stage:
        stage = scratch[:z * m * ncol].reshape(z, m, ncol)
    for g0 in range(0, batch, z):
        gz = min(z, batch - g0)
        out = stage[:gz] if local_stage else c[g0:g0 + gz]
        for r0 in range(0, m, y):
            np.matmul(a[g0:g0 + gz, r0:r0 + y, :], b[g0:g0 + gz], out=out[:, r0:r0 + y, :])
        if local_stage:
            c[g0:g0 + gz] = stage[:gz]
