"""Finite-length BMP/TMP/QMP decoders on lifted graphs, plus a sum-product
baseline.

Flooding schedule throughout. Quantized messages live in int8 arrays with
the alphabet encodings BMP {-1,+1}, TMP {-1,0,+1}, QMP {-2,-1,+1,+2}
(low magnitude 1, high magnitude 2); the contract is the alphabet
semantics, int8 is just the storage. Weighting factors come from a DE
WeightSchedule; iterations past the end of the schedule reuse its last
entry, since DE is near-stationary once converged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .de import WeightSchedule
from .protograph import LiftedCode

_BP_CLAMP = 50.0  # nats; keeps atanh and the products finite


def sign_convention(x):
    """Decision sign with sign(0) = sign(-0.0) = +1.

    Single source of truth for every hard decision in this module: the
    estimate is (1 - sign)/2, so exact ties decide for bit 0.
    """
    x = np.asarray(x)
    return np.where(x < 0, -1, 1)


def quantize(alg, x, T=1.3):
    """Message quantizer; boundary ties follow the region conventions:
    BMP x <= 0 -> -1; TMP -T <= x <= T -> 0; QMP 0 <= x < T -> +1 (low),
    x >= T -> +2 (high).
    """
    x = np.asarray(x)
    if alg == "bmp":
        return np.where(x > 0, 1, -1).astype(np.int8)
    if alg == "tmp":
        return np.where(x > T, 1, np.where(x < -T, -1, 0)).astype(np.int8)
    if alg == "qmp":
        return np.where(
            x >= T, 2, np.where(x >= 0, 1, np.where(x > -T, -1, -2))
        ).astype(np.int8)
    raise ValueError(f"unknown algorithm {alg!r}")


@dataclass
class DecodeResult:
    bits: np.ndarray
    iterations_used: int
    syndrome_zero: bool


class DecoderGraph:
    """Compiled adjacency of a lifted code.

    Edges are stored VN-major (contiguous per VN); cn_eidx permutes them
    into CN-major order. edge_cell tags each edge with its base-matrix
    cell index, in the same row-major cell order DE uses for schedules.
    """

    def __init__(self, code: LiftedCode):
        cn, vn, bi, bj = code.edges()
        order = np.argsort(vn, kind="stable")
        self.edge_vn = np.ascontiguousarray(vn[order], dtype=np.int64)
        self.edge_cn = np.ascontiguousarray(cn[order], dtype=np.int64)
        self.n_v = code.n_c
        self.n_c = code.m_c
        self.vn_ptr = np.zeros(self.n_v + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.edge_vn, minlength=self.n_v),
                  out=self.vn_ptr[1:])
        corder = np.argsort(self.edge_cn, kind="stable")
        self.cn_eidx = np.ascontiguousarray(corder, dtype=np.int64)
        self.cn_ptr = np.zeros(self.n_c + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.edge_cn, minlength=self.n_c),
                  out=self.cn_ptr[1:])
        ii, jj = np.nonzero(code.base)
        self.cells = list(zip(ii.tolist(), jj.tolist()))
        lut = {cell: k for k, cell in enumerate(self.cells)}
        self.edge_cell = np.ascontiguousarray(
            [lut[(int(i), int(j))] for i, j in zip(bi[order], bj[order])],
            dtype=np.int64)
        self.code = code

    @property
    def n_edges(self):
        return self.edge_vn.size


def _stack_schedule(g: DecoderGraph, schedule: WeightSchedule):
    """Schedule weights as contiguous (L, n_cells) arrays in graph cell order.

    QMP returns (w_low, w_high); TMP/BMP return the single weight twice so
    the kernels can index by magnitude unconditionally.
    """
    if schedule.cells != g.cells:
        lut = schedule.cell_index()
        try:
            perm = np.array([lut[c] for c in g.cells], dtype=int)
        except KeyError as missing:
            raise ValueError(
                f"schedule does not cover edge type {missing} of this graph")
    else:
        perm = np.arange(len(g.cells))
    stack = np.stack([w[:, perm] for w in schedule.iterations])  # (L, k, n)
    wl = np.ascontiguousarray(stack[:, 0, :])
    wh = np.ascontiguousarray(stack[:, -1, :])
    return wl, wh


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True)
def _syndrome_ok(bits, cn_ptr, cn_eidx, edge_vn):
    for c in range(cn_ptr.size - 1):
        parity = 0
        for k in range(cn_ptr[c], cn_ptr[c + 1]):
            parity ^= bits[edge_vn[cn_eidx[k]]]
        if parity:
            return False
    return True


@njit(cache=True)
def _cn_step_hard(m_v, m_c, cn_ptr, cn_eidx, qmp):
    """Sign/erasure product; for QMP additionally min-magnitude."""
    for c in range(cn_ptr.size - 1):
        lo, hi = cn_ptr[c], cn_ptr[c + 1]
        ts = 1
        nz = 0  # TMP erasures
        nl = 0  # QMP low magnitudes
        for k in range(lo, hi):
            m = m_v[cn_eidx[k]]
            if m == 0:
                nz += 1
            else:
                if m < 0:
                    ts = -ts
                if m == 1 or m == -1:
                    nl += 1
        for k in range(lo, hi):
            e = cn_eidx[k]
            m = m_v[e]
            if m == 0:
                m_c[e] = 0 if nz > 1 else ts
                continue
            if nz > 0:
                m_c[e] = 0
                continue
            s = -ts if m < 0 else ts
            if qmp:
                low_ext = nl - (1 if (m == 1 or m == -1) else 0)
                m_c[e] = s if low_ext > 0 else 2 * s
            else:
                m_c[e] = s


@njit(cache=True)
def _vn_step_qmp(l_dec, m_c, m_v, vn_ptr, edge_cell, wl, wh, T, bits):
    for v in range(vn_ptr.size - 1):
        lo, hi = vn_ptr[v], vn_ptr[v + 1]
        tot = l_dec[v]
        for k in range(lo, hi):
            m = m_c[k]
            w = wl[edge_cell[k]] if (m == 1 or m == -1) else wh[edge_cell[k]]
            tot += w if m > 0 else -w
        bits[v] = 1 if tot < 0 else 0
        for k in range(lo, hi):
            m = m_c[k]
            w = wl[edge_cell[k]] if (m == 1 or m == -1) else wh[edge_cell[k]]
            ext = tot - (w if m > 0 else -w)
            if ext >= T:
                m_v[k] = 2
            elif ext >= 0:
                m_v[k] = 1
            elif ext > -T:
                m_v[k] = -1
            else:
                m_v[k] = -2


@njit(cache=True)
def _vn_step_tmp(l_dec, m_c, m_v, vn_ptr, edge_cell, w, T, bits):
    for v in range(vn_ptr.size - 1):
        lo, hi = vn_ptr[v], vn_ptr[v + 1]
        tot = l_dec[v]
        for k in range(lo, hi):
            tot += w[edge_cell[k]] * m_c[k]
        bits[v] = 1 if tot < 0 else 0
        for k in range(lo, hi):
            ext = tot - w[edge_cell[k]] * m_c[k]
            if ext > T:
                m_v[k] = 1
            elif ext < -T:
                m_v[k] = -1
            else:
                m_v[k] = 0


@njit(cache=True)
def _vn_step_bmp(l_dec, m_c, m_v, vn_ptr, edge_cell, w, bits):
    for v in range(vn_ptr.size - 1):
        lo, hi = vn_ptr[v], vn_ptr[v + 1]
        tot = l_dec[v]
        for k in range(lo, hi):
            tot += w[edge_cell[k]] * m_c[k]
        bits[v] = 1 if tot < 0 else 0
        for k in range(lo, hi):
            ext = tot - w[edge_cell[k]] * m_c[k]
            m_v[k] = 1 if ext > 0 else -1


@njit(cache=True)
def _cn_step_bp(m_v, m_c, cn_ptr, cn_eidx, scratch):
    for c in range(cn_ptr.size - 1):
        lo, hi = cn_ptr[c], cn_ptr[c + 1]
        d = hi - lo
        for a in range(d):
            t = np.tanh(0.5 * m_v[cn_eidx[lo + a]])
            if t > 0.9999999999999998:
                t = 0.9999999999999998
            elif t < -0.9999999999999998:
                t = -0.9999999999999998
            scratch[a] = t
        # leave-one-out products via prefix/suffix
        pre = 1.0
        for a in range(d):
            scratch[d + a] = pre
            pre *= scratch[a]
        suf = 1.0
        for a in range(d - 1, -1, -1):
            prod = scratch[d + a] * suf
            suf *= scratch[a]
            x = 0.5 * np.log((1.0 + prod) / (1.0 - prod)) * 2.0
            if x > _BP_CLAMP:
                x = _BP_CLAMP
            elif x < -_BP_CLAMP:
                x = -_BP_CLAMP
            m_c[cn_eidx[lo + a]] = x


@njit(cache=True)
def _vn_step_bp(l_dec, m_c, m_v, vn_ptr, bits):
    for v in range(vn_ptr.size - 1):
        lo, hi = vn_ptr[v], vn_ptr[v + 1]
        tot = l_dec[v]
        for k in range(lo, hi):
            tot += m_c[k]
        bits[v] = 1 if tot < 0 else 0
        for k in range(lo, hi):
            ext = tot - m_c[k]
            if ext > _BP_CLAMP:
                ext = _BP_CLAMP
            elif ext < -_BP_CLAMP:
                ext = -_BP_CLAMP
            m_v[k] = ext


# ---------------------------------------------------------------------------
# drivers


def decode(alg, g: DecoderGraph, l_dec, schedule: WeightSchedule,
           l_max=100, early_exit=True) -> DecodeResult:
    """Flooding message-passing decode of one frame.

    Checks the raw channel hard decision first (iterationsUsed = 0 when it
    already satisfies the syndrome), then alternates CN and VN updates,
    re-deciding every bit from the full weighted neighborhood sum each
    iteration and stopping on a zero syndrome.
    """
    if alg not in ("bmp", "tmp", "qmp"):
        raise ValueError(f"unknown algorithm {alg!r}")
    if schedule.alg != alg:
        raise ValueError(
            f"schedule was computed for {schedule.alg!r}, decoding {alg!r}")
    l_dec = np.ascontiguousarray(l_dec, dtype=float)
    if l_dec.shape != (g.n_v,):
        raise ValueError(f"lDec length {l_dec.shape} != {g.n_v} VNs")
    wl, wh = _stack_schedule(g, schedule)
    T = schedule.t
    bits = np.zeros(g.n_v, dtype=np.uint8)
    bits[l_dec < 0] = 1
    if early_exit and _syndrome_ok(bits, g.cn_ptr, g.cn_eidx, g.edge_vn):
        return DecodeResult(bits=bits, iterations_used=0, syndrome_zero=True)
    m_v = np.empty(g.n_edges, dtype=np.int8)
    m_v[:] = quantize(alg, l_dec, T)[g.edge_vn]
    m_c = np.empty(g.n_edges, dtype=np.int8)
    last = wl.shape[0] - 1
    for it in range(1, l_max + 1):
        row = min(it - 1, last)
        _cn_step_hard(m_v, m_c, g.cn_ptr, g.cn_eidx, alg == "qmp")
        if alg == "qmp":
            _vn_step_qmp(l_dec, m_c, m_v, g.vn_ptr, g.edge_cell,
                         wl[row], wh[row], T, bits)
        elif alg == "tmp":
            _vn_step_tmp(l_dec, m_c, m_v, g.vn_ptr, g.edge_cell,
                         wl[row], T, bits)
        else:
            _vn_step_bmp(l_dec, m_c, m_v, g.vn_ptr, g.edge_cell,
                         wl[row], bits)
        if early_exit and _syndrome_ok(bits, g.cn_ptr, g.cn_eidx, g.edge_vn):
            return DecodeResult(bits=bits, iterations_used=it,
                                syndrome_zero=True)
    ok = _syndrome_ok(bits, g.cn_ptr, g.cn_eidx, g.edge_vn)
    return DecodeResult(bits=bits, iterations_used=l_max, syndrome_zero=ok)


def decode_bp(g: DecoderGraph, l_dec, l_max=100,
              early_exit=True) -> DecodeResult:
    """Flooding sum-product in the log domain with a tanh-rule CN update."""
    l_dec = np.ascontiguousarray(l_dec, dtype=float)
    if l_dec.shape != (g.n_v,):
        raise ValueError(f"lDec length {l_dec.shape} != {g.n_v} VNs")
    bits = np.zeros(g.n_v, dtype=np.uint8)
    bits[l_dec < 0] = 1
    if early_exit and _syndrome_ok(bits, g.cn_ptr, g.cn_eidx, g.edge_vn):
        return DecodeResult(bits=bits, iterations_used=0, syndrome_zero=True)
    m_v = np.clip(l_dec, -_BP_CLAMP, _BP_CLAMP)[g.edge_vn].astype(float)
    m_c = np.empty(g.n_edges, dtype=float)
    max_dc = int(np.diff(g.cn_ptr).max())
    scratch = np.empty(2 * max_dc, dtype=float)
    for it in range(1, l_max + 1):
        _cn_step_bp(m_v, m_c, g.cn_ptr, g.cn_eidx, scratch)
        _vn_step_bp(l_dec, m_c, m_v, g.vn_ptr, bits)
        if early_exit and _syndrome_ok(bits, g.cn_ptr, g.cn_eidx, g.edge_vn):
            return DecodeResult(bits=bits, iterations_used=it,
                                syndrome_zero=True)
    ok = _syndrome_ok(bits, g.cn_ptr, g.cn_eidx, g.edge_vn)
    return DecodeResult(bits=bits, iterations_used=l_max, syndrome_zero=ok)


def message_histogram(alg, g: DecoderGraph, l_dec,
                      schedule: WeightSchedule, n_iters=1):
    """Per-cell VN-to-CN message-type counts after each iteration.

    Returns an array (n_iters, n_cells, a) where a is the alphabet size
    ordered most negative first; used to cross-check DE against decoder
    statistics on large lifts.
    """
    alphabet = {"bmp": (-1, 1), "tmp": (-1, 0, 1),
                "qmp": (-2, -1, 1, 2)}[alg]
    l_dec = np.ascontiguousarray(l_dec, dtype=float)
    wl, wh = _stack_schedule(g, schedule)
    T = schedule.t
    m_v = quantize(alg, l_dec, T)[g.edge_vn].copy()
    m_c = np.empty(g.n_edges, dtype=np.int8)
    bits = np.zeros(g.n_v, dtype=np.uint8)
    last = wl.shape[0] - 1
    out = np.zeros((n_iters, len(g.cells), len(alphabet)), dtype=np.int64)
    for it in range(n_iters):
        row = min(it, last)
        _cn_step_hard(m_v, m_c, g.cn_ptr, g.cn_eidx, alg == "qmp")
        if alg == "qmp":
            _vn_step_qmp(l_dec, m_c, m_v, g.vn_ptr, g.edge_cell,
                         wl[row], wh[row], T, bits)
        elif alg == "tmp":
            _vn_step_tmp(l_dec, m_c, m_v, g.vn_ptr, g.edge_cell,
                         wl[row], T, bits)
        else:
            _vn_step_bmp(l_dec, m_c, m_v, g.vn_ptr, g.edge_cell,
                         wl[row], bits)
        for a, val in enumerate(alphabet):
            np.add.at(out[it, :, a], g.edge_cell[m_v == val], 1)
    return out
