"""Protograph density evolution for one- and two-bit message passing.

Tracks the per-edge-type message probabilities of BMP, TMP, and QMP
decoding over a protograph base matrix, extracts the iteration-dependent
weighting factors, and locates decoding thresholds of windowed spatially
coupled ensembles by bisection over SNR.

Message probabilities are stored as arrays of shape (k, n_edges) over the
unit-edge expansion of the base matrix, with the most positive alphabet
value implied: QMP rows (p-H, p-L, p+L), TMP rows (p-1, p0), BMP row
(p-1,). Parallel edges become separate unit edges; all unit edges of one
base cell carry identical values, so this is the exponent form of the
update equations written out.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import constellation as cst
from .protograph import ScEnsemble, bit_mapping, window_base

ALGS = ("bmp", "tmp", "qmp")

# nats; log-ratio weights are clamped here once DE has converged on an edge
W_MAX = 64.0

# fixed-point detection: probabilities frozen means no later iteration can
# change anything, so the run can stop reporting non-convergence
_STALL_EPS = 1e-13

# Unquantized flooding-BP thresholds (dB) of the same windowed ensembles,
# obtained externally via discretized density evolution with 8-bit messages.
# Reference points for reports only; never recomputed here.
BP_REFERENCE_DB = {
    ("B4,8", "4U-0.50"): 5.36,
    ("B4,16", "4U-0.75"): 9.41,
    ("B6,24", "4U-0.75"): 9.34,
    ("B4,12", "8PS-0.67"): 8.65,
    ("B4,24", "8PS-0.83"): 8.67,
    ("B6,18", "8PS-0.67"): 8.57,
    ("B6,36", "8PS-0.83"): 8.59,
}


@dataclass(frozen=True)
class DeConfig:
    """Knobs of a DE run; T is the quantizer threshold shared by TMP/QMP."""

    T: float = 1.3
    l_max: int = 1000
    convergence_eps: float = 1e-8
    merge_tol: float = 1e-9
    init_source: str = "surrogate"
    term_budget: int = 10_000_000

    def __post_init__(self):
        if self.T < 0:
            raise ValueError(f"T must be >= 0, got {self.T}")
        if self.l_max < 1:
            raise ValueError(f"l_max must be >= 1, got {self.l_max}")
        if not 0.0 < self.convergence_eps < 1.0:
            raise ValueError(
                f"convergence_eps must be in (0,1), got {self.convergence_eps}")
        if self.init_source not in ("surrogate", "empirical"):
            raise ValueError(f"unknown init_source {self.init_source!r}")


class DeGraph:
    """Unit-edge expansion of a base matrix bound to a bit-level mapping.

    Precomputes the index groups the updates iterate over: CN rows grouped
    by degree (for leave-one-out products) and VN columns grouped by
    (degree, bit level) (for the extrinsic-sum enumerations).
    """

    def __init__(self, base, phi):
        base = np.asarray(base, dtype=int)
        phi = np.asarray(phi, dtype=int)
        if base.ndim != 2:
            raise ValueError("base matrix must be 2-D")
        if phi.shape != (base.shape[1],):
            raise ValueError(
                f"mapping length {phi.shape} does not match {base.shape[1]} VN types")
        if (base < 0).any():
            raise ValueError("base matrix entries must be non-negative")
        self.base = base
        self.phi = phi
        self.n_rows, self.n_cols = base.shape

        ii, jj = np.nonzero(base)
        mult = base[ii, jj]
        self.cells = list(zip(ii.tolist(), jj.tolist()))
        self.rows = np.repeat(ii, mult)
        self.cols = np.repeat(jj, mult)
        self.edge_cell = np.repeat(np.arange(len(ii)), mult)
        first = np.zeros(len(ii), dtype=int)
        first[1:] = np.cumsum(mult)[:-1]
        self.cell_edge = first  # one representative unit edge per cell
        self.n_edges = self.rows.size
        self.edge_level = phi[self.cols] - 1

        by_row = [[] for _ in range(self.n_rows)]
        for e, r in enumerate(self.rows.tolist()):
            by_row[r].append(e)
        by_col = [[] for _ in range(self.n_cols)]
        for e, c in enumerate(self.cols.tolist()):
            by_col[c].append(e)
        if any(not lst for lst in by_row):
            raise ValueError("base matrix has an empty row (degree-0 CN type)")
        if any(not lst for lst in by_col):
            raise ValueError("base matrix has an empty column (degree-0 VN type)")

        groups = {}
        for lst in by_row:
            groups.setdefault(len(lst), []).append(lst)
        self.row_groups = [np.array(v, dtype=int) for v in groups.values()]

        vn, app = {}, {}
        for j, edges_j in enumerate(by_col):
            key = (len(edges_j), int(phi[j]) - 1)
            app.setdefault(key, []).append([j] + edges_j)
            for e in edges_j:
                others = [f for f in edges_j if f != e]
                vn.setdefault(key, []).append([e] + others)
        self.vn_groups = []
        for (d, lv), recs in vn.items():
            arr = np.array(recs, dtype=int).reshape(len(recs), d)
            self.vn_groups.append((lv, arr[:, 0], arr[:, 1:]))
        self.app_groups = []
        for (d, lv), recs in app.items():
            arr = np.array(recs, dtype=int).reshape(len(recs), d + 1)
            self.app_groups.append((lv, arr[:, 0], arr[:, 1:]))


def _as_graph(base, mapping=None) -> DeGraph:
    if isinstance(base, DeGraph):
        return base
    base = np.asarray(base, dtype=int)
    if mapping is None:
        mapping = np.ones(base.shape[1], dtype=int)
    return DeGraph(base, mapping)


def base_hash(base, mapping) -> str:
    """Stable identifier binding a base matrix to its bit mapping."""
    blob = json.dumps(
        {"base": np.asarray(base, dtype=int).tolist(),
         "mapping": np.asarray(mapping, dtype=int).tolist()},
        separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# elementary updates


def _check_channels(channels, g: DeGraph):
    if g.phi.max() > len(channels):
        raise ValueError(
            f"mapping uses bit level {int(g.phi.max())} but only "
            f"{len(channels)} channel models were given")


def de_init(alg, channels, g, cfg: DeConfig = DeConfig()):
    """Iteration-0 message probabilities from the bit-channel models.

    Reads quantizer-region masses off each level's symmetrized-LLR CDF:
    QMP (-inf,-T], (-T,0), [0,T); TMP (-inf,-T], [-T,T]; BMP (-inf,0].
    """
    _check_alg(alg)
    g = _as_graph(g)
    _check_channels(channels, g)
    F = np.array([[ch.cdf(-cfg.T), ch.cdf(0.0), ch.cdf(cfg.T)]
                  for ch in channels], dtype=float)
    Fm, F0, Fp = F[g.edge_level].T
    if alg == "qmp":
        return np.stack([Fm, F0 - Fm, Fp - F0])
    if alg == "tmp":
        return np.stack([Fm, Fp - Fm])
    return F0[None, :].copy()


def _loo_products(terms, g: DeGraph):
    """Extrinsic (leave-one-out) product per edge over its CN row.

    Prefix/suffix cumulative products per row, so zero factors never hit a
    division.
    """
    out = np.empty_like(terms)
    for idx in g.row_groups:
        t = terms[idx]
        k, d = t.shape
        pre = np.ones((k, d + 1))
        pre[:, 1:] = np.cumprod(t, axis=1)
        suf = np.ones((k, d + 1))
        suf[:, :d] = np.cumprod(t[:, ::-1], axis=1)[:, ::-1]
        out[idx] = pre[:, :d] * suf[:, 1:]
    return out


def _implied(q):
    return np.clip(1.0 - q.sum(axis=0), 0.0, 1.0)


def _conserve(q, where):
    total = q.sum(axis=0)
    if q.min() < -1e-12 or total.max() > 1.0 + 1e-12:
        raise FloatingPointError(
            f"probability conservation violated in {where}: "
            f"min={q.min():.3e}, max sum={total.max():.6f}")
    return np.clip(q, 0.0, 1.0)


def de_cn_qmp(p, base):
    """CN update: sign-product with magnitude-min over the extrinsic edges."""
    g = _as_graph(base)
    p_mh, p_ml, p_pl = p
    A = _loo_products(1.0 - p_ml - p_pl, g)
    B = _loo_products(1.0 - 2.0 * p_mh - p_ml - p_pl, g)
    C = _loo_products(1.0 - 2.0 * p_mh - 2.0 * p_ml, g)
    q = np.stack([
        0.5 * (A - B),
        0.5 * (1.0 - A - C + B),
        0.5 * (1.0 - A + C - B),
    ])
    return _conserve(q, "de_cn_qmp")


def de_cn_tmp(p, base):
    g = _as_graph(base)
    p_m1, p_0 = p
    s = 1.0 - p_0
    d = 1.0 - p_0 - 2.0 * p_m1
    S = _loo_products(s, g)
    D = _loo_products(d, g)
    q = np.stack([0.5 * (S - D), 1.0 - S])
    return _conserve(q, "de_cn_tmp")


def de_cn_bmp(p, base):
    g = _as_graph(base)
    T = _loo_products(1.0 - 2.0 * p[0], g)
    return _conserve(0.5 * (1.0 - T)[None, :], "de_cn_bmp")


def de_weights(alg, q, w_max=W_MAX):
    """Log-ratio weighting factors from CN output probabilities.

    Returns (w, clamped). w rows are (w_L, w_H) for QMP and a single row
    for TMP/BMP. A zero numerator or denominator means DE has effectively
    converged on that edge type: the weight is clamped to +-w_max and
    flagged in the boolean mask; 0/0 yields weight 0.
    """
    _check_alg(alg)
    with np.errstate(divide="ignore", invalid="ignore"):
        if alg == "qmp":
            q_mh, q_ml, q_pl = q
            q_ph = _implied(q)
            w = np.stack([np.log(q_pl / q_ml), np.log(q_ph / q_mh)])
        elif alg == "tmp":
            q_m1, q_0 = q
            w = np.log(_implied(q) / q_m1)[None, :]
        else:
            q_m1 = q[0]
            w = np.log((1.0 - q_m1) / q_m1)[None, :]
    clamped = np.isinf(w) | (np.abs(w) > w_max)
    w = np.nan_to_num(w, nan=0.0, posinf=w_max, neginf=-w_max)
    return np.clip(w, -w_max, w_max), clamped


def _support(alg, q, w):
    """CN-message value/probability rows per edge, most negative first."""
    if alg == "qmp":
        vals = np.stack([-w[1], -w[0], w[0], w[1]])
        prob = np.concatenate([q, _implied(q)[None, :]])
    elif alg == "tmp":
        vals = np.stack([-w[0], np.zeros_like(w[0]), w[0]])
        prob = np.concatenate([q, _implied(q)[None, :]])
    else:
        vals = np.stack([-w[0], w[0]])
        prob = np.concatenate([q, (1.0 - q[0])[None, :]])
    return vals, prob


class _TermBudget:
    def __init__(self, limit):
        self.limit = int(limit)
        self.used = 0

    def charge(self, k, a, d):
        self.used += k * a**d
        if self.used > self.limit:
            raise ValueError(
                f"enumeration budget exceeded: {k} targets x {a}^{d} terms "
                f"brings the update to {self.used} > {self.limit}; lower the "
                f"graph degree or raise DeConfig.term_budget")


def _enumerate_sums(vals, prob, nbrs, budget: _TermBudget):
    """Outer-sum all message combinations of the edges listed per row."""
    k, d = nbrs.shape
    budget.charge(k, vals.shape[0], d)
    z = np.zeros((k, 1))
    p = np.ones((k, 1))
    for s in range(d):
        f = nbrs[:, s]
        z = (z[:, :, None] + vals[:, f].T[:, None, :]).reshape(k, -1)
        p = (p[:, :, None] * prob[:, f].T[:, None, :]).reshape(k, -1)
    return z, p


def _vn_update(alg, q, w, channels, g: DeGraph, cfg: DeConfig):
    vals, prob = _support(alg, q, w)
    k_rows = {"qmp": 3, "tmp": 2, "bmp": 1}[alg]
    out = np.empty((k_rows, g.n_edges))
    budget = _TermBudget(cfg.term_budget)
    for lv, targets, nbrs in g.vn_groups:
        z, p = _enumerate_sums(vals, prob, nbrs, budget)
        ch = channels[lv]
        if alg == "qmp":
            f1 = ch.cdf(-cfg.T - z)
            f2 = ch.cdf(-z)
            f3 = ch.cdf(cfg.T - z)
            out[0, targets] = (p * f1).sum(axis=1)
            out[1, targets] = (p * (f2 - f1)).sum(axis=1)
            out[2, targets] = (p * (f3 - f2)).sum(axis=1)
        elif alg == "tmp":
            f1 = ch.cdf(-cfg.T - z)
            f3 = ch.cdf(cfg.T - z)
            out[0, targets] = (p * f1).sum(axis=1)
            out[1, targets] = (p * (f3 - f1)).sum(axis=1)
        else:
            out[0, targets] = (p * ch.cdf(-z)).sum(axis=1)
    return _conserve(out, f"de_vn_{alg}")


def _app_update(alg, q, w, channels, g: DeGraph, cfg: DeConfig):
    vals, prob = _support(alg, q, w)
    papp = np.empty(g.n_cols)
    budget = _TermBudget(cfg.term_budget)
    for lv, col_ids, edges in g.app_groups:
        z, p = _enumerate_sums(vals, prob, edges, budget)
        papp[col_ids] = (p * channels[lv].cdf(-z)).sum(axis=1)
    return papp


def de_vn_qmp(q, w, channels, g, cfg: DeConfig = DeConfig()):
    """VN update: channel CDF shifted by every extrinsic weighted sum.

    For each edge, enumerates the joint distribution of the sum of the
    extrinsic CN messages mapped through the weights, then reads the
    quantizer-region masses of (channel LLR + sum) off the level's CDF.
    """
    return _vn_update("qmp", q, w, channels, _as_graph(g), cfg)


def de_vn_tmp(q, w, channels, g, cfg: DeConfig = DeConfig()):
    return _vn_update("tmp", q, w, channels, _as_graph(g), cfg)


def de_vn_bmp(q, w, channels, g, cfg: DeConfig = DeConfig()):
    return _vn_update("bmp", q, w, channels, _as_graph(g), cfg)


def de_app_qmp(q, w, channels, g, cfg: DeConfig = DeConfig()):
    """A-posteriori error probability per VN type, using all edges."""
    return _app_update("qmp", q, w, channels, _as_graph(g), cfg)


def de_app_tmp(q, w, channels, g, cfg: DeConfig = DeConfig()):
    return _app_update("tmp", q, w, channels, _as_graph(g), cfg)


def de_app_bmp(q, w, channels, g, cfg: DeConfig = DeConfig()):
    return _app_update("bmp", q, w, channels, _as_graph(g), cfg)


def message_sum_distribution(alg, q, w, edges, merge_tol=1e-9):
    """Discrete distribution of the weighted sum over the given edges.

    Support keys are rounded to merge_tol before merging, since symmetric
    weights make distinct combinations collide legitimately. Returns
    (support, mass) sorted by support value.
    """
    vals, prob = _support(alg, q, w)
    z = np.zeros(1)
    p = np.ones(1)
    for f in edges:
        z = (z[:, None] + vals[:, f][None, :]).ravel()
        p = (p[:, None] * prob[:, f][None, :]).ravel()
    key = np.round(z / merge_tol).astype(np.int64)
    uniq, first, inv = np.unique(key, return_index=True, return_inverse=True)
    mass = np.zeros(uniq.size)
    np.add.at(mass, inv, p)
    if abs(mass.sum() - 1.0) > 1e-9:
        raise FloatingPointError(
            f"distribution mass {mass.sum()} deviates from 1 by more than 1e-9")
    return z[first], mass


_CN = {"bmp": de_cn_bmp, "tmp": de_cn_tmp, "qmp": de_cn_qmp}


def _check_alg(alg):
    if alg not in ALGS:
        raise ValueError(f"unknown algorithm {alg!r}; one of {ALGS}")


# ---------------------------------------------------------------------------
# schedules


@dataclass
class WeightSchedule:
    """Iteration-indexed per-edge-type weighting factors.

    iterations[l] has shape (2, n_cells) for QMP (rows w_L, w_H) or
    (1, n_cells) for TMP/BMP; cells lists the (i, j) base coordinates in
    column order. Lookups past the last iteration reuse the final entry,
    since DE is near-stationary once converged.
    """

    alg: str
    t: float
    cells: list
    iterations: list
    ensemble_hash: str = ""
    mode_name: str = ""
    snr_db: float = float("nan")

    def __len__(self):
        return len(self.iterations)

    def weights_at(self, l: int) -> np.ndarray:
        if not self.iterations:
            raise ValueError("empty weight schedule")
        return self.iterations[min(l, len(self.iterations) - 1)]

    def cell_index(self) -> dict:
        return {cell: k for k, cell in enumerate(self.cells)}


def save_schedule(schedule: WeightSchedule, path) -> None:
    iters = []
    for w in schedule.iterations:
        iters.append({f"{i},{j}": [float(x) for x in w[:, k]]
                      for k, (i, j) in enumerate(schedule.cells)})
    doc = {
        "alg": schedule.alg,
        "ensembleHash": schedule.ensemble_hash,
        "mode": schedule.mode_name,
        "snrDb": schedule.snr_db,
        "T": schedule.t,
        "lMax": len(schedule.iterations),
        "iterations": iters,
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


def load_schedule(path) -> WeightSchedule:
    with open(path) as f:
        doc = json.load(f)
    for key in ("alg", "T", "iterations"):
        if key not in doc:
            raise ValueError(f"schedule file {path} missing field {key!r}")
    if not doc["iterations"]:
        raise ValueError(f"schedule file {path} has no iterations")
    cells = [tuple(int(x) for x in key.split(","))
             for key in doc["iterations"][0]]
    iters = []
    for entry in doc["iterations"]:
        w = np.array([entry[f"{i},{j}"] for i, j in cells], dtype=float).T
        iters.append(np.ascontiguousarray(w))
    return WeightSchedule(
        alg=doc["alg"], t=float(doc["T"]), cells=cells, iterations=iters,
        ensemble_hash=doc.get("ensembleHash", ""),
        mode_name=doc.get("mode", ""),
        snr_db=float(doc.get("snrDb", float("nan"))))


# ---------------------------------------------------------------------------
# full recursion


@dataclass
class DeResult:
    converged: bool
    iterations: int
    schedule: WeightSchedule
    trajectory: np.ndarray  # (iterations, n_vn_types) a-posteriori error
    final_probs: np.ndarray


def de_run(alg, base, mapping, channels, cfg: DeConfig = DeConfig(),
           target_types=None) -> DeResult:
    """Full DE recursion: init, then CN -> weights -> VN each iteration.

    Convergence is declared when the a-posteriori error probability over
    target_types (default: every VN type; window analyses pass the first
    spatial position's columns) drops below cfg.convergence_eps. Stops
    early on a fixed point, reporting non-convergence.
    """
    _check_alg(alg)
    g = _as_graph(base, mapping)
    _check_channels(channels, g)
    target = (np.arange(g.n_cols) if target_types is None
              else np.asarray(target_types, dtype=int))
    cn = _CN[alg]
    p = de_init(alg, channels, g, cfg)
    iters, traj = [], []
    converged = False
    it = 0
    for it in range(1, cfg.l_max + 1):
        q = cn(p, g)
        w, _ = de_weights(alg, q)
        iters.append(np.ascontiguousarray(w[:, g.cell_edge]))
        p_new = _vn_update(alg, q, w, channels, g, cfg)
        traj.append(_app_update(alg, q, w, channels, g, cfg))
        if traj[-1][target].max() < cfg.convergence_eps:
            converged = True
            p = p_new
            break
        if np.abs(p_new - p).max() < _STALL_EPS:
            p = p_new
            break
        p = p_new
    schedule = WeightSchedule(alg=alg, t=cfg.T, cells=g.cells,
                              iterations=iters,
                              ensemble_hash=base_hash(g.base, g.phi))
    return DeResult(converged=converged, iterations=it, schedule=schedule,
                    trajectory=np.array(traj), final_probs=p)


# ---------------------------------------------------------------------------
# thresholds


@dataclass
class ThresholdResult:
    ensemble: str
    mode: str
    alg: str
    window: int
    snr_db: float
    iterations: int  # DE iterations used at the converged endpoint
    probes: list = field(default_factory=list)  # (snr_db, converged, iters)


def _channels_at(mode, snr_db, cfg: DeConfig, n_samples, seed):
    if cfg.init_source == "surrogate":
        return cst.surrogate_channels(mode, snr_db)
    return cst.empirical_channels(mode, snr_db, n_samples, seed)


def mapping_for(e: ScEnsemble, base, mode) -> np.ndarray:
    """Bit mapping of a base matrix under the mode's signaling scheme."""
    scheme = "pas" if cst.mode_to_dict(mode)["shaping"] == "mb" else "uniform"
    return bit_mapping(base, mode.m, scheme, e.n_sc)


def threshold(alg, e: ScEnsemble, W: int, mode, cfg: DeConfig = DeConfig(),
              snr_lo=None, snr_hi=None, tol=0.01, n_samples=10**6, seed=0,
              log=None) -> ThresholdResult:
    """Decoding threshold of the windowed ensemble, bisected to tol dB.

    Every probe re-derives the bit-channel models at its SNR (the symbol
    distribution stays fixed per mode; only the noise variance moves).
    Requires a valid bracket: DE must diverge at snr_lo and converge at
    snr_hi.
    """
    if snr_lo is None or snr_hi is None or not snr_lo < snr_hi:
        raise ValueError("need snr_lo < snr_hi bracketing the threshold")
    base = window_base(e, W)
    phi = mapping_for(e, base, mode)
    g = DeGraph(base, phi)
    target = np.arange(e.n_sc)
    probes = []

    def probe(snr):
        chans = _channels_at(mode, snr, cfg, n_samples, seed)
        res = de_run(alg, g, phi, chans, cfg, target_types=target)
        probes.append((snr, res.converged, res.iterations))
        if log is not None:
            log(f"{e.name} {mode.name} {alg} probe {snr:.4f} dB -> "
                f"{'converged' if res.converged else 'diverged'} "
                f"({res.iterations} it)")
        return res

    if probe(snr_lo).converged:
        raise ValueError(
            f"invalid bracket: DE already converges at snr_lo={snr_lo} dB; "
            f"widen the bracket downward")
    res_hi = probe(snr_hi)
    if not res_hi.converged:
        raise ValueError(
            f"invalid bracket: DE does not converge at snr_hi={snr_hi} dB; "
            f"widen the bracket upward")
    lo, hi, hi_iters = snr_lo, snr_hi, res_hi.iterations
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        res = probe(mid)
        if res.converged:
            hi, hi_iters = mid, res.iterations
        else:
            lo = mid
    return ThresholdResult(ensemble=e.name, mode=mode.name, alg=alg,
                           window=W, snr_db=hi, iterations=hi_iters,
                           probes=probes)


def sweep_t(alg, e, W, mode, t_values, cfg: DeConfig = DeConfig(), **kw):
    """Threshold as a function of the quantizer parameter T (grid search)."""
    from dataclasses import replace
    out = []
    for t in t_values:
        res = threshold(alg, e, W, mode, replace(cfg, T=float(t)), **kw)
        out.append((float(t), res.snr_db))
    return out


def write_threshold_csv(results, path) -> None:
    """Threshold report rows; dB values carry 4 decimals."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["ensemble", "mode", "alg", "W", "threshold_dB",
                     "iterations_at_threshold"])
        for r in results:
            wr.writerow([r.ensemble, r.mode, r.alg, r.window,
                         f"{r.snr_db:.4f}", r.iterations])
