"""Protograph pipeline: spatially coupled base matrices, bit-level to
VN-type mappings, and circulant lifting with girth optimization.

Base matrices are plain integer numpy arrays (entry b_ij = number of
parallel edges between CN type i and VN type j). The coupled construction
stacks all-ones 1 x (dc/dv) submatrices over a memory of mu = dv - 1.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ScEnsemble:
    """(dv, dc)-regular spatially coupled ensemble descriptor."""

    dv: int
    dc: int

    @property
    def mu(self) -> int:
        return self.dv - 1

    @property
    def n_sc(self) -> int:
        """VN types per spatial position (block-column width)."""
        return self.dc // self.dv

    @property
    def m_sc(self) -> int:
        return 1

    def submatrix(self) -> np.ndarray:
        return np.ones((1, self.n_sc), dtype=int)

    @property
    def name(self) -> str:
        return f"B{self.dv},{self.dc}"


def sc_ensemble(dv: int, dc: int) -> ScEnsemble:
    if dc % dv != 0:
        raise ValueError(f"dc={dc} must be divisible by dv={dv}")
    if dv < 2:
        raise ValueError(f"dv must be at least 2, got {dv}")
    return ScEnsemble(dv=dv, dc=dc)


def coupled_base(e: ScEnsemble, S: int):
    """Terminated coupled base matrix over S spatial positions and its rate.

    Returns the block-banded ((mu+S) x S*n_sc) matrix where position s
    occupies block column s and block rows s..s+mu, together with the
    design rate 1 - (1 + mu/S) * (m_sc/n_sc) (termination rate loss).
    """
    if S < e.mu + 1:
        raise ValueError(f"S={S} too small, need at least mu+1={e.mu + 1}")
    B = np.zeros((e.mu + S, S * e.n_sc), dtype=int)
    for s in range(S):
        B[s:s + e.mu + 1, s * e.n_sc:(s + 1) * e.n_sc] = 1
    rate = 1.0 - (1.0 + e.mu / S) * (e.m_sc / e.n_sc)
    return B, rate


def window_base(e: ScEnsemble, W: int) -> np.ndarray:
    """First W block rows and block columns of the (unterminated) chain."""
    if W < e.mu + 1:
        raise ValueError(f"window W={W} must be at least mu+1={e.mu + 1}")
    B = np.zeros((W, W * e.n_sc), dtype=int)
    for s in range(W):
        top = s * e.n_sc
        B[s:min(s + e.mu + 1, W), top:top + e.n_sc] = 1
    return B


def bit_mapping(base: np.ndarray, m: int, scheme: str,
                per_position: int) -> np.ndarray:
    """Assign a bit level in 1..m to every VN type of the base matrix.

    per_position is the block-column width n_sc; each bit level must land
    on the same number of VN types. uniform: levels cycle 1..m within each
    position. pas: the last n_sc/m types of each position carry the sign
    level 1 (parity bits of the systematic encoder), the rest cycle 2..m.
    """
    n_p = base.shape[1]
    if per_position % m != 0 or n_p % per_position != 0:
        raise ValueError(
            f"need m | per_position | n_p, got m={m}, "
            f"per_position={per_position}, n_p={n_p}")
    t = np.arange(n_p) % per_position
    if scheme == "uniform":
        phi = t % m + 1
    elif scheme == "pas":
        if m == 1:
            phi = np.ones(n_p, dtype=int)
        else:
            n_sign = per_position // m
            phi = np.where(t >= per_position - n_sign, 1, 2 + t % (m - 1))
    else:
        raise ValueError(f"unknown mapping scheme {scheme!r}")
    return phi.astype(int)


# ---------------------------------------------------------------------------
# circulant lifting


@dataclass
class LiftedCode:
    """Cyclic lift of a base matrix.

    shifts[(i, j)] lists b_ij distinct circulant shifts; circulant P^s maps
    VN slot v of block j to CN slot (v + s) mod Q of block i. girth_ok says
    whether all cycle constraints up to girth_target were satisfied;
    achieved_girth is the verified lower bound (4 or 6 when best-effort).
    """

    Q: int
    base: np.ndarray
    shifts: dict = field(default_factory=dict)
    girth_target: int = 4
    girth_ok: bool = True
    achieved_girth: int = 4
    seed: int = 0

    @property
    def n_c(self) -> int:
        return self.Q * self.base.shape[1]

    @property
    def m_c(self) -> int:
        return self.Q * self.base.shape[0]

    def edges(self):
        """Lifted edge arrays (cn, vn, base row, base col), VN-major order."""
        cn, vn, bi, bj = [], [], [], []
        for (i, j), ss in sorted(self.shifts.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            for s in ss:
                v = np.arange(self.Q)
                vn.append(j * self.Q + v)
                cn.append(i * self.Q + (v + s) % self.Q)
                bi.append(np.full(self.Q, i))
                bj.append(np.full(self.Q, j))
        return (np.concatenate(cn), np.concatenate(vn),
                np.concatenate(bi), np.concatenate(bj))


def code_hash(code: LiftedCode) -> str:
    blob = json.dumps({"Q": code.Q, "base": code.base.tolist(),
                       "shifts": sorted((list(k), list(v))
                                        for k, v in code.shifts.items())},
                      sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _unit_edges(base):
    """Expand parallel edges: returns list of (i, j, parallel_index)."""
    out = []
    rows, cols = base.shape
    for j in range(cols):
        for i in range(rows):
            for p in range(base[i, j]):
                out.append((i, j, p))
    return out


def _cycle_conditions(base, eid, girth_target):
    """Collect modular constraints forbidding cycles shorter than the target.

    A length-4 cycle through cells (i1,j1),(i2,j1),(i2,j2),(i1,j2) exists
    iff the alternating shift sum vanishes mod Q; a length-6 cycle uses six
    cells over a row triple. Conditions are returned as (members, signs)
    with alternating +1/-1 signs in member order.
    """
    conds = []
    rows, cols = base.shape
    present = base > 0
    if girth_target >= 6:
        col_sets = [np.flatnonzero(present[i]) for i in range(rows)]
        for i1 in range(rows):
            for i2 in range(i1 + 1, rows):
                ov = np.intersect1d(col_sets[i1], col_sets[i2],
                                    assume_unique=True)
                for a in range(len(ov)):
                    for b in range(a + 1, len(ov)):
                        j1, j2 = ov[a], ov[b]
                        conds.append(([eid[i1, j1], eid[i2, j1],
                                       eid[i2, j2], eid[i1, j2]],
                                      [1, -1, 1, -1]))
    if girth_target >= 8:
        if base.max() > 1:
            raise ValueError(
                "girth target 8 is supported for 0/1 base matrices only")
        col_sets = [set(np.flatnonzero(present[i])) for i in range(rows)]
        for a in range(rows):
            for b in range(a + 1, rows):
                ov_ab = sorted(col_sets[a] & col_sets[b])
                if not ov_ab:
                    continue
                for c in range(b + 1, rows):
                    ov_bc = sorted(col_sets[b] & col_sets[c])
                    ov_ac = sorted(col_sets[a] & col_sets[c])
                    for jab in ov_ab:
                        for jbc in ov_bc:
                            if jbc == jab:
                                continue
                            for jac in ov_ac:
                                if jac == jab or jac == jbc:
                                    continue
                                conds.append(
                                    ([eid[a, jab], eid[b, jab],
                                      eid[b, jbc], eid[c, jbc],
                                      eid[c, jac], eid[a, jac]],
                                     [1, -1, 1, -1, 1, -1]))
    return conds


def _parallel_pair_conditions(base, cell_edges, girth_target):
    """Extra 4-cycle constraints created by parallel edges.

    Two shifts a, b of one cell give a 4-cycle iff 2(a-b) = 0 mod Q; pairs
    of double cells sharing a row or a column give one iff the pair shift
    differences agree. Returned as callables evaluated at placement time.
    """
    out = []  # (trigger_edge, fn(shifts, Q) -> iterable of forbidden values)
    if girth_target < 6:
        return out
    rows, cols = base.shape
    multi = [(i, j) for i in range(rows) for j in range(cols)
             if base[i, j] > 1]
    for (i, j) in multi:
        es = cell_edges[(i, j)]
        for a in range(len(es)):
            for b in range(a + 1, len(es)):
                ea, eb = es[a], es[b]

                def forb(shifts, Q, ea=ea):
                    vals = [shifts[ea]]
                    if Q % 2 == 0:
                        vals.append((shifts[ea] + Q // 2) % Q)
                    return vals

                out.append((eb, forb))
    # double cells sharing a column or a row
    for x in range(len(multi)):
        for y in range(x + 1, len(multi)):
            (i1, j1), (i2, j2) = multi[x], multi[y]
            if (i1 == i2) == (j1 == j2):
                continue  # need exactly one shared index
            es1, es2 = cell_edges[multi[x]], cell_edges[multi[y]]
            for a1 in range(len(es1)):
                for a2 in range(a1 + 1, len(es1)):
                    for b1 in range(len(es2)):
                        for b2 in range(b1 + 1, len(es2)):
                            e_list = [es1[a1], es1[a2], es2[b1], es2[b2]]
                            out.append((max(e_list),
                                        _pair_solver(e_list, max(e_list))))
    return out


def _pair_solver(e_list, trig):
    """Forbidden values for s[trig] from (s_a1 - s_a2) = +-(s_b1 - s_b2)."""
    a1, a2, b1, b2 = e_list

    def forb(shifts, Q):
        vals = set()
        for sgn in (1, -1):
            # s_a1 - s_a2 - sgn*(s_b1 - s_b2) = 0, solve for the trigger
            coef = {a1: 1, a2: -1, b1: -sgn, b2: sgn}
            rest = sum(c * shifts[e] for e, c in coef.items() if e != trig)
            c_t = coef[trig]
            # c_t is +-1 so the solution is unique mod Q
            vals.add((-c_t * rest) % Q)
        return vals

    return forb


def lift(base: np.ndarray, Q: int, girth_target: int = 8,
         max_tries: int = 40, seed: int = 0) -> LiftedCode:
    """Assign circulant shifts, avoiding short cycles by sequential search.

    Edges are placed column-major; each placement excludes every shift value
    that would close a cycle shorter than girth_target with already-placed
    edges, choosing uniformly among the survivors. Dead ends trigger a
    restart (fresh random choices, same seed stream) up to max_tries; the
    final attempt falls back to least-violation choices and the result is
    flagged via girth_ok / achieved_girth.
    """
    base = np.asarray(base, dtype=int)
    if base.min() < 0 or (base.sum(axis=0) == 0).any():
        raise ValueError("base matrix must be non-negative with no zero column")
    if Q < max(1, base.max()):
        raise ValueError(f"Q={Q} below the largest parallel-edge count")
    if girth_target not in (4, 6, 8):
        raise ValueError("supported girth targets: 4, 6, 8")

    units = _unit_edges(base)
    E = len(units)
    eid = -np.ones(base.shape, dtype=int)
    cell_edges = {}
    for idx, (i, j, p) in enumerate(units):
        if p == 0:
            eid[i, j] = idx
        cell_edges.setdefault((i, j), []).append(idx)

    conds = _cycle_conditions(base, eid, girth_target)
    pair_conds = _parallel_pair_conditions(base, cell_edges, girth_target)
    # distinct shifts within a cell are always required (simple lifted graph)
    for (i, j), es in cell_edges.items():
        for a in range(len(es)):
            for b in range(a + 1, len(es)):
                pair_conds.append(
                    (max(es[a], es[b]),
                     (lambda ea: lambda shifts, Q: [shifts[ea]])(min(es[a], es[b]))))

    # group modular conditions by their last-placed (trigger) edge
    by_trigger = [[] for _ in range(E)]
    for members, signs in conds:
        trig = max(members)
        others = [(m, s) for m, s in zip(members, signs) if m != trig]
        own = signs[members.index(trig)]
        by_trigger[trig].append((np.array([m for m, _ in others]),
                                 np.array([s for _, s in others]), own))
    trig_ids = [None] * E
    trig_signs = [None] * E
    trig_own = [None] * E
    for t in range(E):
        if by_trigger[t]:
            width = max(len(x[0]) for x in by_trigger[t])
            ids = np.zeros((len(by_trigger[t]), width), dtype=int)
            sgn = np.zeros((len(by_trigger[t]), width), dtype=int)
            for r, (o_ids, o_sgn, _) in enumerate(by_trigger[t]):
                ids[r, :len(o_ids)] = o_ids  # zero sign masks the padding
                sgn[r, :len(o_sgn)] = o_sgn
            trig_ids[t] = ids
            trig_signs[t] = sgn
            trig_own[t] = np.array([x[2] for x in by_trigger[t]])
    pair_by_trigger = [[] for _ in range(E)]
    for trig, fn in pair_conds:
        pair_by_trigger[trig].append(fn)

    rng = np.random.default_rng(seed)
    shifts = np.zeros(E, dtype=int)

    def forbidden_for(t):
        vals = set()
        if trig_ids[t] is not None:
            rest = (trig_signs[t] * shifts[trig_ids[t]]).sum(axis=1)
            vals.update(((-trig_own[t] * rest) % Q).tolist())
        for fn in pair_by_trigger[t]:
            vals.update(int(v) % Q for v in fn(shifts, Q))
        return vals

    best_effort = False
    for attempt in range(max_tries):
        best_effort = attempt == max_tries - 1
        ok = True
        violations = 0
        for t in range(E):
            forb = forbidden_for(t)
            if len(forb) < Q:
                allowed = np.setdiff1d(np.arange(Q), np.fromiter(forb, int,
                                                                 len(forb)))
                shifts[t] = int(rng.choice(allowed))
            elif best_effort:
                # count how often each value appears as forbidden, take a min
                counts = np.zeros(Q, dtype=int)
                if trig_ids[t] is not None:
                    rest = (trig_signs[t] * shifts[trig_ids[t]]).sum(axis=1)
                    np.add.at(counts, (-trig_own[t] * rest) % Q, 1)
                for fn in pair_by_trigger[t]:
                    for v in fn(shifts, Q):
                        counts[int(v) % Q] += 1
                shifts[t] = int(np.flatnonzero(counts == counts.min())[0])
                violations += int(counts[shifts[t]])
            else:
                ok = False
                break
        if ok:
            break

    girth_ok = ok and violations == 0 if best_effort else ok
    achieved = girth_target
    if not girth_ok:
        achieved = _verify_girth(base, eid, cell_edges, shifts, Q,
                                 girth_target)
    out_shifts = {cell: tuple(int(shifts[e]) for e in es)
                  for cell, es in cell_edges.items()}
    return LiftedCode(Q=Q, base=base, shifts=out_shifts,
                      girth_target=girth_target, girth_ok=bool(girth_ok),
                      achieved_girth=int(achieved), seed=seed)


def _verify_girth(base, eid, cell_edges, shifts, Q, girth_target):
    """Largest g in {4, 6, girth_target} with no cycle shorter than g."""
    for g, tgt in ((4, 6), (6, 8)):
        if girth_target < tgt:
            break
        conds = _cycle_conditions(base, eid, tgt)
        for members, signs in conds:
            if len(members) == (4 if tgt == 6 else 6):
                if sum(s * shifts[m] for m, s in zip(members, signs)) % Q == 0:
                    return g
        for trig, fn in _parallel_pair_conditions(base, cell_edges, tgt):
            if shifts[trig] in {int(v) % Q for v in fn(shifts, Q)}:
                return g
    return girth_target


# ---------------------------------------------------------------------------
# persistence


def save_code(code: LiftedCode, path) -> None:
    doc = {"Q": code.Q, "m_p": int(code.base.shape[0]),
           "n_p": int(code.base.shape[1]),
           "girth_target": code.girth_target, "girth_ok": code.girth_ok,
           "achieved_girth": code.achieved_girth, "seed": code.seed,
           "entries": [[int(i), int(j), list(map(int, ss))]
                       for (i, j), ss in sorted(code.shifts.items())]}
    with open(path, "w") as f:
        json.dump(doc, f)
        f.write("\n")


def load_code(path) -> LiftedCode:
    with open(path) as f:
        doc = json.load(f)
    base = np.zeros((doc["m_p"], doc["n_p"]), dtype=int)
    shifts = {}
    for i, j, ss in doc["entries"]:
        base[i, j] = len(ss)
        shifts[(i, j)] = tuple(ss)
    return LiftedCode(Q=doc["Q"], base=base, shifts=shifts,
                      girth_target=doc["girth_target"],
                      girth_ok=doc["girth_ok"],
                      achieved_girth=doc["achieved_girth"],
                      seed=doc.get("seed", 0))


def to_alist(code: LiftedCode) -> str:
    """Conventional alist text export (1-based, zero padded rows)."""
    cn, vn, _, _ = code.edges()
    n, m = code.n_c, code.m_c
    vn_lists = [[] for _ in range(n)]
    cn_lists = [[] for _ in range(m)]
    for c, v in zip(cn, vn):
        vn_lists[v].append(c + 1)
        cn_lists[c].append(v + 1)
    dv_max = max(map(len, vn_lists))
    dc_max = max(map(len, cn_lists))
    lines = [f"{n} {m}", f"{dv_max} {dc_max}",
             " ".join(str(len(x)) for x in vn_lists),
             " ".join(str(len(x)) for x in cn_lists)]
    for lst in vn_lists:
        lines.append(" ".join(map(str, sorted(lst) + [0] * (dv_max - len(lst)))))
    for lst in cn_lists:
        lines.append(" ".join(map(str, sorted(lst) + [0] * (dc_max - len(lst)))))
    return "\n".join(lines) + "\n"
