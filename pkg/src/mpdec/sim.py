"""Monte Carlo FER/BER estimation on lifted codes.

Transmission is modeled with the standard all-zero reduction: the channel
adapter makes every bit channel symmetric, so for a linear code and a
sign-symmetric decoder the error rate conditioned on any codeword equals
the error rate conditioned on the all-zero word. Each frame draws fresh
symbols per VN, computes the exact bit-metric LLRs, flips signs where the
transmitted bit is 1, and hands the result to the decoder.

Per-frame RNG streams are derived statelessly from
(masterSeed, snrIndex, frameIndex), so results do not depend on how frames
are scheduled across workers, and stopping is defined on the ordered frame
prefix for the same reason.
"""

import csv
import json
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import constellation as cst
from .protograph import LiftedCode, code_hash
from .de import WeightSchedule
from .decoders import DecoderGraph, decode, decode_bp


@dataclass
class SimPlan:
    mode: cst.SignalingMode
    code: LiftedCode
    mapping: np.ndarray          # bit level per base column, 1-based
    alg: str
    schedule: WeightSchedule | None
    snr_grid: list
    max_frames: int = 10**6
    min_frame_errors: int = 50
    master_seed: int = 0
    l_max: int | None = None     # default: one pass over the schedule
    early_exit: bool = True
    grouped_symbols: bool = False
    ensemble: str = ""           # labels carried through to the records
    extra: dict = field(default_factory=dict)


@dataclass
class FerRecord:
    mode: str
    ensemble: str
    alg: str
    snr_db: float
    frames: int
    frame_errors: int
    bit_errors: int
    fer: float
    ber: float
    seed: int
    wall_time: float


def validate_plan(plan: SimPlan) -> None:
    """Reject bad plan combinations before any frame is decoded."""
    if plan.alg not in ("bmp", "tmp", "qmp", "bp"):
        raise ValueError(f"plan.alg: unknown algorithm {plan.alg!r}")
    if plan.alg != "bp":
        if plan.schedule is None:
            raise ValueError("plan.schedule: required for quantized decoding")
        if plan.schedule.alg != plan.alg:
            raise ValueError(
                f"plan.schedule.alg: {plan.schedule.alg!r} does not match "
                f"plan.alg {plan.alg!r}")
        have = set(plan.schedule.cells)
        ii, jj = np.nonzero(plan.code.base)
        missing = [c for c in zip(ii.tolist(), jj.tolist()) if c not in have]
        if missing:
            raise ValueError(
                f"plan.schedule.cells: no weights for edge types {missing[:4]}")
    mapping = np.asarray(plan.mapping, dtype=int)
    if mapping.shape != (plan.code.base.shape[1],):
        raise ValueError(
            f"plan.mapping: length {mapping.shape} does not match "
            f"{plan.code.base.shape[1]} base columns")
    if mapping.min() < 1 or mapping.max() > plan.mode.m:
        raise ValueError(
            f"plan.mapping: levels must lie in 1..{plan.mode.m}")
    snrs = np.asarray(plan.snr_grid, dtype=float)
    if snrs.size == 0 or not np.isfinite(snrs).all():
        raise ValueError("plan.snr_grid: need at least one finite SNR")
    if plan.max_frames < 1 or plan.min_frame_errors < 1:
        raise ValueError("plan.stop: maxFrames and minFrameErrors must be >= 1")
    if plan.grouped_symbols:
        n_c = plan.code.base.shape[1] * plan.code.Q
        counts = np.bincount(mapping - 1, minlength=plan.mode.m) * plan.code.Q
        if len(set(counts.tolist())) != 1 or n_c % plan.mode.m:
            raise ValueError(
                "plan.grouped_symbols: needs the same number of VNs on "
                "every bit level")


def expand_levels(mapping, Q: int) -> np.ndarray:
    """Bit level (0-based) of every lifted VN; VN j belongs to base column
    j // Q, matching the lift's node ordering."""
    return np.repeat(np.asarray(mapping, dtype=int) - 1, Q)


def sample_frame(mode: cst.SignalingMode, levels: np.ndarray, rng,
                 grouped: bool = False) -> np.ndarray:
    """One all-zero-equivalent frame of decoder-input LLRs.

    mode must be pinned to an SNR (sigma2 set). Default draws an
    independent symbol per VN, which reproduces the exact marginal law of
    each bit channel and matches what the DE recursion models. grouped
    instead reuses one symbol draw across the m VNs that would share it,
    keeping marginals identical but adding intra-symbol dependence.
    """
    if mode.sigma2 is None:
        raise ValueError("mode not pinned to an SNR; call mode.at_snr first")
    const, probs = mode.const, mode.probs
    sigma = float(np.sqrt(mode.sigma2))
    out = np.empty(levels.size)
    if grouped:
        n_sym = levels.size // mode.m
        idx = rng.choice(const.size, size=n_sym, p=probs)
        y = const.points[idx] + sigma * rng.standard_normal(n_sym)
        for k in range(mode.m):
            sel = np.flatnonzero(levels == k)
            l = cst.bit_llr_level(y, mode, k + 1)
            out[sel] = cst.symmetrize(l, const.labels[idx, k])
        return out
    for k in sorted(set(levels.tolist())):
        sel = np.flatnonzero(levels == k)
        idx = rng.choice(const.size, size=sel.size, p=probs)
        y = const.points[idx] + sigma * rng.standard_normal(sel.size)
        l = cst.bit_llr_level(y, mode, k + 1)
        out[sel] = cst.symmetrize(l, const.labels[idx, k])
    return out


def frame_rng(master_seed: int, snr_index: int, frame_index: int):
    return np.random.default_rng(
        np.random.SeedSequence((master_seed, snr_index, frame_index)))


def run_fer(plan: SimPlan, log=None) -> list:
    """Decode frames per SNR point until minFrameErrors or maxFrames.

    Stopping depends only on the ordered frame prefix: the run ends at the
    smallest frame count whose prefix holds minFrameErrors errors, so a
    parallel executor that decodes ahead must discard results beyond that
    boundary to report identical records.
    """
    validate_plan(plan)
    g = DecoderGraph(plan.code)
    levels = expand_levels(plan.mapping, plan.code.Q)
    if plan.alg == "bp":
        l_max = plan.l_max if plan.l_max is not None else 100
    else:
        l_max = (plan.l_max if plan.l_max is not None
                 else len(plan.schedule.iterations))
    records = []
    for s, snr in enumerate(plan.snr_grid):
        mode_at = plan.mode.at_snr(float(snr))
        t0 = time.perf_counter()
        frames = frame_errors = bit_errors = 0
        while frames < plan.max_frames and frame_errors < plan.min_frame_errors:
            rng = frame_rng(plan.master_seed, s, frames)
            l_dec = sample_frame(mode_at, levels, rng,
                                 grouped=plan.grouped_symbols)
            if plan.alg == "bp":
                res = decode_bp(g, l_dec, l_max=l_max,
                                early_exit=plan.early_exit)
            else:
                res = decode(plan.alg, g, l_dec, plan.schedule, l_max=l_max,
                             early_exit=plan.early_exit)
            frames += 1
            errs = int(res.bits.sum())
            if errs:
                frame_errors += 1
                bit_errors += errs
            if log and frames % 200 == 0:
                log(f"snr={snr:.4f} frames={frames} errors={frame_errors}")
        wall = time.perf_counter() - t0
        records.append(FerRecord(
            mode=plan.mode.name, ensemble=plan.ensemble, alg=plan.alg,
            snr_db=float(snr), frames=frames, frame_errors=frame_errors,
            bit_errors=bit_errors, fer=frame_errors / frames,
            ber=bit_errors / (frames * levels.size),
            seed=plan.master_seed, wall_time=wall))
        if log:
            r = records[-1]
            log(f"snr={snr:.4f} done: fer={r.fer:.3e} "
                f"({r.frame_errors}/{r.frames}) in {wall:.1f}s")
    return records


def cp_interval(errors: int, trials: int, confidence: float = 0.95):
    """Clopper-Pearson binomial interval for an error count."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    alpha = 1.0 - confidence
    lo = 0.0 if errors == 0 else float(
        stats.beta.ppf(alpha / 2, errors, trials - errors + 1))
    hi = 1.0 if errors == trials else float(
        stats.beta.ppf(1 - alpha / 2, errors + 1, trials - errors))
    return lo, hi


# ---------------------------------------------------------------------------
# artifacts


FER_COLUMNS = ("mode", "ensemble", "alg", "snr_db", "frames", "frame_errors",
               "bit_errors", "fer", "ber", "seed")


def write_fer_csv(records, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(FER_COLUMNS)
        for r in records:
            w.writerow([r.mode, r.ensemble, r.alg, f"{r.snr_db:.4f}",
                        r.frames, r.frame_errors, r.bit_errors,
                        f"{r.fer:.6e}", f"{r.ber:.6e}", r.seed])


def read_fer_csv(path) -> list:
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append(FerRecord(
                mode=row["mode"], ensemble=row["ensemble"], alg=row["alg"],
                snr_db=float(row["snr_db"]), frames=int(row["frames"]),
                frame_errors=int(row["frame_errors"]),
                bit_errors=int(row["bit_errors"]), fer=float(row["fer"]),
                ber=float(row["ber"]), seed=int(row["seed"]),
                wall_time=float("nan")))
    return out


def plan_manifest(plan: SimPlan, records=None) -> dict:
    """Everything needed to reproduce a run (the schedule itself is saved
    separately; its identity is pinned here)."""
    d = {
        "mode": cst.mode_to_dict(plan.mode),
        "modeHash": cst.mode_hash(plan.mode),
        "ensemble": plan.ensemble,
        "code": {
            "hash": code_hash(plan.code),
            "Q": plan.code.Q,
            "n": plan.code.base.shape[1] * plan.code.Q,
            "girthTarget": plan.code.girth_target,
            "girthOk": bool(plan.code.girth_ok),
            "seed": plan.code.seed,
        },
        "mapping": np.asarray(plan.mapping, dtype=int).tolist(),
        "alg": plan.alg,
        "schedule": None if plan.schedule is None else {
            "alg": plan.schedule.alg,
            "iterations": len(plan.schedule.iterations),
            "T": plan.schedule.t,
            "snrDb": plan.schedule.snr_db,
            "ensembleHash": plan.schedule.ensemble_hash,
        },
        "snrGridDb": [float(x) for x in plan.snr_grid],
        "stop": {"maxFrames": plan.max_frames,
                 "minFrameErrors": plan.min_frame_errors},
        "masterSeed": plan.master_seed,
        "lMax": plan.l_max,
        "earlyExit": plan.early_exit,
        "groupedSymbols": plan.grouped_symbols,
    }
    if plan.extra:
        d["extra"] = plan.extra
    if records is not None:
        # wall times stay out of the manifest so identical runs produce
        # byte-identical artifacts
        d["results"] = [
            {"snrDb": r.snr_db, "frames": r.frames,
             "frameErrors": r.frame_errors, "fer": r.fer, "ber": r.ber}
            for r in records]
    return d


def write_manifest(plan: SimPlan, path, records=None) -> None:
    with open(path, "w") as f:
        json.dump(plan_manifest(plan, records), f, indent=1)
        f.write("\n")
