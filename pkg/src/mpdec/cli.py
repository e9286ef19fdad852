"""Command-line front end: modes and ensembles in, thresholds, weight
schedules, lifted codes and FER tables out.

Every command writes a machine-readable artifact (CSV or JSON) into --out
and prints a short human summary. Report-style commands also render a
matplotlib figure next to the delimited output unless --no-plot is given.
Exit codes: 0 success, 2 input/config validation failure, 1 runtime
failure.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from . import constellation as cst
from . import de
from . import protograph as proto
from . import sim


class CliError(ValueError):
    """Invalid input or configuration; maps to exit code 2."""


# ---------------------------------------------------------------------------
# parsing helpers


def _parse_ensemble(text: str):
    s = text.strip().lstrip("Bb")
    for sep in (",", "x", ":"):
        if sep in s:
            parts = s.split(sep)
            break
    else:
        raise CliError(f"--ensemble: expected 'dv,dc', got {text!r}")
    try:
        dv, dc = (int(p) for p in parts)
    except (TypeError, ValueError):
        raise CliError(f"--ensemble: expected two integers, got {text!r}")
    try:
        return proto.sc_ensemble(dv, dc)
    except ValueError as err:
        raise CliError(f"--ensemble: {err}")


def _parse_snr_grid(text: str):
    s = text.strip()
    if ":" in s:
        try:
            lo, hi, step = (float(x) for x in s.split(":"))
        except ValueError:
            raise CliError(f"--snr: expected 'lo:hi:step', got {text!r}")
        if step <= 0 or hi < lo:
            raise CliError("--snr: need step > 0 and hi >= lo")
        n = int(round((hi - lo) / step))
        grid = [lo + i * step for i in range(n + 1) if lo + i * step <= hi + 1e-9]
        return [round(x, 10) for x in grid]
    try:
        return [float(x) for x in s.split(",")]
    except ValueError:
        raise CliError(f"--snr: expected numbers, got {text!r}")


def _mode_of(args) -> cst.SignalingMode:
    name = args.mode
    if name in cst.preset_names():
        return cst.preset_mode(name)
    p = Path(name)
    if p.is_file():
        try:
            return cst.load_mode(p)
        except (ValueError, KeyError, json.JSONDecodeError) as err:
            raise CliError(f"--mode: bad mode file {name}: {err}")
    raise CliError(
        f"--mode: {name!r} is neither a preset {cst.preset_names()} "
        f"nor a mode file")


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _savefig(fig, path) -> None:
    # fixed metadata so identical runs give byte-identical PNGs
    fig.savefig(path, dpi=120, metadata={"Software": "mpdec"})
    plt.close(fig)


def _say(msg: str) -> None:
    print(msg)


# ---------------------------------------------------------------------------
# rates


def cmd_rates(args) -> int:
    modes = ([_mode_of(args)] if args.mode
             else [cst.preset_mode(n) for n in cst.preset_names()])
    out = _outdir(args)
    rows = []
    for mode in modes:
        if args.snr is not None:
            snr = float(args.snr)
        else:
            rate = float(args.rate) if args.rate is not None else mode.rtx
            try:
                snr = cst.rbmd_inv(mode, rate)
            except ValueError as err:
                raise CliError(f"--rate: {mode.name}: {err}")
        rows.append((mode, snr))
        _say(f"{mode.name}: R_bmd({snr:.4f} dB) = {cst.rbmd(mode, snr):.4f} "
             f"bpcu (Rtx = {mode.rtx})")

    csv_path = out / "rates.csv"
    with open(csv_path, "w") as f:
        f.write("mode,m,rc,rtx,snr_db,rbmd\n")
        for mode, snr in rows:
            f.write(f"{mode.name},{mode.m},{mode.rc:.6f},{mode.rtx},"
                    f"{snr:.4f},{cst.rbmd(mode, snr):.6f}\n")
    _say(f"wrote {csv_path}")

    if not args.no_plot:
        fig, ax = plt.subplots(figsize=(6, 4))
        lo = min(s for _, s in rows) - 2.0
        hi = max(s for _, s in rows) + 2.0
        grid = np.linspace(lo, hi, 50)
        for mode, snr in rows:
            ax.plot(grid, [cst.rbmd(mode, g) for g in grid], label=mode.name)
            ax.plot([snr], [cst.rbmd(mode, snr)], "ko", ms=4)
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("R_bmd (bpcu)")
        ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        _savefig(fig, out / "rates.png")
        _say(f"wrote {out / 'rates.png'}")
    return 0


# ---------------------------------------------------------------------------
# threshold


def _default_bracket(mode) -> tuple:
    # every decoding threshold sits above the mode's BMD limit
    lo = cst.rbmd_inv(mode, mode.rtx) + 0.05
    return lo, lo + 4.0


def cmd_threshold(args) -> int:
    e = _parse_ensemble(args.ensemble)
    mode = _mode_of(args)
    out = _outdir(args)
    cfg = de.DeConfig(T=args.T, l_max=args.lmax, init_source=args.init)
    lo, hi = _default_bracket(mode)
    if args.snr_lo is not None:
        lo = args.snr_lo
    if args.snr_hi is not None:
        hi = args.snr_hi
    if not lo < hi:
        raise CliError(f"--snr-lo/--snr-hi: need lo < hi, got [{lo}, {hi}]")
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    res = de.threshold(args.alg, e, args.window, mode, cfg,
                       snr_lo=lo, snr_hi=hi, tol=args.tol,
                       n_samples=args.samples, seed=args.seed, log=log)
    _say(f"{e.name} {mode.name} {args.alg} W={args.window}: "
         f"threshold = {res.snr_db:.4f} dB "
         f"({res.iterations} DE iterations at the threshold)")
    csv_path = out / "threshold.csv"
    de.write_threshold_csv([res], csv_path)
    _say(f"wrote {csv_path}")

    if not args.no_plot:
        fig, ax = plt.subplots(figsize=(6, 4))
        conv = [(s, i) for s, c, i in res.probes if c]
        div = [(s, i) for s, c, i in res.probes if not c]
        if div:
            ax.semilogy(*zip(*div), "rx", label="diverged")
        if conv:
            ax.semilogy(*zip(*conv), "go", label="converged")
        ax.axvline(res.snr_db, color="k", ls="--", lw=1,
                   label=f"threshold {res.snr_db:.4f} dB")
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("DE iterations")
        ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        _savefig(fig, out / "threshold.png")
        _say(f"wrote {out / 'threshold.png'}")
    return 0


# ---------------------------------------------------------------------------
# weights


def cmd_weights(args) -> int:
    e = _parse_ensemble(args.ensemble)
    mode = _mode_of(args)
    out = _outdir(args)
    if (args.window is None) == (args.S is None):
        raise CliError("--window/--S: give exactly one of them")
    if args.window is not None:
        base = proto.window_base(e, args.window)
        target = np.arange(e.n_sc)
        label = f"W={args.window}"
    else:
        base, _ = proto.coupled_base(e, args.S)
        target = None
        label = f"S={args.S}"
    phi = de.mapping_for(e, base, mode)
    cfg = de.DeConfig(T=args.T, l_max=args.lmax, init_source=args.init)
    chans = (cst.surrogate_channels(mode, args.snr)
             if args.init == "surrogate"
             else cst.empirical_channels(mode, args.snr, args.samples,
                                         args.seed))
    res = de.de_run(args.alg, base, phi, chans, cfg, target_types=target)
    if not res.converged:
        raise RuntimeError(
            f"DE did not converge at {args.snr:.4f} dB after "
            f"{res.iterations} iterations; pick a higher --snr")
    res.schedule.mode_name = mode.name
    res.schedule.snr_db = float(args.snr)
    sched_path = out / "schedule.json"
    de.save_schedule(res.schedule, sched_path)
    _say(f"{e.name} {mode.name} {args.alg} {label}: DE converged in "
         f"{res.iterations} iterations at {args.snr:.4f} dB")
    _say(f"wrote {sched_path}")

    if not args.no_plot:
        fig, ax = plt.subplots(figsize=(6, 4))
        ws = res.schedule.iterations
        its = np.arange(1, len(ws) + 1)
        names = ("w_L", "w_H") if args.alg == "qmp" else ("w",)
        for row, name in enumerate(names):
            lo_b = [w[row].min() for w in ws]
            hi_b = [w[row].max() for w in ws]
            ax.fill_between(its, lo_b, hi_b, alpha=0.3)
            ax.plot(its, hi_b, label=f"{name} (min..max over edge types)")
        ax.set_xlabel("iteration")
        ax.set_ylabel("weight (nats)")
        ax.legend()
        ax.grid(alpha=0.3)
        fig.tight_layout()
        _savefig(fig, out / "weights.png")
        _say(f"wrote {out / 'weights.png'}")
    return 0


# ---------------------------------------------------------------------------
# lift


def cmd_lift(args) -> int:
    e = _parse_ensemble(args.ensemble)
    out = _outdir(args)
    base, rate = proto.coupled_base(e, args.S)
    code = proto.lift(base, args.Q, girth_target=args.girth, seed=args.seed)
    n_c = base.shape[1] * args.Q
    code_path = out / "code.json"
    proto.save_code(code, code_path)
    alist_path = out / "code.alist"
    alist_path.write_text(proto.to_alist(code))
    _say(f"{e.name} S={args.S} Q={args.Q}: n = {n_c}, rate = {rate:.4f}, "
         f"girth {'>= ' + str(args.girth) if code.girth_ok else 'TARGET MISSED'}"
         f" (achieved {code.achieved_girth})")
    _say(f"wrote {code_path}")
    _say(f"wrote {alist_path}")
    if not code.girth_ok:
        raise RuntimeError(
            f"girth target {args.girth} not met (achieved "
            f"{code.achieved_girth}); raise Q or change --seed")
    return 0


# ---------------------------------------------------------------------------
# simulate


def _plan_from_file(path: Path) -> dict:
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise CliError(f"--plan: {path} does not exist")
    except json.JSONDecodeError as err:
        raise CliError(f"--plan: {path} is not valid JSON: {err}")
    if not isinstance(doc, dict):
        raise CliError(f"--plan: {path} must hold a JSON object")
    return doc


def _build_plan(args) -> sim.SimPlan:
    if args.plan:
        doc = _plan_from_file(Path(args.plan))
        here = Path(args.plan).parent
    else:
        required = ("ensemble", "S", "Q", "alg", "snr")
        missing = [k for k in required if getattr(args, k.replace("-", "_"),
                                                  None) is None]
        if missing:
            raise CliError(
                f"simulate: missing required flags {missing} (or use --plan)")
        doc = {
            "mode": args.mode, "ensemble": args.ensemble, "S": args.S,
            "Q": args.Q, "girth": args.girth, "liftSeed": args.lift_seed,
            "alg": args.alg, "schedule": args.schedule,
            "snrGridDb": _parse_snr_grid(args.snr),
            "stop": {"maxFrames": args.max_frames,
                     "minFrameErrors": args.min_errors},
            "masterSeed": args.seed, "lMax": args.lmax,
            "groupedSymbols": args.grouped,
        }
        here = Path(".")

    def need(key):
        if key not in doc or doc[key] is None:
            raise CliError(f"plan.{key}: required field missing")
        return doc[key]

    mode_spec = need("mode")
    if isinstance(mode_spec, str) and mode_spec in cst.preset_names():
        mode = cst.preset_mode(mode_spec)
    elif isinstance(mode_spec, str):
        try:
            mode = cst.load_mode(here / mode_spec)
        except (OSError, ValueError, KeyError) as err:
            raise CliError(f"plan.mode: {err}")
    else:
        raise CliError("plan.mode: expected a preset name or mode-file path")

    ens = need("ensemble")
    e = _parse_ensemble(str(ens))
    s_raw, q_raw = need("S"), need("Q")
    try:
        S, Q = int(s_raw), int(q_raw)
    except (TypeError, ValueError):
        raise CliError("plan.S/plan.Q: expected integers")
    if S < 1 or Q < 1:
        raise CliError("plan.S/plan.Q: must be >= 1")
    base, _ = proto.coupled_base(e, S)

    if "code" in doc and doc["code"]:
        try:
            code = proto.load_code(here / doc["code"])
        except (OSError, ValueError) as err:
            raise CliError(f"plan.code: {err}")
        if code.base.shape != base.shape or (code.base != base).any():
            raise CliError(
                "plan.code: stored base matrix does not match the "
                "ensemble/S in this plan")
        if code.Q != Q:
            raise CliError(f"plan.code: stored Q={code.Q} but plan.Q={Q}")
    else:
        code = proto.lift(base, Q, girth_target=int(doc.get("girth", 6)),
                          seed=int(doc.get("liftSeed", 0)))

    alg = str(need("alg"))
    phi = de.mapping_for(e, base, mode)
    schedule = None
    if alg != "bp":
        sched_spec = need("schedule")
        try:
            schedule = de.load_schedule(here / sched_spec)
        except (OSError, ValueError) as err:
            raise CliError(f"plan.schedule: {err}")
        want = de.base_hash(base, phi)
        if schedule.ensemble_hash and schedule.ensemble_hash != want:
            raise CliError(
                f"plan.schedule: schedule was computed for ensemble hash "
                f"{schedule.ensemble_hash}, this plan needs {want} "
                f"(same ensemble, S and mode?)")

    grid = doc.get("snrGridDb") or doc.get("snr")
    if grid is None:
        raise CliError("plan.snrGridDb: required field missing")
    if isinstance(grid, str):
        grid = _parse_snr_grid(grid)
    try:
        grid = [float(x) for x in grid]
    except (TypeError, ValueError):
        raise CliError("plan.snrGridDb: expected a list of SNRs in dB")

    stop = doc.get("stop", {})
    plan = sim.SimPlan(
        mode=mode, code=code, mapping=phi, alg=alg, schedule=schedule,
        snr_grid=grid,
        max_frames=int(stop.get("maxFrames", 10**6)),
        min_frame_errors=int(stop.get("minFrameErrors", 50)),
        master_seed=int(doc.get("masterSeed", 0)),
        l_max=(None if doc.get("lMax") is None else int(doc["lMax"])),
        grouped_symbols=bool(doc.get("groupedSymbols", False)),
        ensemble=e.name)
    try:
        sim.validate_plan(plan)
    except ValueError as err:
        raise CliError(f"plan: {err}")
    return plan


def cmd_simulate(args) -> int:
    plan = _build_plan(args)
    out = _outdir(args)
    log = (lambda m: print(m, file=sys.stderr)) if args.verbose else None
    records = sim.run_fer(plan, log=log)
    for r in records:
        _say(f"{r.mode} {r.ensemble} {r.alg} @ {r.snr_db:.4f} dB: "
             f"FER = {r.fer:.3e} ({r.frame_errors}/{r.frames}), "
             f"BER = {r.ber:.3e}")
    csv_path = out / "fer.csv"
    sim.write_fer_csv(records, csv_path)
    man_path = out / "run.json"
    sim.write_manifest(plan, man_path, records)
    _say(f"wrote {csv_path}")
    _say(f"wrote {man_path}")

    if not args.no_plot:
        fig, ax = plt.subplots(figsize=(6, 4))
        snrs = [r.snr_db for r in records]
        fers = [max(r.fer, 1e-12) for r in records]
        los, his = [], []
        for r in records:
            lo, hi = sim.cp_interval(r.frame_errors, r.frames)
            los.append(max(r.fer - lo, 0.0))
            his.append(max(hi - r.fer, 0.0))
        ax.errorbar(snrs, fers, yerr=[los, his], fmt="o-", capsize=3,
                    label=f"{plan.alg} (95% CP)")
        ax.set_yscale("log")
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("FER")
        ax.legend()
        ax.grid(alpha=0.3, which="both")
        fig.tight_layout()
        _savefig(fig, out / "fer.png")
        _say(f"wrote {out / 'fer.png'}")
    return 0


# ---------------------------------------------------------------------------
# surrogate


def cmd_surrogate(args) -> int:
    mode = _mode_of(args)
    out = _outdir(args)
    chans = cst.surrogate_channels(mode, args.snr)
    rows = []
    for k, ch in enumerate(chans, start=1):
        h = cst.cond_bit_entropy(mode, args.snr, k)
        rows.append((k, h, ch.sbreve, ch.mu, ch.sigma))
        _say(f"level {k}: H(B|Y) = {h:.6f} bits -> surrogate sbreve = "
             f"{ch.sbreve:.6f} (LLR mean {ch.mu:.4f}, std {ch.sigma:.4f})")
    csv_path = out / "surrogate.csv"
    with open(csv_path, "w") as f:
        f.write("level,cond_entropy_bits,sbreve,llr_mean,llr_std\n")
        for k, h, sb, mu, sd in rows:
            f.write(f"{k},{h:.8f},{sb:.8f},{mu:.8f},{sd:.8f}\n")
    _say(f"wrote {csv_path}")

    if not args.no_plot:
        fig, ax = plt.subplots(figsize=(6, 4))
        span = max(ch.mu + 4 * ch.sigma for ch in chans)
        grid = np.linspace(-span / 2, span, 300)
        for k, ch in enumerate(chans, start=1):
            ax.plot(grid, ch.cdf(grid), label=f"level {k} surrogate")
        if args.samples:
            emp = cst.empirical_channels(mode, args.snr, args.samples,
                                         args.seed)
            for k, ch in enumerate(emp, start=1):
                ax.plot(grid, ch.cdf(grid), "--", label=f"level {k} empirical")
        ax.set_xlabel("symmetrized LLR")
        ax.set_ylabel("CDF")
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
        fig.tight_layout()
        _savefig(fig, out / "surrogate.png")
        _say(f"wrote {out / 'surrogate.png'}")
    return 0


# ---------------------------------------------------------------------------
# dataflow


def cmd_dataflow(args) -> int:
    if args.n < 1 or args.q < 1 or args.dv_avg <= 0:
        raise CliError("dataflow: n, q and dv-avg must be positive")
    f_bits = 2 * args.n * args.q * args.dv_avg
    _say(f"F = 2 * {args.n} * {args.q} * {args.dv_avg} = {f_bits:.0f} "
         f"bits per iteration")
    out = _outdir(args)
    path = out / "dataflow.json"
    with open(path, "w") as f:
        json.dump({"nC": args.n, "q": args.q, "dvAvg": args.dv_avg,
                   "bitsPerIteration": f_bits}, f, indent=1)
        f.write("\n")
    _say(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0,
                        help="master seed for anything stochastic")
    common.add_argument("--threads", type=int, default=1,
                        help="worker hint; results never depend on it")
    common.add_argument("--out", default=".",
                        help="output directory for artifacts")
    common.add_argument("--no-plot", action="store_true",
                        help="skip figure rendering next to the tables")
    common.add_argument("--verbose", action="store_true",
                        help="progress logging to stderr")

    p = argparse.ArgumentParser(
        prog="mpdec",
        description="one/two-bit message-passing decoding toolbox: "
                    "achievable rates, DE thresholds, weight schedules, "
                    "lifted codes and FER simulation")
    sub = p.add_subparsers(dest="command", required=True)

    q = sub.add_parser("rates", parents=[common],
                       help="BMD rates / Shannon limits per mode")
    q.add_argument("--mode", help="preset name or mode JSON file")
    q.add_argument("--snr", type=float, help="evaluate R_bmd at this SNR")
    q.add_argument("--rate", type=float,
                   help="solve the SNR where R_bmd equals this rate "
                        "(default: the mode's Rtx)")
    q.set_defaults(func=cmd_rates)

    q = sub.add_parser("threshold", parents=[common],
                       help="DE decoding threshold of a windowed ensemble")
    q.add_argument("--ensemble", required=True, help="dv,dc e.g. 4,16")
    q.add_argument("--mode", required=True)
    q.add_argument("--alg", required=True, choices=["bmp", "tmp", "qmp"])
    q.add_argument("--window", type=int, default=15)
    q.add_argument("--T", type=float, default=1.3)
    q.add_argument("--lmax", type=int, default=1000)
    q.add_argument("--tol", type=float, default=0.01)
    q.add_argument("--init", choices=["surrogate", "empirical"],
                   default="surrogate")
    q.add_argument("--samples", type=int, default=10**6,
                   help="draws per level for --init empirical")
    q.add_argument("--snr-lo", type=float)
    q.add_argument("--snr-hi", type=float)
    q.set_defaults(func=cmd_threshold)

    q = sub.add_parser("weights", parents=[common],
                       help="export the DE weight schedule at one SNR")
    q.add_argument("--ensemble", required=True)
    q.add_argument("--mode", required=True)
    q.add_argument("--alg", required=True, choices=["bmp", "tmp", "qmp"])
    q.add_argument("--snr", type=float, required=True)
    q.add_argument("--window", type=int)
    q.add_argument("--S", type=int,
                   help="terminated chain length instead of a window")
    q.add_argument("--T", type=float, default=1.3)
    q.add_argument("--lmax", type=int, default=1000)
    q.add_argument("--init", choices=["surrogate", "empirical"],
                   default="surrogate")
    q.add_argument("--samples", type=int, default=10**6)
    q.set_defaults(func=cmd_weights)

    q = sub.add_parser("lift", parents=[common],
                       help="lift a terminated coupled base to a QC code")
    q.add_argument("--ensemble", required=True)
    q.add_argument("--S", type=int, required=True)
    q.add_argument("--Q", type=int, required=True)
    q.add_argument("--girth", type=int, default=8, choices=[4, 6, 8])
    q.set_defaults(func=cmd_lift)

    q = sub.add_parser("simulate", parents=[common],
                       help="Monte Carlo FER/BER over an SNR grid")
    q.add_argument("--plan", help="JSON plan file (overrides other flags)")
    q.add_argument("--ensemble")
    q.add_argument("--mode", default="4U-0.75")
    q.add_argument("--S", type=int)
    q.add_argument("--Q", type=int)
    q.add_argument("--girth", type=int, default=6)
    q.add_argument("--lift-seed", type=int, default=0)
    q.add_argument("--alg", choices=["bmp", "tmp", "qmp", "bp"])
    q.add_argument("--schedule", help="weight schedule JSON from 'weights'")
    q.add_argument("--snr", help="grid: 'lo:hi:step' or comma list")
    q.add_argument("--max-frames", type=int, default=10**6)
    q.add_argument("--min-errors", type=int, default=50)
    q.add_argument("--lmax", type=int)
    q.add_argument("--grouped", action="store_true",
                   help="symbol-grouped sampling (sensitivity check)")
    q.set_defaults(func=cmd_simulate)

    q = sub.add_parser("surrogate", parents=[common],
                       help="entropy-matched surrogate channel parameters")
    q.add_argument("--mode", required=True)
    q.add_argument("--snr", type=float, required=True)
    q.add_argument("--samples", type=int, default=0,
                   help="overlay an empirical CDF from this many draws")
    q.set_defaults(func=cmd_surrogate)

    q = sub.add_parser("dataflow", parents=[common],
                       help="decoder data flow in bits per iteration")
    q.add_argument("--n", type=int, required=True, help="code length n_c")
    q.add_argument("--q", type=int, required=True,
                   help="bits per exchanged message")
    q.add_argument("--dv-avg", type=float, required=True)
    q.set_defaults(func=cmd_dataflow)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except CliError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    except Exception as err:  # runtime failures keep a distinct exit code
        print(f"runtime error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
