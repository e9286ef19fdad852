"""Acceptance scorecard: the end-to-end reproduction targets.

Each test prints one line per checked quantity so a verbose run reads as
a scorecard. This module is deliberately heavyweight (about half an hour
of DE probes and n = 60000 Monte Carlo); everything else under tests/
stays fast.

Known red: test_criterion_6_operating_point. At n = 60000 the
finite-length waterfall sits about 0.3 dB above the asymptotic DE
threshold for every algorithm here, including unquantized BP, so the
target FER of 1e-2 at threshold + 0.15 dB is not reachable by this (or,
as far as we can measure, any) flooding block decoder at this
blocklength. The test stays in place and fails honestly rather than
moving the operating point.
"""

import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

import mpdec.constellation as cst
import mpdec.de as de
import mpdec.decoders as dec
import mpdec.protograph as proto
import mpdec.sim as sim

ROOT = Path(__file__).resolve().parents[1]

# SNR (dB) where each mode's BMD rate equals its transmission rate
RATE_MATCH_SNR = {
    "4U-0.50": 5.2803,
    "4U-0.75": 9.3084,
    "8PS-0.67": 8.5334,
    "8PS-0.83": 8.5606,
}

# reference decoding thresholds (dB), W = 15 window, T = 1.3, surrogate init
BATTERY = {
    (4, 8, "4U-0.50"): {"bmp": 7.75, "tmp": 6.50, "qmp": 6.26},
    (4, 16, "4U-0.75"): {"bmp": 10.89, "tmp": 10.11, "qmp": 10.00},
    (6, 24, "4U-0.75"): {"bmp": 10.72, "tmp": 10.00, "qmp": 9.88},
    (4, 12, "8PS-0.67"): {"bmp": 10.81, "tmp": 9.68, "qmp": 9.50},
    (6, 18, "8PS-0.67"): {"bmp": 10.62, "tmp": 9.55, "qmp": 9.37},
    (4, 24, "8PS-0.83"): {"bmp": 10.06, "tmp": 9.33, "qmp": 9.23},
    (6, 36, "8PS-0.83"): {"bmp": 9.88, "tmp": 9.21, "qmp": 9.10},
}

HIGH_RATE = [(4, 16, "4U-0.75"), (6, 24, "4U-0.75"),
             (4, 24, "8PS-0.83"), (6, 36, "8PS-0.83")]

ALGS = ("bmp", "tmp", "qmp")

_thr_cache = {}


def measured_threshold(dv, dc, mode_name, alg, tol=0.02, init="surrogate",
                       n_samples=10**6):
    """Bisected W=15 threshold, cached so criterion 4 reuses criterion 3."""
    key = (dv, dc, mode_name, alg, tol, init, n_samples)
    if key not in _thr_cache:
        ref = BATTERY[(dv, dc, mode_name)][alg]
        cfg = de.DeConfig(T=1.3, l_max=1000, init_source=init)
        res = de.threshold(alg, proto.sc_ensemble(dv, dc), 15,
                           cst.preset_mode(mode_name), cfg,
                           snr_lo=ref - 0.25, snr_hi=ref + 0.25, tol=tol,
                           n_samples=n_samples, seed=29)
        _thr_cache[key] = res.snr_db
    return _thr_cache[key]


def scoreline(criterion, ok, detail):
    print(f"criterion {criterion} {'PASS' if ok else 'FAIL'}: {detail}")


# ---------------------------------------------------------------------------
# 1: terminated coupling rates


def test_criterion_1_coupled_rates():
    t0 = time.perf_counter()
    _, r1 = proto.coupled_base(proto.sc_ensemble(4, 16), 50)
    _, r2 = proto.coupled_base(proto.sc_ensemble(4, 24), 50)
    dt = time.perf_counter() - t0
    ok = abs(r1 - 0.735) < 1e-12 and abs(r2 - 0.8233) <= 5e-5 and dt < 1.0
    scoreline(1, ok, f"S=50 rates {r1:.6f} / {r2:.6f} "
                     f"(targets 0.735 / 0.8233 +- 5e-5) in {dt:.3f}s")
    assert abs(r1 - 0.735) < 1e-12
    assert abs(r2 - 0.8233) <= 5e-5
    assert dt < 1.0


# ---------------------------------------------------------------------------
# 2: rate-matched SNRs per signaling mode


@pytest.mark.parametrize("name", sorted(RATE_MATCH_SNR))
def test_criterion_2_rate_match_snr(name):
    mode = cst.preset_mode(name)
    ref = RATE_MATCH_SNR[name]
    snr = cst.rbmd_inv(mode, mode.rtx)
    rate_at_ref = cst.rbmd(mode, ref)
    ok = abs(snr - ref) <= 0.01 and abs(rate_at_ref - mode.rtx) <= 0.005
    scoreline(2, ok, f"{name}: rate-match SNR {snr:.4f} dB (target {ref}), "
                     f"R_bmd({ref}) = {rate_at_ref:.4f} (R_tx {mode.rtx})")
    assert abs(snr - ref) <= 0.01
    assert abs(rate_at_ref - mode.rtx) <= 0.005


# ---------------------------------------------------------------------------
# 3: threshold battery


THRESHOLD_CASES = [(dv, dc, m, alg) for (dv, dc, m) in BATTERY
                   for alg in ALGS]


@pytest.mark.parametrize(
    "dv,dc,mode_name,alg", THRESHOLD_CASES,
    ids=[f"B{dv},{dc}-{alg}" for dv, dc, m, alg in THRESHOLD_CASES])
def test_criterion_3_threshold(dv, dc, mode_name, alg):
    ref = BATTERY[(dv, dc, mode_name)][alg]
    thr = measured_threshold(dv, dc, mode_name, alg)
    ok = abs(thr - ref) <= 0.05
    scoreline(3, ok, f"B{dv},{dc} {mode_name} {alg}: threshold "
                     f"{thr:.4f} dB (reference {ref}, +-0.05)")
    assert abs(thr - ref) <= 0.05


EMP_CASES = [(dv, dc, m, alg) for (dv, dc, m) in
             ((4, 16, "4U-0.75"), (4, 12, "8PS-0.67")) for alg in ALGS]


@pytest.mark.parametrize(
    "dv,dc,mode_name,alg", EMP_CASES,
    ids=[f"B{dv},{dc}-{alg}" for dv, dc, m, alg in EMP_CASES])
def test_criterion_3_empirical_init_coincides(dv, dc, mode_name, alg):
    """Monte Carlo CDF initialization lands on the surrogate threshold.

    4e6 samples keep the CDF sampling noise well below the 0.02 dB
    coincidence tolerance (at 1e6 an unlucky draw can shift a sharp
    threshold by ~0.03 dB).
    """
    sur = measured_threshold(dv, dc, mode_name, alg, tol=0.005)
    emp = measured_threshold(dv, dc, mode_name, alg, tol=0.005,
                             init="empirical", n_samples=4 * 10**6)
    ok = abs(emp - sur) <= 0.02
    scoreline(3, ok, f"B{dv},{dc} {mode_name} {alg}: empirical init "
                     f"{emp:.4f} vs surrogate {sur:.4f} dB (+-0.02)")
    assert abs(emp - sur) <= 0.02


# ---------------------------------------------------------------------------
# 4: quantization gaps derived from the battery


def test_criterion_4_quantization_gaps():
    gap48 = (measured_threshold(4, 8, "4U-0.50", "tmp")
             - measured_threshold(4, 8, "4U-0.50", "qmp"))
    ok = abs(gap48 - 0.24) <= 0.07
    scoreline(4, ok, f"B4,8 tmp-qmp gap {gap48:.3f} dB (target 0.24 +-0.07)")
    assert abs(gap48 - 0.24) <= 0.07

    for dv, dc, m in HIGH_RATE:
        gap = (measured_threshold(dv, dc, m, "tmp")
               - measured_threshold(dv, dc, m, "qmp"))
        ok = abs(gap - 0.1) <= 0.07
        scoreline(4, ok, f"B{dv},{dc} tmp-qmp gap {gap:.3f} dB "
                         f"(target ~0.1 +-0.07)")
        assert abs(gap - 0.1) <= 0.07

    for (dv, dc, m) in BATTERY:
        t = {alg: measured_threshold(dv, dc, m, alg) for alg in ALGS}
        ok = t["qmp"] <= t["tmp"] <= t["bmp"]
        scoreline(4, ok, f"B{dv},{dc} ordering qmp {t['qmp']:.3f} <= "
                         f"tmp {t['tmp']:.3f} <= bmp {t['bmp']:.3f}")
        assert t["qmp"] <= t["tmp"] <= t["bmp"]


# ---------------------------------------------------------------------------
# 5: one DE iteration vs decoder statistics on a Q = 2000 lift


@pytest.mark.parametrize("alg", ALGS)
def test_criterion_5_de_matches_decoder(alg):
    t0 = time.perf_counter()
    e = proto.sc_ensemble(4, 8)
    mode = cst.preset_mode("4U-0.50")
    base = proto.window_base(e, 4)
    phi = de.mapping_for(e, base, mode)
    chans = cst.surrogate_channels(mode, 7.0)
    gd = de.DeGraph(base, phi)

    p0 = de.de_init(alg, chans, gd)
    cn = {"bmp": de.de_cn_bmp, "tmp": de.de_cn_tmp, "qmp": de.de_cn_qmp}[alg]
    vn = {"bmp": de.de_vn_bmp, "tmp": de.de_vn_tmp, "qmp": de.de_vn_qmp}[alg]
    q = cn(p0, gd)
    w, _ = de.de_weights(alg, q)
    p1 = vn(q, w, chans, gd)

    code = proto.lift(base, 2000, girth_target=6, seed=2)
    g = dec.DecoderGraph(code)
    sched = de.WeightSchedule(alg=alg, t=1.3, cells=list(gd.cells),
                              iterations=[w])
    rng = np.random.default_rng(11)
    lv = np.repeat(phi - 1, code.Q)
    mu = np.array([c.mu for c in chans])[lv]
    sd = np.array([c.sigma for c in chans])[lv]
    hist = dec.message_histogram(alg, g, rng.normal(mu, sd), sched,
                                 n_iters=1)[0]

    a = {"bmp": 2, "tmp": 3, "qmp": 4}[alg]
    full = np.empty((a, gd.n_edges))
    full[:a - 1] = p1
    full[a - 1] = 1.0 - p1.sum(axis=0)
    zmax = 0.0
    for k in range(len(gd.cells)):
        sel = gd.edge_cell == k
        n = hist[k].sum()
        for t in range(a):
            pr = full[t, sel].mean()
            sig = np.sqrt(max(pr * (1 - pr), 1e-12) / n)
            zmax = max(zmax, abs(hist[k, t] / n - pr) / sig)
    dt = time.perf_counter() - t0
    ok = zmax <= 3.0 and dt < 60.0
    scoreline(5, ok, f"{alg}: worst edge-type deviation {zmax:.2f} sigma "
                     f"(limit 3) in {dt:.1f}s")
    assert zmax <= 3.0
    assert dt < 60.0


# ---------------------------------------------------------------------------
# 6: finite length, n = 60000 (Q = 300, S = 50, 4U-0.75)


@pytest.fixture(scope="module")
def chain():
    e = proto.sc_ensemble(4, 16)
    base, _ = proto.coupled_base(e, 50)
    mode = cst.preset_mode("4U-0.75")
    phi = de.mapping_for(e, base, mode)
    code = proto.lift(base, 300, girth_target=8, seed=1)
    assert code.girth_ok
    cfg = de.DeConfig(T=1.3, l_max=4000)
    scheds = {}
    for alg in ALGS:
        thr = BATTERY[(4, 16, "4U-0.75")][alg]
        res = de.de_run(alg, base, phi,
                        cst.surrogate_channels(mode, thr), cfg)
        assert res.converged
        scheds[alg] = res.schedule
    return {"e": e, "mode": mode, "phi": phi, "code": code,
            "scheds": scheds}


def _fer_at(chain, alg, snr, max_frames, min_errors, seed):
    plan = sim.SimPlan(mode=chain["mode"], code=chain["code"],
                       mapping=chain["phi"], alg=alg,
                       schedule=chain["scheds"][alg], snr_grid=[snr],
                       max_frames=max_frames, min_frame_errors=min_errors,
                       master_seed=seed, ensemble=chain["e"].name)
    return sim.run_fer(plan)[0]


@pytest.mark.parametrize("alg", ALGS)
def test_criterion_6_operating_point(chain, alg):
    """FER 0.15 dB above the DE threshold; target 1e-2. Known red: the
    finite-length waterfall is ~0.3 dB wide at this blocklength (full BP
    measures FER ~0.9 at its own threshold + 0.15 dB too)."""
    thr = BATTERY[(4, 16, "4U-0.75")][alg]
    snr = round(thr + 0.15, 4)
    rec = _fer_at(chain, alg, snr, max_frames=150, min_errors=50, seed=20)
    ok = rec.fer <= 1e-2 and rec.frame_errors >= 50
    scoreline(6, ok, f"{alg} FER at {snr} dB (threshold + 0.15) = "
                     f"{rec.fer:.3e} ({rec.frame_errors}/{rec.frames}), "
                     f"target <= 1e-2 with >= 50 errors")
    assert ok, (
        f"{alg}: FER {rec.fer:.3e} at {snr} dB; the n = 60000 waterfall "
        f"sits ~0.3 dB above the asymptotic threshold (unquantized BP "
        f"fails the same margin), so threshold + 0.15 dB is inside the "
        f"waterfall and the 1e-2 target cannot be met at this blocklength")


def test_criterion_6_fer_ordering(chain):
    """At a common SNR inside the QMP waterfall the three algorithms
    separate with non-overlapping 95% Clopper-Pearson intervals."""
    snr = 10.40
    budgets = {"qmp": 150, "tmp": 150, "bmp": 60}
    recs, bands = {}, {}
    for alg in ALGS:
        recs[alg] = _fer_at(chain, alg, snr, max_frames=budgets[alg],
                            min_errors=10**9, seed=6)
        bands[alg] = sim.cp_interval(recs[alg].frame_errors,
                                     recs[alg].frames)
    detail = ", ".join(
        f"{alg} {recs[alg].fer:.3f} [{bands[alg][0]:.3f},{bands[alg][1]:.3f}]"
        for alg in ("qmp", "tmp", "bmp"))
    ok = (recs["qmp"].fer < recs["tmp"].fer < recs["bmp"].fer
          and bands["qmp"][1] < bands["tmp"][0]
          and bands["tmp"][1] < bands["bmp"][0])
    scoreline(6, ok, f"FER ordering at {snr} dB: {detail}")
    assert recs["qmp"].fer < recs["tmp"].fer < recs["bmp"].fer
    assert bands["qmp"][1] < bands["tmp"][0], "qmp/tmp intervals overlap"
    assert bands["tmp"][1] < bands["bmp"][0], "tmp/bmp intervals overlap"


# ---------------------------------------------------------------------------
# 7: the fast property suites stay green and fast


def test_criterion_7_property_suites():
    t0 = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
         str(ROOT / "tests"),
         f"--ignore={Path(__file__).resolve()}"],
        capture_output=True, text=True, timeout=900)
    dt = time.perf_counter() - t0
    ok = proc.returncode == 0 and dt < 600.0
    scoreline(7, ok, f"property suites exit {proc.returncode} in {dt:.0f}s "
                     f"(limit 600s)")
    if proc.returncode != 0:
        print(proc.stdout[-2000:])
    assert proc.returncode == 0
    assert dt < 600.0
