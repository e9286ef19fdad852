"""End-to-end checks of the command line front end.

Commands run in-process through cli.main(argv) so exit codes, stdout and
the artifacts in --out can all be asserted cheaply. Slow DE work reuses
one small terminated chain built once per session.
"""

import csv
import json

import pytest

from mpdec import cli
from mpdec import protograph as proto


def run(*argv):
    return cli.main(list(argv))


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory):
    """schedule.json + code.json for a (4,8) S=6 chain, built via the CLI."""
    d = tmp_path_factory.mktemp("toy")
    rc = run("weights", "--ensemble", "4,8", "--mode", "4U-0.50",
             "--alg", "qmp", "--S", "6", "--snr", "5.2",
             "--out", str(d), "--no-plot")
    assert rc == 0
    rc = run("lift", "--ensemble", "4,8", "--S", "6", "--Q", "20",
             "--girth", "6", "--seed", "9", "--out", str(d), "--no-plot")
    assert rc == 0
    return d


# ---------------------------------------------------------------------------
# rates


def test_rates_preset_solves_its_own_transmission_rate(tmp_path):
    rc = run("rates", "--mode", "4U-0.75", "--out", str(tmp_path), "--no-plot")
    assert rc == 0
    rows = read_csv(tmp_path / "rates.csv")
    assert rows[0] == ["mode", "m", "rc", "rtx", "snr_db", "rbmd"]
    assert len(rows) == 2
    mode, m, rc_, rtx, snr, rbmd = rows[1]
    assert mode == "4U-0.75" and m == "2"  # 4-ASK: two bit levels
    # uniform 4-ASK, rate 1.5 bpcu
    assert abs(float(snr) - 9.3084) <= 0.01
    assert abs(float(rbmd) - 1.5) <= 5e-4


def test_rates_snr_query_saturates_at_m_bits(tmp_path):
    rc = run("rates", "--mode", "4U-0.50", "--snr", "60",
             "--out", str(tmp_path), "--no-plot")
    assert rc == 0
    rows = read_csv(tmp_path / "rates.csv")
    assert float(rows[1][5]) > 1.99


def test_rates_figure_rendered_unless_disabled(tmp_path):
    d1, d2 = tmp_path / "plot", tmp_path / "noplot"
    assert run("rates", "--mode", "4U-0.50", "--out", str(d1)) == 0
    assert (d1 / "rates.csv").is_file()
    assert (d1 / "rates.png").is_file()
    assert run("rates", "--mode", "4U-0.50", "--out", str(d2),
               "--no-plot") == 0
    assert (d2 / "rates.csv").is_file()
    assert not (d2 / "rates.png").exists()


def test_rates_artifacts_are_byte_identical_across_runs(tmp_path):
    """Same inputs, same bytes: CSV and the rendered figure."""
    d1, d2 = tmp_path / "a", tmp_path / "b"
    for d in (d1, d2):
        assert run("rates", "--mode", "4U-0.50", "--out", str(d)) == 0
    assert (d1 / "rates.csv").read_bytes() == (d2 / "rates.csv").read_bytes()
    assert (d1 / "rates.png").read_bytes() == (d2 / "rates.png").read_bytes()


def test_rates_unknown_mode_is_a_validation_failure(tmp_path, capsys):
    rc = run("rates", "--mode", "not-a-mode", "--out", str(tmp_path))
    assert rc == 2
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# threshold


def test_threshold_bisection_inside_a_tight_bracket(tmp_path):
    rc = run("threshold", "--ensemble", "4,8", "--mode", "4U-0.50",
             "--alg", "qmp", "--window", "15",
             "--snr-lo", "6.1", "--snr-hi", "6.5", "--tol", "0.05",
             "--out", str(tmp_path), "--no-plot")
    assert rc == 0
    rows = read_csv(tmp_path / "threshold.csv")
    assert rows[0] == ["ensemble", "mode", "alg", "W", "threshold_dB",
                       "iterations_at_threshold"]
    ens, mode, alg, w, thr, iters = rows[1]
    assert (ens, mode, alg, w) == ("B4,8", "4U-0.50", "qmp", "15")
    assert 6.2 <= float(thr) <= 6.35
    assert int(iters) > 0


def test_threshold_reversed_bracket_is_rejected(tmp_path, capsys):
    rc = run("threshold", "--ensemble", "4,8", "--mode", "4U-0.50",
             "--alg", "qmp", "--snr-lo", "7.0", "--snr-hi", "6.0",
             "--out", str(tmp_path))
    assert rc == 2
    assert "lo < hi" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# weights


def test_weights_requires_exactly_one_shape_flag(tmp_path, capsys):
    base = ("weights", "--ensemble", "4,8", "--mode", "4U-0.50",
            "--alg", "qmp", "--snr", "5.2", "--out", str(tmp_path))
    assert run(*base, "--window", "6", "--S", "6") == 2
    assert run(*base) == 2
    err = capsys.readouterr().err
    assert "--window/--S" in err


def test_weights_below_threshold_is_a_runtime_failure(tmp_path, capsys):
    rc = run("weights", "--ensemble", "4,8", "--mode", "4U-0.50",
             "--alg", "qmp", "--S", "6", "--snr", "4.0", "--lmax", "80",
             "--out", str(tmp_path), "--no-plot")
    assert rc == 1
    assert "higher --snr" in capsys.readouterr().err


def test_weights_schedule_roundtrips(toy_dir):
    from mpdec import de
    sched = de.load_schedule(toy_dir / "schedule.json")
    assert sched.alg == "qmp"
    assert sched.mode_name == "4U-0.50"
    assert sched.snr_db == pytest.approx(5.2)
    assert len(sched.iterations) > 0


# ---------------------------------------------------------------------------
# lift


def test_lift_artifacts_roundtrip(toy_dir):
    code = proto.load_code(toy_dir / "code.json")
    assert code.Q == 20
    assert code.girth_ok
    alist = (toy_dir / "code.alist").read_text()
    n_c, m_c = (int(x) for x in alist.splitlines()[0].split())
    assert (n_c, m_c) == (code.base.shape[1] * 20, code.base.shape[0] * 20)


def test_lift_girth_miss_keeps_artifacts_and_fails(tmp_path, capsys):
    """Q too small for girth 8: the code is still written, exit code is 1."""
    rc = run("lift", "--ensemble", "4,8", "--S", "6", "--Q", "3",
             "--girth", "8", "--out", str(tmp_path), "--no-plot")
    assert rc == 1
    assert (tmp_path / "code.json").is_file()
    assert (tmp_path / "code.alist").is_file()
    cap = capsys.readouterr()
    assert "TARGET MISSED" in cap.out
    assert "girth target" in cap.err
    code = proto.load_code(tmp_path / "code.json")
    assert not code.girth_ok


# ---------------------------------------------------------------------------
# simulate


def _simulate_args(toy_dir, out, *extra):
    return ("simulate", "--ensemble", "4,8", "--mode", "4U-0.50",
            "--S", "6", "--Q", "20", "--girth", "6", "--lift-seed", "9",
            "--alg", "qmp", "--schedule", str(toy_dir / "schedule.json"),
            "--snr", "5.0,5.4", "--max-frames", "120", "--min-errors", "8",
            "--seed", "3", "--out", str(out), "--no-plot") + extra


def test_simulate_inline_flags_and_idempotence(toy_dir, tmp_path):
    d1, d2 = tmp_path / "a", tmp_path / "b"
    for d in (d1, d2):
        assert run(*_simulate_args(toy_dir, d)) == 0
    rows = read_csv(d1 / "fer.csv")
    assert rows[0] == ["mode", "ensemble", "alg", "snr_db", "frames",
                       "frame_errors", "bit_errors", "fer", "ber", "seed"]
    assert len(rows) == 3
    assert [r[3] for r in rows[1:]] == ["5.0000", "5.4000"]
    man = json.loads((d1 / "run.json").read_text())
    assert man["alg"] == "qmp"
    assert len(man["results"]) == 2
    # repeat runs must reproduce every artifact byte for byte
    for name in ("fer.csv", "run.json"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_simulate_renders_fer_figure_by_default(toy_dir, tmp_path):
    args = list(_simulate_args(toy_dir, tmp_path, "--max-frames", "40"))
    args.remove("--no-plot")
    assert run(*args) == 0
    assert (tmp_path / "fer.png").is_file()


def test_simulate_plan_file(toy_dir, tmp_path):
    plan = {
        "mode": "4U-0.50", "ensemble": "4,8", "S": 6, "Q": 20,
        "girth": 6, "liftSeed": 9, "alg": "qmp",
        "schedule": str(toy_dir / "schedule.json"),
        "snrGridDb": [5.1], "stop": {"maxFrames": 60, "minFrameErrors": 5},
        "masterSeed": 11,
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan))
    out = tmp_path / "out"
    assert run("simulate", "--plan", str(plan_path), "--out", str(out),
               "--no-plot") == 0
    rows = read_csv(out / "fer.csv")
    assert len(rows) == 2
    assert rows[1][9] == "11"
    man = json.loads((out / "run.json").read_text())
    assert man["mode"]["name"] == "4U-0.50"
    assert man["masterSeed"] == 11


def test_simulate_malformed_plan_leaves_no_artifacts(tmp_path, capsys):
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(
        {"mode": "4U-0.50", "ensemble": "4,8", "S": 6, "alg": "qmp"}))
    out = tmp_path / "out"
    rc = run("simulate", "--plan", str(plan_path), "--out", str(out))
    assert rc == 2
    assert "plan.Q: required field missing" in capsys.readouterr().err
    assert not (out / "fer.csv").exists()
    assert not (out / "run.json").exists()


def test_simulate_missing_inline_flags(tmp_path, capsys):
    rc = run("simulate", "--alg", "qmp", "--out", str(tmp_path))
    assert rc == 2
    assert "missing required flags" in capsys.readouterr().err


def test_simulate_schedule_from_other_chain_is_rejected(toy_dir, tmp_path,
                                                        capsys):
    """A schedule carries the hash of the graph it was computed on."""
    plan = {
        "mode": "4U-0.50", "ensemble": "4,8", "S": 7, "Q": 20,
        "girth": 6, "alg": "qmp",
        "schedule": str(toy_dir / "schedule.json"),
        "snrGridDb": [5.1],
    }
    plan_path = tmp_path / "plan.json"
    plan_path.write_text(json.dumps(plan))
    rc = run("simulate", "--plan", str(plan_path), "--out", str(tmp_path))
    assert rc == 2
    assert "ensemble hash" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# surrogate / dataflow


def test_surrogate_reports_one_row_per_bit_level(tmp_path):
    rc = run("surrogate", "--mode", "8PS-0.67", "--snr", "8.5",
             "--out", str(tmp_path), "--no-plot")
    assert rc == 0
    rows = read_csv(tmp_path / "surrogate.csv")
    assert rows[0][0] == "level"
    assert len(rows) == 4  # 8-ASK carries 3 bit levels
    for row in rows[1:]:
        assert 0.0 < float(row[1]) < 1.0   # conditional entropy in bits
        assert float(row[2]) > 0.0         # surrogate noise scale
    assert not (tmp_path / "surrogate.png").exists()


def test_dataflow_value_and_scaling(tmp_path):
    assert run("dataflow", "--n", "60000", "--q", "2", "--dv-avg", "4",
               "--out", str(tmp_path)) == 0
    doc = json.loads((tmp_path / "dataflow.json").read_text())
    assert doc["bitsPerIteration"] == 960000

    assert run("dataflow", "--n", "60000", "--q", "1", "--dv-avg", "4",
               "--out", str(tmp_path)) == 0
    half = json.loads((tmp_path / "dataflow.json").read_text())
    assert half["bitsPerIteration"] == 480000

    assert run("dataflow", "--n", "120000", "--q", "2", "--dv-avg", "4",
               "--out", str(tmp_path)) == 0
    twice = json.loads((tmp_path / "dataflow.json").read_text())
    assert twice["bitsPerIteration"] == 1920000


def test_dataflow_rejects_nonpositive_sizes(tmp_path, capsys):
    rc = run("dataflow", "--n", "0", "--q", "2", "--dv-avg", "4",
             "--out", str(tmp_path))
    assert rc == 2
    assert "must be positive" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# parsing and global flags


def test_ensemble_spellings_are_equivalent():
    names = {cli._parse_ensemble(s).name for s in ("4,8", "B4,8", "4x8",
                                                   "4:8", "b4x8")}
    assert names == {"B4,8"}


def test_ensemble_rejects_garbage():
    for bad in ("4", "4;8", "a,b", "4,8,12"):
        with pytest.raises(cli.CliError):
            cli._parse_ensemble(bad)


def test_snr_grid_parser():
    assert cli._parse_snr_grid("5.0:6.0:0.5") == [5.0, 5.5, 6.0]
    assert cli._parse_snr_grid("7.25") == [7.25]
    assert cli._parse_snr_grid("8.0,7.0") == [8.0, 7.0]
    with pytest.raises(cli.CliError):
        cli._parse_snr_grid("6.0:5.0:0.5")
    with pytest.raises(cli.CliError):
        cli._parse_snr_grid("5.0:6.0")


def test_threads_hint_must_be_positive(tmp_path, capsys):
    rc = run("rates", "--mode", "4U-0.50", "--threads", "0",
             "--out", str(tmp_path))
    assert rc == 2
    assert "--threads" in capsys.readouterr().err


def test_argparse_failures_use_the_validation_exit_code(tmp_path):
    with pytest.raises(SystemExit) as ei:
        run("no-such-command")
    assert ei.value.code == 2
    with pytest.raises(SystemExit) as ei:
        run("threshold", "--mode", "4U-0.50", "--alg", "qmp")  # no --ensemble
    assert ei.value.code == 2
