import json
import subprocess
import sys

import pytest

from flowsde.cli import main
from flowsde.config import load_config
from flowsde.report import CSV_HEADER, read_csv

SMALL = ["--trials", "3", "--trajectories", "500", "--steps", "20"]


def _run(args, capsys=None):
    code = main([str(a) for a in args])
    out = capsys.readouterr() if capsys else None
    return code, out


def test_simulate_writes_csv_and_sidecar(tmp_path, capsys):
    out = tmp_path / "r.csv"
    code, _ = _run(["simulate", "-o", out, *SMALL], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 1 + 21
    times = [float(l.split(",")[0]) for l in lines[1:]]
    assert times == sorted(times, reverse=True) and times[-1] == 0.0
    meta = json.loads((tmp_path / "r.meta.json").read_text())
    assert meta["seed"] == 0 and meta["kl_direction"] == "estimate_truth"
    assert load_config(tmp_path / "r.meta.json").num_steps == 20


def test_floats_round_trip(tmp_path):
    out = tmp_path / "r.csv"
    main(["simulate", "-o", str(out), *SMALL])
    for line in out.read_text().splitlines()[1:]:
        for cell in line.split(","):
            assert repr(float(cell)) == repr(float(format(float(cell), ".17g")))
    cell = out.read_text().splitlines()[-1].split(",")[1]
    assert len(cell.lstrip("-").replace(".", "").lstrip("0").split("e")[0]) >= 15


def test_byte_identical_across_runs_and_workers(tmp_path):
    paths = []
    for i, workers in enumerate((1, 1, 8)):
        p = tmp_path / f"r{i}.csv"
        main(["simulate", "-o", str(p), "--trials", "2", "--trajectories", "9000", "--steps", "10",
              "--family", "ZeroEnds", "--workers", str(workers)])
        paths.append(p.read_bytes())
    assert paths[0] == paths[1] == paths[2]


def test_env_worker_cap(tmp_path, monkeypatch):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    main(["simulate", "-o", str(a), *SMALL])
    monkeypatch.setenv("FLOWSDE_MAX_WORKERS", "1")
    main(["simulate", "-o", str(b), *SMALL])
    assert a.read_bytes() == b.read_bytes()


def test_deterministic_coarse_grid_underestimates(tmp_path):
    out = tmp_path / "det.csv"
    assert main(["simulate", "-o", str(out), "--family", "Deterministic", "--steps", "50",
                 "--trials", "3", "--trajectories", "20000", "--seed", "1"]) == 0
    assert read_csv(out)["var_err"][-1] < 0


def test_singular_pole_exit(tmp_path, capsys):
    code, out = _run(["simulate", "-o", tmp_path / "s.csv", "--family", "Singular", "--t-start", "1", *SMALL],
                     capsys)
    assert code == 1 and "pole" in out.err
    assert not (tmp_path / "s.csv").exists()


def test_divergence_exit(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("simulation:\n  divergence_bound: 1.0e-3\n")
    code, out = _run(["simulate", cfg, "-o", tmp_path / "d.csv", *SMALL], capsys)
    assert code == 2 and "diverged" in out.err
    assert (tmp_path / "d.csv").exists()


@pytest.mark.parametrize("args", [
    ["simulate", "--steps", "0"],
    ["simulate", "--family", "Brownian"],
    ["simulate", "--alpha", "-1"],
    ["simulate", "does-not-exist.yaml"],
    ["simulate", "--steps", "ten"],
    ["sweep-alpha", "--alphas", ""],
    ["sweep-alpha", "--alphas", "a,b"],
    ["sweep-steps", "--step-counts", ""],
    ["sweep-steps", "--step-counts", "10", "--families", "Nope"],
    ["verify", "--check", "nonexistent"],
    ["frobnicate"],
])
def test_validation_exit_code(args, tmp_path):
    if args[0] in ("simulate", "sweep-alpha", "sweep-steps"):
        args = args + ["-o", str(tmp_path / "x.csv")]
    try:
        code = main(args)
    except SystemExit as exc:
        code = exc.code
    assert code == 1


def test_invalid_config_message(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("sampler:\n  alpah: 1\n")
    code, out = _run(["simulate", cfg], capsys)
    assert code == 1 and "sampler.alpah" in out.err


def test_sweep_alpha(tmp_path):
    base = tmp_path / "sw.csv"
    assert main(["sweep-alpha", "-o", str(base), "--alphas", "0,1", "--steps", "100", "--trials", "3",
                 "--trajectories", "20000"]) == 0
    summary = read_csv(tmp_path / "sw_summary.csv")
    assert list(summary) == ["alpha", "kl_t0", "mean_err_t0", "var_err_t0", "var_std_t0"]
    assert summary["alpha"] == [0.0, 1.0]
    assert summary["kl_t0"][1] < summary["kl_t0"][0]
    assert (tmp_path / "sw_alpha0.csv").exists() and (tmp_path / "sw_alpha1.csv").exists()


def test_sweep_alpha_single_point_equals_simulate(tmp_path):
    main(["sweep-alpha", "-o", str(tmp_path / "sw.csv"), "--alphas", "0", *SMALL])
    main(["simulate", "-o", str(tmp_path / "one.csv"), "--alpha", "0", *SMALL])
    assert (tmp_path / "sw_alpha0.csv").read_bytes() == (tmp_path / "one.csv").read_bytes()
    one = read_csv(tmp_path / "one.csv")
    summary = read_csv(tmp_path / "sw_summary.csv")
    assert summary["kl_t0"] == [one["kl"][-1]] and summary["var_err_t0"] == [one["var_err"][-1]]


def test_sweep_alpha_decorrelate(tmp_path):
    main(["sweep-alpha", "-o", str(tmp_path / "a.csv"), "--alphas", "1,1", *SMALL])
    main(["sweep-alpha", "-o", str(tmp_path / "b.csv"), "--alphas", "1,1", "--decorrelate", *SMALL])
    paired = read_csv(tmp_path / "a_summary.csv")["kl_t0"]
    decor = read_csv(tmp_path / "b_summary.csv")["kl_t0"]
    assert paired[0] == paired[1] and decor[0] != decor[1]


def test_sweep_steps(tmp_path):
    base = tmp_path / "st.csv"
    assert main(["sweep-steps", "-o", str(base), "--step-counts", "50,100,500", "--families",
                 "Deterministic", "--trials", "4", "--trajectories", "20000", "--seed", "3"]) == 0
    summary = read_csv(tmp_path / "st_summary.csv")
    assert list(summary) == ["num_steps", "family", "var_err_t0", "var_std_t0", "kl_t0"]
    assert summary["num_steps"] == [50.0, 100.0, 500.0]
    err = [abs(e) for e in summary["var_err_t0"]]
    std = summary["var_std_t0"]
    assert err[0] + std[0] >= err[1] and err[1] + std[1] >= err[2]
    assert (tmp_path / "st_Deterministic_N500.csv").exists()


def test_sweep_steps_single_point_equals_simulate(tmp_path):
    main(["sweep-steps", "-o", str(tmp_path / "sw.csv"), "--step-counts", "20", "--families", "ZeroEnds",
          "--trials", "3", "--trajectories", "500"])
    main(["simulate", "-o", str(tmp_path / "one.csv"), "--family", "ZeroEnds", *SMALL])
    assert (tmp_path / "sw_ZeroEnds_N20.csv").read_bytes() == (tmp_path / "one.csv").read_bytes()


def test_verify(capsys):
    code, out = _run(["verify"], capsys)
    assert code == 0
    assert "9/9 checks passed" in out.out
    assert out.out.count("PASS") == 9


def test_verify_list(capsys):
    code, out = _run(["verify", "--list"], capsys)
    assert code == 0 and "singular_sde_is_family_member" in out.out and "PASS" not in out.out


def test_verify_perturbed(capsys):
    code, out = _run(["verify", "--perturb", "1e-3"], capsys)
    assert code == 3 and "FAIL  singular_sde_is_family_member" in out.out


def test_print_config_round_trip(tmp_path, capsys):
    code, out = _run(["print-config"], capsys)
    assert code == 0
    path = tmp_path / "d.yaml"
    path.write_text(out.out)
    code, again = _run(["print-config", path], capsys)
    assert again.out == out.out


def test_json_format(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("output:\n  format: json\n")
    out = tmp_path / "r.json"
    assert main(["simulate", str(cfg), "-o", str(out), *SMALL]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["rows"]) == 21 and set(doc["rows"][0]) == set(CSV_HEADER)


def test_gnuplot_and_figure(tmp_path):
    out = tmp_path / "r.csv"
    assert main(["simulate", "-o", str(out), "--gnuplot-script", "--figure", *SMALL]) == 0
    gp = (tmp_path / "r.gp").read_text()
    assert '"r.csv"' in gp and "set datafile separator" in gp
    png = (tmp_path / "r.png").read_bytes()
    assert png[:8] == b"\x89PNG\r\n\x1a\n"


def test_sweep_figure(tmp_path):
    assert main(["sweep-alpha", "-o", str(tmp_path / "sw.csv"), "--alphas", "0,2", "--figure", *SMALL]) == 0
    assert (tmp_path / "sw_summary.png").stat().st_size > 0


def test_console_script(tmp_path):
    res = subprocess.run([sys.executable, "-m", "flowsde.cli", "verify", "--list"], capture_output=True, text=True)
    assert res.returncode == 0 and len(res.stdout.splitlines()) == 9
