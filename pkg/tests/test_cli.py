import numpy as np
import pytest

from waveholtz import ScalarField, UniformGrid, inner_product
from waveholtz.cli import (
    ConfigError,
    csq_presets,
    forcing_presets,
    main,
    parse_config,
    read_field_dump,
    report_summary,
    run_sweep,
    write_field_dump,
)

BASE_CONFIG = """\
[problem]
dim = 1
lo = 0
hi = 1
n = 60
csq = constant
forcing = gaussian1d
bc = dirichlet

[solver]
method = {method}
tol = 1e-10
max_iters = {max_iters}
periods = 1

[sweep]
omegas = {omegas}

[output]
dir = {outdir}
"""


def _write_config(tmp_path, name="run.ini", **kw):
    kw.setdefault("method", "gmres")
    kw.setdefault("max_iters", 500)
    kw.setdefault("omegas", "1.22")
    kw.setdefault("outdir", str(tmp_path / "out"))
    path = tmp_path / name
    path.write_text(BASE_CONFIG.format(**kw))
    return path


def test_parse_config_roundtrip(tmp_path):
    path = _write_config(tmp_path, omegas="1.22, 4.0")
    cfg = parse_config(path)
    assert cfg.dim == 1
    assert cfg.omegas == (1.22, 4.0)
    assert cfg.method == "gmres"
    assert cfg.bc == ("dirichlet", "dirichlet")


def test_parse_config_range_syntax(tmp_path):
    path = _write_config(tmp_path, omegas="1:3:5")
    cfg = parse_config(path)
    assert cfg.omegas == tuple(np.linspace(1.0, 3.0, 5))


def test_parse_config_missing_file():
    with pytest.raises(ConfigError):
        parse_config("/nonexistent/path.ini")


def test_sweep_writes_artifacts(tmp_path):
    path = _write_config(tmp_path, omegas="1.22, 4.0")
    cfg = parse_config(path)
    out = run_sweep(cfg, tmp_path / "out")
    summary = out["summary"]
    lines = summary.read_text().splitlines()
    assert len(lines) == 3  # header + 2 rows
    assert lines[0].startswith("omega,method,n,dofs,iters")
    assert (tmp_path / "out" / "history_gmres_omega1p22.csv").exists()
    assert (tmp_path / "out" / "solution_gmres_omega4.bin").exists()
    assert (tmp_path / "out" / "solution_gmres_omega4.bin.hdr").exists()


def test_sweep_deterministic_rerun(tmp_path):
    path = _write_config(tmp_path)
    cfg = parse_config(path)
    out1 = run_sweep(cfg, tmp_path / "a")
    out2 = run_sweep(cfg, tmp_path / "b")
    rows1 = [r.rsplit(",", 1)[0] for r in out1["summary"].read_text().splitlines()]
    rows2 = [r.rsplit(",", 1)[0] for r in out2["summary"].read_text().splitlines()]
    assert rows1 == rows2  # identical except the trailing wall_time column
    b1 = (tmp_path / "a" / "solution_gmres_omega1p22.bin").read_bytes()
    b2 = (tmp_path / "b" / "solution_gmres_omega1p22.bin").read_bytes()
    assert b1 == b2


def test_sweep_threaded_matches_serial(tmp_path):
    path = _write_config(tmp_path, omegas="1.22, 2.0, 3.1")
    cfg = parse_config(path)
    out1 = run_sweep(cfg, tmp_path / "serial", threads=1)
    out2 = run_sweep(cfg, tmp_path / "threaded", threads=3)
    rows1 = [r.rsplit(",", 1)[0] for r in out1["summary"].read_text().splitlines()]
    rows2 = [r.rsplit(",", 1)[0] for r in out2["summary"].read_text().splitlines()]
    assert rows1 == rows2


def test_field_dump_round_trip(tmp_path, rng):
    g = UniformGrid.box((-1.0, 0.0), (1.0, 2.0), (6, 9))
    vals = rng.standard_normal(g.shape)
    path = tmp_path / "field.bin"
    write_field_dump(path, g, vals)
    g2, vals2 = read_field_dump(path)
    assert g2 == g
    assert np.array_equal(vals, vals2)


def test_forcing_preset_values():
    g = UniformGrid.line(0.0, 1.0, 50)
    om = 3.0
    f = forcing_presets("gaussian1d", g, om)
    # value at x = 0 is omega^2 before any Dirichlet zeroing
    assert f.values[0] == pytest.approx(om**2)

    d = forcing_presets("delta", g, om)
    ones = ScalarField.constant(g, 1.0)
    assert inner_product(d, ones) == pytest.approx(-1.0)

    g2 = UniformGrid.box(-1.0, 1.0, 200)  # node exactly at (0.01, 0.015)? h=0.01
    f2 = forcing_presets("gaussian2d", g2, om)
    i = int(np.argmin(np.abs(g2.axis_coords(0) - 0.01)))
    j = int(np.argmin(np.abs(g2.axis_coords(1) - 0.015)))
    assert f2.values[i, j] == pytest.approx(-om**2, rel=1e-2)

    with pytest.raises(ConfigError):
        forcing_presets("bogus", g, om)
    with pytest.raises(ConfigError):
        forcing_presets("gaussian2d", g, om)


def test_csq_presets():
    g = UniformGrid.box(-1.0, 1.0, 16)
    lens = csq_presets("lens2d", g)
    centre = lens.values[8, 8]
    assert centre == pytest.approx(0.6)
    assert lens.values[0, 0] == pytest.approx(1.0, abs=1e-6)
    const = csq_presets("constant", g, value=2.5)
    assert np.all(const.values == 2.5)


def test_report_summary_synthetic_slope(tmp_path):
    rows = ["omega,method,n,dofs,iters,operator_applications,rhs_evals,"
            "converged,final_residual,measured_rate,delta_h,rate_bound,wall_time"]
    for om in (2.0, 4.0, 8.0, 16.0):
        rows.append(f"{om},gmres,10,11,{int(3 * om)},1,1,1,1e-11,0.5,,,0.1")
    path = tmp_path / "synth.csv"
    path.write_text("\n".join(rows) + "\n")
    text = report_summary([path])
    slope = float(text.split("slope (iters vs omega):")[1].split()[0])
    assert slope == pytest.approx(1.0, abs=0.01)


def test_report_summary_empty_and_malformed(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text(
        "omega,method,n,dofs,iters,operator_applications,rhs_evals,"
        "converged,final_residual,measured_rate,delta_h,rate_bound,wall_time\n"
    )
    assert "no rows" in report_summary([empty])

    bad = tmp_path / "bad.csv"
    bad.write_text(empty.read_text() + "1.0,gmres,10\n")
    with pytest.raises(ConfigError, match=":2"):
        report_summary([bad])


def test_main_exit_codes(tmp_path, monkeypatch):
    path = _write_config(tmp_path)
    out = tmp_path / "cli_out"
    assert main(["sweep", "--config", str(path), "--out", str(out)]) == 0
    assert (out / "summary.csv").exists()

    # single-frequency solve runs the same pipeline
    assert main(["solve", "--config", str(path), "--out", str(out / "single")]) == 0

    # two sweep frequencies is a config error for `solve`
    path2 = _write_config(tmp_path, name="two.ini", omegas="1.0, 2.0")
    assert main(["solve", "--config", str(path2), "--out", str(out)]) == 2

    assert main(["report", str(out / "summary.csv")]) == 0

    # --strict surfaces non-convergence as exit code 3
    path3 = _write_config(tmp_path, name="stall.ini", method="fixed_point",
                          max_iters=2, omegas="12.498")
    assert main(["sweep", "--config", str(path3), "--out", str(out / "s"),
                 "--strict"]) == 3


def test_env_var_output_dir(tmp_path, monkeypatch):
    path = _write_config(tmp_path)
    envdir = tmp_path / "from_env"
    monkeypatch.setenv("WAVEHOLTZ_OUTDIR", str(envdir))
    assert main(["sweep", "--config", str(path)]) == 0
    assert (envdir / "summary.csv").exists()


TUNABLE_CONFIG = """\
[problem]
dim = 1
lo = 0
hi = 1
n = 129
forcing = delta
bc = dirichlet

[solver]
method = fixed_point
tol = 1e-6
max_iters = 4000

[filter]
kind = {kind}
a0 = -0.1
a = 0.05, -0.02
n_coeffs = 4
resonant_lambda = {reslam}

[sweep]
omegas = {omega}

[output]
dir = {outdir}
"""


def test_cli_tunable_filter_path(tmp_path):
    import math

    path = tmp_path / "tun.ini"
    path.write_text(TUNABLE_CONFIG.format(
        kind="tunable", reslam=4 * math.pi, omega=2.0,
        outdir=str(tmp_path / "out")))
    assert main(["sweep", "--config", str(path), "--out",
                 str(tmp_path / "out")]) == 0


def test_cli_optimize_filter_path(tmp_path):
    import math

    path = tmp_path / "opt.ini"
    path.write_text(TUNABLE_CONFIG.format(
        kind="optimize", reslam=4 * math.pi, omega=4.1 * math.pi,
        outdir=str(tmp_path / "out")))
    assert main(["sweep", "--config", str(path), "--out",
                 str(tmp_path / "out"), "--seed", "3"]) == 0
    summary = (tmp_path / "out" / "summary.csv").read_text().splitlines()
    assert len(summary) == 2


def test_report_counts_fixed_point_bound_violations(tmp_path):
    header = ("omega,method,n,dofs,iters,operator_applications,rhs_evals,"
              "converged,final_residual,measured_rate,delta_h,rate_bound,"
              "wall_time")
    rows = [header,
            "2.0,fixed_point,10,11,5,5,50,1,1e-11,0.5,0.4,0.952,0.1",
            "3.0,fixed_point,10,11,5,5,50,1,1e-11,0.95,0.57,0.9,0.1",
            "4.0,fixed_point,10,11,5,5,50,1,1e-11,0.9999,0.02,0.99988,0.1"]
    path = tmp_path / "fp.csv"
    path.write_text("\n".join(rows) + "\n")
    text = report_summary([path])
    assert "contraction-bound violations: 0" not in text
    assert "contraction-bound violations: 1" in text
