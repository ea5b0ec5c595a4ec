import csv
import io
import math

import numpy as np
import pytest

from dimred import cli
from dimred.plotting import render
from dimred.sweep import fit_slope

FORCED_FAILURE = """[nsrobin]
eps = 0.1, 0.05, 0.025
z = -1.472-1.023j
n_s = 8
n_t = 8
"""


def write(tmp_path, text, name="cfg.ini"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text(encoding="utf-8"))))


def test_toy_run_deterministic(tmp_path):
    cfg = write(tmp_path, "[toy]\ninstances = 100\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(["toy", "--config", str(cfg), "--seed", "42", "--out", str(a), "--jobs", "1",
                     "--check"]) == 0
    assert cli.main(["toy", "--config", str(cfg), "--seed", "42", "--out", str(b), "--jobs", "2"]) == 0
    assert len(rows(a)) == 100
    assert a.read_bytes() == b.read_bytes()
    c = tmp_path / "c.csv"
    cli.main(["toy", "--config", str(cfg), "--seed", "43", "--out", str(c), "--jobs", "1"])
    assert c.read_bytes() != a.read_bytes()


def test_csv_format(tmp_path):
    cfg = write(tmp_path, "[toy]\ninstances = 5\nseed = 1\n")
    out = tmp_path / "t.csv"
    assert cli.main(["toy", "--config", str(cfg), "--out", str(out), "--jobs", "1"]) == 0
    r = rows(out)
    assert r and all(v != "" and math.isfinite(float(v)) for row in r for v in row.values())


@pytest.mark.parametrize("text", [
    "[layer]\neps =\n",
    "[layer]\neps = 0.1\nepsilon = 0.2\n",
    "[layer]\neps = 0.1\nn_s = 4\n",
    "[layer]\neps = -0.1, 0.2\n",
    "[shell]\nalpha = 10\n",
    "[layer]\nkappa0 = 1\n",
    "[layer]\neps = 0.1\n[bogus]\nx = 1\n",
    "not an ini file",
])
def test_config_errors_exit_1(tmp_path, text):
    cfg = write(tmp_path, text)
    assert cli.main(["layer", "--config", str(cfg), "--jobs", "1"]) == 1


def test_missing_config_file(tmp_path):
    assert cli.main(["toy", "--config", str(tmp_path / "none.ini")]) == 1


def test_parse_config_types():
    p = cli.parse_config("nsrobin", "[nsrobin]\neps = 0.1 0.05\nz = -2, 0.5+1i\nvariational = no\n")
    assert p["eps"] == [0.1, 0.05]
    assert p["z"] == [-2 + 0j, 0.5 + 1j]
    assert p["variational"] is False and p["n_s"] == 64
    assert cli.parse_config("bo", "[bo]\nh = 0.1\nR = 6\n")["R"] == 6.0


def test_nsrobin_forced_failure_exit_2(tmp_path):
    cfg = write(tmp_path, FORCED_FAILURE + "variational = no\n")
    out = tmp_path / "ns.csv"
    assert cli.main(["nsrobin", "--config", str(cfg), "--out", str(out), "--jobs", "1", "--check"]) == 2
    assert len(rows(out)) == 3
    assert (tmp_path / "ns_accretivity.csv").exists()
    # without --check the same sweep succeeds
    assert cli.main(["nsrobin", "--config", str(cfg), "--out", str(out), "--jobs", "1"]) == 0


def test_nsrobin_passing_sweep(tmp_path):
    cfg = write(tmp_path, "[nsrobin]\neps = 0.1, 0.05, 0.025\nz = -2\nn_s = 32\nn_t = 8\ntrials = 100\n")
    code, art = cli.run(cli.SweepConfig("nsrobin", cli.parse_config("nsrobin", cfg.read_text()),
                                        check=True))
    assert code == 0
    assert all(c.passed for c in art["checks"])
    eps = [float(r["eps"]) for r in rows_from(art["csv"])]
    assert eps == sorted(eps)


def rows_from(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_plots_written(tmp_path):
    cfg = write(tmp_path, "[nsrobin]\neps = 0.1, 0.05, 0.025\nz = -2, 0.5+1j\nn_s = 16\nn_t = 8\n"
                          "variational = no\n")
    out, plots = tmp_path / "ns.csv", tmp_path / "plots"
    assert cli.main(["nsrobin", "--config", str(cfg), "--out", str(out), "--plot", str(plots),
                     "--jobs", "1"]) == 0
    svgs = list(plots.glob("*.svg"))
    assert svgs and svgs[0].read_text().lstrip().startswith("<?xml")


def test_plot_failure_does_not_fail_run(tmp_path):
    blocker = tmp_path / "plots"
    blocker.write_text("not a directory")
    cfg = write(tmp_path, "[toy]\ninstances = 3\n")
    assert cli.main(["toy", "--config", str(cfg), "--out", str(tmp_path / "t.csv"),
                     "--plot", str(blocker), "--jobs", "1"]) == 0
    assert render("nsrobin", "garbage,\n1", blocker) == []


def test_fit_slope_examples():
    x = np.array([0.5, 1.0, 2.0, 4.0])
    f = fit_slope(zip(x, x**2))
    assert f.slope == pytest.approx(2.0, abs=1e-12) and f.residual < 1e-12
    g = fit_slope(zip(x, 3 * x))
    assert g.slope == pytest.approx(1.0, abs=1e-12)
    assert g.intercept == pytest.approx(math.log(3), abs=1e-12)
    rng = np.random.default_rng(7)
    xs = np.geomspace(0.01, 1, 10)
    n = fit_slope(zip(xs, xs**1.5 * (1 + 0.01 * rng.uniform(-1, 1, xs.size))))
    assert 1.45 <= n.slope <= 1.55


@pytest.mark.parametrize("pairs", [[(1, 1), (2, 0), (3, 3)], [(1, 1), (-2, 2), (3, 3)],
                                   [(1, 1), (2, 2)]])
def test_fit_slope_rejects(pairs):
    with pytest.raises(ValueError):
        fit_slope(pairs)


@pytest.mark.parametrize("model,text", [
    ("bo", "[bo]\nh = 0.2, 0.1\n"),
    ("shell", "[shell]\nalpha = 10\n"),
    ("nsrobin", "[nsrobin]\neps = 0.1, 0.05\n"),
])
def test_check_needs_enough_points(tmp_path, model, text):
    cfg = write(tmp_path, text)
    assert cli.main([model, "--config", str(cfg), "--jobs", "1", "--check"]) == 1
