import math
from pathlib import Path

import numpy as np
import pytest

from fracopt import DomainError, ShapeError, SpaceGrid, TimeMesh
from fracopt.cli import main, run
from fracopt.config import COMMANDS, ConfigError, FieldSpec, parse_config, parse_expression

BASE = """\
[problem]
alpha = {alpha}
T = 1
N = 24
[grid]
extents = 1.0
counts = 11
[state]
y0 = mode:1
u = 0
[cost]
variant = tracking
gamma = 0.1
target = 3*sin(pi*x)*(1 - 2*t)
[bounds]
a = {a}
b = 0.5
[kkt]
directions = 6
trials = 4
radii = 0.1, 0.01
[study]
refinements = 3
alphas = 0.9, 0.99
[run]
seed = 3
"""


def write_cfg(tmp_path, alpha=0.75, a=-0.5, extra="", name="c.ini"):
    p = tmp_path / name
    p.write_text(BASE.format(alpha=alpha, a=a) + extra)
    return p


class TestExpressions:
    def test_evaluates(self):
        f = parse_expression("2*sin(pi*x)*exp(-t) + y**2 - -1")
        assert f(0.0, 0.5, 3.0) == pytest.approx(2 + 9 + 1)
        assert np.allclose(f(np.zeros(3), np.array([0.0, 0.5, 1.0])), [1.0, 3.0, 1.0])

    @pytest.mark.parametrize("text", ["__import__('os')", "x.real", "abs(x)", "x if t else y", "z", "sin(x, t)",
                                      "x // 2", "'a'", "[x]", "sin(x", "True", "lambda: 0"])
    def test_rejects(self, text):
        with pytest.raises(ConfigError):
            parse_expression(text)


class TestFieldSpec:
    def test_mode(self):
        g = SpaceGrid.rectangle(1.0, 2.0, 5, 6)
        v = FieldSpec.parse("mode:2,1", Path(".")).spatial(g)
        x, y = g.coordinates()
        assert np.allclose(v, np.sin(2 * math.pi * x) * np.sin(math.pi * y / 2))
        with pytest.raises(ShapeError):
            FieldSpec.parse("mode:1", Path(".")).spatial(g)
        with pytest.raises(DomainError):
            FieldSpec.parse("mode:6,1", Path(".")).spatial(g)

    @pytest.mark.parametrize("text", ["mode:", "mode:0", "mode:a", "csv:missing.csv"])
    def test_bad_sources(self, text, tmp_path):
        with pytest.raises(ConfigError):
            FieldSpec.parse(text, tmp_path)

    def test_csv(self, tmp_path):
        g, m = SpaceGrid.interval(1.0, 4), TimeMesh(1.0, 2)
        (tmp_path / "s.csv").write_text("1,2,3,4\n")
        spec = FieldSpec.parse("csv:s.csv", tmp_path)
        assert np.array_equal(spec.spatial(g), [1, 2, 3, 4])
        assert spec.values(g, m).shape == (3, 4)
        (tmp_path / "f.csv").write_text("1,2,3,4\n5,6,7,8\n")
        with pytest.raises(ShapeError):
            FieldSpec.parse("csv:f.csv", tmp_path).values(g, m)

    def test_space_time_expression(self):
        g, m = SpaceGrid.interval(1.0, 3), TimeMesh(2.0, 4)
        v = FieldSpec.parse("t*x", Path(".")).values(g, m)
        assert np.allclose(v, np.outer(m.nodes, g.coordinates()[0]))
        with pytest.raises(DomainError):
            FieldSpec.parse("1/(x - 0.5)", Path(".")).values(g, m)


class TestParseConfig:
    def test_defaults_and_values(self, tmp_path):
        cfg = parse_config(BASE.format(alpha=0.6, a=-0.5), tmp_path)
        assert cfg.alpha == 0.6 and cfg.N == 24 and cfg.radii == (0.1, 0.01) and cfg.seed == 3
        assert cfg.optimizer.max_iters == 200 and not cfg.corrected
        assert cfg.control_problem().shape == (25, 11)

    @pytest.mark.parametrize("edit", [("alpha = {alpha}", "alpha = 1.2"), ("alpha = {alpha}", "alpha = 0"),
                                      ("a = {a}", "a = 0.5"), ("N = 24", "N = 9000"),
                                      ("counts = 11", "counts = 70000")])
    def test_invariants(self, edit, tmp_path):
        with pytest.raises(DomainError):
            parse_config(BASE.replace(*edit).format(alpha=0.6, a=-0.5), tmp_path)

    @pytest.mark.parametrize("edit", [("N = 24", "N = many"), ("N = 24\n", ""), ("[grid]", "grid"),
                                      ("counts = 11", "counts = 11, 12"), ("mode:1", "exp(")])
    def test_malformed(self, edit, tmp_path):
        with pytest.raises(ConfigError):
            parse_config(BASE.replace(*edit).format(alpha=0.6, a=-0.5), tmp_path)


def read_dir(d: Path) -> dict:
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.mark.parametrize("command", COMMANDS)
def test_each_command_succeeds(command, tmp_path, capsys):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "out"
    assert main([command, "--config", str(cfg), "--out", str(out)]) == 0
    files = read_dir(out)
    assert "manifest.txt" in files
    man = files["manifest.txt"].decode()
    assert f"command = {command}" in man and "seed = 3" in man
    for name, data in files.items():
        if name.endswith(".csv"):
            rows = data.decode().splitlines()
            assert len(rows) >= 2 and len({r.count(",") for r in rows}) == 1
            assert "nan" not in data.decode().lower() or command.endswith("study")


def test_expected_outputs(tmp_path):
    cfg = write_cfg(tmp_path)
    run("kkt-check", cfg, tmp_path / "k")
    assert {"kkt_report.txt", "directions.csv", "growth.csv", "control.csv"} <= set(read_dir(tmp_path / "k"))
    report = (tmp_path / "k" / "kkt_report.txt").read_text()
    assert "growth_check = PASS" in report
    run("convergence-study", cfg, tmp_path / "c")
    head = (tmp_path / "c" / "convergence.csv").read_text().splitlines()[0]
    assert head == "N,tau,err_max,rate_max,err_T,rate_T"


def test_seed_determinism(tmp_path):
    cfg = write_cfg(tmp_path)
    for d in ("r1", "r2"):
        assert run("kkt-check", cfg, tmp_path / d, seed=11) == 0
    assert read_dir(tmp_path / "r1") == read_dir(tmp_path / "r2")
    assert run("kkt-check", cfg, tmp_path / "r3", seed=12) == 0
    assert read_dir(tmp_path / "r3")["directions.csv"] != read_dir(tmp_path / "r1")["directions.csv"]


def test_exit_codes(tmp_path, capsys):
    assert run("optimize", write_cfg(tmp_path, a=0.5, name="ab.ini"), tmp_path / "o1") == 3
    assert "invariant violation" in capsys.readouterr().err
    bad = tmp_path / "bad.ini"
    bad.write_text("[problem\nalpha = 0.5\n")
    assert run("solve-state", bad, tmp_path / "o2") == 2
    assert run("solve-state", tmp_path / "none.ini", tmp_path / "o3") == 2
    assert run("kkt-check", write_cfg(tmp_path, alpha=0.4, name="low.ini"), tmp_path / "o4") == 3
    last = capsys.readouterr().err.splitlines()[-1]
    assert last.startswith("fracopt: refused:") and "1/2" in last
    assert (tmp_path / "o4" / "manifest.txt").exists()


def test_solver_budget_exit(tmp_path, capsys):
    cfg = write_cfg(tmp_path, extra="[optimizer]\nmax_iters = 1\n")
    assert run("optimize", cfg, tmp_path / "o") == 4
    assert "solver failure" in capsys.readouterr().err


def test_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["bogus", "--config", "x"])
    assert exc.value.code == 2
