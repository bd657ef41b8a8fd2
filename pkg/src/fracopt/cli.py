"""``fracopt <command> --config <path> [--out <dir>] [--seed <n>]``.

Exit codes: 0 success, 2 unreadable or malformed config, 3 violated
invariant or refused check, 4 solver failure. Every run writes
``manifest.txt`` into the output directory next to its CSV and report files.
"""

from __future__ import annotations

import argparse
import math
import os
import platform
import sys
import tempfile
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .adjoint import AdjointProblem, solve_adjoint_reversal, solve_adjoint_transpose
from .config import COMMANDS, ConfigError, RunConfig, load_config, normalized_text
from .errors import DomainError, ShapeError, SolverError
from .fracops import mittag_leffler
from .grid import SpaceGrid
from .kkt import kkt_report
from .optimize import projected_gradient
from .state import StateProblem, solve_state, spectral_oracle

__all__ = ["main", "run"]

EXIT_OK, EXIT_PARSE, EXIT_INVARIANT, EXIT_SOLVER = 0, 2, 3, 4


class Refusal(Exception):
    """A check declined to run on the given data; maps to exit code 3."""


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    _atomic_write(path, "\n".join(lines) + "\n")


def write_field(path: Path, t: np.ndarray, values: np.ndarray, name: str) -> None:
    """One row per time node: ``t`` followed by the nodal values in flat grid order."""
    header = ["t"] + [f"{name}_{j}" for j in range(values.shape[1])]
    write_csv(path, header, ([tn, *row] for tn, row in zip(t, values)))


def write_report(path: Path, items: dict) -> None:
    _atomic_write(path, "".join(f"{k} = {_fmt(v)}\n" for k, v in items.items()))


def write_manifest(out: Path, cfg: RunConfig, command: str, seed: int, files) -> None:
    head = [
        f"command = {command}",
        f"seed = {seed}",
        f"fracopt = {__version__}",
        f"numpy = {np.__version__}",
        f"scipy = {scipy.__version__}",
        f"python = {platform.python_version()}",
        f"outputs = {', '.join(sorted(files))}",
        "",
        "# effective configuration",
        "",
    ]
    _atomic_write(out / "manifest.txt", "\n".join(head) + normalized_text(cfg, seed, command))


def _coords(out: Path, grid) -> None:
    c = grid.coordinates()
    names = ["j", "x"] + (["y"] if grid.dim == 2 else [])
    write_csv(out / "grid.csv", names, ([j, *[ci[j] for ci in c]] for j in range(grid.dof)))


def _state_problem(cfg: RunConfig, N: int | None = None, alpha: float | None = None, grid=None):
    grid = cfg.grid() if grid is None else grid
    mesh = cfg.mesh(N)
    return StateProblem(cfg.frac(N, alpha), mesh, grid, cfg.y0.spatial(grid), cfg.u.values(grid, mesh),
                        corrected=cfg.corrected)


def cmd_solve_state(cfg: RunConfig, out: Path, rng) -> dict:
    p = _state_problem(cfg)
    y = solve_state(p)
    write_field(out / "state.csv", p.mesh.nodes, y.values, "y")
    _coords(out, p.grid)
    rep = dict(alpha=cfg.alpha, N=cfg.N, dof=p.grid.dof, max_norm=y.max_norm(), sup_h_norm=y.sup_h_norm())
    if cfg.alpha < 1.0:
        ref = spectral_oracle(p)
        rep["oracle_max_diff"] = float(np.max(np.abs(ref.values - y.values)))
        rep["oracle_diff_T"] = float(np.max(np.abs(ref.values[-1] - y.values[-1])))
    write_report(out / "report.txt", rep)
    return rep


def cmd_solve_adjoint(cfg: RunConfig, out: Path, rng) -> dict:
    prob = cfg.control_problem()
    u = cfg.u.values(prob.grid, prob.mesh)
    y = prob.state(u)
    src = prob.derivs(y, u).L_y
    ap = AdjointProblem(prob.frac, prob.mesh, prob.grid, src, corrected=cfg.corrected)
    phi_t = solve_adjoint_transpose(ap).values
    phi_r = solve_adjoint_reversal(ap).values
    t = prob.mesh.nodes
    write_field(out / "adjoint.csv", t, phi_t, "phi")
    write_field(out / "adjoint_reversal.csv", t, phi_r, "phi")
    _coords(out, prob.grid)
    rep = dict(alpha=cfg.alpha, N=cfg.N, objective=prob.objective(u, y),
               adjoint_gap_L2=prob.norm(phi_t - phi_r), adjoint_gap_max=float(np.max(np.abs(phi_t - phi_r))))
    write_report(out / "report.txt", rep)
    return rep


def _optimize(cfg: RunConfig, out: Path):
    prob = cfg.control_problem()
    u0 = cfg.u.values(prob.grid, prob.mesh)
    u, trace = projected_gradient(prob, cfg.optimizer, u0)
    t = prob.mesh.nodes
    write_field(out / "control.csv", t, u, "u")
    write_field(out / "state.csv", t, prob.state(u).values, "y")
    rows = list(trace.csv_rows())
    write_csv(out / "trace.csv", rows[0], rows[1:])
    _coords(out, prob.grid)
    rep = dict(alpha=cfg.alpha, N=cfg.N, status=trace.status, converged=trace.converged,
               iterations=trace.final.iter, objective=trace.final.f,
               stationarity_residual=trace.final.residual)
    return prob, u, trace, rep


def cmd_optimize(cfg: RunConfig, out: Path, rng) -> dict:
    prob, u, trace, rep = _optimize(cfg, out)
    write_report(out / "report.txt", rep)
    if not trace.converged:
        raise SolverError(f"optimizer stopped without convergence: {trace.status}")
    return rep


def cmd_kkt_check(cfg: RunConfig, out: Path, rng) -> dict:
    prob, u, trace, orep = _optimize(cfg, out)
    rep, sonc, growth = kkt_report(u, prob, cfg.directions, cfg.trials, cfg.radii, rng)
    items = dict(optimizer_status=trace.status, **rep.as_dict())
    if growth.note:
        items["growth_note"] = growth.note
    if sonc.note:
        items["sonc_note"] = sonc.note
    write_report(out / "kkt_report.txt", items)
    write_csv(out / "directions.csv", ["index", "normalized_quadratic_form"], enumerate(sonc.values))
    write_csv(out / "growth.csv", ["radius", "rho_min"], growth.per_radius)
    if growth.status == "refused":
        raise Refusal(f"second-order growth check refused: {growth.note}")
    return items


def _exact_mode(cfg: RunConfig, grid, mesh) -> np.ndarray:
    ks = cfg.y0.modes
    lam = sum((k * math.pi / ell) ** 2 for k, ell in zip(ks, grid.extents))
    relax = np.asarray(mittag_leffler(cfg.alpha, 1.0, -lam * mesh.nodes**cfg.alpha))
    return relax[:, None] * cfg.y0.spatial(grid)[None, :]


def _rates(errs) -> list:
    return [math.nan] + [math.log2(e0 / e1) if e0 > 0 and e1 > 0 else math.nan
                         for e0, e1 in zip(errs[:-1], errs[1:])]


def cmd_convergence_study(cfg: RunConfig, out: Path, rng) -> dict:
    """Errors and observed orders under repeated halving of ``tau`` (and ``h`` if requested)."""
    if cfg.refine_space and not (cfg.y0.kind == "mode" and cfg.u.kind == "expr"
                                 and np.all(cfg.u.values(cfg.grid(), None) == 0)):
        raise DomainError("refine_space needs y0 = mode:k and u = 0 so the exact solution is known")
    Ns, em, eT = [], [], []
    counts = cfg.counts
    for r in range(cfg.refinements + 1):
        N = cfg.N * 2**r
        grid = SpaceGrid(cfg.extents, counts)
        p = _state_problem(cfg, N, grid=grid)
        y = solve_state(p).values
        ref = _exact_mode(cfg, grid, p.mesh) if cfg.refine_space else spectral_oracle(p).values
        Ns.append(N)
        em.append(float(np.max(np.abs(y - ref))))
        eT.append(float(np.max(np.abs(y[-1] - ref[-1]))))
        counts = tuple(2 * c + 1 for c in counts)
    rm, rT = _rates(em), _rates(eT)
    write_csv(out / "convergence.csv", ["N", "tau", "err_max", "rate_max", "err_T", "rate_T"],
              ([N, cfg.T / N, a, b, c, d] for N, a, b, c, d in zip(Ns, em, rm, eT, rT)))
    rep = dict(alpha=cfg.alpha, target_rate=2.0 - cfg.alpha if cfg.alpha < 1 else 1.0,
               final_rate_max=rm[-1], final_rate_T=rT[-1], final_err_max=em[-1], final_err_T=eT[-1])
    write_report(out / "report.txt", rep)
    return rep


def cmd_limit_study(cfg: RunConfig, out: Path, rng) -> dict:
    """Distance of the order-``alpha`` solution to the classical heat solution."""
    ref = solve_state(_state_problem(cfg, alpha=1.0)).values
    rows = []
    for al in cfg.alphas:
        y = solve_state(_state_problem(cfg, alpha=al)).values
        rows.append((al, float(np.max(np.abs(y - ref))), float(np.max(np.abs(y[-1] - ref[-1])))))
    write_csv(out / "limit.csv", ["alpha", "max_diff", "diff_T"], rows)
    rep = {f"max_diff[{_fmt(a)}]": d for a, d, _ in rows}
    write_report(out / "report.txt", rep)
    return rep


HANDLERS = {
    "solve-state": cmd_solve_state,
    "solve-adjoint": cmd_solve_adjoint,
    "optimize": cmd_optimize,
    "kkt-check": cmd_kkt_check,
    "convergence-study": cmd_convergence_study,
    "limit-study": cmd_limit_study,
}


def run(command: str, config_path, out=None, seed=None) -> int:
    """Execute one command; returns the process exit code."""
    try:
        cfg = load_config(config_path, command)
    except ConfigError as exc:
        return _fail(EXIT_PARSE, "parse error", exc)
    except (DomainError, ShapeError) as exc:
        return _fail(EXIT_INVARIANT, "invariant violation", exc)
    seed = cfg.seed if seed is None else int(seed)
    outdir = Path(out if out is not None else cfg.base / cfg.out)
    rng = np.random.default_rng(seed)
    try:
        try:
            outdir.mkdir(parents=True, exist_ok=True)
            HANDLERS[command](cfg, outdir, rng)
        finally:
            files = [p.name for p in outdir.glob("*") if p.name != "manifest.txt" and not p.name.startswith(".")]
            write_manifest(outdir, cfg, command, seed, files)
    except Refusal as exc:
        return _fail(EXIT_INVARIANT, "refused", exc)
    except ConfigError as exc:
        return _fail(EXIT_PARSE, "parse error", exc)
    except (DomainError, ShapeError) as exc:
        return _fail(EXIT_INVARIANT, "invariant violation", exc)
    except (SolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_SOLVER, "solver failure", exc)
    return EXIT_OK


def _fail(code: int, category: str, exc: Exception) -> int:
    print(f"fracopt: {category}: {exc}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fracopt", description="Time-fractional diffusion control toolkit.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True, help="INI configuration file")
    ap.add_argument("--out", help="output directory (default: [run] out, relative to the config)")
    ap.add_argument("--seed", type=int, help="overrides [run] seed")
    args = ap.parse_args(argv)
    return run(args.command, args.config, args.out, args.seed)


if __name__ == "__main__":
    sys.exit(main())
