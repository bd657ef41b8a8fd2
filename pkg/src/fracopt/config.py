"""Run configuration: INI sections, validated into a frozen :class:`RunConfig`.

Field sources (``y0``, ``u``, ``target``) accept

* an arithmetic expression in ``t``, ``x``, ``y``, ``pi`` with ``sin``,
  ``cos``, ``exp`` (``y`` is the second space coordinate on rectangles);
* ``mode:k`` or ``mode:k,l``, the sine mode with those wave numbers;
* ``csv:<path>``, a file of values relative to the config file.

Example::

    [problem]
    alpha = 0.5
    T = 1
    N = 256

    [grid]
    extents = 1.0
    counts = 63

    [state]
    y0 = mode:1
    u = 0
"""

from __future__ import annotations

import ast
import configparser
import io
import math
import operator
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cost import CostModel
from .errors import DomainError, FracOptError, ShapeError
from .fracops import FracOrder, TimeMesh
from .grid import SpaceGrid
from .optimize import ControlBounds, ControlProblem, OptimizeConfig

__all__ = ["ConfigError", "FieldSpec", "RunConfig", "parse_expression", "load_config", "parse_config"]

MAX_N = 8192
MAX_DOF = 65536
COMMANDS = ("solve-state", "solve-adjoint", "optimize", "kkt-check", "convergence-study", "limit-study")


class ConfigError(FracOptError, ValueError):
    """Unreadable or malformed configuration."""


_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_NAMES = ("t", "x", "y")


def parse_expression(text: str):
    """Compile ``text`` into a function of ``(t, x, y)``; anything outside the grammar is rejected."""
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def check(node):
        if isinstance(node, ast.Expression):
            return check(node.body)
        if isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ConfigError(f"unsupported constant {node.value!r} in {text!r}")
        elif isinstance(node, ast.Name):
            if node.id not in _NAMES + ("pi",):
                raise ConfigError(f"unknown name {node.id!r} in {text!r}")
        elif isinstance(node, ast.BinOp):
            if type(node.op) not in _BINOPS:
                raise ConfigError(f"unsupported operator in {text!r}")
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp):
            if type(node.op) not in _UNARY:
                raise ConfigError(f"unsupported operator in {text!r}")
            check(node.operand)
        elif isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ConfigError(f"unsupported function call in {text!r}")
            if len(node.args) != 1 or node.keywords:
                raise ConfigError(f"functions take exactly one argument in {text!r}")
            check(node.args[0])
        else:
            raise ConfigError(f"unsupported syntax {type(node).__name__} in {text!r}")

    check(tree)

    def ev(node, env):
        if isinstance(node, ast.Expression):
            return ev(node.body, env)
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            return math.pi if node.id == "pi" else env[node.id]
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left, env), ev(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](ev(node.operand, env))
        return _FUNCS[node.func.id](ev(node.args[0], env))

    def fn(t, x, y=0.0):
        with np.errstate(all="ignore"):
            return ev(tree, {"t": t, "x": x, "y": y})

    return fn


@dataclass(frozen=True)
class FieldSpec:
    """A field source; ``kind`` is ``"expr"``, ``"mode"`` or ``"csv"``."""

    kind: str
    text: str
    base: Path = field(default=Path("."), compare=False)

    @classmethod
    def parse(cls, text: str, base: Path) -> "FieldSpec":
        text = text.strip()
        if text.startswith("mode:"):
            try:
                ks = [int(k) for k in text[5:].split(",")]
            except ValueError:
                raise ConfigError(f"bad mode spec {text!r}") from None
            if not ks or any(k < 1 for k in ks):
                raise ConfigError(f"mode numbers must be positive integers, got {text!r}")
            return cls("mode", text, base)
        if text.startswith("csv:"):
            path = (base / text[4:].strip()).resolve()
            if not path.is_file():
                raise ConfigError(f"file {path} referenced by {text!r} does not exist")
            return cls("csv", text, base)
        parse_expression(text)
        return cls("expr", text, base)

    @property
    def modes(self) -> tuple[int, ...]:
        return tuple(int(k) for k in self.text[5:].split(",")) if self.kind == "mode" else ()

    def _coords(self, grid: SpaceGrid):
        c = grid.coordinates()
        return c[0], (c[1] if grid.dim == 2 else 0.0)

    def spatial(self, grid: SpaceGrid) -> np.ndarray:
        """Values on the interior nodes at ``t = 0``, shape ``(dof,)``."""
        return self.values(grid, None)

    def values(self, grid: SpaceGrid, mesh: TimeMesh | None) -> np.ndarray:
        """``(N + 1, dof)`` space-time values, or ``(dof,)`` when ``mesh`` is None."""
        shape = (grid.dof,) if mesh is None else (mesh.N + 1, grid.dof)
        if self.kind == "csv":
            arr = np.loadtxt(self.base / self.text[4:].strip(), delimiter=",", ndmin=2)
            if arr.size == grid.dof:
                arr = arr.reshape(grid.dof)
                return arr if mesh is None else np.broadcast_to(arr, shape).copy()
            if mesh is not None and arr.shape == shape:
                return arr
            raise ShapeError(f"{self.text}: got {arr.shape} values, expected {shape}")
        if self.kind == "mode":
            ks = self.modes
            if len(ks) != grid.dim:
                raise ShapeError(f"{self.text} needs {grid.dim} wave number(s)")
            if any(k > c for k, c in zip(ks, grid.counts)):
                raise DomainError(f"{self.text} is not resolved by a grid with counts {grid.counts}")
            v = np.ones(grid.dof)
            for k, ell, c in zip(ks, grid.extents, grid.coordinates()):
                v = v * np.sin(k * math.pi * c / ell)
            return v if mesh is None else np.broadcast_to(v, shape).copy()
        x, y = self._coords(grid)
        fn = parse_expression(self.text)
        if mesh is None:
            out = np.asarray(fn(0.0, x, y), dtype=float)
        else:
            t = mesh.nodes[:, None]
            y2 = y[None, :] if np.ndim(y) else y
            out = np.asarray(fn(t, x[None, :], y2), dtype=float)
        out = np.broadcast_to(out, shape).copy()
        if not np.all(np.isfinite(out)):
            raise DomainError(f"expression {self.text!r} produced non-finite values")
        return out


@dataclass(frozen=True)
class RunConfig:
    command: str | None
    alpha: float
    T: float
    N: int
    extents: tuple[float, ...]
    counts: tuple[int, ...]
    y0: FieldSpec
    u: FieldSpec
    corrected: bool = False
    cost_variant: str = "tracking"
    gamma: float = 1.0
    p: int = 2
    target: FieldSpec | None = None
    a: float = -1.0
    b: float = 1.0
    optimizer: OptimizeConfig = OptimizeConfig()
    directions: int = 200
    trials: int = 100
    radii: tuple[float, ...] = (1e-1, 1e-2, 1e-3)
    refinements: int = 4
    refine_space: bool = False
    alphas: tuple[float, ...] = (0.9, 0.99, 0.999)
    seed: int = 0
    out: str = "out"
    source: str = ""
    base: Path = Path(".")

    def __post_init__(self):
        if not (0 < self.alpha <= 1):
            raise DomainError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not (math.isfinite(self.T) and self.T > 0):
            raise DomainError(f"T must be positive, got {self.T}")
        if not (2 <= self.N <= MAX_N):
            raise DomainError(f"N must lie in [2, {MAX_N}], got {self.N}")
        if int(np.prod(self.counts)) > MAX_DOF:
            raise DomainError(f"grid has {int(np.prod(self.counts))} dof, above the cap {MAX_DOF}")
        if not self.a < self.b:
            raise DomainError(f"bounds need a < b, got a={self.a}, b={self.b}")
        if self.directions < 1 or self.trials < 1 or self.refinements < 1:
            raise DomainError("directions, trials and refinements must be positive")
        if any(not (0 < al <= 1) for al in self.alphas):
            raise DomainError("study alphas must lie in (0, 1]")
        if any(r <= 0 for r in self.radii):
            raise DomainError("radii must be positive")
        if self.N * 2**self.refinements > MAX_N * 2 and self.command == "convergence-study":
            raise DomainError(f"refined N would exceed the cap {MAX_N}")

    @property
    def classical(self) -> bool:
        return self.alpha == 1.0

    def grid(self) -> SpaceGrid:
        return SpaceGrid(self.extents, self.counts)

    def mesh(self, N: int | None = None) -> TimeMesh:
        return TimeMesh(self.T, self.N if N is None else N)

    def frac(self, N: int | None = None, alpha: float | None = None) -> FracOrder:
        al = self.alpha if alpha is None else alpha
        return FracOrder(al, self.N if N is None else N, classical=al == 1.0)

    def cost(self, mesh: TimeMesh, grid: SpaceGrid) -> CostModel:
        tg = 0.0 if self.target is None else self.target.values(grid, mesh)
        if self.cost_variant == "tracking":
            return CostModel.tracking(self.gamma, target=tg)
        return CostModel.polynomial(self.p, target=tg)

    def bounds(self) -> ControlBounds:
        return ControlBounds(self.a, self.b)

    def control_problem(self) -> ControlProblem:
        g, m = self.grid(), self.mesh()
        return ControlProblem(self.frac(), m, g, self.y0.spatial(g), self.cost(m, g), self.bounds(),
                              corrected=self.corrected)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(s) for s in text.replace(";", ",").split(",") if s.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from None


def parse_config(text: str, base: Path = Path("."), command: str | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}".splitlines()[0]) from None

    def get(section, key, default=None, conv=str):
        if cp.has_option(section, key):
            raw = cp.get(section, key)
            try:
                return conv(raw)
            except (ValueError, TypeError):
                raise ConfigError(f"[{section}] {key} = {raw!r} is not a valid value") from None
        if default is None:
            raise ConfigError(f"missing required key [{section}] {key}")
        return default

    def flag(s):
        v = s.strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(s)

    cmd = command or get("run", "command", "", str) or None
    if cmd is not None and cmd not in COMMANDS:
        raise ConfigError(f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")
    extents = _floats(get("grid", "extents"))
    counts = tuple(int(c) for c in _floats(get("grid", "counts")))
    if len(extents) != len(counts):
        raise ConfigError("[grid] extents and counts must have the same length")
    target = get("cost", "target", "", str)
    oc = dict(max_iters=get("optimizer", "max_iters", 200, int),
              step0=get("optimizer", "step0", 1.0, float),
              armijo_c=get("optimizer", "armijo_c", 1e-4, float),
              backtrack=get("optimizer", "backtrack", 0.5, float),
              tol_stationarity=get("optimizer", "tol_stationarity", 1e-8, float),
              barzilai_borwein=get("optimizer", "barzilai_borwein", True, flag))
    return RunConfig(
        command=cmd,
        alpha=get("problem", "alpha", conv=float),
        T=get("problem", "T", 1.0, float),
        N=get("problem", "N", conv=int),
        corrected=get("problem", "corrected", False, flag),
        extents=extents,
        counts=counts,
        y0=FieldSpec.parse(get("state", "y0", "0"), base),
        u=FieldSpec.parse(get("state", "u", "0"), base),
        cost_variant=get("cost", "variant", "tracking"),
        gamma=get("cost", "gamma", 1.0, float),
        p=get("cost", "p", 2, int),
        target=FieldSpec.parse(target, base) if target.strip() else None,
        a=get("bounds", "a", -1.0, float),
        b=get("bounds", "b", 1.0, float),
        optimizer=OptimizeConfig(**oc),
        directions=get("kkt", "directions", 200, int),
        trials=get("kkt", "trials", 100, int),
        radii=get("kkt", "radii", (1e-1, 1e-2, 1e-3), _floats),
        refinements=get("study", "refinements", 4, int),
        refine_space=get("study", "refine_space", False, flag),
        alphas=get("study", "alphas", (0.9, 0.99, 0.999), _floats),
        seed=get("run", "seed", 0, int),
        out=get("run", "out", "out"),
        source=text,
        base=base,
    )


def load_config(path, command: str | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent.resolve(), command)


def normalized_text(cfg: RunConfig, seed: int, command: str) -> str:
    """The config as parsed, with the effective command and seed filled in."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    cp.read_string(cfg.source)
    if not cp.has_section("run"):
        cp.add_section("run")
    cp.set("run", "command", command)
    cp.set("run", "seed", str(seed))
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
