"""Command-line runner for the adaptive solvers.

Config files are flat ``key = value`` text, one experiment per file::

    # comments start with '#'
    preset = fractional
    eps = 1e-3
    max_steps = 10

``preset`` supplies defaults for every field; later keys override them.
``delta`` accepts simple arithmetic with ``pi`` (``2*pi**2``).
"""
from __future__ import annotations

import argparse
import ast
import configparser
import dataclasses
import math
import operator
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

PRESETS = {
    "surrogate": dict(problem="rd", rhs="surrogate", eps=0.1, order=1, n=8, diagonal="right", eta=1e-5,
                      max_steps=60),
    "fractional": dict(problem="fractional", rhs="layer", mu=0.01, eps=0.01, delta=2 * math.pi**2, sigma=0.5,
                       tau=0.01, order=2, n=8, diagonal="left", eta=1e-5, max_steps=10),
    "custom": {},
}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    preset: str = "custom"
    problem: str = "rd"
    rhs: str = "surrogate"
    eps: float = 0.1
    mu: float = 0.01
    delta: float = 2 * math.pi**2
    sigma: float = 0.5
    tau: float = 0.01
    steps: int | None = None
    k: float = 1.0
    order: int = 1
    n: int = 8
    diagonal: str = "right"
    eta: float = 1e-5
    max_steps: int = 20
    marking_fraction: float = 0.5
    max_dofs: int | None = None
    quad_degree: int = 10
    output: str = "results"

    def problems(self) -> list[str]:
        """Hard errors; empty when the config is usable."""
        errs = []
        if self.preset not in PRESETS:
            errs.append(f"preset: unknown preset {self.preset!r}")
        if self.problem not in ("rd", "fractional"):
            errs.append(f"problem: expected 'rd' or 'fractional', got {self.problem!r}")
        if self.rhs not in ("surrogate", "layer", "eigen"):
            errs.append(f"rhs: expected surrogate, layer or eigen, got {self.rhs!r}")
        if self.diagonal not in ("right", "left"):
            errs.append(f"diagonal: expected 'right' or 'left', got {self.diagonal!r}")
        if self.problem == "fractional" and not 0 < self.eps < 1:
            errs.append(f"eps: must lie in (0, 1), got {self.eps}")
        if not self.eps > 0:
            errs.append(f"eps: must be positive, got {self.eps}")
        if not self.mu > 0:
            errs.append(f"mu: must be positive, got {self.mu}")
        if not self.delta > 0:
            errs.append(f"delta: must be positive, got {self.delta}")
        if not self.k > 0:
            errs.append(f"k: must be positive, got {self.k}")
        if self.sigma < 0:
            errs.append(f"sigma: must be non-negative, got {self.sigma}")
        if not self.tau > 0:
            errs.append(f"tau: must be positive, got {self.tau}")
        else:
            steps = self.steps if self.steps is not None else int(round(1.0 / self.tau))
            if steps < 1 or abs(steps * self.tau - 1.0) > 1e-12:
                errs.append(f"tau: steps * tau must equal 1 (steps={steps}, tau={self.tau})")
        if self.order not in (1, 2):
            errs.append(f"order: must be 1 or 2, got {self.order}")
        if self.n < 1:
            errs.append(f"n: must be >= 1, got {self.n}")
        if not self.eta > 0:
            errs.append(f"eta: must be positive, got {self.eta}")
        if self.max_steps < 1:
            errs.append(f"max_steps: must be >= 1, got {self.max_steps}")
        if not 0 < self.marking_fraction < 1:
            errs.append(f"marking_fraction: must lie in (0, 1), got {self.marking_fraction}")
        if self.max_dofs is not None and self.max_dofs < 1:
            errs.append(f"max_dofs: must be >= 1, got {self.max_dofs}")
        if self.quad_degree < 1:
            errs.append(f"quad_degree: must be >= 1, got {self.quad_degree}")
        return errs

    def warnings(self) -> list[str]:
        out = []
        if self.problem == "fractional" and self.sigma < 0.5:
            out.append(f"sigma={self.sigma} < 0.5: the two-level scheme is not unconditionally stable")
        return out

    def lines(self) -> list[str]:
        return [f"{f.name} = {getattr(self, f.name)!r}" for f in dataclasses.fields(self)]


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}
_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv,
        ast.Pow: operator.pow, ast.USub: operator.neg, ast.UAdd: operator.pos}


def _arith(text: str) -> float:
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return node.value
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {text!r}")

    return float(ev(ast.parse(text, mode="eval")))


def _convert(name: str, raw: str):
    kind = _FIELDS[name].type
    if raw.lower() == "none" and "None" in kind:
        return None
    if kind.startswith("int"):
        return int(raw)
    if kind == "float":
        return _arith(raw)
    return raw


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    """Parse config text; errors name the offending line and field."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string("[experiment]\n" + text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}".replace("[line  ", "[line ")) from exc
    lineno = {}
    for i, line in enumerate(text.splitlines(), 1):
        key = line.split("=", 1)[0].split(":", 1)[0].strip()
        if key and not key.startswith(("#", ";")):
            lineno.setdefault(key, i)
    items = dict(cp["experiment"])
    preset = items.get("preset", "custom").strip()
    if preset not in PRESETS:
        raise ConfigError(f"{source}:{lineno.get('preset', 1)}: preset: unknown preset {preset!r} "
                          f"(choose from {', '.join(PRESETS)})")
    values = dict(PRESETS[preset], preset=preset)
    for key, raw in items.items():
        if key == "preset":
            continue
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno.get(key, '?')}: {key}: unknown field")
        try:
            values[key] = _convert(key, raw.strip())
        except (ValueError, SyntaxError) as exc:
            raise ConfigError(f"{source}:{lineno.get(key, '?')}: {key}: cannot parse {raw.strip()!r} ({exc})")
    cfg = ExperimentConfig(**values)
    errs = cfg.problems()
    if errs:
        first = errs[0].split(":", 1)[0]
        raise ConfigError(f"{source}:{lineno.get(first, '?')}: " + "; ".join(errs))
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return parse_config(text, str(p))


def _rhs(cfg: ExperimentConfig):
    from .rhs import eigen_rhs, layer_rhs, surrogate_rhs

    return {"surrogate": surrogate_rhs, "layer": lambda: layer_rhs(cfg.mu), "eigen": eigen_rhs}[cfg.rhs]()


def run(cfg: ExperimentConfig, out: Path, log=print):
    """Execute one experiment and write its artifacts to ``out``.

    Returns the adaptation report.
    """
    from .adapt import AdaptConfig, adapt_loop, starting_adaptation
    from .fem import FESpace, assemble_mass, assemble_stiffness, boundary_flux, l2_project, write_solution_csv, write_vtk
    from .mesh import unit_square_mesh
    from .pseudotime import SchemeParams, solve_fractional
    from .rd import ReactionDiffusionProblem

    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved.txt").write_text("\n".join(cfg.lines()) + "\n")
    acfg = AdaptConfig(cfg.eta, cfg.max_steps, cfg.marking_fraction, None, cfg.max_dofs)
    initial = unit_square_mesh(cfg.n, cfg.diagonal)
    f = _rhs(cfg)

    def progress(row):
        log(f"s={row.s:3d}  G={row.goal:.8g}  M_h={row.dofs}  cells={row.cells}  estimate={row.estimate:.3e}")

    if cfg.problem == "rd":
        problem = ReactionDiffusionProblem(cfg.eps, f, cfg.k, cfg.quad_degree)
        u, report = adapt_loop(problem, acfg, initial, cfg.order, progress)
    else:
        params = SchemeParams(cfg.eps, cfg.delta, cfg.sigma, cfg.tau, cfg.steps)
        mesh, report = starting_adaptation(f, params, acfg, initial, cfg.k, cfg.order, cfg.quad_degree, progress)
        V = FESpace(mesh, cfg.order)
        K, M = assemble_stiffness(V, cfg.k), assemble_mass(V)
        psi = l2_project(V, f, constrained=True, quad_degree=cfg.quad_degree)
        u, trace = solve_fractional(psi, K, M, params, goal=lambda y: boundary_flux(y, cfg.k))
        trace.to_csv(out / "trace.csv")
        log(f"pseudo-time solve: {params.steps} steps on {V.dof_count} dofs, G(w)={trace.goal[-1]:.8g}")
    report.to_csv(out / "adapt.csv")
    report.write_meshes(out / "meshes")
    write_solution_csv(u, out / "solution.csv")
    write_vtk(u, out / "solution.vtk")
    log(f"converged={str(report.converged).lower()}  final G={report.final_goal:.8g}  -> {out}")
    return report


def _numeric_errors():
    from .fem import CoefficientError
    from .linalg import LinearSolveError, NotPositiveDefiniteError, OracleScaleError
    from .mesh import MeshError

    return (LinearSolveError, NotPositiveDefiniteError, OracleScaleError, CoefficientError, MeshError,
            FloatingPointError, np.linalg.LinAlgError)


def cmd_solve(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in cfg.warnings():
        print(f"warning: {w}", file=sys.stderr)
    out = Path(args.out) if args.out else Path(cfg.output)
    np.random.seed(args.seed)
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=args.threads), warnings.catch_warnings():
        warnings.simplefilter("ignore", category=UserWarning)
        try:
            with np.errstate(invalid="raise", divide="raise", over="raise"):
                run(cfg, out)
        except _numeric_errors() as exc:
            print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("\n".join(cfg.lines()))
    ws = cfg.warnings()
    for w in ws:
        print(f"warning: {w}")
    print(f"{len(ws)} warning(s)")
    return EXIT_OK


def cmd_mesh_info(args) -> int:
    from .mesh import MeshError, read_mesh

    try:
        m = read_mesh(args.meshfile)
    except (MeshError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    areas = m.signed_areas
    print(f"vertices {m.num_vertices}")
    print(f"cells {m.num_cells}")
    print(f"edges {m.num_edges}")
    print(f"boundary_edges {len(m.boundary_edges)}")
    print(f"area {m.area:.15g}")
    print(f"min_cell_area {areas.min():.6e}")
    print(f"max_cell_area {areas.max():.6e}")
    print(f"p1_dofs {m.num_vertices}")
    print(f"p2_dofs {m.num_vertices + m.num_edges}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fracell", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="run an experiment")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None, help="output directory (overrides the config)")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_solve)
    v = sub.add_parser("validate", help="parse a config and report resolved values")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)
    m = sub.add_parser("mesh-info", help="summarize a mesh file")
    m.add_argument("meshfile")
    m.set_defaults(func=cmd_mesh_info)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
