"""Command-line entry point: ``grandlp <command> ...``.

Exit status: 0 when every check passes, 1 when some check fails, 2 for a
malformed input CSV, 64 for an invalid configuration.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .generators import analytic_corpus, discretize, parse_gen_spec, sample_uniform
from .measure_core import CSVFormatError, read_step_csv
from .monotonicity import (
    BoundaryData,
    grand_sobolev_norm,
    p_energy,
    read_boundary_csv,
    relax_p,
    weak_monotone_check,
)
from .norms import PGrid, grand_theta_infty_norm
from .reports import Check, SuiteReport, write_atomic
from .verification import (
    inclusion_witness,
    verify_exp_equivalence,
    verify_inclusions,
    verify_layer_cake,
    verify_norm_axioms,
    verify_weak_strong_equivalence,
)
from .weighted_ops import (
    GridFunction,
    KernelSpec,
    Weight,
    ap_constant,
    cz_apply,
    doubling_constant,
    maximal_operator,
    operator_norm_estimate,
    read_grid_csv,
    write_grid_csv,
)

EXIT_OK, EXIT_FAIL, EXIT_CSV, EXIT_CONFIG = 0, 1, 2, 64

COMMANDS = {
    "norm": None,
    "verify": ("axioms", "inclusions", "thm31", "exp-equiv", "layer-cake"),
    "operators": ("maximal", "hilbert", "ap", "doubling", "opnorm"),
    "monotone": ("check", "relax"),
    "corpus": None,
}


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


@dataclass
class RunConfig:
    command: str
    action: str | None = None
    inputs: list = field(default_factory=list)
    gens: list = field(default_factory=list)
    weight: str | None = None
    thetas: list = field(default_factory=list)
    p_max: float = 1e4
    ratio: float = 1.05
    tol: float | None = None
    seed: int = 0
    out: str | None = None
    format: str = "json"
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        actions = COMMANDS[self.command]
        if actions is not None and self.action not in actions:
            raise ConfigError(f"{self.command} needs one of {actions}")
        if any(not (t >= 0 and math.isfinite(t)) for t in self.thetas):
            raise ConfigError("theta must be finite and >= 0")
        if self.format not in ("json", "csv"):
            raise ConfigError("format must be json or csv")
        if self.tol is not None and not self.tol > 0:
            raise ConfigError("tol must be positive")
        try:
            self.grid = PGrid(p_max=self.p_max, ratio=self.ratio)
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def provenance(self) -> dict:
        d = asdict(self)
        d.pop("out")
        d["grid"] = self.grid.describe()
        return d


def _thetas(cfg: RunConfig, default):
    return cfg.thetas or list(default)


def _step_inputs(cfg: RunConfig, required: bool = True):
    """(label, StepFunction, spec-or-None) for every --gen and --input."""
    items = []
    for g in cfg.gens:
        try:
            spec = parse_gen_spec(g)
        except ValueError as e:
            raise ConfigError(f"--gen {g!r}: {e}") from None
        items.append((spec.label(), discretize(spec), spec))
    for path in cfg.inputs:
        items.append((path, read_step_csv(path), None))
    if required and not items:
        raise ConfigError("need at least one --gen or --input")
    return items


def _grid_from_gen(text: str) -> GridFunction:
    """Cell-centred uniform samples of a generator spec (for the grid operators)."""
    try:
        spec = parse_gen_spec(text)
    except ValueError as e:
        raise ConfigError(f"--gen {text!r}: {e}") from None
    x, h, v = sample_uniform(spec)
    return GridFunction(v, h, (x[0],))


def _grid_inputs(cfg: RunConfig, required: bool = True):
    items = [(g, _grid_from_gen(g)) for g in cfg.gens]
    items += [(path, read_grid_csv(path)) for path in cfg.inputs]
    if required and not items:
        raise ConfigError("need at least one --gen or --input")
    return items


def _weight(cfg: RunConfig, like: GridFunction | None = None, required: bool = False):
    if cfg.weight is None:
        if required:
            raise ConfigError("need --weight (grid CSV or generator spec)")
        return None if like is None else Weight.uniform_like(like)
    if ":" in cfg.weight:
        g = _grid_from_gen(cfg.weight)
        try:
            return Weight(g.samples, g.h, g.origin)
        except ValueError as e:
            raise ConfigError(f"--weight: {e}") from None
    return read_grid_csv(cfg.weight, weight=True)


def _kernel(cfg: RunConfig) -> KernelSpec:
    o = cfg.options
    try:
        k = KernelSpec(o.get("kernel") or "hilbert", c=o.get("kernel_c") or 1.0,
                       exponent=o.get("kernel_exponent") or 1.0, odd=not o.get("kernel_even"))
        k.validate(1)
    except ValueError as e:
        raise ConfigError(f"kernel: {e}") from None
    return k


# -- commands ------------------------------------------------------------------

def _cmd_norm(cfg: RunConfig) -> SuiteReport:
    rep = SuiteReport("norm")
    for label, f, _ in _step_inputs(cfg):
        entry = {}
        for th in _thetas(cfg, [1.0]):
            kw = {} if cfg.tol is None else {"rel_tol": cfg.tol}
            r = grand_theta_infty_norm(f, th, cfg.grid, **kw)
            rep.add(Check.le(f"norm_le_sup[{label},theta={th}]", r.value, f.sup_abs * (1 + 1e-12)))
            entry[f"theta={th}"] = r.to_dict(with_curve=True)
        rep.results[label] = entry
    return rep


def _cmd_verify(cfg: RunConfig) -> SuiteReport:
    o = cfg.options
    a = cfg.action
    if a == "axioms":
        return verify_norm_axioms(thetas=_thetas(cfg, [0.0, 0.5, 1.0, 2.0]), grid=cfg.grid,
                                  n_pairs=o.get("pairs") or 1000, seed=cfg.seed,
                                  triangle_rtol=cfg.tol or 1e-10)
    if a == "layer-cake":
        return verify_layer_cake(n_functions=o.get("functions") or 100, seed=cfg.seed,
                                 rtol=cfg.tol or 1e-10)
    if a == "exp-equiv":
        specs = None
        if cfg.inputs:
            raise ConfigError("exp-equiv refines its inputs, so it takes --gen specs only")
        if cfg.gens:
            try:
                specs = [parse_gen_spec(g) for g in cfg.gens]
            except ValueError as e:
                raise ConfigError(str(e)) from None
        return verify_exp_equivalence(specs, cfg.grid, stability_rtol=cfg.tol or 0.05)
    rep = SuiteReport(a)
    if a == "thm31":
        for label, f, _ in _step_inputs(cfg):
            for th in _thetas(cfg, [1.0]):
                sub = verify_weak_strong_equivalence(f, th, cfg.grid, label=label)
                _merge(rep, sub, f"{label},theta={th}")
        return rep
    if a == "inclusions":
        theta2 = o.get("theta2")
        items = _step_inputs(cfg, required=False)
        if not items:
            for th in _thetas(cfg, [0.5, 1.0]):
                _merge(rep, inclusion_witness(th, grid=cfg.grid), f"witness,theta={th}")
            return rep
        if theta2 is None:
            raise ConfigError("inclusions with inputs needs --theta2")
        for label, f, _ in items:
            for th in _thetas(cfg, [0.0]):
                try:
                    sub = verify_inclusions(f, th, theta2, o.get("q") or 2.0, cfg.grid, label)
                except ValueError as e:
                    raise ConfigError(str(e)) from None
                _merge(rep, sub, f"{label},theta={th}")
        return rep
    raise ConfigError(a)


def _merge(rep: SuiteReport, sub: SuiteReport, key: str):
    for c in sub.checks:
        c.name = f"{c.name}[{key}]"
        rep.add(c)
    rep.results[key] = sub.results
    rep.provenance.setdefault("suites", {})[key] = sub.provenance


def _cmd_operators(cfg: RunConfig) -> SuiteReport:
    a = cfg.action
    o = cfg.options
    rep = SuiteReport(f"operators_{a}")
    if a in ("ap", "doubling"):
        w = _weight(cfg, required=True)
        if a == "doubling":
            try:
                c, wit = doubling_constant(w)
            except ValueError as e:
                raise ConfigError(str(e)) from None
            rep.add(Check("doubling_finite", bool(math.isfinite(c)), c, math.inf))
            rep.results.update(constant=c, witness=wit)
            return rep
        for p in o.get("p") or [2.0]:
            try:
                r = ap_constant(w, p)
            except ValueError as e:
                raise ConfigError(str(e)) from None
            rep.add(Check.le(f"jensen_ge_1[p={p}]", 1.0, r.constant * (1 + 1e-12)))
            rep.add(Check("not_diverging[p={}]".format(p), not r.diverging, r.constant, math.inf,
                          "growth over the last two resolutions below 2x"))
            rep.results[f"p={p}"] = r.to_dict()
        return rep
    if a == "opnorm":
        op = o.get("op") or "maximal"
        corpus = [g for _, g in _grid_inputs(cfg)]
        w = _weight(cfg, corpus[0]) if cfg.weight else None
        if w is not None and any(not g.same_grid(w) for g in corpus):
            raise ConfigError("weight and inputs live on different grids")
        for th in _thetas(cfg, [1.0]):
            sub = operator_norm_estimate(op, w, th, corpus, cfg.grid,
                                         kernel=_kernel(cfg) if op == "cz" else None)
            _merge(rep, sub, f"theta={th}")
        return rep
    for label, f in _grid_inputs(cfg):
        if a == "maximal":
            w = _weight(cfg, f)
            if not f.same_grid(w):
                raise ConfigError("weight and input live on different grids")
            g = maximal_operator(f, w)
            gap = float(np.min(g.samples - np.abs(f.samples)))
            rep.add(Check.le(f"Mf_ge_abs_f[{label}]", -gap, 0.0))
        else:
            g = cz_apply(f, _kernel(cfg))
            rep.add(Check(f"Tf_finite[{label}]", bool(np.all(np.isfinite(g.samples))),
                          float(np.max(np.abs(g.samples))), math.inf))
        rep.results[label] = {"x": g.axis(0), "values": g.samples, "max": float(np.max(np.abs(g.samples)))}
        if o.get("grid_out"):
            write_grid_csv(g, o["grid_out"])
    return rep


def _cmd_monotone(cfg: RunConfig) -> SuiteReport:
    o = cfg.options
    rep = SuiteReport(f"monotone_{cfg.action}")
    thetas = _thetas(cfg, [0.5, 1.0])
    if cfg.action == "check":
        for label, u in _grid_inputs(cfg):
            if u.dim != 2:
                raise ConfigError(f"{label}: monotone check needs a 2D grid")
            r = weak_monotone_check(u)
            rep.add(Check(f"weakly_monotone[{label}]", r.passed, float(r.n_balls), math.nan))
            rep.results[label] = r.to_dict()
        return rep
    shape = tuple(o.get("shape") or (33, 33))
    if o.get("boundary"):
        g = read_boundary_csv(o["boundary"], shape)
    else:
        try:
            g = BoundaryData.random(shape, cfg.seed)
        except ValueError as e:
            raise ConfigError(str(e)) from None
    for p in o.get("p") or [2.0]:
        try:
            r = relax_p(g, p, tol=cfg.tol or 1e-10, max_iters=o.get("max_iters") or 100_000)
        except ValueError as e:
            raise ConfigError(str(e)) from None
        e = r.energies
        rise = float(np.max((e[1:] - e[:-1]) / np.maximum(e[:-1], 1e-300))) if e.size > 1 else 0.0
        rep.add(Check("converged[p={}]".format(p), r.converged, r.max_update, cfg.tol or 1e-10))
        rep.add(Check.le(f"energy_nonincreasing[p={p}]", rise, 1e-12))
        m = weak_monotone_check(r.u)
        rep.add(Check(f"weakly_monotone[p={p}]", m.passed, float(m.n_balls), math.nan))
        norms = {f"theta={th}": grand_sobolev_norm(r.u, th, cfg.grid).to_dict() for th in thetas}
        rep.results[f"p={p}"] = {**r.to_dict(), "energy": p_energy(r.u, p), "monotone": m.to_dict(),
                                 "grand_sobolev": norms}
        if o.get("grid_out"):
            write_grid_csv(r.u, o["grid_out"])
    return rep


def _cmd_corpus(cfg: RunConfig) -> SuiteReport:
    rep = SuiteReport("corpus")
    n = cfg.options.get("n") or 20000
    for spec in analytic_corpus(n):
        f = discretize(spec)
        entry = {"kind": spec.kind, "params": spec.params, "n": spec.n, "sup_abs": f.sup_abs}
        for th in _thetas(cfg, [1.0]):
            r = grand_theta_infty_norm(f, th, cfg.grid)
            entry[f"theta={th}"] = {"value": r.value, "argmax_exponent": r.argmax_exponent}
            rep.add(Check.le(f"norm_le_sup[{spec.label()},theta={th}]", r.value, f.sup_abs * (1 + 1e-12)))
        rep.results[spec.label()] = entry
    return rep


DISPATCH = {
    "norm": _cmd_norm,
    "verify": _cmd_verify,
    "operators": _cmd_operators,
    "monotone": _cmd_monotone,
    "corpus": _cmd_corpus,
}


def run(cfg: RunConfig) -> tuple[SuiteReport, int]:
    """Dispatch ``cfg``; returns the report and the exit status."""
    rep = DISPATCH[cfg.command](cfg)
    rep.provenance = {**cfg.provenance(), **rep.provenance}
    return rep, EXIT_OK if rep.passed else EXIT_FAIL


# -- argument parsing ----------------------------------------------------------

def _float_list(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number list: {text!r}") from None


def _shape(text: str) -> tuple[int, int]:
    try:
        a, b = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError("shape must look like 33x33") from None
    return a, b


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--gen", action="append", default=[], metavar="SPEC",
                        help="generator spec kind:key=value,... (repeatable)")
    common.add_argument("--input", action="append", default=[], metavar="CSV",
                        help="input CSV (step function value,measure; grid x,value or x,y,value)")
    common.add_argument("--weight", help="weight grid CSV or generator spec")
    common.add_argument("--theta", action="append", type=_float_list, default=[],
                        help="theta value(s); comma list or repeated")
    common.add_argument("--p-max", type=float, default=1e4)
    common.add_argument("--ratio", type=float, default=1.05, help="geometric ratio of the p grid")
    common.add_argument("--tol", type=float, help="suite tolerance (command specific)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="report path (default: stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = _Parser(prog="grandlp", description="Grand Lebesgue norm toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("norm", parents=[common], help="grand norms of step functions")

    pv = sub.add_parser("verify", parents=[common], help="verification suites")
    pv.add_argument("action", choices=COMMANDS["verify"])
    pv.add_argument("--pairs", type=int, help="axioms: number of random pairs")
    pv.add_argument("--functions", type=int, help="layer-cake: number of random functions")
    pv.add_argument("--theta2", type=float, help="inclusions: larger theta")
    pv.add_argument("--q", type=float, help="inclusions: embedding exponent")

    po = sub.add_parser("operators", parents=[common], help="weights and operators on grids")
    po.add_argument("action", choices=COMMANDS["operators"])
    po.add_argument("--p", type=_float_list, help="ap: exponent(s)")
    po.add_argument("--op", choices=("maximal", "cz"), help="opnorm: operator")
    po.add_argument("--kernel", choices=("hilbert", "custom_power"))
    po.add_argument("--kernel-c", type=float)
    po.add_argument("--kernel-exponent", type=float)
    po.add_argument("--kernel-even", action="store_true")
    po.add_argument("--grid-out", help="write the output grid function as CSV")

    pm = sub.add_parser("monotone", parents=[common], help="weak monotonicity and p-harmonic relaxation")
    pm.add_argument("action", choices=COMMANDS["monotone"])
    pm.add_argument("--p", type=_float_list, help="relax: exponent(s)")
    pm.add_argument("--shape", type=_shape, help="relax: grid shape, e.g. 33x33")
    pm.add_argument("--boundary", help="relax: index,value CSV of fixed nodes")
    pm.add_argument("--max-iters", type=int)
    pm.add_argument("--grid-out", help="write the relaxed grid as CSV")

    pc = sub.add_parser("corpus", parents=[common], help="grand norms of the built-in corpus")
    pc.add_argument("--n", type=int, help="resolution")
    return parser


_COMMON = {"command", "action", "gen", "input", "weight", "theta", "p_max", "ratio", "tol",
           "seed", "out", "format"}


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    thetas = [t for chunk in ns.theta for t in chunk]
    options = {k: v for k, v in vars(ns).items() if k not in _COMMON and v is not None and v is not False}
    return RunConfig(
        command=ns.command, action=getattr(ns, "action", None), inputs=ns.input, gens=ns.gen,
        weight=ns.weight, thetas=thetas, p_max=ns.p_max, ratio=ns.ratio, tol=ns.tol, seed=ns.seed,
        out=ns.out, format=ns.format, options=options,
    )


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        cfg = config_from_args(ns)
        rep, status = run(cfg)
    except ConfigError as e:
        parser.print_usage(sys.stderr)
        print(f"grandlp: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except CSVFormatError as e:
        print(f"grandlp: malformed CSV: {e}", file=sys.stderr)
        return EXIT_CSV
    except (FileNotFoundError, ValueError) as e:
        print(f"grandlp: error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    text = rep.to_json() if cfg.format == "json" else rep.to_csv()
    if cfg.out:
        write_atomic(cfg.out, text)
    else:
        sys.stdout.write(text)
    print(f"{rep.suite}: {'PASS' if rep.passed else 'FAIL'} "
          f"({len(rep.checks) - len(rep.failures())}/{len(rep.checks)} checks)", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
