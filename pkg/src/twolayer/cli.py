"""Command-line front end.

Subcommands::

    twolayer simulate CONFIG [--out DIR]        run a model, write a record directory
    twolayer dispersion --model M --gamma ...   omega^2 table as CSV (k, omega2, wellposed)
    twolayer verify --target T|all [...]        convergence study against the oracle
    twolayer consistency --model M --sweep ...  consistency residuals over a parameter sweep
    twolayer coeffs --family bfd|bb ...         Boussinesq coefficients from generators

Exit status: 0 on success/pass, 1 when a verification fails or a simulation
aborts, 2 on usage errors (bad arguments, malformed config).

Simulation config (YAML)::

    model:   {kind: bb, alpha1: 1.0, alpha2: -1.0, beta: 0.333}
    params:  {gamma: 0.9, delta: 1.0, eps: 0.1, mu: 0.1}     # or mu2 instead of delta
    grid:    {dim: 1, points: [128], lengths: [62.83]}
    time:    {dt: 0.01, t_end: 5.0, output_every: 100}
    initial: {kind: hump, amplitude: 0.5, width: 2.0}        # hump | longwave | random
    depth_floor: 0.05

``verify`` and ``consistency`` accept the same file format through
``--config``; their keys are ``target``, ``gamma``, ``values``, ``grid``,
``levels`` and ``model``, ``params``, ``sweep: {name, values, ties}``,
``fields``, ``expected`` respectively.  Command-line flags override the file.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .dispersion import linear_omega2, write_dispersion_csv
from .harness import (ORDER_TOLERANCE, TARGETS, consistency_residual, convergence_study,
                      fit_order, gaussian_hump, longwave_fields, random_fields, regime_table_check)
from .models import MODEL_KINDS, ModelId, ModelState, coeffs_bb, coeffs_bfd, simulate
from .operators import ParameterError, RegimeParams
from .oracle import OracleError, default_strip, evaluate_oracle
from .spectral import GridError, make_grid

log = logging.getLogger("twolayer")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

# which regime-table cell each model is meant for
_MODEL_REGIME = {"FDFD": "FDFD", "BFD": "BFD", "BB": "BB", "SWSW": "SWSW", "SWFD": "SWFD",
                 "ILW": "ILW", "BOSYS": "BO", "RBO": "BO"}


class UsageError(Exception):
    """Bad input; reported with exit status 2."""


# ---------------------------------------------------------------------------
# Config files
# ---------------------------------------------------------------------------

class ConfigSection:
    """A mapping from a YAML file that remembers where each key was written."""

    def __init__(self, path: str, data, node, where: str = ""):
        self.path, self.where = path, where
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise UsageError(self._at(node, f"{where or 'config'} must be a mapping"))
        self.data, self.node = data, node
        self._lines = {}
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                self._lines[key.value] = (key.start_mark.line + 1, value)

    def _at(self, node, msg: str) -> str:
        line = node.start_mark.line + 1 if node is not None else 1
        return f"{self.path}:{line}: {msg}"

    def error(self, key: str | None, msg: str) -> UsageError:
        if key is not None and key in self._lines:
            return UsageError(f"{self.path}:{self._lines[key][0]}: {msg}")
        return UsageError(self._at(self.node, msg))

    def __contains__(self, key):
        return key in self.data

    def check_keys(self, allowed) -> None:
        for key in self.data:
            if key not in allowed:
                raise self.error(key, f"unknown key {self.where + '.' if self.where else ''}{key!r}; "
                                      f"expected one of {sorted(allowed)}")

    def section(self, key: str) -> "ConfigSection":
        node = self._lines.get(key, (None, None))[1]
        return ConfigSection(self.path, self.data.get(key), node,
                             f"{self.where}.{key}" if self.where else key)

    def get(self, key: str, kind=float, default=None, required: bool = False):
        if key not in self.data or self.data[key] is None:
            if required:
                raise self.error(None, f"missing required key {self.where + '.' if self.where else ''}{key}")
            return default
        raw = self.data[key]
        try:
            if kind is list:
                if not isinstance(raw, list):
                    raw = [raw]
                return [float(x) for x in raw]
            if kind is float and isinstance(raw, bool):
                raise ValueError
            if kind is int and (isinstance(raw, bool) or float(raw) != int(raw)):
                raise ValueError
            return kind(raw)
        except (TypeError, ValueError):
            raise self.error(key, f"{key}: expected {kind.__name__}, got {raw!r}")


def load_config(path: str) -> ConfigSection:
    """Parse a YAML config; syntax errors carry the offending line."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"{path}: cannot read config: {exc.strerror}")
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark else 1
        raise UsageError(f"{path}:{line}: malformed YAML: {exc.problem or exc.context}")
    except yaml.YAMLError as exc:
        raise UsageError(f"{path}: malformed YAML: {exc}")
    return ConfigSection(path, data, node)


def _params_from(section: ConfigSection) -> RegimeParams:
    section.check_keys({"gamma", "delta", "eps", "mu", "mu2"})
    gamma = section.get("gamma", required=True)
    eps = section.get("eps", default=0.0)
    mu = section.get("mu", required=True)
    delta, mu2 = section.get("delta"), section.get("mu2")
    if (delta is None) == (mu2 is None):
        raise section.error(None, "give exactly one of delta or mu2")
    try:
        if mu2 is not None:
            return RegimeParams.from_lower(gamma, mu=mu, mu2=mu2, eps=eps)
        return RegimeParams(gamma, delta, eps, mu)
    except ParameterError as exc:
        raise section.error(None, str(exc))


def _model_from(section: ConfigSection) -> ModelId:
    section.check_keys({"kind", "alpha", "alpha1", "alpha2", "beta"})
    kind = section.get("kind", kind=str, required=True)
    try:
        return ModelId(kind, alpha=section.get("alpha"), alpha1=section.get("alpha1"),
                       alpha2=section.get("alpha2"), beta=section.get("beta"))
    except ParameterError as exc:
        raise section.error("kind", str(exc))


def _grid_from(section: ConfigSection, default_dim: int = 1):
    section.check_keys({"dim", "points", "lengths"})
    dim = section.get("dim", kind=int, default=default_dim)
    points = section.get("points", kind=list)
    lengths = section.get("lengths", kind=list)
    try:
        return make_grid(dim, lengths, None if points is None else [int(p) for p in points])
    except GridError as exc:
        raise section.error(None, str(exc))


# ---------------------------------------------------------------------------
# Shared argument helpers
# ---------------------------------------------------------------------------

def _add_params(parser, required_gamma=True):
    parser.add_argument("--gamma", type=float, required=required_gamma, help="density ratio")
    parser.add_argument("--delta", type=float, help="upper/lower depth ratio")
    parser.add_argument("--mu2", type=float, help="lower-layer shallowness (instead of --delta)")
    parser.add_argument("--eps", type=float, default=0.0, help="amplitude parameter")
    parser.add_argument("--mu", type=float, help="upper-layer shallowness")


def _add_model(parser):
    parser.add_argument("--model", type=str.upper, choices=MODEL_KINDS + ("FULL",),
                        help="model kind (FULL: full two-layer system)")
    parser.add_argument("--alpha", type=float, help="ILW/BO family parameter")
    parser.add_argument("--a1", type=float, help="generator alpha1")
    parser.add_argument("--a2", type=float, help="generator alpha2")
    parser.add_argument("--beta", type=float, help="generator beta")


def _params_from_args(args, mu_default=None) -> RegimeParams:
    mu = args.mu if args.mu is not None else mu_default
    if args.gamma is None or mu is None:
        raise UsageError("need --gamma and --mu")
    if (args.delta is None) == (args.mu2 is None):
        raise UsageError("give exactly one of --delta or --mu2")
    try:
        if args.mu2 is not None:
            return RegimeParams.from_lower(args.gamma, mu=mu, mu2=args.mu2, eps=args.eps)
        return RegimeParams(args.gamma, args.delta, args.eps, mu)
    except ParameterError as exc:
        raise UsageError(str(exc))


def _model_from_args(args) -> ModelId:
    kind = args.model or "FULL"
    if kind == "FULL":
        kind = "FDFD"
    try:
        return ModelId(kind, alpha=args.alpha, alpha1=args.a1, alpha2=args.a2, beta=args.beta)
    except ParameterError as exc:
        raise UsageError(str(exc))


def _fmt(x: float) -> str:
    return f"{float(x) + 0.0:.16g}"


def _float_list(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _initial_state(section: ConfigSection, grid, model: ModelId) -> ModelState:
    section.check_keys({"kind", "amplitude", "width", "seed", "kmax"})
    kind = section.get("kind", kind=str, default="hump")
    amplitude = section.get("amplitude", default=0.5)
    if kind == "hump":
        zeta = gaussian_hump(grid, width=section.get("width", default=1.0), amplitude=amplitude)
    elif kind == "longwave":
        zeta, _ = longwave_fields(grid, zeta_sup=amplitude)
    elif kind == "random":
        zeta, _ = random_fields(grid, kmax=section.get("kmax", kind=int, default=8),
                                seed=section.get("seed", kind=int, default=0), zeta_sup=amplitude)
    else:
        raise section.error("kind", f"unknown initial kind {kind!r}; expected hump, longwave or random")
    return ModelState(zeta, None if model.scalar_only else grid.vector(0.0))


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    cfg.check_keys({"model", "params", "grid", "time", "initial", "depth_floor", "output"})
    model = _model_from(cfg.section("model"))
    params = _params_from(cfg.section("params"))
    grid = _grid_from(cfg.section("grid"))
    time = cfg.section("time")
    time.check_keys({"dt", "t_end", "output_every"})
    dt = time.get("dt", required=True)
    t_end = time.get("t_end", required=True)
    every = time.get("output_every", kind=int, default=0)
    initial = _initial_state(cfg.section("initial"), grid, model)
    try:
        record = simulate(model, params, initial, dt, t_end, output_every=every,
                          depth_floor=cfg.get("depth_floor", default=0.0))
    except ValueError as exc:
        raise cfg.error("time", str(exc))
    regime = regime_table_check(params)
    if regime != _MODEL_REGIME[model.kind]:
        msg = f"parameters classify as {regime}, not the {model.kind} regime"
        log.warning(msg)
        record.warnings.append(msg)
    out = Path(args.out or cfg.get("output", kind=str, default="run"))
    record.save(out)
    print(f"{record.kind} {model.label()}: status={record.status} steps={record.config['steps']} -> {out}")
    if record.message:
        print(record.message)
    return EXIT_OK if record.ok else EXIT_FAIL


def cmd_dispersion(args) -> int:
    model = _model_from_args(args)
    params = _params_from_args(args, mu_default=1.0)
    if args.kmax <= 0 or args.nk < 1:
        raise UsageError("need --kmax > 0 and --nk >= 1")
    kmin = args.kmin if args.kmin is not None else args.kmax / args.nk
    if not 0 <= kmin <= args.kmax:
        raise UsageError("need 0 <= --kmin <= --kmax")
    k = np.linspace(kmin, args.kmax, args.nk)
    try:
        sample = linear_omega2(model, params, k)
    except ParameterError as exc:
        raise UsageError(str(exc))
    write_dispersion_csv(sample, args.out or sys.stdout)
    if args.out:
        log.info("wrote %s", args.out)
    return EXIT_OK


def _report(record) -> None:
    cfg = record.config
    print(f"{cfg['target']}: {cfg['description']}")
    print(f"  bound: {cfg['bound']}")
    swept = cfg["swept"]
    for row in record.samples:
        extra = "".join(f"  {k}={row[k]:.3e}" for k in ("r_zeta", "r_v") if k in row)
        print(f"  {swept}={row[swept]:<8g} error={row['error']:.6e}{extra}")
    lo, hi = record.order_band
    verdict = "PASS" if record.passed else "FAIL"
    print(f"  fitted order {record.fitted_order:.3f} (95% band {lo:.3f}..{hi:.3f}), "
          f"expected {record.expected_order:g}, pass at >= {record.extras['threshold']:g}: {verdict}")


def cmd_verify(args) -> int:
    target, gamma, values, grid, levels = args.target, args.gamma, args.values, None, args.levels
    if args.config:
        cfg = load_config(args.config)
        cfg.check_keys({"target", "gamma", "values", "grid", "levels", "output"})
        target = target or cfg.get("target", kind=str)
        gamma = gamma if gamma is not None else cfg.get("gamma")
        values = values or cfg.get("values", kind=list)
        levels = levels or cfg.get("levels", kind=int)
        if "grid" in cfg:
            grid = _grid_from(cfg.section("grid"))
    if not target:
        raise UsageError("need --target (or 'target' in the config)")
    names = sorted(TARGETS) if target.lower() == "all" else [target.upper()]
    for name in names:
        if name not in TARGETS:
            raise UsageError(f"unknown target {target!r}; expected one of {sorted(TARGETS)} or 'all'")
    if grid is None and args.points:
        grid = make_grid(1, points=[args.points])
    failed = 0
    for name in names:
        try:
            record = convergence_study(name, values=values, gamma=0.9 if gamma is None else gamma,
                                       grid=grid, nz=levels)
        except (ValueError, ParameterError, GridError) as exc:
            raise UsageError(str(exc))
        _report(record)
        if args.out:
            record.save(Path(args.out) / name.lower())
        failed += not record.passed
    return EXIT_FAIL if failed else EXIT_OK


def _parse_sweep(text: str) -> tuple:
    name, sep, raw = text.partition("=")
    if not sep:
        raise argparse.ArgumentTypeError(f"expected NAME=v1,v2,..., got {text!r}")
    return name.strip(), _float_list(raw)


def _parse_tie(text: str) -> tuple:
    try:
        name, rhs = text.split("=")
        coef, power = (float(x) for x in rhs.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected NAME=COEF,POWER, got {text!r}")
    return name.strip(), coef, power


def cmd_consistency(args) -> int:
    base = {"gamma": args.gamma, "delta": args.delta, "mu2": args.mu2, "eps": args.eps, "mu": args.mu}
    sweep_name, sweep_values = None, None
    ties = list(args.tie or [])
    fields_kind, seed, expected, grid = args.fields, args.seed, args.expected, None
    model_args = {"kind": args.model, "alpha": args.alpha, "alpha1": args.a1, "alpha2": args.a2,
                  "beta": args.beta}
    if args.sweep:
        sweep_name, sweep_values = args.sweep
    if args.config:
        cfg = load_config(args.config)
        cfg.check_keys({"model", "params", "sweep", "fields", "seed", "expected", "grid"})
        if "model" in cfg and not args.model:
            model = _model_from(cfg.section("model"))
            model_args = {"kind": model.kind, "alpha": model.alpha, "alpha1": model.alpha1,
                          "alpha2": model.alpha2, "beta": model.beta}
        if "params" in cfg:
            sec = cfg.section("params")
            sec.check_keys(set(base))
            for key in base:
                if base[key] is None or (key == "eps" and base[key] == 0.0):
                    base[key] = sec.get(key, default=base[key])
        if "sweep" in cfg and sweep_name is None:
            sec = cfg.section("sweep")
            sec.check_keys({"name", "values", "ties"})
            sweep_name = sec.get("name", kind=str, required=True)
            sweep_values = sec.get("values", kind=list, required=True)
            tsec = sec.section("ties")
            for key in tsec.data:
                pair = tsec.get(key, kind=list)
                if len(pair) != 2:
                    raise tsec.error(key, f"tie {key}: expected [coef, power]")
                ties.append((key, pair[0], pair[1]))
        fields_kind = fields_kind or cfg.get("fields", kind=str)
        seed = seed if seed is not None else cfg.get("seed", kind=int)
        expected = expected if expected is not None else cfg.get("expected")
        if "grid" in cfg:
            grid = _grid_from(cfg.section("grid"))
    if not model_args["kind"]:
        raise UsageError("need --model (or 'model' in the config)")
    try:
        model = ModelId(model_args["kind"], alpha=model_args["alpha"], alpha1=model_args["alpha1"],
                        alpha2=model_args["alpha2"], beta=model_args["beta"])
    except ParameterError as exc:
        raise UsageError(str(exc))
    if sweep_name is None:
        sweep_name, sweep_values = "eps", [base["eps"]]
    if sweep_name not in base or not sweep_values:
        raise UsageError(f"sweep needs a parameter in {sorted(base)} and at least one value")

    grid = grid or make_grid(1)
    kind = fields_kind or "longwave"
    if kind == "longwave":
        zeta, psi = longwave_fields(grid)
    elif kind == "random":
        zeta, psi = random_fields(grid, seed=seed or 0)
    else:
        raise UsageError(f"unknown fields {kind!r}; expected longwave or random")

    strip = default_strip(grid)
    rows = []
    print(f"consistency of {model.label()} ({kind} fields, {grid.dim}-D, {grid.shape} points)")
    for x in sweep_values:
        values = dict(base, **{sweep_name: x})
        for name, coef, power in ties:
            if name not in base:
                raise UsageError(f"cannot tie unknown parameter {name!r}")
            values[name] = coef * x**power
        args.gamma, args.delta, args.mu2, args.eps, args.mu = (
            values["gamma"], values["delta"], values["mu2"], values["eps"], values["mu"])
        params = _params_from_args(args)
        try:
            res = consistency_residual(model, params, zeta, psi, 0.0,
                                       evaluate_oracle(params, zeta, psi, strip))
        except (ValueError, ParameterError, OracleError) as exc:
            raise UsageError(str(exc))
        rows.append((x, res))
        print(f"  {sweep_name}={x:<8g} r_zeta={res.r_zeta:.6e}  r_v={res.r_v:.6e}  total={res.total:.6e}"
              f"  [{regime_table_check(params)}]")
    if len(rows) < 4:
        return EXIT_OK
    slope, (lo, hi) = fit_order([r[0] for r in rows], [r[1].total for r in rows])
    line = f"  fitted order {slope:.3f} (95% band {lo:.3f}..{hi:.3f})"
    if expected is None:
        print(line)
        return EXIT_OK
    passed = slope >= expected - ORDER_TOLERANCE
    print(f"{line}, expected {expected:g}: {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


def cmd_coeffs(args) -> int:
    try:
        if args.family == "bfd":
            co = coeffs_bfd(args.a1, args.a2, args.beta)
        else:
            if args.gamma is None or args.delta is None:
                raise UsageError("the bb family needs --gamma and --delta")
            co = coeffs_bb(args.gamma, args.delta, args.a1, args.a2, args.beta)
    except ParameterError as exc:
        raise UsageError(str(exc))
    print(" ".join(f"{name}={_fmt(value)}" for name, value in zip("abcd", co.as_tuple())))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="twolayer", description="Two-layer internal-wave models.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="integrate a model from a YAML config")
    p.add_argument("config")
    p.add_argument("--out", help="record directory (default: config 'output' or ./run)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("dispersion", help="linear dispersion table as CSV")
    _add_model(p)
    _add_params(p)
    p.add_argument("--kmin", type=float, help="smallest wavenumber (default kmax/nk)")
    p.add_argument("--kmax", type=float, default=10.0)
    p.add_argument("--nk", type=int, default=100)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_dispersion)

    p = sub.add_parser("verify", help="convergence-order study against the elliptic oracle")
    p.add_argument("--target", help=f"one of {', '.join(sorted(TARGETS))}, or 'all'")
    p.add_argument("--gamma", type=float)
    p.add_argument("--values", type=_float_list, help="sweep values, comma-separated")
    p.add_argument("--points", type=int, help="horizontal grid points (1-D)")
    p.add_argument("--levels", type=int, help="vertical collocation levels per layer")
    p.add_argument("--config")
    p.add_argument("--out", help="directory for per-target records")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("consistency", help="model residuals on exact time derivatives")
    _add_model(p)
    _add_params(p, required_gamma=False)
    p.add_argument("--sweep", type=_parse_sweep, help="NAME=v1,v2,... parameter sweep")
    p.add_argument("--tie", type=_parse_tie, action="append",
                   help="NAME=COEF,POWER: set NAME = COEF * swept**POWER (repeatable)")
    p.add_argument("--fields", choices=("longwave", "random"))
    p.add_argument("--seed", type=int)
    p.add_argument("--expected", type=float, help="expected order; fail below expected - 0.2")
    p.add_argument("--config")
    p.set_defaults(func=cmd_consistency)

    p = sub.add_parser("coeffs", help="Boussinesq coefficients (a, b, c, d) from generators")
    p.add_argument("--family", choices=("bfd", "bb"), required=True)
    p.add_argument("--gamma", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--a1", type=float, required=True)
    p.add_argument("--a2", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.set_defaults(func=cmd_coeffs)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"twolayer {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
