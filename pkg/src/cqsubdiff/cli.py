"""Command-line front end.

Every subcommand accepts ``--config FILE`` (TOML, flat keys named like the
long options with dashes turned into underscores).  Values on the command
line override the file.  Exit status: 0 success, 1 invalid input, 2 a
numerical check or solve failed.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .cq import Kind, Method, check_admissible, generate_weights, l1_weights
from .exceptions import AssemblyError, ConfigError, NonAdmissibleError
from . import experiments as ex
from .fem1d import l2_error
from .inequalities import verify_suite
from .stepper import HistoryMode, TimeGrid, run

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger("cqsubdiff")

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2
RNG_NAME = "numpy.random.PCG64"

_COMMON = {"out": (str, "."), "seed": (int, 12345), "threads": (int, 1)}

_SCHEMA = {
    "weights": {"method": (str, "bdf1"), "alpha": (float, 0.5), "h": (float, 1.0),
                "n": (int, 10), "kind": (str, "derivative")},
    "verify": {"samples": (int, 1000), "method": (str, None), "alpha": (float, None)},
    "converge": {"alphas": ("floats", "0.1,0.3,0.5,0.7,0.9"), "levels": ("levels", "5..9"),
                 "methods": ("strs", "bdf1,bdf2"), "M": (int, 99), "T": (float, 1.0),
                 "fit_levels": (int, 3)},
    "order": {"alphas": ("floats", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"),
              "methods": ("strs", "bdf1,bdf2"), "base_level": (int, 8), "M": (int, ex.POROUS_M),
              "T": (float, 1.0), "x0": (float, ex.POROUS_X0), "delta": (float, ex.POROUS_DELTA)},
    "bench": {"alphas": ("floats", "0.3,0.5,0.7"), "n": (int, 512), "reps": (int, 20),
              "M": (int, ex.TIMING_M), "epsilon": (float, 1e-8), "n0": (int, 5),
              "l1": (bool, True)},
    "solve": {"problem": (str, "manufactured"), "alpha": (float, 0.5), "method": (str, "bdf1"),
              "n": (int, 256), "M": (int, 99), "T": (float, 1.0), "history": (str, "naive"),
              "epsilon": (float, 1e-8), "n0": (int, 5), "x0": (float, ex.POROUS_X0),
              "delta": (float, ex.POROUS_DELTA), "acknowledge_inadmissible": (bool, False)},
}


def _parse_floats(v):
    if isinstance(v, (list, tuple)):
        return tuple(float(x) for x in v)
    return tuple(float(x) for x in str(v).split(",") if x.strip())


def _parse_strs(v):
    if isinstance(v, (list, tuple)):
        return tuple(str(x) for x in v)
    return tuple(x.strip() for x in str(v).split(",") if x.strip())


def _parse_levels(v):
    """``"5..9"`` or ``"5,6,7"`` or a list of ints."""
    if isinstance(v, (list, tuple)):
        return tuple(int(x) for x in v)
    s = str(v)
    if ".." in s:
        lo, hi = s.split("..")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(x) for x in s.split(",") if x.strip())


def _coerce(key, kind, value):
    if value is None:
        return None
    try:
        if kind == "floats":
            return _parse_floats(value)
        if kind == "strs":
            return _parse_strs(value)
        if kind == "levels":
            return _parse_levels(value)
        if kind is bool:
            if isinstance(value, bool):
                return value
            raise TypeError
        if kind is int and isinstance(value, float) and not value.is_integer():
            raise TypeError
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key!r}: {value!r}") from None


def _add_common(p):
    p.add_argument("--config", help="TOML file with default values for this command")
    p.add_argument("--out", help="output directory (default: current directory)")
    p.add_argument("--seed", type=int, help="seed for randomized fixtures")
    p.add_argument("--threads", type=int, help="worker threads for independent study cells")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cqsubdiff", description=__doc__.splitlines()[0],
                                     argument_default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("weights", help="dump a CQ weight table to weights.csv",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--method", choices=["bdf1", "bdf2", "l1", "euler"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--h", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--kind", choices=["derivative", "integral"])
    _add_common(p)

    p = sub.add_parser("verify", help="randomized checks of the discrete inequalities",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--samples", type=int)
    p.add_argument("--method", choices=["bdf1", "bdf2", "euler"], help="pin the weight method")
    p.add_argument("--alpha", type=float, help="pin the fractional order")
    _add_common(p)

    p = sub.add_parser("converge", help="error study on the manufactured problem",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--alphas")
    p.add_argument("--levels", help="e.g. 5..9 or 5,6,7")
    p.add_argument("--methods")
    p.add_argument("--M", type=int, help="interior nodes")
    p.add_argument("--T", type=float)
    p.add_argument("--fit-levels", dest="fit_levels", type=int,
                   help="number of finest levels in the slope fit")
    _add_common(p)

    p = sub.add_parser("order", help="Aitken order estimates on the porous problem",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--alphas")
    p.add_argument("--methods")
    p.add_argument("--base-level", dest="base_level", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--x0", type=float)
    p.add_argument("--delta", type=float)
    _add_common(p)

    p = sub.add_parser("bench", help="naive vs compressed history timing",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--alphas")
    p.add_argument("--n", type=int, help="time steps")
    p.add_argument("--reps", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--n0", type=int)
    p.add_argument("--no-l1", dest="l1", action="store_false")
    _add_common(p)

    p = sub.add_parser("solve", help="run one simulation and write trajectory.jsonl",
                       argument_default=argparse.SUPPRESS)
    p.add_argument("--problem", choices=["manufactured", "porous"])
    p.add_argument("--alpha", type=float)
    p.add_argument("--method", choices=["bdf1", "bdf2", "l1", "euler"])
    p.add_argument("--n", type=int)
    p.add_argument("--M", type=int)
    p.add_argument("--T", type=float)
    p.add_argument("--history", choices=["naive", "fast"])
    p.add_argument("--epsilon", type=float)
    p.add_argument("--n0", type=int)
    p.add_argument("--x0", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--acknowledge-inadmissible", dest="acknowledge_inadmissible",
                   action="store_true")
    _add_common(p)
    return parser


def resolve_config(command: str, flags: dict) -> dict:
    """Defaults, then the TOML file, then explicit flags."""
    schema = {**_COMMON, **_SCHEMA[command]}
    cfg = {k: default for k, (_, default) in schema.items()}
    path = flags.pop("config", None)
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        unknown = sorted(set(data) - set(schema))
        if unknown:
            raise ConfigError(f"unknown config key(s) for '{command}': {', '.join(unknown)}")
        cfg.update(data)
    cfg.update({k: v for k, v in flags.items() if k in schema})
    return {k: _coerce(k, schema[k][0], v) for k, v in cfg.items()}


def _outdir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_weights(cfg) -> int:
    method, kind = Method.parse(cfg["method"]), Kind.parse(cfg["kind"])
    if method is Method.L1:
        if kind is not Kind.DERIVATIVE:
            raise ConfigError("L1 weights exist for the derivative only")
        table = l1_weights(cfg["alpha"], cfg["h"], cfg["n"])
    else:
        table = generate_weights(method, cfg["alpha"], kind, cfg["h"], cfg["n"])
    notes = [f"method={method.value} kind={kind.value} alpha={cfg['alpha']!r} h={cfg['h']!r} "
             f"N={cfg['n']}"]
    if kind is Kind.DERIVATIVE:
        verdict = check_admissible(table)
        if verdict.admissible:
            notes.append("admissible=yes first_violation=none")
        else:
            notes.append(f"admissible=no first_violation={verdict.first_violation}")
    else:
        notes.append("admissible=n/a (integral table)")
    path = _outdir(cfg) / "weights.csv"
    with open(path, "w", newline="") as fh:
        table.to_csv(fh, comments=notes)
    for line in notes:
        print(line)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_verify(cfg) -> int:
    if (cfg["method"] is None) != (cfg["alpha"] is None):
        raise ConfigError("--method and --alpha must be given together")
    if cfg["samples"] < 0:
        raise ConfigError("samples must be nonnegative")
    if cfg["method"] is not None:
        table = generate_weights(cfg["method"], cfg["alpha"], Kind.DERIVATIVE, 1.0, 64)
        verdict = check_admissible(table)
        if not verdict.admissible:
            raise NonAdmissibleError(
                f"{table.method.name} weights at alpha={cfg['alpha']} violate the sign condition "
                f"at j={verdict.first_violation}; refusing to check inequalities that need it"
            )
    rng = np.random.Generator(np.random.PCG64(cfg["seed"]))
    print(f"generator={RNG_NAME} seed={cfg['seed']} samples={cfg['samples']}")
    if cfg["samples"] == 0:
        log.warning("samples=0: nothing checked, passing vacuously")
        print("WARNING: samples=0, vacuous pass")
        return EXIT_OK
    res = verify_suite(rng, cfg["samples"], cfg["method"], cfg["alpha"])
    print(f"coercivity failures: {res.coercivity_failures}/{res.samples}")
    print(f"integrated-bound failures: {res.bound_failures}/{res.samples}")
    print(f"convolution-inverse failures: {res.inverse_failures}/{res.samples}")
    print("PASS" if res.ok else "FAIL")
    return EXIT_OK if res.ok else EXIT_NUMERIC


def cmd_converge(cfg) -> int:
    study = ex.StudyConfig(alphas=cfg["alphas"], levels=cfg["levels"], T=cfg["T"], M=cfg["M"],
                           methods=cfg["methods"], threads=cfg["threads"],
                           fit_levels=cfg["fit_levels"])
    out = _outdir(cfg)
    report = ex.convergence_study(study)
    with open(out / "errors.csv", "w", newline="") as fh:
        ex.write_errors_csv(report, fh)
    with open(out / "errors.jsonl", "w") as fh:
        ex.write_jsonl(report, fh)
    print(f"{'alpha':>6} {'method':>6} {'slope@T':>8} {'slope@t1':>9} {'nodal@T':>8} {'nodal@t1':>9}")
    for (a, m), (sT, s1) in report.slopes.items():
        nT, n1 = report.nodal_slopes[(a, m)]
        print(f"{a:6.2f} {m:>6} {sT:8.3f} {s1:9.3f} {nT:8.3f} {n1:9.3f}")
    return EXIT_OK


def cmd_order(cfg) -> int:
    ex.StudyConfig(alphas=cfg["alphas"], methods=cfg["methods"], T=cfg["T"], M=cfg["M"],
                   threads=cfg["threads"])
    if cfg["base_level"] < 1:
        raise ConfigError("base_level must be positive")
    ex.porous_problem(0.5, cfg["x0"], cfg["delta"])
    out = _outdir(cfg)
    report = ex.aitken_study(cfg["alphas"], cfg["methods"], cfg["base_level"], cfg["T"], cfg["M"],
                             cfg["x0"], cfg["delta"], cfg["threads"])
    with open(out / "orders.csv", "w", newline="") as fh:
        ex.write_orders_csv(report, fh)
    with open(out / "orders.jsonl", "w") as fh:
        ex.write_jsonl(report, fh)
    print(ex.format_orders_table(report))
    return EXIT_OK


def cmd_bench(cfg) -> int:
    ex.StudyConfig(alphas=cfg["alphas"], M=cfg["M"], reps=cfg["reps"], histories=("fast",),
                   epsilon=cfg["epsilon"], n0=cfg["n0"])
    if cfg["n"] < 2:
        raise ConfigError("n must be at least 2")
    out = _outdir(cfg)
    rows = ex.timing_comparison(cfg["alphas"], cfg["n"], cfg["M"], cfg["reps"], cfg["epsilon"],
                                cfg["n0"], include_l1=cfg["l1"])
    with open(out / "bench.csv", "w", newline="") as fh:
        ex.write_bench_csv(rows, fh)
    print(f"{'alpha':>6} {'naive/fast':>16} {'L1/fast':>16}")
    for r in rows:
        print(f"{r.alpha:6.2f} {r.naive_over_fast:8.3f}±{r.naive_over_fast_std:<7.3f} "
              f"{r.l1_over_fast:8.3f}±{r.l1_over_fast_std:<7.3f}")
    return EXIT_OK


def cmd_solve(cfg) -> int:
    if cfg["problem"] == "manufactured":
        spec = ex.manufactured_problem(cfg["alpha"])
    elif cfg["problem"] == "porous":
        spec = ex.porous_problem(cfg["alpha"], cfg["x0"], cfg["delta"])
    else:
        raise ConfigError(f"unknown problem {cfg['problem']!r}")
    if cfg["history"] == "fast":
        history = HistoryMode.fast(cfg["epsilon"], cfg["n0"])
    elif cfg["history"] == "naive":
        history = HistoryMode.naive()
    else:
        raise ConfigError(f"unknown history mode {cfg['history']!r}")
    grid = TimeGrid(cfg["T"], cfg["n"])
    Method.parse(cfg["method"])
    out = _outdir(cfg)
    tr = run(spec, grid, cfg["method"], history, store="final", M=cfg["M"],
             acknowledge_inadmissible=cfg["acknowledge_inadmissible"])
    with open(out / "trajectory.jsonl", "w") as fh:
        tr.to_jsonl(fh)
    with open(out / "solution.csv", "w", newline="") as fh:
        tr.nodal_csv(grid.N, fh)
    print(f"{spec.name}: N={grid.N} M={cfg['M']} history={history.kind} "
          f"||U^N||={tr.norms[-1]:.6e}")
    if tr.cfl_violations:
        print(f"note: h/k > t_n^(1-alpha/2) at {tr.cfl_violations} steps")
    if spec.exact is not None:
        err = l2_error(tr.mesh, tr.final, lambda x: spec.exact(x, grid.T))
        print(f"L2 error at T: {err:.6e}")
    return EXIT_OK


_COMMANDS = {"weights": cmd_weights, "verify": cmd_verify, "converge": cmd_converge,
             "order": cmd_order, "bench": cmd_bench, "solve": cmd_solve}


def main(argv=None) -> int:
    parser = build_parser()
    args = vars(parser.parse_args(argv))
    command = args.pop("command")
    logging.basicConfig(level=logging.INFO if args.pop("verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(command, args)
        if cfg["threads"] < 1:
            raise ConfigError("threads must be at least 1")
        os.environ.setdefault("OMP_NUM_THREADS", str(cfg["threads"]))
        return _COMMANDS[command](cfg)
    except NonAdmissibleError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (AssemblyError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
