"""Command-line front end: ``fsbp construct|verify|solve|sweep``.

Exit codes: 0 success, 1 verification failure, 2 construction failure,
3 parse/config error, 4 solver divergence.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import opfile
from .funcspace import SpaceError, exactness_space, parse_space
from .operators import (ConstructionError, continuous_nullspace, construct, normalized_extra_vector,
                        nullspace, spectrum, verify_exactness)
from .quadrature import QuadratureError, rule_for
from .solvers import (EXPERIMENTS, DivergenceError, ExperimentConfig, SatError, Scheme,
                      run_experiment, write_report_csv, write_snapshot_csv)

EXIT_OK, EXIT_VERIFY, EXIT_CONSTRUCT, EXIT_PARSE, EXIT_DIVERGE = 0, 1, 2, 3, 4

SBP_TOL, D1_TOL, D2_TOL = 1e-12, 1e-10, 1e-8
NORMS = ("err_1", "err_2", "err_inf", "err_P")


class ConfigError(ValueError):
    pass


# {{{ configuration


@dataclass
class RunConfig:
    experiment: str
    schemes: list
    base: ExperimentConfig
    out_dir: Path = Path(".")
    prefix: str = ""
    sweep_axis: Optional[str] = None
    sweep_values: list = field(default_factory=list)
    seed: int = 0


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in re.split(r"[,\s]+", text.strip()) if v)


def load_config(path) -> RunConfig:
    """Read an INI file with sections experiment, space, grid, mesh, physics,
    sat, time, reference, output, sweep and run."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";;"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None

    def get(section, key, conv=str, default=None):
        if not parser.has_option(section, key):
            return default
        raw = parser.get(section, key)
        try:
            return conv(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} = {raw!r}: {exc}") from None

    name = get("experiment", "name")
    if name not in EXPERIMENTS:
        raise ConfigError(f"[experiment] name must be one of {', '.join(EXPERIMENTS)}, got {name!r}")
    schemes = [s.strip() for s in (get("space", "schemes", default="") or "").split(";") if s.strip()]
    domain = get("mesh", "domain", _floats)
    if domain is not None and len(domain) != 2:
        raise ConfigError("[mesh] domain needs two numbers")
    base = ExperimentConfig(
        domain=domain,
        nblocks=get("mesh", "blocks", int),
        n=get("grid", "n", int),
        a=get("physics", "a", float),
        eps=get("physics", "eps", float),
        a2=get("physics", "a2", float),
        eps2=get("physics", "eps2", float),
        c=get("physics", "c", float, 1.0),
        initial=get("physics", "initial", str, "f1"),
        k=get("physics", "k", float, 1.0),
        sigma1R=get("sat", "sigma1R", float),
        sigma2R=get("sat", "sigma2R", float),
        T=get("time", "T", float),
        dt=get("time", "dt", float),
        c_cfl=get("time", "c_cfl", float, 0.25),
        samples=get("time", "samples", int, 100),
        reference_scheme=get("reference", "scheme", str, "poly:d=2@lobatto:3"),
        reference_nblocks=get("reference", "blocks", int),
        reference_cache=get("reference", "cache", str),
    )
    if base.dt is not None and not base.dt > 0:
        raise ConfigError("[time] dt must be positive")
    if base.c_cfl <= 0:
        raise ConfigError("[time] c_cfl must be positive")
    axis = get("sweep", "axis")
    if axis is not None and axis not in ("N", "I", "dt", "alpha"):
        raise ConfigError(f"[sweep] axis must be N, I, dt or alpha, got {axis!r}")
    values = list(get("sweep", "values", _floats, ()))
    out_dir = Path(get("output", "dir", str, "."))
    return RunConfig(name, schemes, base, out_dir, get("output", "prefix", str, ""),
                     axis, values, get("run", "seed", int, 0))


# }}}


def _label(scheme: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", scheme).strip("_")


def _fmt(v) -> str:
    return f"{v:.17g}"


# {{{ construct / verify


def cmd_construct(args) -> int:
    try:
        element = _floats(args.element)
        space = parse_space(args.space, element)
        family, _, n = args.grid.partition(":")
        rule = rule_for(space, family or "equi", int(n) if n else None)
        ops = construct(space, rule, args.method)
    except (SpaceError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCT
    except (QuadratureError, ConstructionError) as exc:
        print(f"construction failed: {exc}", file=sys.stderr)
        return EXIT_CONSTRUCT
    out = args.out or f"{_label(args.space)}_N{ops.n}.fsbp"
    opfile.write(ops, out)
    print(f"wrote {out}")
    print(f"N = {ops.n}")
    print("weights = " + " ".join(_fmt(w) for w in ops.weights))
    print(f"sbp residual |Q+Q^T-B|_max = {ops.sbp_residual():.3e}")
    print(f"order-1 exactness residual on F+F' = "
          f"{verify_exactness(ops, ops.exactness_space, 1):.3e}")
    print(f"order-2 exactness residual on F = {verify_exactness(ops, space, 2):.3e}")
    return EXIT_OK


def _describe_kernel(dim: int, dim_expected: int) -> str:
    names = {0: "{}", 1: "{1}", 2: "{1,x}"}
    base = names.get(min(dim, dim_expected), f"dim {min(dim, dim_expected)}")
    if dim > dim_expected:
        return f"{base}+{dim - dim_expected} extra"
    return base


def verify_operators(ops, space=None) -> tuple:
    """Return (report lines, hard invariants ok)."""
    lines = []
    ok = True
    sbp = ops.sbp_residual()
    good = sbp <= SBP_TOL
    ok &= good
    lines.append(f"sbp residual |Q+Q^T-B|_max = {sbp:.3e} [{'ok' if good else 'FAIL'}]")
    pmin = float(np.min(ops.weights))
    good = pmin > 0
    ok &= good
    lines.append(f"min diag(P) = {pmin:.6g} [{'ok' if good else 'FAIL'}]")
    d1_consistent = np.max(np.abs(ops.D1 - ops.Q / ops.weights[:, None])) <= 1e-10 * max(
        1.0, np.max(np.abs(ops.D1)))
    ok &= bool(d1_consistent)
    lines.append(f"D1 = P^-1 Q [{'ok' if d1_consistent else 'FAIL'}]")

    if space is not None:
        r1 = verify_exactness(ops, exactness_space(space), 1)
        r2 = verify_exactness(ops, space, 2)
        ok &= r1 <= D1_TOL and r2 <= D2_TOL
        lines.append(f"order-1 exactness residual on F+F' = {r1:.3e} [{'ok' if r1 <= D1_TOL else 'FAIL'}]")
        lines.append(f"order-2 exactness residual on F = {r2:.3e} [{'ok' if r2 <= D2_TOL else 'FAIL'}]")
        e1 = continuous_nullspace(space, ops.nodes, 1)
        e2 = continuous_nullspace(space, ops.nodes, 2)
    else:
        lines.append("exactness: space tag not recognised, skipped")
        e1 = np.ones((ops.n, 1))
        e2 = np.column_stack([np.ones(ops.n), ops.nodes])
    n1 = nullspace(ops.D1, e1, tag="D1")
    n2 = nullspace(ops.D2, e2, tag="D2")
    verdict = "consistent" if n1.consistent and n2.consistent else "inconsistent"
    lines.append(f"nullspace(D1)={_describe_kernel(n1.dim, e1.shape[1])}, "
                 f"nullspace(D2)={_describe_kernel(n2.dim, e2.shape[1])}: "
                 f"{verdict}")
    for rep, exp in ((n1, e1), (n2, e2)):
        state = "consistent" if rep.consistent else "inconsistent"
        lines.append(f"  {rep.tag}: dim {rep.dim} (expected {exp.shape[1]}), "
                     f"max principal angle {rep.max_angle:.2e}: {state}")
        extra = normalized_extra_vector(rep)
        if extra is not None:
            lines.append(f"  {rep.tag} extra kernel vector: [" + ", ".join(f"{v:.4f}" for v in extra) + "]")
    spec = spectrum(ops.D2)
    lines.append(f"spectrum(D2): max Re = {spec.max_real:.3e}, max |Im| = {spec.max_imag:.3e}, "
                 f"radius = {spec.spectral_radius:.6g}")
    return lines, bool(ok)


def cmd_verify(args) -> int:
    try:
        ops = opfile.read(args.file)
    except (OSError, opfile.OperatorFileError) as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        space = parse_space(args.space or ops.tag, ops.element)
    except SpaceError:
        space = None
    lines, ok = verify_operators(ops, space)
    print("\n".join(lines))
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_VERIFY


# }}}


# {{{ solve / sweep


def _schemes(cfg: RunConfig) -> list:
    return cfg.schemes or [""]


def _run(cfg: RunConfig, scheme: str, base: Optional[ExperimentConfig] = None):
    base = base or cfg.base
    return run_experiment(cfg.experiment, replace(base, scheme=scheme))


def cmd_solve(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    out_dir = Path(args.out_dir) if args.out_dir else cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    for scheme in _schemes(cfg):
        try:
            rep = _run(cfg, scheme)
        except DivergenceError as exc:
            print(f"{scheme or cfg.experiment}: diverged at step {exc.step}; "
                  f"last finite time {exc.last_finite_t:.17g}", file=sys.stderr)
            return EXIT_DIVERGE
        except (SpaceError, QuadratureError, ConstructionError) as exc:
            print(f"{scheme}: construction failed: {exc}", file=sys.stderr)
            return EXIT_CONSTRUCT
        except (SatError, ValueError) as exc:
            print(f"{scheme}: invalid configuration: {exc}", file=sys.stderr)
            return EXIT_PARSE
        stem = f"{cfg.prefix}{cfg.experiment}_{_label(rep.scheme)}"
        write_report_csv(rep, out_dir / f"{stem}_report.csv")
        write_snapshot_csv(rep, out_dir / f"{stem}_snapshot.csv")
        errs = " ".join(f"{k}={_fmt(v)}" for k, v in rep.errors.items())
        print(f"{rep.scheme}: dt={_fmt(rep.dt)} mass_drift={rep.mass_drift:.3e} {errs}")
    return EXIT_OK


def _with_alpha(scheme: str, alpha: float) -> str:
    sch = Scheme.parse(scheme)
    kind, _, rest = sch.space.partition(":")
    params = [p for p in rest.split(",") if p and not p.startswith("alpha=")]
    params.append(f"alpha={alpha!r}")
    return str(replace(sch, space=f"{kind}:{','.join(params)}"))


def sweep_point(cfg: RunConfig, scheme: str, axis: str, value: float) -> dict:
    """Errors of one sweep point; NaNs when the run diverges or cannot be built."""
    base = cfg.base
    if axis == "I":
        base = replace(base, nblocks=int(value))
    elif axis == "N":
        base = replace(base, n=int(value))
        if cfg.experiment == "wave" and scheme.startswith("trig"):
            # trigonometric operators live on N = 2d + 2 nodes
            sch = Scheme.parse(scheme)
            scheme = str(replace(sch, space=f"trig:d={(int(value) - 2) // 2}", n=int(value)))
        elif cfg.experiment != "wave" and scheme:
            sch = Scheme.parse(scheme)
            scheme = str(replace(sch, n=int(value)))
    elif axis == "dt":
        base = replace(base, dt=float(value))
    elif axis == "alpha":
        scheme = _with_alpha(scheme, float(value))
    try:
        rep = _run(cfg, scheme, base)
        return dict(rep.errors)
    except (DivergenceError, QuadratureError, ConstructionError, SpaceError):
        return {k: math.nan for k in NORMS}


def cmd_sweep(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    axis = args.axis or cfg.sweep_axis
    if axis not in ("N", "I", "dt", "alpha"):
        print("config error: sweep axis must be N, I, dt or alpha", file=sys.stderr)
        return EXIT_PARSE
    if not cfg.sweep_values:
        print("config error: [sweep] values is empty", file=sys.stderr)
        return EXIT_PARSE
    out_dir = Path(args.out_dir) if args.out_dir else cfg.out_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / f"{cfg.prefix}{cfg.experiment}_sweep_{axis}.csv"
    jobs = [(s, v) for s in _schemes(cfg) for v in cfg.sweep_values]
    workers = max(1, int(os.environ.get("FSBP_THREADS", "1") or 1))
    try:
        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                results = list(pool.map(lambda j: sweep_point(cfg, j[0], axis, j[1]), jobs))
        else:
            results = [sweep_point(cfg, s, axis, v) for s, v in jobs]
    except (SatError, ValueError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_PARSE
    rows = sweep_rows(jobs, results, axis)
    with open(out, "w") as fh:
        fh.write("scheme,axis,value,norm,error,order\n")
        for r in rows:
            fh.write(",".join([r[0], r[1], _fmt(r[2]), r[3], _fmt(r[4]), _fmt(r[5])]) + "\n")
    print(f"wrote {out} ({len(rows)} rows)")
    return EXIT_OK


def sweep_rows(jobs, results, axis) -> list:
    """Long format rows with the observed order between consecutive points.

    The order is ``log(e_prev/e) / log(h_prev/h)`` with ``h = 1/value`` for
    the N and I axes and ``h = value`` for dt; it is NaN for alpha sweeps and
    for the first point of every scheme.
    """
    rows = []
    prev = {}
    for (scheme, value), errs in zip(jobs, results):
        for norm in NORMS:
            e = errs.get(norm, math.nan)
            order = math.nan
            key = (scheme, norm)
            if key in prev and axis != "alpha":
                pv, pe = prev[key]
                h0, h1 = (1 / pv, 1 / value) if axis in ("N", "I") else (pv, value)
                if pe > 0 and e > 0 and h0 != h1:
                    order = math.log(pe / e) / math.log(h0 / h1)
            prev[key] = (value, e)
            rows.append((scheme or "default", axis, value, norm, e, order))
    return rows


# }}}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fsbp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="build an operator set and write it to a file")
    c.add_argument("--space", required=True, help="e.g. poly:d=2, trig:d=1, exp:d=2,alpha=1, rbf:alpha=1")
    c.add_argument("--grid", default="equi", help="node family with optional size, e.g. lobatto:3 or equi")
    c.add_argument("--element", default="-1,1", help="reference element (default -1,1)")
    c.add_argument("--method", default="auto", choices=("auto", "lstsq", "projection"))
    c.add_argument("--out", "-o", help="output file")
    c.set_defaults(func=cmd_construct)

    v = sub.add_parser("verify", help="check an operator file")
    v.add_argument("file")
    v.add_argument("--space", help="override the space tag stored in the file")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("solve", help="run an experiment from a config file")
    s.add_argument("config")
    s.add_argument("--out-dir")
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="run a parameter sweep from a config file")
    w.add_argument("config")
    w.add_argument("--axis", choices=("N", "I", "dt", "alpha"))
    w.add_argument("--out-dir")
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
