"""Command line: transforms, convolutions, verifiers, sweeps and plots.

Exit codes: 0 every verdict passed, 1 some verdict failed, 2 usage, I/O or
precondition error, or an inconclusive verdict.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import io as _io
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import _kernels
from . import io as pio
from .busemann import reduction_check, verify_busemann
from .convolutions import (ConvolutionParams, ginf_conv, ginf_conv_m, inf_conv, polar_of_sum)
from .grid import GridFunction
from .inequalities import (REL_TOL, sweep, sweep_csv, verify_classical_pl, verify_lp,
                           verify_polar_pl, verify_polar_pl_measure)
from .transforms import gauge, legendre, polarity

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    """A flag value that fails a precondition; the message names the flag."""


@dataclass
class RunConfig:
    command: str
    action: Optional[str] = None
    inputs: dict = field(default_factory=dict)
    output: Optional[str] = None
    lam: float = 0.5
    p: Optional[float] = None
    measure: Optional[str] = None
    factor: float = 4.0
    out_shape: Optional[tuple] = None
    shape: Optional[tuple] = None
    n: int = 1
    t_samples: int = 65
    rel_tol: float = REL_TOL
    seed: int = 0
    count: int = 1
    route: str = "formula"
    deterministic: bool = False

    def validate(self) -> None:
        if not 0.0 < self.lam < 1.0:
            raise UsageError(f"--lambda must lie strictly inside (0, 1), got {self.lam}")
        if self.p is not None and not self.p > 0:
            raise UsageError(f"--p must be positive, got {self.p}")
        if self.t_samples < 3:
            raise UsageError(f"--t-samples must be at least 3, got {self.t_samples}")
        if self.rel_tol < 0:
            raise UsageError(f"--rel-tol must be non-negative, got {self.rel_tol}")
        if not self.factor > 0:
            raise UsageError(f"--factor must be positive, got {self.factor}")
        if self.count < 1:
            raise UsageError(f"--count must be at least 1, got {self.count}")
        if self.n not in (1, 2):
            raise UsageError(f"--n must be 1 or 2, got {self.n}")
        for flag, shp in (("--out-shape", self.out_shape), ("--shape", self.shape)):
            if shp is not None and any(s < 2 for s in shp):
                raise UsageError(f"{flag} needs at least 2 samples per axis, got {list(shp)}")
        for key, path in self.inputs.items():
            paths = path if isinstance(path, list) else [path]
            for p in paths:
                if p is not None and not Path(p).is_file():
                    raise UsageError(f"--{key}: no such file {p}")


# --------------------------------------------------------------------- helpers

def _stamp(d: dict, cfg: RunConfig) -> dict:
    if not cfg.deterministic:
        d = dict(d, generated_at=_dt.datetime.now(_dt.timezone.utc).isoformat())
    return d


def _emit_report(report: dict, schema: dict, cfg: RunConfig) -> None:
    report = _stamp(report, cfg)
    jsonschema.validate(report, schema)
    if cfg.output:
        pio.write_atomic(cfg.output, pio.dumps(report))


def _code(verdicts: Sequence[str]) -> int:
    if any(v == "inconclusive" for v in verdicts):
        return EXIT_ERROR
    return EXIT_PASS if all(v == "pass" for v in verdicts) else EXIT_FAIL


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _load(cfg: RunConfig, key: str) -> Optional[GridFunction]:
    path = cfg.inputs.get(key)
    if path is None:
        return None
    try:
        return pio.load_function(path)
    except (ValueError, jsonschema.ValidationError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        raise UsageError(f"--{key}: {msg}") from exc


# --------------------------------------------------------------------- commands

def _transform(cfg: RunConfig) -> int:
    f = _load(cfg, "in")
    op = {"legendre": legendre, "polarity": polarity, "gauge": gauge}[cfg.action]
    out = op(f, out_shape=cfg.out_shape, factor=cfg.factor)
    pio.save_function(cfg.output, out)
    print(f"transform {cfg.action}: wrote {cfg.output} shape={list(out.shape)}")
    return EXIT_PASS


def _convolve(cfg: RunConfig) -> int:
    paths = cfg.inputs["in"]
    fs = []
    for p in paths:
        try:
            fs.append(pio.load_function(p))
        except (ValueError, jsonschema.ValidationError) as exc:
            raise UsageError(f"--in {p}: {getattr(exc, 'message', exc)}") from exc
    need = None if cfg.action == "ginf-m" else 2
    if need is not None and len(fs) != need:
        raise UsageError(f"--in: {cfg.action} takes exactly 2 functions, got {len(fs)}")
    if len(fs) < 2:
        raise UsageError("--in: ginf-m takes at least 2 functions")
    params = ConvolutionParams(cfg.lam, cfg.t_samples)
    if cfg.action == "inf":
        out = inf_conv(fs[0], fs[1], cfg.lam, out_shape=cfg.out_shape)
    elif cfg.action == "ginf":
        out = ginf_conv(fs[0], fs[1], params, out_shape=cfg.out_shape)
    elif cfg.action == "ginf-m":
        out = ginf_conv_m(fs, params, out_shape=cfg.out_shape)
    else:
        out = polar_of_sum(fs[0], fs[1], params, route=cfg.route, out_shape=cfg.out_shape, factor=cfg.factor)
    pio.save_function(cfg.output, out)
    print(f"convolve {cfg.action}: wrote {cfg.output} shape={list(out.shape)}")
    return EXIT_PASS


def _measure_alpha(cfg: RunConfig) -> Optional[GridFunction]:
    alpha = _load(cfg, "alpha")
    if cfg.measure is None or cfg.measure == "lebesgue":
        return alpha
    tag, _, arg = cfg.measure.partition(":")
    if tag != "weighted" or not arg:
        raise UsageError(f"--measure: polar-pl-mu needs 'lebesgue' or 'weighted:alpha.json', got {cfg.measure!r}")
    if alpha is not None:
        raise UsageError("--measure and --alpha both give a weight; pass one")
    if not Path(arg).is_file():
        raise UsageError(f"--measure: no such file {arg}")
    return pio.load_function(arg)


def _verify(cfg: RunConfig) -> int:
    if cfg.action == "busemann":
        try:
            inst = pio.instance_from_dict(pio.read_json(cfg.inputs["instance"]))
        except ValueError as exc:
            raise UsageError(f"--instance: {exc}") from exc
        rep = verify_busemann(inst, cfg.rel_tol, seed=cfg.seed)
    elif cfg.action == "reduction":
        path = Path(cfg.inputs["emb"])
        try:
            emb = pio.embedding_from_dict(pio.read_json(path), path.parent)
        except ValueError as exc:
            raise UsageError(f"--emb: {exc}") from exc
        red = reduction_check(emb, seed=cfg.seed)
        _emit_report(red.to_dict(), pio.REDUCTION_SCHEMA, cfg)
        failed = ",".join(red.failed) or "none"
        print(f"reduction: {'pass' if red.passed else 'fail'} failed={failed}")
        return EXIT_PASS if red.passed else EXIT_FAIL
    else:
        f, g, h = _load(cfg, "f"), _load(cfg, "g"), _load(cfg, "h")
        if f is None or g is None:
            raise UsageError("--f and --g are required")
        params = ConvolutionParams(cfg.lam, cfg.t_samples)
        desc = {"f": cfg.inputs.get("f"), "g": cfg.inputs.get("g"), "h": cfg.inputs.get("h")}
        if cfg.action == "pl":
            rep = verify_classical_pl(f, g, cfg.lam, h, cfg.rel_tol, instance=desc)
        elif cfg.action == "polar-pl":
            rep = verify_polar_pl(f, g, cfg.lam, h, params, cfg.rel_tol, instance=desc)
        elif cfg.action == "polar-pl-mu":
            alpha = _measure_alpha(cfg)
            if alpha is None:
                raise UsageError("--alpha (or --measure weighted:alpha.json) is required for polar-pl-mu")
            rep = verify_polar_pl_measure(f, g, cfg.lam, alpha, h, params, cfg.rel_tol, instance=desc)
        else:
            if cfg.p is None:
                raise UsageError("--p is required for lp")
            rep = verify_lp(f, g, cfg.p, h, cfg.lam, params, cfg.rel_tol, instance=desc)
    _emit_report(rep.to_dict(), pio.REPORT_SCHEMA, cfg)
    print(f"{rep.theorem}: {rep.verdict} lhs={_fmt(rep.lhs)} rhs={_fmt(rep.rhs)} margin={_fmt(rep.margin)}")
    return _code([rep.verdict])


def _sweep(cfg: RunConfig) -> int:
    params = ConvolutionParams(cfg.lam, cfg.t_samples)
    reps = sweep(cfg.action, cfg.count, cfg.seed, cfg.n, cfg.shape, params, cfg.rel_tol)
    for r in reps:
        jsonschema.validate(r.to_dict(), pio.REPORT_SCHEMA)
    if cfg.output:
        pio.write_atomic(cfg.output, sweep_csv(reps))
    verdicts = [r.verdict for r in reps]
    print(f"sweep {cfg.action}: {verdicts.count('pass')}/{len(reps)} pass, "
          f"{verdicts.count('fail')} fail, {verdicts.count('inconclusive')} inconclusive")
    return _code(verdicts)


def _plot(cfg: RunConfig) -> int:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "polarpl"
    fig, ax = plt.subplots(figsize=(6, 4))
    if cfg.inputs.get("csv"):
        with open(cfg.inputs["csv"], encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise UsageError("--csv: no rows")
        by_p = {}
        for r in rows:
            by_p.setdefault(r["p"] or "-", []).append((float(r["lambda"]), float(r["margin"])))
        for p, pts in sorted(by_p.items()):
            pts.sort()
            lams = sorted({l for l, _ in pts})
            worst = [min(m for l, m in pts if l == lam) for lam in lams]
            ax.plot(lams, worst, marker="o", label="all" if p == "-" else f"p={p}")
        ax.set_xlabel("lambda")
        ax.set_ylabel("smallest margin")
    else:
        for path in cfg.inputs["in"]:
            f = pio.load_function(path)
            if f.dim != 1:
                raise UsageError(f"--in {path}: only 1D functions can be plotted")
            vals = np.where(np.isfinite(f.values), f.values, np.nan)
            ax.plot(f.axes[0], vals, label=Path(path).stem)
        ax.set_xlabel("x")
    ax.legend()
    fig.tight_layout()
    buf = _io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    pio.write_atomic(cfg.output, buf.getvalue())
    print(f"plot: wrote {cfg.output}")
    return EXIT_PASS


COMMANDS = {"transform": _transform, "convolve": _convolve, "verify": _verify,
            "sweep": _sweep, "plot": _plot}


def run(cfg: RunConfig) -> int:
    cfg.validate()
    _kernels.set_threads_from_env()
    return COMMANDS[cfg.command](cfg)


# --------------------------------------------------------------------- parsing

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--deterministic", action="store_true", help="omit timestamps from reports")
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polarpl", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="Legendre, polarity or gauge transform of a grid function")
    p.add_argument("--op", required=True, choices=["legendre", "polarity", "gauge"])
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--factor", type=float, default=4.0, help="output box = factor x input box")
    p.add_argument("--out-shape", type=int, nargs="+")
    _common(p)

    p = sub.add_parser("convolve", help="inf-convolution or geometric inf-convolution")
    p.add_argument("--op", required=True, choices=["inf", "ginf", "ginf-m", "polar-sum"])
    p.add_argument("--in", dest="inp", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.5)
    p.add_argument("--t-samples", type=int, default=65)
    p.add_argument("--out-shape", type=int, nargs="+")
    p.add_argument("--factor", type=float, default=4.0)
    p.add_argument("--route", choices=["formula", "direct"], default="formula")
    _common(p)

    p = sub.add_parser("verify", help="check one inequality instance")
    vsub = p.add_subparsers(dest="action", required=True)
    for name in ("pl", "polar-pl", "polar-pl-mu", "lp"):
        q = vsub.add_parser(name)
        q.add_argument("--f", required=True)
        q.add_argument("--g", required=True)
        q.add_argument("--h")
        q.add_argument("--lambda", dest="lam", type=float, default=0.5)
        q.add_argument("--t-samples", type=int, default=65)
        q.add_argument("--rel-tol", type=float, default=REL_TOL)
        q.add_argument("--report")
        if name == "lp":
            q.add_argument("--p", type=float, required=True)
        if name == "polar-pl-mu":
            q.add_argument("--alpha")
            q.add_argument("--measure", help="lebesgue or weighted:alpha.json")
        _common(q)
    q = vsub.add_parser("busemann")
    q.add_argument("--instance", required=True)
    q.add_argument("--rel-tol", type=float, default=REL_TOL)
    q.add_argument("--report")
    _common(q)
    q = vsub.add_parser("reduction")
    q.add_argument("--emb", required=True)
    q.add_argument("--report")
    _common(q)

    p = sub.add_parser("sweep", help="seeded random suite written as CSV")
    p.add_argument("--suite", required=True, choices=["polar", "classical", "lp"])
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--csv")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--shape", type=int, nargs="+")
    p.add_argument("--t-samples", type=int, default=65)
    p.add_argument("--rel-tol", type=float, default=REL_TOL)
    _common(p)

    p = sub.add_parser("plot", help="SVG of 1D functions or of margins against lambda")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--in", dest="inp", nargs="+")
    g.add_argument("--csv")
    p.add_argument("--out", required=True)
    _common(p)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    cmd = args.command
    cfg = RunConfig(cmd, seed=args.seed, deterministic=args.deterministic)
    get = lambda k, d=None: getattr(args, k, d)  # noqa: E731
    cfg.lam = get("lam", 0.5)
    cfg.t_samples = get("t_samples", 65)
    cfg.rel_tol = get("rel_tol", REL_TOL)
    cfg.factor = get("factor", 4.0)
    cfg.p = get("p")
    cfg.measure = get("measure")
    cfg.route = get("route", "formula")
    if get("out_shape"):
        cfg.out_shape = tuple(args.out_shape)
    if cmd == "transform":
        cfg.action, cfg.inputs, cfg.output = args.op, {"in": args.inp}, args.out
    elif cmd == "convolve":
        cfg.action, cfg.inputs, cfg.output = args.op, {"in": list(args.inp)}, args.out
    elif cmd == "verify":
        cfg.action, cfg.output = args.action, args.report
        keys = {"busemann": ("instance",), "reduction": ("emb",)}.get(args.action, ("f", "g", "h", "alpha"))
        cfg.inputs = {k: get(k) for k in keys if get(k) is not None}
    elif cmd == "sweep":
        cfg.action, cfg.output, cfg.count, cfg.n = args.suite, args.csv, args.count, args.n
        cfg.shape = tuple(args.shape) if args.shape else None
        if cfg.shape is not None and len(cfg.shape) != cfg.n:
            cfg.shape = cfg.shape * cfg.n if len(cfg.shape) == 1 else cfg.shape
    else:
        cfg.output = args.out
        cfg.inputs = {"csv": args.csv} if args.csv else {"in": list(args.inp)}
    return cfg


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return run(config_from_args(args))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"polarpl: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError, ZeroDivisionError, jsonschema.ValidationError) as exc:
        msg = exc.message if isinstance(exc, jsonschema.ValidationError) else str(exc)
        print(f"polarpl: error: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
