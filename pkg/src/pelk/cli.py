"""Command-line entry point: ``pelk <command> [flags]``.

Exit codes: 0 success, 2 invalid arguments, 1 runtime failure (including
failed checks).
"""

from __future__ import annotations

import argparse
import csv
import sys
from typing import List, Optional, Sequence

from . import arch, bench, checks, erf, tensor_io
from .grid import GridError, build_grid, central_ratio, param_ratio, parse_half


class UsageError(Exception):
    pass


def _ints(text: str) -> List[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise UsageError("list must not be empty")
    return vals


def _floats(text: str) -> List[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}")
    if not vals:
        raise UsageError("list must not be empty")
    return vals


def _hw(text: str):
    parts = text.lower().replace("x", ",").split(",")
    try:
        vals = [int(p) for p in parts]
    except ValueError:
        raise UsageError(f"expected HxW, got {text!r}")
    if len(vals) == 1:
        vals = vals * 2
    if len(vals) != 2 or min(vals) < 1:
        raise UsageError(f"expected positive HxW, got {text!r}")
    return tuple(vals)


def _writer(out=None):
    return csv.writer(out or sys.stdout, lineterminator="\n")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


# commands ------------------------------------------------------------------------

def cmd_grid(args) -> int:
    if args.custom:
        g = parse_half(args.custom)
    else:
        if args.k is None:
            raise UsageError("--k is required unless --custom is given")
        if args.central < 1 or args.central % 2 == 0:
            raise UsageError(f"--central must be a positive odd size, got {args.central}")
        g = build_grid(args.k, (args.central - 1) // 2, args.base)
    pr, cr = param_ratio(g), central_ratio(g)
    if args.json:
        print(g.to_json())
    elif args.pretty:
        print(f"half grid     : {list(g.half)}")
        print(f"full grid     : {list(g.full)}")
        print(f"k / k'        : {g.k} / {g.k_prime}")
        print(f"param ratio   : {float(pr):.2f}x  ({pr})")
        print(f"central ratio : {100 * float(cr):.2f}%  ({cr})")
    else:
        w = _writer()
        w.writerow(["k", "k_prime", "half", "r_c", "m", "param_ratio", "central_ratio"])
        w.writerow([g.k, g.k_prime, ",".join(map(str, g.half)), g.r_c, g.m,
                    _fmt(float(pr)), _fmt(float(cr))])
    return 0


def _load_config(args) -> arch.ArchConfig:
    if args.config:
        cfg = arch.ArchConfig.load(args.config)
    else:
        cfg = arch.preset(args.preset)
    if args.form:
        cfg = arch.with_form(cfg, args.form)
    return cfg


FLOP_KEYS = ("stem", "conv", "posembed", "pointwise", "downsample", "norm_act", "head")


def cmd_params(args) -> int:
    cfg = _load_config(args)
    if args.input:
        rep = arch.flops_report(cfg, _hw(args.input))
    else:
        rep = arch.conv_param_count(cfg)
    header = ["stage", "form", "K", "k_prime", "dim", "depth", "conv_channels",
              "conv_params", "posembed_params", "other_params", "total_params"]
    if args.input:
        header += [f"flops_{k}" for k in FLOP_KEYS]
    w = _writer()
    w.writerow(header)
    for st in rep.stages:
        row = [st.stage, cfg.form, st.kernel, st.k_prime, st.dim, st.depth, st.conv_channels,
               st.conv_params, st.posembed_params, st.other_params, st.total_params]
        if args.input:
            row += [st.flops.get(k, 0) for k in FLOP_KEYS]
        w.writerow(row)
    extra = ["stem_head", cfg.form, "", "", "", "", "", 0, 0,
             rep.stem_params + rep.head_params, rep.stem_params + rep.head_params]
    total = ["total", cfg.form, "", "", "", "", "", rep.conv_params, rep.posembed_params,
             rep.other_params, rep.total_params]
    if args.input:
        fl = rep.flops_by_component()
        extra += [rep.stem_flops if k == "stem" else rep.head_flops if k == "head" else 0
                  for k in FLOP_KEYS]
        total += [fl[k] for k in FLOP_KEYS]
    w.writerow(extra)
    w.writerow(total)
    if args.pretty and args.input:
        for k in FLOP_KEYS:
            print(f"# {k:10s} {100 * float(rep.share(k)):7.3f}% of FLOPs", file=sys.stderr)
    return 0


def cmd_curve(args) -> int:
    kernels = _ints(args.kernels)
    forms = [f.strip() for f in args.forms.split(",") if f.strip()]
    if not forms:
        raise UsageError("--forms must not be empty")
    for f in forms:
        if f not in arch.FORMS:
            raise UsageError(f"unknown form {f!r}")
    rows = arch.scaling_curve(arch.preset(args.arch), kernels, forms, r_c=args.r_c)
    fields = ["form", "K", "conv_params", "posembed_params", "total_params"]
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = _writer(out)
        w.writerow(fields)
        for r in rows:
            w.writerow([r[f] for f in fields])
    finally:
        if args.out:
            out.close()
    return 0


CHECK_FIELDS = ("check", "rel_err", "tol", "status", "detail")


def cmd_gradcheck(args) -> int:
    if args.k % 2 == 0 or args.k < 1:
        raise UsageError(f"--k must be a positive odd size, got {args.k}")
    if args.tol < 0:
        raise UsageError("--tol must be non-negative")
    results = checks.gradcheck(form=args.form, k=args.k, central=args.central, size=args.size,
                               channels=args.channels, seed=args.seed, n_coords=args.coords,
                               tol=args.tol, stripe_n=min(args.stripe_n, args.k))
    w = _writer()
    w.writerow(CHECK_FIELDS)
    for r in results:
        w.writerow(r.row())
    return 0 if all(r.passed for r in results) else 1


def cmd_equiv(args) -> int:
    fn = checks.EQUIV_CHECKS[args.check]
    r = fn(args.seed) if args.tol is None else fn(args.seed, tol=args.tol)
    w = _writer()
    w.writerow(CHECK_FIELDS)
    w.writerow(r.row())
    return 0 if r.passed else 1


def cmd_bench(args) -> int:
    H, W = _hw(args.hw)
    if args.iters < 1:
        raise UsageError("--iters must be positive")
    if args.k < 1 or args.k % 2 == 0:
        raise UsageError(f"--k must be a positive odd size, got {args.k}")
    row = bench.run(args.form, args.k, args.c, H, W, iters=args.iters, warmup=args.warmup,
                    seed=args.seed)
    w = _writer()
    w.writerow(bench.FIELDS)
    w.writerow([_fmt(row[f]) if isinstance(row[f], float) else row[f] for f in bench.FIELDS])
    return 0


def cmd_erf(args) -> int:
    ts = _floats(args.thresholds)
    if any(not 0 < t <= 1 for t in ts):
        raise UsageError(f"thresholds must lie in (0, 1], got {ts}")
    if args.map:
        scores = tensor_io.load(args.map)
        if scores.ndim == 3 and scores.shape[0] == 1:
            scores = scores[0]
        cmap = erf.ContributionMap(scores)
    elif args.preset:
        cfg = arch.preset(args.preset)
        if args.side % 4 or args.side < 32:
            raise UsageError(f"--side must be a multiple of 4 and at least 32, got {args.side}")
        cmap = erf.contribution_map(cfg, seed=args.seed, n_samples=args.samples,
                                    side=args.side, channels=args.channels)
    else:
        raise UsageError("one of --map or --preset is required")
    if args.save_map:
        tensor_io.save(args.save_map, cmap.scores)
    w = _writer()
    w.writerow(["t", "R", "r"])
    for t, R, r in erf.ratio_table(cmap, ts):
        w.writerow([_fmt(t), R, _fmt(r)])
    return 0


# parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pelk", description="Peripheral large-kernel convolution toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("grid", help="build a sharing grid and print its ratios")
    g.add_argument("--k", type=int)
    g.add_argument("--central", type=int, default=5, help="central fine-grained size (odd)")
    g.add_argument("--base", type=int, default=2)
    g.add_argument("--custom", help='explicit half grid, e.g. "8,4,2,1,1,1"')
    g.add_argument("--json", action="store_true")
    g.add_argument("--pretty", action="store_true")
    g.set_defaults(fn=cmd_grid)

    pp = sub.add_parser("params", help="parameter (and FLOPs) report for an architecture")
    src = pp.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset")
    src.add_argument("--config", help="ArchConfig JSON file")
    pp.add_argument("--form", choices=arch.FORMS)
    pp.add_argument("--input", help="input size HxW, adds FLOPs columns")
    pp.add_argument("--pretty", action="store_true")
    pp.set_defaults(fn=cmd_params)

    c = sub.add_parser("curve", help="parameter scaling curve over kernel sizes")
    c.add_argument("--arch", default="convnext-t")
    c.add_argument("--kernels", default="7,31,51,101,151")
    c.add_argument("--forms", default="dense,stripe,peripheral")
    c.add_argument("--r-c", dest="r_c", type=int, default=2)
    c.add_argument("--out")
    c.set_defaults(fn=cmd_curve)

    gc = sub.add_parser("gradcheck", help="finite-difference gradient check")
    gc.add_argument("--form", choices=arch.FORMS, default="peripheral")
    gc.add_argument("--k", type=int, default=13)
    gc.add_argument("--central", type=int, default=5)
    gc.add_argument("--size", type=int, default=12)
    gc.add_argument("--channels", type=int, default=2)
    gc.add_argument("--stripe-n", dest="stripe_n", type=int, default=5)
    gc.add_argument("--coords", type=int, default=50)
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--tol", type=float, default=1e-4)
    gc.set_defaults(fn=cmd_gradcheck)

    e = sub.add_parser("equiv", help="run an equivalence oracle")
    e.add_argument("--check", required=True, choices=sorted(checks.EQUIV_CHECKS))
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--tol", type=float)
    e.set_defaults(fn=cmd_equiv)

    b = sub.add_parser("bench", help="time one conv forward")
    b.add_argument("--form", choices=arch.FORMS, default="peripheral")
    b.add_argument("--k", type=int, default=51)
    b.add_argument("--c", type=int, default=8)
    b.add_argument("--hw", default="56x56")
    b.add_argument("--iters", type=int, default=5)
    b.add_argument("--warmup", type=int, default=1)
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(fn=cmd_bench)

    r = sub.add_parser("erf", help="ERF area ratios at contribution thresholds")
    r.add_argument("--map", help="contribution map (PTNS or 2-D CSV)")
    r.add_argument("--preset")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--side", type=int, default=128)
    r.add_argument("--samples", type=int, default=4)
    r.add_argument("--channels", type=int, default=4)
    r.add_argument("--thresholds", default="0.2,0.3,0.5")
    r.add_argument("--save-map", dest="save_map")
    r.set_defaults(fn=cmd_erf)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (GridError, KeyError, ValueError, tensor_io.TensorFormatError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        parser.error(str(msg))
    except (OSError, RuntimeError) as exc:
        print(f"pelk: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
