"""Command-line entry point.

Exit codes: 0 success, 1 demo tolerance failure, 2 infeasible budget plan,
64 usage error, 65 invalid data, 66 missing or unreadable input.
Every subcommand also accepts ``--config FILE.json`` whose keys fill in
flag defaults (dash or underscore spelling).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import augment as aug
from . import metrics, normalize
from .demo import DemoConfig, run_demo
from .denoiser import GaussianAnalyticDenoiser, LinearDenoiser
from .diffusion import SamplerConfig, make_rng, p_sample_step
from .errors import BudgetInfeasible, IoFailure, VsddpmError
from .pipeline import default_threads, tiled_sample
from .planner import HardwareProfile, plan as make_budget_plan
from .schedule import DEFAULT_STEPS, StepSet, linear_base_schedule, respace
from .tiler import make_plan
from .volume_io import Domain, Volume, read_mask, read_volume, write_volume

log = logging.getLogger("vsddpm")

EXIT_OK = 0
EXIT_TOLERANCE = 1
EXIT_INFEASIBLE = 2
EXIT_USAGE = 64
EXIT_DATA = 65
EXIT_NOINPUT = 66


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _triple(text: str) -> tuple[int, int, int]:
    try:
        vals = tuple(int(v) for v in str(text).split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}")
    if len(vals) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated integers, got {text!r}")
    return vals


def _emit(payload: dict | str, out: str | None) -> None:
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _need(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join("--" + n.replace("_", "-") for n in missing))


def _as_triple(value):
    return value if isinstance(value, tuple) else _triple(",".join(map(str, value)) if isinstance(value, list) else value)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def calibrate_latency(window, repeats: int = 5, seed: int = 0) -> float:
    """Seconds per reverse step of the analytic denoiser on one window."""
    s = respace(linear_base_schedule(), 25)
    rng = make_rng(seed)
    x = rng.standard_normal(window)
    den = GaussianAnalyticDenoiser(0.0, 1.0)
    cfg = SamplerConfig(T=25, seed=seed)
    start = time.perf_counter()
    for _ in range(repeats):
        out = den(x, 0.5, 12, s, None)
        x = p_sample_step(out, x, 12, s, rng, cfg)
    return (time.perf_counter() - start) / repeats


def run_plan(args) -> int:
    _need(args, "shape", "window")
    shape, window = _as_triple(args.shape), _as_triple(args.window)
    latency = args.latency
    if args.calibrate:
        latency = calibrate_latency(window, seed=args.seed)
        log.info("calibrated latency %.6f s/step", latency)
    hw = HardwareProfile(latency, args.budget)
    steps = StepSet.parse(args.steps) if isinstance(args.steps, str) else StepSet(tuple(args.steps))
    try:
        bp = make_budget_plan(shape, window, hw, steps, args.overlap)
    except BudgetInfeasible as exc:
        sys.stderr.write(
            f"infeasible: {exc}\n"
            "suggestion: raise --budget, lower --latency (faster GPU), enlarge --window, "
            "or train a model supporting fewer steps\n"
        )
        return EXIT_INFEASIBLE
    out = bp.to_dict()
    out["time_per_infer_s"] = hw.time_per_infer_s
    out["total_budget_s"] = hw.total_budget_s
    if args.dump_schedule:
        Path(args.dump_schedule).write_text(respace(linear_base_schedule(), bp.t_selected).to_json() + "\n")
    _emit(out, args.out)
    return EXIT_OK


def run_tile_info(args) -> int:
    _need(args, "shape", "window")
    wp = make_plan(_as_triple(args.shape), _as_triple(args.window), args.overlap, args.weight_mode)
    d = wp.to_dict()
    if args.no_offsets:
        d.pop("offsets")
    _emit(d, args.out)
    return EXIT_OK


def _load_denoiser(args):
    if args.denoiser:
        return LinearDenoiser.from_json(Path(args.denoiser).read_text())
    return GaussianAnalyticDenoiser(args.mu, args.sigma, mu_from_condition=args.condition is not None)


def run_sample(args) -> int:
    _need(args, "window", "out")
    cond_vol = read_volume(args.condition) if args.condition else None
    if cond_vol is None:
        _need(args, "shape")
        shape, spacing = _as_triple(args.shape), (1.0, 1.0, 1.0)
    else:
        shape, spacing = cond_vol.shape, cond_vol.spacing
    window = _as_triple(args.window)
    hw = HardwareProfile(args.latency, args.budget)
    plan_info = None
    if args.steps is None:
        try:
            bp = make_budget_plan(shape, window, hw, StepSet(DEFAULT_STEPS), args.overlap)
        except BudgetInfeasible as exc:
            sys.stderr.write(f"infeasible: {exc}\n")
            return EXIT_INFEASIBLE
        T, overlap, plan_info = bp.t_selected, bp.overlap_final, bp.to_dict()
    else:
        T, overlap = int(args.steps), args.overlap
    s = respace(linear_base_schedule(), T)
    den = _load_denoiser(args)
    wp = make_plan(shape, window, overlap, args.weight_mode)
    cfg = SamplerConfig(T=T, clip_denoised=not args.no_clip, seed=args.seed)
    conds = [cond_vol.data] if cond_vol is not None else None
    start = time.perf_counter()
    data, _ = tiled_sample(den, conds, wp, cfg, s, args.threads)
    log.info("sampled %d windows x %d steps in %.2f s", len(wp), T, time.perf_counter() - start)
    write_volume(Volume(data, spacing, Domain.MRI_RAW), args.out)
    _emit({"T": T, "overlap": overlap, "n_windows": len(wp), "seed": args.seed, "plan": plan_info,
           "output": str(args.out)}, args.report)
    return EXIT_OK


def run_metrics(args) -> int:
    _need(args, "pred", "gt")
    pred, gt = read_volume(args.pred), read_volume(args.gt)
    masks = {}
    if args.mask:
        masks["eval"] = read_mask(args.mask)
    if args.pred_seg and args.gt_seg:
        masks["pred_seg"], masks["gt_seg"] = read_mask(args.pred_seg), read_mask(args.gt_seg)
    cfg = metrics.MetricsConfig(
        data_range=args.data_range,
        ms_ssim_scales=args.ms_ssim_scales,
        nsd_tolerance_mm=args.nsd_tolerance,
        hd95_convention=args.hd95_convention,
    )
    rep = metrics.report(pred, gt, masks, cfg)
    if args.csv:
        metrics.append_csv(args.csv, {"pred": args.pred, "gt": args.gt, **rep.to_dict()})
    _emit(rep.to_json(), args.out)
    return EXIT_OK


def run_normalize(args) -> int:
    _need(args, "input", "output")
    src = read_volume(args.input)
    stats_in = normalize.NormStats.from_json(Path(args.stats_in).read_text()) if args.stats_in else None
    stats = None
    if args.inverse:
        if args.mode == "ct":
            out = normalize.ct_denormalize(src.with_data(src.data, Domain.NORM_SYM))
        else:
            if stats_in is None:
                raise UsageError("--inverse for MRI modes needs --stats-in")
            out = normalize.mri_denormalize(src.with_data(src.data, Domain.NORM_SYM), stats_in)
    elif args.mode == "ct":
        out, stats = normalize.ct_normalize(src.with_data(src.data, Domain.HU))
    else:
        region = read_mask(args.region) if args.region else None
        out, stats = normalize.mri_normalize(src.with_data(src.data, Domain.MRI_RAW), args.mode, stats_in, region)
    if args.floor is not None:
        unit = out.with_data((out.data + 1.0) / 2.0, Domain.NORM_UNIT) if out.domain is Domain.NORM_SYM else out
        out = normalize.postprocess_floor(unit.with_data(unit.data, Domain.NORM_UNIT), args.floor)
    write_volume(out, args.output)
    if stats is not None and args.stats_out:
        Path(args.stats_out).write_text(stats.to_json() + "\n")
    _emit(stats.to_dict() if stats is not None else {"inverse": True, "mode": args.mode}, None)
    return EXIT_OK


def run_augment(args) -> int:
    _need(args, "input", "output")
    cfg_dict = json.loads(Path(args.aug_config).read_text()) if args.aug_config else {}
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    cfg = aug.AugmentConfig.from_dict(cfg_dict)
    out = aug.augment(read_volume(args.input), cfg)
    write_volume(out, args.output)
    _emit(json.loads(cfg.to_json()), None)
    return EXIT_OK


def run_demo_cmd(args) -> int:
    cfg = DemoConfig(
        shape=_as_triple(args.shape),
        window=_as_triple(args.window),
        sigma=args.sigma,
        seed=args.seed,
        steps=args.steps,
        latency_s=args.latency,
        budget_s=args.budget,
        weight_mode=args.weight_mode,
        threads=args.threads,
    )
    start = time.perf_counter()
    res = run_demo(cfg, fit_linear=bool(args.export_linear))
    elapsed = time.perf_counter() - start
    if args.export_linear:
        Path(args.export_linear).write_text(json.dumps(res.linear_denoiser, indent=2) + "\n")
    report = res.to_dict()
    report.pop("linear_denoiser", None)
    _emit(report, args.out)
    for name, c in res.checks.items():
        sys.stderr.write(f"[{'PASS' if c['passed'] else 'FAIL'}] {name}: value={c['value']:.6g} limit={c['limit']:.6g}\n")
    sys.stderr.write(f"demo {'passed' if res.passed else 'FAILED'} in {elapsed:.2f} s\n")
    return EXIT_OK if res.passed else EXIT_TOLERANCE


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vsddpm", description=__doc__.split("\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--config", help="JSON file whose keys provide flag defaults")
        sp.add_argument("--out", help="write the JSON report here instead of stdout")
        return sp

    def budget_flags(sp):
        sp.add_argument("--budget", type=float, default=900.0, help="wall-clock budget in seconds")
        sp.add_argument("--latency", type=float, default=0.433, help="seconds per denoising step per window")

    sp = common(sub.add_parser("plan", help="choose T and overlap for a time budget"))
    sp.add_argument("--shape", type=_triple)
    sp.add_argument("--window", type=_triple)
    budget_flags(sp)
    sp.add_argument("--steps", default=",".join(map(str, DEFAULT_STEPS)), help="comma-separated trained step counts")
    sp.add_argument("--overlap", type=float, default=0.5, help="initial (minimum) overlap")
    sp.add_argument("--calibrate", action="store_true", help="measure latency on this machine instead of --latency")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--dump-schedule", help="write the respaced schedule for the chosen T as JSON")
    sp.set_defaults(func=run_plan)

    sp = common(sub.add_parser("tile-info", help="print the sliding-window plan"))
    sp.add_argument("--shape", type=_triple)
    sp.add_argument("--window", type=_triple)
    sp.add_argument("--overlap", type=float, default=0.5)
    sp.add_argument("--weight-mode", choices=["uniform", "cosine_taper"], default="cosine_taper")
    sp.add_argument("--no-offsets", action="store_true")
    sp.set_defaults(func=run_tile_info)

    sp = common(sub.add_parser("sample", help="tiled variable-step sampling with a desk-scale denoiser"))
    sp.add_argument("--shape", type=_triple)
    sp.add_argument("--window", type=_triple)
    sp.add_argument("--condition", help="condition volume; makes the analytic denoiser conditional")
    sp.add_argument("--steps", type=int, help="force T instead of planning it")
    sp.add_argument("--overlap", type=float, default=0.5)
    budget_flags(sp)
    sp.add_argument("--mu", type=float, default=0.0)
    sp.add_argument("--sigma", type=float, default=1.0)
    sp.add_argument("--denoiser", help="LinearDenoiser JSON (default: analytic Gaussian)")
    sp.add_argument("--weight-mode", choices=["uniform", "cosine_taper"], default="cosine_taper")
    sp.add_argument("--no-clip", action="store_true", help="do not clip predicted x0 to [-1, 1]")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--report", help="write the run summary JSON here")
    sp.set_defaults(func=run_sample)

    sp = common(sub.add_parser("metrics", help="score a prediction against ground truth"))
    sp.add_argument("--pred")
    sp.add_argument("--gt")
    sp.add_argument("--mask", help="evaluation mask for intensity metrics")
    sp.add_argument("--pred-seg")
    sp.add_argument("--gt-seg")
    sp.add_argument("--data-range", type=float, default=None)
    sp.add_argument("--ms-ssim-scales", type=int, default=3)
    sp.add_argument("--nsd-tolerance", type=float, default=metrics.NSD_TOLERANCE_MM)
    sp.add_argument("--hd95-convention", choices=["pooled", "max_directed"], default="pooled")
    sp.add_argument("--csv", help="append a row to this CSV file")
    sp.set_defaults(func=run_metrics)

    sp = common(sub.add_parser("normalize", help="intensity normalization and its inverse"))
    sp.add_argument("--in", dest="input")
    sp.add_argument("--output", "-o")
    sp.add_argument("--mode", choices=[m.value for m in normalize.NormMode], default="ct")
    sp.add_argument("--stats-in", help="NormStats JSON (global mean/std, or stats to invert)")
    sp.add_argument("--stats-out", help="write NormStats JSON")
    sp.add_argument("--region", help="statistics region mask for mri_nonzero_masked")
    sp.add_argument("--inverse", action="store_true")
    sp.add_argument("--floor", type=float, default=None, help="map to [0, 1] and zero values below this")
    sp.set_defaults(func=run_normalize)

    sp = common(sub.add_parser("augment", help="apply a random augmentation"))
    sp.add_argument("--in", dest="input")
    sp.add_argument("--output", "-o")
    sp.add_argument("--aug-config", help="AugmentConfig JSON")
    sp.add_argument("--seed", type=int, default=None)
    sp.set_defaults(func=run_augment)

    sp = common(sub.add_parser("demo", help="end-to-end plan, tiled sampling and scoring"))
    sp.add_argument("--shape", type=_triple, default=DemoConfig.shape)
    sp.add_argument("--window", type=_triple, default=DemoConfig.window)
    sp.add_argument("--sigma", type=float, default=DemoConfig.sigma)
    sp.add_argument("--steps", type=int, default=None)
    budget_flags(sp)
    sp.add_argument("--weight-mode", choices=["uniform", "cosine_taper"], default="cosine_taper")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--threads", type=int, default=None)
    sp.add_argument("--export-linear", help="also fit a LinearDenoiser and write its JSON here")
    sp.set_defaults(func=run_demo_cmd)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    return args


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        sys.stderr.write(f"vsddpm: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:
        # argparse exits on --help and usage errors; report the code instead
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if not getattr(args, "func", None):
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = default_threads()
    try:
        return args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"vsddpm {args.command}: {exc}\n")
        return EXIT_USAGE
    except BudgetInfeasible as exc:
        sys.stderr.write(f"vsddpm {args.command}: infeasible: {exc}\n")
        return EXIT_INFEASIBLE
    except (IoFailure, FileNotFoundError, PermissionError) as exc:
        sys.stderr.write(f"vsddpm {args.command}: {exc}\n")
        return EXIT_NOINPUT
    except (VsddpmError, ValueError) as exc:
        sys.stderr.write(f"vsddpm {args.command}: invalid data: {exc}\n")
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
