"""Command-line entry point (``maskdiff`` / ``python -m maskdiff``)."""

from __future__ import annotations

import argparse
import itertools
import math
import sys

import numpy as np

from . import __version__
from .checks import (
    FORWARD_SPACES,
    forward_violations,
    init_gap_records,
    random_targets,
    rate_bound_report,
)
from .exceptions import MaskDiffError
from .experiment import ExperimentConfig, replay, run_experiment
from .forward import marginal_at
from .metrics import empirical_distribution, tv_distance, tv_noise_sigma
from .samplers import SAMPLERS, run_chains
from .state_space import SpaceSpec, load_target, random_target

CLOSED_FORM_TOL = 1e-10
FD_TOL = 1e-4


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return value


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _add_run_flags(p: argparse.ArgumentParser, multi: bool = False) -> None:
    p.add_argument("--target", required=True, help="target distribution JSON")
    p.add_argument("--chains", type=int, default=10_000)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--out", help="CSV file to append results to")
    p.add_argument("--batch-size", type=int, default=1 << 16)
    p.add_argument("--T", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--eta", type=float)
    if multi:
        p.add_argument("--sampler", default="matu", help=f"comma list from {', '.join(SAMPLERS)}")
        p.add_argument("--eps", type=_floats, default=[0.5], help="comma list")
        p.add_argument("--h", type=_floats, default=[None], help="comma list of Euler steps")
        p.add_argument("--sigma", type=_floats, default=[0.0], help="comma list")
    else:
        p.add_argument("--sampler", choices=SAMPLERS, default="matu")
        p.add_argument("--eps", type=float, default=0.5)
        p.add_argument("--h", type=float)
        p.add_argument("--sigma", type=float, default=0.0)


def _print_row(row) -> None:
    print(
        f"{row.sampler} d={row.d} K={row.K} eps={row.eps} chains={row.chains} "
        f"tv={row.tv:.5f} kl_init={row.kl_init:.3g} mean_calls={row.mean_calls:.2f} "
        f"bound={row.bound_calls:.2f} seconds={row.seconds:.2f}"
    )


def cmd_check_forward(args) -> int:
    ok = True
    for d, K in FORWARD_SPACES:
        v = forward_violations(SpaceSpec(d, K))
        for name, value in v.items():
            tol = FD_TOL if name == "generator_fd" else CLOSED_FORM_TOL
            good = value <= tol
            ok &= good
            print(f"d={d} K={K} {name:20s} {value:.3e} (tol {tol:g}) {'ok' if good else 'FAIL'}")
    return 0 if ok else 1


def cmd_check_bounds(args) -> int:
    targets = random_targets(args.targets, args.seed)
    times = [0.5 * i for i in range(1, 17)]
    records = init_gap_records(targets, times)
    violations = [r for r in records if r.slack < 0]
    worst = min(records, key=lambda r: r.slack)
    print(
        f"init gap: {len(records)} (target, t) pairs, {len(violations)} violations, "
        f"min slack {worst.slack:.4g} (target {worst.target}, t={worst.t})"
    )
    for r in violations[: args.show]:
        q = targets[r.target]
        print(
            f"  violation: target {r.target} (d={q.spec.d}, K={q.spec.K}, |support|={len(q)}) "
            f"t={r.t} kl={r.kl:.5g} bound={r.bound:.5g}"
        )
    worst_ratio = 0.0
    for eps in (0.1, 0.01):
        for q in targets:
            t = math.log(4 * q.spec.d / eps)
            worst_ratio = max(worst_ratio, init_gap_records([q], [t])[0].kl / eps)
    print(f"init gap at t = ln(4d/eps): max kl/eps = {worst_ratio:.4g}")

    q0 = random_target(SpaceSpec(3, 3), 5, np.random.default_rng(args.seed))
    rb = rate_bound_report(q0, args.T)
    print(
        f"rate bound (d=3, K=3, T={args.T}): max outgoing - beta = {rb.max_outgoing_excess:.3e}, "
        f"max score - 1/(e^(T-t)-1) = {rb.max_score_excess:.3e} over {rb.n_checked} states"
    )
    ok = not violations and worst_ratio <= 1 and rb.max_outgoing_excess <= 1e-12 and rb.max_score_excess <= 1e-12
    return 0 if ok else 1


def _config(args, sampler, eps, h, sigma) -> ExperimentConfig:
    return ExperimentConfig(
        target=args.target, sampler=sampler, epsilon=eps, chains=args.chains, seed=args.seed,
        T=args.T, delta=args.delta, h=h, eta=args.eta, sigma=sigma, batch_size=args.batch_size,
    )


def cmd_sample(args) -> int:
    res = run_experiment(_config(args, args.sampler, args.eps, args.h, args.sigma), args.out)
    _print_row(res.row)
    if res.sidecar:
        print(f"sidecar: {res.sidecar}")
    return 0


def cmd_sweep(args) -> int:
    samplers = [s.strip() for s in args.sampler.split(",") if s.strip()]
    for sampler, eps, h, sigma in itertools.product(samplers, args.eps, args.h, args.sigma):
        res = run_experiment(_config(args, sampler, eps, h, sigma), args.out)
        _print_row(res.row)
    return 0


def cmd_oracle_tv(args) -> int:
    from .experiment import build_oracle, build_schedule

    cfg = _config(args, args.sampler, args.eps, args.h, 0.0)
    q0 = load_target(cfg.target)
    sched = build_schedule(cfg, q0.spec)
    oracle = build_oracle(cfg, q0, sched.T)
    report = run_chains(cfg.sampler, oracle, sched, cfg.chains, seed=cfg.seed, batch_size=cfg.batch_size)
    ref = marginal_at(q0, sched.delta)
    tv = tv_distance(empirical_distribution(report.final, q0.spec), ref)
    sigma = tv_noise_sigma(ref, cfg.chains)
    print(
        f"{cfg.sampler} vs exact marginal at delta={sched.delta:.4g}: tv={tv:.5f}, "
        f"Monte-Carlo rms={sigma:.5f}, mean calls={report.mean_score_calls:.2f}"
    )
    return 0


def cmd_replay(args) -> int:
    ok = True
    for path in args.sidecar:
        out = replay(path)
        ok &= out.matches
        print(f"{path}: {'match' if out.matches else 'MISMATCH'}")
        if not out.matches:
            print(f"  stored   {out.stored}\n  replayed {out.replayed}")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="maskdiff", description="Masked discrete diffusion: checks, sampling runs and replays."
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("check-forward", help="exhaustive forward-process identities")
    p.set_defaults(func=cmd_check_forward)

    p = sub.add_parser("check-bounds", help="initialiser KL bound and rate bounds by enumeration")
    p.add_argument("--targets", type=int, default=20)
    p.add_argument("--seed", type=_u64, default=2024)
    p.add_argument("--T", type=float, default=4.0)
    p.add_argument("--show", type=int, default=5, help="violations to list")
    p.set_defaults(func=cmd_check_bounds)

    p = sub.add_parser("sample", help="run one experiment")
    _add_run_flags(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("sweep", help="grid over samplers, eps, h and sigma")
    _add_run_flags(p, multi=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-tv", help="sampler with exact scores against the exact marginal at delta")
    _add_run_flags(p)
    p.set_defaults(func=cmd_oracle_tv, chains=100_000)

    p = sub.add_parser("replay", help="re-run sidecars and compare with their rows")
    p.add_argument("sidecar", nargs="+")
    p.set_defaults(func=cmd_replay)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MaskDiffError, ValueError, OSError) as exc:
        print(f"maskdiff: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
