"""Command-line front end.

Subcommands:

    run <config>        execute an experiment plan
    landscape <ckpt>    loss-surface slice around a checkpoint -> CSV
    eig <ckpt>          top Hessian eigenvalue at a checkpoint -> JSONL
    cosine <ckpt>       perturbation-alignment diagnostics -> JSONL
    condense <traj>     offline condensation from a saved trajectory

The default output directory is FEDSYNSAM_OUT (falling back to ./runs).
Checkpoints embed the data/model/partition provenance they were trained
with, so the diagnostic subcommands rebuild datasets without extra flags.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import distill, metrics, runner, sam
from .config import DataConfig, parse_config
from .distill import DistillConfig
from .models import loss_and_grad
from .rng import Rng

__all__ = ["main"]


def _default_out() -> str:
    return os.environ.get("FEDSYNSAM_OUT", "runs")


def _build_data_from_meta(meta: dict, seed: int):
    data_cfg = DataConfig(**meta["data"])
    clients = meta["cell_config"]["clients"]
    return data_cfg.build(clients, seed)


def _cmd_run(args) -> int:
    plan = parse_config(args.config)
    seeds = (args.seed,) if args.seed is not None else None
    out = Path(args.out) / plan.name
    return runner.run_plan(plan, out, threads=args.threads, seeds=seeds)


def _cmd_landscape(args) -> int:
    weights, spec, meta = runner.load_checkpoint(args.checkpoint)
    seed = meta["seed"] if args.seed is None else args.seed
    train, test, _ = _build_data_from_meta(meta, meta["seed"])
    ds = train if args.split == "train" else test
    grid = metrics.landscape_slice(
        spec,
        weights,
        ds.features,
        ds.labels,
        Rng(seed, "landscape"),
        resolution=args.resolution,
        extent=args.extent,
    )
    metrics.write_landscape_csv(args.out, grid)
    print(f"wrote {args.resolution * args.resolution} grid cells to {args.out}")
    return 0


def _cmd_eig(args) -> int:
    weights, spec, meta = runner.load_checkpoint(args.checkpoint)
    seed = meta["seed"] if args.seed is None else args.seed
    train, test, _ = _build_data_from_meta(meta, meta["seed"])
    ds = train if args.split == "train" else test
    est = metrics.top_eigenvalue(
        spec,
        weights,
        ds.features,
        ds.labels,
        Rng(seed, "eig"),
        tol=args.tol,
        max_iters=args.max_iters,
    )
    row = {
        "checkpoint": str(args.checkpoint),
        "split": args.split,
        "lambda_max": est.value,
        "iterations": est.iterations,
        "residual": est.residual,
        "converged": est.converged,
    }
    line = json.dumps(row, sort_keys=True)
    if args.out:
        with open(args.out, "a") as fh:
            fh.write(line + "\n")
    print(line)
    return 0


def _cmd_cosine(args) -> int:
    weights, spec, meta = runner.load_checkpoint(args.checkpoint)
    seed = meta["seed"] if args.seed is None else args.seed
    train, _, partition = _build_data_from_meta(meta, meta["seed"])
    cell = meta["cell_config"]
    syn = distill.load_synthetic(args.syn) if args.syn else None

    all_data = [
        (train.features[partition.client(i)], train.labels[partition.client(i)])
        for i in range(partition.num_clients)
    ]
    token = sam.DiagnosticsToken()

    # Empirical stand-ins for the bound's constants, labeled as estimates.
    global_grad = np.mean(
        [loss_and_grad(spec, weights, *d)[1] for d in all_data], axis=0
    )
    sigma_g = max(
        float(np.linalg.norm(loss_and_grad(spec, weights, *d)[1] - global_grad))
        for d in all_data
    )
    lipschitz = metrics.top_eigenvalue(
        spec, weights, train.features, train.labels, Rng(seed, "eig"), max_iters=100
    ).value

    kind = {
        "fedsam": sam.KIND_LOCAL_GRAD,
        "fedlesam": sam.KIND_LESAM,
        "fedsynsam": sam.KIND_SYNSAM,
    }.get(cell["algorithm"], sam.KIND_LOCAL_GRAD)
    rows = []
    for i in range(partition.num_clients):
        est = sam.PerturbEstimator(
            kind,
            cell["rho"] if cell["rho"] > 0 else 0.05,
            beta=cell["beta"],
            syn=syn,
            warmup_rounds=cell["warmup_rounds"],
        )
        diag = sam.perturbation_cosine(
            token, est, spec, weights, all_data[i], all_data,
            sigma_g=sigma_g, lipschitz=abs(lipschitz),
        )
        rows.append(
            {
                "client": i,
                "cos_theta": diag.cos_theta,
                "gamma": diag.gamma,
                "sigma_g_estimate": sigma_g,
                "lipschitz_estimate": abs(lipschitz),
            }
        )
    lines = [json.dumps(r, sort_keys=True) for r in rows]
    if args.out:
        with open(args.out, "a") as fh:
            fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0


def _cmd_condense(args) -> int:
    trajectory, layer_sizes = distill.load_trajectory(args.trajectory)
    from .models import MlpSpec

    spec = MlpSpec(layer_sizes)
    cfg = DistillConfig(
        outer_iters=args.outer_iters,
        inner_steps=args.inner_steps,
        eta_x=args.eta_x,
        eta_alpha=args.eta_alpha,
        ipc=args.ipc,
        optimizer=args.optimizer,
        alpha_init=args.alpha_init,
    )
    seed = args.seed if args.seed is not None else 0
    syn, losses = distill.condense(trajectory, spec, cfg, Rng(seed, "distill"))
    syn.meta.update(
        {"trajectory_rounds": len(trajectory) - 1, "outer_iters": cfg.outer_iters, "seed": seed}
    )
    distill.save_synthetic(args.out, syn)
    print(
        f"condensed {len(syn)} synthetic samples "
        f"(loss {losses[0]:.4g} -> {losses[-1]:.4g})"
        if losses
        else f"condensed {len(syn)} synthetic samples (no iterations)"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedsynsam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment plan")
    p_run.add_argument("config")
    p_run.add_argument("--out", default=_default_out())
    p_run.add_argument("--seed", type=int, default=None, help="run only this seed")
    p_run.add_argument("--threads", type=int, default=1)
    p_run.set_defaults(func=_cmd_run)

    p_land = sub.add_parser("landscape", help="loss-surface slice around a checkpoint")
    p_land.add_argument("checkpoint")
    p_land.add_argument("--out", required=True)
    p_land.add_argument("--resolution", type=int, default=25)
    p_land.add_argument("--extent", type=float, default=1.0)
    p_land.add_argument("--split", choices=("train", "test"), default="train")
    p_land.add_argument("--seed", type=int, default=None)
    p_land.set_defaults(func=_cmd_landscape)

    p_eig = sub.add_parser("eig", help="top Hessian eigenvalue at a checkpoint")
    p_eig.add_argument("checkpoint")
    p_eig.add_argument("--out", default=None)
    p_eig.add_argument("--tol", type=float, default=1e-9)
    p_eig.add_argument("--max-iters", type=int, default=200)
    p_eig.add_argument("--split", choices=("train", "test"), default="train")
    p_eig.add_argument("--seed", type=int, default=None)
    p_eig.set_defaults(func=_cmd_eig)

    p_cos = sub.add_parser("cosine", help="perturbation-alignment diagnostics")
    p_cos.add_argument("checkpoint")
    p_cos.add_argument("--out", default=None)
    p_cos.add_argument("--syn", default=None, help="synthetic dataset artifact")
    p_cos.add_argument("--seed", type=int, default=None)
    p_cos.set_defaults(func=_cmd_cosine)

    p_con = sub.add_parser("condense", help="condense a saved trajectory")
    p_con.add_argument("trajectory")
    p_con.add_argument("--out", required=True)
    p_con.add_argument("--outer-iters", type=int, default=200)
    p_con.add_argument("--inner-steps", type=int, default=3)
    p_con.add_argument("--eta-x", type=float, default=0.05)
    p_con.add_argument("--eta-alpha", type=float, default=1e-5)
    p_con.add_argument("--ipc", type=int, default=10)
    p_con.add_argument("--optimizer", choices=("sgd", "adam"), default="sgd")
    p_con.add_argument("--alpha-init", type=float, default=0.01)
    p_con.add_argument("--seed", type=int, default=None)
    p_con.set_defaults(func=_cmd_condense)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
