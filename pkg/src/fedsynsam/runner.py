"""Plan execution, persistence, and artifact formats.

Layout under the output directory:

    <out>/<cell>/seed<k>/records.jsonl      one row per round (snake_case)
    <out>/<cell>/seed<k>/checkpoint.npz     final weights + provenance
    <out>/<cell>/seed<k>/synthetic.npz      when the run condensed
    <out>/<cell>/seed<k>/trajectory.npz     when the run recorded one
    <out>/<cell>/seed<k>/distill_losses.jsonl
    <out>/<cell>/seed<k>/manifest.json
    <out>/summary_seeds.csv                 per (cell, seed) final metrics
    <out>/summary.csv                       per cell mean/std (ddof=0)

All files are written to a temp name and renamed, so a resume never sees
a partial artifact; completed (cell, seed) runs with a matching config
hash are skipped.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, distill, engine
from .config import ExperimentPlan, config_hash, seeded_cell_config
from .models import MlpSpec

__all__ = [
    "RunManifest",
    "run_plan",
    "load_records",
    "save_checkpoint",
    "load_checkpoint",
    "write_summaries",
    "summarize_records",
    "SUMMARY_METRICS",
]

FORMAT_VERSION = 1
SUMMARY_METRICS = (
    "final_accuracy",
    "final_train_loss",
    "final_cos_theta",
    "mean_compression_error",
)


@dataclass(frozen=True)
class RunManifest:
    config_hash: str
    seed: int
    code_version: str
    started_at: str
    finished_at: str
    artifacts: dict
    status: str
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "code_version": self.code_version,
            "started_at": self.started_at,
            "finished_at": self.finished_at,
            "artifacts": self.artifacts,
            "status": self.status,
            "wall_time": self.wall_time,
        }


def _atomic_write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _npz_bytes(**arrays) -> bytes:
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    return buf.getvalue()


def records_to_jsonl(records) -> str:
    return "".join(json.dumps(r.to_json_dict(), sort_keys=True) + "\n" for r in records)


def load_records(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def save_checkpoint(path: Path, weights, spec: MlpSpec, meta: dict) -> None:
    meta = dict(meta)
    meta["format_version"] = FORMAT_VERSION
    meta["layer_sizes"] = list(spec.layer_sizes)
    _atomic_write_bytes(
        Path(path), _npz_bytes(weights=weights, meta=json.dumps(meta, sort_keys=True))
    )


def load_checkpoint(path):
    with np.load(path, allow_pickle=False) as blob:
        meta = json.loads(str(blob["meta"]))
        if meta.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format: {meta.get('format_version')}")
        return blob["weights"], MlpSpec(tuple(meta["layer_sizes"])), meta


def _run_meta(plan: ExperimentPlan, cell_name: str, seed: int) -> dict:
    return {
        "cell": cell_name,
        "seed": seed,
        "config_hash": config_hash(plan, cell_name),
        "data": {k: getattr(plan.data, k) for k in plan.data.__dataclass_fields__},
        "hidden": list(plan.hidden),
        "cell_config": {
            "algorithm": dict(plan.cells)[cell_name].algorithm,
            "rho": dict(plan.cells)[cell_name].rho,
            "beta": dict(plan.cells)[cell_name].beta,
            "warmup_rounds": dict(plan.cells)[cell_name].warmup_rounds,
            "clients": dict(plan.cells)[cell_name].num_clients,
        },
    }


def _execute_one(plan: ExperimentPlan, cell_name: str, seed: int, run_dir: Path) -> dict:
    cfg = seeded_cell_config(plan, cell_name, seed)
    train, test, partition = plan.data.build(cfg.num_clients, seed)
    spec = plan.model_spec(train.features.shape[1], train.classes)
    started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    t0 = time.perf_counter()
    result = engine.run(cfg, spec, train, partition, test)
    wall = time.perf_counter() - t0

    artifacts = {"records": "records.jsonl", "checkpoint": "checkpoint.npz"}
    _atomic_write_text(run_dir / "records.jsonl", records_to_jsonl(result.records))
    save_checkpoint(
        run_dir / "checkpoint.npz",
        result.final_weights,
        spec,
        _run_meta(plan, cell_name, seed),
    )
    if result.synthetic is not None:
        buf = io.BytesIO()
        distill.save_synthetic(buf, result.synthetic)
        _atomic_write_bytes(run_dir / "synthetic.npz", buf.getvalue())
        artifacts["synthetic"] = "synthetic.npz"
        _atomic_write_text(
            run_dir / "distill_losses.jsonl",
            "".join(
                json.dumps({"iteration": i, "loss": loss}, sort_keys=True) + "\n"
                for i, loss in enumerate(result.distill_losses)
            ),
        )
        artifacts["distill_losses"] = "distill_losses.jsonl"
    if result.trajectory is not None:
        buf = io.BytesIO()
        distill.save_trajectory(buf, result.trajectory, spec.layer_sizes)
        _atomic_write_bytes(run_dir / "trajectory.npz", buf.getvalue())
        artifacts["trajectory"] = "trajectory.npz"

    manifest = RunManifest(
        config_hash=config_hash(plan, cell_name),
        seed=seed,
        code_version=__version__,
        started_at=started,
        finished_at=time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        artifacts=artifacts,
        status="complete",
        wall_time=wall,
    )
    _atomic_write_text(run_dir / "manifest.json", json.dumps(manifest.to_dict(), indent=2, sort_keys=True))
    return summarize_records(load_records(run_dir / "records.jsonl"))


def summarize_records(rows) -> dict:
    """Final metrics of one run, recomputable from its JSONL rows."""
    accuracy = [r["test_accuracy"] for r in rows if r["test_accuracy"] is not None]
    cos = [r["cos_theta"] for r in rows if r["cos_theta"] is not None]
    return {
        "final_round": rows[-1]["round"] if rows else None,
        "final_accuracy": accuracy[-1] if accuracy else None,
        "final_train_loss": rows[-1]["mean_train_loss"] if rows else None,
        "final_cos_theta": cos[-1] if cos else None,
        "mean_compression_error": (
            float(np.mean([r["mean_compression_error"] for r in rows])) if rows else None
        ),
    }


def _manifest_hit(run_dir: Path, expected_hash: str) -> bool:
    path = run_dir / "manifest.json"
    if not path.exists():
        return False
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except (OSError, json.JSONDecodeError):
        return False
    return manifest.get("status") == "complete" and manifest.get("config_hash") == expected_hash


def write_summaries(out_dir: Path, per_seed: dict) -> None:
    """per_seed maps (cell, seed) -> summary dict from summarize_records."""
    out_dir = Path(out_dir)
    seed_buf = io.StringIO()
    writer = csv.writer(seed_buf)
    writer.writerow(["cell", "seed", "final_round"] + list(SUMMARY_METRICS))
    for (cell, seed) in sorted(per_seed):
        s = per_seed[(cell, seed)]
        writer.writerow(
            [cell, seed, s["final_round"]]
            + [("" if s[m] is None else repr(float(s[m]))) for m in SUMMARY_METRICS]
        )
    _atomic_write_text(out_dir / "summary_seeds.csv", seed_buf.getvalue())

    agg_buf = io.StringIO()
    writer = csv.writer(agg_buf)
    writer.writerow(["cell", "metric", "mean", "std", "seeds"])
    cells = sorted({cell for cell, _ in per_seed})
    for cell in cells:
        rows = [per_seed[k] for k in sorted(per_seed) if k[0] == cell]
        for metric in SUMMARY_METRICS:
            values = [r[metric] for r in rows if r[metric] is not None]
            if not values:
                continue
            arr = np.asarray(values, dtype=np.float64)
            writer.writerow(
                [cell, metric, repr(float(arr.mean())), repr(float(arr.std())), len(values)]
            )
    _atomic_write_text(out_dir / "summary.csv", agg_buf.getvalue())


def _worker(args):
    plan, cell_name, seed, run_dir = args
    return (cell_name, seed), _execute_one(plan, cell_name, seed, Path(run_dir))


def run_plan(plan: ExperimentPlan, out_dir, threads: int = 1, seeds=None) -> int:
    """Execute every (cell, seed); returns a process exit code.

    Completed runs (matching manifest hash) are skipped.  Failures are
    isolated per run: the plan continues and the exit code is nonzero.
    """
    out_dir = Path(out_dir)
    seeds = tuple(seeds) if seeds is not None else plan.seeds
    pending = []
    per_seed: dict = {}
    for cell_name, _ in plan.cells:
        expected = config_hash(plan, cell_name)
        for seed in seeds:
            run_dir = out_dir / cell_name / f"seed{seed}"
            if _manifest_hit(run_dir, expected):
                per_seed[(cell_name, seed)] = summarize_records(
                    load_records(run_dir / "records.jsonl")
                )
            else:
                pending.append((plan, cell_name, seed, str(run_dir)))

    failures = []
    if threads > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(_worker, item): item for item in pending}
            for future, item in futures.items():
                try:
                    key, summary = future.result()
                    per_seed[key] = summary
                except Exception as exc:  # noqa: BLE001 - per-run isolation
                    failures.append((item[1], item[2], repr(exc)))
    else:
        for item in pending:
            try:
                key, summary = _worker(item)
                per_seed[key] = summary
            except Exception as exc:  # noqa: BLE001 - per-run isolation
                failures.append((item[1], item[2], repr(exc)))

    write_summaries(out_dir, per_seed)
    for cell, seed, err in failures:
        print(f"FAILED {cell} seed={seed}: {err}")
    return 1 if failures else 0
