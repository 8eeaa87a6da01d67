"""Experiment plan parsing: INI-style key = value sections.

Schema (see README for the full key list):

    [plan]      name, seeds, eval_every
    [data]      dataset (blobs | idx) + its parameters, partition + its
                parameters, optional subset
    [model]     hidden layer sizes
    [defaults]  optional field overrides applied to every cell
    [cell:X]    one experiment cell; at minimum `algorithm`

Unknown keys, type errors, and invariant violations all fail with the
offending section.key path.  ``canonical_text`` re-serializes a parsed
plan with sorted sections and keys, and parse(canonical_text(plan))
round-trips to the same plan.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from .compressors import CompressorSpec
from .data import (
    load_idx,
    make_blobs_split,
    partition_dirichlet,
    partition_iid,
    partition_pathological,
)
from .distill import DistillConfig
from .engine import ALGORITHMS, FedConfig
from .models import MlpSpec
from .rng import Rng

__all__ = [
    "DataConfig",
    "ExperimentPlan",
    "parse_config",
    "parse_config_text",
    "canonical_text",
    "config_hash",
    "compressor_from_string",
    "compressor_to_string",
    "seeded_cell_config",
]


@dataclass(frozen=True)
class DataConfig:
    dataset: str = "blobs"
    classes: int = 4
    per_class: int = 150
    dims: int = 16
    separation: float = 2.0
    test_per_class: int = 250
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    subset: int = 0
    partition: str = "dirichlet"
    concentration: float = 0.1
    shards_per_client: int = 1

    def __post_init__(self):
        if self.dataset not in ("blobs", "idx"):
            raise ValueError(f"data.dataset must be 'blobs' or 'idx', got {self.dataset!r}")
        if self.partition not in ("iid", "dirichlet", "pathological"):
            raise ValueError(f"unknown data.partition {self.partition!r}")
        if self.dataset == "idx" and not (
            self.train_images and self.train_labels and self.test_images and self.test_labels
        ):
            raise ValueError("data.dataset = idx requires all four IDX paths")

    def build(self, num_clients: int, seed: int):
        """Materialize (train, test, partition) deterministically for a seed."""
        if self.dataset == "blobs":
            test_per_class = self.test_per_class if self.test_per_class > 0 else self.per_class
            train, test = make_blobs_split(
                self.classes, self.per_class, test_per_class, self.dims, self.separation,
                Rng(seed, "data"),
            )
        else:
            train = load_idx(self.train_images, self.train_labels)
            test = load_idx(self.test_images, self.test_labels)
        if self.subset > 0:
            picked = Rng(seed, "data/subset").choice(len(train), size=min(self.subset, len(train)), replace=False)
            train = train.subset(np.sort(picked))
        prng = Rng(seed, "data/partition")
        if self.partition == "iid":
            part = partition_iid(train, num_clients, prng)
        elif self.partition == "dirichlet":
            part = partition_dirichlet(train, num_clients, self.concentration, prng)
        else:
            part = partition_pathological(train, num_clients, self.shards_per_client, prng)
        return train, test, part


@dataclass(frozen=True)
class ExperimentPlan:
    name: str
    seeds: tuple
    data: DataConfig
    hidden: tuple
    cells: tuple  # of (name, FedConfig) with placeholder seed 0
    eval_every: int = 5

    def __post_init__(self):
        if not self.seeds:
            raise ValueError("plan.seeds must list at least one seed")
        names = [n for n, _ in self.cells]
        if len(set(names)) != len(names):
            raise ValueError("cell names must be unique")

    def model_spec(self, input_size: int, classes: int) -> MlpSpec:
        return MlpSpec((input_size, *self.hidden, classes))


def compressor_from_string(text: str) -> CompressorSpec:
    text = text.strip()
    if text == "none":
        return CompressorSpec.none()
    if text.startswith("quantization:"):
        return CompressorSpec.quantization(int(text.split(":", 1)[1]))
    if text.startswith("topk:"):
        return CompressorSpec.topk(float(text.split(":", 1)[1]))
    raise ValueError(f"unknown compressor {text!r} (use none | quantization:<bits> | topk:<k>)")


def compressor_to_string(spec: CompressorSpec) -> str:
    if spec.kind == "none":
        return "none"
    if spec.kind == "stochastic-quantization":
        return f"quantization:{spec.bits}"
    return f"topk:{spec.sparsity}"


_PLAN_KEYS = {"name", "seeds", "eval_every"}
_DATA_KEYS = {f.strip() for f in DataConfig.__dataclass_fields__}
_MODEL_KEYS = {"hidden"}
_CELL_KEYS = {
    "algorithm": str,
    "clients": int,
    "sample_size": int,
    "rounds": int,
    "local_steps": int,
    "batch_size": int,
    "eta_l": float,
    "eta_g": float,
    "rho": float,
    "beta": float,
    "warmup_rounds": int,
    "compressor": str,
    "record_trajectory": bool,
    "distill_outer_iters": int,
    "distill_inner_steps": int,
    "distill_eta_x": float,
    "distill_eta_alpha": float,
    "distill_ipc": int,
    "distill_optimizer": str,
    "distill_alpha_init": float,
}


def _convert(section: str, key: str, value: str, typ):
    try:
        if typ is bool:
            lowered = value.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        return typ(value)
    except ValueError as exc:
        raise ValueError(f"{section}.{key}: cannot parse {value!r} as {typ.__name__}") from exc


def _cell_config(section: str, raw: dict, eval_every: int) -> FedConfig:
    if "algorithm" not in raw:
        raise ValueError(f"{section}: missing required key 'algorithm'")
    fields: dict = {}
    distill_fields: dict = {}
    for key, value in raw.items():
        if key not in _CELL_KEYS:
            raise ValueError(f"{section}.{key}: unknown key")
        parsed = _convert(section, key, value, _CELL_KEYS[key])
        if key == "compressor":
            fields["compressor"] = compressor_from_string(parsed)
        elif key == "clients":
            fields["num_clients"] = parsed
        elif key.startswith("distill_"):
            distill_fields[key.removeprefix("distill_")] = parsed
        else:
            fields[key] = parsed
    if fields.get("algorithm") not in ALGORITHMS:
        raise ValueError(f"{section}.algorithm: unknown algorithm {fields.get('algorithm')!r}")
    fields.setdefault("num_clients", 10)
    fields.setdefault("rounds", 150)
    try:
        if distill_fields:
            fields["distill"] = DistillConfig(**distill_fields)
        return FedConfig(seed=0, eval_every=eval_every, **fields)
    except ValueError as exc:
        raise ValueError(f"{section}: {exc}") from exc


def parse_config_text(text: str, source: str = "<string>") -> ExperimentPlan:
    parser = configparser.ConfigParser(interpolation=None, strict=True)
    try:
        parser.read_string(text, source=source)
    except configparser.DuplicateSectionError as exc:
        raise ValueError(f"duplicate section: {exc.section}") from exc
    except configparser.Error as exc:
        raise ValueError(f"config parse error: {exc}") from exc

    sections = set(parser.sections())
    known = {"plan", "data", "model", "defaults"}
    cells_sections = sorted(s for s in sections if s.startswith("cell:"))
    for s in sections:
        if s not in known and not s.startswith("cell:"):
            raise ValueError(f"unknown section [{s}]")
    plan_raw = dict(parser["plan"]) if parser.has_section("plan") else {}
    for key in plan_raw:
        if key not in _PLAN_KEYS:
            raise ValueError(f"plan.{key}: unknown key")
    name = plan_raw.get("name", "plan")
    seeds = tuple(
        int(s) for s in plan_raw.get("seeds", "0").replace(",", " ").split()
    )
    eval_every = _convert("plan", "eval_every", plan_raw.get("eval_every", "5"), int)

    data_raw = dict(parser["data"]) if parser.has_section("data") else {}
    data_fields = {}
    for key, value in data_raw.items():
        if key not in _DATA_KEYS:
            raise ValueError(f"data.{key}: unknown key")
        typ = DataConfig.__dataclass_fields__[key].type
        pytype = {"str": str, "int": int, "float": float}[typ]
        data_fields[key] = _convert("data", key, value, pytype)
    try:
        data_cfg = DataConfig(**data_fields)
    except ValueError as exc:
        raise ValueError(f"data: {exc}") from exc

    model_raw = dict(parser["model"]) if parser.has_section("model") else {}
    for key in model_raw:
        if key not in _MODEL_KEYS:
            raise ValueError(f"model.{key}: unknown key")
    hidden_text = model_raw.get("hidden", "200").strip()
    hidden = tuple(int(h) for h in hidden_text.replace(",", " ").split()) if hidden_text else ()

    defaults_raw = dict(parser["defaults"]) if parser.has_section("defaults") else {}
    for key in defaults_raw:
        if key not in _CELL_KEYS:
            raise ValueError(f"defaults.{key}: unknown key")

    cells = []
    for section in cells_sections:
        cell_name = section.split(":", 1)[1]
        raw = dict(defaults_raw)
        raw.update(parser[section])
        cells.append((cell_name, _cell_config(section, raw, eval_every)))

    return ExperimentPlan(
        name=name,
        seeds=seeds,
        data=data_cfg,
        hidden=hidden,
        cells=tuple(cells),
        eval_every=eval_every,
    )


def parse_config(path) -> ExperimentPlan:
    with open(path) as fh:
        return parse_config_text(fh.read(), source=str(path))


def _cell_lines(cfg: FedConfig) -> dict:
    lines = {
        "algorithm": cfg.algorithm,
        "clients": str(cfg.num_clients),
        "sample_size": str(cfg.sample_size),
        "rounds": str(cfg.rounds),
        "local_steps": str(cfg.local_steps),
        "batch_size": str(cfg.batch_size),
        "eta_l": repr(cfg.eta_l),
        "eta_g": repr(cfg.eta_g),
        "rho": repr(cfg.rho),
        "beta": repr(cfg.beta),
        "warmup_rounds": str(cfg.warmup_rounds),
        "compressor": compressor_to_string(cfg.compressor),
        "record_trajectory": str(cfg.record_trajectory).lower(),
        "distill_outer_iters": str(cfg.distill.outer_iters),
        "distill_inner_steps": str(cfg.distill.inner_steps),
        "distill_eta_x": repr(cfg.distill.eta_x),
        "distill_eta_alpha": repr(cfg.distill.eta_alpha),
        "distill_ipc": str(cfg.distill.ipc),
        "distill_optimizer": cfg.distill.optimizer,
        "distill_alpha_init": repr(cfg.distill.alpha_init),
    }
    return lines


def canonical_text(plan: ExperimentPlan) -> str:
    """Normalized config text: sorted sections, every key explicit."""
    out = []
    out.append("[plan]")
    out.append(f"eval_every = {plan.eval_every}")
    out.append(f"name = {plan.name}")
    out.append(f"seeds = {', '.join(str(s) for s in plan.seeds)}")
    out.append("")
    out.append("[data]")
    for key in sorted(_DATA_KEYS):
        value = getattr(plan.data, key)
        out.append(f"{key} = {value!r}" if isinstance(value, float) else f"{key} = {value}")
    out.append("")
    out.append("[model]")
    out.append(f"hidden = {', '.join(str(h) for h in plan.hidden)}")
    out.append("")
    for cell_name, cfg in sorted(plan.cells):
        out.append(f"[cell:{cell_name}]")
        for key, value in sorted(_cell_lines(cfg).items()):
            out.append(f"{key} = {value}")
        out.append("")
    return "\n".join(out)


def config_hash(plan: ExperimentPlan, cell_name: str) -> str:
    """Stable digest of everything that affects a cell's results except the seed."""
    cfg = dict(plan.cells)[cell_name]
    payload = {
        "data": {k: getattr(plan.data, k) for k in sorted(_DATA_KEYS)},
        "hidden": list(plan.hidden),
        "eval_every": plan.eval_every,
        "cell": _cell_lines(cfg),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


def seeded_cell_config(plan: ExperimentPlan, cell_name: str, seed: int) -> FedConfig:
    cfg = dict(plan.cells)[cell_name]
    return replace(cfg, seed=seed)
