import pytest

from fedsynsam import config
from fedsynsam.compressors import CompressorSpec

MINIMAL = """
[plan]
name = mini
seeds = 0, 1

[data]
dataset = blobs
classes = 3
per_class = 30
dims = 5
partition = iid

[cell:avg]
algorithm = fedavg
clients = 4
rounds = 3
"""


def test_minimal_config_gets_protocol_defaults():
    plan = config.parse_config_text(MINIMAL)
    cfg = dict(plan.cells)["avg"]
    assert cfg.eta_g == 1.0
    assert cfg.local_steps == 10
    assert cfg.batch_size == 128
    assert cfg.beta == 0.9
    assert cfg.warmup_rounds == 30
    assert cfg.compressor == CompressorSpec.none()
    assert plan.hidden == (200,)
    assert plan.eval_every == 5


def test_duplicate_cell_name_fails():
    text = MINIMAL + "\n[cell:avg]\nalgorithm = fedsam\n"
    with pytest.raises(ValueError, match="duplicate"):
        config.parse_config_text(text)


def test_unknown_key_reports_path():
    text = MINIMAL.replace("rounds = 3", "rounds = 3\nwat = 1")
    with pytest.raises(ValueError, match="cell:avg.wat"):
        config.parse_config_text(text)


def test_type_error_reports_path():
    text = MINIMAL.replace("rounds = 3", "rounds = soon")
    with pytest.raises(ValueError, match="cell:avg.rounds"):
        config.parse_config_text(text)


def test_unknown_section_rejected():
    with pytest.raises(ValueError, match="unknown section"):
        config.parse_config_text(MINIMAL + "\n[experimental]\nx = 1\n")


def test_missing_algorithm_rejected():
    with pytest.raises(ValueError, match="algorithm"):
        config.parse_config_text(MINIMAL + "\n[cell:broken]\nrounds = 2\n")


def test_roundtrip_canonicalization_is_idempotent():
    plan = config.parse_config_text(MINIMAL)
    canon = config.canonical_text(plan)
    plan2 = config.parse_config_text(canon)
    assert config.canonical_text(plan2) == canon
    assert plan2.cells == plan.cells


def test_config_hash_tracks_semantic_changes():
    plan = config.parse_config_text(MINIMAL)
    h1 = config.config_hash(plan, "avg")
    changed = config.parse_config_text(MINIMAL.replace("rounds = 3", "rounds = 4"))
    assert config.config_hash(changed, "avg") != h1
    # Seeds are not part of the cell hash.
    reseeded = config.parse_config_text(MINIMAL.replace("seeds = 0, 1", "seeds = 5"))
    assert config.config_hash(reseeded, "avg") == h1


def test_compressor_string_roundtrip():
    for text in ("none", "quantization:4", "topk:0.25"):
        spec = config.compressor_from_string(text)
        assert config.compressor_to_string(spec) == text
    with pytest.raises(ValueError, match="compressor"):
        config.compressor_from_string("gzip")


def test_defaults_section_applies_to_all_cells():
    text = MINIMAL + "\n[defaults]\nbatch_size = 16\n\n[cell:sam]\nalgorithm = fedsam\nclients = 4\nrounds = 3\n"
    plan = config.parse_config_text(text)
    cells = dict(plan.cells)
    assert cells["sam"].batch_size == 16
    # Explicit cell keys win over defaults.
    assert cells["avg"].batch_size == 16


def test_idx_requires_paths():
    text = MINIMAL.replace("dataset = blobs", "dataset = idx")
    with pytest.raises(ValueError, match="idx"):
        config.parse_config_text(text)


def test_distill_keys_flow_through():
    text = MINIMAL + "\ndistill_outer_iters = 7\ndistill_ipc = 3\n"
    # Appended to the last cell section.
    plan = config.parse_config_text(text)
    cfg = dict(plan.cells)["avg"]
    assert cfg.distill.outer_iters == 7
    assert cfg.distill.ipc == 3


def test_data_config_build_is_deterministic():
    plan = config.parse_config_text(MINIMAL)
    t1, s1, p1 = plan.data.build(4, seed=9)
    t2, s2, p2 = plan.data.build(4, seed=9)
    assert t1.features.tobytes() == t2.features.tobytes()
    assert s1.features.tobytes() == s2.features.tobytes()
    assert all((p1.client(i) == p2.client(i)).all() for i in range(4))
