import json

import numpy as np
import pytest

from mlff.driver import (
    ExperimentConfig,
    evaluate_head,
    export_report_csv,
    load_report,
    run_experiment,
    save_report,
)
from mlff.errors import ConfigurationError, DataError, ProtocolError
from mlff.metrics import compute_af1, compute_ff1, macro_f1
from mlff.model import FusionConfig
from mlff.store import SynthSpec, partition_tasks, synth_generate


def small_stream(tasks=3, per_class=40, dims=(6, 6), signal_level=0, delta=6.0, seed=0):
    spec = SynthSpec(
        num_tasks=tasks, num_classes=2, level_dims=dims, samples_per_class=per_class,
        signal_level=signal_level, class_separation=delta, task_shift=1.0, noise=1.0,
    )
    _, records = synth_generate(spec, seed=seed)
    return partition_tasks(records, split_seed=seed, train_per_task=per_class + per_class // 2)


def quick_config(**kw):
    base = dict(
        epochs=3, initial_epochs=8, batch_size=16, lr_max=5e-3, lr_min=0.0,
        buffer_capacity=30, strategy="balanced_random",
        model_seed=0, data_seed=0, strategy_seed=0,
    )
    base.update(kw)
    return ExperimentConfig(**base)


# ---------------------------------------------------------------------------
# macro F1
# ---------------------------------------------------------------------------

def test_macro_f1_perfect():
    assert macro_f1([0, 1, 2, 1], [0, 1, 2, 1], 3) == 1.0


def test_macro_f1_confusion_example():
    # class 0: TP=1 FP=0 FN=1 -> 2/3; class 1: TP=2 FP=1 FN=0 -> 0.8
    got = macro_f1([0, 1, 1, 1], [0, 0, 1, 1], 2)
    assert got == pytest.approx((2 / 3 + 0.8) / 2)
    assert got == pytest.approx(0.73333333, abs=1e-8)


def test_macro_f1_all_wrong_binary():
    assert macro_f1([1, 1, 0, 0], [0, 0, 1, 1], 2) == 0.0


def test_macro_f1_class_absent_from_labels_excluded():
    # class 2 never appears in the labels: the mean runs over classes 0 and 1
    # (class 0: TP=1 FP=0 FN=1 -> 2/3; class 1: TP=2 FP=0 FN=0 -> 1.0)
    got = macro_f1([0, 2, 1, 1], [0, 0, 1, 1], 3)
    assert got == pytest.approx((2 / 3 + 1.0) / 2)


def test_macro_f1_errors():
    with pytest.raises(ProtocolError):
        macro_f1([], [], 2)
    with pytest.raises(DataError):
        macro_f1([0, 1], [0, 5], 2)
    with pytest.raises(DataError):
        macro_f1([0, 1, 0], [0, 1], 2)


# ---------------------------------------------------------------------------
# AF1 / FF1
# ---------------------------------------------------------------------------

def test_af1_is_mean_of_last_row():
    m = np.array([[1.0, 0.0, 0.0], [0.5, 1.0, 0.2], [0.8, 0.6, 0.7]])
    assert compute_af1(m) == pytest.approx(0.7)
    assert compute_af1(np.ones((5, 5))) == 1.0
    assert compute_af1(np.array([[0.42]])) == pytest.approx(0.42)


def test_ff1_two_task_boundary():
    m = np.array([[0.9, 0.33], [0.8, 0.95]])
    assert compute_ff1(m) == pytest.approx(0.33)


def test_ff1_constant_matrix():
    assert compute_ff1(np.full((4, 4), 0.75)) == pytest.approx(0.75)


def test_ff1_three_task_example():
    m = np.zeros((3, 3))
    m[0, 1], m[0, 2], m[1, 2] = 0.6, 0.8, 0.7
    assert compute_ff1(m) == pytest.approx(0.7)


def test_ff1_single_task_is_protocol_error():
    with pytest.raises(ProtocolError):
        compute_ff1(np.array([[1.0]]))


def test_af1_requires_full_matrix():
    m = np.ones((2, 2))
    m[1, 1] = np.nan
    with pytest.raises(DataError):
        compute_af1(m)


def test_af1_ff1_bounded_and_invariant_under_task_relabeling():
    rng = np.random.default_rng(0)
    m = rng.uniform(size=(4, 4))
    assert 0.0 <= compute_af1(m) <= 1.0
    assert 0.0 <= compute_ff1(m) <= 1.0
    # renaming task identifiers does not touch the round x position matrix
    from mlff.store import Task, TaskStream  # noqa: F401  (relabeling is id-only)

    stream = small_stream(tasks=2)
    fusion = FusionConfig(level_dims=(6, 6), num_classes=2, fused_dim=12)
    base = run_experiment(quick_config(), stream, fusion)
    for task, new_id in zip(stream.tasks, (7, 3)):
        task.task_id = new_id
        for r in task.train + task.test:
            r.task_id = new_id
    relabeled = run_experiment(quick_config(), stream, fusion)
    assert np.array_equal(base.f1_matrix, relabeled.f1_matrix)
    assert base.af1 == relabeled.af1 and base.ff1 == relabeled.ff1


# ---------------------------------------------------------------------------
# experiment config
# ---------------------------------------------------------------------------

def test_experiment_config_rejects_unknown_keys():
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"epochs": 3, "turbo": True})


def test_experiment_config_validates():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(batch_size=1)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(head="transformer")


# ---------------------------------------------------------------------------
# run_experiment
# ---------------------------------------------------------------------------

def test_single_task_stream_reduces_to_plain_training():
    stream = small_stream(tasks=1)
    fusion = FusionConfig(level_dims=(6, 6), num_classes=2, fused_dim=12)
    report = run_experiment(quick_config(buffer_capacity=0), stream, fusion)
    assert report.f1_matrix.shape == (1, 1)
    assert report.ff1 is None
    assert report.af1 == report.f1_matrix[0, 0]
    assert report.historic_exposure == []


def test_run_experiment_fills_matrix_and_exposures():
    stream = small_stream(tasks=3)
    fusion = FusionConfig(level_dims=(6, 6), num_classes=2, fused_dim=12)
    report = run_experiment(quick_config(), stream, fusion)
    assert report.f1_matrix.shape == (3, 3)
    assert np.all(report.f1_matrix >= 0) and np.all(report.f1_matrix <= 1)
    assert report.historic_exposure == [[1, 1], [1, 1]]
    assert len(report.loss_traces) == 3
    assert len(report.loss_traces[0]) == 8  # initial epochs
    assert len(report.loss_traces[1]) == 3


def test_run_experiment_is_bit_deterministic():
    stream = small_stream(tasks=2)
    fusion = FusionConfig(level_dims=(6, 6), num_classes=2, fused_dim=12)
    a = run_experiment(quick_config(), stream, fusion)
    b = run_experiment(quick_config(), stream, fusion)
    assert a.payload_bytes() == b.payload_bytes()


def test_run_experiment_buffer_too_small_is_protocol_error():
    stream = small_stream(tasks=3)
    fusion = FusionConfig(level_dims=(6, 6), num_classes=2, fused_dim=12)
    with pytest.raises(ProtocolError):
        run_experiment(quick_config(buffer_capacity=2), stream, fusion)


def test_full_capacity_buffer_never_hurts_versus_none():
    # with every historic training sample buffered, adaptation approaches
    # joint replay: averaged over seeds, AF1 must not drop below the
    # no-rehearsal baseline
    fusion = FusionConfig(level_dims=(6, 6), num_classes=2, fused_dim=12)
    deltas = []
    for seed in (0, 1, 2):
        stream = small_stream(tasks=3, seed=seed)
        total_train = sum(len({r.sample_id for r in t.train}) for t in stream.tasks)
        full = run_experiment(
            quick_config(buffer_capacity=total_train, model_seed=seed, data_seed=seed,
                         strategy_seed=seed),
            stream, fusion,
        )
        none = run_experiment(
            quick_config(buffer_capacity=0, model_seed=seed, data_seed=seed,
                         strategy_seed=seed),
            stream, fusion,
        )
        deltas.append(full.af1 - none.af1)
    assert float(np.mean(deltas)) >= 0.0


def test_probe_heads_run_through_protocol():
    stream = small_stream(tasks=2, signal_level=0)
    fusion = FusionConfig(level_dims=(6, 6), num_classes=2, fused_dim=12)
    for head in ("linear", "mlp"):
        report = run_experiment(quick_config(head=head, buffer_capacity=0), stream, fusion)
        assert report.f1_matrix.shape == (2, 2)


def test_evaluate_head_uses_eval_mode():
    stream = small_stream(tasks=1)
    fusion = FusionConfig(level_dims=(6, 6), num_classes=2, fused_dim=12)
    report = run_experiment(quick_config(buffer_capacity=0), stream, fusion)
    task = stream.tasks[0]
    f1a = evaluate_head(report.head, task.test, fusion.level_dims, 2)
    f1b = evaluate_head(report.head, task.test, fusion.level_dims, 2)
    assert f1a == f1b == report.f1_matrix[0, 0]


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

def test_report_roundtrip_and_redundancy_check(tmp_path):
    stream = small_stream(tasks=2)
    fusion = FusionConfig(level_dims=(6, 6), num_classes=2, fused_dim=12)
    report = run_experiment(quick_config(), stream, fusion)
    path = tmp_path / "report.json"
    save_report(report, path)
    doc = load_report(path)
    assert doc["payload"]["af1"] == pytest.approx(report.af1, abs=1e-12)
    assert doc["payload"] == report.payload()

    # tampering with AF1 must be caught on load
    doc["payload"]["af1"] = 0.123
    path.write_text(json.dumps(doc))
    with pytest.raises(DataError):
        load_report(path)


def test_report_csv_row_count(tmp_path):
    stream = small_stream(tasks=3)
    fusion = FusionConfig(level_dims=(6, 6), num_classes=2, fused_dim=12)
    report = run_experiment(quick_config(), stream, fusion)
    path = tmp_path / "report.csv"
    export_report_csv(report.payload(), path)
    rows = path.read_text().strip().splitlines()
    assert rows[0] == "round,task,f1"
    assert len(rows) - 1 == 9  # rounds x tasks
    af1_from_csv = np.mean(
        [float(r.split(",")[2]) for r in rows[1:] if r.startswith("2,")]
    )
    assert af1_from_csv == pytest.approx(report.af1, abs=1e-9)
