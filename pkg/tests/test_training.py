import json
import math

import numpy as np
import pytest

from oracles import central_difference
from scatterscore.errors import DatasetTooSmall, EmptyPrediction, InvalidConfig, NonFiniteLoss
from scatterscore.features import FeatureSample
from scatterscore.nn import ConvBlock, ModelConfig, Predictions
from scatterscore.training import (
    OBJECTIVES, ScoredUtterance, TrainConfig, evaluate_loss, multitask_loss, split_train_val, train,
)

TINY = ModelConfig(conv_blocks=(ConvBlock(2, 3, 3, 1),), blstm_hidden=4, dense_hidden=4, seed=1)


def _pred(frame_i, frame_q):
    fi, fq = np.asarray(frame_i, float), np.asarray(frame_q, float)
    return Predictions(fi, fq, float(fi.mean()), float(fq.mean()))


def test_loss_hand_example():
    # frame predictions [3, 3], utterance prediction 3, target 4:
    # (4 - 3)**2 + mean((4 - 3)**2, (4 - 3)**2) = 2
    terms, _ = multitask_loss(_pred([3, 3], [2, 2]), 4.0, 2.0)
    assert terms.L_i == 2.0
    assert terms.L_q == 0.0
    assert terms.L == 2.0


def test_total_is_sum_of_terms():
    rng = np.random.default_rng(0)
    for _ in range(50):
        T = int(rng.integers(1, 40))
        terms, _ = multitask_loss(_pred(rng.normal(2, 1, T), rng.normal(3, 1, T)),
                                  rng.uniform(0, 5), rng.uniform(1, 5))
        assert terms.L == terms.L_i + terms.L_q


def test_objective_weights():
    pred = _pred([1.0, 2.0], [4.0, 5.0])
    full, _ = multitask_loss(pred, 3.0, 2.0, OBJECTIVES["i+q"])
    only_i, g_i = multitask_loss(pred, 3.0, 2.0, OBJECTIVES["i"])
    only_q, g_q = multitask_loss(pred, 3.0, 2.0, OBJECTIVES["q"])
    assert only_i.L == full.L_i and only_i.L_q == 0.0
    assert only_q.L == full.L_q and only_q.L_i == 0.0
    assert not g_i.frame_q.any() and g_i.Q == 0.0
    assert not g_q.frame_i.any() and g_q.I == 0.0


def test_loss_gradient_matches_finite_differences():
    rng = np.random.default_rng(4)
    fi, fq = rng.normal(2, 1, 9), rng.normal(3, 1, 9)
    I, Q = np.array([1.7]), np.array([3.3])

    def loss():
        return multitask_loss(Predictions(fi, fq, float(I[0]), float(Q[0])), 2.5, 3.0)[0].L

    _, g = multitask_loss(Predictions(fi, fq, float(I[0]), float(Q[0])), 2.5, 3.0)
    for analytic, arr in ((g.frame_i, fi), (g.frame_q, fq), (np.array([g.I]), I), (np.array([g.Q]), Q)):
        assert np.max(np.abs(analytic - central_difference(loss, arr))) < 1e-8


def test_empty_prediction():
    with pytest.raises(EmptyPrediction):
        multitask_loss(Predictions(np.zeros(0), np.zeros(0), 0.0, 0.0), 1.0, 1.0)


def test_target_ranges():
    f = FeatureSample(np.zeros((2, 2), np.float32), np.zeros((2, 2), np.float32))
    with pytest.raises(ValueError):
        ScoredUtterance(f, 5.5, 3.0)
    with pytest.raises(ValueError):
        ScoredUtterance(f, 2.0, 0.5)


def test_split_sizes_and_determinism():
    data = list(range(100))
    tr, va = split_train_val(data, 3)
    assert len(tr) == 90 and len(va) == 10
    assert sorted(tr + va) == data
    assert split_train_val(data, 3) == (tr, va)
    assert split_train_val(data, 4) != (tr, va)
    tr, va = split_train_val(list(range(10)), 0)
    assert len(tr) == 9 and len(va) == 1
    with pytest.raises(DatasetTooSmall):
        split_train_val(list(range(9)), 0)


def test_train_config_validation():
    with pytest.raises(InvalidConfig):
        TrainConfig(objective="x")
    with pytest.raises(InvalidConfig):
        TrainConfig(patience=-1)


def _dataset(n=4, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for k in range(n):
        T = int(rng.integers(3, 7))
        f = FeatureSample(rng.random((T, 9)).astype(np.float32), rng.random((T, 5)).astype(np.float32), f"u{k}")
        out.append(ScoredUtterance(f, float(rng.uniform(0, 5)), float(rng.uniform(1, 5))))
    return out


def test_training_reduces_loss_and_logs(tmp_path):
    data = _dataset()
    log_path = tmp_path / "log.jsonl"
    res = train(data, None, TINY, TrainConfig(max_epochs=30, patience=30, lr=1e-2), log_path)
    lines = [json.loads(l) for l in log_path.read_text().splitlines()]
    assert lines == res.log
    assert set(lines[0]) == {"epoch", "train_L", "train_Li", "train_Lq", "val_L", "val_Li", "val_Lq", "selected"}
    assert res.log[-1]["val_L"] < res.log[0]["val_L"]
    # the restored model is the selected one
    best = min(r["val_L"] for r in res.log)
    assert evaluate_loss(res.model, data, OBJECTIVES["i+q"]).L == pytest.approx(best, rel=1e-12)


def test_patience_zero_stops_at_first_non_improvement():
    res = train(_dataset(), None, TINY, TrainConfig(max_epochs=50, patience=0, lr=0.5))
    flags = [r["selected"] for r in res.log]
    assert flags[0] is True
    assert flags[-1] is False or len(flags) == 50
    assert all(flags[:-1])


def test_max_steps():
    res = train(_dataset(4), None, TINY, TrainConfig(max_epochs=10, patience=10, max_steps=6))
    assert res.state.steps == 6
    assert len(res.log) == 2


def test_training_is_deterministic():
    cfg = TrainConfig(max_epochs=3, patience=3, lr=1e-3, seed=5)
    a = train(_dataset(), _dataset(2, 9), TINY, cfg)
    b = train(_dataset(), _dataset(2, 9), TINY, cfg)
    assert a.log == b.log
    for k, v in a.model.parameters().items():
        assert v.tobytes() == b.model.parameters()[k].tobytes()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_loss_names_the_utterance():
    data = _dataset(2)
    bad = data[1].features
    bad.spec[0, 0] = np.inf
    with pytest.raises(NonFiniteLoss, match="u1"):
        train(data, None, TINY, TrainConfig(max_epochs=1))


def test_empty_training_set():
    with pytest.raises(DatasetTooSmall):
        train([], None, TINY, TrainConfig())
