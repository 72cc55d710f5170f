import math

import numpy as np
import pytest

from tdomt import numerics as nx
from tdomt.corpus import collate, prepare
from tdomt.experiment import build_corpus, run_training, training_data
from tdomt.model import Model, ModelConfig
from tdomt.objectives import make_identity_pair
from tdomt.training import (
    Adam,
    OptimizerConfig,
    TrainData,
    TrainingError,
    batch_loss,
    clip_gradients,
    iterate_batches,
    learning_rate,
    read_trace,
    train,
    train_step,
)

from conftest import tiny_config


def tiny_model(cfg):
    corpus = build_corpus(cfg.corpus)
    mcfg = ModelConfig.from_dict(dict(cfg.model.to_dict(), vocab_size=len(corpus.vocab)))
    return corpus, Model(mcfg, seed=cfg.training.seed, dtype=np.float64)


def test_learning_rate_schedule():
    cfg = OptimizerConfig(lr=1.0, warmup_steps=4)
    assert [learning_rate(cfg, s) for s in (1, 2, 4)] == [0.25, 0.5, 1.0]
    assert learning_rate(cfg, 16) == pytest.approx(0.5)
    assert learning_rate(OptimizerConfig(lr=0.3, schedule="constant"), 99) == 0.3
    with pytest.raises(ValueError):
        OptimizerConfig(schedule="cosine")


def test_adam_first_step_moves_by_lr():
    p = nx.Tensor(np.array([1.0, -2.0]), requires_grad=True)
    p.grad = np.array([0.5, -3.0])
    Adam({"p": p}, OptimizerConfig()).step(0.1)
    np.testing.assert_allclose(p.data, [0.9, -1.9], atol=1e-6)


def test_clip_gradients():
    p = nx.Tensor(np.zeros(2), requires_grad=True)
    p.grad = np.array([3.0, 4.0])
    assert clip_gradients([p], 1.0) == 5.0
    assert math.isclose(np.linalg.norm(p.grad), 1.0, rel_tol=1e-9)


def test_zero_learning_rate_leaves_parameters_bit_identical():
    cfg = tiny_config()
    corpus, model = tiny_model(cfg)
    before = {k: p.data.copy() for k, p in model.params.items()}
    data = training_data(corpus, model.config)
    train(model, data, OptimizerConfig(lr=0.0, schedule="constant"), 1, 256, seed=1)
    for k, p in model.params.items():
        assert p.data.tobytes() == before[k].tobytes(), k


def test_training_reduces_loss():
    cfg = tiny_config(**{"optimizer.lr": 0.01, "optimizer.warmup_steps": 5, "model.dropout": 0.0})
    corpus, model = tiny_model(cfg)
    trace = train(model, training_data(corpus, model.config), cfg.optimizer, 40, 256, seed=1)
    first = np.mean([r[2] for r in trace[:5]])
    last = np.mean([r[2] for r in trace[-5:]])
    assert last < first


def test_same_seed_gives_identical_trace_and_checkpoint(tmp_path):
    cfg = tiny_config(**{"model.instrucl_layer": 1})
    run_training(cfg, tmp_path / "a")
    run_training(cfg, tmp_path / "b")
    assert (tmp_path / "a/loss_trace.csv").read_bytes() == (tmp_path / "b/loss_trace.csv").read_bytes()
    for f in (tmp_path / "a/checkpoint_last").iterdir():
        assert f.read_bytes() == (tmp_path / "b/checkpoint_last" / f.name).read_bytes(), f.name
    rows = read_trace(tmp_path / "a/loss_trace.csv")
    assert [r["step"] for r in rows] == ["1", "2", "3", "4"]
    assert float(rows[0]["ctr"]) > 0.0
    run_training(cfg.replace(**{"training.seed": 2}), tmp_path / "c")
    assert (tmp_path / "a/loss_trace.csv").read_bytes() != (tmp_path / "c/loss_trace.csv").read_bytes()


def test_periodic_checkpoints(tmp_path):
    run_training(tiny_config(**{"training.checkpoint_every": 2}), tmp_path)
    assert (tmp_path / "checkpoint_000002").is_dir() and (tmp_path / "checkpoint_last").is_dir()


def test_instrucl_off_reports_zero_contrastive_loss():
    cfg = tiny_config()
    corpus, model = tiny_model(cfg)
    trace = train(model, training_data(corpus, model.config), cfg.optimizer, 2, 256, seed=1)
    assert all(r[3] == 0.0 for r in trace)


def test_loss_is_normalized_by_target_tokens():
    cfg = tiny_config(**{"model.instrucl_layer": 1, "model.dropout": 0.0})
    corpus, model = tiny_model(cfg)
    insts = corpus["train"][:5]
    v, c = corpus.vocab, model.config
    batch = collate([prepare(i, 1, v, c.architecture) for i in insts])
    ident = collate([prepare(make_identity_pair(i), 1, v, c.architecture) for i in insts])
    ce, ctr = batch_loss(model, batch, ident)
    res = train_step(model, Adam(model.params, OptimizerConfig()), batch, 0.0, ident)
    n = batch.num_target_tokens
    assert res.tokens == n
    assert res.ce == pytest.approx(ce.item() / n) and res.ctr == pytest.approx(ctr.item() / n)


def test_non_finite_loss_aborts():
    cfg = tiny_config()
    corpus, model = tiny_model(cfg)
    model.params["embed.weight"].data[:] = np.nan
    batch = collate([prepare(i, 1, corpus.vocab, "tdo") for i in corpus["train"][:3]])
    with pytest.raises(TrainingError):
        train_step(model, Adam(model.params, OptimizerConfig()), batch, 0.1)


def test_batches_cover_identity_rows_in_order():
    cfg = tiny_config(**{"model.instrucl_layer": 1})
    corpus, model = tiny_model(cfg)
    data = training_data(corpus, model.config)
    batch, ident, coll = next(iterate_batches(data, 256, np.random.default_rng(0)))
    assert ident.index.tolist() == batch.index.tolist()
    assert coll.shape == (len(batch), len(batch))
    for row, i in enumerate(batch.index):
        assert ident.src[row, : len(data.identity[i].source)].tolist() == list(data.identity[i].source)
    assert isinstance(data, TrainData)


def test_collision_flag_controls_mask():
    cfg = tiny_config(**{"model.instrucl_layer": 1})
    corpus, model = tiny_model(cfg)
    data = training_data(corpus, model.config)
    _, _, on = next(iterate_batches(data, 256, np.random.default_rng(0)))
    _, _, off = next(iterate_batches(data, 256, np.random.default_rng(0), drop_collisions=False))
    assert on is not None and on.dtype == bool and off is None
