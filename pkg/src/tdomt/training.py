"""Optimizer, learning-rate schedule and the training step.

A step computes the summed label-smoothed cross-entropy over target
tokens and, when the model has an InstruCL layer, the contrastive loss
between each row's tag state and the tag state of its identity pair.  The
sum is divided by the number of target tokens in the batch before the
backward pass.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .corpus.assemble import Batch, collate, make_batches
from .model.transformer import Model, collect_instruction_state
from .numerics import DomainError
from .objectives import InstruclBatchSet, collision_mask, cross_entropy_mnmt, instrucl_loss, joint_loss


class TrainingError(RuntimeError):
    pass


@dataclass
class OptimizerConfig:
    lr: float = 3e-3
    betas: tuple = (0.9, 0.98)
    eps: float = 1e-8
    weight_decay: float = 0.0
    warmup_steps: int = 400
    schedule: str = "inverse_sqrt"  # or "constant"
    clip_norm: float | None = None

    def __post_init__(self):
        self.betas = tuple(self.betas)
        if self.lr < 0 or self.eps <= 0 or self.warmup_steps < 0:
            raise ValueError("optimizer needs lr >= 0, eps > 0, warmup_steps >= 0")
        if not all(0 <= b < 1 for b in self.betas):
            raise ValueError(f"betas must lie in [0, 1), got {self.betas}")
        if self.schedule not in ("inverse_sqrt", "constant"):
            raise ValueError(f"unknown schedule {self.schedule!r}")


def learning_rate(cfg: OptimizerConfig, step):
    """Rate for the 1-based ``step``: linear warmup, then lr * sqrt(warmup / step)."""
    if cfg.schedule == "constant":
        return cfg.lr
    w = cfg.warmup_steps
    if w == 0:
        return cfg.lr / math.sqrt(step)
    if step <= w:
        return cfg.lr * step / w
    return cfg.lr * math.sqrt(w / step)


class Adam:
    """Adam with decoupled weight decay; state is kept per parameter name."""

    def __init__(self, params: dict, cfg: OptimizerConfig):
        self.params = params
        self.cfg = cfg
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.t = 0

    def step(self, lr):
        self.t += 1
        b1, b2 = self.cfg.betas
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            if lr == 0.0:
                continue
            update = (m / c1) / (np.sqrt(v / c2) + self.cfg.eps)
            if self.cfg.weight_decay:
                update = update + self.cfg.weight_decay * p.data
            p.data -= (lr * update).astype(p.data.dtype)


def clip_gradients(params, max_norm):
    """Scale all gradients so their joint norm is at most ``max_norm``; returns the norm before."""
    sq = sum(float((p.grad.astype(np.float64) ** 2).sum()) for p in params if p.grad is not None)
    norm = math.sqrt(sq)
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= scale
    return norm


@dataclass
class StepResult:
    ce: float  # per target token
    ctr: float  # per target token
    tokens: int


def batch_loss(model: Model, batch: Batch, identity: Batch | None = None, rng=None, collisions=None):
    """(ce_sum, ctr_sum) for one batch as tape tensors; ctr_sum is None without InstruCL.

    ``identity`` holds the identity-pair sources of the same rows, in the
    same order; they are run only up to the InstruCL layer, so they never
    reach the cross-entropy.
    """
    c = model.config
    logits, states = model.forward(batch.src, batch.src_pad, batch.tgt_in, batch.tgt_pad, rng)
    ce = cross_entropy_mnmt(logits, batch.labels, c.label_smoothing, batch.weights)
    if c.instrucl_layer is None or identity is None:
        return ce, None
    anchors = collect_instruction_state(states, c.instrucl_layer)
    pos_states = model.source_states(identity.src, identity.src_pad, upto_layer=c.instrucl_layer, rng=rng)
    positives = collect_instruction_state(pos_states, c.instrucl_layer)
    ctr = instrucl_loss(InstruclBatchSet(anchors, positives, collisions))
    return ce, ctr


def train_step(model, optimizer, batch, lr, identity=None, rng=None, collisions=None, clip_norm=None):
    with nx.recording() as tape:
        ce, ctr = batch_loss(model, batch, identity, rng, collisions)
        n = max(batch.num_target_tokens, 1)
        ce_val = ce.item()
        ctr_val = ctr.item() if ctr is not None else 0.0
        try:
            joint_loss(ce_val, ctr_val)
        except DomainError as exc:
            raise TrainingError(f"aborting: {exc} (batch of {len(batch)} rows, {n} target tokens)") from exc
        loss = nx.mul(ce if ctr is None else nx.add(ce, ctr), 1.0 / n)
        model.zero_grad()
        tape.backward(loss)
    if clip_norm is not None:
        clip_gradients(model.parameters(), clip_norm)
    optimizer.step(lr)
    return StepResult(ce_val / n, ctr_val / n, n)


@dataclass
class TrainData:
    """Model inputs for every training instance plus aligned identity-pair inputs."""

    inputs: list
    identity: list | None = None
    tgt_langs: list = field(default_factory=list)
    concepts: list = field(default_factory=list)


def iterate_batches(data: TrainData, max_tokens, rng, drop_collisions=True):
    """Endless stream of (batch, identity_batch, collisions), reshuffled every epoch.

    ``collisions`` marks negatives sharing the anchor's target language and
    concept sequence; it is None when ``drop_collisions`` is off.
    """
    while True:
        for batch in make_batches(data.inputs, max_tokens, rng):
            if data.identity is None:
                yield batch, None, None
                continue
            rows = [int(i) for i in batch.index]
            ident = collate([data.identity[i] for i in rows], index=rows)
            coll = None
            if drop_collisions:
                coll = collision_mask([data.tgt_langs[i] for i in rows], [data.concepts[i] for i in rows])
            yield batch, ident, coll


def write_trace(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "lr", "ce", "ctr", "tokens"])
        for r in rows:
            w.writerow([r[0], f"{r[1]:.8g}", f"{r[2]:.6f}", f"{r[3]:.6f}", r[4]])


def read_trace(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def train(model, data: TrainData, opt_cfg: OptimizerConfig, steps, max_tokens, seed, out_dir=None,
          checkpoint_every=0, log=None, save_meta=None, drop_collisions=True):
    """Run ``steps`` optimizer steps; returns the loss trace rows (step, lr, ce, ctr, tokens)."""
    from .model.checkpoint import save_model

    batch_rng = np.random.default_rng([seed, 1])
    drop_rng = np.random.default_rng([seed, 2])
    optimizer = Adam(model.params, opt_cfg)
    stream = iterate_batches(data, max_tokens, batch_rng, drop_collisions)
    trace = []
    out = Path(out_dir) if out_dir is not None else None
    for step in range(1, steps + 1):
        batch, ident, coll = next(stream)
        lr = learning_rate(opt_cfg, step)
        res = train_step(model, optimizer, batch, lr, ident, drop_rng, coll, opt_cfg.clip_norm)
        trace.append((step, lr, res.ce, res.ctr, res.tokens))
        if log is not None and (step % 100 == 0 or step == steps):
            log(f"step {step:5d}  lr {lr:.2e}  ce {res.ce:.4f}  ctr {res.ctr:.4f}")
        if out is not None and checkpoint_every and step % checkpoint_every == 0 and step != steps:
            save_model(out / f"checkpoint_{step:06d}", model, dict(save_meta or {}, step=step))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_trace(out / "loss_trace.csv", trace)
        save_model(out / "checkpoint_last", model, dict(save_meta or {}, step=steps))
    return trace
