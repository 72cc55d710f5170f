"""Experiment configuration, train/evaluate/analyze runs and the sweep registry.

An experiment config is a JSON document::

    {
      "name": "tdo",
      "model": {...ModelConfig fields, vocab_size is filled in...},
      "corpus": {...CorpusConfig fields...},
      "optimizer": {"lr": 0.003, "betas": [0.9, 0.98], "warmup_steps": 400, ...},
      "training": {"steps": 3000, "max_tokens": 2048, "seed": 1, ...},
      "evaluation": {"beam": 4, "max_len_a": 1.2, "max_len_b": 10, ...}
    }

Missing sections and fields fall back to the toy defaults (pre-norm,
no dropout, peak learning rate 3e-3, 3000 steps of 2048-token batches).
"""
from __future__ import annotations

import copy
import csv
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .analysis import layerwise_preference, parallel_set
from .corpus.assemble import prepare
from .corpus.generate import Corpus, CorpusConfig, generate_corpus, load_corpus
from .corpus.vocab import Vocabulary
from .decoding import translate
from .metrics import aggregate, score_direction
from .model.checkpoint import load_model
from .model.config import ModelConfig
from .model.transformer import Model
from .objectives import make_identity_pair
from .training import OptimizerConfig, TrainData, train

OUT_ENV = "TDOMT_OUT"


class ExperimentError(ValueError):
    pass


def default_out_dir():
    return Path(os.environ.get(OUT_ENV, "tdomt_runs"))


@dataclass
class TrainingConfig:
    steps: int = 3000
    max_tokens: int = 2048
    seed: int = 1
    checkpoint_every: int = 0
    precision: int = 32
    drop_collisions: bool = True  # InstruCL: ignore negatives with the anchor's target language and content

    def __post_init__(self):
        if self.steps < 0 or self.max_tokens < 1:
            raise ExperimentError("training needs steps >= 0 and max_tokens >= 1")
        if self.precision not in (32, 64):
            raise ExperimentError(f"precision must be 32 or 64, got {self.precision}")
        if self.seed is None:
            raise ExperimentError("a seed is mandatory")

    @property
    def dtype(self):
        return np.float32 if self.precision == 32 else np.float64


@dataclass
class EvaluationConfig:
    beam: int = 4
    max_len_a: float = 1.2
    max_len_b: int = 10
    splits: list = field(default_factory=lambda: ["test_supervised", "test_zeroshot"])
    analysis_set_size: int = 128

    def __post_init__(self):
        if self.beam < 1:
            raise ExperimentError(f"beam must be >= 1, got {self.beam}")


# Toy-scale model defaults for experiments; pre-norm and no dropout converge
# within the step budget on the synthetic corpus.
TOY_MODEL = {"pre_norm": True, "dropout": 0.0}


def toy_model_config(**overrides):
    return ModelConfig(**{**TOY_MODEL, **overrides})


def _build(cls, data, section, defaults=None):
    data = {**(defaults or {}), **(data or {})}
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ExperimentError(f"unknown {section} field(s): {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ExperimentError(f"invalid {section} section: {exc}") from exc


@dataclass
class ExperimentConfig:
    name: str = "run"
    model: ModelConfig = field(default_factory=toy_model_config)
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ExperimentError(f"unknown config section(s): {sorted(unknown)}")
        return cls(
            name=data.get("name", "run"),
            model=_build(ModelConfig, data.get("model"), "model", TOY_MODEL),
            corpus=_build(CorpusConfig, data.get("corpus"), "corpus"),
            optimizer=_build(OptimizerConfig, data.get("optimizer"), "optimizer"),
            training=_build(TrainingConfig, data.get("training"), "training"),
            evaluation=_build(EvaluationConfig, data.get("evaluation"), "evaluation"),
        )

    def to_dict(self):
        d = {
            "name": self.name,
            "model": self.model.to_dict(),
            "corpus": self.corpus.to_dict(),
            "optimizer": asdict(self.optimizer),
            "training": asdict(self.training),
            "evaluation": asdict(self.evaluation),
        }
        d["optimizer"]["betas"] = list(d["optimizer"]["betas"])
        return d

    def replace(self, **changes):
        """Copy with dotted-path overrides, e.g. ``{"model.stage1_layers": 3}``."""
        data = copy.deepcopy(self.to_dict())
        for path, value in changes.items():
            section, _, key = path.rpartition(".")
            target = data[section] if section else data
            target[key] = value
        return ExperimentConfig.from_dict(data)


def load_config(path):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ExperimentError(f"{path}: not valid JSON ({exc})") from exc
    return ExperimentConfig.from_dict(data)


def save_config(cfg: ExperimentConfig, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")


def _write_json(path, payload):
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


# ---------------------------------------------------------------- runs

_CORPUS_CACHE = {}


def build_corpus(cfg: CorpusConfig) -> Corpus:
    """Generate (memoized per process: generation is a pure function of the config)."""
    key = json.dumps(cfg.to_dict(), sort_keys=True)
    if key not in _CORPUS_CACHE:
        _CORPUS_CACHE[key] = generate_corpus(cfg)
    return _CORPUS_CACHE[key]


def training_data(corpus: Corpus, model_cfg: ModelConfig):
    vocab = corpus.vocab
    arch, strategy = model_cfg.architecture, model_cfg.tag_strategy
    insts = corpus["train"]
    inputs = [prepare(i, strategy, vocab, arch) for i in insts]
    identity = None
    if model_cfg.instrucl_layer is not None:
        identity = [prepare(make_identity_pair(i), strategy, vocab, arch) for i in insts]
    return TrainData(inputs, identity, [i.tgt_lang for i in insts], [i.concept for i in insts])


def run_training(cfg: ExperimentConfig, out_dir, corpus: Corpus | None = None, log=None):
    """Train one model; writes config.json, loss_trace.csv and checkpoint_last/ under ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    corpus = corpus if corpus is not None else build_corpus(cfg.corpus)
    model_cfg = ModelConfig.from_dict(dict(cfg.model.to_dict(), vocab_size=len(corpus.vocab)))
    model = Model(model_cfg, seed=cfg.training.seed, dtype=cfg.training.dtype)
    data = training_data(corpus, model_cfg)
    save_config(cfg, out / "config.json")
    meta = {"experiment": cfg.to_dict(), "vocab": corpus.vocab.to_dict()}
    trace = train(
        model, data, cfg.optimizer, cfg.training.steps, cfg.training.max_tokens, cfg.training.seed,
        out_dir=out, checkpoint_every=cfg.training.checkpoint_every, log=log, save_meta=meta,
        drop_collisions=cfg.training.drop_collisions,
    )
    return model, trace


def load_checkpoint(directory):
    """(model, vocab, experiment config) from a checkpoint written by :func:`run_training`."""
    model, meta = load_model(directory)
    vocab = Vocabulary.from_dict(meta["vocab"])
    cfg = ExperimentConfig.from_dict(meta["experiment"]) if "experiment" in meta else None
    return model, vocab, cfg


def decode_instances(model, instances, vocab, beam=1, max_len_a=1.2, max_len_b=10, batch_size=256):
    """Hypothesis token tuples for TranslationInstances, in input order."""
    c = model.config
    inputs = [prepare(i, c.tag_strategy, vocab, c.architecture) for i in instances]
    order = sorted(range(len(inputs)), key=lambda i: (len(inputs[i].source), i))
    hyps = [None] * len(inputs)
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        res = translate(model, [inputs[i] for i in idx], beam=beam, max_len_a=max_len_a, max_len_b=max_len_b)
        for i, h in zip(idx, res):
            hyps[i] = h.tokens
    return hyps


def evaluate_instances(model, instances, vocab, beam=1, max_len_a=1.2, max_len_b=10, center="en"):
    """Per-direction metrics and group aggregates; also returns the hypotheses."""
    hyps = decode_instances(model, instances, vocab, beam, max_len_a, max_len_b)
    by_dir = {}
    for inst, h in zip(instances, hyps):
        by_dir.setdefault(inst.direction, ([], [])).__getitem__(0).append(h)
        by_dir[inst.direction][1].append(inst.target)
    per_direction = {d: score_direction(h, r, d[1], vocab) for d, (h, r) in sorted(by_dir.items())}
    return {"directions": per_direction, "groups": aggregate(per_direction, center)}, hyps


def evaluate_checkpoint_on_corpus(model, vocab, corpus: Corpus, eval_cfg: EvaluationConfig):
    instances = [i for s in eval_cfg.splits for i in corpus[s]]
    res, _ = evaluate_instances(model, instances, vocab, eval_cfg.beam, eval_cfg.max_len_a, eval_cfg.max_len_b,
                                corpus.config.center)
    return res


def metrics_to_json(res):
    return {
        "directions": {f"{s}-{t}": v for (s, t), v in res["directions"].items()},
        "groups": res["groups"],
    }


def write_metrics(res, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "metrics.json", metrics_to_json(res))
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        names = None
        for key, row in list(((f"{s}-{t}", v) for (s, t), v in res["directions"].items())) + list(res["groups"].items()):
            if names is None:
                names = [k for k in row if k != "n"]
                w.writerow(["direction"] + names)
            w.writerow([key] + [f"{row[k]:.6f}" for k in names])


def analyze_model(model, vocab, corpus: Corpus, directions=None, set_size=128):
    directions = directions or corpus.config.zeroshot_directions()
    return layerwise_preference(model, parallel_set(corpus), directions, vocab, set_size=set_size)


# ---------------------------------------------------------------- registry and sweeps

class RunRegistry:
    """Directory of runs; ``<run>/DONE`` marks completion, ``<run>/LOCK`` is taken with O_EXCL."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, run_id):
        return self.root / run_id

    def done(self, run_id):
        return (self.path(run_id) / "DONE").exists()

    def acquire(self, run_id):
        d = self.path(run_id)
        d.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(d / "LOCK", os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            return False
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return True

    def release(self, run_id):
        try:
            os.unlink(self.path(run_id) / "LOCK")
        except FileNotFoundError:
            pass

    def finish(self, run_id, result):
        d = self.path(run_id)
        _write_json(d / "result.json", result)
        fd = os.open(d / "DONE", os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        os.close(fd)
        self.release(run_id)

    def result(self, run_id):
        return json.loads((self.path(run_id) / "result.json").read_text())

    def completed(self):
        return sorted(p.name for p in self.root.iterdir() if (p / "DONE").exists())


def run_and_evaluate(cfg: ExperimentConfig, out_dir, analyze=False, log=None):
    """Train, evaluate on the configured splits and optionally analyze; returns a JSON-ready result."""
    corpus = build_corpus(cfg.corpus)
    t0 = time.perf_counter()
    model, trace = run_training(cfg, out_dir, corpus, log=log)
    train_time = time.perf_counter() - t0
    res = evaluate_checkpoint_on_corpus(model, corpus.vocab, corpus, cfg.evaluation)
    write_metrics(res, out_dir)
    result = {"name": cfg.name, "metrics": metrics_to_json(res), "final_ce": trace[-1][2] if trace else None,
              "train_seconds": round(train_time, 1)}
    if analyze:
        rep = analyze_model(model, corpus.vocab, corpus, set_size=cfg.evaluation.analysis_set_size)
        rep.write_csv(Path(out_dir) / "preference.csv")
        rep.write_json(Path(out_dir) / "preference.json")
        result["preference"] = {str(k): v for k, v in rep.summary().items()}
    return result


def ensure_run(registry: RunRegistry, run_id, cfg: ExperimentConfig, analyze=False, log=None):
    """Result of ``run_id``, training it first unless the registry already holds it."""
    if registry.done(run_id):
        return registry.result(run_id)
    if not registry.acquire(run_id):
        raise ExperimentError(f"run {run_id} is locked by another process ({registry.path(run_id) / 'LOCK'})")
    try:
        result = run_and_evaluate(cfg, registry.path(run_id), analyze=analyze, log=log)
    except BaseException:
        registry.release(run_id)
        raise
    registry.finish(run_id, result)
    return result


SWEEP_AXES = {"M": "model.stage1_layers", "instrucl_layer": "model.instrucl_layer"}


def check_sweep_value(cfg: ExperimentConfig, axis, value):
    m = cfg.model
    if axis == "M":
        if m.architecture != "tdo":
            raise ExperimentError("sweeping M needs a tdo model")
        if not 1 <= value < 2 * m.num_layers:
            raise ExperimentError(f"M={value} out of range 1..{2 * m.num_layers - 1}")
    elif axis == "instrucl_layer":
        top = m.num_layers if m.architecture == "encoder_decoder" else 2 * m.num_layers
        if not 1 <= value <= top:
            raise ExperimentError(f"instrucl_layer={value} out of range 1..{top}")
    else:
        raise ExperimentError(f"unknown sweep axis {axis!r}; choose from {sorted(SWEEP_AXES)}")


def sweep(cfg: ExperimentConfig, axis, values, out_dir, baseline=None, log=None):
    """One run per value (shared seed); returns rows with absolute and relative deltas vs ``baseline``."""
    for v in values:
        check_sweep_value(cfg, axis, v)
    baseline = values[0] if baseline is None else baseline
    if baseline not in values:
        raise ExperimentError(f"baseline {baseline} is not among the swept values")
    registry = RunRegistry(out_dir)
    results = {}
    for v in values:
        run_cfg = cfg.replace(**{SWEEP_AXES[axis]: v, "name": f"{cfg.name}-{axis}{v}"})
        results[v] = ensure_run(registry, f"{axis}={v}", run_cfg, log=log)
    rows = sweep_table(results, baseline)
    write_sweep_csv(rows, Path(out_dir) / "sweep.csv", axis)
    return rows


def sweep_table(results, baseline):
    base = results[baseline]["metrics"]["groups"]
    rows = []
    for v, res in results.items():
        groups = res["metrics"]["groups"]
        for g, metrics in groups.items():
            for name, value in metrics.items():
                b = base.get(g, {}).get(name)
                delta = None if b is None else value - b
                ratio = None if not b else delta / b
                rows.append({"value": v, "group": g, "metric": name, "score": value, "delta": delta, "ratio": ratio})
    return rows


def write_sweep_csv(rows, path, axis):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([axis, "group", "metric", "score", "delta", "ratio"])
        for r in rows:
            fmt = lambda x: "" if x is None else f"{x:.6f}"  # noqa: E731
            w.writerow([r["value"], r["group"], r["metric"], fmt(r["score"]), fmt(r["delta"]), fmt(r["ratio"])])


def corpus_from(path_or_cfg):
    """Load a corpus directory, or generate from a CorpusConfig / experiment config path."""
    if isinstance(path_or_cfg, CorpusConfig):
        return build_corpus(path_or_cfg)
    p = Path(path_or_cfg)
    if p.is_dir():
        return load_corpus(p)
    data = json.loads(p.read_text())
    if "corpus" in data or "model" in data:
        return build_corpus(ExperimentConfig.from_dict(data).corpus)
    return build_corpus(CorpusConfig.from_dict(data))
