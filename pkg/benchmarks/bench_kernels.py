"""Compare the compiled kernels with the numpy fallback.

Times each fused kernel on training-sized inputs and one full training
step of the toy TDO model, once per backend.

    python benchmarks/bench_kernels.py [--repeat 20] [--steps 10]
"""
import argparse
import time

import numpy as np

from tdomt.experiment import ExperimentConfig, build_corpus, training_data
from tdomt.model import Model, ModelConfig
from tdomt.numerics import kernels
from tdomt.training import Adam, iterate_batches, train_step


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def kernel_cases(rng):
    rows, vocab, d = 2048, 230, 64
    logits = rng.normal(size=(rows, vocab)).astype(np.float32)
    scores = rng.normal(size=(512 * 4, 24)).astype(np.float32)
    x = rng.normal(size=(rows, d)).astype(np.float32)
    gain, bias = np.ones(d, np.float32), np.zeros(d, np.float32)
    targets = rng.integers(0, vocab, rows)
    weights = np.ones(rows, np.float32)
    y = kernels.softmax_lastaxis(scores)
    _, mean, rstd = kernels.layer_norm_forward(x, gain, bias, 1e-5)
    table = np.zeros((vocab, d), np.float32)
    ids = rng.integers(0, vocab, rows)
    return {
        "softmax": lambda: kernels.softmax_lastaxis(scores),
        "softmax backward": lambda: kernels.softmax_lastaxis_backward(y, scores),
        "layer norm": lambda: kernels.layer_norm_forward(x, gain, bias, 1e-5),
        "layer norm backward": lambda: kernels.layer_norm_backward(x, x, mean, rstd, gain),
        "smoothed cross-entropy": lambda: kernels.smoothed_cross_entropy(logits, targets, weights, 0.1),
        "embedding scatter-add": lambda: kernels.scatter_add_rows(table, ids, x),
    }


def training_step_case(steps):
    cfg = ExperimentConfig()
    corpus = build_corpus(cfg.corpus.__class__(**{**cfg.corpus.to_dict(), "train_per_direction": 500}))
    mcfg = ModelConfig.from_dict(dict(cfg.model.to_dict(), vocab_size=len(corpus.vocab)))
    data = training_data(corpus, mcfg)

    def run():
        model = Model(mcfg, seed=1)
        opt = Adam(model.params, cfg.optimizer)
        stream = iterate_batches(data, cfg.training.max_tokens, np.random.default_rng(0))
        for _ in range(steps):
            batch, _, _ = next(stream)
            train_step(model, opt, batch, 1e-3)

    return run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--steps", type=int, default=10)
    args = ap.parse_args()
    if not kernels.compiled_available():
        print("compiled kernels are not built; only the numpy backend is available")
    backends = ["numpy"] + (["cython"] if kernels.compiled_available() else [])
    rng = np.random.default_rng(0)
    cases = kernel_cases(rng)
    results = {}
    for backend in backends:
        kernels.use_backend(backend)
        for name, fn in cases.items():
            results[(name, backend)] = best_of(fn, args.repeat)
        step = training_step_case(args.steps)
        results[(f"training step (x{args.steps})", backend)] = best_of(step, 2)
    names = list(cases) + [f"training step (x{args.steps})"]
    print(f"{'case':28s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name in names:
        row = [results[(name, b)] for b in backends]
        line = f"{name:28s}" + "".join(f"{t * 1e3:10.2f}ms" for t in row)
        if len(row) == 2:
            line += f"{row[0] / row[1]:11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
