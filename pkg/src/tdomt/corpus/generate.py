"""English-centric synthetic multilingual corpus.

Each sentence is a sequence of abstract concept ids.  A language renders a
concept sequence by mapping every concept to a token of its own alphabet
and then applying a structural transform: identity, reversal, or a fixed
permutation applied within consecutive blocks of ``block`` positions (a
shorter tail block is left in place).  Alphabets are disjoint, so the language of
any token sequence is recoverable exactly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .instance import TranslationInstance
from .vocab import Vocabulary

TRANSFORMS = ("identity", "reversal", "permutation")


class CorpusConfigError(ValueError):
    pass


@dataclass
class LanguageSpec:
    name: str
    transform: str = "identity"
    alphabet: list | None = None  # defaults to f"{name}{i}" for each concept
    shuffle: bool = False  # scramble which surface token each concept maps to
    block: int = 2  # "permutation": size of the blocks permuted in place


@dataclass
class CorpusConfig:
    languages: list = field(
        default_factory=lambda: [
            LanguageSpec("en"),
            LanguageSpec("xa", "reversal"),
            LanguageSpec("xb", "identity"),
            LanguageSpec("xc", "permutation"),
            LanguageSpec("xd", "reversal"),
        ]
    )
    center: str = "en"
    concept_vocab: int = 40
    min_len: int = 4
    max_len: int = 12
    train_per_direction: int = 6000
    valid_per_direction: int = 100
    test_per_direction: int = 100
    parallel_size: int = 128
    seed: int = 1

    def __post_init__(self):
        self.languages = [l if isinstance(l, LanguageSpec) else LanguageSpec(**l) for l in self.languages]
        self.validate()

    @property
    def names(self):
        return [l.name for l in self.languages]

    def validate(self):
        names = self.names
        if len(set(names)) != len(names):
            raise CorpusConfigError("duplicate language names")
        if self.center not in names:
            raise CorpusConfigError(f"center language {self.center!r} missing from languages")
        if len(names) < 2:
            raise CorpusConfigError("need at least two languages")
        if not 1 <= self.min_len <= self.max_len:
            raise CorpusConfigError("need 1 <= min_len <= max_len")
        if self.concept_vocab < 1:
            raise CorpusConfigError("concept_vocab must be positive")
        surfaces = {}
        for spec in self.languages:
            if spec.transform not in TRANSFORMS:
                raise CorpusConfigError(f"unknown transform {spec.transform!r} for {spec.name}")
            if spec.transform == "permutation" and spec.block < 2:
                raise CorpusConfigError(f"{spec.name}: permutation block must be >= 2")
            alpha = self.alphabet(spec)
            if len(alpha) != self.concept_vocab or len(set(alpha)) != len(alpha):
                raise CorpusConfigError(f"alphabet of {spec.name} must hold {self.concept_vocab} distinct tokens")
            for tok in alpha:
                if tok in surfaces:
                    raise CorpusConfigError(
                        f"alphabet overlap: token {tok!r} shared by {surfaces[tok]} and {spec.name}"
                    )
                surfaces[tok] = spec.name

    def alphabet(self, spec: LanguageSpec):
        return list(spec.alphabet) if spec.alphabet is not None else [f"{spec.name}{i}" for i in range(self.concept_vocab)]

    def training_directions(self):
        others = [n for n in self.names if n != self.center]
        return [(self.center, o) for o in others] + [(o, self.center) for o in others]

    def zeroshot_directions(self):
        others = [n for n in self.names if n != self.center]
        return [(a, b) for a in others for b in others if a != b]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**data)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def block_permutation(block, seed):
    """Seeded non-identity permutation of ``range(block)`` (a swap for block 2)."""
    if block < 2:
        raise CorpusConfigError("permutation blocks need at least two positions")
    rng = np.random.default_rng(seed)
    while True:
        p = rng.permutation(block)
        if np.any(p != np.arange(block)):
            return p


class Renderer:
    """Concept sequence <-> token ids for every configured language."""

    def __init__(self, config: CorpusConfig):
        self.config = config
        alphabets = {}
        self._concept_to_token = {}
        for k, spec in enumerate(config.languages):
            alpha = config.alphabet(spec)
            alphabets[spec.name] = alpha
            order = np.arange(config.concept_vocab)
            if spec.shuffle:
                order = np.random.default_rng([config.seed, 7919, k]).permutation(config.concept_vocab)
            self._concept_to_token[spec.name] = order
        self.vocab = Vocabulary.build(alphabets)
        self._base = {}
        for spec in config.languages:
            first_id = self.vocab.index[alphabets[spec.name][0]]
            self._base[spec.name] = first_id
        self._perms = {}
        for k, spec in enumerate(config.languages):
            if spec.transform == "permutation":
                self._perms[spec.name] = block_permutation(spec.block, [config.seed, 104729, k])
        self._spec = {s.name: s for s in config.languages}

    def _order(self, lang, n):
        t = self._spec[lang].transform
        if t == "identity":
            return np.arange(n)
        if t == "reversal":
            return np.arange(n)[::-1]
        pattern = self._perms[lang]
        b = len(pattern)
        order = np.arange(n)
        for start in range(0, n - n % b, b):
            order[start : start + b] = start + pattern
        return order

    def render(self, concepts, lang):
        concepts = np.asarray(concepts, dtype=np.int64)
        mapped = self._concept_to_token[lang][concepts] + self._base[lang]
        return tuple(int(i) for i in mapped[self._order(lang, len(concepts))])

    def invert(self, ids, lang):
        """Recover the concept sequence of a sentence rendered in ``lang``."""
        ids = np.asarray(ids, dtype=np.int64) - self._base[lang]
        inverse_map = np.argsort(self._concept_to_token[lang])
        concepts = np.empty(len(ids), dtype=np.int64)
        concepts[self._order(lang, len(ids))] = inverse_map[ids]
        return tuple(int(c) for c in concepts)

    def instance(self, concepts, src, tgt, concept_id=None):
        return TranslationInstance(
            tag=self.vocab.tag(tgt),
            source=self.render(concepts, src),
            target=self.render(concepts, tgt),
            src_lang=src,
            tgt_lang=tgt,
            concept=concept_id,
        )


@dataclass
class Corpus:
    config: CorpusConfig
    vocab: Vocabulary
    splits: dict
    parallel: list  # concept sequences, renderable into every language
    renderer: Renderer | None = None

    def __getitem__(self, key):
        return self.splits[key]

    def parallel_instances(self, src, tgt):
        r = self.renderer or Renderer(self.config)
        return [r.instance(c, src, tgt, concept_id=i) for i, c in enumerate(self.parallel)]


def generate_corpus(config: CorpusConfig) -> Corpus:
    renderer = Renderer(config)
    rng = np.random.default_rng(config.seed)
    pool = {}  # concept tuple -> concept id, shared across splits

    def sample(n, forbid=None):
        out = []
        while len(out) < n:
            length = int(rng.integers(config.min_len, config.max_len + 1))
            seq = tuple(int(c) for c in rng.integers(0, config.concept_vocab, size=length))
            if forbid is not None and seq in forbid:
                continue
            out.append(seq)
        return out

    def cid(seq):
        return pool.setdefault(seq, len(pool))

    splits = {"train": [], "valid": [], "test_supervised": [], "test_zeroshot": []}
    for src, tgt in config.training_directions():
        for seq in sample(config.train_per_direction):
            splits["train"].append(renderer.instance(seq, src, tgt, cid(seq)))
    seen = set(pool)
    for src, tgt in config.training_directions():
        for seq in sample(config.valid_per_direction, seen):
            splits["valid"].append(renderer.instance(seq, src, tgt, cid(seq)))
        for seq in sample(config.test_per_direction, seen):
            splits["test_supervised"].append(renderer.instance(seq, src, tgt, cid(seq)))
    for src, tgt in config.zeroshot_directions():
        for seq in sample(config.test_per_direction, seen):
            splits["test_zeroshot"].append(renderer.instance(seq, src, tgt, cid(seq)))
    parallel = sample(config.parallel_size, seen)
    return Corpus(config, renderer.vocab, splits, parallel, renderer)


# ---------------------------------------------------------------- text files

def write_instances(path, instances, vocab: Vocabulary):
    """One instance per line: tag <TAB> source tokens <TAB> target tokens."""
    with open(path, "w") as fh:
        for inst in instances:
            fh.write(
                f"{vocab.tokens[inst.tag]}\t{' '.join(vocab.decode(inst.source))}\t{' '.join(vocab.decode(inst.target))}\n"
            )


def read_instances(path, vocab: Vocabulary):
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3):
                raise ValueError(f"{path}:{lineno}: expected tag, source[, target] separated by tabs")
            tag = vocab.index.get(parts[0])
            if tag is None or tag not in vocab.tag_lang:
                raise ValueError(f"{path}:{lineno}: missing or unknown language tag {parts[0]!r}")
            source = tuple(vocab.encode(parts[1].split()))
            target = tuple(vocab.encode(parts[2].split())) if len(parts) == 3 else ()
            out.append(
                TranslationInstance(
                    tag=tag,
                    source=source,
                    target=target,
                    src_lang=vocab.detect_language(source),
                    tgt_lang=vocab.tag_lang[tag],
                )
            )
    return out


def save_corpus(corpus: Corpus, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    corpus.config.save(directory / "corpus_config.json")
    (directory / "vocab.json").write_text(json.dumps(corpus.vocab.to_dict(), indent=1) + "\n")
    for name, instances in corpus.splits.items():
        write_instances(directory / f"{name}.tsv", instances, corpus.vocab)
    names = corpus.config.names
    r = corpus.renderer or Renderer(corpus.config)
    with open(directory / "parallel.tsv", "w") as fh:
        fh.write("\t".join(names) + "\n")
        for seq in corpus.parallel:
            fh.write("\t".join(" ".join(corpus.vocab.decode(r.render(seq, n))) for n in names) + "\n")


def load_corpus(directory):
    """Rebuild a corpus from files; regenerates nothing, so edits to the TSVs are honored."""
    directory = Path(directory)
    config = CorpusConfig.load(directory / "corpus_config.json")
    renderer = Renderer(config)
    vocab = renderer.vocab
    splits = {}
    for name in ("train", "valid", "test_supervised", "test_zeroshot"):
        path = directory / f"{name}.tsv"
        if path.exists():
            splits[name] = read_instances(path, vocab)
    parallel = []
    ppath = directory / "parallel.tsv"
    if ppath.exists():
        lines = ppath.read_text().splitlines()
        names = lines[0].split("\t")
        first = names[0]
        for line in lines[1:]:
            cells = line.split("\t")
            parallel.append(renderer.invert(vocab.encode(cells[0].split()), first))
    return Corpus(config, vocab, splits, parallel, renderer)
