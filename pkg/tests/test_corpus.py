import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tdomt import numerics as nx
from tdomt.corpus import (
    AssemblyError,
    CorpusConfig,
    CorpusConfigError,
    LanguageSpec,
    Renderer,
    TranslationInstance,
    Vocabulary,
    VocabularyError,
    apply_tag_strategy,
    assemble_model_input,
    collate,
    generate_corpus,
    load_corpus,
    make_batches,
    prepare,
    read_instances,
    save_corpus,
    write_instances,
)
from tdomt.model import Model, ModelConfig
from tdomt.objectives import cross_entropy_mnmt


def small_config(**kw):
    base = dict(train_per_direction=30, valid_per_direction=5, test_per_direction=6, parallel_size=10)
    base.update(kw)
    return CorpusConfig(**base)


@pytest.fixture(scope="module")
def corpus():
    return generate_corpus(small_config())


# ---------------------------------------------------------------- vocabulary

def test_vocabulary_layout():
    v = Vocabulary.build({"en": ["a", "b"], "de": ["c"]})
    assert v.tokens[:4] == ["<pad>", "<eos>", "<2en>", "<2de>"]
    assert v.pad_id == 0 and v.eos_id == 1
    content = {i for i in range(len(v)) if v.is_content(i)}
    assert content.isdisjoint({v.pad_id, v.eos_id, *v.tag_ids.values()})
    assert v.detect_language(v.encode(["a", "c", "b"])) == "en"
    assert v.detect_language([v.eos_id]) is None


def test_vocabulary_rejects_collisions():
    with pytest.raises(VocabularyError):
        Vocabulary.build({"en": ["a"], "de": ["a"]})
    with pytest.raises(VocabularyError):
        Vocabulary.build({"en": ["a"]}).encode(["zzz"])


def test_vocabulary_round_trip():
    v = Vocabulary.build({"en": ["a", "b"], "de": ["c"]})
    w = Vocabulary.from_dict(v.to_dict())
    assert w.tokens == v.tokens and w.tag_ids == v.tag_ids and w.lang_of == v.lang_of


# ---------------------------------------------------------------- generation

def test_reversal_rendering():
    cfg = CorpusConfig(languages=[LanguageSpec("en"), LanguageSpec("l1", "reversal")], concept_vocab=10)
    r = Renderer(cfg)
    v = r.vocab
    assert v.decode(r.render([7, 3, 9], "en")) == ["en7", "en3", "en9"]
    assert v.decode(r.render([7, 3, 9], "l1")) == ["l19", "l13", "l17"]


def test_block_permutation_rendering():
    cfg = CorpusConfig(languages=[LanguageSpec("en"), LanguageSpec("sw", "permutation", block=2)], concept_vocab=10)
    r = Renderer(cfg)
    assert r.vocab.decode(r.render([1, 2, 3, 4, 5], "sw")) == ["sw2", "sw1", "sw4", "sw3", "sw5"]


@pytest.mark.parametrize("transform", ["identity", "reversal", "permutation"])
@given(st.lists(st.integers(0, 39), min_size=1, max_size=12))
@settings(max_examples=30, deadline=None)
def test_render_invert_round_trip(transform, concepts):
    cfg = CorpusConfig(languages=[LanguageSpec("en"), LanguageSpec("zz", transform, block=3, shuffle=True)])
    r = Renderer(cfg)
    assert r.invert(r.render(concepts, "zz"), "zz") == tuple(concepts)


def test_generation_is_deterministic():
    a, b = generate_corpus(small_config()), generate_corpus(small_config())
    for k in a.splits:
        assert a[k] == b[k]
    assert a.parallel == b.parallel
    c = generate_corpus(small_config(seed=2))
    assert c["train"] != a["train"]


def test_alphabet_overlap_rejected():
    with pytest.raises(CorpusConfigError):
        CorpusConfig(languages=[LanguageSpec("en", alphabet=["x", "y"]), LanguageSpec("de", alphabet=["y", "z"])],
                     concept_vocab=2)


def test_english_centric_directions(corpus):
    cfg = corpus.config
    train_dirs = {i.direction for i in corpus["train"]}
    assert all(cfg.center in d for d in train_dirs)
    zs = {i.direction for i in corpus["test_zeroshot"]}
    assert zs == set(cfg.zeroshot_directions())
    assert zs.isdisjoint(train_dirs)
    assert all(cfg.center not in d for d in zs)


def test_zero_shot_pairs_are_parallel(corpus):
    r = corpus.renderer
    for inst in corpus["test_zeroshot"]:
        assert r.invert(inst.source, inst.src_lang) == r.invert(inst.target, inst.tgt_lang)


def test_multiway_parallel_set(corpus):
    r = corpus.renderer
    for concepts in corpus.parallel:
        for lang in corpus.config.names:
            assert r.invert(r.render(concepts, lang), lang) == concepts


def test_test_sentences_unseen_in_training(corpus):
    r = corpus.renderer
    seen = {r.invert(i.source, i.src_lang) for i in corpus["train"]}
    for split in ("valid", "test_supervised", "test_zeroshot"):
        assert all(r.invert(i.source, i.src_lang) not in seen for i in corpus[split])


def test_languages_detectable(corpus):
    v = corpus.vocab
    for inst in corpus["train"][:50] + corpus["test_zeroshot"][:50]:
        assert v.detect_language(inst.source) == inst.src_lang
        assert v.detect_language(inst.target) == inst.tgt_lang


def test_corpus_files_round_trip(tmp_path, corpus):
    save_corpus(corpus, tmp_path)
    back = load_corpus(tmp_path)
    for k in corpus.splits:
        assert [(i.tag, i.source, i.target, i.direction) for i in back[k]] == [
            (i.tag, i.source, i.target, i.direction) for i in corpus[k]
        ]
    assert back.parallel == corpus.parallel
    line = (tmp_path / "train.tsv").read_text().splitlines()[0]
    tag, src, tgt = line.split("\t")
    assert tag.startswith("<2") and src and tgt


def test_read_instances_requires_tag(tmp_path, corpus):
    p = tmp_path / "bad.tsv"
    p.write_text("en1 en2\txa1\n")
    with pytest.raises(ValueError):
        read_instances(p, corpus.vocab)
    p.write_text("<2xa>\ten1 en2\n")
    (inst,) = read_instances(p, corpus.vocab)
    assert inst.target == () and inst.tgt_lang == "xa"


def test_write_read_instances(tmp_path, corpus):
    p = tmp_path / "x.tsv"
    write_instances(p, corpus["valid"][:3], corpus.vocab)
    back = read_instances(p, corpus.vocab)
    assert [(i.tag, i.source, i.target) for i in back] == [(i.tag, i.source, i.target) for i in corpus["valid"][:3]]


# ---------------------------------------------------------------- tag strategies

@pytest.fixture()
def tiny():
    v = Vocabulary.build({"src": ["a", "b"], "tgt": ["c"]})
    a, b = v.encode(["a", "b"])
    (c,) = v.encode(["c"])
    inst = TranslationInstance(v.tag("tgt"), (a, b), (c,), "src", "tgt")
    return v, inst, (a, b, c)


def test_strategy_one(tiny):
    v, inst, (a, b, c) = tiny
    t = apply_tag_strategy(inst, 1, v)
    assert t.source == (v.tag("tgt"), a, b) and t.target == (c,) and t.trigger == v.eos_id


def test_strategy_three_uses_tag_as_trigger(tiny):
    v, inst, (a, b, c) = tiny
    t = apply_tag_strategy(inst, 3, v)
    assert t.trigger == v.tag("tgt")
    m = assemble_model_input(t, "decoder_only", v.eos_id)
    assert m.target_in[0] == v.tag("tgt") and v.eos_id not in m.target_in


def test_strategy_five(tiny):
    v, inst, (a, b, c) = tiny
    t = apply_tag_strategy(inst, 5, v)
    assert t.source == (v.tag("src"), a, b) and t.target == (v.tag("tgt"), c)


def test_unknown_strategy(tiny):
    v, inst, _ = tiny
    with pytest.raises(AssemblyError):
        apply_tag_strategy(inst, 6, v)


# ---------------------------------------------------------------- assembly

def test_encoder_decoder_assembly(tiny):
    v, inst, (a, _, c) = tiny
    one = TranslationInstance(inst.tag, (a,), (c,))
    m = prepare(one, 1, v, "encoder_decoder")
    tag, eos = v.tag("tgt"), v.eos_id
    assert m.source == (tag, a, eos)
    assert m.target_in == (eos, c)
    assert m.labels == (c, eos)


def test_decoder_only_assembly(tiny):
    v, inst, (a, _, c) = tiny
    one = TranslationInstance(inst.tag, (a,), (c,))
    m = prepare(one, 1, v, "decoder_only")
    tag, eos = v.tag("tgt"), v.eos_id
    assert m.stream == (tag, a, eos, eos, c)
    assert m.labels == (c, eos)
    assert len(m.labels) == len(one.target) + 1


def test_assembly_rejects_empty_source(tiny):
    v, _, _ = tiny
    from tdomt.corpus import TaggedInstance

    with pytest.raises(AssemblyError):
        assemble_model_input(TaggedInstance((), (3,), 1), "tdo", v.eos_id)


# ---------------------------------------------------------------- batching

def test_collate_pads_and_masks(tiny):
    v, inst, (a, b, c) = tiny
    short = prepare(TranslationInstance(inst.tag, (a,), (c,)), 1, v, "tdo")
    long_ = prepare(TranslationInstance(inst.tag, (a, b, a), (c, c)), 1, v, "tdo")
    batch = collate([short, long_])
    assert batch.src.shape == (2, 5) and batch.tgt_in.shape == (2, 3)
    assert batch.src_pad.sum() == 2 and batch.tgt_pad.sum() == 1
    assert batch.weights.sum() == len(short.labels) + len(long_.labels)


def test_make_batches_budget_and_determinism(corpus):
    inputs = [prepare(i, 1, corpus.vocab, "tdo") for i in corpus["train"]]
    a = make_batches(inputs, 256, np.random.default_rng(0))
    b = make_batches(inputs, 256, np.random.default_rng(0))
    assert [x.index.tolist() for x in a] == [x.index.tolist() for x in b]
    assert all(x.padded_size <= 256 for x in a)
    assert sorted(i for x in a for i in x.index.tolist()) == list(range(len(inputs)))
    with pytest.raises(AssemblyError):
        make_batches(inputs, 5)


def test_batched_loss_equals_sum_of_single_losses(corpus):
    v = corpus.vocab
    cfg = ModelConfig(architecture="tdo", num_layers=1, stage1_layers=1, d_model=8, heads=2, vocab_size=len(v),
                      dropout=0.0)
    model = Model(cfg, seed=0, dtype=np.float64)
    inputs = [prepare(i, 1, v, "tdo") for i in corpus["train"][:6]]

    def loss(batch):
        logits, _ = model.forward(batch.src, batch.src_pad, batch.tgt_in, batch.tgt_pad)
        return cross_entropy_mnmt(logits, batch.labels, 0.1, batch.weights).item()

    total = loss(collate(inputs))
    single = sum(loss(collate([m])) for m in inputs)
    assert total == pytest.approx(single, abs=1e-5)
