"""Synthetic multilingual corpus, vocabulary, instruction tags and batching."""
from .assemble import (
    AssemblyError,
    Batch,
    ModelInput,
    TaggedInstance,
    apply_tag_strategy,
    assemble_model_input,
    collate,
    make_batches,
    prepare,
)
from .generate import (
    Corpus,
    CorpusConfig,
    CorpusConfigError,
    LanguageSpec,
    Renderer,
    generate_corpus,
    load_corpus,
    read_instances,
    save_corpus,
    write_instances,
)
from .instance import TranslationInstance
from .vocab import EOS, PAD, Vocabulary, VocabularyError, tag_token
