from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class TranslationInstance:
    """(target-language tag, source ids, target ids) plus bookkeeping.

    ``src_lang``/``tgt_lang`` and ``concept`` are metadata: the languages are
    recoverable from the ids, and ``concept`` identifies semantically
    parallel sentences.
    """

    tag: int
    source: tuple
    target: tuple
    src_lang: str | None = None
    tgt_lang: str | None = None
    concept: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(int(i) for i in self.source))
        object.__setattr__(self, "target", tuple(int(i) for i in self.target))

    @property
    def direction(self):
        return (self.src_lang, self.tgt_lang)
