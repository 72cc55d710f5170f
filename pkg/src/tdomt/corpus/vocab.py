from __future__ import annotations

from dataclasses import dataclass, field

PAD = "<pad>"
EOS = "<eos>"


def tag_token(lang):
    return f"<2{lang}>"


class VocabularyError(ValueError):
    pass


@dataclass
class Vocabulary:
    """Token table: specials, one tag per language, then each language's alphabet."""

    tokens: list
    tag_ids: dict
    lang_of: dict = field(default_factory=dict)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise VocabularyError("duplicate tokens in vocabulary")
        self.tag_lang = {i: lang for lang, i in self.tag_ids.items()}

    @classmethod
    def build(cls, alphabets: dict):
        """``alphabets`` maps language -> ordered list of surface tokens."""
        tokens = [PAD, EOS]
        tag_ids = {}
        for lang in alphabets:
            tag_ids[lang] = len(tokens)
            tokens.append(tag_token(lang))
        lang_of = {}
        seen = set(tokens)
        for lang, alpha in alphabets.items():
            for tok in alpha:
                if tok in seen:
                    raise VocabularyError(f"token {tok!r} of {lang} collides with another language or special")
                seen.add(tok)
                lang_of[len(tokens)] = lang
                tokens.append(tok)
        return cls(tokens, tag_ids, lang_of)

    @property
    def pad_id(self):
        return 0

    @property
    def eos_id(self):
        return 1

    def __len__(self):
        return len(self.tokens)

    @property
    def languages(self):
        return list(self.tag_ids)

    def is_content(self, i):
        return i in self.lang_of

    def encode(self, words):
        try:
            return [self.index[w] for w in words]
        except KeyError as exc:
            raise VocabularyError(f"unknown token {exc.args[0]!r}") from None

    def decode(self, ids):
        return [self.tokens[i] for i in ids]

    def tag(self, lang):
        if lang not in self.tag_ids:
            raise VocabularyError(f"no tag for language {lang!r}")
        return self.tag_ids[lang]

    def detect_language(self, ids):
        """Majority language over content tokens; None for sequences without any."""
        counts = {}
        for i in ids:
            lang = self.lang_of.get(int(i))
            if lang is not None:
                counts[lang] = counts.get(lang, 0) + 1
        if not counts:
            return None
        return max(sorted(counts), key=lambda k: counts[k])

    def to_dict(self):
        return {"tokens": self.tokens, "tag_ids": self.tag_ids, "lang_of": {str(k): v for k, v in self.lang_of.items()}}

    @classmethod
    def from_dict(cls, data):
        return cls(list(data["tokens"]), dict(data["tag_ids"]), {int(k): v for k, v in data["lang_of"].items()})
