"""Lemma-aware matching of concepts inside sentences.

Concept coverage is lemma-level: "dancing" in a sentence matches the
concept "dance". The lemmatizer is deliberately small: an irregular-form
table shipped as package data plus ordered suffix rules, iterated to a
fixpoint so the result is idempotent. No part-of-speech disambiguation is
attempted; "watch" the noun and the verb share a lemma.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

_PUNCT = string.punctuation
_VOWELS = "aeiou"

# Legitimate double-consonant endings that must not be undoubled
# (fall, pass, buzz, cliff, ...).
_KEEP_DOUBLE = ("ll", "ss", "zz", "ff")

# Stem endings whose plural / third person takes "es" rather than "s".
_ES_STEM_ENDINGS = ("ss", "x", "zz", "ch", "sh", "o")


def _load_irregular_table(text: str) -> dict[str, str]:
    table: dict[str, str] = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        form, _, lemma = line.partition("\t")
        form, lemma = form.strip(), lemma.strip()
        if not form or not lemma:
            raise ValueError(f"malformed irregular-lemma row: {raw!r}")
        table[form] = lemma
    return table


@dataclass(frozen=True)
class LemmaRules:
    """Deterministic lemmatization rules.

    irregular_map lookups take priority over suffix rules. Suffix rules
    are applied repeatedly until no rule changes the token, which makes
    lemmatization idempotent by construction.
    """

    irregular_map: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load_default(cls) -> "LemmaRules":
        text = (
            resources.files("plangen.data")
            .joinpath("irregular_lemmas.tsv")
            .read_text(encoding="utf-8")
        )
        return cls(irregular_map=_load_irregular_table(text))

    @classmethod
    def from_tsv(cls, path: str) -> "LemmaRules":
        with open(path, encoding="utf-8") as fh:
            return cls(irregular_map=_load_irregular_table(fh.read()))


def _restore_silent_e(stem: str) -> str:
    """Heuristic e-restoration after stripping -ing/-ed.

    English stems rarely end in bare c/v/u ("danc", "driv", "argu"), and
    three-letter consonant-vowel-consonant stems usually dropped an e
    ("mak" -> "make", "hop" -> "hope"). Longer CVC stems ("visit") keep
    their form; truly irregular silent-e words live in the data table.
    """
    if stem.endswith(("c", "v", "u")):
        return stem + "e"
    if (
        len(stem) == 3
        and stem[0] not in _VOWELS
        and stem[1] in _VOWELS
        and stem[2] not in _VOWELS
        and stem[2] not in "wxy"
    ):
        return stem + "e"
    return stem


def _strip_inflection_stem(stem: str) -> str:
    if (
        len(stem) >= 4
        and stem[-1] == stem[-2]
        and stem[-1] not in _VOWELS
        and not stem.endswith(_KEEP_DOUBLE)
    ):
        return stem[:-1]
    return _restore_silent_e(stem)


def _apply_suffix_rules(token: str) -> str:
    """One pass of the ordered suffix rules; returns the token unchanged
    when no rule applies."""
    if token.endswith("ies") and len(token) >= 5:
        return token[:-3] + "y"
    # Gerunds need a 4-letter stem so that spring/bring/thing survive;
    # shorter silent-e gerunds (making, giving) live in the table.
    if token.endswith("ing") and len(token) >= 7:
        return _strip_inflection_stem(token[:-3])
    if token.endswith("ied") and len(token) >= 5:
        return token[:-3] + "y"
    if token.endswith("ed") and len(token) >= 5 and not token.endswith("eed"):
        return _strip_inflection_stem(token[:-2])
    if token.endswith("es") and len(token) >= 4:
        stem = token[:-2]
        if stem.endswith(_ES_STEM_ENDINGS):
            return stem
        return token[:-1]
    if (
        token.endswith("s")
        and len(token) >= 4
        and not token.endswith(("ss", "us", "is"))
    ):
        return token[:-1]
    return token


_DEFAULT_RULES: LemmaRules | None = None


def default_rules() -> LemmaRules:
    global _DEFAULT_RULES
    if _DEFAULT_RULES is None:
        _DEFAULT_RULES = LemmaRules.load_default()
    return _DEFAULT_RULES


def lemmatize(token: str, rules: LemmaRules | None = None) -> str:
    """Map an inflected token to its lowercase lemma.

    Unknown tokens come back as their lowercase form. Idempotent:
    lemmatize(lemmatize(t)) == lemmatize(t).
    """
    if not token:
        raise ValueError("cannot lemmatize an empty token")
    table = (rules or default_rules()).irregular_map
    t = token.lower()
    # Iterate to a fixpoint. Suffix rules strictly shorten the token and
    # the irregular table maps to stable lemmas, so this terminates.
    for _ in range(len(t) + 4):
        nxt = table.get(t) or _apply_suffix_rules(t)
        if nxt == t:
            break
        t = nxt
    return t


@lru_cache(maxsize=65536)
def _lemmatize_default(token: str) -> str:
    return lemmatize(token)


def tokenize(sentence: str) -> list[str]:
    """Whitespace tokenization with per-token ASCII punctuation stripping.

    Token indices correspond to whitespace-separated fields of the input;
    tokens that are pure punctuation become empty strings so that the
    indices of the remaining tokens are preserved.
    """
    return [tok.strip(_PUNCT).lower() for tok in sentence.split()]


def find_concept_positions(
    sentence: str, concept: str, rules: LemmaRules | None = None
) -> list[int]:
    """All token indices matching ``concept``, ascending.

    A token matches when its lemma equals the concept, or verbatim, so a
    concept always matches its own surface form even when the suffix
    heuristics would over-strip it. Matching is whole-token only: "art"
    never matches inside "start". An absent concept yields an empty list.
    """
    lemmatizer = _lemmatize_default if rules is None else (
        lambda tok: lemmatize(tok, rules)
    )
    positions = []
    for i, tok in enumerate(tokenize(sentence)):
        if tok and (tok == concept or lemmatizer(tok) == concept):
            positions.append(i)
    return positions
