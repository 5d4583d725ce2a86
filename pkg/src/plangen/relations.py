"""Gold concept relations from pre-parsed reference sentences.

Ingests CoNLL-U-style dependency parses (index, form, lemma, upos,
head-index, deprel; one block per reference, '#' comments, blank-line
separated) and extracts the one- and two-hop dependency paths between
concept pairs. Only relations appearing in two or more references
survive; they serve as gold labels for attention probing.

No parser runs here: parses arrive pre-computed.
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass
from typing import IO, Iterable, Sequence

from .core import ConceptSet
from .errors import CorpusError
from .textmatch import lemmatize

MIN_SUPPORT = 2

_POS_LETTER = {"VERB": "v", "AUX": "v", "NOUN": "n", "PROPN": "n", "PRON": "n"}


@dataclass(frozen=True)
class ParseToken:
    index: int  # 1-based
    form: str
    lemma: str
    upos: str
    head: int  # 0 = root
    deprel: str


@dataclass(frozen=True)
class ParseTree:
    """One reference sentence's dependency tree."""

    tokens: tuple[ParseToken, ...]
    instance_id: str | None = None

    def pos_letter(self, index: int) -> str:
        upos = self.tokens[index - 1].upos
        return _POS_LETTER.get(upos, upos.lower())


def read_parse_blocks(
    lines: Iterable[str],
) -> list[ParseTree]:
    """Parse CoNLL-U-style text into trees.

    A `# id = <instance_id>` comment inside a block associates the tree
    with a corpus instance; blocks without it carry instance_id None.
    """
    trees: list[ParseTree] = []
    current: list[ParseToken] = []
    current_id: str | None = None

    def flush(line_no: int) -> None:
        nonlocal current, current_id
        if current:
            expected = list(range(1, len(current) + 1))
            if [t.index for t in current] != expected:
                raise CorpusError(
                    "parse block token indices are not 1..n", line=line_no
                )
            trees.append(ParseTree(tokens=tuple(current), instance_id=current_id))
        current = []
        current_id = None

    line_no = 0
    for line_no, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            flush(line_no)
            continue
        if line.startswith("#"):
            comment = line[1:].strip()
            if comment.startswith("id"):
                _, _, value = comment.partition("=")
                current_id = value.strip() or None
            continue
        fields = line.split("\t")
        if len(fields) < 6:
            raise CorpusError(
                f"parse row has {len(fields)} fields, expected 6", line=line_no
            )
        try:
            token = ParseToken(
                index=int(fields[0]),
                form=fields[1],
                lemma=fields[2],
                upos=fields[3],
                head=int(fields[4]),
                deprel=fields[5],
            )
        except ValueError as exc:
            raise CorpusError(f"malformed parse row: {exc}", line=line_no) from None
        current.append(token)
    flush(line_no + 1)
    return trees


def load_parse_file(path: str) -> list[ParseTree]:
    with open(path, encoding="utf-8") as fh:
        return read_parse_blocks(fh)


@dataclass(frozen=True)
class GoldRelation:
    """A labeled concept-pair path seen in at least two references.

    ``head`` is the path source (first letter of the label), ``dependent``
    the path target; ``label`` alternates POS letters and deprels, e.g.
    "v-dobj-n" or "n-nsubj-v-dobj-n".
    """

    head: str
    dependent: str
    label: str
    support: int

    def __post_init__(self):
        if self.support < MIN_SUPPORT:
            raise ValueError(
                f"gold relation support must be >= {MIN_SUPPORT}, "
                f"got {self.support}"
            )

    def to_json(self) -> dict:
        return {
            "head": self.head,
            "dependent": self.dependent,
            "label": self.label,
            "support": self.support,
        }


def _node_lemma(token: ParseToken) -> str:
    if token.lemma and token.lemma != "_":
        return token.lemma.lower()
    return lemmatize(token.form)


def _tree_relations(
    tree: ParseTree, concepts: ConceptSet
) -> set[tuple[str, str, str]]:
    """Distinct (source, target, label) concept paths within one tree."""
    concept_nodes: dict[str, list[int]] = defaultdict(list)
    for token in tree.tokens:
        lemma = _node_lemma(token)
        if lemma in concepts:
            concept_nodes[lemma].append(token.index)

    # Undirected adjacency; each edge keeps the child's deprel.
    edges: dict[int, dict[int, str]] = defaultdict(dict)
    for token in tree.tokens:
        if token.head > 0:
            edges[token.index][token.head] = token.deprel
            edges[token.head][token.index] = token.deprel

    found: set[tuple[str, str, str]] = set()
    for source in concepts:
        for target in concepts:
            if source == target:
                continue
            for a in concept_nodes.get(source, ()):
                for b in concept_nodes.get(target, ()):
                    if b in edges.get(a, {}):
                        label = (
                            f"{tree.pos_letter(a)}-{edges[a][b]}-"
                            f"{tree.pos_letter(b)}"
                        )
                        found.add((source, target, label))
                    for mid, rel1 in edges.get(a, {}).items():
                        if mid == b:
                            continue
                        rel2 = edges.get(mid, {}).get(b)
                        if rel2 is None:
                            continue
                        label = (
                            f"{tree.pos_letter(a)}-{rel1}-"
                            f"{tree.pos_letter(mid)}-{rel2}-"
                            f"{tree.pos_letter(b)}"
                        )
                        found.add((source, target, label))
    return found


def extract_gold_relations(
    parses: Sequence[ParseTree], concepts: ConceptSet
) -> list[GoldRelation]:
    """Concept-pair paths supported by two or more reference parses.

    Each reference contributes each distinct (source, target, label) at
    most once; relations below the support threshold are dropped.
    """
    support: dict[tuple[str, str, str], int] = defaultdict(int)
    for tree in parses:
        for key in _tree_relations(tree, concepts):
            support[key] += 1
    relations = [
        GoldRelation(head=h, dependent=d, label=label, support=count)
        for (h, d, label), count in support.items()
        if count >= MIN_SUPPORT
    ]
    relations.sort(key=lambda r: (-r.support, r.head, r.dependent, r.label))
    return relations


def write_gold_relations(
    relations_by_instance: dict[str, list[GoldRelation]], fh: IO[str]
) -> int:
    count = 0
    for rid in sorted(relations_by_instance):
        for relation in relations_by_instance[rid]:
            fh.write(
                json.dumps({"id": rid, **relation.to_json()}, ensure_ascii=False)
                + "\n"
            )
            count += 1
    return count


def load_gold_relations(path: str) -> dict[str, list[GoldRelation]]:
    out: dict[str, list[GoldRelation]] = defaultdict(list)
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out[obj["id"]].append(
                GoldRelation(
                    head=obj["head"],
                    dependent=obj["dependent"],
                    label=obj["label"],
                    support=obj["support"],
                )
            )
    return dict(out)
