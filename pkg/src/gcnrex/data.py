"""Dataset loading, validation, entity masking, vocab and embedding handling.

The canonical dataset format is JSONL with one example object per line
(fields: id, tokens, pos, ner, heads, deprels, subj_start, subj_end,
obj_start, obj_end, subj_type, obj_type, relation). CoNLL-U files can be
loaded for tree-only work, with entity spans supplied out of band.
"""

import json
from collections import Counter
from dataclasses import dataclass, replace

import numpy as np

from . import trees

PAD_TOKEN = "<PAD>"
UNK_TOKEN = "<UNK>"
PAD_ID = 0
UNK_ID = 1


class DataError(ValueError):
    """Malformed dataset file or record."""


class ValidationError(DataError):
    """Record parsed but violates an invariant; carries the example id."""

    def __init__(self, example_id, message):
        super().__init__(f"example {example_id!r}: {message}")
        self.example_id = example_id


@dataclass(frozen=True)
class Example:
    id: str
    tokens: tuple
    pos: tuple
    ner: tuple
    heads: tuple          # 1-based, 0 = root
    deprels: tuple
    subj_span: tuple      # (start, end) 0-based inclusive
    obj_span: tuple
    subj_type: str
    obj_type: str
    relation: str

    @property
    def n(self):
        return len(self.tokens)


@dataclass(frozen=True)
class IndexedExample:
    id: str
    word_ids: np.ndarray
    pos_ids: np.ndarray
    ner_ids: np.ndarray
    heads: tuple
    subj_span: tuple
    obj_span: tuple
    label_id: int


def _spans_overlap(a, b):
    return a[0] <= b[1] and b[0] <= a[1]


def validate_example(ex):
    n = ex.n
    if n < 1:
        raise ValidationError(ex.id, "empty token list")
    for name in ("pos", "ner", "heads", "deprels"):
        if len(getattr(ex, name)) != n:
            raise ValidationError(
                ex.id, f"field {name} has length {len(getattr(ex, name))}, expected {n}")
    try:
        trees.build_tree(list(ex.heads))
    except trees.TreeError as e:
        raise ValidationError(ex.id, str(e)) from e
    for name, (s, e) in (("subj", ex.subj_span), ("obj", ex.obj_span)):
        if not (0 <= s <= e <= n - 1):
            raise ValidationError(ex.id, f"{name} span ({s}, {e}) outside [0, {n - 1}]")
    if _spans_overlap(ex.subj_span, ex.obj_span):
        raise ValidationError(ex.id, "subject and object spans overlap")
    return ex


_JSONL_FIELDS = ("id", "tokens", "pos", "ner", "heads", "deprels",
                 "subj_start", "subj_end", "obj_start", "obj_end",
                 "subj_type", "obj_type", "relation")


def _example_from_obj(obj, lineno):
    for field in _JSONL_FIELDS:
        if field not in obj:
            raise DataError(f"line {lineno}: missing field {field!r}")
    ex = Example(
        id=str(obj["id"]),
        tokens=tuple(obj["tokens"]),
        pos=tuple(obj["pos"]),
        ner=tuple(obj["ner"]),
        heads=tuple(int(h) for h in obj["heads"]),
        deprels=tuple(obj["deprels"]),
        subj_span=(int(obj["subj_start"]), int(obj["subj_end"])),
        obj_span=(int(obj["obj_start"]), int(obj["obj_end"])),
        subj_type=str(obj["subj_type"]),
        obj_type=str(obj["obj_type"]),
        relation=str(obj["relation"]),
    )
    return validate_example(ex)


def load_jsonl(path):
    examples = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"line {lineno}: invalid JSON ({e.msg})") from e
            examples.append(_example_from_obj(obj, lineno))
    return examples


def read_conllu(path):
    """Parse CoNLL-U v1 sentences (FORM, UPOS, HEAD, DEPREL consumed)."""
    sentences = []
    current = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                if current:
                    sentences.append(current)
                    current = []
                continue
            if line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise DataError(f"line {lineno}: expected 10 columns, got {len(cols)}")
            tok_id = cols[0]
            if "-" in tok_id or "." in tok_id:
                continue  # multiword ranges and empty nodes carry no tree edge
            try:
                head = int(cols[6])
            except ValueError as e:
                raise DataError(f"line {lineno}: non-integer HEAD {cols[6]!r}") from e
            current.append({"form": cols[1], "upos": cols[3],
                            "head": head, "deprel": cols[7]})
    if current:
        sentences.append(current)
    return sentences


def load_examples(path, fmt="jsonl", subj_span=None, obj_span=None,
                  subj_type="ENTITY", obj_type="ENTITY", relation="no_relation"):
    """Load a dataset as validated Examples, preserving input order.

    For CoNLL-U input (which carries no relation annotation), one pair of
    entity spans is applied to every sentence and the metadata fields are
    filled with the provided defaults.
    """
    if fmt == "jsonl":
        return load_jsonl(path)
    if fmt == "conllu":
        if subj_span is None or obj_span is None:
            raise DataError("conllu input requires explicit subj/obj spans")
        examples = []
        for i, sent in enumerate(read_conllu(path)):
            ex = Example(
                id=f"sent{i}",
                tokens=tuple(t["form"] for t in sent),
                pos=tuple(t["upos"] for t in sent),
                ner=tuple("O" for _ in sent),
                heads=tuple(t["head"] for t in sent),
                deprels=tuple(t["deprel"] for t in sent),
                subj_span=tuple(subj_span),
                obj_span=tuple(obj_span),
                subj_type=subj_type,
                obj_type=obj_type,
                relation=relation,
            )
            examples.append(validate_example(ex))
        return examples
    raise DataError(f"unknown format {fmt!r}")


def subj_mask_token(entity_type):
    return f"SUBJ-{entity_type}"


def obj_mask_token(entity_type):
    return f"OBJ-{entity_type}"


def mask_entities(ex, mode="typed"):
    """Replace entity tokens with placeholder tokens; span lengths preserved."""
    if mode == "none":
        return ex
    tokens = list(ex.tokens)
    if mode == "typed":
        subj_tok = subj_mask_token(ex.subj_type)
        obj_tok = obj_mask_token(ex.obj_type)
    elif mode == "unk":
        subj_tok = obj_tok = UNK_TOKEN
    else:
        raise ValueError(f"unknown mask mode {mode!r}")
    for i in range(ex.subj_span[0], ex.subj_span[1] + 1):
        tokens[i] = subj_tok
    for i in range(ex.obj_span[0], ex.obj_span[1] + 1):
        tokens[i] = obj_tok
    return replace(ex, tokens=tuple(tokens))


@dataclass(frozen=True)
class Vocab:
    word2id: dict
    pos2id: dict
    ner2id: dict
    labels: tuple
    neg_label: str

    @property
    def label2id(self):
        return {lab: i for i, lab in enumerate(self.labels)}

    @property
    def id2word(self):
        return {i: w for w, i in self.word2id.items()}

    def to_dict(self):
        return {"word2id": self.word2id, "pos2id": self.pos2id,
                "ner2id": self.ner2id, "labels": list(self.labels),
                "neg_label": self.neg_label}

    @classmethod
    def from_dict(cls, d):
        return cls(word2id=dict(d["word2id"]), pos2id=dict(d["pos2id"]),
                   ner2id=dict(d["ner2id"]), labels=tuple(d["labels"]),
                   neg_label=d["neg_label"])


def _tag_vocab(values):
    mapping = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
    for v in sorted(set(values)):
        if v not in mapping:
            mapping[v] = len(mapping)
    return mapping


def build_vocab(train_examples, min_freq=1, pretrained=None,
                extra_examples=(), neg_label="no_relation"):
    """Deterministic vocab: reserved ids, mask tokens, then words by
    descending frequency with lexicographic tie-break."""
    if not train_examples:
        raise DataError("cannot build a vocab from an empty training set")

    counts = Counter()
    mask_tokens = set()
    for ex in train_examples:
        counts.update(ex.tokens)
        mask_tokens.add(subj_mask_token(ex.subj_type))
        mask_tokens.add(obj_mask_token(ex.obj_type))

    word2id = {PAD_TOKEN: PAD_ID, UNK_TOKEN: UNK_ID}
    for tok in sorted(mask_tokens):
        if tok not in word2id:
            word2id[tok] = len(word2id)

    keep = [w for w, c in counts.items() if c >= min_freq and w not in word2id]
    if pretrained is not None:
        pre = set(pretrained)
        seen = set(counts)
        for ex in extra_examples:
            seen.update(ex.tokens)
        keep_set = set(keep)
        keep += [w for w in seen if w in pre and w not in keep_set and w not in word2id]
        keep = list(dict.fromkeys(keep))
    for w in sorted(keep, key=lambda w: (-counts.get(w, 0), w)):
        word2id[w] = len(word2id)

    pos2id = _tag_vocab(t for ex in train_examples for t in ex.pos)
    ner2id = _tag_vocab(t for ex in train_examples for t in ex.ner)

    label_set = {ex.relation for ex in train_examples}
    label_set.add(neg_label)
    labels = (neg_label,) + tuple(sorted(label_set - {neg_label}))
    return Vocab(word2id=word2id, pos2id=pos2id, ner2id=ner2id,
                 labels=labels, neg_label=neg_label)


def encode(ex, vocab):
    """Map an Example to id arrays; OOV words/tags fall back to UNK."""
    label2id = vocab.label2id
    if ex.relation not in label2id:
        raise ValidationError(ex.id, f"unknown relation label {ex.relation!r}")
    word_ids = np.array([vocab.word2id.get(t, UNK_ID) for t in ex.tokens],
                        dtype=np.int64)
    pos_ids = np.array([vocab.pos2id.get(t, UNK_ID) for t in ex.pos],
                       dtype=np.int64)
    ner_ids = np.array([vocab.ner2id.get(t, UNK_ID) for t in ex.ner],
                       dtype=np.int64)
    return IndexedExample(id=ex.id, word_ids=word_ids, pos_ids=pos_ids,
                          ner_ids=ner_ids, heads=ex.heads,
                          subj_span=ex.subj_span, obj_span=ex.obj_span,
                          label_id=label2id[ex.relation])


def load_glove(path, vocab, seed, d_word=300):
    """Initialize the word embedding matrix from a GloVe-style text file.

    Missing words (including mask tokens) are drawn uniformly from
    [-1, 1] / sqrt(d_word); the PAD row is forced to zero.
    """
    rng = np.random.default_rng(seed)
    n_words = len(vocab.word2id)
    mat = rng.uniform(-1.0, 1.0, size=(n_words, d_word)) / np.sqrt(d_word)
    found = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) < 2:
                continue
            word = parts[0]
            if word not in vocab.word2id:
                continue
            if len(parts) - 1 != d_word:
                raise DataError(
                    f"line {lineno}: vector has {len(parts) - 1} dims, config wants {d_word}")
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
            except ValueError as e:
                raise DataError(f"line {lineno}: unparseable value ({e})") from e
            mat[vocab.word2id[word]] = vec
            found.add(word)
    mat[PAD_ID] = 0.0
    return mat
