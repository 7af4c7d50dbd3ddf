"""Corpus handling: tokenization, vocabulary, JSONL ingestion, splits, and
controlled injection of artificial token-label correlations.

Token ids 0..3 are reserved (padding, out-of-vocabulary, mask, segment
separator) and are never produced by the tokenizer itself.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

PAD = 0
OOV = 1
MASK = 2
SEP = 3
RESERVED_TOKENS = ("<pad>", "<oov>", "<mask>", "<sep>")
N_RESERVED = 4

# Word characters clump together, any other non-space byte stands alone.
_TOKEN_RE = re.compile(r"\w+|[^\w\s]")

# Closed-class words that the noun-like position heuristic skips over.
_NON_NOUN_WORDS = frozenset(
    """a an the and or but if then than so nor yet of in on at by to for with
    from into over under about against between through during before after
    above below up down out off again once here there is are was were be been
    being am do does did doing have has had having will would shall should may
    might must can could not no nothing never i you he she it we they me him
    her us them my your his its our their this that these those what which who
    whom whose when where why how all any both each few more most other some
    such only own same as very just also too s t don won""".split()
)

_MALE_PRONOUNS = ("he", "him", "his")
_FEMALE_PRONOUNS = ("she", "her")
# Neutral forms by grammatical slot: subject, object, possessive.
_PRONOUN_SLOT = {"he": 0, "him": 1, "his": 2, "she": 0, "her": 2}


def tokenize(text: str) -> list[str]:
    """Lowercase and split into word tokens plus standalone punctuation marks."""
    return _TOKEN_RE.findall(text.lower())


def is_rating_token(token: str, lo: int = 1, hi: int = 10) -> bool:
    """True for a bare integer token inside [lo, hi]."""
    return token.isdigit() and lo <= int(token) <= hi


def contains_rating(tokens: Iterable[str], require_slash_ten: bool = False,
                    lo: int = 1, hi: int = 10) -> bool:
    """Does the token sequence mention a numeric rating?

    With require_slash_ten the digit must be immediately followed by "/ 10"
    (how "8/10" tokenizes); otherwise any standalone digit in range counts.
    """
    toks = list(tokens)
    for i, t in enumerate(toks):
        if not is_rating_token(t, lo, hi):
            continue
        if not require_slash_ten:
            return True
        if i + 2 < len(toks) and toks[i + 1] == "/" and toks[i + 2] == "10":
            return True
    return False


def _sha256(parts: Iterable[str]) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(p.encode("utf-8"))
        h.update(b"\x00")
    return h.hexdigest()


@dataclass(frozen=True)
class Vocab:
    """Token/id mapping. Non-reserved tokens start at id 4, contiguous."""

    tokens: tuple[str, ...]
    min_frequency: int = 1
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        index: dict[str, int] = {}
        for i, tok in enumerate(self.tokens):
            if tok in RESERVED_TOKENS:
                raise ValueError(f"token {tok!r} collides with a reserved token")
            if not tok:
                raise ValueError("empty string cannot be a vocabulary token")
            if tok in index:
                raise ValueError(f"duplicate vocabulary token {tok!r}")
            index[tok] = i + N_RESERVED
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return N_RESERVED + len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index or token in RESERVED_TOKENS

    def id_of(self, token: str) -> int:
        if token in self._index:
            return self._index[token]
        try:
            return RESERVED_TOKENS.index(token)
        except ValueError:
            return OOV

    def token_of(self, token_id: int) -> str:
        if 0 <= token_id < N_RESERVED:
            return RESERVED_TOKENS[token_id]
        if N_RESERVED <= token_id < len(self):
            return self.tokens[token_id - N_RESERVED]
        raise ValueError(f"token id {token_id} out of range for vocab of size {len(self)}")

    def encode(self, tokens: Iterable[str]) -> tuple[int, ...]:
        return tuple(self.id_of(t) for t in tokens)

    def decode(self, ids: Iterable[int]) -> tuple[str, ...]:
        return tuple(self.token_of(i) for i in ids)

    def extend(self, new_tokens: Iterable[str]) -> "Vocab":
        """Return a vocab with unseen tokens appended; existing ids are unchanged."""
        extra = [t for t in dict.fromkeys(new_tokens) if t not in self]
        if not extra:
            return self
        return Vocab(self.tokens + tuple(extra), self.min_frequency)

    @property
    def content_hash(self) -> str:
        return _sha256(self.tokens)

    def save(self, path: str | Path) -> None:
        # One token per line; line number == id - 4.
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, min_frequency: int = 1) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tuple(lines), min_frequency)


@dataclass(frozen=True)
class Instance:
    """One classified example: encoded token ids plus the original text."""

    id: str
    segment_a: tuple[int, ...]
    segment_b: tuple[int, ...] | None
    label: int
    raw_text: str | tuple[str, str]

    def __post_init__(self) -> None:
        if not self.segment_a:
            raise ValueError(f"instance {self.id!r} has an empty first segment")
        if self.label < 0:
            raise ValueError(f"instance {self.id!r} has negative label")
        if self.segment_b is not None and not self.segment_b:
            raise ValueError(f"instance {self.id!r} has an empty second segment")

    @property
    def is_pair(self) -> bool:
        return self.segment_b is not None

    def input_ids(self) -> tuple[int, ...]:
        """Model-facing serialization: segment_a ++ [SEP] ++ segment_b."""
        if self.segment_b is None:
            return self.segment_a
        return self.segment_a + (SEP,) + self.segment_b


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of instances sharing a vocab and label set."""

    instances: tuple[Instance, ...]
    class_names: tuple[str, ...]
    vocab: Vocab
    role: str = "train"

    def __post_init__(self) -> None:
        if len(self.class_names) < 2:
            raise ValueError("a dataset needs at least two classes")
        if self.role not in ("train", "validation", "test"):
            raise ValueError(f"unknown dataset role {self.role!r}")
        seen: set[str] = set()
        vmax = len(self.vocab)
        for inst in self.instances:
            if inst.id in seen:
                raise ValueError(f"duplicate instance id {inst.id!r}")
            seen.add(inst.id)
            if inst.label >= len(self.class_names):
                raise ValueError(
                    f"instance {inst.id!r} label {inst.label} out of range "
                    f"for {len(self.class_names)} classes")
            for tid in inst.input_ids():
                if not 0 <= tid < vmax:
                    raise ValueError(f"instance {inst.id!r} has token id {tid} outside vocab")

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self) -> Iterator[Instance]:
        return iter(self.instances)

    def __getitem__(self, i: int) -> Instance:
        return self.instances[i]

    def by_id(self, instance_id: str) -> Instance:
        for inst in self.instances:
            if inst.id == instance_id:
                return inst
        raise KeyError(instance_id)

    def tokens_of(self, inst: Instance) -> tuple[str, ...]:
        return self.vocab.decode(inst.input_ids())

    @property
    def content_hash(self) -> str:
        parts = [self.role, "|".join(self.class_names), self.vocab.content_hash]
        for inst in self.instances:
            seg_b = ",".join(map(str, inst.segment_b)) if inst.segment_b else ""
            parts.append(f"{inst.id};{','.join(map(str, inst.segment_a))};{seg_b};{inst.label}")
        return _sha256(parts)


@dataclass(frozen=True)
class ArtifactSpec:
    """Recipe for planting a synthetic correlation into a dataset.

    kind:
      insert_token            place one token from artifact_tokens into each
                              selected instance
      replace_from_set        rewrite occurrences of target_tokens, each with a
                              random pick from artifact_tokens
      conditional_pronoun_swap
                              neutralize gendered pronouns, male forms in the
                              negative class and female forms in the positive
                              class; artifact_tokens must be the three neutral
                              forms (subject, object, possessive)
    trigger_label is a class index, or "all" to touch every class.
    """

    kind: str
    trigger_label: int | str
    artifact_tokens: tuple[str, ...]
    injection_rate: float = 1.0
    position_rule: str = "before_random_noun_like"
    seed: int = 0
    target_tokens: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("insert_token", "replace_from_set", "conditional_pronoun_swap"):
            raise ValueError(f"unknown artifact kind {self.kind!r}")
        if not self.artifact_tokens:
            raise ValueError("artifact_tokens must be non-empty")
        if not 0.0 < self.injection_rate <= 1.0:
            raise ValueError("injection_rate must lie in (0, 1]")
        if self.position_rule not in ("before_random_noun_like", "append", "random"):
            raise ValueError(f"unknown position rule {self.position_rule!r}")
        if self.kind == "replace_from_set" and not self.target_tokens:
            raise ValueError("replace_from_set needs target_tokens")
        if self.kind == "conditional_pronoun_swap" and len(self.artifact_tokens) != 3:
            raise ValueError(
                "conditional_pronoun_swap needs exactly three neutral forms "
                "(subject, object, possessive)")
        for t in self.artifact_tokens:
            if tokenize(t) != [t]:
                raise ValueError(f"artifact token {t!r} is not a single token")


@dataclass(frozen=True)
class InjectionRecord:
    instance_id: str
    token: str
    position: int


@dataclass(frozen=True)
class InjectionLog:
    records: tuple[InjectionRecord, ...]

    def affected_ids(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(r.instance_id for r in self.records))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for r in self.records:
                fh.write(json.dumps(
                    {"id": r.instance_id, "token": r.token, "position": r.position},
                    sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "InjectionLog":
        records = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    d = json.loads(line)
                    records.append(InjectionRecord(d["id"], d["token"], d["position"]))
        return cls(tuple(records))


def _count_tokens(dataset: Dataset) -> Counter[str]:
    counts: Counter[str] = Counter()
    for inst in dataset:
        for tid in inst.input_ids():
            if tid >= N_RESERVED:
                counts[dataset.vocab.token_of(tid)] += 1
    return counts


def build_vocab(dataset: Dataset, min_frequency: int = 1) -> Vocab:
    """Frequency-ordered vocab over a dataset's tokens.

    Tokens below min_frequency are dropped (they will encode to OOV).
    Ordering is by descending count, then lexicographic, so the result is
    deterministic for a given dataset.
    """
    if len(dataset) == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    counts = _count_tokens(dataset)
    kept = sorted((t for t, c in counts.items() if c >= min_frequency),
                  key=lambda t: (-counts[t], t))
    if not kept:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    return Vocab(tuple(kept), min_frequency)


def reencode(dataset: Dataset, vocab: Vocab) -> Dataset:
    """Re-express every instance under a different vocabulary."""
    out = []
    for inst in dataset:
        seg_a = vocab.encode(dataset.vocab.decode(inst.segment_a))
        seg_b = (vocab.encode(dataset.vocab.decode(inst.segment_b))
                 if inst.segment_b is not None else None)
        out.append(replace(inst, segment_a=seg_a, segment_b=seg_b))
    return Dataset(tuple(out), dataset.class_names, vocab, dataset.role)


def load_jsonl(path: str | Path, vocab: Vocab | None = None,
               class_names: tuple[str, ...] | None = None,
               role: str = "train") -> Dataset:
    """Read a JSONL file of {"text"| "text_a"+"text_b", "label"[, "id"]} rows.

    Labels are stringified and mapped through class_names; without an explicit
    class_names the mapping follows first appearance. Without a vocab, one is
    built from this file (min_frequency 1). Instance ids default to the
    1-based line number.
    """
    path = Path(path)
    rows: list[tuple[str, list[str], list[str] | None, str, str | tuple[str, str]]] = []
    labels_seen: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: malformed JSON ({exc.msg})") from exc
            if not isinstance(row, dict):
                raise ValueError(f"{path}:{line_no}: row is not an object")
            if "label" not in row:
                raise ValueError(f"{path}:{line_no}: missing 'label'")
            label = str(row["label"])
            inst_id = str(row.get("id", line_no))
            if "text" in row:
                toks = tokenize(str(row["text"]))
                if not toks:
                    raise ValueError(f"{path}:{line_no}: text tokenizes to nothing")
                rows.append((inst_id, toks, None, label, str(row["text"])))
            elif "text_a" in row and "text_b" in row:
                ta, tb = str(row["text_a"]), str(row["text_b"])
                toks_a, toks_b = tokenize(ta), tokenize(tb)
                if not toks_a or not toks_b:
                    raise ValueError(f"{path}:{line_no}: a segment tokenizes to nothing")
                rows.append((inst_id, toks_a, toks_b, label, (ta, tb)))
            else:
                raise ValueError(f"{path}:{line_no}: need 'text' or 'text_a'+'text_b'")
            if label not in labels_seen:
                labels_seen.append(label)

    if not rows:
        raise ValueError(f"{path}: no instances")
    names = class_names if class_names is not None else tuple(labels_seen)
    label_index = {name: i for i, name in enumerate(names)}
    for inst_id, _, _, label, _ in rows:
        if label not in label_index:
            raise ValueError(f"{path}: label {label!r} not in class names {names}")

    if vocab is None:
        counts: Counter[str] = Counter()
        for _, ta, tb, _, _ in rows:
            counts.update(ta)
            if tb:
                counts.update(tb)
        vocab = Vocab(tuple(sorted(counts, key=lambda t: (-counts[t], t))))

    instances = tuple(
        Instance(inst_id, vocab.encode(ta),
                 vocab.encode(tb) if tb is not None else None,
                 label_index[label], raw)
        for inst_id, ta, tb, label, raw in rows)
    return Dataset(instances, names, vocab, role)


def instance_from_text(vocab: Vocab, text: str, text_b: str | None = None,
                       inst_id: str = "adhoc", label: int = 0) -> Instance:
    """Tokenize and encode free text into a throwaway instance."""
    toks = tokenize(text)
    if not toks:
        raise ValueError("text tokenizes to nothing")
    seg_b = None
    raw: str | tuple[str, str] = text
    if text_b is not None:
        toks_b = tokenize(text_b)
        if not toks_b:
            raise ValueError("second segment tokenizes to nothing")
        seg_b = vocab.encode(toks_b)
        raw = (text, text_b)
    return Instance(inst_id, vocab.encode(toks), seg_b, label, raw)


def save_jsonl(dataset: Dataset, path: str | Path) -> Path:
    """Write a dataset back to the JSONL form load_jsonl reads.

    Labels round-trip through class names; pair instances use text_a/text_b.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for inst in dataset:
            row: dict[str, object] = {"id": inst.id}
            if isinstance(inst.raw_text, tuple):
                row["text_a"], row["text_b"] = inst.raw_text
            else:
                row["text"] = inst.raw_text
            row["label"] = dataset.class_names[inst.label]
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def split(dataset: Dataset, fractions: tuple[float, float, float],
          seed: int = 0) -> tuple[Dataset, Dataset, Dataset]:
    """Shuffle and partition into train/validation/test by fractions."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    if any(f < 0 for f in fractions):
        raise ValueError("fractions must be non-negative")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dataset))
    n = len(dataset)
    cut1 = round(fractions[0] * n)
    cut2 = round((fractions[0] + fractions[1]) * n)
    parts = (order[:cut1], order[cut1:cut2], order[cut2:])
    roles = ("train", "validation", "test")
    return tuple(
        Dataset(tuple(dataset.instances[i] for i in idx),
                dataset.class_names, dataset.vocab, role)
        for idx, role in zip(parts, roles))  # type: ignore[return-value]


def _render(tokens: Iterable[str]) -> str:
    return " ".join(tokens)


def _noun_like_positions(tokens: list[str]) -> list[int]:
    return [i for i, t in enumerate(tokens)
            if t.isalpha() and t not in _NON_NOUN_WORDS]


def inject(dataset: Dataset, spec: ArtifactSpec) -> tuple[Dataset, InjectionLog]:
    """Plant the artifact described by spec; returns the new dataset and a log.

    Selection is seed-deterministic. The number of touched instances is
    floor(injection_rate * n_eligible), except for occurrence-conditioned
    kinds, where only instances containing an applicable token are eligible.
    New surface forms are appended to the vocab; existing ids never move.
    Modified instances get their raw_text re-rendered from tokens.
    """
    if isinstance(spec.trigger_label, int) and spec.trigger_label >= len(dataset.class_names):
        raise ValueError(f"trigger label {spec.trigger_label} out of range")
    rng = np.random.default_rng(spec.seed)
    vocab = dataset.vocab.extend(spec.artifact_tokens)

    def label_ok(inst: Instance) -> bool:
        return spec.trigger_label == "all" or inst.label == spec.trigger_label

    def decoded(inst: Instance) -> tuple[list[str], list[str] | None]:
        a = list(dataset.vocab.decode(inst.segment_a))
        b = list(dataset.vocab.decode(inst.segment_b)) if inst.segment_b is not None else None
        return a, b

    if spec.kind == "insert_token":
        eligible = [i for i, inst in enumerate(dataset) if label_ok(inst)]
    elif spec.kind == "replace_from_set":
        targets = set(spec.target_tokens or ())
        eligible = []
        for i, inst in enumerate(dataset):
            if not label_ok(inst):
                continue
            a, b = decoded(inst)
            if targets.intersection(a) or (b and targets.intersection(b)):
                eligible.append(i)
    else:  # conditional_pronoun_swap
        eligible = []
        for i, inst in enumerate(dataset):
            pron = _MALE_PRONOUNS if inst.label == 0 else _FEMALE_PRONOUNS
            a, b = decoded(inst)
            if set(pron).intersection(a) or (b and set(pron).intersection(b)):
                eligible.append(i)

    n_touch = int(spec.injection_rate * len(eligible))
    chosen = set(np.asarray(eligible)[rng.permutation(len(eligible))[:n_touch]].tolist())

    new_instances: list[Instance] = []
    records: list[InjectionRecord] = []
    for i, inst in enumerate(dataset):
        if i not in chosen:
            new_instances.append(replace(
                inst,
                segment_a=vocab.encode(dataset.vocab.decode(inst.segment_a)),
                segment_b=(vocab.encode(dataset.vocab.decode(inst.segment_b))
                           if inst.segment_b is not None else None)))
            continue
        a, b = decoded(inst)

        if spec.kind == "insert_token":
            token = spec.artifact_tokens[int(rng.integers(len(spec.artifact_tokens)))]
            if spec.position_rule == "append":
                pos = len(a)
            elif spec.position_rule == "random":
                pos = int(rng.integers(len(a) + 1))
            else:
                nounish = _noun_like_positions(a)
                pos = int(nounish[int(rng.integers(len(nounish)))]) if nounish else len(a)
            a.insert(pos, token)
            records.append(InjectionRecord(inst.id, token, pos))

        elif spec.kind == "replace_from_set":
            targets = set(spec.target_tokens or ())
            segments = [(a, 0)] + ([(b, len(a) + 1)] if b is not None else [])
            for seg, offset in segments:
                for j, tok in enumerate(seg):
                    if tok in targets:
                        pick = spec.artifact_tokens[int(rng.integers(len(spec.artifact_tokens)))]
                        seg[j] = pick
                        records.append(InjectionRecord(inst.id, pick, offset + j))

        else:  # conditional_pronoun_swap
            pron = _MALE_PRONOUNS if inst.label == 0 else _FEMALE_PRONOUNS
            segments = [(a, 0)] + ([(b, len(a) + 1)] if b is not None else [])
            for seg, offset in segments:
                for j, tok in enumerate(seg):
                    if tok in pron:
                        pick = spec.artifact_tokens[_PRONOUN_SLOT[tok]]
                        seg[j] = pick
                        records.append(InjectionRecord(inst.id, pick, offset + j))

        raw: str | tuple[str, str] = _render(a) if b is None else (_render(a), _render(b))
        new_instances.append(Instance(
            inst.id, vocab.encode(a),
            vocab.encode(b) if b is not None else None, inst.label, raw))

    new_ds = Dataset(tuple(new_instances), dataset.class_names, vocab, dataset.role)
    return new_ds, InjectionLog(tuple(records))


def mask_token(instance: Instance, token: str, vocab: Vocab) -> Instance:
    """Replace every occurrence of token with the mask id; no-op if absent."""
    tid = vocab.id_of(token)
    if tid == OOV and token != RESERVED_TOKENS[OOV]:
        return instance
    seg_a = tuple(MASK if t == tid else t for t in instance.segment_a)
    seg_b = (tuple(MASK if t == tid else t for t in instance.segment_b)
             if instance.segment_b is not None else None)
    if seg_a == instance.segment_a and seg_b == instance.segment_b:
        return instance
    if isinstance(instance.raw_text, tuple):
        raw: str | tuple[str, str] = (_render(vocab.decode(seg_a)), _render(vocab.decode(seg_b or ())))
    else:
        raw = _render(vocab.decode(seg_a))
    return replace(instance, segment_a=seg_a, segment_b=seg_b, raw_text=raw)


def mask_position(instance: Instance, position: int) -> Instance:
    """Mask a single position in the serialized token sequence."""
    ids = list(instance.input_ids())
    if not 0 <= position < len(ids):
        raise ValueError(f"position {position} out of range")
    if ids[position] == SEP and instance.is_pair and position == len(instance.segment_a):
        raise ValueError("cannot mask the segment separator")
    ids[position] = MASK
    if instance.segment_b is None:
        return replace(instance, segment_a=tuple(ids))
    na = len(instance.segment_a)
    return replace(instance, segment_a=tuple(ids[:na]), segment_b=tuple(ids[na + 1:]))
