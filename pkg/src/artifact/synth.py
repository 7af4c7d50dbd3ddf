"""Synthetic corpora with known, controllable token-label correlations.

These generators exist so the discovery pipeline can be tested against a
ground truth: we decide which token carries the label signal, so we can ask
whether the toolkit finds it.
"""

from __future__ import annotations

import numpy as np

from .corpus import Dataset, Instance, Vocab

POSITIVE_WORDS = (
    "wonderful", "brilliant", "delightful", "superb", "charming", "uplifting",
    "masterful", "gripping", "heartfelt", "dazzling", "inventive", "satisfying",
)
NEGATIVE_WORDS = (
    "dreadful", "tedious", "clumsy", "hollow", "grating", "lifeless",
    "muddled", "shoddy", "dismal", "forgettable", "irritating", "bloated",
)
NEUTRAL_WORDS = (
    "movie", "film", "plot", "scene", "actor", "director", "script", "camera",
    "story", "character", "ending", "music", "screen", "cast", "dialogue",
    "pacing", "studio", "sequel", "trailer", "review", "yesterday", "tonight",
    "cinema", "ticket", "popcorn", "soundtrack", "editing", "costume",
    "budget", "runtime",
)

TOPIC_WORDS = (
    "otter", "falcon", "birch", "glacier", "meadow", "heron", "lichen",
    "badger", "juniper", "plateau", "osprey", "thicket", "marmot", "estuary",
    "sedge", "willow", "lynx", "tundra", "moss", "ridge", "newt", "fern",
    "dune", "reef", "spruce", "crane", "vole", "fjord", "bog", "heath",
    "pike", "alder", "swift", "stoat", "briar", "knoll", "tarn", "shrike",
    "elm", "wren",
)
NOISE_WORDS = (
    "lamp", "corridor", "window", "ladder", "market", "bridge", "station",
    "bottle", "carpet", "drawer", "kettle", "mirror", "pavement", "fence",
    "garage", "pillow", "basket", "spoon", "curtain", "hallway", "bicycle",
    "envelope", "stairs", "wallet", "candle", "napkin", "bench", "tunnel",
    "awning", "gutter", "railing", "porch", "shelf", "crate", "hinge",
    "faucet", "doormat", "chimney", "attic", "cellar", "plaza", "kiosk",
    "tram", "depot", "quay", "pier", "alley", "lane", "boulevard", "court",
    "arcade", "lobby", "annex", "vault", "booth", "stall", "counter", "aisle",
    "balcony", "terrace",
)
MARKER_WORDS = (
    "moreover", "allegedly", "formerly", "roughly", "barely", "somewhat",
    "elsewhere", "meanwhile", "likewise", "nonetheless", "thereby", "hitherto",
    "seldom", "arguably", "notably", "chiefly", "partly", "broadly", "solely",
    "vaguely",
)


def _instances_from_tokens(token_lists: list[list[str]], labels: list[int],
                           class_names: tuple[str, ...], vocab: Vocab,
                           role: str, prefix: str) -> Dataset:
    instances = tuple(
        Instance(f"{prefix}{i}", vocab.encode(toks), None, lab, " ".join(toks))
        for i, (toks, lab) in enumerate(zip(token_lists, labels)))
    return Dataset(instances, class_names, vocab, role)


def _sentiment_tokens(rng: np.random.Generator, label: int, length: int,
                      noise: float, p_class: float) -> list[str]:
    own = POSITIVE_WORDS if label == 1 else NEGATIVE_WORDS
    other = NEGATIVE_WORDS if label == 1 else POSITIVE_WORDS
    toks: list[str] = []
    for _ in range(length):
        if rng.random() < p_class:
            pool = own if rng.random() >= noise else other
            toks.append(pool[int(rng.integers(len(pool)))])
        else:
            toks.append(NEUTRAL_WORDS[int(rng.integers(len(NEUTRAL_WORDS)))])
    # Guarantee one class-consistent word so the label stays learnable.
    toks[int(rng.integers(length))] = own[int(rng.integers(len(own)))]
    return toks


def planted_sentiment_corpus(
    n_train: int = 160,
    n_val: int = 40,
    n_test: int = 100,
    planted: str = "dragon",
    seed: int = 0,
    min_len: int = 16,
    max_len: int = 24,
    noise: float = 0.25,
    p_class: float = 0.30,
    n_occurrences: int = 2,
) -> tuple[Dataset, Dataset, Dataset]:
    """Binary sentiment toy corpus with one planted decoy token.

    The planted token appears (n_occurrences times) in every positive train
    and validation instance and in every test instance of both classes, so
    in test it carries no label information. Content words are deliberately
    noisy (a `noise` fraction is drawn from the wrong class's pool), which
    makes the perfectly reliable planted token the feature a classifier
    leans on hardest. Class names are ("negative", "positive").
    """
    rng = np.random.default_rng(seed)
    class_names = ("negative", "positive")

    def make_split(n: int, plant_rule: str) -> tuple[list[list[str]], list[int]]:
        lists, labels = [], []
        for i in range(n):
            label = i % 2
            length = int(rng.integers(min_len, max_len + 1))
            toks = _sentiment_tokens(rng, label, length, noise, p_class)
            if plant_rule == "positive_only" and label == 1 or plant_rule == "all":
                for _ in range(n_occurrences):
                    toks.insert(int(rng.integers(len(toks) + 1)), planted)
            lists.append(toks)
            labels.append(label)
        return lists, labels

    tr_toks, tr_labels = make_split(n_train, "positive_only")
    va_toks, va_labels = make_split(n_val, "positive_only")
    te_toks, te_labels = make_split(n_test, "all")

    vocab = Vocab(tuple(sorted(set(
        POSITIVE_WORDS + NEGATIVE_WORDS + NEUTRAL_WORDS + (planted,)))))
    train = _instances_from_tokens(tr_toks, tr_labels, class_names, vocab, "train", "tr")
    val = _instances_from_tokens(va_toks, va_labels, class_names, vocab, "validation", "va")
    test = _instances_from_tokens(te_toks, te_labels, class_names, vocab, "test", "te")
    return train, val, test


def pair_overlap_corpus(
    n_train: int = 120,
    n_test: int = 40,
    seed: int = 0,
    n_topic: int = 3,
    n_noise: int = 9,
) -> tuple[Dataset, Dataset]:
    """Premise/hypothesis toy corpus where lexical overlap predicts the label.

    Entailed pairs repeat n_topic premise words verbatim in the hypothesis;
    non-entailed hypotheses are drawn from a disjoint marker pool. Test pairs
    are all fully overlapping. Class names are ("not_entailment",
    "entailment").
    """
    rng = np.random.default_rng(seed)
    class_names = ("not_entailment", "entailment")
    vocab = Vocab(tuple(sorted(set(TOPIC_WORDS + NOISE_WORDS + MARKER_WORDS))))

    def sample(pool: tuple[str, ...], k: int) -> list[str]:
        idx = rng.choice(len(pool), size=k, replace=False)
        return [pool[int(i)] for i in idx]

    def make(n: int, prefix: str, role: str, all_entailed: bool) -> Dataset:
        instances = []
        for i in range(n):
            label = 1 if all_entailed else i % 2
            topics = sample(TOPIC_WORDS, n_topic)
            premise = topics + sample(NOISE_WORDS, n_noise)
            rng.shuffle(premise)
            if label == 1:
                hypothesis = list(topics)
                rng.shuffle(hypothesis)
            else:
                hypothesis = sample(MARKER_WORDS, n_topic)
            instances.append(Instance(
                f"{prefix}{i}", vocab.encode(premise), vocab.encode(hypothesis),
                label, (" ".join(premise), " ".join(hypothesis))))
        return Dataset(tuple(instances), class_names, vocab, role)

    train = make(n_train, "tr", "train", all_entailed=False)
    test = make(n_test, "te", "test", all_entailed=True)
    return train, test
