"""Hermetic character-level corpus for the micro language model.

The corpus is generated deterministically from a fixed seed: Zipf-weighted
words composed into short clauses with simple punctuation. It has enough
character-level structure (digraphs, word boundaries, sentence casing) for
a small model to learn from, while keeping the repository free of bundled
data files and the tests free of downloads. The train/validation split is
a fixed byte offset.
"""

from __future__ import annotations

import numpy as np

_WORDS = (
    "the of and to in is that it was for on are as with his they at be this "
    "have from or had by word but not what all were when your can said there "
    "use each which she do how their if will up other about out many then "
    "them these so some her would make like him into time has look two more "
    "write go see number no way could people my than first water been call "
    "who oil its now find long down day did get come made may part over new "
    "sound take only little work know place year live me back give most very "
    "after thing our just name good sentence man think say great where help "
    "through much before line right too mean old any same tell boy follow "
    "came want show also around form three small set put end does another "
    "well large must big even such because turn here why ask went men read "
    "need land different home us move try kind hand picture again change "
    "off play spell air away animal house point page letter mother answer "
    "found study still learn should america world"
).split()

TRAIN_FRACTION = 0.9
_SEED = 20240917
_TARGET_BYTES = 1_000_000


def generate(n_bytes: int = _TARGET_BYTES, seed: int = _SEED) -> str:
    """Deterministic pseudo-text of roughly n_bytes characters."""
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, len(_WORDS) + 1, dtype=np.float64)
    probs = 1.0 / ranks  # Zipf weights over the frequency-ordered vocabulary
    probs /= probs.sum()

    est_words = int(n_bytes / 5.5) + 64
    word_idx = rng.choice(len(_WORDS), size=est_words, p=probs)
    sentence_len = rng.integers(4, 13, size=est_words // 4 + 1)
    comma = rng.random(est_words) < 0.08

    parts: list[str] = []
    total = 0
    wi = 0
    si = 0
    while total < n_bytes and wi < est_words:
        n = int(sentence_len[si % len(sentence_len)])
        si += 1
        words = []
        for k in range(n):
            if wi >= est_words:
                break
            w = _WORDS[int(word_idx[wi])]
            if k == 0:
                w = w.capitalize()
            elif comma[wi] and k < n - 1:
                w = w + ","
            words.append(w)
            wi += 1
        sentence = " ".join(words) + ". "
        if si % 8 == 0:
            sentence = sentence.rstrip() + "\n"
        parts.append(sentence)
        total += len(sentence)
    return "".join(parts)[:n_bytes]


_cache: dict[tuple[int, int], tuple[np.ndarray, np.ndarray, str]] = {}


def load_split(n_bytes: int = _TARGET_BYTES, seed: int = _SEED
               ) -> tuple[np.ndarray, np.ndarray, str]:
    """(train_ids, val_ids, alphabet): byte-offset split, ids into alphabet."""
    key = (n_bytes, seed)
    if key not in _cache:
        text = generate(n_bytes, seed)
        alphabet = "".join(sorted(set(text)))
        lut = np.full(128, -1, dtype=np.int16)
        for i, ch in enumerate(alphabet):
            lut[ord(ch)] = i
        ids = lut[np.frombuffer(text.encode("ascii"), dtype=np.uint8)]
        cut = int(len(ids) * TRAIN_FRACTION)
        _cache[key] = (ids[:cut].astype(np.int64), ids[cut:].astype(np.int64), alphabet)
    return _cache[key]
