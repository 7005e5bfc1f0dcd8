"""Shared test utilities: hand-built vocabularies and random example builders."""

from __future__ import annotations

from t2tbio.rng import SplitMix64
from t2tbio.task_codec import EntitySpan
from t2tbio.vocab import BOUNDARY, EOS_PIECE, PAD_PIECE, UNK_PIECE, Vocabulary, sentinel_piece


def word_vocab(words: list[str], num_sentinels: int = 8) -> Vocabulary:
    """Vocabulary whose learned pieces are exactly the given whole words, so
    every word encodes to a single token."""
    seen = []
    for w in words:
        piece = BOUNDARY + w
        if piece not in seen:
            seen.append(piece)
    pieces = [PAD_PIECE, EOS_PIECE, UNK_PIECE] + seen
    pieces += [sentinel_piece(k) for k in range(num_sentinels - 1, -1, -1)]
    return Vocabulary(pieces=tuple(pieces), num_sentinels=num_sentinels)


def random_token_sequence(rng: SplitMix64, length: int, v: Vocabulary) -> list[int]:
    """Random non-reserved token ids valid for v."""
    lo = 3
    hi = v.size - v.num_sentinels
    return [lo + rng.next_below(hi - lo) for _ in range(length)]


def random_sentence(rng: SplitMix64, n_words: int, alphabet: list[str]) -> list[str]:
    return [alphabet[rng.next_below(len(alphabet))] for _ in range(n_words)]


def random_spans(rng: SplitMix64, n_words: int, max_spans: int, entity_type: str) -> list[EntitySpan]:
    """Up to max_spans sorted, non-overlapping spans over n_words words."""
    spans = []
    pos = 0
    for _ in range(max_spans):
        if pos >= n_words:
            break
        start = pos + rng.next_below(n_words - pos)
        end = start + rng.next_below(min(3, n_words - start))
        spans.append(EntitySpan(start_word=start, end_word=end, entity_type=entity_type))
        pos = end + 2  # leave a gap so spans stay non-adjacent-safe and non-overlapping
    k = rng.next_below(len(spans) + 1) if spans else 0
    return spans[:k]
