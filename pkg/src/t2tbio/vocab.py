"""Subword vocabulary: greedy pair-merge training, encode/decode, sentinels.

The vocabulary is a flat list of piece strings. Ids 0/1/2 are pad, eos, unk;
the top ``num_sentinels`` ids are reserved span-mask sentinels laid out in
descending order (sentinel k has id ``size - 1 - k``) and rendered as the
literal text ``<extra_id_k>``. Everything in between is learned from the
corpus, starting from the single-character alphabet so any training-alphabet
string is always encodable.

Whitespace handling: each space character is rewritten to a private-use
word-boundary marker and the text gets one leading marker, so segmentation
sees word boundaries and decoding can restore the original spacing exactly
(including runs of spaces). Decode maps markers back to spaces and strips the
single leading one.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import VocabError

PAD_ID = 0
EOS_ID = 1
UNK_ID = 2

PAD_PIECE = "<pad>"
EOS_PIECE = "</s>"
UNK_PIECE = "<unk>"

# Word-boundary marker; a private-use codepoint so it never collides with
# ordinary text. Occurrences in input text are treated as spaces.
BOUNDARY = "\ue000"

VOCAB_HEADER_RE = re.compile(r"^t2tbio-vocab v1 size=(\d+) sentinels=(\d+)$")
_SENTINEL_RE = re.compile(r"^<extra_id_(\d+)>$")


def sentinel_piece(k: int) -> str:
    return f"<extra_id_{k}>"


def _is_reserved_piece(piece: str) -> bool:
    return piece in (PAD_PIECE, EOS_PIECE, UNK_PIECE) or _SENTINEL_RE.match(piece) is not None


@dataclass(frozen=True)
class Vocabulary:
    """Immutable subword vocabulary; safe to share across threads."""

    pieces: tuple[str, ...]
    num_sentinels: int
    piece_to_id: dict[str, int] = field(init=False, repr=False, compare=False)
    _max_piece_len: int = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.pieces) < 3 + self.num_sentinels:
            raise VocabError("vocabulary too small for specials and sentinels")
        if self.pieces[:3] != (PAD_PIECE, EOS_PIECE, UNK_PIECE):
            raise VocabError("ids 0..2 must be pad, eos, unk")
        size = len(self.pieces)
        for k in range(self.num_sentinels):
            if self.pieces[size - 1 - k] != sentinel_piece(k):
                raise VocabError(f"sentinel {k} must sit at id {size - 1 - k}")
        mapping: dict[str, int] = {}
        for i, p in enumerate(self.pieces):
            if p in mapping:
                raise VocabError(f"duplicate piece {p!r}")
            mapping[p] = i
        for p in self.learned_pieces():
            if _is_reserved_piece(p):
                raise VocabError(f"reserved string {p!r} among learned pieces")
        object.__setattr__(self, "piece_to_id", mapping)
        learned = self.learned_pieces()
        object.__setattr__(self, "_max_piece_len", max((len(p) for p in learned), default=1))

    @property
    def size(self) -> int:
        return len(self.pieces)

    @property
    def pad_id(self) -> int:
        return PAD_ID

    @property
    def eos_id(self) -> int:
        return EOS_ID

    @property
    def unk_id(self) -> int:
        return UNK_ID

    @property
    def first_sentinel_id(self) -> int:
        """Smallest id in the sentinel block (= size - num_sentinels)."""
        return self.size - self.num_sentinels

    def learned_pieces(self) -> tuple[str, ...]:
        return self.pieces[3 : self.size - self.num_sentinels]

    def is_sentinel(self, token_id: int) -> bool:
        return self.num_sentinels > 0 and token_id >= self.first_sentinel_id

    def sentinel_id(self, k: int) -> int:
        if not 0 <= k < self.num_sentinels:
            raise VocabError(
                f"sentinel index out of range: {k} (vocabulary has {self.num_sentinels})"
            )
        return self.size - 1 - k

    def sentinel_index(self, token_id: int) -> int:
        """Inverse of sentinel_id."""
        if not self.is_sentinel(token_id):
            raise VocabError(f"id {token_id} is not a sentinel")
        return self.size - 1 - token_id

    def encode(self, text: str) -> list[int]:
        """Greedy longest-match segmentation; unknown characters map to unk."""
        if not text:
            return []
        normalized = BOUNDARY + text.replace(" ", BOUNDARY)
        ids: list[int] = []
        learned_floor = 3
        learned_ceil = self.size - self.num_sentinels
        i = 0
        n = len(normalized)
        while i < n:
            match_id = None
            for length in range(min(self._max_piece_len, n - i), 0, -1):
                cand = self.piece_to_id.get(normalized[i : i + length])
                if cand is not None and learned_floor <= cand < learned_ceil:
                    match_id = cand
                    i += length
                    break
            if match_id is None:
                match_id = UNK_ID
                i += 1
            ids.append(match_id)
        return ids

    def decode(self, ids: list[int]) -> str:
        """Concatenate pieces, restore spacing; stops at eos, skips pad."""
        parts: list[str] = []
        for token_id in ids:
            if not 0 <= token_id < self.size:
                raise VocabError(f"id out of range: {token_id} (vocab size {self.size})")
            if token_id == PAD_ID:
                continue
            if token_id == EOS_ID:
                break
            parts.append(self.pieces[token_id])
        text = "".join(parts).replace(BOUNDARY, " ")
        if text.startswith(" "):
            text = text[1:]
        return text


def train_vocab(corpus, target_size: int, num_sentinels: int = 100) -> Vocabulary:
    """Train a greedy pair-merge subword vocabulary.

    Starts from the single-character alphabet of the (boundary-normalized)
    corpus and repeatedly merges the most frequent adjacent pair, breaking
    frequency ties by lexicographically smallest pair. Merges never cross word
    boundaries and never produce a reserved piece string. Stops at
    ``target_size`` total pieces or when no merge candidates remain, so the
    returned size is at most ``target_size``.
    """
    lines = list(corpus)
    if not lines or all(line == "" for line in lines):
        raise VocabError("empty corpus")
    if num_sentinels < 0:
        raise VocabError("num_sentinels must be non-negative")

    # word unit -> frequency; each unit starts with the boundary marker
    units: dict[tuple[str, ...], int] = {}
    alphabet: set[str] = set()
    for line in lines:
        if line == "":
            continue
        normalized = BOUNDARY + line.replace(" ", BOUNDARY)
        alphabet.update(normalized)
        for unit in _split_units(normalized):
            units[unit] = units.get(unit, 0) + 1

    floor = 3 + num_sentinels + len(alphabet)
    if target_size < floor:
        raise VocabError(
            f"vocab size below floor: target_size={target_size} but the minimum is "
            f"{floor} (3 specials + {num_sentinels} sentinels + {len(alphabet)} characters)"
        )

    learned: list[str] = sorted(alphabet)
    budget = target_size - 3 - num_sentinels - len(learned)
    banned: set[tuple[str, str]] = set()
    working = {tuple(unit): freq for unit, freq in units.items()}

    while budget > 0:
        pair_counts: dict[tuple[str, str], int] = {}
        for unit, freq in working.items():
            for a, b in zip(unit, unit[1:]):
                pair_counts[(a, b)] = pair_counts.get((a, b), 0) + freq
        candidates = {p: c for p, c in pair_counts.items() if p not in banned}
        if not candidates:
            break
        # highest count first, then lexicographically smallest pair
        best = min(candidates.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merged = best[0] + best[1]
        if _is_reserved_piece(merged):
            banned.add(best)
            continue
        working = {_apply_merge(unit, best, merged): freq for unit, freq in working.items()}
        learned.append(merged)
        budget -= 1

    pieces = [PAD_PIECE, EOS_PIECE, UNK_PIECE] + learned
    pieces += [sentinel_piece(k) for k in range(num_sentinels - 1, -1, -1)]
    return Vocabulary(pieces=tuple(pieces), num_sentinels=num_sentinels)


def _split_units(normalized: str) -> list[tuple[str, ...]]:
    """Split boundary-normalized text into per-word symbol tuples."""
    out: list[tuple[str, ...]] = []
    start = 0
    for i in range(1, len(normalized)):
        if normalized[i] == BOUNDARY:
            out.append(tuple(normalized[start:i]))
            start = i
    out.append(tuple(normalized[start:]))
    return out


def _apply_merge(unit: tuple[str, ...], pair: tuple[str, str], merged: str) -> tuple[str, ...]:
    if len(unit) < 2:
        return unit
    out: list[str] = []
    i = 0
    while i < len(unit):
        if i + 1 < len(unit) and unit[i] == pair[0] and unit[i + 1] == pair[1]:
            out.append(merged)
            i += 2
        else:
            out.append(unit[i])
            i += 1
    return tuple(out)


def _escape(piece: str) -> str:
    return piece.replace("\\", "\\\\").replace("\n", "\\n").replace("\r", "\\r")


def _unescape(line: str) -> str:
    out: list[str] = []
    i = 0
    while i < len(line):
        ch = line[i]
        if ch == "\\" and i + 1 < len(line):
            nxt = line[i + 1]
            if nxt == "n":
                out.append("\n")
                i += 2
                continue
            if nxt == "r":
                out.append("\r")
                i += 2
                continue
            if nxt == "\\":
                out.append("\\")
                i += 2
                continue
        out.append(ch)
        i += 1
    return "".join(out)


def save_vocab(v: Vocabulary, path) -> None:
    """Write 't2tbio-vocab v1' format: header line, then one piece per id.

    Newlines/CRs/backslashes inside pieces are backslash-escaped so the file
    stays strictly line-oriented.
    """
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"t2tbio-vocab v1 size={v.size} sentinels={v.num_sentinels}\n")
        for piece in v.pieces:
            f.write(_escape(piece) + "\n")


def load_vocab(path) -> Vocabulary:
    with open(path, encoding="utf-8") as f:
        header = f.readline().rstrip("\n")
        m = VOCAB_HEADER_RE.match(header)
        if not m:
            raise VocabError(f"bad vocabulary header: {header!r}")
        size, sentinels = int(m.group(1)), int(m.group(2))
        pieces = [_unescape(line.rstrip("\n")) for line in f]
    if len(pieces) != size:
        raise VocabError(f"vocabulary file lists {len(pieces)} pieces, header says {size}")
    return Vocabulary(pieces=tuple(pieces), num_sentinels=sentinels)
