"""Shared test utilities: tokenizer builders and independent oracles.

The oracles here deliberately use brute-force algorithms structured
differently from the library code so agreement is meaningful.
"""

from __future__ import annotations

import io
import json
import random
from fractions import Fraction

from tokfix.align import TokenSpan
from tokfix.bpe import Encoding, Tokenizer, byte_to_unit, load_tokenizer


def build_vocab(merges: list[tuple[str, str]], extra_tokens: tuple[str, ...] = ()) -> dict[str, int]:
    units = [byte_to_unit()[b] for b in range(256)]
    vocab = {u: i for i, u in enumerate(units)}
    for left, right in merges:
        vocab.setdefault(left + right, len(vocab))
    for token in extra_tokens:
        vocab.setdefault(token, len(vocab))
    return vocab


def merges_text(merges: list[tuple[str, str]]) -> str:
    return "#version: test\n" + "\n".join(f"{l} {r}" for l, r in merges) + "\n"


def make_tokenizer(merges: list[tuple[str, str]], extra_tokens: tuple[str, ...] = ()) -> Tokenizer:
    vocab = build_vocab(merges, extra_tokens)
    return load_tokenizer(
        io.StringIO(json.dumps(vocab)), io.StringIO(merges_text(merges))
    )


def bpe_oracle_units(tok: Tokenizer, segment: str) -> list[str]:
    """One-step-at-a-time merge oracle.

    Each step rescans the whole merge table in priority order, applies the
    first rule found anywhere (at its leftmost position), and starts over.
    """
    units = [tok.byte_map[b] for b in segment.encode("utf-8")]
    while True:
        applied = False
        for left, right in tok.merges:
            for i in range(len(units) - 1):
                if units[i] == left and units[i + 1] == right:
                    units[i : i + 2] = [left + right]
                    applied = True
                    break
            if applied:
                break
        if not applied:
            return units


def bpe_oracle_ids(tok: Tokenizer, text: str) -> list[int]:
    """Oracle encoding for single-segment texts (letters-only strings)."""
    return [tok.vocab[u] for u in bpe_oracle_units(tok, text)]


def naive_find(haystack, needle) -> TokenSpan | None:
    """Double-loop subsequence scan."""
    n, m = len(haystack), len(needle)
    if m == 0:
        return TokenSpan(0, 0)
    for i in range(n - m + 1):
        ok = True
        for j in range(m):
            if haystack[i + j] != needle[j]:
                ok = False
                break
        if ok:
            return TokenSpan(i, i + m)
    return None


def slice_oracle(enc: Encoding, byte_span: tuple[int, int]):
    """Enumerate all O(n^2) token sub-ranges; pick an exact cover if one
    exists, else the minimal cover. Returns (kind, (start, end)) or
    ("failed", None)."""
    start, end = byte_span
    if not enc.ids or start == end:
        return ("failed", None)
    n = len(enc.ids)
    best = None
    for i in range(n):
        for j in range(i + 1, n + 1):
            cover_start = enc.offsets[i][0]
            cover_end = enc.offsets[j - 1][1]
            if cover_start <= start and end <= cover_end:
                if (cover_start, cover_end) == (start, end):
                    return ("exact", (i, j))
                if best is None or (j - i) < (best[1] - best[0]):
                    best = (i, j)
    assert best is not None
    return ("expanded", best)


def random_toy_tokenizer(rng: random.Random, alphabet: str = "abc") -> Tokenizer:
    """A random merge table over a tiny alphabet, shuffled so priorities
    need not respect construction order."""
    pool = list(alphabet)
    merges: list[tuple[str, str]] = []
    seen: set[tuple[str, str]] = set()
    for _ in range(rng.randrange(3, 14)):
        left = rng.choice(pool)
        right = rng.choice(pool)
        if len(left) + len(right) > 6 or (left, right) in seen:
            continue
        seen.add((left, right))
        merges.append((left, right))
        pool.append(left + right)
    rng.shuffle(merges)
    return make_tokenizer(merges)


def random_letter_text(rng: random.Random, alphabet: str = "abc", max_len: int = 12) -> str:
    return "".join(rng.choice(alphabet) for _ in range(rng.randrange(1, max_len + 1)))


def f1_oracle(pred_tokens: list[str], gold_tokens: list[str]) -> Fraction:
    """Exact-arithmetic token-overlap F1 over pre-normalized token lists."""
    if not pred_tokens and not gold_tokens:
        return Fraction(1)
    overlap = 0
    remaining = list(gold_tokens)
    for token in pred_tokens:
        if token in remaining:
            remaining.remove(token)
            overlap += 1
    if overlap == 0:
        return Fraction(0)
    precision = Fraction(overlap, len(pred_tokens))
    recall = Fraction(overlap, len(gold_tokens))
    return 2 * precision * recall / (precision + recall)
