"""Conversions between codepoint spans, byte spans, and token spans.

Dataset annotations index answers by codepoint; byte-level encodings index
by byte. These helpers translate between the two and locate the token runs
that realize a byte range or an id subsequence.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Sequence

from .bpe import Encoding

EXACT = "exact"
EXPANDED = "expanded"
FAILED = "failed"


@dataclass(frozen=True)
class CharSpan:
    """A codepoint span, inclusive- or exclusive-end per the flag."""

    start: int
    end: int
    inclusive_end: bool = False

    def exclusive(self) -> tuple[int, int]:
        return (self.start, self.end + 1 if self.inclusive_end else self.end)


@dataclass(frozen=True)
class TokenSpan:
    """A half-open token-index range [start, end)."""

    start: int
    end: int

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class AlignmentResult:
    """Outcome of mapping a byte range onto token boundaries.

    ``exact``: some token run covers precisely the requested bytes.
    ``expanded``: the minimal covering run overshoots on a side; the
    requested range is then a proper subset of the run's byte range.
    ``failed``: empty encoding or empty request. ``decoded`` renders the
    covered bytes (replacement characters if a token boundary happens to
    split a multi-byte codepoint).
    """

    kind: str
    span: TokenSpan | None = None
    decoded: str | None = None


def codepoint_span_to_byte_span(text: str, span: CharSpan) -> tuple[int, int]:
    """Convert a codepoint span into the half-open UTF-8 byte range."""
    start, end = span.exclusive()
    if not (0 <= start <= end <= len(text)):
        raise ValueError(
            f"span {start}:{end} out of range for text of {len(text)} codepoints"
        )
    byte_start = len(text[:start].encode("utf-8"))
    byte_end = byte_start + len(text[start:end].encode("utf-8"))
    return (byte_start, byte_end)


def token_slice_for_span(enc: Encoding, byte_span: tuple[int, int]) -> AlignmentResult:
    """Find the minimal token run covering a byte range of the source.

    Returns kind ``exact`` when the run's byte range equals the request,
    ``expanded`` when it overshoots, ``failed`` for an empty encoding or
    an empty request.
    """
    start, end = byte_span
    if not (0 <= start <= end <= enc.source_len_bytes):
        raise ValueError(
            f"byte span {start}:{end} out of range for source of "
            f"{enc.source_len_bytes} bytes"
        )
    if not enc.ids or start == end:
        return AlignmentResult(kind=FAILED)

    # offsets partition the source, so binary search on both edges
    lo = bisect_right(enc.offsets, start, key=lambda o: o[1])
    hi = bisect_left(enc.offsets, end, key=lambda o: o[0])
    span = TokenSpan(lo, hi)
    cover_start = enc.offsets[lo][0]
    cover_end = enc.offsets[hi - 1][1]
    kind = EXACT if (cover_start == start and cover_end == end) else EXPANDED
    decoded = enc.source_bytes[cover_start:cover_end].decode("utf-8", errors="replace")
    return AlignmentResult(kind=kind, span=span, decoded=decoded)


def find_subsequence(
    haystack: Sequence[int], needle: Sequence[int]
) -> TokenSpan | None:
    """Return the leftmost contiguous match of needle in haystack, if any.

    An empty needle matches at position 0.
    """
    m = len(needle)
    if m == 0:
        return TokenSpan(0, 0)
    n = len(haystack)
    if m > n:
        return None
    target = tuple(needle)
    first = target[0]
    for i in range(n - m + 1):
        if haystack[i] == first and tuple(haystack[i : i + m]) == target:
            return TokenSpan(i, i + m)
    return None
