"""Edit distance and character/word/line recognition rates.

CRR = (nCharacters - sum EditDistance(RT, GT)) / nCharacters
WRR = nWordsCorrectlyRecognized / nWords
LRR = nTextImagesCorrectlyRecognized / nImages
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence


def edit_distance(a: Sequence, b: Sequence) -> int:
    """Levenshtein distance with unit costs (strings compare by code point)."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def matched_words(rt_words: Sequence[str], gt_words: Sequence[str]) -> int:
    """GT words reproduced exactly, counted along an optimal word-level
    edit alignment (ties prefer more matches)."""
    n, m = len(gt_words), len(rt_words)
    # cost, -matches; lexicographic min
    dp = [[(j, 0) for j in range(m + 1)]]
    for i in range(1, n + 1):
        row = [(i, 0)]
        for j in range(1, m + 1):
            same = gt_words[i - 1] == rt_words[j - 1]
            diag = dp[i - 1][j - 1]
            cands = [
                (diag[0] + (0 if same else 1), diag[1] - (1 if same else 0)),
                (dp[i - 1][j][0] + 1, dp[i - 1][j][1]),
                (row[j - 1][0] + 1, row[j - 1][1]),
            ]
            row.append(min(cands))
        dp.append(row)
    return -dp[n][m][1]


@dataclass(frozen=True)
class EvalPair:
    rt: str
    gt: str

    def __post_init__(self):
        object.__setattr__(self, "rt", unicodedata.normalize("NFC", self.rt))
        object.__setattr__(self, "gt", unicodedata.normalize("NFC", self.gt))


@dataclass(frozen=True)
class EvalReport:
    n_characters: int
    sum_edit_distance: int
    n_words: int
    n_words_correct: int
    n_images: int
    n_images_correct: int

    @property
    def crr(self) -> Fraction:
        if self.n_characters == 0:
            return Fraction(1) if self.sum_edit_distance == 0 else Fraction(-self.sum_edit_distance)
        return Fraction(self.n_characters - self.sum_edit_distance, self.n_characters)

    @property
    def wrr(self) -> Fraction:
        return Fraction(self.n_words_correct, self.n_words) if self.n_words else Fraction(1)

    @property
    def lrr(self) -> Fraction:
        return Fraction(self.n_images_correct, self.n_images)

    def as_row(self) -> dict[str, object]:
        return {
            "n_characters": self.n_characters,
            "sum_edit_distance": self.sum_edit_distance,
            "n_words": self.n_words,
            "n_words_correct": self.n_words_correct,
            "n_images": self.n_images,
            "n_images_correct": self.n_images_correct,
            "crr": float(self.crr),
            "wrr": float(self.wrr),
            "lrr": float(self.lrr),
        }


def _words(text: str) -> list[str]:
    return [w for w in text.split(" ") if w]


def evaluate(pairs: Iterable[EvalPair], granularity: str = "word") -> EvalReport:
    """Aggregate recognition statistics.

    At ``word`` granularity each image holds one word, so WRR equals LRR.
    At ``line`` granularity words are space-separated tokens, matched
    along a word-level edit alignment.
    """
    if granularity not in ("word", "line"):
        raise ValueError(f"granularity must be 'word' or 'line', got {granularity!r}")
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot evaluate an empty list of pairs")
    n_chars = sum_ed = n_words = words_ok = images_ok = 0
    for p in pairs:
        n_chars += len(p.gt)
        sum_ed += edit_distance(p.rt, p.gt)
        images_ok += p.rt == p.gt
        if granularity == "word":
            n_words += 1
            words_ok += p.rt == p.gt
        else:
            gt_words = _words(p.gt)
            n_words += len(gt_words)
            words_ok += matched_words(_words(p.rt), gt_words)
    return EvalReport(n_chars, sum_ed, n_words, words_ok, len(pairs), images_ok)
