"""Connectionist temporal classification.

Logits are ``(T, C)`` arrays of unnormalized per-frame scores where
class 0 is the blank and classes ``1..C-1`` are alphabet characters.
All lattice arithmetic is done in the log domain.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import log_softmax, logsumexp

BLANK = 0


class InfeasibleTargetError(ValueError):
    """The target cannot be emitted in the available number of frames."""


class AlphabetError(ValueError):
    def __init__(self, missing: Iterable[str]):
        self.missing = sorted(set(missing))
        names = ", ".join(f"{c!r} (U+{ord(c):04X})" for c in self.missing)
        super().__init__(f"characters missing from alphabet: {names}")


class Alphabet:
    """Ordered label characters; class index = position + 1."""

    def __init__(self, chars: Sequence[str]):
        chars = list(chars)
        if not chars:
            raise ValueError("alphabet must not be empty")
        for c in chars:
            if len(c) != 1:
                raise ValueError(f"alphabet entries must be single characters, got {c!r}")
        if len(set(chars)) != len(chars):
            raise ValueError("alphabet contains duplicate characters")
        self.chars = tuple(chars)
        self._index = {c: i + 1 for i, c in enumerate(self.chars)}

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "Alphabet":
        return cls(sorted(set("".join(labels))))

    @classmethod
    def load(cls, path: str | Path) -> "Alphabet":
        text = Path(path).read_text(encoding="utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls([ln.rstrip("\r") for ln in lines])

    def save(self, path: str | Path) -> None:
        Path(path).write_text("".join(c + "\n" for c in self.chars), encoding="utf-8")

    @property
    def num_classes(self) -> int:
        """Number of output classes including the blank."""
        return len(self.chars) + 1

    def __len__(self) -> int:
        return len(self.chars)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Alphabet) and self.chars == other.chars

    def __contains__(self, char: str) -> bool:
        return char in self._index

    def missing(self, labels: Iterable[str]) -> list[str]:
        return sorted({c for label in labels for c in label if c not in self._index})

    def encode(self, text: str) -> list[int]:
        missing = [c for c in text if c not in self._index]
        if missing:
            raise AlphabetError(missing)
        return [self._index[c] for c in text]

    def decode(self, indices: Iterable[int]) -> str:
        return "".join(self.chars[i - 1] for i in indices if i != BLANK)


def collapse(path: Iterable[int]) -> tuple[int, ...]:
    """Merge adjacent repeats, then delete blanks."""
    out = []
    prev = None
    for k in path:
        if k != prev and k != BLANK:
            out.append(int(k))
        prev = k
    return tuple(out)


def min_frames(target: Sequence[int]) -> int:
    """Frames needed to emit ``target``: one per label plus a blank
    between each pair of equal neighbours."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def _extend(target: Sequence[int]) -> np.ndarray:
    ext = np.zeros(2 * len(target) + 1, dtype=np.int64)
    ext[1::2] = target
    return ext


def _skip_allowed(ext: np.ndarray) -> np.ndarray:
    # s may be entered from s-2 when it is a label different from the one at s-2.
    allowed = np.zeros(len(ext), dtype=bool)
    allowed[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])
    return allowed


@dataclass
class Lattice:
    """Forward/backward variables over the blank-extended target.

    ``alpha[t, s]`` is the log probability of all path prefixes ending in
    state ``s`` at frame ``t`` (emission at ``t`` included); ``beta[t, s]``
    is the log probability of completing the path from state ``s`` at ``t``
    (emission at ``t`` excluded).
    """

    extended: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    log_probs: np.ndarray

    @property
    def log_likelihood(self) -> float:
        return float(logsumexp(self.alpha[-1, -2:]) if len(self.extended) > 1 else self.alpha[-1, -1])

    @property
    def log_likelihood_beta(self) -> float:
        # Paths start in state 0 (blank) or state 1 (first label).
        first = self.beta[0, :2] + self.log_probs[0, self.extended[:2]]
        return float(logsumexp(first))

    def posteriors(self) -> np.ndarray:
        """Per-frame class posteriors ``(T, C)``; each row sums to 1."""
        T, C = self.log_probs.shape
        state_post = np.exp(self.alpha + self.beta - self.log_likelihood)
        post = np.zeros((T, C))
        for s, k in enumerate(self.extended):
            post[:, k] += state_post[:, s]
        return post


def lattice(logits: np.ndarray, target: Sequence[int]) -> Lattice:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2:
        raise ValueError(f"logits must be (T, C), got shape {logits.shape}")
    T, C = logits.shape
    target = [int(k) for k in target]
    if any(k <= BLANK or k >= C for k in target):
        raise ValueError(f"target labels must lie in 1..{C - 1}: {target}")
    need = min_frames(target)
    if T < need:
        raise InfeasibleTargetError(f"target of length {len(target)} needs {need} frames, got {T}")

    logp = log_softmax(logits, axis=1)
    ext = _extend(target)
    S = len(ext)
    skip = _skip_allowed(ext)
    emit = logp[:, ext]

    alpha = np.full((T, S), -np.inf)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        acc = prev.copy()
        np.logaddexp(acc[1:], prev[:-1], out=acc[1:])
        np.logaddexp(acc[2:], np.where(skip[2:], prev[:-2], -np.inf), out=acc[2:])
        alpha[t] = acc + emit[t]

    beta = np.full((T, S), -np.inf)
    beta[-1, -1] = 0.0
    if S > 1:
        beta[-1, -2] = 0.0
    skip_from = np.zeros(S, dtype=bool)
    skip_from[:-2] = skip[2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1] + emit[t + 1]
        acc = nxt.copy()
        np.logaddexp(acc[:-1], nxt[1:], out=acc[:-1])
        np.logaddexp(acc[:-2], np.where(skip_from[:-2], nxt[2:], -np.inf), out=acc[:-2])
        beta[t] = acc
    return Lattice(ext, alpha, beta, logp)


def ctc_loss(logits: np.ndarray, target: Sequence[int]) -> tuple[float, np.ndarray]:
    """Negative log likelihood of ``target`` and its gradient w.r.t. logits."""
    lat = lattice(logits, target)
    loss = -lat.log_likelihood
    grad = np.exp(lat.log_probs) - lat.posteriors()
    return loss, grad


def greedy_decode(logits: np.ndarray) -> tuple[int, ...]:
    # np.argmax returns the first maximum, i.e. ties go to the lower class.
    return collapse(np.argmax(logits, axis=1).tolist())


def beam_decode(logits: np.ndarray, width: int) -> tuple[int, ...]:
    """Prefix beam search over collapsed labelings.

    Each prefix tracks the log probability of frame paths that collapse
    to it and end in a blank (``pb``) or in its last label (``pnb``).
    With a width at least the number of reachable prefixes the search is
    exact.
    """
    if width < 1:
        raise ValueError(f"beam width must be >= 1, got {width}")
    logp = log_softmax(np.asarray(logits, dtype=np.float64), axis=1)
    T, C = logp.shape
    NEG = -np.inf
    beams: dict[tuple[int, ...], tuple[float, float]] = {(): (0.0, NEG)}
    for t in range(T):
        row = logp[t]
        nxt: dict[tuple[int, ...], list[float]] = {}

        def add(prefix, pb=NEG, pnb=NEG):
            cur = nxt.get(prefix)
            if cur is None:
                nxt[prefix] = [pb, pnb]
            else:
                cur[0] = np.logaddexp(cur[0], pb)
                cur[1] = np.logaddexp(cur[1], pnb)

        for prefix, (pb, pnb) in beams.items():
            total = np.logaddexp(pb, pnb)
            add(prefix, pb=total + row[BLANK])
            if prefix:
                add(prefix, pnb=pnb + row[prefix[-1]])
            for k in range(1, C):
                ext = prefix + (k,)
                if prefix and prefix[-1] == k:
                    add(ext, pnb=pb + row[k])
                else:
                    add(ext, pnb=total + row[k])
        ranked = sorted(nxt.items(), key=lambda kv: (-np.logaddexp(*kv[1]), kv[0]))
        beams = {p: (v[0], v[1]) for p, v in ranked[:width]}
    best = max(beams.items(), key=lambda kv: (np.logaddexp(*kv[1]), tuple(-k for k in kv[0])))
    return best[0]


def labeling_log_prob(logits: np.ndarray, labeling: Sequence[int]) -> float:
    """Total log probability of ``labeling``; ``-inf`` when infeasible."""
    try:
        return lattice(logits, labeling).log_likelihood
    except InfeasibleTargetError:
        return -np.inf


MAX_ORACLE_FRAMES = 8
MAX_ORACLE_LABELS = 3


@functools.lru_cache(maxsize=64)
def _enumerate_paths(T: int, C: int) -> tuple[np.ndarray, dict[tuple[int, ...], np.ndarray]]:
    paths = np.array(list(itertools.product(range(C), repeat=T)), dtype=np.int64).reshape(-1, T)
    groups: dict[tuple[int, ...], list[int]] = {}
    for i, p in enumerate(paths.tolist()):
        groups.setdefault(collapse(p), []).append(i)
    return paths, {k: np.array(v) for k, v in groups.items()}


def path_log_probs(logits: np.ndarray) -> tuple[np.ndarray, dict[tuple[int, ...], np.ndarray]]:
    """Log probability of every frame path, plus paths grouped by collapse."""
    logits = np.asarray(logits, dtype=np.float64)
    T, C = logits.shape
    if T > MAX_ORACLE_FRAMES or C - 1 > MAX_ORACLE_LABELS:
        raise ValueError(
            f"instance too large to enumerate: T={T} (max {MAX_ORACLE_FRAMES}), "
            f"labels={C - 1} (max {MAX_ORACLE_LABELS})"
        )
    logp = log_softmax(logits, axis=1)
    paths, groups = _enumerate_paths(T, C)
    return logp[np.arange(T), paths].sum(axis=1), groups


def brute_force_loss(logits: np.ndarray, target: Sequence[int]) -> float:
    """Negative log likelihood by summing over every frame path.

    Returns ``inf`` when no path collapses to ``target``.
    """
    lp, groups = path_log_probs(logits)
    idx = groups.get(tuple(int(k) for k in target))
    if idx is None:
        return float("inf")
    return float(-logsumexp(lp[idx]))
