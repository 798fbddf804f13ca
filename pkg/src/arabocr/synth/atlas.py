"""Procedural glyph atlas.

Each letter gets a deterministic stick-figure body built from a few
random walks on a small node grid that rests on a shared baseline.
Contextual forms add baseline connectors on the joining side(s): a glyph
that joins its left neighbour gets a connector reaching its left edge,
one joined from the right gets one reaching its right edge, so two
joined glyphs placed edge to edge touch on the baseline row.

Outlines are line segments in atlas units (a cell is 16 units tall) and
are rasterized at any scale and stroke thickness. At scale 1 and
thickness 1 the rasterization is the atlas bitmap itself.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from arabocr.shaper import (
    ALEF_FAMILY,
    LAM,
    SPACE,
    Form,
    JoiningClass,
    joining_class,
    supported_characters,
)

ATLAS_HEIGHT = 16
BASELINE = 11
CONNECTOR = 2.0
NODE_ROWS = (2, 5, 8, 11, 14)
NODE_STEP = 3
MIN_HAMMING = 6

Segment = tuple[float, float, float, float]  # x0, y0, x1, y1


class GlyphMissingError(KeyError):
    def __init__(self, base: str, form: Form):
        self.base, self.form = base, form
        super().__init__(f"no glyph for {base!r} in {form.value} form")

    def __str__(self) -> str:
        return self.args[0]


class GlyphRasterizer(Protocol):
    """Anything that can draw one contextual glyph as a boolean mask.

    All masks for a given (scale, thickness) must share the same height
    and put the baseline on the same row.
    """

    def glyph(self, base: str, form: Form, scale: float, thickness: int) -> np.ndarray: ...

    def space_width(self, scale: float) -> int: ...


@dataclass(frozen=True)
class Outline:
    segments: tuple[Segment, ...]


def legal_forms(base: str) -> tuple[Form, ...]:
    if len(base) > 1:
        return (Form.ISOLATED, Form.FINAL)
    jc = joining_class(base)
    if jc is JoiningClass.DUAL:
        return tuple(Form)
    if jc is JoiningClass.RIGHT:
        return (Form.ISOLATED, Form.FINAL)
    return (Form.ISOLATED,)


def draw(segments, scale: float, thickness: int) -> np.ndarray:
    """Rasterize segments with square pen stamps, trimmed horizontally."""
    height = int(np.ceil(ATLAS_HEIGHT * scale)) + thickness
    max_x = max(max(s[0], s[2]) for s in segments)
    canvas = np.zeros((height, int(np.ceil(max_x * scale)) + thickness + 1), dtype=bool)
    for x0, y0, x1, y1 in segments:
        n = int(np.ceil(max(abs(x1 - x0), abs(y1 - y0)) * scale * 4)) + 1
        for u in np.linspace(0.0, 1.0, n):
            px = int(round((x0 + u * (x1 - x0)) * scale))
            py = int(round((y0 + u * (y1 - y0)) * scale))
            canvas[py : py + thickness, px : px + thickness] = True
    cols = np.flatnonzero(canvas.any(axis=0))
    return canvas[:, cols[0] : cols[-1] + 1]


def _random_body(rng: np.random.Generator) -> tuple[int, list[Segment]]:
    ncols = int(rng.integers(2, 4))
    width = (ncols - 1) * NODE_STEP
    base_row = NODE_ROWS.index(BASELINE)
    edges: set[tuple[tuple[int, int], tuple[int, int]]] = set()
    for _ in range(int(rng.integers(2, 4))):
        node = (int(rng.integers(0, ncols)), base_row)
        for _ in range(int(rng.integers(1, 5))):
            c, r = node
            moves = [(c + dc, r + dr) for dc, dr in ((1, 0), (-1, 0), (0, 1), (0, -1))]
            moves = [(mc, mr) for mc, mr in moves if 0 <= mc < ncols and 0 <= mr < len(NODE_ROWS) and mr != base_row]
            moves += [(mc, mr) for mc, mr in [(c, r - 1), (c, r + 1)] if 0 <= mr < len(NODE_ROWS)]
            nxt = moves[int(rng.integers(0, len(moves)))]
            edges.add(tuple(sorted((node, nxt))))
            node = nxt
    segs: list[Segment] = [(0.0, BASELINE, float(width), BASELINE)]
    for (c0, r0), (c1, r1) in sorted(edges):
        segs.append((c0 * NODE_STEP, NODE_ROWS[r0], c1 * NODE_STEP, NODE_ROWS[r1]))
    return width, segs


class ProceduralAtlas:
    """Deterministic built-in glyph source covering every supported letter
    and the LAM+ALEF ligatures."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self._bodies: dict[str, tuple[int, list[Segment]]] = {}
        self._cache: dict[tuple, np.ndarray] = {}
        ref: list[np.ndarray] = []
        bases = [c for c in supported_characters() if c != SPACE] + [LAM + a for a in sorted(ALEF_FAMILY)]
        for base in bases:
            attempt = 0
            while True:
                key = f"{seed}:{base}:{attempt}".encode("utf-8")
                width, segs = _random_body(np.random.default_rng(zlib.crc32(key)))
                bmp = self._padded(draw(segs, 1.0, 1))
                if all(np.count_nonzero(bmp != other) >= MIN_HAMMING for other in ref):
                    break
                attempt += 1
            ref.append(bmp)
            self._bodies[base] = (width, segs)

    @staticmethod
    def _padded(bmp: np.ndarray) -> np.ndarray:
        out = np.zeros((bmp.shape[0], 3 * NODE_STEP + 1), dtype=bool)
        out[:, : bmp.shape[1]] = bmp
        return out

    def bases(self) -> list[str]:
        return list(self._bodies)

    def outline(self, base: str, form: Form) -> Outline:
        if base not in self._bodies or form not in legal_forms(base):
            raise GlyphMissingError(base, form)
        width, body = self._bodies[base]
        # Connector on the right edge joins the previous letter, on the left the next one.
        joins_right = form in (Form.FINAL, Form.MEDIAL)
        joins_left = form in (Form.INITIAL, Form.MEDIAL)
        shift = CONNECTOR if joins_left else 0.0
        segs = [(x0 + shift, y0, x1 + shift, y1) for x0, y0, x1, y1 in body]
        if joins_left:
            segs.append((0.0, BASELINE, shift, BASELINE))
        if joins_right:
            segs.append((shift + width, BASELINE, shift + width + CONNECTOR, BASELINE))
        return Outline(tuple(segs))

    def glyph(self, base: str, form: Form, scale: float = 1.0, thickness: int = 1) -> np.ndarray:
        key = (base, form, round(scale, 6), thickness)
        if key not in self._cache:
            self._cache[key] = draw(self.outline(base, form).segments, scale, thickness)
        return self._cache[key]

    def space_width(self, scale: float) -> int:
        return max(2, int(round(6 * scale)))


_DEFAULT: ProceduralAtlas | None = None


def default_atlas() -> ProceduralAtlas:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = ProceduralAtlas()
    return _DEFAULT
