"""Contextual shaping of Arabic text.

Arabic letters change shape with their position in a connected run
(isolated, initial, medial, final). A letter joins its left neighbour
(the next letter in logical order) only if it is dual-joining and the
neighbour can accept a join from the right. Six of the 28 base letters
are right-joining only, so each of them ends a *paw* (part of an Arabic
word). LAM followed by an ALEF-family letter is drawn as one mandatory
ligature.

All functions take logical-order text (first-read letter first) and are
pure.
"""

from __future__ import annotations

import enum
import unicodedata
from dataclasses import dataclass


class JoiningClass(enum.Enum):
    DUAL = "D"
    RIGHT = "R"
    NON_JOINING = "U"


class Form(enum.Enum):
    ISOLATED = "isolated"
    INITIAL = "initial"
    MEDIAL = "medial"
    FINAL = "final"


class UnsupportedCharacterError(ValueError):
    """Raised for a codepoint outside the supported repertoire."""

    def __init__(self, char: str, index: int | None = None):
        self.char = char
        self.index = index
        where = f" at index {index}" if index is not None else ""
        super().__init__(f"unsupported character {char!r} (U+{ord(char):04X}){where}")


# The 28 base letters in alphabetical order.
BASE_LETTERS: dict[str, JoiningClass] = {
    "ا": JoiningClass.RIGHT,  # ALEF
    "ب": JoiningClass.DUAL,  # BEH
    "ت": JoiningClass.DUAL,  # TEH
    "ث": JoiningClass.DUAL,  # THEH
    "ج": JoiningClass.DUAL,  # JEEM
    "ح": JoiningClass.DUAL,  # HAH
    "خ": JoiningClass.DUAL,  # KHAH
    "د": JoiningClass.RIGHT,  # DAL
    "ذ": JoiningClass.RIGHT,  # THAL
    "ر": JoiningClass.RIGHT,  # REH
    "ز": JoiningClass.RIGHT,  # ZAIN
    "س": JoiningClass.DUAL,  # SEEN
    "ش": JoiningClass.DUAL,  # SHEEN
    "ص": JoiningClass.DUAL,  # SAD
    "ض": JoiningClass.DUAL,  # DAD
    "ط": JoiningClass.DUAL,  # TAH
    "ظ": JoiningClass.DUAL,  # ZAH
    "ع": JoiningClass.DUAL,  # AIN
    "غ": JoiningClass.DUAL,  # GHAIN
    "ف": JoiningClass.DUAL,  # FEH
    "ق": JoiningClass.DUAL,  # QAF
    "ك": JoiningClass.DUAL,  # KAF
    "ل": JoiningClass.DUAL,  # LAM
    "م": JoiningClass.DUAL,  # MEEM
    "ن": JoiningClass.DUAL,  # NOON
    "ه": JoiningClass.DUAL,  # HEH
    "و": JoiningClass.RIGHT,  # WAW
    "ي": JoiningClass.DUAL,  # YEH
}

EXTRA_LETTERS: dict[str, JoiningClass] = {
    "ء": JoiningClass.NON_JOINING,  # HAMZA
    "آ": JoiningClass.RIGHT,  # ALEF WITH MADDA ABOVE
    "أ": JoiningClass.RIGHT,  # ALEF WITH HAMZA ABOVE
    "إ": JoiningClass.RIGHT,  # ALEF WITH HAMZA BELOW
    "ة": JoiningClass.RIGHT,  # TEH MARBUTA
    "ى": JoiningClass.DUAL,  # ALEF MAKSURA
}

SPACE = " "
LAM = "ل"
ALEF_FAMILY = frozenset("اآأإ")

_JOINING = {**BASE_LETTERS, **EXTRA_LETTERS, SPACE: JoiningClass.NON_JOINING}

# Harakat, superscript alef and tatweel carry no label information.
_STRIPPED = frozenset(
    [chr(c) for c in range(0x064B, 0x0653)] + ["ٰ", "ـ"]
)


def supported_characters() -> list[str]:
    return sorted(_JOINING)


def is_supported(char: str) -> bool:
    return char in _JOINING


def normalize(text: str) -> str:
    """NFC-normalize and drop vowel diacritics and tatweel."""
    text = unicodedata.normalize("NFC", text)
    return "".join(ch for ch in text if ch not in _STRIPPED)


def joining_class(letter: str) -> JoiningClass:
    try:
        return _JOINING[letter]
    except (KeyError, TypeError):
        raise UnsupportedCharacterError(letter) from None


def _joins_left(char: str) -> bool:
    return _JOINING[char] is JoiningClass.DUAL


def _accepts_right(char: str) -> bool:
    return _JOINING[char] in (JoiningClass.DUAL, JoiningClass.RIGHT)


@dataclass(frozen=True)
class ShapedGlyph:
    """One drawn glyph. ``base`` is a single letter, a space, or a
    two-letter ligature such as LAM+ALEF."""

    base: str
    form: Form
    span: tuple[int, int]

    @property
    def is_ligature(self) -> bool:
        return len(self.base) > 1

    @property
    def joins_left(self) -> bool:
        # Initial and medial glyphs connect to the following glyph.
        return self.form in (Form.INITIAL, Form.MEDIAL)


@dataclass(frozen=True)
class Paw:
    glyphs: tuple[ShapedGlyph, ...]

    @property
    def span(self) -> tuple[int, int]:
        return self.glyphs[0].span[0], self.glyphs[-1].span[1]


def _check(text: str) -> None:
    for i, ch in enumerate(text):
        if ch not in _JOINING:
            raise UnsupportedCharacterError(ch, i)


def assign_forms(text: str) -> list[Form]:
    """Contextual form of each character, without ligature substitution."""
    _check(text)
    forms = []
    n = len(text)
    for i, ch in enumerate(text):
        joins_prev = i > 0 and _joins_left(text[i - 1]) and _accepts_right(ch)
        joins_next = i + 1 < n and _joins_left(ch) and _accepts_right(text[i + 1])
        if joins_prev and joins_next:
            forms.append(Form.MEDIAL)
        elif joins_prev:
            forms.append(Form.FINAL)
        elif joins_next:
            forms.append(Form.INITIAL)
        else:
            forms.append(Form.ISOLATED)
    return forms


def apply_ligatures(shaped: list[ShapedGlyph]) -> list[ShapedGlyph]:
    """Replace each joined LAM + ALEF-family pair with a single glyph.

    The ligature is isolated when the LAM started its run, final when the
    LAM was itself joined from the right.
    """
    out: list[ShapedGlyph] = []
    i = 0
    while i < len(shaped):
        g = shaped[i]
        if (
            i + 1 < len(shaped)
            and g.base == LAM
            and g.form in (Form.INITIAL, Form.MEDIAL)
            and shaped[i + 1].base in ALEF_FAMILY
            and shaped[i + 1].form is Form.FINAL
        ):
            nxt = shaped[i + 1]
            form = Form.ISOLATED if g.form is Form.INITIAL else Form.FINAL
            out.append(ShapedGlyph(g.base + nxt.base, form, (g.span[0], nxt.span[1])))
            i += 2
        else:
            out.append(g)
            i += 1
    return out


def shape(text: str, ligatures: bool = True) -> list[ShapedGlyph]:
    """Shape logical-order ``text`` into contextual glyphs.

    ``text`` must already be normalized (see :func:`normalize`); glyph
    spans index into it.
    """
    if not text:
        raise ValueError("cannot shape empty text")
    forms = assign_forms(text)
    glyphs = [ShapedGlyph(ch, f, (i, i + 1)) for i, (ch, f) in enumerate(zip(text, forms))]
    return apply_ligatures(glyphs) if ligatures else glyphs


def segment_paws(word: str) -> list[Paw]:
    """Split a single word into its connected runs."""
    if not word:
        raise ValueError("cannot segment an empty word")
    if SPACE in word:
        raise ValueError("segment_paws expects a single word without spaces")
    paws: list[Paw] = []
    current: list[ShapedGlyph] = []
    for g in shape(word):
        current.append(g)
        if not g.joins_left:
            paws.append(Paw(tuple(current)))
            current = []
    assert not current
    return paws


def paws_of_line(text: str) -> list[list[Paw]]:
    """Paws grouped per space-separated word."""
    return [segment_paws(w) for w in text.split(SPACE) if w]
