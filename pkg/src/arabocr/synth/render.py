"""Rendering shaped words and lines into labeled grayscale images.

Scene mode: rasterize with random stroke/kerning/skew/rotation, apply a
random perspective warp, blend the text with one texture crop and alpha
compose it over another. Video mode: flat text on a flat background with
no geometric distortion. Both end with a light blur and a resize to a
height of 32 pixels. Output is a pure function of (label, mode, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from arabocr import shaper
from arabocr.imaging import load_image, resize_bilinear, resize_to_height, to_bytes
from arabocr.seeding import parse_kv_file
from arabocr.synth.atlas import ATLAS_HEIGHT, GlyphRasterizer, default_atlas
from arabocr.synth.geometry import Homography, random_homography, warp_array

OUTPUT_HEIGHT = 32
MARGIN = 2
MODES = ("scene", "video")


@dataclass(frozen=True)
class RenderStyle:
    glyph_scale: float = float(ATLAS_HEIGHT)  # rendered cell height in px
    stroke_thickness: int = 1
    kerning: int = 0
    skew: float = 0.0
    rotation: float = 0.0  # radians
    fg_gray: int = 0
    bg_gray: int = 255

    def __post_init__(self):
        if self.glyph_scale <= 0:
            raise ValueError("glyph_scale must be positive")
        if self.stroke_thickness < 1:
            raise ValueError("stroke_thickness must be >= 1")
        if abs(self.rotation) > math.radians(15):
            raise ValueError(f"rotation {math.degrees(self.rotation):.1f} deg exceeds 15 deg")
        if abs(self.skew) > 0.5:
            raise ValueError(f"skew {self.skew} exceeds 0.5")
        for g in (self.fg_gray, self.bg_gray):
            if not 0 <= g <= 255:
                raise ValueError(f"gray level {g} outside 0..255")

    @property
    def scale(self) -> float:
        return self.glyph_scale / ATLAS_HEIGHT


@dataclass
class RenderConfig:
    """Randomization ranges; overridable from a key=value file."""

    rotation_deg: float = 7.0
    skew: float = 0.3
    stroke_min: int = 1
    stroke_max: int = 3
    kerning_min: int = 0
    kerning_max: int = 3
    scene_scale_min: float = 20.0
    scene_scale_max: float = 28.0
    video_scale_min: float = 20.0
    video_scale_max: float = 25.0
    mix_min: float = 0.6
    mix_max: float = 1.0
    corner_jitter: float = 0.1
    min_contrast: int = 40
    scene_min_contrast: int = 60
    blur_sigma: float = 0.6
    texture_dir: str = ""

    @classmethod
    def from_file(cls, path: str | Path) -> "RenderConfig":
        return cls.from_mapping(parse_kv_file(path))

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "RenderConfig":
        known = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in known:
                raise ValueError(f"unknown render config key {key!r}")
            default = getattr(cls, key)
            kwargs[key] = type(default)(raw) if not isinstance(default, str) else raw
        return cls(**kwargs)

    def items(self) -> list[tuple[str, object]]:
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


@dataclass
class Layer:
    """Foreground text layer: gray level and coverage (alpha) per pixel."""

    gray: np.ndarray
    alpha: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.alpha.shape


@dataclass(frozen=True)
class LabeledImage:
    pixels: np.ndarray  # (32, W) uint8
    label: str
    seed: int
    mode: str


class EmptyRenderError(ValueError):
    pass


def _layout(glyphs, style: RenderStyle, atlas: GlyphRasterizer) -> np.ndarray:
    """Concatenate glyph masks in visual (right-to-left) order."""
    scale = style.scale
    pieces: list[np.ndarray] = []  # in logical order
    gaps: list[int] = []  # gap to the left of each piece
    height = None
    for g in glyphs:
        if g.base == shaper.SPACE:
            mask = None
            width = atlas.space_width(scale)
        else:
            mask = atlas.glyph(g.base, g.form, scale, style.stroke_thickness)
            width = mask.shape[1]
            height = mask.shape[0]
        pieces.append((mask, width))
        gaps.append(0 if g.joins_left else max(1, int(round(2 * scale))) + style.kerning)
    if height is None:
        raise EmptyRenderError("nothing to draw: no visible glyphs")
    total = sum(w for _, w in pieces) + sum(max(0, gp) for gp in gaps[:-1])
    canvas = np.zeros((height, total), dtype=bool)
    x = total
    for (mask, width), gap in zip(pieces, gaps):
        x -= width
        if mask is not None:
            canvas[:, x : x + width] |= mask
        x -= max(0, gap)
    return canvas


def _crop(alpha: np.ndarray, gray: np.ndarray, margin: int) -> Layer:
    rows = np.flatnonzero(alpha.any(axis=1))
    cols = np.flatnonzero(alpha.any(axis=0))
    if rows.size == 0:
        raise EmptyRenderError("rendered text has no visible pixels")
    a = alpha[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    g = gray[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1]
    pad = ((margin, margin), (margin, margin))
    return Layer(np.pad(g, pad, mode="edge"), np.pad(a, pad))


def rasterize(glyphs, style: RenderStyle = RenderStyle(), atlas: GlyphRasterizer | None = None) -> Layer:
    """Draw shaped glyphs right-to-left, apply skew and rotation, and crop
    tightly with a 2 px margin."""
    if not glyphs:
        raise EmptyRenderError("empty glyph list")
    atlas = atlas or default_atlas()
    mask = _layout(glyphs, style, atlas).astype(np.float64)
    if style.skew or style.rotation:
        h, w = mask.shape
        cx, cy = (w - 1) / 2, (h - 1) / 2
        cos, sin = math.cos(style.rotation), math.sin(style.rotation)
        # shear x by skew * (cy - y) so tops lean right, then rotate about the centre
        a = np.array([[1.0, -style.skew], [0.0, 1.0]])
        a = np.array([[cos, -sin], [sin, cos]]) @ a
        corners = np.array([[0, 0], [w - 1, 0], [0, h - 1], [w - 1, h - 1]], dtype=np.float64) - [cx, cy]
        moved = corners @ a.T
        lo, hi = moved.min(axis=0), moved.max(axis=0)
        out_w, out_h = int(math.ceil(hi[0] - lo[0])) + 3, int(math.ceil(hi[1] - lo[1])) + 3
        m = np.zeros((2, 3))
        m[:, :2] = a
        m[:, 2] = 1.0 - lo - a @ [cx, cy]
        mask = warp_array(mask, Homography.affine(m), (out_h, out_w))
        mask[mask < 1e-9] = 0.0
    gray = np.full(mask.shape, float(style.fg_gray))
    return _crop(mask, gray, MARGIN)


def perspective_warp(layer: Layer, h: Homography, out_shape=None) -> Layer:
    """Warp a layer; pixels mapped from outside the source are transparent."""
    alpha = warp_array(layer.alpha, h, out_shape)
    premult = warp_array(layer.gray * layer.alpha, h, out_shape)
    gray = np.divide(premult, alpha, out=np.zeros_like(alpha), where=alpha > 1e-12)
    return Layer(gray, alpha)


def compose_scene(fg: Layer, blend_crop: np.ndarray, bg_crop: np.ndarray, mix: float = 1.0) -> np.ndarray:
    """``alpha * (mix * fg + (1 - mix) * blend) + (1 - alpha) * bg``, clamped."""
    blend_crop = np.asarray(blend_crop, dtype=np.float64)
    bg_crop = np.asarray(bg_crop, dtype=np.float64)
    if blend_crop.shape != fg.shape or bg_crop.shape != fg.shape:
        raise ValueError(
            f"crop shapes {blend_crop.shape}, {bg_crop.shape} must match foreground {fg.shape}"
        )
    text = mix * fg.gray + (1 - mix) * blend_crop
    return np.clip(fg.alpha * text + (1 - fg.alpha) * bg_crop, 0, 255)


def procedural_texture(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded multi-octave value noise in 0..255."""
    out = np.zeros((height, width))
    amp = 1.0
    for cell in (16, 8, 4, 2):
        gh, gw = max(2, height // cell + 2), max(2, width // cell + 2)
        out += amp * resize_bilinear(rng.random((gh, gw)), height, width)
        amp *= 0.5
    out = (out - out.min()) / max(out.max() - out.min(), 1e-9)
    mean = rng.uniform(40, 215)
    spread = rng.uniform(20, 70)
    return np.clip(mean + (out - 0.5) * spread, 0, 255)


def _texture_files(directory: str) -> list[Path]:
    exts = {".pgm", ".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"}
    return sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in exts)


def natural_crop(height: int, width: int, rng: np.random.Generator, config: RenderConfig) -> np.ndarray:
    """A random crop from the texture directory, or procedural noise when
    no directory is configured."""
    if not config.texture_dir:
        return procedural_texture(height, width, rng)
    files = _texture_files(config.texture_dir)
    if not files:
        return procedural_texture(height, width, rng)
    img = load_image(files[int(rng.integers(len(files)))]).astype(np.float64)
    if img.shape[0] < height or img.shape[1] < width:
        f = max(height / img.shape[0], width / img.shape[1])
        img = resize_bilinear(img, int(math.ceil(img.shape[0] * f)), int(math.ceil(img.shape[1] * f)))
    y = int(rng.integers(0, img.shape[0] - height + 1))
    x = int(rng.integers(0, img.shape[1] - width + 1))
    return img[y : y + height, x : x + width]


def _contrasting_pair(rng: np.random.Generator, contrast: int) -> tuple[int, int]:
    while True:
        fg, bg = (int(v) for v in rng.integers(0, 256, size=2))
        if abs(fg - bg) >= contrast:
            return fg, bg


def sample_style(mode: str, rng: np.random.Generator, config: RenderConfig) -> RenderStyle:
    stroke = int(rng.integers(config.stroke_min, config.stroke_max + 1))
    kerning = int(rng.integers(config.kerning_min, config.kerning_max + 1))
    if mode == "video":
        scale = rng.uniform(config.video_scale_min, config.video_scale_max)
        fg, bg = _contrasting_pair(rng, config.min_contrast)
        return RenderStyle(scale, stroke, kerning, 0.0, 0.0, fg, bg)
    scale = rng.uniform(config.scene_scale_min, config.scene_scale_max)
    skew = rng.uniform(-config.skew, config.skew)
    rotation = math.radians(rng.uniform(-config.rotation_deg, config.rotation_deg))
    fg, bg = _contrasting_pair(rng, config.min_contrast)
    return RenderStyle(scale, stroke, kerning, skew, rotation, fg, bg)


@dataclass
class RenderTrace:
    """Intermediate stages of one rendering, for inspection and tests."""

    style: RenderStyle
    layer: Layer
    composite: np.ndarray  # before the anti-aliasing blur
    blurred: np.ndarray
    final: np.ndarray  # uint8, height 32


def render_trace(
    label: str,
    mode: str,
    seed: int,
    config: RenderConfig | None = None,
    atlas: GlyphRasterizer | None = None,
) -> RenderTrace:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    config = config or RenderConfig()
    label = shaper.normalize(label)
    glyphs = shaper.shape(label)
    rng = np.random.default_rng(seed)
    style = sample_style(mode, rng, config)
    layer = rasterize(glyphs, style, atlas)

    if mode == "video":
        h, w = layer.shape
        if h > OUTPUT_HEIGHT:
            raise EmptyRenderError(f"glyph scale too large for video height: layer is {h} px tall")
        top = int(rng.integers(0, OUTPUT_HEIGHT - h + 1))
        side = int(rng.integers(2, 9))
        alpha = np.zeros((OUTPUT_HEIGHT, w + 2 * side))
        alpha[top : top + h, side : side + w] = layer.alpha
        composite = alpha * style.fg_gray + (1 - alpha) * style.bg_gray
    else:
        h, w = layer.shape
        py, px = int(math.ceil(config.corner_jitter * h)) + 2, int(math.ceil(config.corner_jitter * w)) + 2
        padded = Layer(np.pad(layer.gray, ((py, py), (px, px)), mode="edge"), np.pad(layer.alpha, ((py, py), (px, px))))
        warped = perspective_warp(padded, random_homography(*padded.shape, config.corner_jitter, rng))
        warped.alpha[warped.alpha < 1e-9] = 0.0
        layer = _crop(warped.alpha, warped.gray, int(rng.integers(2, 7)))
        bg = natural_crop(*layer.shape, rng, config)
        blend = natural_crop(*layer.shape, rng, config)
        # keep the text readable against the local background
        fg_gray = float(style.fg_gray)
        bg_mean = float(bg.mean())
        if abs(fg_gray - bg_mean) < config.scene_min_contrast:
            fg_gray = bg_mean - config.scene_min_contrast if bg_mean >= 128 else bg_mean + config.scene_min_contrast
        layer = Layer(np.full(layer.shape, fg_gray), layer.alpha)
        mix = rng.uniform(config.mix_min, config.mix_max)
        composite = compose_scene(layer, blend, bg, mix)

    blurred = gaussian_filter(composite, config.blur_sigma, mode="nearest") if config.blur_sigma > 0 else composite
    final = to_bytes(resize_to_height(blurred, OUTPUT_HEIGHT))
    return RenderTrace(style, layer, composite, blurred, final)


def render_sample(
    label: str,
    mode: str,
    seed: int,
    config: RenderConfig | None = None,
    atlas: GlyphRasterizer | None = None,
) -> LabeledImage:
    trace = render_trace(label, mode, seed, config, atlas)
    return LabeledImage(trace.final, shaper.normalize(label), seed, mode)
