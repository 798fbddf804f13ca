from arabocr.synth.atlas import GlyphMissingError, GlyphRasterizer, ProceduralAtlas, default_atlas
from arabocr.synth.corpus import CorpusManifest, ManifestRecord, build_corpus, read_manifest, write_manifest
from arabocr.synth.geometry import Homography, SingularHomographyError, homography_from_points, random_homography, warp_array
from arabocr.synth.render import (
    EmptyRenderError,
    LabeledImage,
    Layer,
    RenderConfig,
    RenderStyle,
    compose_scene,
    perspective_warp,
    rasterize,
    render_sample,
    render_trace,
)

__all__ = [
    "CorpusManifest",
    "EmptyRenderError",
    "GlyphMissingError",
    "GlyphRasterizer",
    "Homography",
    "LabeledImage",
    "Layer",
    "ManifestRecord",
    "ProceduralAtlas",
    "RenderConfig",
    "RenderStyle",
    "SingularHomographyError",
    "build_corpus",
    "compose_scene",
    "default_atlas",
    "homography_from_points",
    "perspective_warp",
    "random_homography",
    "rasterize",
    "read_manifest",
    "render_sample",
    "render_trace",
    "warp_array",
    "write_manifest",
]
