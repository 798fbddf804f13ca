"""Synthetic corpora on disk: PGM images plus a tab-separated manifest."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from arabocr import shaper
from arabocr.imaging import ImageFormatError, read_pgm, write_pgm
from arabocr.seeding import derive_seed
from arabocr.synth.render import MODES, OUTPUT_HEIGHT, RenderConfig, render_sample

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.tsv"
_HEADER_PREFIX = "#"


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestRecord:
    path: str  # relative to the manifest's directory
    label: str
    mode: str
    seed: int


@dataclass
class CorpusManifest:
    records: list[ManifestRecord]
    master_seed: int | None = None
    root: Path = field(default_factory=Path)

    @property
    def count(self) -> int:
        return len(self.records)

    def image_path(self, record: ManifestRecord) -> Path:
        return self.root / record.path

    def labels(self) -> list[str]:
        return [r.label for r in self.records]


def write_manifest(manifest: CorpusManifest, path: str | Path) -> None:
    """One record per line: path, label, mode, seed. A leading ``#`` line
    carries the master seed and count."""
    paths = [r.path for r in manifest.records]
    if len(set(paths)) != len(paths):
        raise ManifestError("manifest paths must be unique")
    lines = []
    if manifest.master_seed is not None:
        lines.append(f"{_HEADER_PREFIX}master_seed={manifest.master_seed}\tcount={manifest.count}")
    for r in manifest.records:
        if "\t" in r.label or "\n" in r.label:
            raise ManifestError(f"label {r.label!r} contains a tab or newline")
        lines.append(f"{r.path}\t{r.label}\t{r.mode}\t{r.seed}")
    tmp = Path(str(path) + ".tmp")
    tmp.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    os.replace(tmp, path)


def read_manifest(path: str | Path) -> CorpusManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    master_seed = None
    records = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").split("\n"), 1):
        if not line:
            continue
        if line.startswith(_HEADER_PREFIX):
            meta = dict(kv.split("=", 1) for kv in line[1:].split("\t") if "=" in kv)
            if "master_seed" in meta:
                master_seed = int(meta["master_seed"])
            continue
        parts = line.split("\t")
        if len(parts) != 4:
            raise ManifestError(f"{path}:{lineno}: expected 4 tab-separated fields, got {len(parts)}")
        try:
            records.append(ManifestRecord(parts[0], parts[1], parts[2], int(parts[3])))
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: bad seed field {parts[3]!r}") from exc
    if len({r.path for r in records}) != len(records):
        raise ManifestError(f"{path}: duplicate image paths")
    return CorpusManifest(records, master_seed, path.parent)


def plan_corpus(vocab: list[str], n: int, master_seed: int, mode: str) -> list[ManifestRecord]:
    """Records for a corpus without rendering anything."""
    if not vocab:
        raise ValueError("vocabulary is empty")
    if n < 1:
        raise ValueError(f"corpus size must be >= 1, got {n}")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    vocab = [shaper.normalize(w) for w in vocab]
    records = []
    for i in range(n):
        label = vocab[derive_seed(master_seed, "label", i) % len(vocab)]
        records.append(ManifestRecord(f"images/{i:06d}.pgm", label, mode, derive_seed(master_seed, "image", i)))
    return records


def _valid_image(path: Path) -> bool:
    try:
        return read_pgm(path).shape[0] == OUTPUT_HEIGHT
    except (OSError, ImageFormatError):
        return False


def _render_to(args) -> None:
    record, target, config = args
    write_pgm(target, render_sample(record.label, record.mode, record.seed, config).pixels)


def build_corpus(
    vocab: list[str],
    n: int,
    master_seed: int,
    mode: str,
    out_dir: str | Path,
    config: RenderConfig | None = None,
    workers: int = 1,
) -> CorpusManifest:
    """Render ``n`` samples into ``out_dir``. Existing valid images are
    kept, so an interrupted build can be resumed with the same arguments."""
    out_dir = Path(out_dir)
    records = plan_corpus(vocab, n, master_seed, mode)
    manifest_path = out_dir / MANIFEST_NAME
    if manifest_path.exists():
        previous = read_manifest(manifest_path)
        if previous.master_seed not in (None, master_seed):
            raise ManifestError(
                f"{out_dir} already holds a corpus with master seed {previous.master_seed}, not {master_seed}"
            )
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    config = config or RenderConfig()
    todo = [(r, out_dir / r.path, config) for r in records if not _valid_image(out_dir / r.path)]
    log.info("rendering %d of %d images into %s", len(todo), n, out_dir)
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(workers) as pool:
            list(pool.map(_render_to, todo, chunksize=16))
    else:
        for job in todo:
            _render_to(job)
    manifest = CorpusManifest(records, master_seed, out_dir)
    write_manifest(manifest, manifest_path)
    return manifest
