"""Command-line entry point.

Subcommands: shape, synth, train, finetune, eval, recognize. Results go
to stdout as tab-separated lines; the resolved configuration is echoed
to stderr as ``config<TAB>key<TAB>value`` lines.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from arabocr import checkpoint as ckpt_io
from arabocr import ctc, shaper
from arabocr.imaging import ImageFormatError, load_image
from arabocr.metrics import EvalPair, evaluate
from arabocr.model import CRNN, ConfigError, MODE_SIZES, default_config
from arabocr.seeding import derive_seed, parse_kv_file
from arabocr.synth.atlas import GlyphMissingError
from arabocr.synth.corpus import ManifestError, build_corpus, read_manifest
from arabocr.synth.render import EmptyRenderError, RenderConfig
from arabocr.trainer import DataError, NumericError, TrainHyper, finetune, samples_from_manifest, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

log = logging.getLogger("arabocr")


class UsageError(Exception):
    pass


# Training options: name -> (type, default). Precedence: flag > file > default.
TRAIN_OPTIONS: dict[str, tuple[type, object]] = {
    "epochs": (int, 20),
    "batch_size": (int, 32),
    "channel_divisor": (int, 1),
    "hidden": (int, 256),
    "layers": (int, 2),
    "clip": (bool, False),
    "mode": (str, ""),
}


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"expected a boolean, got {text!r}")


def resolve_options(
    options: dict[str, tuple[type, object]], file_values: dict[str, str], flags: dict[str, object]
) -> dict[str, object]:
    unknown = sorted(set(file_values) - set(options))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    out = {}
    for name, (kind, default) in options.items():
        value = default
        if name in file_values:
            raw = file_values[name]
            try:
                value = _parse_bool(raw) if kind is bool else kind(raw)
            except ValueError as exc:
                raise UsageError(f"config key {name}: {exc}") from exc
        if flags.get(name) is not None:
            value = flags[name]
        out[name] = value
    return out


def echo_config(items) -> None:
    for key, value in items:
        print(f"config\t{key}\t{value}", file=sys.stderr)


def _read_file_config(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    try:
        return parse_kv_file(path)
    except FileNotFoundError as exc:
        raise UsageError(f"config file not found: {path}") from exc
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


# -- shape -------------------------------------------------------------------


def cmd_shape(args) -> int:
    if not args.text:
        raise UsageError("shape needs a non-empty text argument")
    echo_config([("text", args.text)])
    words = shaper.paws_of_line(shaper.normalize(args.text))
    print("index\tletter\tform\tpaw")
    index = paw = 0
    for paws in words:
        for p in paws:
            for g in p.glyphs:
                print(f"{index}\t{g.base}\t{g.form.value}\t{paw}")
                index += 1
            paw += 1
    return EXIT_OK


# -- synth -------------------------------------------------------------------


def cmd_synth(args) -> int:
    try:
        vocab = [w.strip() for w in Path(args.vocab).read_text(encoding="utf-8").splitlines()]
    except FileNotFoundError as exc:
        raise UsageError(f"vocabulary file not found: {args.vocab}") from exc
    vocab = [w for w in vocab if w]
    config = RenderConfig.from_mapping(_read_file_config(args.config)) if args.config else RenderConfig()
    echo_config(
        [("vocab", args.vocab), ("n", args.n), ("seed", args.seed), ("mode", args.mode), ("out", args.out)]
        + config.items()
    )
    if not vocab:
        raise DataError(f"vocabulary file {args.vocab} has no entries")
    manifest = build_corpus(vocab, args.n, args.seed, args.mode, args.out, config, args.workers)
    print(f"manifest\t{Path(args.out) / 'manifest.tsv'}")
    print(f"count\t{manifest.count}")
    return EXIT_OK


# -- train / finetune --------------------------------------------------------


def _load_corpus(path: str):
    try:
        manifest = read_manifest(path)
    except FileNotFoundError as exc:
        raise DataError(f"no corpus manifest at {path}") from exc
    if not manifest.records:
        raise DataError(f"corpus {path} is empty")
    return manifest, samples_from_manifest(manifest)


def _train_options(args) -> dict[str, object]:
    flags = {name: getattr(args, name, None) for name in TRAIN_OPTIONS}
    if getattr(args, "clip", False):
        flags["clip"] = True
    else:
        flags["clip"] = None
    return resolve_options(TRAIN_OPTIONS, _read_file_config(args.config), flags)


def _finish_training(result, args) -> int:
    ckpt_io.save(result.checkpoint, args.out)
    last = result.run.log[-1] if result.run.log else None
    print(f"checkpoint\t{args.out}")
    print(f"epochs\t{len(result.run.log)}")
    print(f"skipped\t{result.run.skipped}")
    if last is not None:
        print(f"final_loss\t{last.mean_loss!r}")
    if "val_crr" in result.checkpoint.metadata:
        print(f"best_val_crr\t{result.checkpoint.metadata['val_crr']!r}")
    return EXIT_OK


def cmd_train(args) -> int:
    opts = _train_options(args)
    manifest, samples = _load_corpus(args.corpus)
    val = _load_corpus(args.val)[1] if args.val else None
    mode = opts["mode"] or manifest.records[0].mode
    if mode not in MODE_SIZES:
        raise UsageError(f"mode must be one of {sorted(MODE_SIZES)}, got {mode!r}")
    if args.alphabet:
        try:
            alphabet = ctc.Alphabet.load(args.alphabet)
        except FileNotFoundError as exc:
            raise UsageError(f"alphabet file not found: {args.alphabet}") from exc
    else:
        alphabet = ctc.Alphabet.from_labels(label for _, label in samples + (val or []))
    echo_config(
        [("corpus", args.corpus), ("val", args.val), ("out", args.out), ("seed", args.seed)]
        + [(k, v if k != "mode" else mode) for k, v in opts.items()]
        + [("alphabet", "".join(alphabet.chars))]
    )
    missing = alphabet.missing(label for _, label in samples)
    if missing:
        raise ctc.AlphabetError(missing)
    config = default_config(mode, alphabet, opts["channel_divisor"], opts["hidden"], opts["layers"])
    model = CRNN(config, seed=derive_seed(args.seed, "init") % 2**32, dtype=np.float32)
    hyper = TrainHyper(epochs=opts["epochs"], batch_size=opts["batch_size"], seed=args.seed, clip=opts["clip"])
    result = train(model, samples, hyper, val, manifest=args.corpus, log_path=args.log)
    return _finish_training(result, args)


def cmd_finetune(args) -> int:
    opts = _train_options(args)
    ckpt = _load_checkpoint(args.checkpoint)
    _, samples = _load_corpus(args.corpus)
    val = _load_corpus(args.val)[1] if args.val else None
    echo_config(
        [("checkpoint", args.checkpoint), ("corpus", args.corpus), ("val", args.val), ("out", args.out), ("seed", args.seed)]
        + [(k, opts[k]) for k in ("epochs", "batch_size", "clip")]
    )
    hyper = TrainHyper(epochs=opts["epochs"], batch_size=opts["batch_size"], seed=args.seed, clip=opts["clip"])
    result = finetune(ckpt, samples, hyper, val, manifest=args.corpus, log_path=args.log)
    return _finish_training(result, args)


# -- recognize / eval --------------------------------------------------------


def _load_checkpoint(path: str) -> ckpt_io.Checkpoint:
    try:
        return ckpt_io.load(path)
    except FileNotFoundError as exc:
        raise UsageError(f"checkpoint not found: {path}") from exc


def cmd_recognize(args) -> int:
    if not args.images and not args.manifest:
        raise UsageError("recognize needs image paths or --manifest")
    if args.beam_width < 0:
        raise UsageError("--beam-width must be >= 0")
    echo_config([("checkpoint", args.checkpoint), ("beam_width", args.beam_width), ("manifest", args.manifest)])
    model = ckpt_io.to_model(_load_checkpoint(args.checkpoint))
    paths: list[str] = list(args.images)
    files: list[Path] = [Path(p) for p in args.images]
    if args.manifest:
        manifest = read_manifest(args.manifest)
        paths += [r.path for r in manifest.records]
        files += [manifest.image_path(r) for r in manifest.records]
    try:
        images = [load_image(f) for f in files]
    except FileNotFoundError as exc:
        raise DataError(f"image not found: {exc.filename}") from exc
    for path, text in zip(paths, model.recognize(images, beam_width=args.beam_width)):
        print(f"{path}\t{text}")
    return EXIT_OK


def read_predictions(path: str) -> dict[str, str]:
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").split("\n"), 1):
        if not line:
            continue
        if "\t" not in line:
            raise DataError(f"{path}:{lineno}: expected image_path<TAB>text")
        key, text = line.split("\t", 1)
        out[key] = text
    return out


def cmd_eval(args) -> int:
    echo_config([("manifest", args.manifest), ("predictions", args.predictions), ("granularity", args.granularity)])
    try:
        manifest = read_manifest(args.manifest)
        preds = read_predictions(args.predictions)
    except FileNotFoundError as exc:
        raise DataError(f"file not found: {exc.filename}") from exc
    missing = [r.path for r in manifest.records if r.path not in preds]
    if missing:
        raise DataError(f"{len(missing)} manifest images have no prediction, e.g. {missing[0]}")
    report = evaluate([EvalPair(preds[r.path], r.label) for r in manifest.records], args.granularity)
    for key, value in report.as_row().items():
        print(f"{key}\t{value!r}" if isinstance(value, float) else f"{key}\t{value}")
    return EXIT_OK


# -- wiring ------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit with the configuration code
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--corpus", required=True, help="corpus directory or manifest")
    p.add_argument("--val", help="validation corpus directory or manifest")
    p.add_argument("--out", required=True, help="output checkpoint path")
    p.add_argument("--config", help="key=value file with training options")
    p.add_argument("--log", help="training log path (epoch, loss, val CRR, val WRR)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--clip", action="store_true", help="clip the gradient L2 norm at 5")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arabocr", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("shape", help="show letter forms and paws")
    p.add_argument("text")
    p.set_defaults(func=cmd_shape)

    p = sub.add_parser("synth", help="render a synthetic corpus")
    p.add_argument("--vocab", required=True, help="UTF-8 file, one label per line")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=sorted(MODE_SIZES), default="scene")
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="key=value file with randomization ranges")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a recognizer from scratch")
    _add_train_flags(p)
    p.add_argument("--alphabet", help="alphabet file, one character per line")
    p.add_argument("--mode", choices=sorted(MODE_SIZES))
    p.add_argument("--channel-divisor", dest="channel_divisor", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--layers", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("finetune", help="continue training from a checkpoint")
    _add_train_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("recognize", help="transcribe images with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("images", nargs="*")
    p.add_argument("--manifest", help="transcribe every image of a corpus")
    p.add_argument("--beam-width", dest="beam_width", type=int, default=0, help="0 selects greedy decoding")
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("eval", help="score predictions against a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--predictions", required=True, help="UTF-8 lines: image_path<TAB>text")
    p.add_argument("--granularity", choices=["word", "line"], default="word")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except shaper.UnsupportedCharacterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if args.command == "shape" else EXIT_DATA
    except (
        DataError,
        ctc.AlphabetError,
        ManifestError,
        ImageFormatError,
        ckpt_io.CheckpointError,
        GlyphMissingError,
        EmptyRenderError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
