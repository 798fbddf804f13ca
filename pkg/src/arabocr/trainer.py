"""Minibatch training with Adadelta updates and CTC loss."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from arabocr import checkpoint as ckpt_io
from arabocr import ctc
from arabocr.imaging import load_image
from arabocr.metrics import EvalPair, evaluate
from arabocr.model import CRNN
from arabocr.nn.layers import LayerKind, Parameter
from arabocr.seeding import derive_seed
from arabocr.synth.corpus import CorpusManifest

log = logging.getLogger(__name__)

RHO = 0.95
EPS = 1e-6
CLIP_NORM = 5.0
MAX_INFEASIBLE_FRACTION = 0.01


class NumericError(ArithmeticError):
    pass


class DataError(ValueError):
    pass


@dataclass
class AdadeltaState:
    """Running averages of squared gradients and squared updates."""

    eg2: np.ndarray
    edx2: np.ndarray
    rho: float = RHO
    eps: float = EPS

    @classmethod
    def zeros_like(cls, value: np.ndarray, rho: float = RHO, eps: float = EPS) -> "AdadeltaState":
        return cls(np.zeros_like(value), np.zeros_like(value), rho, eps)


def adadelta_step(param: Parameter, state: AdadeltaState, name: str = "parameter") -> np.ndarray:
    """Apply one Adadelta update to ``param`` in place; returns the update."""
    g = param.grad
    if g.shape != param.value.shape or state.eg2.shape != g.shape:
        raise ValueError(f"{name}: shape mismatch between parameter, gradient and optimizer state")
    if not np.all(np.isfinite(g)):
        bad = int(np.count_nonzero(~np.isfinite(g)))
        raise NumericError(f"{name}: {bad} non-finite gradient entries (shape {g.shape})")
    rho, eps = state.rho, state.eps
    state.eg2 *= rho
    state.eg2 += (1 - rho) * g * g
    delta = -np.sqrt(state.edx2 + eps) / np.sqrt(state.eg2 + eps) * g
    state.edx2 *= rho
    state.edx2 += (1 - rho) * delta * delta
    param.value += delta
    return delta


class Adadelta:
    def __init__(self, params: dict[str, Parameter], rho: float = RHO, eps: float = EPS):
        self.params = params
        self.state = {k: AdadeltaState.zeros_like(p.value, rho, eps) for k, p in params.items()}

    def step(self) -> None:
        for name, p in self.params.items():
            adadelta_step(p, self.state[name], name)


def clip_gradients(params: dict[str, Parameter], max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2)) for p in params.values()))
    if norm > max_norm:
        for p in params.values():
            p.grad *= max_norm / norm
    return norm


@dataclass
class TrainHyper:
    epochs: int = 20
    batch_size: int = 32
    seed: int = 0
    rho: float = RHO
    eps: float = EPS
    clip: bool = False

    def items(self) -> list[tuple[str, object]]:
        return list(self.__dict__.items())


@dataclass
class EpochLog:
    epoch: int
    mean_loss: float
    val_crr: float
    val_wrr: float

    def line(self) -> str:
        return f"{self.epoch}\t{self.mean_loss!r}\t{self.val_crr!r}\t{self.val_wrr!r}"


@dataclass
class TrainRun:
    batch_size: int
    epochs: int
    seed: int
    manifest: str | None = None
    log: list[EpochLog] = field(default_factory=list)
    skipped: int = 0

    def log_text(self) -> str:
        return "".join(e.line() + "\n" for e in self.log)

    def write_log(self, path: str | Path) -> None:
        Path(path).write_text(self.log_text(), encoding="utf-8")


@dataclass
class TrainResult:
    model: CRNN
    checkpoint: ckpt_io.Checkpoint
    run: TrainRun


def samples_from_manifest(manifest: CorpusManifest) -> list[tuple[np.ndarray, str]]:
    return [(load_image(manifest.image_path(r)), r.label) for r in manifest.records]


def _has_batchnorm(model: CRNN) -> bool:
    return any(s.kind is LayerKind.BATCHNORM for s in model.config.conv)


def _batches(order: np.ndarray, batch_size: int, min_batch: int) -> list[np.ndarray]:
    chunks = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    if len(chunks) > 1 and len(chunks[-1]) < min_batch:
        tail = chunks.pop()
        chunks[-1] = np.concatenate([chunks[-1], tail])
    if len(chunks[-1]) < min_batch:
        chunks[-1] = np.resize(chunks[-1], min_batch)
    return chunks


def validate(model: CRNN, x: np.ndarray, labels: list[str], batch_size: int = 64) -> tuple[float, float]:
    preds: list[str] = []
    for i in range(0, len(x), batch_size):
        preds.extend(model.transcribe(x[i : i + batch_size]))
    report = evaluate([EvalPair(p, g) for p, g in zip(preds, labels)], "word")
    return float(report.crr), float(report.wrr)


def train(
    model: CRNN,
    samples: list[tuple[np.ndarray, str]],
    hyper: TrainHyper,
    val_samples: list[tuple[np.ndarray, str]] | None = None,
    manifest: str | None = None,
    log_path: str | Path | None = None,
) -> TrainResult:
    """Train ``model`` in place and return the best checkpoint.

    The checkpoint keeps the parameters of the epoch with the highest
    validation CRR (the last epoch when there is no validation set).
    """
    if not samples:
        raise DataError("training corpus is empty")
    alphabet = model.alphabet
    missing = alphabet.missing(label for _, label in samples)
    if missing:
        raise ctc.AlphabetError(missing)

    frames = model.config.sequence_length()
    xs, targets = [], []
    skipped = 0
    for img, label in samples:
        target = alphabet.encode(label)
        if ctc.min_frames(target) > frames:
            skipped += 1
            log.warning("skipping %r: needs %d frames, model emits %d", label, ctc.min_frames(target), frames)
            continue
        xs.append(model.preprocess(img))
        targets.append(target)
    if skipped > MAX_INFEASIBLE_FRACTION * len(samples):
        raise DataError(f"{skipped} of {len(samples)} samples are infeasible for {frames} frames")
    if not xs:
        raise DataError("no feasible training samples")
    x = np.stack(xs)

    val_x = val_labels = None
    if val_samples:
        val_x = np.stack([model.preprocess(img) for img, _ in val_samples])
        val_labels = [label for _, label in val_samples]

    opt = Adadelta(model.params, hyper.rho, hyper.eps)
    run = TrainRun(hyper.batch_size, hyper.epochs, hyper.seed, manifest, skipped=skipped)
    min_batch = 2 if _has_batchnorm(model) else 1
    best_crr = -math.inf
    best_state = {k: v.copy() for k, v in model.state_arrays().items()}
    for epoch in range(1, hyper.epochs + 1):
        order = np.random.default_rng(derive_seed(hyper.seed, "shuffle", epoch)).permutation(len(x))
        total, count = 0.0, 0
        for idx in _batches(order, hyper.batch_size, min_batch):
            model.zero_grad()
            losses = model.loss_and_grad(x[idx], [targets[i] for i in idx], train=True)
            if hyper.clip:
                clip_gradients(model.params, CLIP_NORM)
            opt.step()
            total += sum(losses)
            count += len(losses)
        mean_loss = total / count
        if not math.isfinite(mean_loss):
            raise NumericError(f"epoch {epoch}: mean loss is {mean_loss}")
        if val_x is not None:
            val_crr, val_wrr = validate(model, val_x, val_labels)
        else:
            val_crr = val_wrr = float("nan")
        entry = EpochLog(epoch, mean_loss, val_crr, val_wrr)
        run.log.append(entry)
        log.info("epoch %d loss %.4f val_crr %.4f val_wrr %.4f", epoch, mean_loss, val_crr, val_wrr)
        if log_path is not None:
            run.write_log(log_path)
        score = val_crr if val_x is not None else epoch
        if score > best_crr:
            best_crr = score
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}
    model.load_state_arrays(best_state)
    meta = {"epochs": hyper.epochs, "seed": hyper.seed}
    if run.log:
        best = max(run.log, key=lambda e: e.val_crr if val_x is not None else e.epoch)
        meta.update(best_epoch=best.epoch, loss=best.mean_loss)
        if val_x is not None:
            meta.update(val_crr=best.val_crr, val_wrr=best.val_wrr)
    return TrainResult(model, ckpt_io.from_model(model, meta), run)


def finetune(
    checkpoint: ckpt_io.Checkpoint,
    samples: list[tuple[np.ndarray, str]],
    hyper: TrainHyper,
    val_samples: list[tuple[np.ndarray, str]] | None = None,
    manifest: str | None = None,
    log_path: str | Path | None = None,
) -> TrainResult:
    """Continue training from ``checkpoint`` with fresh optimizer state."""
    missing = checkpoint.alphabet.missing(label for _, label in samples)
    if missing:
        raise ctc.AlphabetError(missing)
    model = ckpt_io.to_model(checkpoint)
    return train(model, samples, hyper, val_samples, manifest, log_path)
