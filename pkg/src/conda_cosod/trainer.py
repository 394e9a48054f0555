"""Optimisation loop, Adam, and evaluation."""

from __future__ import annotations

import contextlib
import csv
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

from .checkpoint import Checkpoint, save_checkpoint
from .config import RunConfig
from .data import GroupSample
from .losses import LossReport, total_loss
from .metrics import MetricReport, evaluate_pairs
from .params import Params
from .pipeline import CondaModel
from .tensor import NonFiniteError, ShapeError, no_grad

THREADS_ENV = "CONDA_ASSOC_THREADS"


class NonFiniteLossError(FloatingPointError):
    def __init__(self, step: int, term: str, detail: str = ""):
        self.step, self.term = step, term
        super().__init__(f"non-finite {term} at step {step}" + (f": {detail}" if detail else ""))


@contextlib.contextmanager
def thread_limit(threads: int | None = None) -> Iterator[None]:
    """Cap BLAS worker threads (``CONDA_ASSOC_THREADS`` when not given)."""
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else None
    if not threads:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=threads):
        yield


class Adam:
    """Bias-corrected adaptive-moment update applied in place to ``Params``."""

    def __init__(self, params: Params, lr: float, beta1: float = 0.9, beta2: float = 0.99,
                 eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, grads: dict[str, np.ndarray], lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1, c2 = 1.0 - b1**self.t, 1.0 - b2**self.t
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                continue
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = (p.data - update).astype(p.dtype, copy=False)


def learning_rate(cfg: RunConfig, step: int) -> float:
    """Step decay: ``lr`` up to ``decay_at``, ``lr * decay_factor`` afterwards (steps count from 1)."""
    tc = cfg.train
    return tc.lr * (tc.decay_factor if step > tc.decay_at else 1.0)


def clip_gradients(grads: dict[str, np.ndarray], max_norm: float | None) -> float:
    norm = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))
    if max_norm is not None and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class StepRecord:
    step: int
    group: int
    lr: float
    grad_norm: float
    report: LossReport

    def row(self) -> dict[str, float]:
        return {"step": self.step, "group": self.group, "lr": self.lr,
                "grad_norm": self.grad_norm, **self.report.as_row()}


@dataclass
class TrainResult:
    model: CondaModel
    history: list[StepRecord] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [r.report.total for r in self.history]


def _check_report(step: int, report: LossReport) -> None:
    for term in ("bce", "iou", "occ", "total"):
        if not np.isfinite(getattr(report, term)):
            raise NonFiniteLossError(step, term)


def train_step(model: CondaModel, group: GroupSample, cfg: RunConfig, step: int = 0
               ) -> tuple[LossReport, dict[str, np.ndarray]]:
    """Forward, loss and backward on one group; returns the report and raw gradients."""
    for p in model.params.values():
        p.grad = None
    dtype = model.dtype
    images = group.images.astype(dtype)
    masks = group.masks.astype(dtype)
    try:
        pred = model(images)
        loss, report = total_loss(pred.prob, images, masks, pred.fields, cfg.loss)
    except NonFiniteError as exc:
        raise NonFiniteLossError(step, "forward", str(exc)) from exc
    _check_report(step, report)
    try:
        loss.backward()
    except NonFiniteError as exc:
        raise NonFiniteLossError(step, "backward", str(exc)) from exc
    grads = {k: p.grad.data.copy() for k, p in model.params.items() if p.grad is not None}
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteLossError(step, "gradient", k)
    return report, grads


def train(dataset: Sequence[GroupSample], cfg: RunConfig, model: CondaModel | None = None,
          out_dir: str | Path | None = None, log: Callable[[StepRecord], None] | None = None
          ) -> TrainResult:
    """Uniform group sampling with replacement, one group per step."""
    if not dataset:
        raise ValueError("training needs at least one group")
    tc = cfg.train
    if model is None:
        model = CondaModel(cfg, dataset[0].size[0])
    sizes = {g.size for g in dataset}
    if sizes != {(model.input_size, model.input_size)}:
        raise ShapeError(f"group sizes {sizes} do not match model input {model.input_size}")
    rng = np.random.default_rng(tc.seed)
    opt = Adam(model.params, tc.lr, tc.beta1, tc.beta2, tc.adam_eps)
    result = TrainResult(model)
    out = Path(out_dir) if out_dir is not None else None
    writer = None
    log_fh = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_fh = (out / "losses.csv").open("w", newline="")
    try:
        with thread_limit():
            for step in range(1, tc.steps + 1):
                gi = int(rng.integers(len(dataset)))
                report, grads = train_step(model, dataset[gi], cfg, step)
                norm = clip_gradients(grads, tc.clip_norm)
                lr = learning_rate(cfg, step)
                opt.step(grads, lr)
                record = StepRecord(step, gi, lr, norm, report)
                result.history.append(record)
                if log_fh is not None:
                    if writer is None:
                        writer = csv.DictWriter(log_fh, fieldnames=list(record.row()))
                        writer.writeheader()
                    writer.writerow(record.row())
                    log_fh.flush()
                if log is not None:
                    log(record)
                if out is not None and tc.checkpoint_every and step % tc.checkpoint_every == 0:
                    save_checkpoint(out / f"step_{step:06d}.ckpt", model, step)
        for p in model.params.values():
            p.grad = None
        if out is not None:
            save_checkpoint(out / "final.ckpt", model, tc.steps)
    finally:
        if log_fh is not None:
            log_fh.close()
    return result


def predict(model: CondaModel, group: GroupSample):
    """Inference without graph construction; returns the full prediction."""
    if group.size != (model.input_size, model.input_size):
        raise ShapeError(f"group size {group.size} does not match model input {model.input_size}")
    with no_grad(), thread_limit():
        return model(group.images.astype(model.dtype))


def evaluate(dataset: Sequence[GroupSample], model: CondaModel | Checkpoint) -> MetricReport:
    if isinstance(model, Checkpoint):
        model = model.model()
    if not dataset:
        raise ValueError("cannot evaluate an empty dataset")
    pairs, names = [], []
    for g in dataset:
        prob = predict(model, g).prob.data
        for i in range(g.n):
            pairs.append((np.clip(prob[i, ..., 0], 0.0, 1.0), g.masks[i, ..., 0]))
            names.append((g.name, g.stems[i] if g.stems else str(i)))
    return evaluate_pairs(pairs, names)
