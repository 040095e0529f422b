"""Training, source-validation model selection and leave-one-domain-out runs."""

import dataclasses
import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .errors import NumericError, ValidationError
from .model import Checkpoint, init_params, model_forward, predict
from .numerics import Parameter, cross_entropy
from .rng import Rng
from .transforms import AloftConfig


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 3e-4
    min_lr: float = 1e-5
    weight_decay: float = 0.05
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    hflip: bool = False
    aloft: AloftConfig = field(default_factory=AloftConfig)

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        if isinstance(self.aloft, dict):
            self.aloft = AloftConfig(**self.aloft)
        if self.epochs < 0:
            raise ValidationError(f"epochs must be non-negative, got {self.epochs}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be positive, got {self.batch_size}")
        if not (self.lr >= self.min_lr >= 0):
            raise ValidationError(f"need lr >= min_lr >= 0, got lr={self.lr} min_lr={self.min_lr}")
        if self.weight_decay < 0:
            raise ValidationError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if len(self.betas) != 2 or not all(0 <= b < 1 for b in self.betas):
            raise ValidationError(f"betas must be two values in [0, 1), got {self.betas}")

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        d["aloft"] = self.aloft.to_dict()
        return d


# ---------------------------------------------------------------------------
# optimizer and schedule


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def _real_view(a):
    if np.iscomplexobj(a):
        return a.view(np.float32 if a.dtype == np.complex64 else np.float64)
    return a


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _all_finite(g):
    for i in range(g.size):
        if not np.isfinite(g[i]):
            return False
    return True


@nb.njit(cache=True, nogil=True, error_model="numpy")
def _adamw_kernel(p, g, m, v, lr, b1, b2, c1, c2, eps, decay):
    for i in range(p.size):
        m[i] = b1 * m[i] + (1 - b1) * g[i]
        v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i]
        p[i] = p[i] * decay - lr * (m[i] / c1) / (np.sqrt(v[i] / c2) + eps)


def adamw_step(params, grads, state, lr, cfg):
    """One AdamW update in place: decoupled weight decay, bias-corrected moments.

    ``params`` and ``grads`` map names to arrays.  Complex values are updated
    as independent real and imaginary components.
    """
    flat = {}
    for name, g in grads.items():
        p = params[name]
        if np.shape(g) != p.shape:
            raise ValidationError(f"gradient shape {np.shape(g)} does not match parameter {name!r} {p.shape}")
        g = _real_view(np.ascontiguousarray(g, dtype=p.dtype)).reshape(-1)
        if not _all_finite(g):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        flat[name] = g
    state.step += 1
    b1, b2 = cfg.betas
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    decay = 1.0 - lr * cfg.weight_decay
    for name, g in flat.items():
        p = params[name]
        if not p.flags.c_contiguous:
            raise ValidationError(f"parameter {name!r} must be contiguous for in-place updates")
        pr = _real_view(p).reshape(-1)
        m = state.m.setdefault(name, np.zeros_like(pr))
        v = state.v.setdefault(name, np.zeros_like(pr))
        _adamw_kernel(pr, g, m, v, lr, b1, b2, c1, c2, cfg.eps, decay)
    return params, state


def cosine_lr(step, total_steps, lr, min_lr):
    """Cosine decay from ``lr`` at step 0 to ``min_lr`` at ``total_steps``."""
    if total_steps < 1 or not 0 <= step <= total_steps:
        raise ValidationError(f"need 0 <= step <= total_steps and total_steps >= 1, got {step}/{total_steps}")
    return min_lr + 0.5 * (lr - min_lr) * (1.0 + math.cos(math.pi * step / total_steps))


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list
    best_epoch: int


def _sources(data, target):
    names = data.domain_names
    if target not in names:
        raise ValidationError(f"target domain {target!r} not in dataset ({', '.join(names)})")
    sources = [n for n in names if n != target]
    if not sources:
        raise ValidationError("need at least one source domain besides the target")
    return sources


def _accuracy(params, model_cfg, split):
    if len(split) == 0:
        raise ValidationError("cannot evaluate on an empty split")
    logits = predict(params, model_cfg, split.floats())
    return float(np.mean(np.argmax(logits, axis=1) == split.labels))


def train(cfg, model_cfg, data, target_domain, log=None):
    """Train on every domain but ``target_domain``; keep the best source-val epoch.

    Ties in source-val accuracy go to the earlier epoch.  The target domain's
    samples are never read.
    """
    sources = _sources(data, target_domain)
    model_cfg = dataclasses.replace(model_cfg, aloft=cfg.aloft,
                                    num_classes=data.num_classes, input_hw=tuple(data.image_hw))
    train_split = data.gather(sources, "train")
    val_split = data.gather(sources, "val")
    if len(train_split) == 0:
        raise ValidationError(f"no training samples in source domains {sources}")
    leaked = [i for i in train_split.ids if i.split("/", 1)[0] == target_domain]
    if leaked:
        raise ValidationError(f"target-domain samples in the training set, e.g. {leaked[0]}")

    root = Rng(cfg.seed, (0x7124,))
    params = init_params(model_cfg, seed=cfg.seed)
    values = {name: p.data for name, p in params.items()}
    n = len(train_split)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    state = OptimizerState()
    history = []
    best_acc, best_epoch = -1.0, 0
    best = {name: v.copy() for name, v in values.items()}
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = root.child(epoch, 0).permutation(n)
        losses = []
        for b in range(steps_per_epoch):
            idx = np.sort(order[b * cfg.batch_size:(b + 1) * cfg.batch_size])
            x = _batch(train_split, idx)
            step_rng = root.child(epoch, 1, b)
            if cfg.hflip:
                flip = step_rng.child(0).uniform(len(idx)) < 0.5
                x[flip] = x[flip, :, ::-1]
            for p in params.values():
                p.grad = None
            loss = cross_entropy(model_forward(x, params, model_cfg, "train", step_rng.child(1)),
                                 train_split.labels[idx])
            loss.backward()
            grads = {name: p.grad for name, p in params.items() if p.grad is not None}
            adamw_step(values, grads, state, cosine_lr(step, total, cfg.lr, cfg.min_lr), cfg)
            losses.append(float(loss.data) * len(idx))
            step += 1
        val_acc = _accuracy(params, model_cfg, val_split)
        record = {"epoch": epoch, "train_loss": sum(losses) / n, "val_acc": val_acc}
        history.append(record)
        if log:
            log(record)
        if val_acc > best_acc:
            best_acc, best_epoch = val_acc, epoch
            best = {name: v.copy() for name, v in values.items()}
    meta = {"target_domain": target_domain, "source_domains": sources,
            "best_epoch": best_epoch, "train": cfg.to_dict(), "history": history}
    ckpt = Checkpoint(model_cfg, {k: Parameter(v, k) for k, v in best.items()}, meta)
    return TrainResult(ckpt, history, best_epoch)


def _batch(split, idx):
    return split.images[idx].astype(np.float32) / np.float32(255.0)


def evaluate(ckpt, data, domain, split="all"):
    """Eval-mode top-1 accuracy of ``ckpt`` on one split of one domain."""
    return _accuracy(ckpt.params, ckpt.config, data.domain(domain).split(split))


# ---------------------------------------------------------------------------
# leave-one-domain-out


@dataclass
class RunResult:
    accuracies: dict
    average: float
    best_epochs: dict = field(default_factory=dict)
    histories: dict = field(default_factory=dict)
    source_val: dict = field(default_factory=dict)
    seed: int = 0

    def to_dict(self):
        return dataclasses.asdict(self)


def lodo_run(cfg, model_cfg, data, domains=None, log=None, keep=None):
    """Hold out each domain in turn; train on the rest with seed ``cfg.seed + index``.

    ``keep``, if given, receives ``(domain, TrainResult)`` for every run.
    """
    names = data.domain_names
    if len(names) < 2:
        raise ValidationError(f"leave-one-domain-out needs at least two domains, got {len(names)}")
    targets = names if domains is None else tuple(domains)
    accs, epochs, hists, source_val = {}, {}, {}, {}
    for target in targets:
        index = names.index(target) if target in names else -1
        run_cfg = dataclasses.replace(cfg, seed=cfg.seed + index)
        result = train(run_cfg, model_cfg, data, target, log=log)
        accs[target] = evaluate(result.checkpoint, data, target, "all")
        epochs[target] = result.best_epoch
        hists[target] = result.history
        source_val[target] = max((h["val_acc"] for h in result.history), default=float("nan"))
        if keep:
            keep(target, result)
    average = float(np.mean(list(accs.values())))
    return RunResult(accs, average, epochs, hists, source_val, cfg.seed)


@dataclass
class SeedSummary:
    runs: list
    mean: float
    std: float
    sem: float

    def to_dict(self):
        return {"mean": self.mean, "std": self.std, "sem": self.sem,
                "runs": [r.to_dict() for r in self.runs]}


def summarize(runs):
    """Mean, sample std and standard error of the LODO averages over seeds."""
    avgs = np.array([r.average for r in runs], dtype=np.float64)
    std = float(avgs.std(ddof=1)) if len(avgs) > 1 else 0.0
    return SeedSummary(list(runs), float(avgs.mean()), std, std / math.sqrt(len(avgs)))


def seed_list(base, count):
    """Seeds used for repeated LODO runs: ``base, base + 100, ...``."""
    return [base + 100 * i for i in range(count)]


def lodo_seeds(cfg, model_cfg, data, seeds, log=None):
    runs = [lodo_run(dataclasses.replace(cfg, seed=s), model_cfg, data, log=log) for s in seeds]
    return summarize(runs)


def run_manifest(cfg, model_cfg, result):
    """JSON-ready record of a LODO run: config echo, histories and final table."""
    return {"train": cfg.to_dict(), "model": model_cfg.to_dict(), "result": result.to_dict()}
