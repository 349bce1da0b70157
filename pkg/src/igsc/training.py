"""Training of the classifier-generating network: cross-entropy objective
over the seen classes, exact hand-derived gradients, Adam updates, and a
randomized finite-difference suite that validates every derivative rule.

Checkpoint format (model file): magic "IGSCMDL1", seven u32 LE fields
(variant, hidden activation, v, h1, h2, d, h), then the six tensors in
fixed order (W1, b1, W2, b2, Wout, bout) as f64 LE row-major.
"""
from __future__ import annotations

import os
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import model as model_mod
from . import netcore
from .data import Dataset
from .errors import FormatError, NumericError, UsageError, ValidationError
from .model import ClassifierForm, HypernetParams, packed_size

MODEL_MAGIC = b"IGSCMDL1"
PROB_CLAMP = 1e-12

TENSOR_ORDER = ("W1", "b1", "W2", "b2", "Wout", "bout")


@dataclass
class TrainConfig:
    form: ClassifierForm
    h1: int = 1024
    h2: int = 1024
    learning_rate: float = 1e-5
    batch_size: int = 64
    epochs: int = 100
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    scoring_mode: str = "softmax"
    hidden_activation: str = "tanh"
    pure_softmax_ce: bool = False  # drop the (1 - y) log(1 - p) terms
    merge_val: bool = False
    val_select: bool = False  # keep the epoch with the best val accuracy
    early_stop_patience: int = 0  # 0 disables early stopping

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValidationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.h1 < 1 or self.h2 < 1:
            raise ValidationError(f"hidden widths must be >= 1, got h1={self.h1}, h2={self.h2}")
        if self.scoring_mode not in ("softmax", "sigmoid"):
            raise ValidationError(f"scoring_mode must be softmax or sigmoid, got {self.scoring_mode!r}")
        if self.hidden_activation not in model_mod.HIDDEN_ACTIVATIONS:
            raise ValidationError(f"hidden_activation must be one of {model_mod.HIDDEN_ACTIVATIONS}")


@dataclass
class EpochStats:
    loss: float
    val_acc: float | None
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochStats] = field(default_factory=list)

    @property
    def losses(self) -> list[float]:
        return [e.loss for e in self.epochs]

    @property
    def final_loss(self) -> float:
        return self.epochs[-1].loss

    def as_dict(self) -> dict:
        return {
            "epochs": [
                {"epoch": i + 1, "loss": e.loss, "val_acc": e.val_acc, "seconds": e.seconds}
                for i, e in enumerate(self.epochs)
            ],
            "final_loss": self.final_loss,
        }


def loss(probs, onehot) -> float:
    """Per-sample objective: -sum_j [y_j log p_j + (1 - y_j) log(1 - p_j)],
    with probabilities clamped to [1e-12, 1 - 1e-12] to keep logs finite."""
    p = netcore.as_f64(probs)
    y = netcore.as_f64(onehot)
    if p.shape != y.shape or p.ndim != 1:
        raise UsageError(f"probs shape {p.shape} and onehot shape {y.shape} must be equal vectors")
    if not (np.all((y == 0.0) | (y == 1.0)) and y.sum() == 1.0):
        raise UsageError("onehot must contain exactly one 1 and zeros elsewhere")
    pc = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.sum(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc)))


def _batch_objective(probs: np.ndarray, label_pos: np.ndarray, pure_softmax_ce: bool) -> float:
    """Sum of per-sample losses over a batch; label_pos indexes the class
    axis of the probability matrix."""
    pc = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    rows = np.arange(pc.shape[0])
    true_term = -np.log(pc[rows, label_pos]).sum()
    if pure_softmax_ce:
        return float(true_term)
    other = -np.log(1.0 - pc).sum() + np.log(1.0 - pc[rows, label_pos]).sum()
    return float(true_term + other)


def _prob_gradient(probs: np.ndarray, label_pos: np.ndarray, pure_softmax_ce: bool) -> np.ndarray:
    """d(objective)/d(probs); the clamp is treated as pass-through (it only
    binds at saturations far beyond anything a finite score produces)."""
    pc = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    rows = np.arange(pc.shape[0])
    if pure_softmax_ce:
        g = np.zeros_like(pc)
        g[rows, label_pos] = -1.0 / pc[rows, label_pos]
        return g
    g = 1.0 / (1.0 - pc)
    g[rows, label_pos] = -1.0 / pc[rows, label_pos]
    return g


def forward(images, label_pos, prototypes, params: HypernetParams, config: TrainConfig):
    """Batch forward pass; returns (objective value, cache for backward)."""
    cache = model_mod.hypernet_forward(images, params)
    scores, head_cache = model_mod.classifier_scores(cache["F"], prototypes, params.form)
    probs = model_mod.normalize_scores(scores, config.scoring_mode)
    label_pos = np.asarray(label_pos, dtype=np.int64)
    value = _batch_objective(probs, label_pos, config.pure_softmax_ce)
    cache.update(head_cache)
    cache.update({"scores": scores, "probs": probs, "label_pos": label_pos})
    return value, cache


def backward(images, label_pos, prototypes, params: HypernetParams, config: TrainConfig):
    """Exact gradient of the batch objective w.r.t. every tensor in params,
    including the path through the generated classifier weights.

    Returns (objective value, gradients keyed like params.tensors()).
    """
    value, cache = forward(images, label_pos, prototypes, params, config)
    P = netcore.as_f64(prototypes)
    probs, scores = cache["probs"], cache["scores"]

    g_probs = _prob_gradient(probs, cache["label_pos"], config.pure_softmax_ce)
    if config.scoring_mode == "softmax":
        g_scores = netcore.softmax_backward(g_probs, probs)
    else:
        g_scores = g_probs * probs * (1.0 - probs)

    form = params.form
    if form.variant == "linear":
        g_weights = g_scores @ P  # (n, d)
        g_bias = g_scores.sum(axis=1)  # (n,)
        g_flat = np.concatenate([g_weights, g_bias[:, None]], axis=1)
    else:
        T, out_w = cache["T"], cache["out_w"]
        g_out_w = np.einsum("bc,bch->bh", g_scores, T)
        g_out_b = g_scores.sum(axis=1)
        g_hidden = g_scores[:, :, None] * out_w[:, None, :]  # (n, C, h)
        g_pre = g_hidden * (1.0 - T**2)
        g_m1 = np.einsum("bch,cd->bhd", g_pre, P)
        g_hidden_bias = g_pre.sum(axis=1)
        n = g_scores.shape[0]
        g_flat = np.concatenate(
            [g_m1.reshape(n, form.h * form.d), g_hidden_bias, g_out_w, g_out_b[:, None]], axis=1
        )

    act = params.hidden_activation
    X, Z1, A1, Z2, A2 = cache["X"], cache["Z1"], cache["A1"], cache["Z2"], cache["A2"]
    grads = {}
    grads["Wout"] = g_flat.T @ A2
    grads["bout"] = g_flat.sum(axis=0)
    g_a2 = g_flat @ params.Wout
    g_z2 = netcore.activation_backward(g_a2, Z2, A2, act)
    grads["W2"] = g_z2.T @ A1
    grads["b2"] = g_z2.sum(axis=0)
    g_a1 = g_z2 @ params.W2
    g_z1 = netcore.activation_backward(g_a1, Z1, A1, act)
    grads["W1"] = g_z1.T @ X
    grads["b1"] = g_z1.sum(axis=0)

    for name in TENSOR_ORDER:
        if not np.all(np.isfinite(grads[name])):
            raise NumericError(f"non-finite gradient in tensor {name}")
    return value, grads


@dataclass
class AdamState:
    """First/second moment accumulators shaped like every trainable tensor."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: HypernetParams) -> "AdamState":
        tensors = params.tensors()
        return cls(
            m={k: np.zeros_like(a) for k, a in tensors.items()},
            v={k: np.zeros_like(a) for k, a in tensors.items()},
        )


def adam_step(params: HypernetParams, grads, state: AdamState, config: TrainConfig):
    """One Adam update in place; the step counter is incremented before the
    bias corrections."""
    state.t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    correct1 = 1.0 - b1**state.t
    correct2 = 1.0 - b2**state.t
    for name, tensor in params.tensors().items():
        g = grads[name]
        if g.shape != tensor.shape:
            raise ValidationError(f"gradient for {name} has shape {g.shape}, expected {tensor.shape}")
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g**2
        m_hat = state.m[name] / correct1
        v_hat = state.v[name] / correct2
        tensor -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return params, state


def init_params(input_dim: int, config: TrainConfig, rng: np.random.Generator) -> HypernetParams:
    """Uniform(-a, a) weights with a = sqrt(6 / (fan_in + fan_out)); zero biases."""

    def layer(fan_out, fan_in):
        a = np.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-a, a, size=(fan_out, fan_in))

    p = packed_size(config.form)
    return HypernetParams(
        W1=layer(config.h1, input_dim),
        b1=np.zeros(config.h1),
        W2=layer(config.h2, config.h1),
        b2=np.zeros(config.h2),
        Wout=layer(p, config.h2),
        bout=np.zeros(p),
        form=config.form,
        hidden_activation=config.hidden_activation,
    )


def _val_accuracy(params, features, val_idx, labels, prototypes_seen, seen_sorted) -> float:
    from .evaluation import per_class_top1

    scores = model_mod.score_matrix(features[val_idx], prototypes_seen, params)
    preds = seen_sorted[np.argmax(scores, axis=1)]
    return per_class_top1(preds, labels[val_idx], seen_sorted)


def train(dataset: Dataset, config: TrainConfig):
    """Run mini-batch Adam over shuffled epochs; deterministic given the
    seed. Returns (trained params, per-epoch history)."""
    if config.form.d != dataset.prototype_dim:
        raise ValidationError(
            f"classifier form d={config.form.d} != dataset prototype dim {dataset.prototype_dim}"
        )
    train_idx = dataset.splits.train_idx
    if config.merge_val and dataset.splits.val_idx.size:
        train_idx = np.concatenate([train_idx, dataset.splits.val_idx])
    if train_idx.size == 0:
        raise UsageError("dataset has an empty train split")

    seen_sorted = np.sort(dataset.seen_classes)
    prototypes_seen = dataset.prototypes[seen_sorted]
    X = dataset.features[train_idx]
    y_pos = np.searchsorted(seen_sorted, dataset.labels[train_idx])

    rng = np.random.default_rng(config.seed)
    params = init_params(dataset.feature_dim, config, rng)
    state = AdamState.for_params(params)
    history = TrainHistory()

    use_val = dataset.splits.val_idx.size > 0 and not config.merge_val
    best_val, best_params = -1.0, None
    best_monitor, stale = np.inf, 0

    n = train_idx.size
    for _ in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            value, grads = backward(X[batch], y_pos[batch], prototypes_seen, params, config)
            if not np.isfinite(value):
                raise NumericError("training objective became non-finite")
            epoch_loss += value
            adam_step(params, grads, state, config)

        val_acc = None
        if use_val:
            val_acc = _val_accuracy(
                params, dataset.features, dataset.splits.val_idx, dataset.labels,
                prototypes_seen, seen_sorted,
            )
            if config.val_select and val_acc > best_val:
                best_val, best_params = val_acc, params.copy()
        history.epochs.append(EpochStats(loss=epoch_loss, val_acc=val_acc,
                                         seconds=time.perf_counter() - started))

        if config.early_stop_patience > 0:
            monitor = -val_acc if use_val else epoch_loss
            if monitor < best_monitor - 1e-12:
                best_monitor, stale = monitor, 0
            else:
                stale += 1
                if stale >= config.early_stop_patience:
                    break

    if config.val_select and best_params is not None:
        params = best_params
    return params, history


# --- checkpoint I/O -------------------------------------------------------

_VARIANT_CODES = {"linear": 0, "nonlinear": 1}
_ACT_CODES = {"tanh": 0, "relu": 1}


def save_checkpoint(path, params: HypernetParams) -> None:
    """Write a model checkpoint (counts u32 LE, tensors f64 LE)."""
    form = params.form
    header = MODEL_MAGIC + struct.pack(
        "<7I",
        _VARIANT_CODES[form.variant],
        _ACT_CODES[params.hidden_activation],
        params.input_dim,
        params.h1,
        params.h2,
        form.d,
        form.h,
    )
    body = b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes() for t in params.tensors().values())
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(header + body)
    os.replace(tmp, path)


def load_checkpoint(path) -> HypernetParams:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"missing file: {path}")
    blob = path.read_bytes()
    if len(blob) < 36 or blob[:8] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic, expected {MODEL_MAGIC!r}")
    variant_code, act_code, v, h1, h2, d, h = struct.unpack("<7I", blob[8:36])
    variants = {c: n for n, c in _VARIANT_CODES.items()}
    acts = {c: n for n, c in _ACT_CODES.items()}
    if variant_code not in variants:
        raise FormatError(f"{path}: unknown classifier variant code {variant_code}")
    if act_code not in acts:
        raise FormatError(f"{path}: unknown activation code {act_code}")
    form = ClassifierForm(variants[variant_code], d=d, h=h)
    p = packed_size(form)
    shapes = [(h1, v), (h1,), (h2, h1), (h2,), (p, h2), (p,)]
    total = sum(int(np.prod(s)) for s in shapes)
    if len(blob) != 36 + 8 * total:
        raise FormatError(f"{path}: expected {36 + 8 * total} bytes, got {len(blob)}")
    flat = np.frombuffer(blob, dtype="<f8", offset=36)
    tensors, offset = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        tensors.append(flat[offset : offset + size].reshape(shape).copy())
        offset += size
    return HypernetParams(*tensors, form=form, hidden_activation=acts[act_code])


# --- flat parameter packing and the gradient-check suite ------------------


def pack_params(params: HypernetParams) -> np.ndarray:
    return np.concatenate([t.ravel() for t in params.tensors().values()])


def unpack_params_like(flat, template: HypernetParams) -> HypernetParams:
    flat = netcore.as_f64(flat)
    tensors, offset = {}, 0
    for name, t in template.tensors().items():
        tensors[name] = flat[offset : offset + t.size].reshape(t.shape).copy()
        offset += t.size
    if offset != flat.size:
        raise ValidationError(f"flat vector length {flat.size} != parameter count {offset}")
    return HypernetParams(
        **tensors,
        form=ClassifierForm(template.form.variant, template.form.d, template.form.h),
        hidden_activation=template.hidden_activation,
    )


def _flat_index_tensor(template: HypernetParams, index: int) -> str:
    offset = 0
    for name, t in template.tensors().items():
        if index < offset + t.size:
            return name
        offset += t.size
    return "?"


@dataclass
class GradCheckResult:
    checks: int
    worst_rel_err: float
    worst_tensor: str
    worst_case: str
    failures: list[str]

    @property
    def passed(self) -> bool:
        return not self.failures


def gradcheck_suite(
    trials: int = 60,
    seed: int = 1,
    eps: float = 1e-6,
    tol: float = 1e-4,
    forms=("linear", "nonlinear"),
    modes=("softmax", "sigmoid"),
    hidden_activations=("tanh",),
    pure_softmax_ce: bool = False,
) -> GradCheckResult:
    """Compare analytic gradients against central finite differences on
    random tiny networks (v<=8, h1,h2<=6, d<=4, h<=3, C<=4).

    Relative error uses max(1, |fd|) in the denominator so near-zero
    coordinates are judged on absolute error.
    """
    if trials < 1:
        raise UsageError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    combos = [(f, m, a) for f in forms for m in modes for a in hidden_activations]
    worst, worst_tensor, worst_case = 0.0, "", ""
    failures: list[str] = []

    for trial in range(trials):
        variant, mode, act = combos[trial % len(combos)]
        v = int(rng.integers(2, 9))
        h1 = int(rng.integers(2, 7))
        h2 = int(rng.integers(2, 7))
        d = int(rng.integers(1, 5))
        h = int(rng.integers(1, 4))
        n_classes = int(rng.integers(2, 5))
        batch = int(rng.integers(1, 4))
        form = ClassifierForm(variant, d=d, h=h)
        config = TrainConfig(
            form=form, h1=h1, h2=h2, scoring_mode=mode, hidden_activation=act,
            pure_softmax_ce=pure_softmax_ce,
        )

        for _ in range(32):
            params = init_params(v, config, rng)
            for name, t in params.tensors().items():
                if name.startswith("b"):
                    t[...] = rng.uniform(-1.0, 1.0, size=t.shape)
            images = rng.uniform(-1.0, 1.0, size=(batch, v))
            prototypes = rng.uniform(-1.0, 1.0, size=(n_classes, d))
            labels = rng.integers(0, n_classes, size=batch)
            if act != "relu":
                break
            cache = model_mod.hypernet_forward(images, params)
            # relu kinks break finite differences; resample near-zero preactivations
            if min(np.abs(cache["Z1"]).min(), np.abs(cache["Z2"]).min()) > 1e-4:
                break

        template = params

        def objective(flat):
            candidate = unpack_params_like(flat, template)
            value, _ = forward(images, labels, prototypes, candidate, config)
            return value

        _, grads = backward(images, labels, prototypes, params, config)
        analytic = np.concatenate([grads[name].ravel() for name in TENSOR_ORDER])
        numeric = netcore.finite_diff_gradient(objective, pack_params(params), eps)

        rel = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
        idx = int(np.argmax(rel))
        case = f"trial {trial}: form={variant}, mode={mode}, act={act}, v={v}, h1={h1}, h2={h2}, d={d}, h={h}, C={n_classes}, batch={batch}"
        if rel[idx] > worst:
            worst = float(rel[idx])
            worst_tensor = _flat_index_tensor(template, idx)
            worst_case = case
        if rel[idx] > tol:
            failures.append(f"{case}: tensor {_flat_index_tensor(template, idx)} rel err {rel[idx]:.3e}")

    return GradCheckResult(
        checks=trials,
        worst_rel_err=worst,
        worst_tensor=worst_tensor,
        worst_case=worst_case,
        failures=failures,
    )
