"""The image-guided classification model.

A trained network maps an image embedding to the packed weights of a
per-image label classifier; that classifier scores class prototypes, and
the scores drive zero-shot prediction (argmax over candidate classes) or
generalized zero-shot prediction with calibrated stacking (a constant
penalty subtracted from seen-class scores).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import netcore
from .errors import ShapeError, UsageError, ValidationError

VARIANTS = ("linear", "nonlinear")
HIDDEN_ACTIVATIONS = ("tanh", "relu")


@dataclass
class ClassifierForm:
    """Shape of the generated per-image classifier.

    d is the prototype dimension; h is the hidden width of the nonlinear
    variant (ignored and forced to 0 for linear).
    """

    variant: str
    d: int
    h: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"classifier variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.d < 1:
            raise ValidationError(f"prototype dimension d must be >= 1, got {self.d}")
        if self.variant == "linear":
            self.h = 0
        elif self.h < 1:
            raise ValidationError(f"nonlinear classifier width h must be >= 1, got {self.h}")


def packed_size(form: ClassifierForm) -> int:
    """Number of scalars in the flat layout of a generated classifier."""
    if form.variant == "linear":
        return form.d + 1
    return form.h * (form.d + 2) + 1


@dataclass
class LinearClassifier:
    """Per-image linear scorer: weight . prototype + bias."""

    weight: np.ndarray  # (d,)
    bias: float

    def score(self, prototype) -> float:
        p = netcore.as_f64(prototype)
        if p.shape != self.weight.shape:
            raise ShapeError(f"prototype shape {p.shape} != classifier weight shape {self.weight.shape}")
        return float(self.weight @ p + self.bias)

    def pack(self) -> np.ndarray:
        return np.concatenate([self.weight, [self.bias]])


@dataclass
class NonlinearClassifier:
    """Per-image two-layer scorer: out_w . tanh(hidden_w @ prototype + hidden_b) + out_b."""

    hidden_weight: np.ndarray  # (h, d)
    hidden_bias: np.ndarray  # (h,)
    output_weight: np.ndarray  # (h,)
    output_bias: float

    def score(self, prototype) -> float:
        p = netcore.as_f64(prototype)
        if p.shape != (self.hidden_weight.shape[1],):
            raise ShapeError(
                f"prototype shape {p.shape} != classifier input shape ({self.hidden_weight.shape[1]},)"
            )
        hidden = np.tanh(self.hidden_weight @ p + self.hidden_bias)
        return float(self.output_weight @ hidden + self.output_bias)

    def pack(self) -> np.ndarray:
        return np.concatenate(
            [self.hidden_weight.ravel(), self.hidden_bias, self.output_weight, [self.output_bias]]
        )


GeneratedClassifier = LinearClassifier | NonlinearClassifier


def unpack(flat, form: ClassifierForm) -> GeneratedClassifier:
    """Slice a flat parameter vector into a classifier.

    Layout: linear = [weight (d), bias (1)]; nonlinear = [hidden_weight
    row-major (h*d), hidden_bias (h), output_weight (h), output_bias (1)].
    """
    flat = netcore.as_f64(flat)
    p = packed_size(form)
    if flat.shape != (p,):
        raise ShapeError(f"flat vector has shape {flat.shape}, expected ({p},) for form {form}")
    if form.variant == "linear":
        return LinearClassifier(weight=flat[: form.d].copy(), bias=float(flat[form.d]))
    h, d = form.h, form.d
    return NonlinearClassifier(
        hidden_weight=flat[: h * d].reshape(h, d).copy(),
        hidden_bias=flat[h * d : h * d + h].copy(),
        output_weight=flat[h * d + h : h * d + 2 * h].copy(),
        output_bias=float(flat[-1]),
    )


def pack(clf: GeneratedClassifier) -> np.ndarray:
    return clf.pack()


def score_label(clf: GeneratedClassifier, prototype) -> float:
    """Raw score of one class prototype under a generated classifier."""
    return clf.score(prototype)


@dataclass
class HypernetParams:
    """Trainable parameters of the classifier-generating network.

    Two hidden affine layers plus an output layer whose width equals the
    packed classifier size. These are the only parameters learned from
    data; the per-image classifiers they emit are transient.
    """

    W1: np.ndarray  # (h1, v)
    b1: np.ndarray  # (h1,)
    W2: np.ndarray  # (h2, h1)
    b2: np.ndarray  # (h2,)
    Wout: np.ndarray  # (p, h2)
    bout: np.ndarray  # (p,)
    form: ClassifierForm
    hidden_activation: str = "tanh"

    def __post_init__(self):
        for name in ("W1", "b1", "W2", "b2", "Wout", "bout"):
            setattr(self, name, netcore.as_f64(getattr(self, name)))
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValidationError(
                f"hidden_activation must be one of {HIDDEN_ACTIVATIONS}, got {self.hidden_activation!r}"
            )
        h1, v = self.W1.shape
        h2 = self.W2.shape[0]
        p = packed_size(self.form)
        expected = {
            "b1": (h1,),
            "W2": (h2, h1),
            "b2": (h2,),
            "Wout": (p, h2),
            "bout": (p,),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ShapeError(f"{name} has shape {got}, expected {shape}")

    @property
    def input_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def h1(self) -> int:
        return self.W1.shape[0]

    @property
    def h2(self) -> int:
        return self.W2.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        """Trainable tensors in the fixed pack/checkpoint order."""
        return {
            "W1": self.W1,
            "b1": self.b1,
            "W2": self.W2,
            "b2": self.b2,
            "Wout": self.Wout,
            "bout": self.bout,
        }

    def copy(self) -> "HypernetParams":
        return HypernetParams(
            W1=self.W1.copy(),
            b1=self.b1.copy(),
            W2=self.W2.copy(),
            b2=self.b2.copy(),
            Wout=self.Wout.copy(),
            bout=self.bout.copy(),
            form=ClassifierForm(self.form.variant, self.form.d, self.form.h),
            hidden_activation=self.hidden_activation,
        )


def hypernet_forward(images, params: HypernetParams) -> dict[str, np.ndarray]:
    """Batched forward pass of the generator network.

    Returns every intermediate needed by the backward pass; F holds one
    packed classifier per row.
    """
    X = netcore.as_f64(images)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != params.input_dim:
        raise ShapeError(f"images have shape {X.shape}, expected (n, {params.input_dim})")
    act = params.hidden_activation
    Z1 = X @ params.W1.T + params.b1
    A1 = netcore.activation(Z1, act)
    Z2 = A1 @ params.W2.T + params.b2
    A2 = netcore.activation(Z2, act)
    F = A2 @ params.Wout.T + params.bout
    return {"X": X, "Z1": Z1, "A1": A1, "Z2": Z2, "A2": A2, "F": F}


def classifier_scores(F, prototypes, form: ClassifierForm):
    """Score every prototype under every packed classifier in F.

    Returns (scores of shape (n, C), cache) where the cache carries the
    nonlinear hidden activations for the backward pass.
    """
    F = netcore.as_f64(F)
    P = netcore.as_f64(prototypes)
    if P.ndim != 2 or P.shape[1] != form.d:
        raise ShapeError(f"prototypes have shape {P.shape}, expected (C, {form.d})")
    if form.variant == "linear":
        weights = F[:, : form.d]
        biases = F[:, form.d]
        scores = weights @ P.T + biases[:, None]
        return scores, {}
    h, d = form.h, form.d
    M1 = F[:, : h * d].reshape(-1, h, d)
    hidden_bias = F[:, h * d : h * d + h]
    out_w = F[:, h * d + h : h * d + 2 * h]
    out_b = F[:, -1]
    # U[b, c, :] = M1[b] @ P[c] + hidden_bias[b]
    U = np.einsum("bhd,cd->bch", M1, P) + hidden_bias[:, None, :]
    T = np.tanh(U)
    scores = np.einsum("bch,bh->bc", T, out_w) + out_b[:, None]
    return scores, {"M1": M1, "out_w": out_w, "U": U, "T": T}


def score_matrix(images, prototypes, params: HypernetParams) -> np.ndarray:
    """Raw (pre-normalization) score of every class for every image."""
    cache = hypernet_forward(images, params)
    scores, _ = classifier_scores(cache["F"], prototypes, params.form)
    return scores


def generate_classifier(image, params: HypernetParams) -> GeneratedClassifier:
    """Emit the per-image classifier for one image embedding."""
    image = netcore.as_f64(image)
    if image.ndim != 1:
        raise ShapeError(f"expected a single image vector, got shape {image.shape}")
    cache = hypernet_forward(image, params)
    return unpack(cache["F"][0], params.form)


def compatibility(image, prototypes, params: HypernetParams, mode: str = "softmax") -> np.ndarray:
    """Normalized per-class compatibility of one image.

    softmax mode returns a probability vector over the classes; sigmoid
    mode scores each class independently in (0, 1) for multi-label use.
    """
    scores = score_matrix(image, prototypes, params)[0]
    return normalize_scores(scores, mode)


def normalize_scores(scores, mode: str) -> np.ndarray:
    scores = netcore.as_f64(scores)
    if mode == "softmax":
        return netcore.softmax_rows(scores) if scores.ndim == 2 else netcore.softmax(scores)
    if mode == "sigmoid":
        return netcore.sigmoid(scores)
    raise UsageError(f"scoring mode must be 'softmax' or 'sigmoid', got {mode!r}")


def argmax_over_candidates(scores, candidate_ids) -> int:
    """Index of the best-scoring candidate; ties go to the lowest class id."""
    cands = np.asarray(sorted(int(c) for c in candidate_ids), dtype=np.int64)
    if cands.size == 0:
        raise UsageError("candidate class set is empty")
    scores = netcore.as_f64(scores)
    # np.argmax returns the first maximum; candidates are sorted ascending.
    return int(cands[np.argmax(scores[cands])])


def predict_zsl(image, prototypes, candidate_ids, params: HypernetParams) -> int:
    """Predicted class id among the candidates (argmax of the raw scores;
    softmax is monotone so this matches the argmax of compatibility)."""
    scores = score_matrix(image, prototypes, params)[0]
    return argmax_over_candidates(scores, candidate_ids)


def predict_gzsl(image, prototypes, seen_flags, gamma: float, params: HypernetParams) -> int:
    """Predicted class id over all classes with calibrated stacking:
    seen-class scores are reduced by gamma before the argmax."""
    flags = np.asarray(seen_flags, dtype=bool)
    scores = score_matrix(image, prototypes, params)[0]
    if flags.shape != scores.shape:
        raise ShapeError(f"seen_flags shape {flags.shape} != class count ({scores.shape[0]},)")
    adjusted = scores - gamma * flags.astype(np.float64)
    return argmax_over_candidates(adjusted, range(scores.shape[0]))
