"""Closed-set identification from single-period feature vectors.

One sub-model is trained per morphology, because the vectors of different
morphologies have different lengths (32/38/44) and meaning. Three back-ends are
available: z-scored K-NN, regularised LDA with nearest-centroid decisions, and a
sigmoid network pretrained as stacked sparse autoencoders and fine-tuned with a
softmax head.
"""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .errors import InsufficientData, NonFiniteLoss, SingularScatter, UnknownMorphology
from .features import FeatureVector
from .segmentation import Morphology

FORMAT = "cardioid-ident"
VERSION = 1
LDA_RIDGE = 1e-4

NN_HIDDEN = {
    Morphology.M1: (128, 64, 32),
    Morphology.M2: (170, 85, 42),
    Morphology.M3: (128, 64, 32),
}


def _group(train: Sequence[FeatureVector]) -> dict[Morphology, tuple[np.ndarray, list]]:
    groups: dict[Morphology, list[FeatureVector]] = defaultdict(list)
    for fv in train:
        groups[fv.morphology].append(fv)
    out = {}
    for m, fvs in groups.items():
        if len({fv.dims for fv in fvs}) != 1:
            raise ValueError(f"mixed vector lengths within morphology {m.value}")
        out[m] = (np.stack([fv.values for fv in fvs]), [fv.subject_id for fv in fvs])
    return out


def _check_classes(train: Sequence[FeatureVector]) -> list:
    labels = sorted({fv.subject_id for fv in train}, key=str)
    if len(labels) < 2:
        raise InsufficientData(f"need at least 2 subjects, got {len(labels)}")
    return labels


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std > 1e-12, std, 1.0))

    def __call__(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]))


# ---------------------------------------------------------------- sub-models


@dataclass
class ConstantModel:
    """Stand-in for a morphology seen with a single subject only."""

    label: str

    def predict(self, x: np.ndarray) -> tuple[str, float]:
        return self.label, 1.0

    def to_dict(self) -> dict:
        return {"label": self.label}

    @classmethod
    def from_dict(cls, d):
        return cls(d["label"])


@dataclass
class KnnModel:
    X: np.ndarray
    y: list
    k: int
    scaler: Standardizer

    def predict(self, x: np.ndarray) -> tuple[str, float]:
        d = np.linalg.norm(self.X - self.scaler(x), axis=1)
        order = np.argsort(d, kind="stable")[: self.k]
        votes = Counter(self.y[i] for i in order)
        top = max(votes.values())
        tied = {lab for lab, v in votes.items() if v == top}
        # neighbours are sorted by distance, so the first tied label met is the nearest
        label = next(self.y[i] for i in order if self.y[i] in tied)
        return label, top / self.k

    def to_dict(self) -> dict:
        return {"X": self.X.tolist(), "y": list(self.y), "k": self.k, "scaler": self.scaler.to_dict()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["X"]), list(d["y"]), int(d["k"]), Standardizer.from_dict(d["scaler"]))


@dataclass
class LdaModel:
    W: np.ndarray  # dims x r
    centroids: np.ndarray  # classes x r
    labels: list

    def transform(self, X: np.ndarray) -> np.ndarray:
        return X @ self.W

    def predict(self, x: np.ndarray) -> tuple[str, float]:
        d = np.linalg.norm(self.centroids - x @ self.W, axis=1)
        i = int(np.argmin(d))
        return self.labels[i], -float(d[i])

    def to_dict(self) -> dict:
        return {"W": self.W.tolist(), "centroids": self.centroids.tolist(), "labels": list(self.labels)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["W"]), np.asarray(d["centroids"]), list(d["labels"]))


def fit_lda(X: np.ndarray, y: Sequence, ridge: float = LDA_RIDGE) -> LdaModel:
    """Fisher LDA: top generalized eigenvectors of (S_b, S_w + ridge)."""
    labels = sorted(set(y), key=str)
    y = np.asarray(y, dtype=object)
    d = X.shape[1]
    mu = X.mean(axis=0)
    Sw = np.zeros((d, d))
    Sb = np.zeros((d, d))
    means = []
    for lab in labels:
        Xc = X[y == lab]
        mc = Xc.mean(axis=0)
        means.append(mc)
        D = Xc - mc
        Sw += D.T @ D
        Sb += len(Xc) * np.outer(mc - mu, mc - mu)
    tr = np.trace(Sw)
    Sw += ridge * (tr / d if tr > 0 else 1.0) * np.eye(d)
    try:
        evals, evecs = linalg.eigh(Sb, Sw)
    except linalg.LinAlgError as exc:
        raise SingularScatter(str(exc)) from None
    r = max(1, min(len(labels) - 1, d))
    W = np.ascontiguousarray(evecs[:, ::-1][:, :r])
    return LdaModel(W=W, centroids=np.stack(means) @ W, labels=labels)


# ---------------------------------------------------------------- neural net


@dataclass(frozen=True)
class NnArch:
    hidden: tuple[int, ...] = (170, 85, 42)
    l2: float = 1e-4
    sparsity_target: float = 0.05
    sparsity_weight: float = 0.1
    lr: float = 0.05
    momentum: float = 0.9
    epochs: int = 200
    pretrain_epochs: int = 50
    batch_size: int = 32

    @classmethod
    def for_morphology(cls, m: Morphology, **overrides) -> "NnArch":
        return cls(hidden=NN_HIDDEN[m], **overrides)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _init_layer(rng, n_in, n_out):
    bound = np.sqrt(6.0 / (n_in + n_out))
    return rng.uniform(-bound, bound, size=(n_in, n_out)), np.zeros(n_out)


def classifier_loss(params, X, Y, l2):
    """Cross-entropy of the sigmoid stack + softmax head, with its gradients.

    ``params`` is a list of ``(W, b)`` pairs; the last pair is the softmax layer.
    ``Y`` is one-hot. Returns ``(loss, grads)`` with grads shaped like params.
    """
    n = X.shape[0]
    acts = [X]
    for W, b in params[:-1]:
        acts.append(sigmoid(acts[-1] @ W + b))
    P = softmax(acts[-1] @ params[-1][0] + params[-1][1])
    loss = -np.sum(Y * np.log(P + 1e-300)) / n + 0.5 * l2 * sum(np.sum(W * W) for W, _ in params)
    grads = [None] * len(params)
    delta = (P - Y) / n
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        grads[i] = (acts[i].T @ delta + l2 * W, delta.sum(axis=0))
        if i:
            delta = (delta @ W.T) * acts[i] * (1 - acts[i])
    return loss, grads


def autoencoder_loss(params, X, l2, rho, beta):
    """Sparse autoencoder: sigmoid encoder, linear decoder, MSE + L2 + KL sparsity.

    ``params`` = ``[(W_enc, b_enc), (W_dec, b_dec)]``.
    """
    (We, be), (Wd, bd) = params
    n = X.shape[0]
    H = sigmoid(X @ We + be)
    R = H @ Wd + bd
    rho_hat = np.clip(H.mean(axis=0), 1e-8, 1 - 1e-8)
    kl = np.sum(rho * np.log(rho / rho_hat) + (1 - rho) * np.log((1 - rho) / (1 - rho_hat)))
    loss = 0.5 * np.sum((R - X) ** 2) / n + 0.5 * l2 * (np.sum(We * We) + np.sum(Wd * Wd)) + beta * kl
    dR = (R - X) / n
    gWd = H.T @ dR + l2 * Wd
    gbd = dR.sum(axis=0)
    dkl = beta * (-rho / rho_hat + (1 - rho) / (1 - rho_hat)) / n
    dZ = (dR @ Wd.T + dkl) * H * (1 - H)
    return loss, [(X.T @ dZ + l2 * We, dZ.sum(axis=0)), (gWd, gbd)]


def _sgd(params, loss_fn, X, epochs, arch: NnArch, rng, Y=None):
    vel = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
    n = X.shape[0]
    for _ in range(epochs):
        order = rng.permutation(n)
        for s in range(0, n, arch.batch_size):
            idx = order[s:s + arch.batch_size]
            loss, grads = loss_fn(params, X[idx], None if Y is None else Y[idx])
            if not np.isfinite(loss):
                raise NonFiniteLoss("training diverged")
            for j, ((W, b), (gW, gb), (vW, vb)) in enumerate(zip(params, grads, vel)):
                vW = arch.momentum * vW - arch.lr * gW
                vb = arch.momentum * vb - arch.lr * gb
                vel[j] = (vW, vb)
                params[j] = (W + vW, b + vb)
    return params


@dataclass
class NnModel:
    params: list
    labels: list
    scaler: Standardizer

    def proba(self, X: np.ndarray) -> np.ndarray:
        a = self.scaler(np.atleast_2d(X))
        for W, b in self.params[:-1]:
            a = sigmoid(a @ W + b)
        return softmax(a @ self.params[-1][0] + self.params[-1][1])

    def predict(self, x: np.ndarray) -> tuple[str, float]:
        p = self.proba(x)[0]
        i = int(np.argmax(p))
        return self.labels[i], float(p[i])

    def to_dict(self) -> dict:
        return {
            "layers": [
                {"W": W.ravel().tolist(), "W_shape": list(W.shape), "b": b.tolist()} for W, b in self.params
            ],
            "labels": list(self.labels),
            "scaler": self.scaler.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        params = [(np.asarray(L["W"]).reshape(L["W_shape"]), np.asarray(L["b"])) for L in d["layers"]]
        return cls(params, list(d["labels"]), Standardizer.from_dict(d["scaler"]))


def fit_nn(X: np.ndarray, y: Sequence, arch: NnArch, seed: int = 0) -> NnModel:
    labels = sorted(set(y), key=str)
    index = {lab: i for i, lab in enumerate(labels)}
    Y = np.eye(len(labels))[[index[v] for v in y]]
    scaler = Standardizer.fit(X)
    A = scaler(X)
    rng = np.random.default_rng(seed)

    # greedy layer-wise pretraining
    params = []
    for width in arch.hidden:
        enc = _init_layer(rng, A.shape[1], width)
        dec = _init_layer(rng, width, A.shape[1])
        enc, _ = _sgd(
            [enc, dec],
            lambda p, xb, _: autoencoder_loss(p, xb, arch.l2, arch.sparsity_target, arch.sparsity_weight),
            A, arch.pretrain_epochs, arch, rng,
        )
        params.append(enc)
        A = sigmoid(A @ enc[0] + enc[1])

    params.append(_init_layer(rng, A.shape[1], len(labels)))
    params = _sgd(params, lambda p, xb, yb: classifier_loss(p, xb, yb, arch.l2), scaler(X), arch.epochs, arch, rng, Y)
    return NnModel(params, labels, scaler)


# ---------------------------------------------------------------- bundle


_KINDS = {"knn": KnnModel, "lda": LdaModel, "nn": NnModel, "const": ConstantModel}


@dataclass
class IdentModel:
    kind: str
    labels: list
    sub: dict = field(default_factory=dict)  # Morphology -> sub-model

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": VERSION,
            "kind": self.kind,
            "labels": list(self.labels),
            "sub": {
                m.value: {"kind": _kind_of(s), "model": s.to_dict()} for m, s in sorted(self.sub.items(), key=lambda kv: kv[0].value)
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IdentModel":
        if d.get("format") != FORMAT or d.get("version") != VERSION:
            raise ValueError(f"not a {FORMAT} v{VERSION} model")
        sub = {Morphology(m): _KINDS[e["kind"]].from_dict(e["model"]) for m, e in d["sub"].items()}
        return cls(d["kind"], list(d["labels"]), sub)


def _kind_of(model) -> str:
    return next(k for k, c in _KINDS.items() if isinstance(model, c))


def _train(train, make_sub, kind) -> IdentModel:
    labels = _check_classes(train)
    sub = {}
    for m, (X, y) in _group(train).items():
        sub[m] = ConstantModel(y[0]) if len(set(y)) == 1 else make_sub(m, X, y)
    return IdentModel(kind, labels, sub)


def train_knn(train: Sequence[FeatureVector], k: int = 3) -> IdentModel:
    """Z-scored Euclidean K-NN. ``k`` is capped by the size of small morphologies."""
    def make(m, X, y):
        scaler = Standardizer.fit(X)
        return KnnModel(scaler(X), list(y), min(k, len(y)), scaler)

    return _train(train, make, "knn")


def train_lda(train: Sequence[FeatureVector], ridge: float = LDA_RIDGE) -> IdentModel:
    return _train(train, lambda m, X, y: fit_lda(X, y, ridge), "lda")


def train_nn(
    train: Sequence[FeatureVector], arch: NnArch | None = None, seed: int = 0, **overrides
) -> IdentModel:
    """Per-morphology network; hidden sizes follow the morphology unless ``arch`` is given."""
    def make(m, X, y):
        a = arch if arch is not None else NnArch.for_morphology(m, **overrides)
        return fit_nn(X, y, a, seed)

    return _train(train, make, "nn")


def identify(model: IdentModel, fv: FeatureVector) -> tuple[str, float]:
    sub = model.sub.get(fv.morphology)
    if sub is None:
        raise UnknownMorphology(f"no sub-model for morphology {fv.morphology.value}")
    return sub.predict(fv.values)
