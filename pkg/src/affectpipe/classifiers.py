"""Six binary classifiers behind one ``train``/``predict`` interface.

Every learner first puts the training rows into a canonical order (sorted by
feature values, then label) so that results never depend on the order rows
arrive in; randomised learners then draw from a generator seeded by the
caller.
"""

from __future__ import annotations

import enum
import io
import json
import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import _tree
from .errors import EmptyDataset, ParseError, SchemaMismatch, SingleClass

FORMAT_NAME = "affectpipe-model"
FORMAT_VERSION = 1


class AlgorithmId(str, enum.Enum):
    NB = "nb"
    KNN = "knn"
    J48 = "j48"
    SVM = "svm"
    MLP = "mlp"
    RF = "rf"


def default_grid(alg) -> list[dict]:
    """Hyperparameter candidates searched by leave-one-out selection."""
    alg = AlgorithmId(alg)
    if alg is AlgorithmId.NB:
        return [{"smoothing": s} for s in (1e-9, 1e-6)]
    if alg is AlgorithmId.KNN:
        return [{"k": k} for k in (1, 3, 5, 7, 11)]
    if alg is AlgorithmId.J48:
        return [{"min_leaf": m} for m in (2, 5, 10)]
    if alg is AlgorithmId.SVM:
        return [{"lam": lam} for lam in (1e-3, 1e-2, 1e-1)]
    if alg is AlgorithmId.MLP:
        return [{"hidden": h} for h in (4, 8, 16)]
    return [{"trees": t, "max_depth": d} for t in (50, 100, 200) for d in (None, 8)]


@dataclass(frozen=True, eq=False)
class TrainedModel:
    algorithm: AlgorithmId
    hyperparameters: Mapping
    params: Mapping[str, np.ndarray]
    feature_names: tuple[str, ...]
    classes: tuple[str, ...]
    priors: Mapping[str, float]
    seed: int = 0

    @property
    def majority(self) -> str:
        # ties between equally frequent classes go to the lexicographically first
        return max(self.classes, key=lambda c: (self.priors[c], [-ord(ch) for ch in c]))


# --- shared helpers -----------------------------------------------------------

def _canonical(X, y):
    # lexsort treats the last key as primary: features first, label breaks ties
    order = np.lexsort((y,) + tuple(X[:, j] for j in reversed(range(X.shape[1]))))
    return X[order], y[order]


def _standardizer(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


# --- trees ----------------------------------------------------------------------

_TREE_KEYS = ("feature", "threshold", "left", "right", "counts")


def _grow_tree(X, y, min_leaf=1, max_depth=None, m_try=None, seed=0):
    """Binary tree maximising information gain, as flat node arrays.

    ``feature`` is -1 at leaves and ``counts`` holds per-node class counts.
    """
    arrays = _tree.grow(np.ascontiguousarray(X, dtype=float), y.astype(np.int64),
                        int(min_leaf), -1 if max_depth is None else int(max_depth),
                        X.shape[1] if m_try is None else int(m_try), int(seed))
    return dict(zip(_TREE_KEYS, arrays))


def _leaf_scores(p, X, roots):
    return _tree.leaf_counts(p["feature"], p["threshold"], p["left"], p["right"],
                             p["counts"], np.asarray(roots, dtype=np.int64),
                             np.ascontiguousarray(X, dtype=float))


# --- per-algorithm fit / score ---------------------------------------------------
# score functions return an (n, 2) array; the larger column wins

def _fit_nb(X, y, hp, rng):
    eps = hp.get("smoothing", 1e-9) * max(float(X.var(axis=0).max(initial=0.0)), 1e-300)
    mean = np.vstack([X[y == c].mean(axis=0) for c in (0, 1)])
    var = np.vstack([X[y == c].var(axis=0) for c in (0, 1)]) + eps
    n = np.bincount(y, minlength=2)
    log_prior = np.log((n + 1.0) / (len(y) + 2.0))
    return {"mean": mean, "var": var, "log_prior": log_prior}


def _score_nb(p, X):
    ll = -0.5 * (np.log(2 * np.pi * p["var"])[None] +
                 (X[:, None, :] - p["mean"][None]) ** 2 / p["var"][None]).sum(axis=2)
    return ll + p["log_prior"][None]


def _fit_knn(X, y, hp, rng):
    mu, sd = _standardizer(X)
    return {"Z": (X - mu) / sd, "y": y, "mu": mu, "sd": sd, "k": np.array(int(hp.get("k", 1)))}


def _score_knn(p, X):
    Z = (X - p["mu"]) / p["sd"]
    k = min(int(p["k"]), len(p["y"]))
    d2 = ((Z[:, None, :] - p["Z"][None]) ** 2).sum(axis=2)
    out = np.zeros((len(X), 2))
    for i in range(len(X)):
        # stable sort over canonically ordered training rows
        nn = np.argsort(d2[i], kind="stable")[:k]
        out[i] = np.bincount(p["y"][nn], minlength=2)
    return out


def _fit_j48(X, y, hp, rng):
    return _grow_tree(X, y, min_leaf=int(hp.get("min_leaf", 2)), max_depth=hp.get("max_depth"))


def _score_j48(p, X):
    return _leaf_scores(p, X, [0])


def _fit_rf(X, y, hp, rng):
    n_trees = int(hp.get("trees", 100))
    depth = hp.get("max_depth")
    m_try = max(1, int(math.floor(math.sqrt(X.shape[1]))))
    parts = []
    for _ in range(n_trees):
        boot = rng.integers(0, len(y), len(y))
        seed = int(rng.integers(0, 2 ** 31 - 1))
        parts.append(_grow_tree(X[boot], y[boot], 1, depth, m_try, seed))
    sizes = np.array([len(t["feature"]) for t in parts])
    offsets = np.r_[0, np.cumsum(sizes)[:-1]].astype(np.int64)
    flat = {k: np.concatenate([t[k] for t in parts]) for k in _TREE_KEYS}
    for k in ("left", "right"):
        shift = np.repeat(offsets, sizes)
        flat[k] = np.where(flat[k] >= 0, flat[k] + shift, -1)
    flat["roots"] = offsets
    return flat


def _score_rf(p, X):
    # soft vote: every tree contributes its leaf class proportions
    return _leaf_scores(p, X, p["roots"])


SVM_EPOCHS = 200
MLP_EPOCHS = 200


def _fit_svm(X, y, hp, rng):
    """Full-batch Pegasos subgradient descent on the hinge loss, iterate-averaged."""
    lam = float(hp.get("lam", 1e-2))
    mu, sd = _standardizer(X)
    Z = np.c_[(X - mu) / sd, np.ones(len(X))]
    s = 2.0 * y - 1.0
    w = np.zeros(Z.shape[1])
    avg = np.zeros_like(w)
    n_avg = 0
    for t in range(1, SVM_EPOCHS + 1):
        eta = 1.0 / (lam * t)
        viol = s * (Z @ w) < 1.0
        w = (1.0 - eta * lam) * w + eta * (s[viol] @ Z[viol]) / len(s)
        norm = np.linalg.norm(w)
        if norm > 1.0 / math.sqrt(lam):
            w *= 1.0 / (math.sqrt(lam) * norm)
        if t > SVM_EPOCHS // 2:
            avg += w
            n_avg += 1
    return {"w": avg / n_avg, "mu": mu, "sd": sd}


def _score_svm(p, X):
    Z = np.c_[(X - p["mu"]) / p["sd"], np.ones(len(X))]
    f = Z @ p["w"]
    return np.c_[-f, f]


def _fit_mlp(X, y, hp, rng):
    """One logistic hidden layer, logistic output, full-batch momentum descent."""
    h = int(hp.get("hidden", 8))
    lr, momentum, l2 = float(hp.get("lr", 0.5)), 0.9, float(hp.get("l2", 1e-4))
    mu, sd = _standardizer(X)
    Z = (X - mu) / sd
    n, d = Z.shape
    lim1, lim2 = math.sqrt(6.0 / (d + h)), math.sqrt(6.0 / (h + 1))
    W1 = rng.uniform(-lim1, lim1, (d, h))
    b1 = np.zeros(h)
    W2 = rng.uniform(-lim2, lim2, h)
    b2 = 0.0
    vel = [np.zeros_like(W1), np.zeros_like(b1), np.zeros_like(W2), 0.0]
    t = y.astype(float)
    for _ in range(MLP_EPOCHS):
        a1 = _sigmoid(Z @ W1 + b1)
        out = _sigmoid(a1 @ W2 + b2)
        g_out = (out - t) / n
        gW2 = a1.T @ g_out + l2 * W2
        gb2 = g_out.sum()
        g_h = np.outer(g_out, W2) * a1 * (1.0 - a1)
        gW1 = Z.T @ g_h + l2 * W1
        gb1 = g_h.sum(axis=0)
        grads = [gW1, gb1, gW2, gb2]
        vel = [momentum * v - lr * g for v, g in zip(vel, grads)]
        W1, b1, W2, b2 = W1 + vel[0], b1 + vel[1], W2 + vel[2], b2 + vel[3]
    return {"W1": W1, "b1": b1, "W2": W2, "b2": np.array(b2), "mu": mu, "sd": sd}


def _score_mlp(p, X):
    Z = (X - p["mu"]) / p["sd"]
    out = _sigmoid(_sigmoid(Z @ p["W1"] + p["b1"]) @ p["W2"] + p["b2"])
    return np.c_[1.0 - out, out]


_FIT = {AlgorithmId.NB: _fit_nb, AlgorithmId.KNN: _fit_knn, AlgorithmId.J48: _fit_j48,
        AlgorithmId.SVM: _fit_svm, AlgorithmId.MLP: _fit_mlp, AlgorithmId.RF: _fit_rf}
_SCORE = {AlgorithmId.NB: _score_nb, AlgorithmId.KNN: _score_knn, AlgorithmId.J48: _score_j48,
          AlgorithmId.SVM: _score_svm, AlgorithmId.MLP: _score_mlp, AlgorithmId.RF: _score_rf}


# --- public interface --------------------------------------------------------------

def fit(alg, hp: Mapping, X, y, seed: int = 0, feature_names=None) -> TrainedModel:
    """Train on a feature matrix and string labels."""
    alg = AlgorithmId(alg)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=object)
    if X.ndim != 2 or len(X) == 0:
        raise EmptyDataset("no training observations")
    if len(y) != len(X):
        raise ValueError("X and y differ in length")
    classes = tuple(sorted(set(y)))
    if len(classes) < 2:
        raise SingleClass(f"training data holds a single class ({classes[0]!r})")
    if len(classes) > 2:
        raise ValueError(f"binary classifiers only, got classes {classes}")
    yi = (y == classes[1]).astype(np.int64)
    Xc, yc = _canonical(X, yi)
    rng = np.random.default_rng(seed)
    params = _FIT[alg](Xc, yc, dict(hp), rng)
    counts = np.bincount(yi, minlength=2)
    priors = {c: float(counts[i]) / len(yi) for i, c in enumerate(classes)}
    names = tuple(feature_names) if feature_names is not None else \
        tuple(f"x{j}" for j in range(X.shape[1]))
    if len(names) != X.shape[1]:
        raise SchemaMismatch("feature_names does not match the number of columns")
    return TrainedModel(alg, dict(hp), params, names, classes, priors, int(seed))


def train(alg, hp: Mapping, d, target: str, seed: int = 0) -> TrainedModel:
    """Train on the ``target`` labels of a :class:`~affectpipe.dataset.LabeledDataset`."""
    if len(d) == 0:
        raise EmptyDataset("dataset is empty")
    d = d.labeled(target)
    if len(d) == 0:
        raise EmptyDataset(f"no {target} labels in the dataset")
    return fit(alg, hp, d.X, d.labels(target), seed, d.feature_names)


def scores(m: TrainedModel, X) -> np.ndarray:
    return _SCORE[m.algorithm](m.params, np.atleast_2d(np.asarray(X, dtype=float)))


def _resolve(m: TrainedModel, sc: np.ndarray) -> np.ndarray:
    maj = m.classes.index(m.majority)
    tie = np.isclose(sc[:, 0], sc[:, 1], rtol=1e-12, atol=1e-12)
    win = np.where(tie, maj, np.argmax(sc, axis=1))
    return np.array(m.classes, dtype=object)[win]


def predict_many(m: TrainedModel, X, feature_names=None) -> np.ndarray:
    if feature_names is not None and tuple(feature_names) != m.feature_names:
        raise SchemaMismatch("feature order differs from the training data")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != len(m.feature_names):
        raise SchemaMismatch(f"expected {len(m.feature_names)} features, got {X.shape[1]}")
    return _resolve(m, scores(m, X))


def predict(m: TrainedModel, x) -> str:
    """Label of one observation (a ``FeatureVector`` or a plain vector).

    Equal class scores resolve to the majority training class.
    """
    names = getattr(x, "names", None)
    values = x.array() if names is not None else x
    return str(predict_many(m, np.atleast_2d(values), names)[0])


# --- serialization ------------------------------------------------------------------

def dumps_model(m: TrainedModel) -> bytes:
    """Serialize as one JSON header line followed by an ``.npz`` payload."""
    header = {"format": FORMAT_NAME, "version": FORMAT_VERSION, "algorithm": m.algorithm.value,
              "hyperparameters": dict(m.hyperparameters), "feature_names": list(m.feature_names),
              "classes": list(m.classes), "priors": dict(m.priors), "seed": m.seed}
    buf = io.BytesIO()
    np.savez(buf, **{k: np.asarray(v) for k, v in m.params.items()})
    return json.dumps(header, sort_keys=True).encode() + b"\n" + buf.getvalue()


def loads_model(blob: bytes) -> TrainedModel:
    head, sep, payload = blob.partition(b"\n")
    try:
        header = json.loads(head)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad model header: {exc}") from None
    if not sep or header.get("format") != FORMAT_NAME:
        raise ParseError("not an affectpipe model")
    if header.get("version") != FORMAT_VERSION:
        raise ParseError(f"unsupported model version {header.get('version')}")
    with np.load(io.BytesIO(payload)) as npz:
        params = {k: npz[k] for k in npz.files}
    return TrainedModel(AlgorithmId(header["algorithm"]), header["hyperparameters"], params,
                        tuple(header["feature_names"]), tuple(header["classes"]),
                        header["priors"], header["seed"])


def save_model(m: TrainedModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_model(m))


def load_model(path) -> TrainedModel:
    with open(path, "rb") as fh:
        return loads_model(fh.read())
