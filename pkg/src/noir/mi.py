"""Motor-imagery classification: CSP spatial filtering + QDA.

Binary CSP simultaneously diagonalizes the two class covariances via
whitening; the multi-class case is one-vs-rest with concatenated
components. Features are normalized log-variances of the projected
components, classified by a per-class Gaussian discriminant with
covariance shrinkage.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .signal import Epoch

RIDGE_SCALE = 1e-8
QDA_SHRINKAGE = 0.1


class MiError(ValueError):
    pass


def _center(data: np.ndarray) -> np.ndarray:
    return data - data.mean(axis=1, keepdims=True)


def _trial_cov(data: np.ndarray) -> np.ndarray:
    x = _center(np.asarray(data, dtype=np.float64))
    return x @ x.T / x.shape[1]


def _class_cov(epochs: list[Epoch]) -> np.ndarray:
    return np.mean([_trial_cov(e.data) for e in epochs], axis=0)


def _ridge(c: np.ndarray) -> np.ndarray:
    return c + RIDGE_SCALE * np.trace(c) / c.shape[0] * np.eye(c.shape[0])


def _binary_csp(cov1: np.ndarray, cov2: np.ndarray, n_csp: int) -> tuple[np.ndarray, np.ndarray]:
    """Columns diagonalizing cov2^{-1} cov1, by descending generalized eigenvalue.

    Whitens cov2, then symmetrically eigendecomposes the whitened cov1.
    The returned Q satisfies Q^T cov1 Q = diag(eigvals) and Q^T cov2 Q = I.
    """
    c2 = _ridge(cov2)
    vals2, vecs2 = sla.eigh(c2)
    if vals2[0] <= 0:
        raise MiError("singular class covariance after regularization")
    whiten = vecs2 @ np.diag(1.0 / np.sqrt(vals2)) @ vecs2.T
    s1 = whiten @ _ridge(cov1) @ whiten
    vals, vecs = sla.eigh((s1 + s1.T) / 2)
    order = np.argsort(vals)[::-1]
    q_full = whiten @ vecs[:, order]
    return q_full[:, :n_csp], vals[order][:n_csp]


@dataclass(frozen=True)
class CspModel:
    class_list: tuple[str, ...]
    n_csp: int
    blocks: tuple[np.ndarray, ...]  # each C x n_csp
    eigenvalues: tuple[np.ndarray, ...]
    n_channels: int

    @property
    def q(self) -> np.ndarray:
        """All kept projection columns, C x N_kept."""
        return np.hstack(self.blocks)

    @property
    def n_kept(self) -> int:
        return sum(b.shape[1] for b in self.blocks)


@dataclass(frozen=True)
class MiFeature:
    f: np.ndarray  # length N_kept, entries log(var_p / sum var)


@dataclass(frozen=True)
class QdaModel:
    class_list: tuple[str, ...]
    means: tuple[np.ndarray, ...]
    covariances: tuple[np.ndarray, ...]
    log_priors: tuple[float, ...]
    _chol: tuple[np.ndarray, ...] = field(default=(), repr=False)

    def log_posteriors(self, x: np.ndarray) -> np.ndarray:
        """Unnormalized per-class log posteriors."""
        out = np.empty(len(self.class_list))
        for i, (mu, cov, lp) in enumerate(
            zip(self.means, self.covariances, self.log_priors)
        ):
            d = x - mu
            chol = self._chol[i] if self._chol else sla.cholesky(cov, lower=True)
            z = sla.solve_triangular(chol, d, lower=True)
            logdet = 2.0 * np.sum(np.log(np.diag(chol)))
            out[i] = lp - 0.5 * (z @ z) - 0.5 * logdet
        return out


def group_by_label(epochs: list[Epoch]) -> dict[str, list[Epoch]]:
    groups: dict[str, list[Epoch]] = {}
    for e in epochs:
        if e.label is None:
            raise MiError("all epochs must be labeled")
        groups.setdefault(e.label, []).append(e)
    return groups


def fit_csp(epochs: list[Epoch], n_csp: int = 4) -> CspModel:
    """Fit CSP filters from labeled epochs.

    Two classes: a single binary block. More: one-vs-rest, one block per
    class, components concatenated in class order.
    """
    groups = group_by_label(epochs)
    classes = tuple(groups)
    if len(classes) < 2:
        raise MiError("need at least 2 classes")
    for c, g in groups.items():
        if len(g) < 2:
            raise MiError(f"class {c!r} has fewer than 2 trials")
    n_ch = epochs[0].n_channels
    covs = {c: _class_cov(g) for c, g in groups.items()}

    blocks, eigs = [], []
    if len(classes) == 2:
        q, lam = _binary_csp(covs[classes[0]], covs[classes[1]], n_csp)
        blocks.append(q)
        eigs.append(lam)
    else:
        for c in classes:
            rest = [e for e in epochs if e.label != c]
            q, lam = _binary_csp(covs[c], _class_cov(rest), n_csp)
            blocks.append(q)
            eigs.append(lam)
    return CspModel(
        class_list=classes,
        n_csp=n_csp,
        blocks=tuple(blocks),
        eigenvalues=tuple(eigs),
        n_channels=n_ch,
    )


def csp_features(model: CspModel, epoch: Epoch) -> MiFeature:
    """Normalized log-variance of the projected components."""
    if epoch.n_channels != model.n_channels:
        raise MiError(
            f"epoch has {epoch.n_channels} channels, model expects {model.n_channels}"
        )
    x = _center(epoch.data)
    proj = model.q.T @ x  # N_kept x T
    variances = proj.var(axis=1)
    return MiFeature(f=np.log(variances / variances.sum()))


def fit_qda(features: list[np.ndarray], labels: list[str]) -> QdaModel:
    """Per-class Gaussian MLE with covariance shrinkage, uniform priors."""
    classes = tuple(dict.fromkeys(labels))
    if len(classes) < 2:
        raise MiError("need at least 2 classes")
    feats = np.asarray([np.asarray(f, dtype=np.float64) for f in features])
    dim = feats.shape[1]
    means, covs, chols = [], [], []
    for c in classes:
        xs = feats[[i for i, l in enumerate(labels) if l == c]]
        if len(xs) < 2:
            raise MiError(f"class {c!r} has fewer than 2 samples")
        mu = xs.mean(axis=0)
        d = xs - mu
        cov = d.T @ d / len(xs)
        cov = (1 - QDA_SHRINKAGE) * cov + QDA_SHRINKAGE * (np.trace(cov) / dim) * np.eye(dim)
        # Fallback for degenerate (all-identical) training sets
        if np.trace(cov) <= 0:
            cov = np.eye(dim)
        means.append(mu)
        covs.append(cov)
        chols.append(sla.cholesky(cov, lower=True))
    log_prior = float(np.log(1.0 / len(classes)))
    return QdaModel(
        class_list=classes,
        means=tuple(means),
        covariances=tuple(covs),
        log_priors=tuple(log_prior for _ in classes),
        _chol=tuple(chols),
    )


def classify_mi(csp: CspModel, qda: QdaModel, epoch: Epoch) -> tuple[str, ...]:
    """Classes ranked by QDA log-posterior, best first.

    Ties break by class_list order (stable sort).
    """
    if csp.class_list != qda.class_list:
        raise MiError("CSP and QDA were fitted on different class lists")
    feat = csp_features(csp, epoch)
    scores = qda.log_posteriors(feat.f)
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return tuple(qda.class_list[i] for i in order)


def cross_validate(epochs: list[Epoch], k_folds: int = 4, n_csp: int = 4) -> float:
    """Mean held-out accuracy over stratified folds, CSP+QDA refit per fold."""
    groups = group_by_label(epochs)
    for c, g in groups.items():
        if len(g) < k_folds:
            raise MiError(f"class {c!r} has fewer than {k_folds} trials")
    folds: list[list[Epoch]] = [[] for _ in range(k_folds)]
    for g in groups.values():
        for i, e in enumerate(g):
            folds[i % k_folds].append(e)
    accs = []
    for k in range(k_folds):
        train = [e for j, f in enumerate(folds) if j != k for e in f]
        test = folds[k]
        csp = fit_csp(train, n_csp=n_csp)
        feats = [csp_features(csp, e).f for e in train]
        qda = fit_qda(feats, [e.label for e in train])
        hits = sum(classify_mi(csp, qda, e)[0] == e.label for e in test)
        accs.append(hits / len(test))
    return float(np.mean(accs))


def cursor_step(csp: CspModel, qda: QdaModel, epoch: Epoch, axis: str) -> int:
    """Decode a signed unit cursor step on the given axis from one epoch."""
    if axis not in ("x", "y", "z"):
        raise MiError(f"unknown axis {axis!r}")
    if set(csp.class_list) != {"LeftHand", "RightHand"}:
        raise MiError("cursor decoding requires a LeftHand/RightHand 2-way decoder")
    return -1 if classify_mi(csp, qda, epoch)[0] == "LeftHand" else 1


def _b64(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode()


def _unb64(s: str, shape) -> np.ndarray:
    return np.frombuffer(base64.b64decode(s), dtype="<f8").reshape(shape).copy()


def models_to_json(csp: CspModel, qda: QdaModel) -> str:
    doc = {
        "class_list": list(csp.class_list),
        "n_csp": csp.n_csp,
        "n_channels": csp.n_channels,
        "blocks": [{"shape": list(b.shape), "data": _b64(b)} for b in csp.blocks],
        "eigenvalues": [list(map(float, e)) for e in csp.eigenvalues],
        "qda": {
            "means": [{"shape": list(m.shape), "data": _b64(m)} for m in qda.means],
            "covariances": [
                {"shape": list(c.shape), "data": _b64(c)} for c in qda.covariances
            ],
            "log_priors": list(qda.log_priors),
        },
    }
    return json.dumps(doc, sort_keys=True)


def models_from_json(text: str) -> tuple[CspModel, QdaModel]:
    doc = json.loads(text)
    classes = tuple(doc["class_list"])
    csp = CspModel(
        class_list=classes,
        n_csp=doc["n_csp"],
        blocks=tuple(_unb64(b["data"], b["shape"]) for b in doc["blocks"]),
        eigenvalues=tuple(np.asarray(e) for e in doc["eigenvalues"]),
        n_channels=doc["n_channels"],
    )
    q = doc["qda"]
    covs = tuple(_unb64(c["data"], c["shape"]) for c in q["covariances"])
    qda = QdaModel(
        class_list=classes,
        means=tuple(_unb64(m["data"], m["shape"]) for m in q["means"]),
        covariances=covs,
        log_priors=tuple(q["log_priors"]),
        _chol=tuple(sla.cholesky(c, lower=True) for c in covs),
    )
    return csp, qda
