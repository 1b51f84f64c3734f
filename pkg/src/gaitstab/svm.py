"""Gaussian-kernel soft-margin SVM trained by SMO.

The solver follows the LIBSVM scheme: each iteration picks the maximal
violating pair with second-order working-set selection, solves the
two-variable subproblem analytically and updates the dual gradient.  It
stops when the KKT gap ``max(-y G) over I_up - min(-y G) over I_low``
drops below ``tol``.
"""
from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .seeding import sub_rng

logger = logging.getLogger(__name__)

TAU = 1e-12


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SvmConfig:
    C: float = 10.0
    gamma: Optional[float] = None  # None: 1 / (n_features * mean feature variance)
    tol: float = 1e-3
    max_iter: int = 200_000
    max_train: int = 5000
    rng_seed: int = 0


@dataclass
class SvmModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    C: float
    n_iter: int = 0
    kkt_gap: float = 0.0

    def decision_score(self, X):
        return decision_score(self, X)


def gaussian_kernel(a, b, gamma):
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.exp(-gamma * np.dot(d, d)))


def kernel_matrix(A, B, gamma):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def default_gamma(X):
    X = np.asarray(X, dtype=float)
    var = X.var()
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def smo_train(X, y, C=10.0, gamma=1.0, tol=1e-3, max_iter=200_000):
    """Solve the soft-margin dual for labels in {-1, +1}."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise ValueError("labels must be -1 or +1")
    if not (np.any(y > 0) and np.any(y < 0)):
        raise ValueError("need at least one sample of each class")
    n = len(y)
    K = kernel_matrix(X, X, gamma)
    Q = K * np.outer(y, y)
    del K
    diag = np.diag(Q).copy()
    alpha = np.zeros(n)
    G = -np.ones(n)
    it = 0
    gap = np.inf
    while it < max_iter:
        yG = -y * G
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        i = int(np.argmax(np.where(up, yG, -np.inf)))
        m_up = yG[i]
        M_low = np.min(np.where(low, yG, np.inf))
        gap = m_up - M_low
        if gap < tol:
            break
        # second-order choice of j among violating low candidates
        b = m_up - yG
        cand = low & (b > 0)
        a = diag[i] + diag - 2.0 * y[i] * y * Q[i]
        a = np.where(a > 0, a, TAU)
        score = np.where(cand, -(b * b) / a, np.inf)
        j = int(np.argmin(score))

        # two-variable update (LIBSVM notation)
        Qi, Qj = Q[i], Q[j]
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            quad = max(diag[i] + diag[j] + 2.0 * Qi[j], TAU)
            delta = (-G[i] - G[j]) / quad
            diff = ai_old - aj_old
            ai, aj = ai_old + delta, aj_old + delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            quad = max(diag[i] + diag[j] - 2.0 * Qi[j], TAU)
            delta = (G[i] - G[j]) / quad
            total = ai_old + aj_old
            ai, aj = ai_old - delta, aj_old + delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Qi * (ai - ai_old) + Qj * (aj - aj_old)
        it += 1
    else:
        raise ConvergenceError(
            f"SMO did not converge in {max_iter} iterations (KKT gap {gap:.3e}, tol {tol:.1e})"
        )

    yG = -y * G
    free = (alpha > 0) & (alpha < C)
    if np.any(free):
        bias = float(np.mean(yG[free]))
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        bias = float(0.5 * (np.max(yG[up]) + np.min(yG[low])))
    sv = alpha > 0
    return SvmModel(X[sv].copy(), (alpha * y)[sv], bias, float(gamma), float(C), it, float(gap))


def decision_score(model, X, chunk=4096):
    """sum_i alpha_i y_i k(x_i, x) + b for each row of X."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty(len(X))
    for s in range(0, len(X), chunk):
        K = kernel_matrix(X[s:s + chunk], model.support_vectors, model.gamma)
        out[s:s + chunk] = K @ model.dual_coef + model.bias
    return out


def stratified_subsample(labels, limit, rng):
    """Indices of at most ``limit`` samples keeping the class proportions."""
    labels = np.asarray(labels)
    n = len(labels)
    if n <= limit:
        return np.arange(n)
    picked = []
    classes = np.unique(labels)
    for c in classes:
        idx = np.flatnonzero(labels == c)
        k = max(1, int(round(limit * len(idx) / n)))
        picked.append(rng.choice(idx, size=min(k, len(idx)), replace=False))
    return np.sort(np.concatenate(picked))


def fit(X, labels01, config=SvmConfig()):
    """Subsample, map labels {0, 1} -> {-1, +1} and run SMO."""
    X = np.asarray(X, dtype=float)
    labels01 = np.asarray(labels01)
    keep = stratified_subsample(labels01, config.max_train, sub_rng(config.rng_seed, "svm-subsample"))
    Xs = X[keep]
    ys = np.where(labels01[keep] == 1, 1.0, -1.0)
    gamma = config.gamma if config.gamma is not None else default_gamma(Xs)
    return smo_train(Xs, ys, config.C, gamma, config.tol, config.max_iter)


def save_model(model, path):
    header = {"format": "gaitstab-svm", "version": 1, "bias": model.bias, "gamma": model.gamma,
              "C": model.C, "n_iter": model.n_iter, "kkt_gap": model.kkt_gap}
    buf = io.BytesIO()
    np.savez(buf, header=np.frombuffer(json.dumps(header).encode("utf8"), dtype=np.uint8),
             support_vectors=model.support_vectors, dual_coef=model.dual_coef)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    tmp.replace(path)
    return path


def load_model(path):
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode("utf8"))
        if header.get("format") != "gaitstab-svm":
            raise ValueError(f"{path}: not an SVM model file")
        return SvmModel(data["support_vectors"].copy(), data["dual_coef"].copy(), header["bias"],
                        header["gamma"], header["C"], header["n_iter"], header["kkt_gap"])
