"""Numerical rank-``r`` CP fits: alternating least squares with a damped Gauss-Newton finish.

A tensor with data ``T[k, i, j]`` is fitted by
``sum_r a[i, r] b[j, r] c[k, r]``. Success means the relative Frobenius
residual drops to ``FIT_TOL``; failure is evidence only, never a rank proof.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadIndex
from .tensor import Tensor3

FIT_TOL = 1e-6
ALS_ITERS = 400
LM_ITERS = 60


@dataclass(frozen=True)
class CpFit:
    found: bool
    residual: float
    rank: int
    restarts_used: int

    @property
    def label(self) -> str:
        return "FitFound" if self.found else "NoFit"

    def to_dict(self) -> dict:
        key = "residual" if self.found else "bestResidual"
        return {"status": self.label, key: self.residual, "rank": self.rank, "restarts": self.restarts_used}


def _reconstruct(a, b, c) -> np.ndarray:
    return np.einsum("ir,jr,kr->kij", a, b, c)


def _rel_residual(t, a, b, c, norm) -> float:
    return float(np.linalg.norm(_reconstruct(a, b, c) - t) / norm)


def _solve(rhs: np.ndarray, gram: np.ndarray) -> np.ndarray:
    # rhs @ gram^{-1} with a tiny ridge for swamps
    reg = 1e-12 * max(1.0, float(np.trace(gram)))
    return np.linalg.solve(gram + reg * np.eye(gram.shape[0]), rhs.T).T


def _als(t, a, b, c, norm, iters: int):
    prev = np.inf
    for it in range(iters):
        a = _solve(np.einsum("kij,jr,kr->ir", t, b, c), (b.T @ b) * (c.T @ c))
        b = _solve(np.einsum("kij,ir,kr->jr", t, a, c), (a.T @ a) * (c.T @ c))
        c = _solve(np.einsum("kij,ir,jr->kr", t, a, b), (a.T @ a) * (b.T @ b))
        # balance column norms so no factor drifts to 0 or infinity
        na, nb, nc = (np.linalg.norm(x, axis=0) + 1e-300 for x in (a, b, c))
        g = np.cbrt(na * nb * nc)
        a, b, c = a * (g / na), b * (g / nb), c * (g / nc)
        if it % 10 == 9:
            res = _rel_residual(t, a, b, c, norm)
            if res <= 1e-10 or prev - res <= 1e-9 * prev:
                break
            prev = res
    return a, b, c


def _jacobian(a, b, c) -> np.ndarray:
    (mi, r), nj, pk = a.shape, b.shape[0], c.shape[0]
    ja = np.einsum("jr,kr,il->kijlr", b, c, np.eye(mi)).reshape(pk * mi * nj, mi * r)
    jb = np.einsum("ir,kr,jl->kijlr", a, c, np.eye(nj)).reshape(pk * mi * nj, nj * r)
    jc = np.einsum("ir,jr,kl->kijlr", a, b, np.eye(pk)).reshape(pk * mi * nj, pk * r)
    return np.hstack([ja, jb, jc])


def _levenberg(t, a, b, c, norm, iters: int):
    shapes = (a.shape, b.shape, c.shape)
    sizes = [a.size, b.size, c.size]

    def unpack(v):
        parts = np.split(v, np.cumsum(sizes)[:-1])
        return [p.reshape(s) for p, s in zip(parts, shapes)]

    v = np.concatenate([a.ravel(), b.ravel(), c.ravel()])
    resid = (_reconstruct(a, b, c) - t).ravel()
    cost = resid @ resid
    mu = 1e-3
    for _ in range(iters):
        jac = _jacobian(*unpack(v))
        g = jac.T @ resid
        h = jac.T @ jac
        step = np.linalg.solve(h + mu * (np.diag(np.diag(h)) + 1e-12 * np.eye(h.shape[0])), -g)
        trial = v + step
        r2 = (_reconstruct(*unpack(trial)) - t).ravel()
        c2 = r2 @ r2
        if c2 < cost:
            v, resid, cost = trial, r2, c2
            mu = max(mu / 3.0, 1e-12)
            if np.sqrt(cost) / norm <= 1e-12:
                break
        else:
            mu *= 4.0
            if mu > 1e12:
                break
    return unpack(v)


def cp_fit(
    t: Tensor3,
    r: int,
    restarts: int = 10,
    seed: int = 0,
    tol: float = FIT_TOL,
    als_iters: int = ALS_ITERS,
    lm_iters: int = LM_ITERS,
) -> CpFit:
    """Best rank-``r`` fit over seeded restarts; stops at the first fit within ``tol``."""
    if r < 1:
        raise BadIndex(f"CP rank must be >= 1, got {r}")
    if restarts < 1:
        raise BadIndex(f"restarts must be >= 1, got {restarts}")
    data = t.as_float()
    norm = float(np.linalg.norm(data))
    if norm == 0.0:
        return CpFit(True, 0.0, r, 0)
    x = data / norm
    pk, mi, nj = x.shape
    best = np.inf
    for attempt in range(restarts):
        rng = np.random.default_rng([seed, r, attempt])
        a = rng.standard_normal((mi, r))
        b = rng.standard_normal((nj, r))
        c = rng.standard_normal((pk, r))
        a, b, c = _als(x, a, b, c, 1.0, als_iters)
        res = _rel_residual(x, a, b, c, 1.0)
        if tol < res < 0.2:
            a, b, c = _levenberg(x, a, b, c, 1.0, lm_iters)
            res = _rel_residual(x, a, b, c, 1.0)
        best = min(best, res)
        if res <= tol:
            return CpFit(True, res, r, attempt + 1)
    return CpFit(False, float(best), r, restarts)
