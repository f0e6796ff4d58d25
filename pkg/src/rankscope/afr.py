"""Absolutely-full-column-rank (AFR) certification, falsification and transforms.

An ``l x n x p`` tensor ``(A_1; ...; A_p)`` is AFR when ``sum_i x_i A_i`` has
rank ``n`` for every nonzero real ``x``. Equivalently
``f(x, y) = |sum_i x_i A_i y|^2`` has no zero on ``S^{p-1} x S^{n-1}``.

Three routes are offered:

* :func:`exact_certify` checks a sufficient orthogonality system
  (``A_i^T A_i = E`` and ``A_i^T A_j + A_j^T A_i = 0``), which forces
  ``sigma_min(sum x_i A_i) = |x|``.
* :func:`falsify` hunts for a zero of ``f`` by alternating least singular
  vectors, polished with Gauss-Newton.
* :func:`grid_certify` covers the sphere of coefficient vectors with cells and
  uses the Lipschitz bound ``|sigma(x) - sigma(x')| <= L |x - x'|`` with
  ``L = sqrt(sum_i |A_i|_2^2)`` to turn finitely many evaluations into a
  certified lower bound on ``min sigma_n``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum
from itertools import product

import numpy as np

from .errors import BadIndex, BadShape, Unsupported
from .tensor import Kind, Tensor3, _small_int64

log = logging.getLogger(__name__)

FALSIFY_TOL = 1e-9
FALSIFY_RESTARTS = 32
FALSIFY_MAX_ITER = 200
GRID_MAX_P = 4
GRID_MAX_CELLS = 2_000_000
REAL_CERT_TOL = 1e-12


class AfrStatus(str, Enum):
    CERTIFIED_EXACT = "CertifiedExact"
    CERTIFIED_NUMERIC = "CertifiedNumeric"
    FALSIFIED = "Falsified"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class Witness:
    x: np.ndarray
    y: np.ndarray
    residual: float

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "y": self.y.tolist(), "residual": self.residual}


@dataclass(frozen=True)
class AfrVerdict:
    status: AfrStatus
    margin: float | None = None
    witness: Witness | None = None
    stage: str = ""

    @property
    def certified(self) -> bool:
        return self.status in (AfrStatus.CERTIFIED_EXACT, AfrStatus.CERTIFIED_NUMERIC)

    @property
    def falsified(self) -> bool:
        return self.status is AfrStatus.FALSIFIED

    def to_dict(self) -> dict:
        out = {"status": self.status.value, "stage": self.stage}
        if self.margin is not None:
            out["margin"] = self.margin
        if self.witness is not None:
            out["witness"] = self.witness.to_dict()
        return out


# --- exact certificate ------------------------------------------------------

def _gram_blocks_exact(data: np.ndarray) -> np.ndarray | None:
    arr = _small_int64(data)
    if arr is None:
        return None
    bound = int(np.abs(arr).max()) if arr.size else 0
    if bound * bound * max(arr.shape[1], 1) >= 2**62:
        return None
    return np.einsum("ali,blj->abij", arr, arr)


def exact_certify(t: Tensor3, rtol: float = REAL_CERT_TOL) -> bool:
    """True when the slices satisfy the Hurwitz-type orthogonality system.

    ``True`` proves AFR. ``False`` only means no certificate was found.
    Exact tensors are checked in integer arithmetic; real tensors to ``rtol``.
    """
    p, l, n = t.data.shape
    if l < n:
        raise BadShape(f"exact certificate needs l >= n, got {l}x{n} slices")
    ident = np.eye(n, dtype=np.int64)
    if t.kind is Kind.EXACT:
        gram = _gram_blocks_exact(t.data)
        if gram is None:
            gram = np.array(
                [[a.T.dot(b) for b in t.data] for a in t.data], dtype=object
            )
        for i in range(p):
            if not np.array_equal(gram[i, i], ident):
                return False
            for j in range(i + 1, p):
                if np.any(gram[i, j] + gram[j, i] != 0):
                    return False
        return True
    arr = t.data
    gram = np.einsum("ali,blj->abij", arr, arr)
    for i in range(p):
        if np.max(np.abs(gram[i, i] - ident)) > rtol:
            return False
        for j in range(i + 1, p):
            if np.max(np.abs(gram[i, j] + gram[j, i])) > rtol:
                return False
    return True


# --- falsification ----------------------------------------------------------

def _slice_norms(arr: np.ndarray) -> np.ndarray:
    return np.array([np.linalg.norm(a, 2) for a in arr])


def _least_right_vector(mat: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(mat, full_matrices=True)
    return vt[-1]


def _residual(arr: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.linalg.norm(np.tensordot(x, arr, 1) @ y))


def _polish(arr: np.ndarray, x: np.ndarray, y: np.ndarray, iters: int = 40):
    """Gauss-Newton on ``M(x) y = 0`` with unit-norm constraints."""
    p, n = x.size, y.size
    best = (x, y, _residual(arr, x, y))
    for _ in range(iters):
        mx = np.tensordot(x, arr, 1)
        ky = (arr @ y).T
        resid = np.concatenate([mx @ y, [0.5 * (x @ x - 1.0)], [0.5 * (y @ y - 1.0)]])
        jac = np.zeros((resid.size, p + n))
        jac[: mx.shape[0], :p] = ky
        jac[: mx.shape[0], p:] = mx
        jac[-2, :p] = x
        jac[-1, p:] = y
        step = np.linalg.lstsq(jac, -resid, rcond=None)[0]
        x = x + step[:p]
        y = y + step[p:]
        xn, yn = np.linalg.norm(x), np.linalg.norm(y)
        if xn == 0 or yn == 0 or not np.isfinite(xn * yn):
            break
        x, y = x / xn, y / yn
        r = _residual(arr, x, y)
        if r < best[2]:
            best = (x, y, r)
        if np.linalg.norm(step) < 1e-15:
            break
    return best


def _alternate(arr: np.ndarray, x: np.ndarray, max_iter: int):
    f_prev = f = math.inf
    y = None
    for _ in range(max_iter):
        y = _least_right_vector(np.tensordot(x, arr, 1))
        kmat = (arr @ y).T
        x = _least_right_vector(kmat)
        f = float(np.sum((kmat @ x) ** 2))
        if f <= 1e-32 or f_prev - f <= 1e-10 * f_prev:
            break
        f_prev = f
    return x, y, f


def _trivial_witness(arr: np.ndarray) -> Witness | None:
    """Witness forced by shape alone: ``l < n`` leaves every slice rank deficient."""
    p, l, n = arr.shape
    if l < n:
        x = np.zeros(p)
        x[0] = 1.0
        y = _least_right_vector(arr[0])
        return Witness(x, y, _residual(arr, x, y))
    return None


def _witness_ok(arr: np.ndarray, x, y, r: float, tol: float, scale: float) -> bool:
    return r <= tol * scale and abs(np.linalg.norm(x) - 1) < 1e-12 and abs(np.linalg.norm(y) - 1) < 1e-12


def falsify(
    t: Tensor3,
    restarts: int = FALSIFY_RESTARTS,
    tol: float = FALSIFY_TOL,
    seed: int = 0,
    max_iter: int = FALSIFY_MAX_ITER,
) -> Witness | None:
    """Search for unit ``x, y`` with ``|sum x_i A_i y| <= tol * max_i |A_i|_2``.

    Restart ``r`` starts from a Gaussian ``x`` drawn with seed ``(seed, r)``;
    the lowest restart index that succeeds wins.
    """
    if restarts < 1:
        raise BadIndex(f"restarts must be >= 1, got {restarts}")
    arr = t.as_float()
    trivial = _trivial_witness(arr)
    if trivial is not None:
        return trivial
    p = arr.shape[0]
    scale = float(_slice_norms(arr).max())
    if scale == 0.0:
        x = np.zeros(p)
        x[0] = 1.0
        y = np.zeros(arr.shape[2])
        y[0] = 1.0
        return Witness(x, y, 0.0)
    for r in range(restarts):
        rng = np.random.default_rng([seed, r])
        x0 = rng.standard_normal(p)
        x0 /= np.linalg.norm(x0)
        x, y, f = _alternate(arr, x0, max_iter)
        res = math.sqrt(f)
        if res > tol * scale and f < 1e-4 * scale * scale:
            x, y, res = _polish(arr, x, y)
        if _witness_ok(arr, x, y, res, tol, scale):
            return Witness(x, y, res)
    return None


# --- grid certification -----------------------------------------------------

def lipschitz_constant(arr: np.ndarray) -> float:
    """``|[A_1 ... A_p]|_2``, a Lipschitz constant of ``x -> sigma_n(sum x_i A_i)``.

    ``sum d_i A_i = [A_1 ... A_p] (d (x) E_n)`` gives the bound, and it never
    exceeds ``sqrt(sum_i |A_i|_2^2)``.
    """
    return float(np.linalg.norm(np.concatenate(list(arr), axis=1), 2))


def _inv_sqrt(sym: np.ndarray) -> np.ndarray | None:
    w, v = np.linalg.eigh(sym)
    if w[0] <= 1e-12 * max(w[-1], 1e-300):
        return None
    return (v / np.sqrt(w)) @ v.T


@dataclass(frozen=True)
class Balanced:
    data: np.ndarray
    right: np.ndarray
    mix: np.ndarray
    distortion: float


def balance(arr: np.ndarray, iters: int = 20) -> Balanced:
    """Equivalent, better conditioned tensor ``L (sum_b G_ab A_b) R`` and its distortion.

    Alternately orthonormalizes the slices (Frobenius), whitens the columns
    and, when possible, the rows. AFR is invariant under these moves, and a
    margin ``mu`` of the balanced tensor gives the margin
    ``mu / (|L| |R| |G|)`` for the original one.
    """
    p, l, n = arr.shape
    a = arr.copy()
    left, right, mix = np.eye(l), np.eye(n), np.eye(p)
    for _ in range(iters):
        g = _inv_sqrt(np.einsum("aij,bij->ab", a, a))
        if g is None:
            break
        a = np.einsum("ab,bij->aij", g, a)
        mix = g @ mix
        r = _inv_sqrt(np.einsum("aij,aik->jk", a, a))
        if r is None:
            break
        a = a @ r
        right = right @ r
        k = _inv_sqrt(np.einsum("aij,akj->ik", a, a))
        if k is not None:
            a = k @ a
            left = k @ left
    distortion = np.linalg.norm(left, 2) * np.linalg.norm(right, 2) * np.linalg.norm(mix, 2)
    return Balanced(a, right, mix, float(distortion))


def _embed(face: np.ndarray, centers: np.ndarray, p: int) -> np.ndarray:
    """Lift facet coordinates to points of the cube boundary, then to the sphere.

    ``face[k]`` names the axis fixed to +1 for cell ``k``. Radial projection
    from outside the unit ball is 1-Lipschitz, so a facet cell of corner
    radius ``r`` lands inside a spherical cap of radius ``r``.
    """
    pts = np.empty((centers.shape[0], p))
    for a in range(p):
        sel = face == a
        if not np.any(sel):
            continue
        others = [j for j in range(p) if j != a]
        pts[np.ix_(sel, others)] = centers[sel]
        pts[sel, a] = 1.0
    return pts / np.linalg.norm(pts, axis=1, keepdims=True)


def _sigma_min_batch(arr: np.ndarray, xs: np.ndarray, chunk: int = 50_000) -> np.ndarray:
    out = np.empty(xs.shape[0])
    for lo in range(0, xs.shape[0], chunk):
        mats = np.einsum("Np,plk->Nlk", xs[lo:lo + chunk], arr)
        out[lo:lo + chunk] = np.linalg.svd(mats, compute_uv=False)[:, -1]
    return out


def _try_grid_point(arr: np.ndarray, x: np.ndarray, tol: float, scale: float) -> Witness | None:
    y = _least_right_vector(np.tensordot(x, arr, 1))
    x2, y2, r = _polish(arr, x, y)
    if _witness_ok(arr, x2, y2, r, tol, scale):
        return Witness(x2, y2, r)
    return None


def grid_certify(
    t: Tensor3,
    mesh: float = 0.01,
    slack: float = 0.0,
    adaptive: bool = False,
    tol: float = FALSIFY_TOL,
    max_cells: int = GRID_MAX_CELLS,
) -> AfrVerdict:
    """Certified lower bound on ``min_x sigma_n(sum x_i A_i)`` for ``p <= 4``.

    With ``adaptive=False`` every cell has radius at most ``mesh`` and the
    margin is ``min sigma - L * radius``. With ``adaptive=True`` cells are
    split only until their own bound clears ``slack`` (never finer than
    ``mesh``), which certifies far cheaper but reports a looser margin.
    """
    if mesh <= 0:
        raise BadIndex(f"mesh must be positive, got {mesh}")
    arr = t.as_float()
    p, l, n = arr.shape
    if p > GRID_MAX_P:
        raise Unsupported(f"grid certification covers p <= {GRID_MAX_P}, got p={p}")
    trivial = _trivial_witness(arr)
    if trivial is not None:
        return AfrVerdict(AfrStatus.FALSIFIED, witness=trivial, stage="shape")
    scale = float(_slice_norms(arr).max())
    if scale == 0.0:
        return AfrVerdict(AfrStatus.FALSIFIED, witness=falsify(t, restarts=1), stage="grid")
    if p == 1:
        sigma = float(np.linalg.svd(arr[0], compute_uv=False)[-1])
        if sigma > slack and sigma > 0:
            return AfrVerdict(AfrStatus.CERTIFIED_NUMERIC, margin=sigma, stage="grid")
        w = _try_grid_point(arr, np.ones(1), tol, scale)
        if w is not None:
            return AfrVerdict(AfrStatus.FALSIFIED, witness=w, stage="grid")
        return AfrVerdict(AfrStatus.INCONCLUSIVE, stage="grid")
    lip = lipschitz_constant(arr)
    dim = p - 1
    root = math.sqrt(dim)
    if adaptive:
        return _grid_adaptive(arr, mesh, slack, tol, scale, lip, max_cells)

    k = max(1, math.ceil(root / mesh))
    count = p * k**dim
    if count > max_cells:
        raise Unsupported(f"uniform grid needs {count} cells (> {max_cells}); use adaptive mode or a coarser mesh")
    ticks = -1.0 + (2.0 * np.arange(k) + 1.0) / k
    grid = np.array(list(product(ticks, repeat=dim))) if dim > 1 else ticks[:, None]
    centers = np.tile(grid, (p, 1))
    face = np.repeat(np.arange(p), grid.shape[0])
    xs = _embed(face, centers, p)
    sig = _sigma_min_batch(arr, xs)
    radius = root / k
    margin = float(sig.min() - lip * radius)
    if margin > slack and margin > 0:
        return AfrVerdict(AfrStatus.CERTIFIED_NUMERIC, margin=margin, stage="grid")
    w = _try_grid_point(arr, xs[int(np.argmin(sig))], tol, scale)
    if w is not None:
        return AfrVerdict(AfrStatus.FALSIFIED, witness=w, stage="grid")
    return AfrVerdict(AfrStatus.INCONCLUSIVE, margin=margin, stage="grid")


def _grid_adaptive(arr, mesh, slack, tol, scale, lip, max_cells) -> AfrVerdict:
    p = arr.shape[0]
    dim = p - 1
    root = math.sqrt(dim)
    face = np.arange(p)
    centers = np.zeros((p, dim))
    half = 1.0
    margin = math.inf
    evaluated = 0
    offsets = np.array(list(product((-0.5, 0.5), repeat=dim)))
    while face.size:
        evaluated += face.size
        if evaluated > max_cells:
            return AfrVerdict(AfrStatus.INCONCLUSIVE, stage="grid-budget")
        xs = _embed(face, centers, p)
        sig = _sigma_min_batch(arr, xs)
        radius = half * root
        lower = sig - lip * radius
        done = lower > max(slack, 0.0)
        if np.any(done):
            margin = min(margin, float(lower[done].min()))
        pending = ~done
        if not np.any(pending):
            break
        low = int(np.argmin(np.where(pending, sig, np.inf)))
        w = _try_grid_point(arr, xs[low], tol, scale)
        if w is not None:
            return AfrVerdict(AfrStatus.FALSIFIED, witness=w, stage="grid")
        if radius <= mesh:
            return AfrVerdict(AfrStatus.INCONCLUSIVE, stage="grid-mesh")
        face = np.repeat(face[pending], offsets.shape[0])
        centers = (centers[pending][:, None, :] + half * offsets[None, :, :]).reshape(-1, dim)
        half /= 2.0
    return AfrVerdict(AfrStatus.CERTIFIED_NUMERIC, margin=margin, stage="grid")


# --- pipeline ---------------------------------------------------------------

def _pull_back(arr: np.ndarray, bal: Balanced, w: Witness, tol: float) -> Witness | None:
    """Map a witness of the balanced tensor to one of the original."""
    x = bal.mix.T @ w.x
    y = bal.right @ w.y
    x, y = x / np.linalg.norm(x), y / np.linalg.norm(y)
    x, y, r = _polish(arr, x, y)
    if _witness_ok(arr, x, y, r, tol, float(_slice_norms(arr).max())):
        return Witness(x, y, r)
    return None


def afr_check(
    t: Tensor3,
    policy: str = "exact_first",
    restarts: int = FALSIFY_RESTARTS,
    seed: int = 0,
    tol: float = FALSIFY_TOL,
    mesh: float = 0.01,
    grid: bool = True,
    grid_budget: int = GRID_MAX_CELLS,
) -> AfrVerdict:
    """Exact certificate, then falsification, then adaptive grid (``p <= 4``).

    ``policy`` is ``"exact_first"`` or ``"numeric_only"``. The grid runs on a
    balanced equivalent tensor and its margin is mapped back, so the reported
    margin is a valid lower bound for ``t`` itself.
    """
    if policy not in ("exact_first", "numeric_only"):
        raise BadIndex(f"unknown AFR policy {policy!r}")
    arr = t.as_float()
    trivial = _trivial_witness(arr)
    if trivial is not None:
        return AfrVerdict(AfrStatus.FALSIFIED, witness=trivial, stage="shape")
    if policy == "exact_first" and exact_certify(t):
        # the orthogonality system gives sigma_n(sum x_i A_i) = |x| exactly
        return AfrVerdict(AfrStatus.CERTIFIED_EXACT, margin=1.0, stage="exact")
    w = falsify(t, restarts=restarts, tol=tol, seed=seed)
    if w is not None:
        return AfrVerdict(AfrStatus.FALSIFIED, witness=w, stage="falsify")
    if grid and t.p <= GRID_MAX_P:
        bal = balance(arr)
        verdict = grid_certify(
            Tensor3(bal.data, Kind.REAL), mesh=mesh, adaptive=True, tol=tol, max_cells=grid_budget
        )
        if verdict.certified:
            return AfrVerdict(AfrStatus.CERTIFIED_NUMERIC, margin=verdict.margin / bal.distortion, stage="grid")
        if verdict.falsified:
            w = _pull_back(arr, bal, verdict.witness, tol)
            if w is not None:
                return AfrVerdict(AfrStatus.FALSIFIED, witness=w, stage="grid")
        return AfrVerdict(AfrStatus.INCONCLUSIVE, stage=verdict.stage)
    return AfrVerdict(AfrStatus.INCONCLUSIVE, stage="heuristic")


# --- AFR-preserving transforms ---------------------------------------------

def transform(t: Tensor3, op: str, k: int | None = None) -> Tensor3:
    """Apply ``rotate``, ``pad_rows k``, ``cut_cols k`` or ``kron_lift k``.

    ``rotate`` maps ``l x n x p`` to ``l x p x n`` with slice ``B_j`` whose
    columns are the ``j``-th columns of ``A_p, ..., A_1``.
    """
    data = t.data
    p, l, n = data.shape
    if op == "rotate":
        return Tensor3(data[::-1].transpose(2, 1, 0).copy(), t.kind)
    if k is None:
        raise BadIndex(f"transform {op!r} needs an integer argument")
    if op == "pad_rows":
        if k < 1:
            raise BadIndex(f"pad_rows needs k >= 1, got {k}")
        pad = np.zeros((p, k, n), dtype=data.dtype)
        if t.kind is Kind.EXACT:
            pad[...] = 0
        return Tensor3(np.concatenate([data, pad], axis=1), t.kind)
    if op == "cut_cols":
        if not 1 <= k <= n - 1:
            raise BadIndex(f"cut_cols needs 1 <= k <= {n - 1}, got {k}")
        return Tensor3(data[:, :, :k].copy(), t.kind)
    if op == "kron_lift":
        if k < 1:
            raise BadIndex(f"kron_lift needs u >= 1, got {k}")
        if t.kind is Kind.EXACT:
            eye = np.eye(k, dtype=np.int64).astype(object)
        else:
            eye = np.eye(k)
        return Tensor3(np.stack([np.kron(eye, a) for a in data]), t.kind)
    raise BadIndex(f"unknown transform {op!r}")
