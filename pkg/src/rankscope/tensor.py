"""Dense matrices with exact or floating entries, and 3-tensors as slice sequences.

Exact matrices hold arbitrary-precision Python integers in an object array;
real matrices hold float64. The two kinds never mix implicitly: combine them
only after an explicit :meth:`Mat.to_real`.

A :class:`Tensor3` ``(A_1; ...; A_p)`` stores its ``p`` frontal ``m x n``
slices in one array of shape ``(p, m, n)``.
"""

from __future__ import annotations

import json
import numbers
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BadIndex, BadShape, KindMismatch

REAL_RANK_RTOL = 1e-9

# int64 products are exact while |a|*|b|*inner stays below this
_INT64_SAFE = 2**62


class Kind(str, Enum):
    EXACT = "int"
    REAL = "real"


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _as_exact_array(values) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype.kind in "iu":
        return arr.astype(object)
    if arr.dtype == object:
        if all(type(v) is int for v in arr.flat):
            return arr.copy()
        for v in arr.flat:
            if isinstance(v, (bool, np.bool_)) or not isinstance(v, numbers.Integral):
                raise KindMismatch(f"exact matrix entry {v!r} is not an integer")
        if any(type(v) is not int for v in arr.flat):
            return np.array([int(v) for v in arr.flat], dtype=object).reshape(arr.shape)
        return arr.copy()
    if arr.size == 0:
        return np.empty(arr.shape, dtype=object)
    raise KindMismatch(f"cannot build an exact matrix from dtype {arr.dtype}")


def _small_int64(arr: np.ndarray) -> np.ndarray | None:
    """int64 view of an exact array, or None when entries do not fit."""
    try:
        return arr.astype(np.int64)
    except OverflowError:
        return None


def _bound(arr64: np.ndarray) -> int:
    return int(np.abs(arr64).max()) if arr64.size else 0


def _exact_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a64, b64 = _small_int64(a), _small_int64(b)
    if a64 is not None and b64 is not None:
        if _bound(a64) * _bound(b64) * max(a.shape[-1], 1) < _INT64_SAFE:
            return (a64 @ b64).astype(object)
    return a @ b


def _exact_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a64, b64 = _small_int64(a), _small_int64(b)
    if a64 is not None and b64 is not None and _bound(a64) * _bound(b64) < _INT64_SAFE:
        return np.kron(a64, b64).astype(object)
    return np.kron(a, b)


class Mat:
    """Immutable dense matrix of kind :attr:`Kind.EXACT` or :attr:`Kind.REAL`."""

    __slots__ = ("_data", "_kind")

    def __init__(self, data, kind: Kind | str | None = None):
        arr = np.asarray(data)
        if arr.ndim != 2:
            raise BadShape(f"matrix data must be 2-dimensional, got ndim={arr.ndim}")
        if kind is None:
            kind = Kind.REAL if arr.dtype.kind == "f" else Kind.EXACT
        kind = Kind(kind)
        if kind is Kind.EXACT:
            arr = _as_exact_array(arr)
        else:
            if arr.dtype == object or arr.dtype.kind not in "iuf":
                arr = arr.astype(np.float64)
            arr = np.array(arr, dtype=np.float64)
        self._data = _frozen(arr)
        self._kind = kind

    @classmethod
    def _wrap(cls, arr: np.ndarray, kind: Kind) -> "Mat":
        # trusted internal results: skip entry validation
        self = cls.__new__(cls)
        self._data = _frozen(arr)
        self._kind = kind
        return self

    @classmethod
    def exact(cls, rows) -> "Mat":
        return cls(np.array(rows, dtype=object), Kind.EXACT)

    @classmethod
    def real(cls, rows) -> "Mat":
        return cls(np.array(rows, dtype=np.float64), Kind.REAL)

    @classmethod
    def identity(cls, n: int, kind: Kind | str = Kind.EXACT) -> "Mat":
        if Kind(kind) is Kind.EXACT:
            return cls(np.eye(n, dtype=np.int64), Kind.EXACT)
        return cls(np.eye(n), Kind.REAL)

    @classmethod
    def zeros(cls, rows: int, cols: int, kind: Kind | str = Kind.EXACT) -> "Mat":
        if Kind(kind) is Kind.EXACT:
            return cls(np.zeros((rows, cols), dtype=np.int64), Kind.EXACT)
        return cls(np.zeros((rows, cols)), Kind.REAL)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def kind(self) -> Kind:
        return self._kind

    @property
    def shape(self) -> tuple[int, int]:
        return self._data.shape

    @property
    def rows(self) -> int:
        return self._data.shape[0]

    @property
    def cols(self) -> int:
        return self._data.shape[1]

    @property
    def T(self) -> "Mat":
        return Mat._wrap(self._data.T.copy(), self._kind)

    def to_real(self) -> "Mat":
        if self._kind is Kind.REAL:
            return self
        return Mat(self._data.astype(np.float64), Kind.REAL)

    def as_float(self) -> np.ndarray:
        return self._data.astype(np.float64)

    def tolist(self) -> list[list]:
        if self._kind is Kind.EXACT:
            return [[int(v) for v in row] for row in self._data]
        return [[float(v) for v in row] for row in self._data]

    def _check_kind(self, other: "Mat") -> None:
        if self._kind is not other._kind:
            raise KindMismatch(f"cannot combine {self._kind.value} and {other._kind.value} matrices")

    def __matmul__(self, other: "Mat") -> "Mat":
        self._check_kind(other)
        if self.cols != other.rows:
            raise BadShape(f"matmul shape mismatch {self.shape} @ {other.shape}")
        if self._kind is Kind.EXACT:
            return Mat._wrap(_exact_matmul(self._data, other._data), Kind.EXACT)
        return Mat._wrap(self._data @ other._data, Kind.REAL)

    def __add__(self, other: "Mat") -> "Mat":
        self._check_kind(other)
        if self.shape != other.shape:
            raise BadShape(f"add shape mismatch {self.shape} + {other.shape}")
        return Mat._wrap(self._data + other._data, self._kind)

    def __sub__(self, other: "Mat") -> "Mat":
        return self + (-other)

    def __neg__(self) -> "Mat":
        return Mat._wrap(-self._data, self._kind)

    def scale(self, c) -> "Mat":
        if self._kind is Kind.EXACT:
            if isinstance(c, bool) or not isinstance(c, numbers.Integral):
                raise KindMismatch("exact matrices scale by integers only")
            return Mat._wrap(self._data * int(c), Kind.EXACT)
        return Mat(self._data * float(c), Kind.REAL)

    def __rmul__(self, c) -> "Mat":
        return self.scale(c)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mat):
            return NotImplemented
        return (
            self._kind is other._kind
            and self.shape == other.shape
            and bool(np.all(self._data == other._data))
        )

    def __hash__(self):
        return hash((self._kind, self.shape, tuple(self._data.ravel().tolist())))

    def __repr__(self) -> str:
        return f"Mat({self.tolist()!r}, kind={self._kind.value!r})"


class Tensor3:
    """An ``m x n x p`` tensor ``(A_1; ...; A_p)`` of uniform kind."""

    __slots__ = ("_data", "_kind")

    def __init__(self, data, kind: Kind | str | None = None):
        arr = np.asarray(data)
        if arr.ndim != 3:
            raise BadShape(f"tensor data must have shape (p, m, n), got ndim={arr.ndim}")
        p, m, n = arr.shape
        if min(p, m, n) < 1:
            raise BadShape(f"tensor dimensions must be positive, got m={m}, n={n}, p={p}")
        if kind is None:
            kind = Kind.REAL if arr.dtype.kind == "f" else Kind.EXACT
        kind = Kind(kind)
        if kind is Kind.EXACT:
            arr = _as_exact_array(arr)
        else:
            arr = np.array(arr, dtype=np.float64)
        self._data = _frozen(arr)
        self._kind = kind

    @classmethod
    def from_slices(cls, slices: Sequence) -> "Tensor3":
        if len(slices) == 0:
            raise BadShape("a tensor needs at least one slice")
        mats = [s if isinstance(s, Mat) else Mat(s) for s in slices]
        kinds = {s.kind for s in mats}
        if len(kinds) != 1:
            raise KindMismatch("tensor slices must share one kind")
        shapes = {s.shape for s in mats}
        if len(shapes) != 1:
            raise BadShape(f"tensor slices have differing shapes {sorted(shapes)}")
        return cls(np.stack([s.data for s in mats]), mats[0].kind)

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def kind(self) -> Kind:
        return self._kind

    @property
    def m(self) -> int:
        return self._data.shape[1]

    @property
    def n(self) -> int:
        return self._data.shape[2]

    @property
    def p(self) -> int:
        return self._data.shape[0]

    @property
    def shape(self) -> tuple[int, int, int]:
        """``(m, n, p)`` in the rows x cols x slices convention."""
        return (self.m, self.n, self.p)

    @property
    def slices(self) -> tuple[Mat, ...]:
        return tuple(Mat._wrap(self._data[k].copy(), self._kind) for k in range(self.p))

    def slice(self, k: int) -> Mat:
        return Mat._wrap(self._data[k].copy(), self._kind)

    def to_real(self) -> "Tensor3":
        if self._kind is Kind.REAL:
            return self
        return Tensor3(self._data.astype(np.float64), Kind.REAL)

    def as_float(self) -> np.ndarray:
        return self._data.astype(np.float64)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Tensor3):
            return NotImplemented
        return (
            self._kind is other._kind
            and self._data.shape == other._data.shape
            and bool(np.all(self._data == other._data))
        )

    def __hash__(self):
        return hash((self._kind, self._data.shape, tuple(self._data.ravel().tolist())))

    def __repr__(self) -> str:
        return f"Tensor3(m={self.m}, n={self.n}, p={self.p}, kind={self._kind.value!r})"


def kron(a: Mat, b: Mat) -> Mat:
    a._check_kind(b)
    if a.kind is Kind.EXACT:
        return Mat._wrap(_exact_kron(a.data, b.data), Kind.EXACT)
    return Mat._wrap(np.kron(a.data, b.data), Kind.REAL)


def kron_all(*factors: Mat) -> Mat:
    out = factors[0]
    for f in factors[1:]:
        out = kron(out, f)
    return out


def block_diag(parts: Sequence[Mat]) -> Mat:
    if len(parts) == 0:
        raise BadShape("block_diag needs at least one block")
    kinds = {p.kind for p in parts}
    if len(kinds) != 1:
        raise KindMismatch("block_diag blocks must share one kind")
    kind = parts[0].kind
    rows = sum(p.rows for p in parts)
    cols = sum(p.cols for p in parts)
    out = np.zeros((rows, cols), dtype=object if kind is Kind.EXACT else np.float64)
    if kind is Kind.EXACT:
        out[...] = 0
    r = c = 0
    for part in parts:
        out[r:r + part.rows, c:c + part.cols] = part.data
        r += part.rows
        c += part.cols
    return Mat(out, kind)


_SUB_BLOCKS = ("cols_prefix", "cols_suffix", "rows_prefix", "rows_suffix")


def sub_block(mat: Mat, which: str, k: int) -> Mat:
    """Return ``M_{<=k}``, ``_{k<}M``, ``M^{<=k}`` or ``^{k<}M``.

    ``cols_suffix k`` drops the first ``k`` columns; ``rows_suffix k`` drops
    the first ``k`` rows.
    """
    if which not in _SUB_BLOCKS:
        raise BadIndex(f"unknown sub-block selector {which!r}")
    limit = mat.cols if which.startswith("cols") else mat.rows
    if not 0 <= k <= limit:
        raise BadIndex(f"{which} index {k} outside 0..{limit}")
    d = mat.data
    if which == "cols_prefix":
        out = d[:, :k]
    elif which == "cols_suffix":
        out = d[:, k:]
    elif which == "rows_prefix":
        out = d[:k, :]
    else:
        out = d[k:, :]
    return Mat._wrap(out.copy(), mat.kind)


def tensor_cols_prefix(t: Tensor3, k: int) -> Tensor3:
    """``T_{<=k}``: keep the first ``k`` columns of every slice."""
    if not 1 <= k <= t.n:
        raise BadIndex(f"column prefix {k} outside 1..{t.n}")
    return Tensor3(t.data[:, :, :k].copy(), t.kind)


def sandwich(pmat: Mat, t: Tensor3, qmat: Mat) -> Tensor3:
    """``P T Q = (P A_1 Q; ...; P A_p Q)``."""
    if pmat.kind is not t.kind or qmat.kind is not t.kind:
        raise KindMismatch("sandwich operands must share one kind")
    if pmat.cols != t.m or t.n != qmat.rows:
        raise BadShape(
            f"sandwich shape mismatch: P is {pmat.shape}, slices are {t.m}x{t.n}, Q is {qmat.shape}"
        )
    if t.kind is Kind.EXACT:
        slices = [_exact_matmul(_exact_matmul(pmat.data, a), qmat.data) for a in t.data]
        return Tensor3(np.stack(slices), Kind.EXACT)
    out = np.einsum("ij,kjl,lm->kim", pmat.data, t.data, qmat.data)
    return Tensor3(out, Kind.REAL)


def numerical_rank(a: np.ndarray, rtol: float = REAL_RANK_RTOL) -> int:
    """Rank with singular values below ``rtol * max(sigma_max, 1)`` counted as zero."""
    if a.size == 0:
        return 0
    s = np.linalg.svd(np.asarray(a, dtype=np.float64), compute_uv=False)
    if s.size == 0:
        return 0
    return int(np.sum(s > rtol * max(s[0], 1.0)))


def exact_rank(a: np.ndarray) -> int:
    """Rank over the rationals of an integer matrix."""
    from sympy import ZZ
    from sympy.polys.matrices import DomainMatrix

    if a.size == 0:
        return 0
    rows = [[int(v) for v in row] for row in a]
    return int(DomainMatrix.from_list(rows, ZZ).rank())


def flatten_ranks(t: Tensor3, rtol: float = REAL_RANK_RTOL) -> tuple[int, int]:
    """``(crank, rrank)``: ranks of the vertical and horizontal slice flattenings."""
    stacked = np.concatenate(list(t.data), axis=0)
    aligned = np.concatenate(list(t.data), axis=1)
    if t.kind is Kind.EXACT:
        return exact_rank(stacked), exact_rank(aligned)
    return numerical_rank(stacked, rtol), numerical_rank(aligned, rtol)


# --- JSON interchange -------------------------------------------------------

def mat_to_list(mat: Mat) -> list[list]:
    return mat.tolist()


def mat_from_list(rows, kind: Kind | str) -> Mat:
    kind = Kind(kind)
    if not isinstance(rows, list) or not rows or not all(isinstance(r, list) for r in rows):
        raise BadShape("a matrix must be a non-empty list of rows")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise BadShape("matrix rows have differing lengths")
    if kind is Kind.EXACT:
        for row in rows:
            for v in row:
                if isinstance(v, bool) or not isinstance(v, int):
                    raise KindMismatch(f"exact matrix entry {v!r} is not an integer")
        return Mat(np.array(rows, dtype=object).reshape(len(rows), widths.pop()), Kind.EXACT)
    return Mat(np.array(rows, dtype=np.float64), Kind.REAL)


def tensor_to_dict(t: Tensor3) -> dict:
    return {
        "m": t.m,
        "n": t.n,
        "p": t.p,
        "kind": t.kind.value,
        "slices": [s.tolist() for s in t.slices],
    }


def tensor_from_dict(doc: dict) -> Tensor3:
    try:
        m, n, p, kind, slices = doc["m"], doc["n"], doc["p"], Kind(doc["kind"]), doc["slices"]
    except (KeyError, TypeError, ValueError) as exc:
        raise BadShape(f"malformed tensor document: {exc}") from None
    if not isinstance(slices, list) or len(slices) != p:
        raise BadShape(f"tensor declares p={p} but carries {len(slices) if isinstance(slices, list) else '?'} slices")
    mats = [mat_from_list(s, kind) for s in slices]
    for mat in mats:
        if mat.shape != (m, n):
            raise BadShape(f"slice shape {mat.shape} disagrees with declared {m}x{n}")
    return Tensor3.from_slices(mats)


def save_tensor(t: Tensor3, path: str | Path) -> None:
    Path(path).write_text(json.dumps(tensor_to_dict(t)) + "\n")


def load_tensor(path: str | Path) -> Tensor3:
    return tensor_from_dict(json.loads(Path(path).read_text()))

