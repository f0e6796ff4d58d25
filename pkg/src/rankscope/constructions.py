"""Explicit AFR tensors with zero bottom blocks, and the matrix sequences they yield.

An ``(n+l) x n x m`` tensor ``(C_1; ...; C_m)`` is *special AFR* when it is
AFR and the bottom ``l`` rows of ``C_3, ..., C_m`` vanish. Such a tensor can
be turned into a sequence ``A = (B_1 | B_0 | B_2), A_3, ..., A_m`` whose
stacked tensor

    ((B_1 O; B_1 B_0); (B_0 B_2; O B_2); (A_3; A_3); ...; (A_m; A_m))

is again AFR. That stacked tensor is what the typical-rank detector tests.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .afr import AfrStatus, AfrVerdict, afr_check, transform
from .canonical import pencil_canonicalize
from .errors import BadCongruence, BadIndex, BadShape, DomainError, PreconditionViolation
from .hurwitz_radon import A, E2, P, Q, ans_tensor, eye, hr_base
from .tensor import Kind, Mat, Tensor3, kron, kron_all, mat_from_list

log = logging.getLogger(__name__)

CASES = ("M3", "M4", "M6", "M10")
PERTURB_ATTEMPTS = 8
PERTURB_FRACTION = 0.25


# --- the four explicit families ---------------------------------------------

def _case_params(case: str, n: int) -> tuple[int, int]:
    """Return ``(u, l)`` for ``case`` at size ``n`` or raise :class:`BadCongruence`."""
    case = case.upper()
    if case == "M3":
        if n % 4 != 3:
            raise BadCongruence(f"case m=3 needs n = 3 (mod 4), got n={n}")
        return (n + 1) // 4, 1
    if case == "M4":
        if n % 4 != 2 or n < 6:
            raise BadCongruence(f"case m=4 needs n = 2 (mod 4) and n >= 6, got n={n}")
        return (n + 2) // 4, 2
    if case == "M6":
        if n % 8 != 4 or n < 12:
            raise BadCongruence(f"case m=6 needs n = 4 (mod 8) and n >= 12, got n={n}")
        return (n + 4) // 8, 4
    if case == "M10":
        if n % 32 != 24:
            raise BadCongruence(f"case m=10 needs n = 24 (mod 32), got n={n}")
        return (n + 8) // 32, 8
    raise BadIndex(f"unknown construction case {case!r}; expected one of {', '.join(CASES)}")


def _case_members(case: str) -> list[Mat]:
    if case == "M3":
        return [kron(A, E2), kron(P, A)]
    if case == "M4":
        return [kron(A, E2), kron(P, A), kron(Q, A)]
    if case == "M6":
        return [
            kron_all(P, Q, A),
            kron_all(A, P, Q),
            kron_all(E2, A, E2),
            kron_all(E2, P, A),
            kron_all(Q, Q, A),
        ]
    eights = hr_base(8).members
    return (
        [kron(A, eye(16)), kron_all(P, A, eye(8))]
        + [kron_all(Q, E2, lj) for lj in eights]
    )


def build_misc_parent(case: str, n: int) -> tuple[Tensor3, int]:
    """The square ANS tensor ``(E_u (x) M_1; ...; E_u (x) M_k; E)`` and its ``l``."""
    case = case.upper()
    u, l = _case_params(case, n)
    lift = eye(u)
    members = [kron(lift, mat) for mat in _case_members(case)]
    members.append(eye(n + l))
    return Tensor3.from_slices(members), l


def build_misc(case: str, n: int) -> Tensor3:
    """``(n+l) x n x m`` special-AFR tensor: the parent cut to its first ``n`` columns."""
    parent, _ = build_misc_parent(case, n)
    return transform(parent, "cut_cols", n)


def case_dims(case: str) -> tuple[int, int]:
    """``(m, l)`` of a construction case."""
    return {"M3": (3, 1), "M4": (4, 2), "M6": (6, 4), "M10": (10, 8)}[case.upper()]


def sp_afr_from_ans(n: int, m: int, l: int) -> Tensor3:
    """Zero-padded ANS tensor: ``(n+l) x n x m`` special AFR whenever ``m <= rho(n)``."""
    if not 0 <= l < n:
        raise BadIndex(f"need 0 <= l < n, got l={l}, n={n}")
    base = ans_tensor(n, m)
    return base if l == 0 else transform(base, "pad_rows", l)


# --- special-AFR check ------------------------------------------------------

@dataclass(frozen=True)
class SpAfrReport:
    ok: bool
    zero_rows: bool
    afr: AfrVerdict | None
    heuristic: bool

    def to_dict(self) -> dict:
        out = {"ok": self.ok, "zero_rows": self.zero_rows, "heuristic": self.heuristic}
        if self.afr is not None:
            out["afr"] = self.afr.to_dict()
        return out


def _split_shape(t: Tensor3, l: int) -> int:
    n = t.n
    if not 0 <= l < n or t.m != n + l:
        raise BadShape(f"expected an (n+l) x n tensor with 0 <= l < n; got {t.m}x{n} with l={l}")
    if t.p < 3:
        raise BadShape(f"special AFR tensors need m >= 3 slices, got {t.p}")
    return n


def _bottom_zero(t: Tensor3, n: int) -> bool:
    tail = t.data[2:, n:, :]
    return tail.size == 0 or bool(np.all(tail == 0))


def sp_afr_verdict(t: Tensor3, l: int, seed: int = 0) -> SpAfrReport:
    """Zero-pattern test plus AFR verdict.

    Certification is required whenever it is available (the exact system, or
    the grid for at most four slices). Beyond that an undecided heuristic
    search counts as a pass with ``heuristic=True``.
    """
    n = _split_shape(t, l)
    if not _bottom_zero(t, n):
        return SpAfrReport(False, False, None, False)
    verdict = afr_check(t, seed=seed)
    if verdict.certified:
        return SpAfrReport(True, True, verdict, False)
    if verdict.status is AfrStatus.INCONCLUSIVE and verdict.stage == "heuristic":
        log.warning("AFR of the %dx%dx%d tensor accepted heuristically", t.m, t.n, t.p)
        return SpAfrReport(True, True, verdict, True)
    return SpAfrReport(False, True, verdict, False)


def sp_afr_check(t: Tensor3, l: int, seed: int = 0) -> bool:
    return sp_afr_verdict(t, l, seed).ok


# --- sequences and their stacked tensors -----------------------------------

@dataclass(frozen=True)
class CondSeq:
    """``A = (B_1 | B_0 | B_2)`` (``n x (2n-l)``) together with ``A_3, ..., A_m``."""

    n: int
    l: int
    m: int
    a: Mat
    extras: tuple[Mat, ...]

    def __post_init__(self):
        object.__setattr__(self, "extras", tuple(self.extras))
        n, l, m = self.n, self.l, self.m
        if not 0 <= l < n or m < 3:
            raise BadShape(f"need 0 <= l < n and m >= 3, got n={n}, l={l}, m={m}")
        if self.a.shape != (n, 2 * n - l):
            raise BadShape(f"A must be {n}x{2 * n - l}, got {self.a.shape}")
        if len(self.extras) != m - 2:
            raise BadShape(f"expected {m - 2} extra slices, got {len(self.extras)}")
        for mat in self.extras:
            if mat.shape != (n, n):
                raise BadShape(f"extra slices must be {n}x{n}, got {mat.shape}")
            if mat.kind is not self.a.kind:
                raise BadShape("A and the extra slices must share one kind")

    @property
    def kind(self) -> Kind:
        return self.a.kind

    def blocks(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(B_1, B_0, B_2)`` as arrays."""
        d, n, l = self.a.data, self.n, self.l
        return d[:, : n - l], d[:, n - l: n], d[:, n:]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "l": self.l,
            "m": self.m,
            "A": self.a.tolist(),
            "extras": [x.tolist() for x in self.extras],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CondSeq":
        try:
            n, l, m, rows, extras = doc["n"], doc["l"], doc["m"], doc["A"], doc["extras"]
        except (KeyError, TypeError) as exc:
            raise BadShape(f"malformed sequence document: missing {exc}") from None
        values = [v for row in rows for v in row] + [v for x in extras for row in x for v in row]
        exact = all(isinstance(v, int) and not isinstance(v, bool) for v in values)
        kind = Kind.EXACT if exact else Kind.REAL
        return cls(int(n), int(l), int(m), mat_from_list(rows, kind), tuple(mat_from_list(x, kind) for x in extras))


def save_seq(seq: CondSeq, path: str | Path) -> None:
    Path(path).write_text(json.dumps(seq.to_dict()) + "\n")


def load_seq(path: str | Path) -> CondSeq:
    return CondSeq.from_dict(json.loads(Path(path).read_text()))


def _zeros(rows: int, cols: int, kind: Kind) -> np.ndarray:
    if kind is Kind.EXACT:
        out = np.empty((rows, cols), dtype=object)
        out[...] = 0
        return out
    return np.zeros((rows, cols))


def seq_to_stacked(seq: CondSeq) -> Tensor3:
    """The ``2n x n x m`` tensor whose AFR property defines a valid sequence."""
    n, l, kind = seq.n, seq.l, seq.kind
    b1, b0, b2 = seq.blocks()
    first = np.block([[b1, _zeros(n, l, kind)], [b1, b0]])
    second = np.block([[b0, b2], [_zeros(n, l, kind), b2]])
    rest = [np.vstack([x.data, x.data]) for x in seq.extras]
    return Tensor3(np.stack([first, second] + rest), kind)


def normalize_last(seq: CondSeq) -> CondSeq:
    """Left-multiply everything by ``A_m^{-1}`` so that ``A_m = E_n``.

    ``diag(G, G)`` on the rows keeps the stacked block pattern and AFR.
    """
    last = seq.extras[-1].as_float()
    if np.linalg.cond(last) > 1e10:
        raise DomainError("last slice of the sequence is singular; cannot normalize it to the identity")
    inv = np.linalg.inv(last)
    a = Mat(inv @ seq.a.as_float(), Kind.REAL)
    extras = tuple(Mat(inv @ x.as_float(), Kind.REAL) for x in seq.extras[:-1]) + (Mat.identity(seq.n, Kind.REAL),)
    return CondSeq(seq.n, seq.l, seq.m, a, extras)


def _bottom_transforms(d1: np.ndarray, d2: np.ndarray, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """``(P, Q)`` with ``P (-D_2) Q = (E_l, O)`` and ``P D_1 Q = (O, E_l)``.

    For ``2l <= n`` the form only needs ``W = (-D_2; D_1)`` of full row rank,
    and ``Q = (W^+ first half | null(W) | W^+ second half)`` keeps the
    conditioning of ``W`` (orthogonal ``Q`` for orthonormal rows). Otherwise
    the general pencil canonicalization is used.
    """
    l, n = d1.shape
    w = np.vstack([-d2, d1])
    if 2 * l <= n:
        u, sv, vt = np.linalg.svd(w)
        if not sv[-1] > 1e-8 * sv[0]:
            raise DomainError("bottom pencil rows are linearly dependent")
        pinv = np.linalg.pinv(w)
        null = vt[2 * l:].T
        return np.eye(l), np.hstack([pinv[:, :l], null, pinv[:, l:]])
    canon = pencil_canonicalize(Tensor3(np.stack([-d2, d1]), Kind.REAL), seed=seed)
    return canon.pmat.data, canon.qmat.data


def _middle_fix(work: np.ndarray, n: int, l: int, floor: float = 0.1) -> np.ndarray:
    """Column operation that keeps the ``0/E/-E/0`` form and repairs a weak ``B_0``.

    With column blocks of widths ``(l, n-2l, l)``, ``S = [[E,0,0],[X,E,Z],[0,0,E]]``
    fixes both bottom blocks and turns ``B_0 = A_1 + A_2`` into
    ``B_0 + F_2 Z + G_2 X``, where ``F_2``, ``G_2`` are the middle column
    blocks of the two top halves. Directions in which ``B_0`` is weak are
    filled from the part of ``(F_2 | G_2)`` orthogonal to its strong range.
    """
    k = n - 2 * l
    top1, top2 = work[0, :n], work[1, :n]
    b0 = top1[:, n - l:] + top2[:, :l]
    scale = max(1.0, float(np.linalg.norm(b0, 2)))
    u, sv, vt = np.linalg.svd(b0, full_matrices=False)
    weak = sv < floor * scale
    if not np.any(weak):
        return np.eye(n)
    h = np.hstack([top1[:, l:l + k], top2[:, l:l + k]])
    strong = u[:, ~weak]
    h_perp = h - strong @ (strong.T @ h)
    hu, hs, hvt = np.linalg.svd(h_perp, full_matrices=False)
    usable = int(np.sum(hs > 1e-8 * max(1.0, hs[0] if hs.size else 0.0)))
    nweak = int(np.sum(weak))
    if usable < nweak:
        return np.eye(n)
    coeff = (hvt[:nweak].T / hs[:nweak]) * scale
    kmat = coeff @ vt[weak]
    s = np.eye(n)
    s[l:l + k, n - l:] = kmat[:k]
    s[l:l + k, :l] = kmat[k:]
    return s


def _seq_from_bottom_zero(arr: np.ndarray, n: int, l: int, seed: int) -> CondSeq:
    """Bottom-zero AFR tensor -> sequence, through the ``0/E/-E/0`` normal form."""
    m = arr.shape[0]
    pm, qm = _bottom_transforms(arr[0, n:, :], arr[1, n:, :], seed)
    rows = np.eye(n + l)
    rows[n:, n:] = pm
    work = np.einsum("ij,kjl,lm->kim", rows, arr, qm)
    # slices 1, 2 now read ((B_1 A_1; O E_l); (A_2 B_2; -E_l O))
    if 2 * l < n:
        work = work @ _middle_fix(work, n, l)
    a1 = work[0, :n, n - l:]
    b1 = work[0, :n, : n - l]
    a2 = work[1, :n, :l]
    b2 = work[1, :n, l:]
    b0 = a1 + a2
    if np.linalg.matrix_rank(b0, tol=1e-10 * max(1.0, np.abs(b0).max())) < l:
        raise DomainError("combined middle block has dependent columns")
    a = np.hstack([b1, b0, b2])
    extras = tuple(Mat(work[k, :n, :], Kind.REAL) for k in range(2, m))
    return CondSeq(n, l, m, Mat(a, Kind.REAL), extras)


def _perturb_bottom(arr: np.ndarray, n: int, l: int, size: float, rng) -> np.ndarray:
    """Move the bottom blocks of slices 1, 2 by a perturbation of Frobenius norm ``size``.

    Missing rank of ``W = (-D_2; D_1)`` is filled along its left null space and
    a seeded random part of the orthogonal complement of its row space, so the
    completed pencil is as well conditioned as the budget allows. A full-rank
    ``W`` gets a seeded Gaussian perturbation instead.
    """
    w = np.vstack([-arr[1, n:, :], arr[0, n:, :]])
    u, sv, vt = np.linalg.svd(w)
    rank = int(np.sum(sv > 1e-10 * max(1.0, sv[0] if sv.size else 0.0)))
    missing = min(2 * l, n) - rank
    if missing > 0:
        mix, _ = np.linalg.qr(rng.standard_normal((n - rank, missing)))
        delta = u[:, rank:rank + missing] @ (vt[rank:].T @ mix).T
    else:
        delta = rng.standard_normal(w.shape)
    delta *= size / np.linalg.norm(delta)
    out = arr.copy()
    out[1, n:, :] -= delta[:l]
    out[0, n:, :] += delta[l:]
    return out


def _trivial_seq(t: Tensor3) -> CondSeq:
    data = t.data
    a = np.hstack([data[0], data[1]])
    return CondSeq(t.n, 0, t.p, Mat(a, t.kind), tuple(Mat(x, t.kind) for x in data[2:]))


def sp_afr_to_seq(t: Tensor3, l: int, seed: int = 0, verify: bool = True) -> CondSeq:
    """Sequence whose stacked tensor is AFR, built from a special-AFR tensor.

    When the bottom pencil falls outside the canonicalization domain the
    bottom blocks of slices 1 and 2 are moved by a quarter of the certified
    AFR margin, for at most 8 seeded attempts. Since
    ``sigma_n(sum x_i (A_i + D_i)) >= |x| (margin - sqrt(sum |D_i|^2))``,
    such a move cannot destroy AFR.
    """
    n = _split_shape(t, l)
    report = sp_afr_verdict(t, l, seed)
    if not report.ok:
        raise PreconditionViolation(
            "input is not special AFR: "
            + ("bottom rows of slices 3.. are nonzero" if not report.zero_rows else f"AFR verdict {report.afr.status.value}")
        )
    if l == 0:
        return _trivial_seq(t)
    margin = report.afr.margin if report.afr.certified else None
    arr = t.as_float()
    last_error: Exception | None = None
    for attempt in range(PERTURB_ATTEMPTS + 1):
        work = arr
        if attempt:
            if margin is None:
                raise DomainError("no certified AFR margin, so the input cannot be safely perturbed") from last_error
            rng = np.random.default_rng([seed, attempt])
            work = _perturb_bottom(arr, n, l, PERTURB_FRACTION * margin, rng)
        try:
            seq = _seq_from_bottom_zero(work, n, l, seed)
        except DomainError as exc:
            last_error = exc
            continue
        if verify:
            verdict = afr_check(seq_to_stacked(seq), seed=seed)
            if verdict.falsified:
                last_error = DomainError("stacked tensor of the extracted sequence was falsified")
                continue
        return seq
    raise DomainError(f"sequence extraction failed after {PERTURB_ATTEMPTS} perturbations: {last_error}")
