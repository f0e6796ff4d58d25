"""Detecting tensors of rank above ``p`` and Monte Carlo evidence for plural typical ranks.

For ``n x p x m`` tensors with ``(m-2)n < p <= (m-1)n`` the detector brings the
first ``m-1`` slices to a staircase normal form, reads off blocks of the last
slice and asks whether a derived ``2n x n x m`` tensor is AFR. AFR there
forces ``rank > p``; a falsified AFR test says nothing about the rank.
"""

from __future__ import annotations

import csv
import io
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .afr import GRID_MAX_CELLS, AfrVerdict, afr_check
from .canonical import multi_canonicalize
from .constructions import CondSeq, normalize_last
from .cp import CpFit, cp_fit
from .errors import BadShape, DomainError
from .tensor import Kind, Tensor3, flatten_ranks

log = logging.getLogger(__name__)

STATUSES = ("HigherRank", "NotInU", "DomainError")
MAX_COND_V = 1e10


class DetectorStatus(str, Enum):
    HIGHER_RANK = "HigherRank"
    NOT_IN_U = "NotInU"
    DOMAIN_ERROR = "DomainError"


@dataclass(frozen=True)
class DetectorVerdict:
    status: DetectorStatus
    certified: bool = False
    stacked: Tensor3 | None = None
    transcript: dict = field(default_factory=dict)

    def to_dict(self, include_stacked: bool = False) -> dict:
        out = {"status": self.status.value, "certified": self.certified, "transcript": self.transcript}
        if include_stacked and self.stacked is not None:
            out["stacked"] = [s.tolist() for s in self.stacked.slices]
        return out


def detector_params(n: int, p: int, m: int) -> tuple[int, int]:
    """``(l, v)`` for an admissible shape, else :class:`BadShape`."""
    if m < 3 or not (m - 2) * n < p <= (m - 1) * n:
        raise BadShape(f"detector needs m >= 3 and (m-2)n < p <= (m-1)n, got n={n}, p={p}, m={m}")
    l = (m - 1) * n - p
    return l, n - l


def _split(row: np.ndarray, n: int, l: int, m: int) -> list[np.ndarray]:
    widths = [n - l, l, n - l] + [n] * (m - 3)
    cuts = np.cumsum(widths)[:-1]
    return np.split(row, cuts, axis=1)


def stacked_test_tensor(z: np.ndarray, n: int, l: int) -> tuple[np.ndarray, float]:
    """The ``2n x n x m`` AFR test tensor of a normalized ``z`` and ``cond(V^{-1})``."""
    m, _, p = z.shape
    vinv = np.zeros((p, p))
    vinv[:n] = z[0]
    vinv[n:, n:] = np.eye(p - n)
    cond_v = float(np.linalg.cond(vinv))
    if not cond_v < MAX_COND_V:
        raise DomainError(f"V is numerically singular (cond {cond_v:.3g})")
    v = np.linalg.inv(vinv)
    b = _split(z[-1], n, l, m)
    c = _split(z[-1] @ v, n, l, m)
    zero = np.zeros((n, l))
    slices = [
        np.block([[b[0], zero], [c[0], c[1]]]),
        np.block([[b[1], b[2]], [zero, c[2]]]),
    ]
    slices += [np.vstack([b[k], c[k]]) for k in range(3, m)]
    slices.append(np.vstack([np.eye(n), np.eye(n)]))
    return np.stack(slices), cond_v


def detector(
    t: Tensor3,
    seed: int = 0,
    restarts: int = 32,
    grid: bool = True,
    grid_budget: int = GRID_MAX_CELLS,
) -> DetectorVerdict:
    """Decide membership of ``t`` (``n x p x m``) in the open set certifying ``rank > p``."""
    n, p, m = t.m, t.n, t.p
    l, v = detector_params(n, p, m)
    arr = t.as_float()
    transcript: dict = {"n": n, "p": p, "m": m, "l": l, "v": v}
    try:
        canon = multi_canonicalize(Tensor3(arr[: m - 1], Kind.REAL), seed=seed)
        transcript.update(canon_residual=canon.residual, condP=canon.cond_p, condQ=canon.cond_q)
        z = np.einsum("ij,kjl,lm->kim", canon.pmat.data, arr, canon.qmat.data)
        stacked, cond_v = stacked_test_tensor(z, n, l)
        transcript["condV"] = cond_v
    except DomainError as exc:
        transcript["reason"] = str(exc)
        return DetectorVerdict(DetectorStatus.DOMAIN_ERROR, transcript=transcript)
    st = Tensor3(stacked, Kind.REAL)
    verdict: AfrVerdict = afr_check(st, seed=seed, restarts=restarts, grid=grid, grid_budget=grid_budget)
    transcript["afr"] = verdict.to_dict()
    if verdict.falsified:
        return DetectorVerdict(DetectorStatus.NOT_IN_U, False, st, transcript)
    return DetectorVerdict(DetectorStatus.HIGHER_RANK, verdict.certified, st, transcript)


def witness_from_seq(seq: CondSeq) -> Tensor3:
    """The ``n x p x m`` tensor ``Y`` built from a valid sequence (with ``A_m = E``).

    ``Y_1, ..., Y_{m-1}`` are the staircase identity patterns and
    ``Y_m = (A, A_3, ..., A_{m-1})``; the detector sees ``Y`` with trivial
    normalizing transforms, so its test tensor is the sequence's own stacked
    tensor.
    """
    seq = normalize_last(seq)
    n, l, m = seq.n, seq.l, seq.m
    p = (m - 1) * n - l
    y = np.zeros((m, n, p))
    y[0, :, :n] = np.eye(n)
    for k in range(1, m - 1):
        start = (n - l) + (k - 1) * n
        y[k, :, start:start + n] = np.eye(n)
    y[m - 1] = np.hstack([seq.a.as_float()] + [x.as_float() for x in seq.extras[:-1]])
    return Tensor3(y, Kind.REAL)


# --- rank oracles -----------------------------------------------------------

def rank_leq_oracle(t: Tensor3, r: int, restarts: int = 20, seed: int = 0) -> CpFit:
    """Numerical evidence for ``rank <= r`` (``found``) from seeded CP fits."""
    return cp_fit(t, r, restarts=restarts, seed=seed)


def _jordan_delta_exact(m_rat) -> int:
    """Excess of real rank over ``n`` for ``(E; M)`` with rational ``M``.

    Works per irreducible factor ``f`` of the characteristic polynomial:
    a root of ``f`` has ``(n - rank f(M)) / deg f`` Jordan blocks, of which
    ``(rank f(M) - rank f(M)^2) / deg f`` have size at least two.
    """
    from sympy import Matrix, Poly, eye, symbols

    lam = symbols("lam")
    n = m_rat.shape[0]
    charpoly = Poly(m_rat.charpoly(lam).as_expr(), lam)
    delta = 0
    for factor, _ in charpoly.factor_list()[1]:
        deg = factor.degree()
        fm = Matrix.zeros(n, n)
        for (power,), coeff in factor.terms():
            fm += coeff * (m_rat**power if power else eye(n))
        r1 = fm.rank()
        blocks = (n - r1) // deg
        big = (r1 - (fm * fm).rank()) // deg
        real_roots = factor.count_roots()
        if real_roots:
            delta = max(delta, big)
        if real_roots < deg:
            delta = max(delta, blocks)
    return delta


def _jordan_delta_real(mat: np.ndarray) -> int | None:
    n = mat.shape[0]
    eig = np.linalg.eigvals(mat)
    radius = max(1.0, float(np.abs(eig).max()))
    tol_imag = 1e-8 * radius
    # clusters of (numerically) equal eigenvalues
    clusters: list[list[complex]] = []
    for z in sorted(eig, key=lambda w: (w.real, w.imag)):
        for cl in clusters:
            if abs(cl[0] - z) <= 1e-6 * radius:
                cl.append(z)
                break
        else:
            clusters.append([z])
    centers = [complex(np.mean(cl)) for cl in clusters]
    for i, a in enumerate(centers):
        for b in centers[i + 1:]:
            if abs(a - b) <= 1e-3 * radius:
                return None
    delta = 0
    for cl, lam in zip(clusters, centers):
        if abs(lam.imag) <= tol_imag:
            lam = complex(lam.real, 0.0)
        elif lam.imag < 0:
            continue
        if len(cl) == 1:
            blocks, big = 1, 0
        else:
            shifted = mat - lam * np.eye(n)
            s1 = np.linalg.svd(shifted, compute_uv=False)
            s2 = np.linalg.svd(shifted @ shifted, compute_uv=False)
            gray = lambda s: np.any((s > 1e-9 * radius) & (s < 1e-5 * radius))
            if gray(s1) or gray(s2):
                return None
            r1 = int(np.sum(s1 >= 1e-5 * radius))
            r2 = int(np.sum(s2 >= 1e-5 * radius**2))
            blocks, big = n - r1, r1 - r2
        delta = max(delta, big if lam.imag == 0 else blocks)
    return delta


def rank_nn2(t: Tensor3) -> int | None:
    """Real rank of an ``n x n x 2`` tensor with invertible first slice, or ``None``.

    Uses the Jordan structure of ``M = A_1^{-1} A_2``: the rank is ``n + delta``
    with ``delta`` the largest of, over the eigenvalues of ``M``, the number of
    blocks of size >= 2 (real eigenvalue) or the number of blocks (non-real).
    ``None`` flags a singular first slice or a numerically ambiguous spectrum.
    """
    if t.p != 2 or t.m != t.n:
        raise BadShape(f"rank_nn2 needs an n x n x 2 tensor, got {t.m}x{t.n}x{t.p}")
    n = t.n
    if t.kind is Kind.EXACT:
        from sympy import Matrix

        a1 = Matrix([[int(v) for v in row] for row in t.data[0]])
        if a1.rank() < n:
            return None
        a2 = Matrix([[int(v) for v in row] for row in t.data[1]])
        return n + _jordan_delta_exact(a1.inv() * a2)
    a1, a2 = t.data[0], t.data[1]
    if np.linalg.cond(a1) > 1e8:
        return None
    delta = _jordan_delta_real(np.linalg.solve(a1, a2))
    return None if delta is None else n + delta


def smallest_fit_rank(t: Tensor3, max_rank: int | None = None, restarts: int = 10, seed: int = 0) -> int | None:
    m, n, p = t.shape
    cap = max_rank or min(m * n, n * p, m * p)
    for r in range(1, cap + 1):
        if rank_leq_oracle(t, r, restarts=restarts, seed=seed).found:
            return r
    return None


def lower_bound_check(t: Tensor3, restarts: int = 10, seed: int = 0) -> bool:
    """Smallest fitted CP rank respects the flattening lower bound."""
    bound = max(flatten_ranks(t))
    fitted = smallest_fit_rank(t, restarts=restarts, seed=seed)
    return fitted is not None and fitted >= bound


# --- Monte Carlo harness ----------------------------------------------------

@dataclass(frozen=True)
class McSummary:
    shape: tuple[int, int, int]
    samples: int
    seed: int
    counts: dict
    fraction_higher: float
    fraction_fit_p: float
    certified: int
    crosscheck: bool
    runtime: float | None = None

    def to_dict(self, with_runtime: bool = True) -> dict:
        m, n, p = self.shape
        out = {
            "shape": {"m": m, "n": n, "p": p},
            "samples": self.samples,
            "seed": self.seed,
            "counts": dict(self.counts),
            "certified": self.certified,
            "fraction_higher": self.fraction_higher,
            "fraction_fit_p": self.fraction_fit_p,
            "crosscheck": self.crosscheck,
        }
        if with_runtime and self.runtime is not None:
            out["runtime"] = self.runtime
        return out

    def to_csv(self, with_runtime: bool = True) -> str:
        doc = self.to_dict(with_runtime)
        row = {
            "m": self.shape[0], "n": self.shape[1], "p": self.shape[2],
            "samples": self.samples, "seed": self.seed,
            **{s: self.counts.get(s, 0) for s in STATUSES},
            "certified": self.certified,
            "fit_p": round(self.fraction_fit_p * self.samples),
            "fraction_higher": self.fraction_higher,
            "fraction_fit_p": self.fraction_fit_p,
        }
        if "runtime" in doc:
            row["runtime"] = doc["runtime"]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(row), lineterminator="\n")
        writer.writeheader()
        writer.writerow(row)
        return buf.getvalue()


@dataclass(frozen=True)
class _Job:
    m: int
    n: int
    p: int
    seed: int
    crosscheck: bool
    restarts: int
    fit_restarts: int
    grid_budget: int


def sample_tensor(m: int, n: int, p: int, seed: int, index: int) -> Tensor3:
    """Standard Gaussian ``n x p x m`` tensor for sample ``index``."""
    rng = np.random.default_rng([seed, index])
    return Tensor3(rng.standard_normal((m, n, p)), Kind.REAL)


def _run_sample(job: _Job, index: int) -> tuple[int, str, bool, bool]:
    t = sample_tensor(job.m, job.n, job.p, job.seed, index)
    verdict = detector(t, seed=index, restarts=job.restarts, grid_budget=job.grid_budget)
    fit = False
    if job.crosscheck and verdict.status is DetectorStatus.NOT_IN_U:
        fit = rank_leq_oracle(t, job.p, restarts=job.fit_restarts, seed=index).found
    return index, verdict.status.value, verdict.certified, fit


def _run_chunk(job: _Job, indices: range) -> list[tuple[int, str, bool, bool]]:
    return [_run_sample(job, i) for i in indices]


def worker_count(requested: int | None = None) -> int:
    cap = os.environ.get("RANKSCOPE_THREADS")
    count = requested or os.cpu_count() or 1
    if cap:
        try:
            count = min(count, max(1, int(cap)))
        except ValueError:
            log.warning("ignoring non-integer RANKSCOPE_THREADS=%r", cap)
    return max(1, count)


def mc_experiment(
    m: int,
    n: int,
    p: int,
    samples: int,
    seed: int = 0,
    crosscheck: bool = False,
    workers: int | None = None,
    restarts: int = 16,
    fit_restarts: int = 5,
    grid_budget: int = 50_000,
) -> McSummary:
    """Run the detector on ``samples`` Gaussian tensors; tallies do not depend on ``workers``."""
    detector_params(n, p, m)
    if samples < 1:
        raise BadShape(f"samples must be >= 1, got {samples}")
    job = _Job(m, n, p, seed, crosscheck, restarts, fit_restarts, grid_budget)
    workers = min(worker_count(workers), samples)
    start = time.perf_counter()
    if workers == 1:
        results = _run_chunk(job, range(samples))
    else:
        bounds = np.linspace(0, samples, 4 * workers + 1).astype(int)
        chunks = [range(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [job] * len(chunks), chunks))
        results = [r for part in parts for r in part]
    results.sort(key=lambda r: r[0])
    counts = {s: 0 for s in STATUSES}
    for _, status, _, _ in results:
        counts[status] += 1
    certified = sum(1 for r in results if r[2])
    fits = sum(1 for r in results if r[3])
    return McSummary(
        shape=(m, n, p),
        samples=samples,
        seed=seed,
        counts=counts,
        fraction_higher=counts["HigherRank"] / samples,
        fraction_fit_p=fits / samples,
        certified=certified,
        crosscheck=crosscheck,
        runtime=time.perf_counter() - start,
    )
