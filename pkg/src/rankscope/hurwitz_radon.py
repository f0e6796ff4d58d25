"""Hurwitz-Radon numbers, families and the absolutely nonsingular tensors they give."""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

from .errors import BadIndex, BadShape, InvalidFamily, NotConstructible
from .tensor import Kind, Mat, Tensor3, kron, kron_all, mat_from_list

# Building blocks used by every construction below.
A = Mat.exact([[0, 1], [-1, 0]])
P = Mat.exact([[0, 1], [1, 0]])
Q = Mat.exact([[1, 0], [0, -1]])
E2 = Mat.identity(2)


def eye(n: int) -> Mat:
    return Mat.identity(n, Kind.EXACT)


def rho(n: int) -> int:
    """Hurwitz-Radon number: for ``n = (2a+1) 2^(b+4c)`` with ``0 <= b < 4``, ``8c + 2^b``."""
    if n < 1:
        raise BadIndex(f"rho is defined for n >= 1, got {n}")
    k = 0
    while n % 2 == 0:
        n //= 2
        k += 1
    c, b = divmod(k, 4)
    return 8 * c + 2**b


@dataclass(frozen=True)
class HRFamily:
    order: int
    members: tuple[Mat, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        for mat in self.members:
            if mat.shape != (self.order, self.order):
                raise BadShape(f"member of shape {mat.shape} in a family of order {self.order}")

    def __len__(self) -> int:
        return len(self.members)

    def subfamily(self, k: int) -> "HRFamily":
        if not 0 <= k <= len(self.members):
            raise BadIndex(f"subfamily size {k} outside 0..{len(self.members)}")
        return HRFamily(self.order, self.members[:k])

    def to_dict(self) -> dict:
        return {"order": self.order, "members": [m.tolist() for m in self.members]}

    @classmethod
    def from_dict(cls, doc: dict) -> "HRFamily":
        return cls(int(doc["order"]), tuple(mat_from_list(m, Kind.EXACT) for m in doc["members"]))


def validate_hr(fam: HRFamily) -> bool:
    """Exact check of orthogonality, antisymmetry and pairwise anticommutation."""
    n = fam.order
    for mat in fam.members:
        if mat.shape != (n, n):
            raise BadShape(f"member of shape {mat.shape} in a family of order {n}")
    members = fam.members
    ident = Mat.identity(n, members[0].kind) if members else None
    for mat in members:
        if mat @ mat.T != ident:
            return False
        if mat != -mat.T:
            return False
    for a, b in combinations(members, 2):
        if a @ b != -(b @ a):
            return False
    return True


def _require_valid(fam: HRFamily) -> None:
    if not validate_hr(fam):
        raise InvalidFamily(f"input of order {fam.order} is not a Hurwitz-Radon family")


def hr_base(order: int) -> HRFamily:
    """The literal families of orders 2, 4 and 8."""
    if order == 2:
        return HRFamily(2, (A,))
    if order == 4:
        return HRFamily(4, (kron(A, E2), kron(P, A), kron(Q, A)))
    if order == 8:
        return HRFamily(
            8,
            (
                kron_all(E2, A, E2),
                kron_all(E2, P, A),
                kron_all(Q, Q, A),
                kron_all(P, Q, A),
                kron_all(A, P, Q),
                kron_all(A, P, P),
                kron_all(A, Q, E2),
            ),
        )
    raise BadIndex(f"base families exist for orders 2, 4, 8; got {order}")


def hr_double(fam: HRFamily) -> HRFamily:
    """Order ``n`` family ``{M_i}`` -> order ``2n`` family ``{A (x) E_n, Q (x) M_i}``."""
    _require_valid(fam)
    n = fam.order
    return HRFamily(2 * n, (kron(A, eye(n)),) + tuple(kron(Q, m) for m in fam.members))


def hr_compose(fam_n: HRFamily, fam_m: HRFamily) -> HRFamily:
    """Combine families of orders n and m into one of order 2nm with s + t + 1 members."""
    _require_valid(fam_n)
    _require_valid(fam_m)
    n, m = fam_n.order, fam_m.order
    members = [kron_all(P, mi, eye(m)) for mi in fam_n.members]
    members += [kron_all(Q, eye(n), lj) for lj in fam_m.members]
    members.append(kron(A, eye(n * m)))
    return HRFamily(2 * n * m, tuple(members))


def _power_of_two_family(k: int) -> HRFamily:
    if k == 0:
        return HRFamily(1, ())
    if k <= 3:
        return hr_base(2**k)
    # rho(2^k) = rho(2^(k-4)) + 8, so 7 + (rho(2^(k-4)) - 1) + 1 members is maximal
    return hr_compose(hr_base(8), _power_of_two_family(k - 4))


def hr_family(order: int) -> HRFamily:
    """A family of ``rho(order) - 1`` members for any ``order >= 1``."""
    if order < 1:
        raise BadIndex(f"family order must be >= 1, got {order}")
    k, odd = 0, order
    while odd % 2 == 0:
        odd //= 2
        k += 1
    fam = _power_of_two_family(k)
    if odd == 1:
        return fam
    lift = eye(odd)
    return HRFamily(order, tuple(kron(lift, m) for m in fam.members))


def ans_tensor(n: int, p: int) -> Tensor3:
    """``n x n x p`` absolutely nonsingular tensor ``(A_1; ...; A_{p-1}; E_n)``."""
    if p < 1:
        raise BadIndex(f"slice count must be >= 1, got {p}")
    if p > rho(n):
        raise NotConstructible(f"no {n}x{n}x{p} absolutely nonsingular tensor: rho({n}) = {rho(n)} < {p}")
    fam = hr_family(n).subfamily(p - 1)
    return Tensor3.from_slices(list(fam.members) + [eye(n)])


def save_family(fam: HRFamily, path: str | Path) -> None:
    Path(path).write_text(json.dumps(fam.to_dict()) + "\n")


def load_family(path: str | Path) -> HRFamily:
    return HRFamily.from_dict(json.loads(Path(path).read_text()))
