"""Lie closures of generator families and controllability rank certificates.

The closure works over the real vector space of traceless skew-Hermitian
matrices (dimension d^2 - 1), with the inner product Re tr(A^dag B).
Rank detection is modified Gram-Schmidt with a relative tolerance on
Frobenius-normalized candidates; a singular-value pass over the final
basis cross-checks the count.  Bracketing order is deterministic: each new
basis element is bracketed against all earlier ones, original generators
first, which keeps bracket depth low.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import operator_core as oc
from .errors import InternalConsistencyError

DEFAULT_TOL = 1e-9

RED_FAMILY = ("V1", "W1", "V1r", "W1r", "V2", "W2", "V2r", "W2r")
BLUE_FAMILY = ("V1", "W1", "V1b", "W1b", "V2", "W2", "V2b", "W2b")


@dataclass
class GeneratorFamily:
    """Skew-Hermitian generators on one dimension, made traceless."""

    members: list[np.ndarray]
    labels: list[str]
    removed_traces: list[complex] = field(default_factory=list)

    def __post_init__(self):
        if not self.members:
            raise ValueError("family must be nonempty")
        if len(self.labels) != len(self.members):
            raise ValueError("labels and members must align")
        d = self.members[0].shape[0]
        cleaned = []
        self.removed_traces = []
        for lab, m in zip(self.labels, self.members):
            m = np.asarray(m, dtype=np.complex128)
            if m.shape != (d, d):
                raise ValueError("all members must share one dimension")
            if np.linalg.norm(m + m.conj().T) > 1e-12 * max(1.0, np.linalg.norm(m)):
                raise ValueError(f"member {lab} is not skew-Hermitian")
            tr = np.trace(m)
            self.removed_traces.append(complex(tr))
            if abs(tr) > 0:
                m = m - (tr / d) * np.eye(d)
            cleaned.append(m)
        self.members = cleaned

    @property
    def dim(self) -> int:
        return self.members[0].shape[0]

    @classmethod
    def from_couplings(cls, ids, n: int) -> "GeneratorFamily":
        mats = [oc.build_coupling(cid, n).matrix for cid in ids]
        return cls(mats, list(ids))


@dataclass
class ClosureReport:
    dimension: int
    target: int
    certified: bool
    basis_rank_history: list[tuple[int, int]]
    tolerance: float
    n: int | None = None
    labels: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"n": self.n, "family": list(self.labels),
                "dimension": self.dimension, "target": self.target,
                "certified": self.certified, "tolerance": self.tolerance}

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _vec(m: np.ndarray) -> np.ndarray:
    return np.concatenate([m.real.ravel(), m.imag.ravel()])


def lie_closure(family: GeneratorFamily, tol: float = DEFAULT_TOL) -> ClosureReport:
    """Dimension of the real Lie algebra generated by the family.

    Deterministic given input order; stops early once the su(d) dimension
    d^2 - 1 is reached, since the closure cannot grow past it.
    """
    report, _ = closure_basis(family, tol)
    return report


def closure_basis(family: GeneratorFamily,
                  tol: float = DEFAULT_TOL) -> tuple[ClosureReport, list[np.ndarray]]:
    """Like :func:`lie_closure` but also returns the orthonormal basis."""
    if not 0 < tol <= 1e-3:
        raise ValueError("tol must lie in (0, 1e-3]")
    d = family.dim
    target = d * d - 1
    basis_mats: list[np.ndarray] = []
    basis_vecs: list[np.ndarray] = []
    raw_accepted: list[np.ndarray] = []
    history: list[tuple[int, int]] = []

    def try_add(m: np.ndarray) -> bool:
        nrm = np.linalg.norm(m)
        if nrm < 1e-13:
            return False
        v = _vec(m / nrm)
        for _ in range(2):  # twice-is-enough reorthogonalization
            for b in basis_vecs:
                v = v - np.dot(b, v) * b
        rn = np.linalg.norm(v)
        if rn <= tol:
            return False
        raw_accepted.append(_vec(m / nrm))
        v = v / rn
        basis_vecs.append(v)
        re, im = v[:d * d], v[d * d:]
        basis_mats.append((re + 1j * im).reshape(d, d))
        return True

    for g in family.members:
        try_add(g)
    history.append((0, len(basis_vecs)))

    j = 1
    while j < len(basis_mats) and len(basis_mats) < target:
        bj = basis_mats[j]
        for i in range(j):
            if len(basis_mats) >= target:
                break
            bi = basis_mats[i]
            try_add(bi @ bj - bj @ bi)
        history.append((j, len(basis_mats)))
        j += 1

    dim = len(basis_vecs)
    if dim:
        sv = np.linalg.svd(np.stack(basis_vecs), compute_uv=False)
        if abs(sv[0] - 1.0) > 1e-8 or abs(sv[-1] - 1.0) > 1e-8:
            raise InternalConsistencyError("orthonormal basis lost orthonormality")
        sv_raw = np.linalg.svd(np.stack(raw_accepted), compute_uv=False)
        rank_raw = int(np.sum(sv_raw > sv_raw[0] * tol * 1e-3))
        if rank_raw != dim:
            raise InternalConsistencyError(
                f"rank cross-check disagrees: basis {dim} vs raw svd {rank_raw}")
    report = ClosureReport(dimension=dim, target=target, certified=dim == target,
                           basis_rank_history=history, tolerance=tol,
                           labels=list(family.labels))
    return report, basis_mats


def resolve_family(selector) -> tuple[str, ...]:
    if isinstance(selector, (list, tuple)):
        return tuple(selector)
    named = {"full": oc.ION_IDS, "red-only": RED_FAMILY, "blue-only": BLUE_FAMILY}
    if selector not in named:
        raise ValueError(f"unknown family selector {selector!r}")
    return tuple(named[selector])


def _hypothesis_met(ids) -> bool:
    ids = set(ids)
    for gamma in (1, 2):
        ok = any({f"V{gamma}", f"W{gamma}", f"V{gamma}{star}", f"W{gamma}{star}"} <= ids
                 for star in ("r", "b"))
        if not ok:
            return False
    return True


def certify_modal(n: int, family="full", tol: float = DEFAULT_TOL) -> ClosureReport:
    """Rank certificate for an ion generator family on the 4n-truncation.

    Certified means the closure reaches dim su(4n) = 16n^2 - 1.  Requires
    n >= 3; a family missing a carrier+sideband quadruple for some ion
    only triggers a warning, since the closure may still be full.
    """
    if n < 3:
        raise ValueError("modal certification requires n >= 3")
    ids = resolve_family(family)
    unknown = [i for i in ids if i not in oc.ION_IDS]
    if unknown:
        raise ValueError(f"not ion generators: {unknown}")
    if not _hypothesis_met(ids):
        warnings.warn("family misses a carrier+sideband quadruple for some ion; "
                      "certification may still succeed", stacklevel=2)
    rep = lie_closure(GeneratorFamily.from_couplings(ids, n), tol)
    rep.n = n
    return rep


def certify_law_eberly(n: int, star: str, tol: float = DEFAULT_TOL) -> ClosureReport:
    """Rank certificate for the single-ion family {V, W, V*, W*} on 2n levels."""
    if n < 2:
        raise ValueError("Law-Eberly certification requires n >= 2")
    if star not in ("r", "b"):
        raise ValueError("star must be 'r' or 'b'")
    ids = ("V", "W", f"V{star}", f"W{star}")
    rep = lie_closure(GeneratorFamily.from_couplings(ids, n), tol)
    rep.n = n
    return rep
