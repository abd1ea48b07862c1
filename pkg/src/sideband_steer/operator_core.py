"""Fock-coordinate basis indexing, coupling operators, and exact segment flows.

The state space is indexed 1-based by ``j = 4*phonon + offset(internal)``
with internal levels ordered ``gg, eg, ge, ee`` (offsets 1..4).  Every
coupling operator is a disjoint union of two-level blocks built from the
skew-adjoint primitives

    E[j,k]: phi_j -> i phi_k, phi_k -> i phi_j
    F[j,k]: phi_j -> -phi_k,  phi_k -> phi_j

so the flow of a single piecewise-constant segment is an exact bundle of
2x2 rotations, at any truncation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import InternalConsistencyError, TruncationOverflowError

INTERNAL_LEVELS = ("gg", "eg", "ge", "ee")

ION_IDS = ("V1", "W1", "V1r", "W1r", "V1b", "W1b",
           "V2", "W2", "V2r", "W2r", "V2b", "W2b")
LAW_EBERLY_IDS = ("V", "W", "Vr", "Wr", "Vb", "Wb")
CARRIER_IDS = ("V1", "W1", "V2", "W2", "V", "W")
ALL_IDS = ION_IDS + LAW_EBERLY_IDS

# Per-phonon offset pairs and signs, fixed so that the permuted matrices
# reproduce the closed-form block patterns (see _TTI_BLOCKS below), which
# is the convention the whole toolkit is pinned to.  Pair for phonon m is
# (4m + o1, 4m + o2) with coefficient sign*sqrt(m+1) for sidebands and
# sign*1 for carriers.
_ION_TABLE = {
    "V1":  ("E", -1.0, ((1, 2), (3, 4)), False),
    "W1":  ("F", +1.0, ((1, 2), (3, 4)), False),
    "V1r": ("E", -1.0, ((2, 5), (4, 7)), True),
    "W1r": ("F", -1.0, ((2, 5), (4, 7)), True),
    "V1b": ("E", -1.0, ((1, 6), (3, 8)), True),
    "W1b": ("F", +1.0, ((1, 6), (3, 8)), True),
    "V2":  ("E", -1.0, ((1, 3), (2, 4)), False),
    "W2":  ("F", +1.0, ((1, 3), (2, 4)), False),
    "V2r": ("E", -1.0, ((1, 7), (2, 8)), True),
    "W2r": ("F", +1.0, ((1, 7), (2, 8)), True),
    "V2b": ("E", -1.0, ((3, 5), (4, 6)), True),
    "W2b": ("F", -1.0, ((3, 5), (4, 6)), True),
}


def is_ion(cid: str) -> bool:
    return cid in ION_IDS


def is_law_eberly(cid: str) -> bool:
    return cid in LAW_EBERLY_IDS


def is_carrier(cid: str) -> bool:
    if cid not in ALL_IDS:
        raise ValueError(f"unknown coupling id {cid!r}")
    return cid in CARRIER_IDS


def is_sideband(cid: str) -> bool:
    return not is_carrier(cid)


# ---------------------------------------------------------------------------
# basis indexing
# ---------------------------------------------------------------------------


def basis_index(internal: str, phonon: int) -> int:
    """1-based basis index of the (internal, phonon) level."""
    if internal not in INTERNAL_LEVELS:
        raise ValueError(f"unknown internal level {internal!r}")
    if phonon < 0:
        raise ValueError("phonon level must be nonnegative")
    return 4 * phonon + INTERNAL_LEVELS.index(internal) + 1


def basis_split(j: int) -> tuple[str, int]:
    """Inverse of :func:`basis_index`."""
    if j < 1:
        raise ValueError("basis index is 1-based")
    return INTERNAL_LEVELS[(j - 1) % 4], (j - 1) // 4


def basis_state(j: int, dim: int) -> np.ndarray:
    """Unit vector phi_j (1-based) in C^dim."""
    if not 1 <= j <= dim:
        raise ValueError(f"basis index {j} outside dimension {dim}")
    phi = np.zeros(dim, dtype=np.complex128)
    phi[j - 1] = 1.0
    return phi


def normalize(phi: np.ndarray) -> np.ndarray:
    nrm = np.linalg.norm(phi)
    if nrm == 0:
        raise ValueError("cannot normalize the zero vector")
    return np.asarray(phi, dtype=np.complex128) / nrm


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-like random unit vector."""
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return normalize(v)


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


@dataclass
class TruncatedOperator:
    """A skew-Hermitian truncation with its disjoint two-level structure.

    ``pj``/``pk`` are 0-based index arrays; the :attr:`pairs` property
    yields the 1-based (j, k, coefficient, kind) view.  ``radicand`` holds
    the integer R with |coefficient| = sqrt(R), which is what makes the
    spectral bookkeeping exact.  Instances are treated as immutable.
    """

    id: str
    dim: int
    pj: np.ndarray
    pk: np.ndarray
    coeff: np.ndarray
    kind: np.ndarray  # uint8: 0 = E, 1 = F
    radicand: np.ndarray
    disjoint: bool = True
    _matrix: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def pairs(self):
        return [(int(j) + 1, int(k) + 1, float(c), "E" if t == 0 else "F")
                for j, k, c, t in zip(self.pj, self.pk, self.coeff, self.kind)]

    @property
    def matrix(self) -> np.ndarray:
        if self._matrix is None:
            self._matrix = expand_pairs_dense(self.dim, self.pj, self.pk, self.coeff, self.kind)
        return self._matrix


def expand_pairs_dense(dim, pj, pk, coeff, kind) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=np.complex128)
    for j, k, c, t in zip(pj, pk, coeff, kind):
        if t == 0:
            m[k, j] += 1j * c
            m[j, k] += 1j * c
        else:
            m[k, j] += -c
            m[j, k] += +c
    return m


def _check_disjoint(pj, pk, cid):
    idx = np.concatenate([pj, pk])
    if len(np.unique(idx)) != len(idx):
        raise InternalConsistencyError(f"pair list of {cid} is not disjoint")


def iter_ion_pairs(cid: str, max_min_index: int):
    """Pairs of the untruncated ion operator whose lower index is <= max_min_index.

    Yields 1-based tuples (j, k, coeff, kind, radicand).
    """
    kind, sign, offsets, sideband = _ION_TABLE[cid]
    m = 0
    while True:
        emitted = False
        for o1, o2 in offsets:
            j, k = 4 * m + o1, 4 * m + o2
            if min(j, k) <= max_min_index:
                c = sign * np.sqrt(m + 1.0) if sideband else sign
                yield j, k, c, kind, (m + 1 if sideband else 1)
                emitted = True
        if not emitted:
            return
        m += 1


@lru_cache(maxsize=None)
def _pair_arrays(cid: str, dim: int):
    """0-based pair arrays of the operator truncated to ``dim``."""
    pj, pk, pc, pt, pr = [], [], [], [], []
    if is_ion(cid):
        for j, k, c, kind, rad in iter_ion_pairs(cid, dim):
            if max(j, k) <= dim:
                pj.append(j - 1)
                pk.append(k - 1)
                pc.append(c)
                pt.append(0 if kind == "E" else 1)
                pr.append(rad)
    elif is_law_eberly(cid):
        if dim % 2:
            raise ValueError("Law-Eberly operators need an even dimension")
        n = dim // 2
        if cid in ("V", "W"):
            items = [(j, n + j, 1.0, 1) for j in range(1, n + 1)]
        elif cid in ("Vr", "Wr"):
            items = [(j + 1, n + j, np.sqrt(j), j) for j in range(1, n)]
        else:  # Vb, Wb
            items = [(j, n + j + 1, np.sqrt(j), j) for j in range(1, n)]
        for j, k, c, rad in items:
            pj.append(j - 1)
            pk.append(k - 1)
            pc.append(-c)
            pt.append(0 if cid.startswith("V") else 1)
            pr.append(rad)
    else:
        raise ValueError(f"unknown coupling id {cid!r}")
    arrays = (np.asarray(pj, dtype=np.int64), np.asarray(pk, dtype=np.int64),
              np.asarray(pc, dtype=np.float64), np.asarray(pt, dtype=np.uint8),
              np.asarray(pr, dtype=np.int64))
    _check_disjoint(arrays[0], arrays[1], cid)
    return arrays


def build_coupling(cid: str, n: int) -> TruncatedOperator:
    """Truncated coupling operator: 4n x 4n for ion ids, 2n x 2n for Law-Eberly.

    A two-level pair survives the truncation only if both endpoints fit,
    which keeps the result skew-Hermitian.
    """
    if n < 1:
        raise ValueError("truncation order must be >= 1")
    if cid not in ALL_IDS:
        raise ValueError(f"unknown coupling id {cid!r}")
    dim = 4 * n if is_ion(cid) else 2 * n
    pj, pk, pc, pt, pr = _pair_arrays(cid, dim)
    return TruncatedOperator(cid, dim, pj, pk, pc, pt, pr)


def build_D(n: int) -> np.ndarray:
    """n x n upper-shift matrix with superdiagonal sqrt(1), ..., sqrt(n-1)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    d = np.zeros((n, n))
    for j in range(1, n):
        d[j - 1, j] = np.sqrt(j)
    return d


# ---------------------------------------------------------------------------
# ordering permutation and closed-form block patterns
# ---------------------------------------------------------------------------

# Block patterns in the internal-major ordering: (row block, col block, kind)
# with kind in {I, -I, D, -D, DT, -DT}; V-type operators carry a -i factor.
_TTI_BLOCKS = {
    "V1":  (-1j, (((1, 2), "I"), ((2, 1), "I"), ((3, 4), "I"), ((4, 3), "I"))),
    "W1":  (1.0, (((1, 2), "I"), ((2, 1), "-I"), ((3, 4), "I"), ((4, 3), "-I"))),
    "V1r": (-1j, (((1, 2), "DT"), ((2, 1), "D"), ((3, 4), "DT"), ((4, 3), "D"))),
    "W1r": (1.0, (((1, 2), "DT"), ((2, 1), "-D"), ((3, 4), "DT"), ((4, 3), "-D"))),
    "V1b": (-1j, (((1, 2), "D"), ((2, 1), "DT"), ((3, 4), "D"), ((4, 3), "DT"))),
    "W1b": (1.0, (((1, 2), "D"), ((2, 1), "-DT"), ((3, 4), "D"), ((4, 3), "-DT"))),
    "V2":  (-1j, (((1, 3), "I"), ((3, 1), "I"), ((2, 4), "I"), ((4, 2), "I"))),
    "W2":  (1.0, (((1, 3), "I"), ((2, 4), "I"), ((3, 1), "-I"), ((4, 2), "-I"))),
    "V2r": (-1j, (((1, 3), "D"), ((2, 4), "D"), ((3, 1), "DT"), ((4, 2), "DT"))),
    "W2r": (1.0, (((1, 3), "D"), ((2, 4), "D"), ((3, 1), "-DT"), ((4, 2), "-DT"))),
    "V2b": (-1j, (((1, 3), "DT"), ((2, 4), "DT"), ((3, 1), "D"), ((4, 2), "D"))),
    "W2b": (1.0, (((1, 3), "DT"), ((2, 4), "DT"), ((3, 1), "-D"), ((4, 2), "-D"))),
}


def permutation_vector(n: int) -> np.ndarray:
    """new[old] for the phonon-major -> internal-major reordering (0-based)."""
    new = np.empty(4 * n, dtype=np.int64)
    for m in range(n):
        for o in range(4):
            new[4 * m + o] = o * n + m
    return new


def permutation_matrix(n: int) -> np.ndarray:
    new = permutation_vector(n)
    p = np.zeros((4 * n, 4 * n))
    p[new, np.arange(4 * n)] = 1.0
    return p


def closed_form_blocks(cid: str, n: int) -> np.ndarray:
    """The internal-major block pattern of a coupling operator."""
    factor, blocks = _TTI_BLOCKS[cid]
    d = build_D(n)
    lut = {"I": np.eye(n), "-I": -np.eye(n), "D": d, "-D": -d, "DT": d.T, "-DT": -d.T}
    out = np.zeros((4 * n, 4 * n), dtype=np.complex128)
    for (r, c), kindname in blocks:
        out[(r - 1) * n:r * n, (c - 1) * n:c * n] = factor * lut[kindname]
    return out


def permuted_matrix(cid: str, n: int) -> np.ndarray:
    """P . Z^(4n) . P^-1, checked against the closed-form block pattern."""
    if not is_ion(cid):
        raise ValueError("only ion operators have the 4-block permutation form")
    p = permutation_matrix(n)
    m = p @ build_coupling(cid, n).matrix @ p.T
    ref = closed_form_blocks(cid, n)
    err = np.max(np.abs(m - ref))
    if err > 1e-12:
        raise InternalConsistencyError(
            f"permuted {cid} deviates from its closed form by {err:.3e}")
    return m


# ---------------------------------------------------------------------------
# control vectors and generators
# ---------------------------------------------------------------------------

CONTROL_NAMES = ("v1", "w1", "v1r", "w1r", "v1b", "w1b",
                 "v2", "w2", "v2r", "w2r", "v2b", "w2b")
_CONTROL_TO_ID = dict(zip(CONTROL_NAMES, ION_IDS))


@dataclass
class ControlVector:
    """The twelve real control amplitudes of the ion system."""

    v1: float = 0.0
    w1: float = 0.0
    v1r: float = 0.0
    w1r: float = 0.0
    v1b: float = 0.0
    w1b: float = 0.0
    v2: float = 0.0
    w2: float = 0.0
    v2r: float = 0.0
    w2r: float = 0.0
    v2b: float = 0.0
    w2b: float = 0.0

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in CONTROL_NAMES}

    def complex_controls(self) -> dict[str, complex]:
        """The six complex controls u = v + i*w, keyed '1', '1r', ..., '2b'."""
        out = {}
        for key in ("1", "1r", "1b", "2", "2r", "2b"):
            out[key] = complex(getattr(self, "v" + key), getattr(self, "w" + key))
        return out

    def check_bound(self, m_bound: float) -> None:
        for name, val in self.as_dict().items():
            if abs(val) > m_bound:
                raise ValueError(f"control {name}={val} exceeds bound {m_bound}")


def assemble_generator(c: ControlVector, n: int) -> TruncatedOperator:
    """Linear combination sum(control * coupling) as one 4n x 4n operator.

    The pair list is the concatenation of the contributing pair lists and
    is generally not disjoint; segment flows require single couplings.
    """
    if n < 1:
        raise ValueError("truncation order must be >= 1")
    mats = []
    pj, pk, pc, pt, pr = [], [], [], [], []
    for name, val in c.as_dict().items():
        if val == 0.0:
            continue
        op = build_coupling(_CONTROL_TO_ID[name], n)
        mats.append(val * op.matrix)
        pj.append(op.pj)
        pk.append(op.pk)
        pc.append(val * op.coeff)
        pt.append(op.kind)
        pr.append(op.radicand)
    dim = 4 * n
    dense = np.sum(mats, axis=0) if mats else np.zeros((dim, dim), dtype=np.complex128)
    cat = lambda xs, dt: (np.concatenate(xs) if xs else np.empty(0, dtype=dt))
    out = TruncatedOperator("composite", dim,
                            cat(pj, np.int64), cat(pk, np.int64),
                            cat(pc, np.float64), cat(pt, np.uint8),
                            cat(pr, np.int64), disjoint=len(mats) <= 1)
    out._matrix = dense
    return out


# ---------------------------------------------------------------------------
# exact segment flows
# ---------------------------------------------------------------------------


def _check_support_inside(cid: str, phi: np.ndarray, dim_sim: int) -> None:
    nz = np.flatnonzero(np.abs(phi) > 0.0)
    if nz.size == 0:
        return
    top = int(nz[-1]) + 1  # 1-based
    for j, k, _, _, _ in iter_ion_pairs(cid, top):
        if max(j, k) > dim_sim and (phi[j - 1] != 0 or (k - 1 < len(phi) and phi[k - 1] != 0)):
            raise TruncationOverflowError(
                f"pair ({j},{k}) of {cid} touches the support but exits dim_sim={dim_sim}")


def apply_exp_segment(cid: str, amplitude: float, duration: float,
                      phi: np.ndarray, dim_sim: int) -> np.ndarray:
    """exp(duration * amplitude * Z_cid) . phi via closed-form 2x2 rotations.

    Raises TruncationOverflowError if a pair touching the support of phi
    would leave the simulation window (the caller must enlarge dim_sim).
    """
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    if cid not in ALL_IDS:
        raise ValueError(f"unknown coupling id {cid!r}")
    phi = np.asarray(phi, dtype=np.complex128)
    if len(phi) > dim_sim:
        raise ValueError("state longer than dim_sim")
    out = np.zeros(dim_sim, dtype=np.complex128)
    out[:len(phi)] = phi
    if is_ion(cid):
        _check_support_inside(cid, out, dim_sim)
    pj, pk, pc, pt, _ = _pair_arrays(cid, dim_sim)
    betas = (duration * amplitude) * pc
    _kernels.rotate_pairs(out, pj, pk, betas, pt)
    return out


def apply_pair_betas(op_pairs, betas: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Rotate ``phi`` (copied) by explicit per-pair angles."""
    pj, pk, _, pt, _ = op_pairs
    out = np.array(phi, dtype=np.complex128, copy=True)
    _kernels.rotate_pairs(out, pj, pk, betas, pt)
    return out


def pair_arrays(cid: str, dim: int):
    """Public view of the cached 0-based pair arrays (pj, pk, coeff, kind, radicand)."""
    return _pair_arrays(cid, dim)
