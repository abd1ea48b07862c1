import numpy as np
import pytest

from sideband_steer import lie_certifier as lc
from sideband_steer import operator_core as oc


def haar_unitary(d, rng):
    z = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def project_residual(mat, basis):
    v = np.concatenate([mat.real.ravel(), mat.imag.ravel()])
    v = v / np.linalg.norm(v)
    for b in basis:
        bv = np.concatenate([b.real.ravel(), b.imag.ravel()])
        v = v - np.dot(bv, v) * bv
    return np.linalg.norm(v)


# ---------------------------------------------------------------------------
# basic closures
# ---------------------------------------------------------------------------


def test_single_generator_is_abelian():
    fam = lc.GeneratorFamily.from_couplings(["V1"], 2)
    assert lc.lie_closure(fam).dimension == 1


def test_law_eberly_n1_pair_generates_su2():
    fam = lc.GeneratorFamily.from_couplings(["V", "W"], 1)
    rep = lc.lie_closure(fam)
    assert rep.dimension == 3 == rep.target


def test_two_carriers_stay_small():
    fam = lc.GeneratorFamily.from_couplings(["V1", "W1"], 3)
    rep = lc.lie_closure(fam)
    assert rep.dimension == 3
    assert not rep.certified


def test_family_validation():
    with pytest.raises(ValueError):
        lc.GeneratorFamily([], [])
    with pytest.raises(ValueError):
        lc.GeneratorFamily([np.eye(2)], ["H"])  # Hermitian, not skew
    with pytest.raises(ValueError):
        lc.lie_closure(lc.GeneratorFamily.from_couplings(["V1"], 2), tol=0.5)


def test_trace_subtraction_recorded():
    m = 1j * np.eye(3)
    fam = lc.GeneratorFamily([m], ["i*id"])
    assert fam.removed_traces[0] == pytest.approx(3j)
    assert abs(np.trace(fam.members[0])) < 1e-14
    assert lc.lie_closure(fam).dimension == 0


# ---------------------------------------------------------------------------
# Law-Eberly certificates
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("star", ["r", "b"])
@pytest.mark.parametrize("n", [3, 4, 5])
def test_law_eberly_full_rank(n, star):
    rep = lc.certify_law_eberly(n, star)
    assert rep.dimension == 4 * n * n - 1
    assert rep.certified


@pytest.mark.parametrize("star", ["r", "b"])
def test_law_eberly_n2_is_symplectic(star):
    # at two phonon levels the family preserves an antisymmetric bilinear
    # form, so its closure is sp(2) (dimension 10), not su(4); see the
    # exact-arithmetic check below
    rep = lc.certify_law_eberly(2, star)
    assert rep.dimension == 10
    assert not rep.certified


def test_law_eberly_n2_invariant_form():
    mats = [oc.build_coupling(i, 2).matrix for i in ("V", "W", "Vr", "Wr")]
    d = 4
    rows = [np.kron(np.eye(d), x.T) + np.kron(x.T, np.eye(d)) for x in mats]
    sym = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            sym[i * d + j, i * d + j] += 1
            sym[i * d + j, j * d + i] += 1
    system = np.vstack(rows + [sym])
    sv = np.linalg.svd(system, compute_uv=False)
    assert int(np.sum(sv < 1e-10)) == 1  # a unique invariant antisymmetric form


def test_law_eberly_rejects_small_n():
    with pytest.raises(ValueError):
        lc.certify_law_eberly(1, "r")
    with pytest.raises(ValueError):
        lc.certify_law_eberly(3, "x")


# ---------------------------------------------------------------------------
# ion certificates
# ---------------------------------------------------------------------------


def test_modal_full_family_n3():
    rep = lc.certify_modal(3, "full")
    assert rep.dimension == 143 == rep.target
    assert rep.certified


@pytest.mark.parametrize("family", ["red-only", "blue-only"])
def test_modal_subfamilies_n3(family):
    rep = lc.certify_modal(3, family)
    assert rep.dimension == 143
    assert rep.certified


def test_modal_undersized_family_warns_and_fails():
    with pytest.warns(UserWarning):
        rep = lc.certify_modal(3, ["V1", "W1"])
    assert rep.dimension == 3
    assert not rep.certified


def test_modal_rejections():
    with pytest.raises(ValueError):
        lc.certify_modal(2, "full")
    with pytest.raises(ValueError):
        lc.certify_modal(3, ["V", "W"])  # not ion generators
    with pytest.raises(ValueError):
        lc.certify_modal(3, "purple-only")


def test_report_json():
    rep = lc.certify_modal(3, "red-only")
    blob = rep.to_json()
    assert blob["dimension"] == 143 and blob["certified"]
    assert blob["family"] == list(lc.RED_FAMILY)
    assert blob["n"] == 3


# ---------------------------------------------------------------------------
# stability properties
# ---------------------------------------------------------------------------


def test_closure_invariant_under_conjugation():
    rng = np.random.default_rng(5)
    base = lc.GeneratorFamily.from_couplings(["V", "W", "Vr", "Wr"], 3)
    ref = lc.lie_closure(base).dimension
    for _ in range(10):
        u = haar_unitary(6, rng)
        fam = lc.GeneratorFamily([u @ m @ u.conj().T for m in base.members],
                                 list(base.labels))
        assert lc.lie_closure(fam).dimension == ref


def test_closure_invariant_under_rescaling():
    rng = np.random.default_rng(6)
    ids = ["V1", "W1", "V1r", "W1r"]
    base = lc.GeneratorFamily.from_couplings(ids, 3)
    ref = lc.lie_closure(base).dimension
    scales = rng.uniform(0.1, 10, len(ids))
    fam = lc.GeneratorFamily([s * m for s, m in zip(scales, base.members)], ids)
    assert lc.lie_closure(fam).dimension == ref


def test_closure_is_closed_under_brackets():
    fam = lc.GeneratorFamily.from_couplings(["V", "W", "Vr", "Wr"], 3)
    rep, basis = lc.closure_basis(fam)
    tol = rep.tolerance
    for i in range(len(basis)):
        for j in range(i + 1, len(basis)):
            c = basis[i] @ basis[j] - basis[j] @ basis[i]
            if np.linalg.norm(c) < 1e-12:
                continue
            assert project_residual(c, basis) < 10 * tol


def test_rank_history_monotone():
    rep = lc.certify_modal(3, "full")
    ranks = [r for _, r in rep.basis_rank_history]
    assert all(b >= a for a, b in zip(ranks, ranks[1:]))
    assert ranks[-1] == 143


# ---------------------------------------------------------------------------
# appendix structure probes: the closure at n=3 contains the block shapes
# used in the rank argument
# ---------------------------------------------------------------------------


def _random_su(n, rng):
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    a = 0.5 * (z - z.conj().T)
    return a - (np.trace(a) / n) * np.eye(n)


def test_appendix_block_shapes_in_closure():
    n = 3
    rng = np.random.default_rng(9)
    fam = lc.GeneratorFamily.from_couplings(oc.ION_IDS, n)
    rep, basis = lc.closure_basis(fam)
    assert rep.certified
    p = oc.permutation_matrix(n)
    z = np.zeros((n, n), dtype=complex)
    for _ in range(5):
        blocks = [_random_su(n, rng) for _ in range(4)]
        diag = np.block([[blocks[0], z, z, z], [z, blocks[1], z, z],
                         [z, z, blocks[2], z], [z, z, z, blocks[3]]])
        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        b = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        offdiag = np.block([[z, a, z, z], [-a.conj().T, z, z, z],
                            [z, z, z, b], [z, z, -b.conj().T, z]])
        for probe in (diag, offdiag):
            fock = p.T @ probe @ p  # back to phonon-major coordinates
            assert project_residual(fock, basis) < 1e-9
