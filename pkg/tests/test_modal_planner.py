import json

import numpy as np
import pytest

from sideband_steer import modal_planner as mp
from sideband_steer import operator_core as oc


def random_plan(p, nseg, seed, family="full"):
    rng = np.random.default_rng(seed)
    gens = mp.default_generator_ids(p, family)
    segs = []
    for k in range(nseg):
        gid = gens[int(rng.integers(len(gens)))]
        angle = float(rng.uniform(-1.5, 1.5))
        while abs(angle) < 1e-3:
            angle = float(rng.uniform(-1.5, 1.5))
        segs.append(mp.PlanSegment(gid, amplitude=np.sign(angle),
                                   duration=abs(angle)))
    return mp.Plan(p=p, M=1.0, seed=seed, target_error=1e-3,
                   achieved_error=1.0, segments=segs)


# ---------------------------------------------------------------------------
# generator schedule
# ---------------------------------------------------------------------------


def test_generator_set_sizes():
    # p=3: 4 carriers + 8 sideband ids x 2 nonzero classes
    assert len(mp.default_generator_ids(3, "full")) == 20
    assert len(mp.default_generator_ids(3, "red-only")) == 12
    assert len(mp.default_generator_ids(3, "blue-only")) == 12
    with pytest.raises(ValueError):
        mp.default_generator_ids(3, "everything")


def test_generator_operators_nonzero():
    for gid in mp.default_generator_ids(3):
        op = mp.build_generator_operator(gid, 3)
        assert len(op.pairs) > 0
        m = op.matrix
        assert np.max(np.abs(m + m.conj().T)) < 1e-12


def test_generator_id_validation():
    with pytest.raises(ValueError):
        mp.GeneratorId("carrier", 3, "V")
    with pytest.raises(ValueError):
        mp.GeneratorId("sideband", 1, "V")  # missing star/class
    gid = mp.GeneratorId("sideband", 2, "W", "b", 3)
    assert gid.coupling == "W2b"
    assert mp.GeneratorId.from_json(gid.to_json()) == gid


# ---------------------------------------------------------------------------
# planning
# ---------------------------------------------------------------------------


def test_identical_states_give_empty_plan():
    phi = oc.basis_state(3, 12)
    plan = mp.plan_transfer(phi, phi, 3, eps_plan=1e-3, seed=0)
    assert plan.segments == []
    assert plan.achieved_error == 0.0
    assert plan.success


def test_single_rotation_recovered_to_high_accuracy():
    phi0 = oc.basis_state(1, 12)
    phiT = -1j * oc.basis_state(2, 12)
    plan = mp.plan_transfer(phi0, phiT, 3, eps_plan=1e-9, seed=2)
    assert plan.success
    assert plan.achieved_error < 1e-9


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_pairs_within_tolerance(seed):
    rng = np.random.default_rng(100 + seed)
    phi0 = oc.random_state(12, rng)
    phiT = oc.random_state(12, rng)
    plan = mp.plan_transfer(phi0, phiT, 3, eps_plan=1e-3, seed=seed)
    assert plan.success
    final = mp.simulate_plan_modal(plan, np.pad(phi0, (0, 0)))[-1]
    err = np.linalg.norm(final - np.pad(phiT, (0, 0)))
    assert abs(err - plan.achieved_error) < 1e-12


@pytest.mark.parametrize("family", ["red-only", "blue-only"])
def test_restricted_family_still_plans(family):
    rng = np.random.default_rng(7)
    phi0 = oc.random_state(12, rng)
    phiT = oc.random_state(12, rng)
    plan = mp.plan_transfer(phi0, phiT, 3, eps_plan=1e-3, seed=11, family=family)
    assert plan.success
    stars = {seg.generator.star for seg in plan.segments
             if seg.generator.kind == "sideband"}
    assert stars <= ({"r"} if family == "red-only" else {"b"})


def test_plan_segment_structure():
    rng = np.random.default_rng(3)
    plan = mp.plan_transfer(oc.random_state(12, rng), oc.random_state(12, rng),
                            3, eps_plan=1e-3, seed=4, M=0.7)
    assert plan.segments, "nontrivial transfer needs segments"
    for seg in plan.segments:
        assert abs(seg.amplitude) == pytest.approx(0.7)
        assert seg.duration > 0


def test_budget_exhaustion_returns_best_effort():
    rng = np.random.default_rng(8)
    phi0, phiT = oc.random_state(12, rng), oc.random_state(12, rng)
    plan = mp.plan_transfer(phi0, phiT, 3, eps_plan=1e-12, seed=5, budget=3)
    assert not plan.success
    assert plan.achieved_error > 0


def test_rejects_bad_order():
    phi = oc.basis_state(1, 12)
    with pytest.raises(ValueError):
        mp.plan_transfer(phi, phi, 4, eps_plan=1e-3, seed=0)  # not prime
    with pytest.raises(ValueError):
        mp.plan_transfer(phi, phi, 2, eps_plan=1e-3, seed=0)  # below 3


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def test_simulate_empty_plan():
    plan = mp.Plan(p=3, M=1.0, seed=0, target_error=1e-3, achieved_error=0.0)
    phi = oc.basis_state(1, 12)
    traj = mp.simulate_plan_modal(plan, phi)
    assert len(traj) == 1
    assert np.array_equal(traj[0], phi)


def test_simulate_preserves_norm_and_reproduces():
    plan = random_plan(3, 25, seed=42)
    phi0 = oc.random_state(12, np.random.default_rng(0))
    t1 = mp.simulate_plan_modal(plan, phi0)
    t2 = mp.simulate_plan_modal(plan, phi0)
    assert len(t1) == 26
    for a, b in zip(t1, t2):
        assert np.array_equal(a, b)
    for state in t1:
        assert abs(np.linalg.norm(state) - 1) < 1e-12


def test_simulate_single_segment_closed_form():
    gid = mp.GeneratorId("carrier", 1, "V")
    plan = mp.Plan(p=3, M=1.0, seed=0, target_error=1, achieved_error=0,
                   segments=[mp.PlanSegment(gid, 1.0, np.pi / 2)])
    out = mp.simulate_plan_modal(plan, oc.basis_state(1, 12))[-1]
    assert np.max(np.abs(out - (-1j) * oc.basis_state(2, 12))) < 1e-12


# ---------------------------------------------------------------------------
# gradients
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_gradient_matches_finite_differences(seed):
    plan = random_plan(3, 10, seed)
    rng = np.random.default_rng(seed)
    phi0, phiT = oc.random_state(12, rng), oc.random_state(12, rng)
    assert mp.gradient_check(plan, phi0, phiT) < 1e-5


def test_gradient_discrepancy_scales_quadratically():
    plan = random_plan(3, 8, seed=12)
    rng = np.random.default_rng(12)
    phi0, phiT = oc.random_state(12, rng), oc.random_state(12, rng)
    d1 = mp.gradient_check(plan, phi0, phiT, step=2e-3)
    d2 = mp.gradient_check(plan, phi0, phiT, step=1e-3)
    assert d1 / d2 == pytest.approx(4.0, rel=0.35)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def test_plan_json_roundtrip(tmp_path):
    plan = random_plan(3, 6, seed=1)
    path = tmp_path / "plan.json"
    plan.dump(path)
    back = mp.Plan.load(path)
    assert back == plan
    blob = json.loads(path.read_text())
    assert set(blob) == {"p", "M", "seed", "family", "target_error",
                         "achieved_error", "segments"}
    seg = blob["segments"][0]
    assert set(seg) == {"generator", "amplitude", "duration"}
    assert set(seg["generator"]) == {"kind", "gamma", "star", "part", "class"}
