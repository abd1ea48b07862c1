"""Lifting a modal plan to the full system and simulating it exactly.

Carrier segments pass through unchanged: carrier flows never leave a
4-index internal block, so their truncation error is exactly zero.
Sideband segments are replaced by exp(t_bar * Z) where t_bar comes from
the winding search, with the per-segment budget eps/N spread over the
sideband segments only.  The lifted run is simulated with exact pair
rotations at a dimension computed from the support-growth bound (one
phonon level per sideband segment), so the reported tail mass is a bug
detector, not a truncation estimate.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from . import operator_core as oc
from . import spectral_decoupling as sd
from . import torus_winding as tw
from .errors import InternalConsistencyError, SearchExhaustedError
from .modal_planner import Plan, simulate_plan_modal


@dataclass
class LiftedSegment:
    """One admissible segment of the full system.

    For sideband origins amplitude*duration equals t_bar, whose exact
    value is the triple (t_hat, s, nu_kernel); carriers keep their source
    amplitude and duration and contribute zero predicted error.
    """

    coupling: str
    amplitude: float
    duration: float
    origin: int
    predicted_error: float = 0.0
    s: int | None = None
    t_hat: float | None = None
    nu_kernel: int | None = None

    @property
    def is_sideband(self) -> bool:
        return self.s is not None

    def to_json(self) -> dict:
        return {"coupling": self.coupling, "amplitude": self.amplitude,
                "duration": self.duration, "origin": self.origin,
                "predicted_error": self.predicted_error, "s": self.s,
                "t_bar": (self.amplitude * self.duration if self.is_sideband else None),
                "t_hat": self.t_hat, "nu_kernel": self.nu_kernel}

    @classmethod
    def from_json(cls, d: dict) -> "LiftedSegment":
        return cls(coupling=d["coupling"], amplitude=d["amplitude"],
                   duration=d["duration"], origin=d["origin"],
                   predicted_error=d["predicted_error"], s=d["s"],
                   t_hat=d["t_hat"], nu_kernel=d["nu_kernel"])


@dataclass
class LiftedPlan:
    p: int
    eps: float
    dim_sim: int
    segments: list[LiftedSegment] = field(default_factory=list)
    total_predicted_error: float = 0.0

    def to_json(self) -> dict:
        return {"p": self.p, "eps": self.eps, "dim_sim": self.dim_sim,
                "total_predicted_error": self.total_predicted_error,
                "segments": [s.to_json() for s in self.segments]}

    @classmethod
    def from_json(cls, d: dict) -> "LiftedPlan":
        return cls(p=d["p"], eps=d["eps"], dim_sim=d["dim_sim"],
                   total_predicted_error=d["total_predicted_error"],
                   segments=[LiftedSegment.from_json(s) for s in d["segments"]])

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LiftedPlan":
        with open(path) as fh:
            return cls.from_json(json.load(fh))


def choose_prime(n: int) -> int:
    """Smallest prime >= max(n, 3); re-checks the decoupling hypothesis."""
    if n < 1:
        raise ValueError("n must be >= 1")
    p = max(n, 3)
    while not _is_prime(p):
        p += 1
    if not sd.decoupling_order_ok(p + 1):
        raise InternalConsistencyError(f"hypothesis fails at m={p + 1} for prime p={p}")
    return p


def _is_prime(n: int) -> bool:
    if n < 2:
        return False
    d = 2
    while d * d <= n:
        if n % d == 0:
            return False
        d += 1
    return True


def lift_plan(plan: Plan, eps: float, s_max: int = tw.DEFAULT_S_MAX,
              jobs: int = 1) -> LiftedPlan:
    """Replace modal segments by admissible full-system segments.

    Sideband segments get the uniform budget eps / (number of sideband
    segments); carriers are exact and keep predicted error 0.  A failed
    winding search propagates with the index of the failing segment.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not plan.success:
        raise ValueError("refusing to lift a failed plan "
                         f"(achieved {plan.achieved_error:.3e} >= target "
                         f"{plan.target_error:.3e})")
    m = plan.p + 1
    side_idx = [i for i, seg in enumerate(plan.segments)
                if seg.generator.kind == "sideband"]
    n_side = len(side_idx)
    eps_seg = eps / n_side if n_side else 0.0

    def lift_one(i: int) -> LiftedSegment:
        seg = plan.segments[i]
        t_hat = seg.angle
        req = tw.DecouplingRequest(id=seg.generator.coupling, m=m,
                                   ell=seg.generator.class_index,
                                   t_hat=t_hat, eps=eps_seg, s_max=s_max)
        try:
            res = tw.find_decoupling_time(req)
        except SearchExhaustedError as exc:
            exc.segment_index = i
            raise
        sign = 1.0 if res.t_bar >= 0 else -1.0
        return LiftedSegment(coupling=seg.generator.coupling,
                             amplitude=sign * plan.M,
                             duration=abs(res.t_bar) / plan.M,
                             origin=i, predicted_error=res.bound, s=res.s,
                             t_hat=res.t_hat, nu_kernel=res.nu_kernel)

    lifted_side = {}
    if n_side:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                for i, lifted in zip(side_idx, pool.map(lift_one, side_idx)):
                    lifted_side[i] = lifted
        else:
            for i in side_idx:
                lifted_side[i] = lift_one(i)

    segments = []
    for i, seg in enumerate(plan.segments):
        if i in lifted_side:
            segments.append(lifted_side[i])
        else:
            segments.append(LiftedSegment(coupling=seg.generator.coupling,
                                          amplitude=seg.amplitude,
                                          duration=seg.duration, origin=i))
    total = float(sum(s.predicted_error for s in segments))
    if n_side and total >= eps:
        raise InternalConsistencyError(
            f"per-segment budgets sum to {total:.3e}, not below eps={eps}")
    dim_sim = 4 * (plan.p + n_side + 1)
    return LiftedPlan(p=plan.p, eps=eps, dim_sim=dim_sim, segments=segments,
                      total_predicted_error=total)


def simulate_lifted(lp: LiftedPlan, phi0: np.ndarray) -> tuple[np.ndarray, float]:
    """Exact simulation of a lifted plan; returns (final state, tail mass).

    Tail mass is the largest probability mass ever observed beyond the
    running support guard Y_{4(p + sidebands so far)}.  The simulation is
    exact, so any appreciable tail indicates a bug.
    """
    dim = lp.dim_sim
    phi = np.zeros(dim, dtype=np.complex128)
    phi0 = np.asarray(phi0, dtype=np.complex128)
    if len(phi0) > dim:
        raise ValueError("phi0 longer than the simulation dimension")
    phi[:len(phi0)] = phi0
    sides = 0
    tail = 0.0
    for seg in lp.segments:
        if seg.is_sideband:
            phi = _apply_lifted_sideband(seg, phi, dim)
            sides += 1
        else:
            phi = oc.apply_exp_segment(seg.coupling, seg.amplitude, seg.duration,
                                       phi, dim)
        guard = 4 * (lp.p + sides)
        if guard < dim:
            tail = max(tail, float(np.sum(np.abs(phi[guard:]) ** 2)))
    return phi, tail


def _apply_lifted_sideband(seg: LiftedSegment, phi: np.ndarray, dim: int) -> np.ndarray:
    # exact mod-2*pi rotation angles; float t_bar would lose the selected
    # class's periodicity for large winding indices
    oc._check_support_inside(seg.coupling, phi, dim)
    pj, pk, _, pt, _ = oc.pair_arrays(seg.coupling, dim)
    betas = tw.exact_flow_betas(seg.coupling, dim, seg.s, seg.nu_kernel, seg.t_hat)
    out = phi.copy()
    _kernels.rotate_pairs(out, pj, pk, betas, pt)
    return out


def error_report(plan: Plan, lp: LiftedPlan, phi0: np.ndarray,
                 phiT: np.ndarray) -> dict:
    """End-to-end tracking report with the iterated-approximation verdict.

    Checks both the unconditional budget (lifted vs modal final state is
    within the summed per-segment bounds) and the end-to-end triangle
    inequality; violation of either raises, since the underlying estimate
    is exact mathematics.
    """
    dim = lp.dim_sim
    phi0 = np.asarray(phi0, dtype=np.complex128)
    phiT = np.asarray(phiT, dtype=np.complex128)
    final, tail = simulate_lifted(lp, phi0)
    modal = simulate_plan_modal(plan, phi0)[-1]
    modal_p = np.zeros(dim, dtype=np.complex128)
    modal_p[:len(modal)] = modal
    target = np.zeros(dim, dtype=np.complex128)
    target[:len(phiT)] = phiT

    lifting_error = float(np.linalg.norm(final - modal_p))
    final_error = float(np.linalg.norm(final - target))
    budget = lp.total_predicted_error
    rhs = plan.achieved_error + budget + 1e-9
    report = {
        "final_error": final_error,
        "modal_error": plan.achieved_error,
        "lifting_error": lifting_error,
        "total_predicted_error": budget,
        "tail_mass": tail,
        "per_segment": [{"origin": s.origin, "coupling": s.coupling,
                         "predicted_error": s.predicted_error, "s": s.s}
                        for s in lp.segments],
        "running_budget": list(np.cumsum([s.predicted_error for s in lp.segments])),
        "verdict": bool(final_error <= rhs),
        "budget_sound": bool(lifting_error <= budget + 1e-9),
    }
    if not report["budget_sound"]:
        raise InternalConsistencyError(
            f"lifting error {lifting_error:.3e} exceeds predicted budget {budget:.3e}")
    if not report["verdict"]:
        raise InternalConsistencyError(
            f"final error {final_error:.3e} exceeds modal+lifting budget {rhs:.3e}")
    return report
