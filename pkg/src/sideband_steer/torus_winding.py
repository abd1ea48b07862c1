"""Selection of lifted times t_bar = t_hat + 2*pi*s/nu and their certificates.

The searched quantity is exact: for a normal operator the deviation of a
class flow from the identity is max over eigenvalue moduli w of
2|sin(w*t_bar/2)|.  The scan runs in float64 for speed; every candidate is
re-verified with fixed-point integer arithmetic before it is accepted, so
the certified bound never depends on float argument reduction at huge
t_bar.  The same fixed-point reduction supplies exact rotation angles to
the lifted simulator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from math import isqrt

import numpy as np

from . import _kernels
from . import operator_core as oc
from . import spectral_decoupling as sd
from .errors import InternalConsistencyError, SearchExhaustedError

DEFAULT_S_MAX = 10**7
_SQRT_DIGITS = 44
TWO_PI = 2.0 * math.pi


class CancelToken:
    """Cooperative cancellation for long scans; checked between chunks."""

    def __init__(self):
        self.cancelled = False

    def cancel(self):
        self.cancelled = True


class SearchCancelled(Exception):
    pass


@lru_cache(maxsize=None)
def _sqrt_fixed(n: int) -> int:
    """floor(sqrt(n) * 10**_SQRT_DIGITS) as an exact integer."""
    return isqrt(n * 10 ** (2 * _SQRT_DIGITS))


def exact_residual(radicand: int, nu_kernel: int, s: int, t_hat: float) -> float:
    """sqrt(radicand) * (t_hat + 2*pi*s/sqrt(nu_kernel)) reduced mod 2*pi.

    Returned centered in [-pi, pi].  The winding part s*sqrt(R/k) is
    reduced with ~40 guard digits of integer arithmetic, so the result is
    accurate to ~1e-15 rad even for s near 1e12.  For radicands that are
    exact square multiples of the kernel the winding part vanishes
    identically, which realizes the periodicity of the selected class.
    """
    if radicand == 0:
        return 0.0
    den = nu_kernel * 10 ** _SQRT_DIGITS
    frac = (s * _sqrt_fixed(radicand * nu_kernel)) % den / den
    theta = math.sqrt(radicand) * t_hat + TWO_PI * frac
    return math.remainder(theta, TWO_PI)


@dataclass(frozen=True)
class DecouplingRequest:
    """Inputs of one decoupling-time selection."""

    id: str
    m: int
    ell: int
    t_hat: float
    eps: float
    s_max: int = DEFAULT_S_MAX


@dataclass
class DecouplingResult:
    """Certified winding index and its per-class error budget.

    ``per_class_error`` lists classes h != ell in ascending order followed
    by the omega_m term; ``residuals`` carries the matching representative
    angles.  The exact value of t_bar is the triple (t_hat, s, nu_kernel)
    via t_bar = t_hat + 2*pi*s/sqrt(nu_kernel); the float field is for
    reporting.
    """

    s: int
    t_bar: float
    per_class_error: list[float]
    bound: float
    residuals: list[float]
    t_hat: float = 0.0
    nu_kernel: int = 1
    class_order: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {"s": self.s, "t_bar": self.t_bar, "bound": self.bound,
                "per_class_error": list(self.per_class_error),
                "residuals": list(self.residuals),
                "t_hat": self.t_hat, "nu_kernel": self.nu_kernel}


def _torus_data(m: int, ell: int):
    """Per-class member radicands for the scan: classes h != ell, then dec."""
    part = sd.resonance_partition(m)
    if not 1 <= ell <= part.count:
        raise ValueError(f"class index ell={ell} outside 1..{part.count}")
    order = []
    members = []
    for h, cls in enumerate(part.classes, start=1):
        if h == ell:
            continue
        rads = [0] if cls.nu.is_zero else [
            int(w.coeff) ** 2 * w.kernel for w in cls.members]
        order.append(h)
        members.append(rads)
    order.append("dec")
    members.append([m - 1])
    ell_cls = part.classes[ell - 1]
    nu_kernel = 1 if ell_cls.nu.is_zero else ell_cls.nu.kernel
    return part, order, members, nu_kernel


def _exact_evaluation(members, nu_kernel, s, t_hat):
    per_class, residuals = [], []
    for rads in members:
        deltas = [exact_residual(r, nu_kernel, s, t_hat) for r in rads]
        errs = [2.0 * abs(math.sin(0.5 * d)) for d in deltas]
        i = int(np.argmax(errs)) if errs else 0
        per_class.append(errs[i] if errs else 0.0)
        # representative residual: the class representative sqrt(kernel),
        # i.e. the smallest member; zero class reports 0
        r_rep = min(rads)
        residuals.append(exact_residual(r_rep, nu_kernel, s, t_hat))
    return per_class, residuals


def find_decoupling_time(req: DecouplingRequest,
                         cancel: CancelToken | None = None) -> DecouplingResult:
    """Smallest s in 0..s_max with sum of class errors below req.eps.

    The hypothesis "omega_h/omega_m irrational or zero" is checked exactly
    before searching (it reduces to m-1 square-free).  Raises
    SearchExhaustedError with the best candidate when no s qualifies.
    """
    if not (oc.is_ion(req.id) and oc.is_sideband(req.id)):
        raise ValueError("decoupling applies to ion sideband operators only")
    if req.eps <= 0:
        raise ValueError("eps must be positive")
    if req.m < 2:
        raise ValueError("order m must be >= 2")
    if not sd.decoupling_order_ok(req.m):
        raise ValueError(
            f"order m={req.m} violates the decoupling hypothesis: "
            f"omega_{req.m} = sqrt({req.m - 1}) is rationally resonant with a lower frequency")
    _, order, members, nu_kernel = _torus_data(req.m, req.ell)

    w = np.array([math.sqrt(r) for rads in members for r in rads], dtype=np.float64)
    cls_ptr = np.cumsum([0] + [len(rads) for rads in members]).astype(np.int64)
    step = TWO_PI / math.sqrt(nu_kernel)
    max_w = float(w.max()) if len(w) else 0.0
    nterms = len(w)

    def accept(s: int) -> DecouplingResult | None:
        per_class, residuals = _exact_evaluation(members, nu_kernel, s, req.t_hat)
        bound = float(sum(per_class))
        if bound < req.eps:
            return DecouplingResult(
                s=s, t_bar=req.t_hat + step * s, per_class_error=per_class,
                bound=bound, residuals=residuals, t_hat=req.t_hat,
                nu_kernel=nu_kernel, class_order=order)
        return None

    chunk = 4_000_000 if _kernels.HAVE_NUMBA else 1_000_000
    best_s, best_bound = -1, math.inf
    s_next = 0
    while s_next <= req.s_max:
        if cancel is not None and cancel.cancelled:
            raise SearchCancelled(f"search cancelled at s={s_next}")
        s_hi = min(s_next + chunk, req.s_max + 1)
        # slack covers float64 argument-reduction drift at the chunk's top
        theta_max = max_w * (abs(req.t_hat) + step * s_hi)
        eps_scan = req.eps + 4e-15 * theta_max * max(1, nterms) + 1e-13
        cand, best_s, best_bound = _kernels.scan_decoupling(
            req.t_hat, step, w, cls_ptr, eps_scan, s_next, s_hi, best_s, best_bound)
        if cand >= 0:
            res = accept(int(cand))
            if res is not None:
                return res
            s_next = int(cand) + 1
        else:
            s_next = s_hi
    per_class, _ = _exact_evaluation(members, nu_kernel, int(best_s), req.t_hat)
    raise SearchExhaustedError(
        f"no s <= {req.s_max} meets eps={req.eps}; best s={best_s} "
        f"with bound {sum(per_class):.6g}",
        best_s=int(best_s), best_bound=float(sum(per_class)))


# ---------------------------------------------------------------------------
# verification of the correction operator
# ---------------------------------------------------------------------------


def bound_profile(m: int, ell: int, t_hat: float, s_values) -> np.ndarray:
    """Exact certified bound at each winding index in ``s_values``.

    Plot-data helper: shows how the torus residual decays along the search.
    """
    _, _, members, nu_kernel = _torus_data(m, ell)
    out = np.empty(len(s_values))
    for i, s in enumerate(s_values):
        per_class, _ = _exact_evaluation(members, nu_kernel, int(s), t_hat)
        out[i] = sum(per_class)
    return out


def exact_flow_betas(cid: str, dim: int, s: int, nu_kernel: int, t_hat: float) -> np.ndarray:
    """Per-pair rotation angles of exp(t_bar * Z_cid), exactly reduced mod 2*pi."""
    _, _, pc, _, pr = oc.pair_arrays(cid, dim)
    betas = np.empty(len(pc))
    cachebits = {}
    for i, (c, r) in enumerate(zip(pc, pr)):
        r = int(r)
        if r not in cachebits:
            cachebits[r] = exact_residual(r, nu_kernel, s, t_hat)
        betas[i] = math.copysign(1.0, c) * cachebits[r]
    return betas


def ell_class_betas(cid: str, dim: int, part: sd.ResonancePartition, ell: int,
                    t: float) -> tuple:
    """(pair arrays, angles) of exp(t * Z_{cid,ell}) on the class-ell pairs."""
    pj, pk, pc, pt, pr = oc.pair_arrays(cid, dim)
    cls = part.classes[ell - 1]
    mask = np.array([cls.matches_kernel(int(r)) and int(r) <= part.m - 2 for r in pr],
                    dtype=bool)
    return (pj[mask], pk[mask], pt[mask]), pc[mask] * t


def verify_sigma(req: DecouplingRequest, res: DecouplingResult, dim_sim: int) -> float:
    """Measured norm of (Sigma - I) restricted to Y = Y_{4(m-1)}.

    Sigma is built columnwise as exp(t_bar U) exp(-t_hat U_ell) through the
    exact segment flows; the routine also checks the defining identity
    exp(t_bar U) = exp(t_hat U_ell) Sigma on Y and that the measurement
    never exceeds the certified bound.
    """
    m = req.m
    if dim_sim < 4 * (m + 1):
        raise ValueError("dim_sim must be at least 4(m+1)")
    part = sd.resonance_partition(m)
    ydim = 4 * (m - 1)
    pj, pk, _, pt, _ = oc.pair_arrays(req.id, dim_sim)
    betas_full = exact_flow_betas(req.id, dim_sim, res.s, res.nu_kernel, res.t_hat)

    cols = np.zeros((dim_sim, ydim), dtype=np.complex128)
    cols[:ydim] = np.eye(ydim)
    _kernels.rotate_pairs_matrix(cols, pj, pk, betas_full, pt)  # exp(t_bar U)
    full_flow = cols.copy()
    (lj, lk, lt), lbetas = ell_class_betas(req.id, dim_sim, part, req.ell, -req.t_hat)
    _kernels.rotate_pairs_matrix(cols, lj, lk, lbetas, lt)  # exp(-t_hat U_ell)

    sigma_minus_i = cols.copy()
    sigma_minus_i[:ydim] -= np.eye(ydim)
    measured = float(np.linalg.norm(sigma_minus_i, ord=2))

    # identity check: exp(t_hat U_ell) Sigma == exp(t_bar U) on Y
    recomposed = cols.copy()
    _kernels.rotate_pairs_matrix(recomposed, lj, lk, -lbetas, lt)
    ident_err = float(np.linalg.norm(recomposed - full_flow, ord=2))
    if ident_err > 1e-10:
        raise InternalConsistencyError(
            f"decomposition identity fails by {ident_err:.3e} on Y")
    if measured > res.bound + 1e-10:
        raise InternalConsistencyError(
            f"measured ||(Sigma-I)|_Y|| = {measured:.3e} exceeds certified bound {res.bound:.3e}")
    return measured
