"""Shared test oracles: independent transcriptions and synthetic models."""

import numpy as np
from scipy.linalg import expm

from sideband_steer import operator_core as oc

Z = (1, "0")

# Independent transcription of the internal-major block patterns of the
# twelve couplings (rows of 4 blocks; I/D/DT with signs; V's carry -i).
BLOCK_PATTERNS = {
    "V1": (-1j, [[Z, (1, "I"), Z, Z], [(1, "I"), Z, Z, Z],
                 [Z, Z, Z, (1, "I")], [Z, Z, (1, "I"), Z]]),
    "W1": (1, [[Z, (1, "I"), Z, Z], [(-1, "I"), Z, Z, Z],
               [Z, Z, Z, (1, "I")], [Z, Z, (-1, "I"), Z]]),
    "V1r": (-1j, [[Z, (1, "DT"), Z, Z], [(1, "D"), Z, Z, Z],
                  [Z, Z, Z, (1, "DT")], [Z, Z, (1, "D"), Z]]),
    "W1r": (1, [[Z, (1, "DT"), Z, Z], [(-1, "D"), Z, Z, Z],
                [Z, Z, Z, (1, "DT")], [Z, Z, (-1, "D"), Z]]),
    "V1b": (-1j, [[Z, (1, "D"), Z, Z], [(1, "DT"), Z, Z, Z],
                  [Z, Z, Z, (1, "D")], [Z, Z, (1, "DT"), Z]]),
    "W1b": (1, [[Z, (1, "D"), Z, Z], [(-1, "DT"), Z, Z, Z],
                [Z, Z, Z, (1, "D")], [Z, Z, (-1, "DT"), Z]]),
    "V2": (-1j, [[Z, Z, (1, "I"), Z], [Z, Z, Z, (1, "I")],
                 [(1, "I"), Z, Z, Z], [Z, (1, "I"), Z, Z]]),
    "W2": (1, [[Z, Z, (1, "I"), Z], [Z, Z, Z, (1, "I")],
               [(-1, "I"), Z, Z, Z], [Z, (-1, "I"), Z, Z]]),
    "V2r": (-1j, [[Z, Z, (1, "D"), Z], [Z, Z, Z, (1, "D")],
                  [(1, "DT"), Z, Z, Z], [Z, (1, "DT"), Z, Z]]),
    "W2r": (1, [[Z, Z, (1, "D"), Z], [Z, Z, Z, (1, "D")],
                [(-1, "DT"), Z, Z, Z], [Z, (-1, "DT"), Z, Z]]),
    "V2b": (-1j, [[Z, Z, (1, "DT"), Z], [Z, Z, Z, (1, "DT")],
                  [(1, "D"), Z, Z, Z], [Z, (1, "D"), Z, Z]]),
    "W2b": (1, [[Z, Z, (1, "DT"), Z], [Z, Z, Z, (1, "DT")],
                [(-1, "D"), Z, Z, Z], [Z, (-1, "D"), Z, Z]]),
}


def block_pattern_matrix(cid, n):
    d = oc.build_D(n)
    lut = {"I": np.eye(n), "D": d, "DT": d.T, "0": np.zeros((n, n))}
    factor, rows = BLOCK_PATTERNS[cid]
    return factor * np.block([[sign * lut[name] for sign, name in row]
                              for row in rows])


def synthetic_tracking_violations(n_draws, dim, n_steps, eps_hi, seed):
    """Iterated-approximation oracle: unitaries preserving Y perturbed by
    certified-size corrections; counts violations of the summed budget."""
    rng = np.random.default_rng(seed)
    ydim = dim - 4
    violations = 0
    for _ in range(n_draws):
        x = np.zeros(dim, dtype=complex)
        x[:ydim] = oc.random_state(ydim, rng)
        xt = x.copy()
        total = 0.0
        for _ in range(n_steps):
            qy, _ = np.linalg.qr(rng.normal(size=(ydim, ydim))
                                 + 1j * rng.normal(size=(ydim, ydim)))
            qp, _ = np.linalg.qr(rng.normal(size=(4, 4))
                                 + 1j * rng.normal(size=(4, 4)))
            ups = np.zeros((dim, dim), dtype=complex)
            ups[:ydim, :ydim] = qy
            ups[ydim:, ydim:] = qp
            eps_k = rng.uniform(0, eps_hi)
            a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
            a = 0.5 * (a - a.conj().T)
            top = np.max(np.abs(np.linalg.eigvalsh(1j * a)))
            theta = 2 * np.arcsin(min(1.0, 0.999 * eps_k / 2))
            sigma = expm(a * (theta / top)) if top > 0 else np.eye(dim)
            x = ups @ x
            xt = sigma @ (ups @ xt)
            total += eps_k
            if np.linalg.norm(x - xt) >= total:
                violations += 1
    return violations
