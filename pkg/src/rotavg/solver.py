"""Anisotropic coordinate descent over the view-graph objective.

Each coordinate update replaces one camera's rotation with the SO(3)
projection of the gathered neighbor term, which solves that camera's
subproblem globally; sweeps visit cameras in a fresh seeded shuffle.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import so3
from .viewgraph import ConnectionBlocks

DEFAULT_MAX_SWEEPS = 1000
DEFAULT_OBJECTIVE_TOL = 1e-12
DEFAULT_STEP_TOL_DEG = 1e-7


@dataclass
class SolverConfig:
    init: str = "zeros"  # zeros | identity | random | mst
    max_sweeps: int = DEFAULT_MAX_SWEEPS
    objective_tol: float = DEFAULT_OBJECTIVE_TOL
    step_tol_deg: float = DEFAULT_STEP_TOL_DEG
    shuffle_seed: int = 0
    mode: str = "aniso"

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.objective_tol <= 0 or self.step_tol_deg <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class SolveResult:
    rotations: np.ndarray  # (n, 3, 3), all valid rotations
    objective_trace: list[float]
    max_step_trace: list[float] = field(default_factory=list)
    sweeps_run: int = 0
    status: str = "max_sweeps_reached"


def make_init(kind: str, n: int, seed: int = 0) -> np.ndarray:
    """Initial stack: all zeros, all identities, or seeded Haar samples."""
    if kind == "zeros":
        return np.zeros((n, 3, 3))
    if kind == "identity":
        return np.tile(np.eye(3), (n, 1, 1))
    if kind == "random":
        rng = np.random.default_rng(seed)
        return np.stack([so3.random_rotation(rng) for _ in range(n)])
    raise ValueError(f"unknown init kind {kind!r} (mst inits come from chain_init)")


def objective(nb: ConnectionBlocks, r: np.ndarray) -> float:
    """Sparse evaluation of the stacked objective -<N, R R^T>.

    Equals -2 * sum over canonical edges of <lower_e, R_j R_i^T>.
    """
    if nb.num_edges == 0:
        return 0.0
    ri = r[nb.i_idx]  # (E,3,3)
    rj = r[nb.j_idx]
    prod = rj @ np.transpose(ri, (0, 2, 1))
    return -2.0 * float(np.einsum("eab,eab->", nb.lower, prod))


def coordinate_update(nb: ConnectionBlocks, r: np.ndarray, k: int) -> np.ndarray:
    """Optimal rotation for camera k with all other blocks fixed.

    Gathers G = sum over neighbors m of N_{m,k}^T R_m and projects it onto
    SO(3). An isolated vertex yields G = 0, which projects to the identity
    (a warning is recorded).
    """
    indices, coeffs = nb.neighbor_tables()
    return _update_from_tables(indices, coeffs, r, k)


def _update_from_tables(indices, coeffs, r, k) -> np.ndarray:
    idx = indices[k]
    if len(idx) == 0:
        warnings.warn(f"vertex {k} has no incident edges; using identity")
        return np.eye(3)
    g = coeffs[k] @ r[idx].reshape(-1, 3)
    return so3.project_so3(g)


def _gather(indices, coeffs, r, k) -> np.ndarray:
    idx = indices[k]
    return coeffs[k] @ r[idx].reshape(-1, 3)


def _det3(m: np.ndarray) -> float:
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )


def acd_solve(nb: ConnectionBlocks, cfg: SolverConfig, init: np.ndarray) -> SolveResult:
    """Run coordinate-descent sweeps until the stopping rule or max_sweeps.

    Updates are applied in place within a sweep (Gauss-Seidel); each sweep
    visits the cameras in a fresh permutation drawn from a generator seeded
    by (shuffle_seed, sweep index). Converged means the relative objective
    decrease and the max per-camera step both fell below their tolerances.

    Zero-start handling: a gathered term that is (near) zero because all
    neighbors are still unassigned leaves the block unassigned during the
    main pass; the first such vertex of the run is seeded with the identity.
    After the main pass the sweep re-visits still-unassigned vertices until
    everything is assigned, so rotations chain outward from a single seed
    and every camera holds a valid rotation once the first sweep finishes.
    Chaining from one seed is what makes the zero start land in a good
    basin instead of scattering identity islands across the graph.
    """
    n = nb.n
    r = np.array(init, dtype=float, copy=True)
    if r.shape != (n, 3, 3):
        raise ValueError(f"init shape {r.shape} does not match n={n}")
    indices, coeffs = nb.neighbor_tables()

    obj_trace: list[float] = []
    step_trace: list[float] = []
    prev_obj = objective(nb, r)
    status = "max_sweeps_reached"
    sweeps = 0
    # Blocks equal to zero are "unassigned" (the permitted zero-init state).
    assigned = np.array([np.any(blk) for blk in r])
    seeded = bool(assigned.any())

    svd = np.linalg.svd
    two_sqrt2 = 2.0 * np.sqrt(2.0)

    def update(k: int) -> float:
        """Closed-form coordinate step for camera k; returns its angle in degrees.

        Returns -1.0 when all of k's neighbors are still unassigned and the
        block is left untouched (or seeded, if no seed exists yet).
        """
        nonlocal seeded
        idx = indices[k]
        if len(idx) == 0:
            if not assigned[k]:
                warnings.warn(f"vertex {k} has no incident edges; using identity")
                r[k] = np.eye(3)
                assigned[k] = True
                return 180.0
            return 0.0
        g = coeffs[k] @ r[idx].reshape(-1, 3)
        u, s, vt = svd(g)
        if s[0] < 1e-12:
            if not seeded:
                r[k] = np.eye(3)
                assigned[k] = True
                seeded = True
                return 180.0
            return -1.0
        if _det3(u) * _det3(vt) < 0.0:
            u[:, 2] = -u[:, 2]
        new_rk = u @ vt
        if assigned[k]:
            # Geodesic step from the chordal gap: |R1 - R2|_F = 2*sqrt(2)*sin(theta/2)
            d = new_rk - r[k]
            half_sin = min(1.0, np.sqrt((d * d).sum()) / two_sqrt2)
            step = np.degrees(2.0 * np.arcsin(half_sin))
        else:
            step = 180.0
            assigned[k] = True
        r[k] = new_rk
        return step

    for sweep in range(cfg.max_sweeps):
        rng = np.random.default_rng([cfg.shuffle_seed, sweep])
        order = rng.permutation(n)
        max_step = 0.0
        for k in order:
            step = update(k)
            if step > max_step:
                max_step = step
        # Completion passes: chain any still-unassigned vertices within this
        # sweep so the whole stack is valid before convergence is judged.
        while not assigned.all():
            progress = False
            for k in order:
                if not assigned[k] and update(k) >= 0.0:
                    progress = True
            if not progress:
                # No unassigned vertex touches the assigned set: the graph is
                # disconnected, so seed the next component and keep chaining.
                k = int(order[np.flatnonzero(~assigned[order])[0]])
                warnings.warn(
                    f"vertex {k} is unreachable from the seeded component; "
                    "starting a new identity seed"
                )
                r[k] = np.eye(3)
                assigned[k] = True
            max_step = 180.0
        cur_obj = objective(nb, r)
        obj_trace.append(cur_obj)
        step_trace.append(max_step)
        sweeps = sweep + 1
        rel_decrease = abs(prev_obj - cur_obj) / max(1.0, abs(cur_obj))
        prev_obj = cur_obj
        if rel_decrease < cfg.objective_tol and max_step < cfg.step_tol_deg:
            status = "converged"
            break

    return SolveResult(
        rotations=r,
        objective_trace=obj_trace,
        max_step_trace=step_trace,
        sweeps_run=sweeps,
        status=status,
    )


def bcd_oracle_update(nb_iso: ConnectionBlocks, r: np.ndarray, k: int) -> np.ndarray:
    """Closed-form single-column update of the rank-constrained relaxation.

    Test oracle only. Builds W (the k-th block-column of the isotropic block
    matrix without the k-th block-row) and B from the fixed valid-rotation
    blocks, forms both sign choices of B W ((W^T B W)^{1/2})^+, and returns
    the one with the larger <W, S>. On feasible points it must equal
    stack-without-k times the transposed coordinate_update result.
    """
    n = nb_iso.n
    others = [m for m in range(n) if m != k]
    pos = {m: p for p, m in enumerate(others)}
    w = np.zeros((3 * (n - 1), 3))
    for e in range(nb_iso.num_edges):
        i, j = int(nb_iso.i_idx[e]), int(nb_iso.j_idx[e])
        low = nb_iso.lower[e]  # N_ji
        if i == k and j != k:
            w[3 * pos[j] : 3 * pos[j] + 3] = low  # N_{j,k}
        elif j == k and i != k:
            w[3 * pos[i] : 3 * pos[i] + 3] = low.T  # N_{i,k}
    r_others = r[others].reshape(-1, 3)  # (3(n-1), 3)
    b = r_others @ r_others.T

    bw = b @ w
    m = w.T @ bw
    m = 0.5 * (m + m.T)
    evals, evecs = np.linalg.eigh(m)
    inv_sqrt = np.where(evals > 1e-12 * max(evals[-1], 1.0), 1.0 / np.sqrt(np.maximum(evals, 1e-300)), 0.0)
    pinv_sqrt = (evecs * inv_sqrt) @ evecs.T

    best, best_score = None, -np.inf
    for sign in (1.0, -1.0):
        s = sign * bw @ pinv_sqrt
        score = float(np.sum(w * s))
        if score > best_score:
            best, best_score = s, score
    return best


def write_trace_csv(result: SolveResult, path) -> None:
    """CSV: sweep,objective,max_step_deg — one row per completed sweep."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("sweep,objective,max_step_deg\n")
        for s, (obj, step) in enumerate(
            zip(result.objective_trace, result.max_step_trace), start=1
        ):
            f.write(f"{s},{obj:.17g},{step:.17g}\n")
