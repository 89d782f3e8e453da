"""Robust refinement of a rotation-averaging solution via IRLS.

The refinement linearizes the edge residuals in the tangent space
(right-multiplicative increments R_i <- R_i exp(delta_i)), whitens with the
Cholesky factor of the edge Hessian in the anisotropic mode, weighs each edge
with a Geman-McClure majorizer, and solves sparse block normal equations with
camera 0 pinned for gauge. Steps are halved on cost increase so the robust
cost trace is non-increasing.

Frame bookkeeping: the per-edge Hessian expresses the precision of a
right-multiplicative error at the measured relative rotation. The tangent
residual log(R_j^T R_ij R_i) equals that error conjugated by R_i, so the
anisotropic terms use the R_i-conjugated Hessian of the current iterate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import so3
from .viewgraph import ViewGraph, clamp_psd

DEFAULT_TAU_DEG = 5.0
MAX_HALVINGS = 10


@dataclass
class RobustConfig:
    tau_deg: float = DEFAULT_TAU_DEG
    max_outer_iters: int = 50
    step_tol_deg: float = 1e-6
    mode: str = "iso"  # iso | aniso

    def __post_init__(self):
        if self.tau_deg <= 0:
            raise ValueError("tau_deg must be positive")
        if self.max_outer_iters < 1:
            raise ValueError("max_outer_iters must be >= 1")


@dataclass
class RefineResult:
    rotations: np.ndarray
    cost_trace: list[float]
    max_step_trace: list[float] = field(default_factory=list)
    halving_trace: list[int] = field(default_factory=list)
    iters_run: int = 0
    status: str = "max_iters_reached"


def geman_mcclure(x: float, tau: float) -> float:
    """Redescending kernel x^2 / (x^2 + tau^2), in [0, 1)."""
    x2 = x * x
    return x2 / (x2 + tau * tau)


def irls_weight(x, tau: float):
    """Majorizer weight (tau^2 / (x^2 + tau^2))^2, normalized so w(0) = 1."""
    x = np.asarray(x, dtype=float)
    t2 = tau * tau
    w = (t2 / (x * x + t2)) ** 2
    return float(w) if w.ndim == 0 else w


def residual_tangent(rel: np.ndarray, r_i: np.ndarray, r_j: np.ndarray) -> np.ndarray:
    """Tangent residual log(R_j^T R_ij R_i); zero iff the edge is consistent."""
    return so3.log_so3(r_j.T @ rel @ r_i)


def cholesky_factor(h: np.ndarray) -> np.ndarray:
    """Upper-triangular D with D^T D = clamped Hessian."""
    return np.linalg.cholesky(clamp_psd(h)).T


def robust_cost(s_norms: np.ndarray, tau: float) -> float:
    return float(np.sum(s_norms**2 / (s_norms**2 + tau * tau)))


class _EdgeModel:
    """Per-edge precision data in the tangent frame of the residuals."""

    def __init__(self, g: ViewGraph, mode: str):
        self.mode = mode
        self.i_idx = np.array([e.i for e in g.edges], dtype=np.intp)
        self.j_idx = np.array([e.j for e in g.edges], dtype=np.intp)
        if mode == "aniso":
            missing = [f"({e.i},{e.j})" for e in g.edges if e.hessian is None]
            if missing:
                raise ValueError(
                    "aniso refinement requires a Hessian on every edge; "
                    f"missing on {', '.join(missing)}"
                )
            self.h = np.stack([clamp_psd(e.hessian) for e in g.edges])
            # Normalizing the whitener by sqrt(tr(H)/3) keeps the robust
            # scale tau comparable between iso and aniso runs.
            scale = np.sqrt(np.einsum("eaa->e", self.h) / 3.0)
            self.dn = np.stack(
                [np.linalg.cholesky(h).T / s for h, s in zip(self.h, scale)]
            )
            self.norm_scale = scale
        else:
            e_count = len(g.edges)
            self.h = np.tile(np.eye(3), (e_count, 1, 1))
            self.dn = self.h.copy()
            self.norm_scale = np.ones(e_count)

    def residuals(self, g: ViewGraph, r: np.ndarray) -> np.ndarray:
        out = np.empty((len(g.edges), 3))
        for e_id, e in enumerate(g.edges):
            out[e_id] = residual_tangent(e.rel, r[e.i], r[e.j])
        return out

    def whitened_norms(self, r: np.ndarray, omegas: np.ndarray) -> np.ndarray:
        """|Dn eps| per edge, eps the residual rotated back to the edge frame."""
        if self.mode == "iso":
            return np.linalg.norm(omegas, axis=1)
        eps = np.einsum("eab,eb->ea", r[self.i_idx], omegas)
        return np.linalg.norm(np.einsum("eab,eb->ea", self.dn, eps), axis=1)

    def effective_precisions(self, r: np.ndarray) -> np.ndarray:
        """R_i^T H R_i per edge: precision of the residual at the iterate."""
        if self.mode == "iso":
            return self.h
        ri = r[self.i_idx]
        return np.transpose(ri, (0, 2, 1)) @ self.h @ ri


def solve_normal_equations(
    g: ViewGraph, weights: np.ndarray, precisions: np.ndarray, omegas: np.ndarray
) -> np.ndarray:
    """Weighted Gauss-Newton step for min sum w_e |D_e(delta_j - delta_i - w~_e)|^2.

    `precisions` holds D_e^T D_e per edge. Camera 0 is pinned (delta_0 = 0);
    the returned (n, 3) step includes the pinned zero row.
    """
    n = g.n
    m = n - 1  # free cameras 1..n-1
    rows, cols, vals = [], [], []
    rhs = np.zeros(3 * m)

    def add_block(a: int, b: int, blk: np.ndarray):
        for p in range(3):
            for q in range(3):
                rows.append(3 * a + p)
                cols.append(3 * b + q)
                vals.append(blk[p, q])

    for e_id, e in enumerate(g.edges):
        wh = weights[e_id] * precisions[e_id]
        g_vec = wh @ omegas[e_id]
        fi, fj = e.i - 1, e.j - 1
        if fi >= 0:
            add_block(fi, fi, wh)
            rhs[3 * fi : 3 * fi + 3] -= g_vec
        if fj >= 0:
            add_block(fj, fj, wh)
            rhs[3 * fj : 3 * fj + 3] += g_vec
        if fi >= 0 and fj >= 0:
            add_block(fi, fj, -wh)
            add_block(fj, fi, -wh)

    a = sp.csc_matrix((vals, (rows, cols)), shape=(3 * m, 3 * m))
    delta_free = spla.spsolve(a, rhs)
    if not np.all(np.isfinite(delta_free)):
        sizes = [len(c) for c in g.components()]
        raise ValueError(
            f"singular normal equations (graph effectively disconnected, "
            f"component sizes {sizes})"
        )
    delta = np.zeros((n, 3))
    delta[1:] = delta_free.reshape(m, 3)
    return delta


def robust_refine(g: ViewGraph, r0: np.ndarray, cfg: RobustConfig) -> RefineResult:
    """IRLS refinement of an initial valid-rotation stack.

    Outer loop: residuals, Geman-McClure weights at scale tau on whitened
    residual norms, sparse weighted least-squares step, safeguarded update
    R_i <- R_i exp(delta_i) with step halving on cost increase.
    """
    r0 = np.asarray(r0, dtype=float)
    if r0.shape != (g.n, 3, 3):
        raise ValueError(f"initial stack shape {r0.shape} does not match n={g.n}")
    if not g.is_connected():
        sizes = [len(c) for c in g.components()]
        raise ValueError(f"graph is disconnected: component sizes {sizes}")
    model = _EdgeModel(g, cfg.mode)
    tau = np.radians(cfg.tau_deg)
    r = r0.copy()

    omegas = model.residuals(g, r)
    cost = robust_cost(model.whitened_norms(r, omegas), tau)

    cost_trace = [cost]
    step_trace: list[float] = []
    halving_trace: list[int] = []
    status = "max_iters_reached"
    iters = 0

    for it in range(cfg.max_outer_iters):
        weights = irls_weight(model.whitened_norms(r, omegas), tau)
        delta = solve_normal_equations(g, weights, model.effective_precisions(r), omegas)

        halvings = 0
        while True:
            r_new = np.stack([r[i] @ so3.exp_so3(delta[i]) for i in range(g.n)])
            omegas_new = model.residuals(g, r_new)
            cost_new = robust_cost(model.whitened_norms(r_new, omegas_new), tau)
            if cost_new <= cost + 1e-12 or halvings >= MAX_HALVINGS:
                break
            delta = 0.5 * delta
            halvings += 1

        iters = it + 1
        if cost_new > cost + 1e-12:
            # No acceptable step even after halving; keep the last iterate.
            halving_trace.append(halvings)
            step_trace.append(0.0)
            cost_trace.append(cost)
            status = "stalled"
            break

        max_step = float(np.degrees(np.max(np.linalg.norm(delta, axis=1))))
        r, omegas, cost = r_new, omegas_new, cost_new
        cost_trace.append(cost)
        step_trace.append(max_step)
        halving_trace.append(halvings)
        if max_step < cfg.step_tol_deg:
            status = "converged"
            break

    return RefineResult(
        rotations=r,
        cost_trace=cost_trace,
        max_step_trace=step_trace,
        halving_trace=halving_trace,
        iters_run=iters,
        status=status,
    )


def write_robust_trace_csv(result: RefineResult, path) -> None:
    """CSV: iter,robust_cost,max_step_deg,halvings — one row per outer iter."""
    with open(path, "w", encoding="utf-8") as f:
        f.write("iter,robust_cost,max_step_deg,halvings\n")
        for k in range(len(result.max_step_trace)):
            f.write(
                f"{k + 1},{result.cost_trace[k + 1]:.17g},"
                f"{result.max_step_trace[k]:.17g},{result.halving_trace[k]}\n"
            )
