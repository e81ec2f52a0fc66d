"""Preconditioned nonlinear conjugate-gradient minimization.

The driver follows the fixed recipe: a 5-round boundary-fixed stretch
initializer, a block preconditioner frozen at the initial Laplacian
(interior block applied to both coordinate gradients, boundary block to the
angle gradient), then Fletcher-Reeves updates with preconditioned inner
products.  Step sizes come from a one-sample quadratic model of the energy
along the direction; an optional mode wraps that guess in a bracketing
strong-Wolfe search, which is the regime the descent-direction bounds hold
in.

The engine itself is objective-agnostic; landmark registration reuses it
with a penalized stretch energy.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import sem
from .energy import (
    DiskMap,
    assemble_stretch_laplacian,
    grad_authalic,
    normalized_authalic_energy,
    signed_image_areas,
)
from .errors import DegenerateMapError, NotDescentError
from .linalg import factorize

STEP_GROWTH_CAP = 100.0   # reject quadratic steps above this multiple of the last
ENERGY_INCREASE_TOL = 0.1  # quadratic mode backtracks past +10% energy
INITIALIZER_ROUNDS = 5


@dataclass
class LineSearchConfig:
    """Step-size policy: `quadratic` (pure quadratic-model steps) or
    `wolfe` (quadratic guess safeguarded by a strong-Wolfe bracket)."""

    mode: str = "quadratic"
    c1: float = 1e-4
    c2: float = 0.4
    alpha0: float = 2.0
    max_backtracks: int = 12

    def __post_init__(self):
        if self.mode not in ("quadratic", "wolfe"):
            raise ValueError(f"unknown line-search mode {self.mode!r}")
        if not (0.0 < self.c1 < self.c2 < 0.5):
            raise ValueError(f"need 0 < c1 < c2 < 0.5, got c1={self.c1}, c2={self.c2}")
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")


@dataclass
class QuadraticModel:
    """Quadratic fit a2 a^2 + a1 a + a0 matching the energy value and slope
    at 0 and the value at the previous step length."""

    a0: float
    a1: float
    a2: float
    alpha_prev: float
    phi0: float
    dphi0: float
    phi_prev: float

    @classmethod
    def from_samples(cls, phi0, dphi0, alpha_prev, phi_prev):
        denom = alpha_prev * alpha_prev
        if denom > 0.0 and math.isfinite(phi_prev):
            a2 = (phi_prev - phi0 - alpha_prev * dphi0) / denom
        else:
            a2 = math.inf  # unusable sample; quadratic_step falls back
        return cls(a0=phi0, a1=dphi0, a2=a2, alpha_prev=alpha_prev,
                   phi0=phi0, dphi0=dphi0, phi_prev=phi_prev)


def quadratic_step(model: QuadraticModel) -> float:
    """Minimizer of the quadratic model, with guards for useless samples.

    Concave or non-finite samples fall back to half the previous step;
    steps outside (0, 100x previous] clamp to the previous step.
    """
    if model.dphi0 >= 0:
        raise NotDescentError(f"slope at 0 is {model.dphi0:g}, not a descent direction")
    if not math.isfinite(model.a2) or model.a2 <= 0.0:
        return 0.5 * model.alpha_prev
    alpha = -model.dphi0 / (2.0 * model.a2)
    if alpha <= 0.0 or alpha > STEP_GROWTH_CAP * model.alpha_prev:
        return model.alpha_prev
    return alpha


def fr_beta(g_new, h_new, lam_old) -> float:
    """Fletcher-Reeves factor with preconditioned inner products."""
    if lam_old <= 0:
        raise ValueError(f"previous preconditioned gradient norm {lam_old:g} <= 0")
    return float(h_new @ g_new) / lam_old


def wolfe_check(phi0, dphi0, phi_a, dphi_a, c1, c2, alpha):
    """(sufficient decrease, curvature) flags of a candidate step."""
    suff = phi_a <= phi0 + c1 * alpha * dphi0
    curv = abs(dphi_a) <= c2 * abs(dphi0)
    return suff, curv


def _strong_wolfe(phi, dphi, phi0, dphi0, alpha_init, c1, c2,
                  max_expand=20, max_zoom=40):
    """Bracketing strong-Wolfe search; returns (alpha, phi(alpha))."""
    a_prev, phi_prev = 0.0, phi0
    a = alpha_init
    for i in range(max_expand):
        phi_a = phi(a)
        if phi_a > phi0 + c1 * a * dphi0 or (i > 0 and phi_a >= phi_prev):
            return _zoom(a_prev, a, phi_prev, phi, dphi, phi0, dphi0, c1, c2, max_zoom)
        dphi_a = dphi(a)
        if abs(dphi_a) <= -c2 * dphi0:
            return a, phi_a
        if dphi_a >= 0:
            return _zoom(a, a_prev, phi_a, phi, dphi, phi0, dphi0, c1, c2, max_zoom)
        a_prev, phi_prev = a, phi_a
        a = 2.0 * a
    raise NotDescentError("strong Wolfe bracketing failed to expand")


def _zoom(a_lo, a_hi, phi_lo, phi, dphi, phi0, dphi0, c1, c2, max_zoom):
    for _ in range(max_zoom):
        mid = 0.5 * (a_lo + a_hi)
        a = mid
        phi_a = phi(a)
        if phi_a > phi0 + c1 * a * dphi0 or phi_a >= phi_lo:
            a_hi = a
        else:
            dphi_a = dphi(a)
            if abs(dphi_a) <= -c2 * dphi0:
                return a, phi_a
            if dphi_a * (a_hi - a_lo) >= 0:
                a_hi = a_lo
            a_lo, phi_lo = a, phi_a
    raise NotDescentError("strong Wolfe zoom failed to converge")


@dataclass
class CgState:
    """One iterate of the preconditioned CG loop."""

    x: np.ndarray
    g: np.ndarray
    h: np.ndarray
    p: np.ndarray
    lam: float            # g . h, the squared preconditioned gradient norm
    alpha_prev: float
    iteration: int = 0


@dataclass
class TraceRow:
    iteration: int
    energy: float
    grad_norm: float
    alpha: float
    beta: float
    descent_ratio: float   # g.p / |g|^2_{M^-1} after the direction update
    restarted: bool = False
    wolfe_sufficient: bool | None = None
    wolfe_curvature: bool | None = None
    extras: dict = field(default_factory=dict)


@dataclass
class MinimizeResult:
    x: np.ndarray
    trace: list
    converged: bool
    restarts: int
    state: CgState


def ncg_minimize(x0, energy_fn, grad_fn, precond_solve, config, max_iters,
                 grad_tol, diagnostics_fn=None):
    """Generic preconditioned Fletcher-Reeves loop.

    ``energy_fn``/``grad_fn`` evaluate the objective and its gradient;
    ``precond_solve`` applies the fixed inverse preconditioner.  A
    non-finite ``grad_tol`` disables the gradient stopping test so exactly
    ``max_iters`` iterations run.  Direction resets happen on descent
    failure and every 2 * dim iterations.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")

    def safe_energy(x):
        try:
            val = energy_fn(x)
        except DegenerateMapError:
            return np.inf
        return val

    x = np.asarray(x0, dtype=float).copy()
    e = energy_fn(x)
    g = grad_fn(x)
    h = precond_solve(g)
    lam = float(g @ h)
    if lam < 0:
        raise DegenerateMapError("preconditioner is not positive definite on the gradient")
    state = CgState(x=x, g=g, h=h, p=-h, lam=lam, alpha_prev=config.alpha0)
    restart_period = 2 * len(x)
    restarts = 0
    trace = [TraceRow(0, e, math.sqrt(lam), 0.0, 0.0, -1.0,
                      extras=diagnostics_fn(x) if diagnostics_fn else {})]
    converged = False

    for k in range(1, max_iters + 1):
        if math.isfinite(grad_tol) and math.sqrt(state.lam) <= grad_tol:
            converged = True
            break

        p = state.p
        dphi0 = float(state.g @ p)
        restarted = False
        if dphi0 >= 0:
            p = -state.h
            dphi0 = -state.lam
            restarted = True
            restarts += 1

        def phi(a):
            return safe_energy(state.x + a * p)

        def phi_slope(a):
            return float(p @ grad_fn(state.x + a * p))

        suff = curv = None
        if k == 1:
            alpha = config.alpha0
        else:
            model = QuadraticModel.from_samples(e, dphi0, state.alpha_prev,
                                                phi(state.alpha_prev))
            alpha = quadratic_step(model)

        if config.mode == "wolfe":
            alpha, e_new = _strong_wolfe(phi, phi_slope, e, dphi0, alpha,
                                         config.c1, config.c2)
            suff, curv = wolfe_check(e, dphi0, e_new, phi_slope(alpha),
                                     config.c1, config.c2, alpha)
        else:
            e_new = phi(alpha)
            backtracks = 0
            while (not math.isfinite(e_new)
                   or e_new > e + ENERGY_INCREASE_TOL * abs(e) + 1e-15) \
                    and backtracks < config.max_backtracks:
                alpha *= 0.5
                e_new = phi(alpha)
                backtracks += 1

        x_new = state.x + alpha * p
        if not math.isfinite(e_new):
            raise DegenerateMapError(
                f"non-finite energy at iteration {k} (step {alpha:g})")
        lam_old = state.lam
        g_new = grad_fn(x_new)
        h_new = precond_solve(g_new)
        if lam_old > 0:
            beta = fr_beta(g_new, h_new, lam_old)
        else:
            beta = 0.0  # gradient vanished: restart from steepest descent
            restarts += 1
        lam_new = float(g_new @ h_new)
        if k % restart_period == 0:
            beta = 0.0
        p_new = -h_new + beta * p

        state = CgState(x=x_new, g=g_new, h=h_new, p=p_new, lam=lam_new,
                        alpha_prev=alpha, iteration=k)
        e = e_new
        trace.append(TraceRow(
            k, e, math.sqrt(lam_new), alpha, beta,
            float(g_new @ p_new) / lam_new if lam_new > 0 else 0.0,
            restarted=restarted, wolfe_sufficient=suff, wolfe_curvature=curv,
            extras=diagnostics_fn(x_new) if diagnostics_fn else {},
        ))
    return MinimizeResult(x=state.x, trace=trace, converged=converged,
                          restarts=restarts, state=state)


# ---------------------------------------------------------------------------
# Authalic-energy specialization


class Preconditioner:
    """Fixed block preconditioner from the initializer's Laplacian.

    The interior block solves both coordinate components of the gradient at
    once; the boundary block solves the angle component.
    """

    def __init__(self, factor_interior, factor_boundary, n_i, n_b):
        self.factor_interior = factor_interior
        self.factor_boundary = factor_boundary
        self.n_i = n_i
        self.n_b = n_b

    def solve(self, g):
        ni = self.n_i
        gi = np.column_stack([g[:ni], g[ni:2 * ni]])
        hi = self.factor_interior.solve(gi)
        hb = self.factor_boundary.solve(g[2 * ni:])
        return np.concatenate([hi[:, 0], hi[:, 1], hb])


def build_preconditioner(mesh, init_map):
    """Factor both diagonal blocks of the initial stretch Laplacian."""
    part = init_map.partition
    lap = assemble_stretch_laplacian(mesh, init_map)
    blocks = sem._split_blocks(lap.matrix, part)
    return Preconditioner(factorize(blocks["II"]), factorize(blocks["BB"]),
                          part.n_i, part.n_b)


class _AuthalicObjective:
    """Packed-vector adapter for the normalized authalic energy."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.part = mesh.partition()
        self.last_clamps = 0

    def energy(self, x):
        return normalized_authalic_energy(self.mesh, DiskMap.unpack(self.part, x))

    def grad(self, x):
        dmap = DiskMap.unpack(self.part, x)
        lap = assemble_stretch_laplacian(self.mesh, dmap)
        self.last_clamps = lap.clamp_count
        return grad_authalic(self.mesh, dmap, lap)

    def diagnostics(self, x):
        coords = DiskMap.unpack(self.part, x).coords()
        return {
            "foldings": int((signed_image_areas(self.mesh, coords) < 0).sum()),
            "clamps": self.last_clamps,
        }


@dataclass
class AemResult:
    map: DiskMap
    trace: list
    converged: bool
    restarts: int
    initializer_trace: list


def default_grad_tol(dim):
    return 1e-8 * math.sqrt(dim)


def aem_run(mesh, config=None, max_iters=100, grad_tol=None):
    """Full authalic-energy minimization of a mesh onto the unit disk."""
    config = config or LineSearchConfig()
    init_map, init_trace = sem.sem_run(mesh, INITIALIZER_ROUNDS, update_boundary=False)
    precond = build_preconditioner(mesh, init_map)
    objective = _AuthalicObjective(mesh)
    dim = 2 * init_map.partition.n_i + init_map.partition.n_b
    if grad_tol is None:
        grad_tol = default_grad_tol(dim)
    result = ncg_minimize(
        init_map.pack(), objective.energy, objective.grad, precond.solve,
        config, max_iters, grad_tol, diagnostics_fn=objective.diagnostics,
    )
    final = DiskMap.unpack(init_map.partition, result.x)
    return AemResult(map=final, trace=result.trace, converged=result.converged,
                     restarts=result.restarts, initializer_trace=init_trace)


# ---------------------------------------------------------------------------
# Trace serialization

_CORE_FIELDS = ("iteration", "energy", "grad_norm", "alpha", "beta",
                "descent_ratio", "restarted", "wolfe_sufficient", "wolfe_curvature")


def _row_dict(row):
    d = {name: getattr(row, name) for name in _CORE_FIELDS}
    d.update(row.extras)
    return d


def trace_to_csv(trace, path):
    rows = [_row_dict(r) for r in trace]
    fields = list(rows[0].keys()) if rows else list(_CORE_FIELDS)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def trace_to_jsonl(trace, path):
    with open(path, "w", encoding="utf-8") as fh:
        for row in trace:
            fh.write(json.dumps(_row_dict(row)) + "\n")
