"""Implicit alternating-direction time stepping for the full model.

Each step splits into two half-steps of length dt/2. The first treats the
x-derivative terms (F11, F21, F31) implicitly and the y-derivative terms
explicitly; the second reverses the roles. The Coriolis coupling is split
evenly: each half-step integrates it trapezoidally (half at the old state,
half at the new). The pairing matters for stability: every skew piece of
the dynamics must enter once explicitly and once implicitly across the two
factors of a step, which keeps the amplification factor of the linearized
scheme at unit modulus for any dt. The model equations stay coupled: every
half-step solves one nonlinear system in all 3n unknowns by quasi-Newton,
where the sparse Jacobian is assembled and LU-factorized only every
``lu_refresh_every`` steps and reused (stale) in between.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from swerom.errors import NonConvergenceError
from swerom.model import (
    DifferenceOperators,
    FieldState,
    Grid,
    TERMS,
    TERM_EQUATION,
    X_TERMS,
    Y_TERMS,
    all_nonlinear,
    boundary_row_indices,
    cfl_indicator,
)
from swerom.snapshots import SnapshotSet

__all__ = ["SolverConfig", "RecordFlags", "PhaseTimings", "FullSolver", "adi_step", "run_full"]

CFL_LIMIT = 8.9301

_VAR_SLOT = {"u": 0, "v": 1, "phi": 2}


@dataclass
class SolverConfig:
    """Time-stepping and inner-solver parameters."""

    dt: float
    nt: int
    newton_tol: float = 1e-10
    newton_max_iters: int = 25
    lu_refresh_every: int = 6
    linear_solver: str = "direct-sparse"  # or "iterative-restarted-residual"

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.nt < 1:
            raise ValueError("nt must be at least 1")
        if self.newton_tol <= 0.0:
            raise ValueError("newton_tol must be positive")
        if self.lu_refresh_every < 1:
            raise ValueError("lu_refresh_every must be at least 1")
        if self.linear_solver not in ("direct-sparse", "iterative-restarted-residual"):
            raise ValueError(f"unknown linear_solver {self.linear_solver!r}")


@dataclass
class RecordFlags:
    states: bool = True
    nonlinear: bool = True


@dataclass
class PhaseTimings:
    """Wall-clock decomposition of a run (seconds, monotonic clock)."""

    assembly_s: float = 0.0
    factorization_s: float = 0.0
    solve_s: float = 0.0
    recording_s: float = 0.0
    total_s: float = 0.0
    newton_iters: int = 0
    steps: int = 0
    worst_residual: float = 0.0  # largest accepted relative residual

    def add(self, other: "PhaseTimings") -> None:
        self.assembly_s += other.assembly_s
        self.factorization_s += other.factorization_s
        self.solve_s += other.solve_s
        self.recording_s += other.recording_s
        self.newton_iters += other.newton_iters
        self.steps += other.steps
        self.worst_residual = max(self.worst_residual, other.worst_residual)


class FullSolver:
    """Stateful stepper holding operators and cached LU factorizations."""

    def __init__(self, grid: Grid, ops: DifferenceOperators, f: np.ndarray, cfg: SolverConfig):
        self.grid = grid
        self.ops = ops
        self.f = f
        self.cfg = cfg
        self.n = grid.n
        self._vrows = self.n + boundary_row_indices(grid)  # v block offset
        self._solve_x = None
        self._solve_y = None

    # -- state packing ---------------------------------------------------

    def _pack(self, state: FieldState) -> np.ndarray:
        return np.concatenate([state.u, state.v, state.phi])

    def _unpack(self, w: np.ndarray, t: float) -> FieldState:
        n = self.n
        return FieldState(u=w[:n].copy(), v=w[n:2 * n].copy(), phi=w[2 * n:].copy(), time=t)

    def _fields(self, w: np.ndarray) -> dict[str, np.ndarray]:
        n = self.n
        return {"u": w[:n], "v": w[n:2 * n], "phi": w[2 * n:]}

    # -- right-hand side pieces -------------------------------------------

    def _direction_rhs(self, w: np.ndarray, terms) -> np.ndarray:
        """Contribution of the given F-terms to (u', v', phi'), packed."""
        fields = self._fields(w)
        out = np.zeros(3 * self.n)
        for name in terms:
            slot = _VAR_SLOT[TERM_EQUATION[name]]
            acc = out[slot * self.n:(slot + 1) * self.n]
            for coef, avar, bvar, axis in TERMS[name]:
                A = self.ops.Ax if axis == "x" else self.ops.Ay
                acc -= coef * fields[avar] * (A @ fields[bvar])
        return out

    def _coriolis_rhs(self, w: np.ndarray) -> np.ndarray:
        n = self.n
        out = np.zeros(3 * n)
        out[:n] = self.f * w[n:2 * n]
        out[n:2 * n] = -self.f * w[:n]
        return out

    # -- Jacobians ---------------------------------------------------------

    def _direction_jacobian(self, w: np.ndarray, terms) -> sp.csr_matrix:
        """d/dw of (direction RHS + Coriolis) as a 3n-by-3n sparse matrix."""
        n = self.n
        fields = self._fields(w)
        blocks = [[None] * 3 for _ in range(3)]

        def add(rvar, cvar, mat):
            r, c = _VAR_SLOT[rvar], _VAR_SLOT[cvar]
            blocks[r][c] = mat if blocks[r][c] is None else blocks[r][c] + mat

        for name in terms:
            eq = TERM_EQUATION[name]
            for coef, avar, bvar, axis in TERMS[name]:
                A = self.ops.Ax if axis == "x" else self.ops.Ay
                add(eq, avar, sp.diags(-coef * (A @ fields[bvar])))
                add(eq, bvar, A.multiply((-coef * fields[avar])[:, None]).tocsr())
        # trapezoidal Coriolis: each half-step carries half of it implicitly
        add("u", "v", sp.diags(0.5 * self.f))
        add("v", "u", sp.diags(-0.5 * self.f))
        return sp.bmat(blocks, format="csr")

    def _system_matrix(self, w: np.ndarray, terms, dt2: float) -> sp.csc_matrix:
        """Newton matrix I - dt2*J with the v boundary rows replaced."""
        J = sp.identity(3 * self.n, format="csr") - dt2 * self._direction_jacobian(w, terms)
        keep = np.ones(3 * self.n)
        keep[self._vrows] = 0.0
        J = sp.diags(keep) @ J + sp.diags(1.0 - keep)
        return J.tocsc()

    def _factorize(self, w: np.ndarray, terms, dt2: float, timings: PhaseTimings):
        t0 = time.perf_counter()
        A = self._system_matrix(w, terms, dt2)
        timings.assembly_s += time.perf_counter() - t0
        t0 = time.perf_counter()
        if self.cfg.linear_solver == "direct-sparse":
            lu = spla.splu(A)
            solve = lu.solve
        else:
            ilu = spla.spilu(A, drop_tol=1e-8, fill_factor=20.0)
            M = spla.LinearOperator(A.shape, ilu.solve)

            def solve(rhs, A=A, M=M):
                x, info = spla.gmres(A, rhs, rtol=1e-12, atol=0.0, restart=40,
                                     maxiter=400, M=M)
                if info != 0:
                    raise NonConvergenceError(
                        f"restarted residual iteration stalled (info={info})",
                        residual=float(np.linalg.norm(A @ x - rhs)), iterations=info)
                return x
        timings.factorization_s += time.perf_counter() - t0
        return solve

    # -- Newton ----------------------------------------------------------------

    def _half_step(self, w0: np.ndarray, explicit_part: np.ndarray, terms,
                   dt2: float, solve, refactor, timings: PhaseTimings):
        """Solve w = explicit_part + dt2*(R_terms(w) + Coriolis(w)) by quasi-Newton.

        ``solve`` applies the current (possibly stale) factorization;
        ``refactor`` rebuilds it at a given iterate. Refactoring mid-iteration
        happens only as a safeguard when the stale iteration stops
        contracting, which stays dormant at the CFL numbers of normal runs.

        Returns (solution, solve) where ``solve`` reflects any safeguard
        refactorization so the caller can keep reusing it.
        """
        cfg = self.cfg
        w = w0.copy()
        scale = np.linalg.norm(w0)
        if scale == 0.0:
            scale = 1.0

        def residual(wk):
            t0 = time.perf_counter()
            G = (wk - explicit_part
                 - dt2 * (self._direction_rhs(wk, terms) + 0.5 * self._coriolis_rhs(wk)))
            G[self._vrows] = wk[self._vrows]
            timings.assembly_s += time.perf_counter() - t0
            return G

        G = residual(w)
        res = np.linalg.norm(G)
        slow = 0
        for it in range(cfg.newton_max_iters):
            if res <= cfg.newton_tol * scale:
                timings.newton_iters += it
                timings.worst_residual = max(timings.worst_residual, res / scale)
                return w, solve
            t0 = time.perf_counter()
            delta = solve(-G)
            timings.solve_s += time.perf_counter() - t0
            # backtracking keeps the iteration from overshooting at large dt
            alpha = 1.0
            w_try = w + delta
            G_try = residual(w_try)
            res_try = np.linalg.norm(G_try)
            while alpha > 0.015 and (not np.isfinite(res_try) or res_try >= res):
                alpha *= 0.5
                w_try = w + alpha * delta
                G_try = residual(w_try)
                res_try = np.linalg.norm(G_try)
            if not np.isfinite(res_try):
                raise NonConvergenceError(
                    "quasi-Newton residual is not finite", residual=float("inf"),
                    iterations=it + 1)
            slow = slow + 1 if res_try > 0.25 * res else 0
            w, G, res = w_try, G_try, res_try
            if slow >= 2:
                solve = refactor(w)
                slow = 0
        if res <= cfg.newton_tol * scale:
            timings.newton_iters += cfg.newton_max_iters
            timings.worst_residual = max(timings.worst_residual, res / scale)
            return w, solve
        raise NonConvergenceError(
            f"quasi-Newton stalled at relative residual {res / scale:.3e} "
            f"after {cfg.newton_max_iters} iterations",
            residual=float(res), iterations=cfg.newton_max_iters)

    def step(self, state: FieldState, step_index: int,
             timings: PhaseTimings | None = None) -> FieldState:
        """Advance one full dt (two half-steps). Factorizations refresh when
        ``step_index % lu_refresh_every == 0`` and are reused otherwise."""
        cfg = self.cfg
        timings = timings if timings is not None else PhaseTimings()
        dt2 = 0.5 * cfg.dt
        refresh = (step_index % cfg.lu_refresh_every == 0)

        w = self._pack(state)
        t0 = time.perf_counter()
        bx = w + dt2 * (self._direction_rhs(w, Y_TERMS) + 0.5 * self._coriolis_rhs(w))
        timings.assembly_s += time.perf_counter() - t0
        if refresh or self._solve_x is None:
            self._solve_x = self._factorize(w, X_TERMS, dt2, timings)
        w_half, self._solve_x = self._half_step(
            w, bx, X_TERMS, dt2, self._solve_x,
            lambda wk: self._factorize(wk, X_TERMS, dt2, timings), timings)

        t0 = time.perf_counter()
        by = w_half + dt2 * (self._direction_rhs(w_half, X_TERMS) + 0.5 * self._coriolis_rhs(w_half))
        timings.assembly_s += time.perf_counter() - t0
        if refresh or self._solve_y is None:
            self._solve_y = self._factorize(w_half, Y_TERMS, dt2, timings)
        w_new, self._solve_y = self._half_step(
            w_half, by, Y_TERMS, dt2, self._solve_y,
            lambda wk: self._factorize(wk, Y_TERMS, dt2, timings), timings)

        timings.steps += 1
        return self._unpack(w_new, state.time + cfg.dt)


def adi_step(state: FieldState, cfg: SolverConfig, ops: DifferenceOperators,
             f: np.ndarray, grid: Grid, step_index: int = 0) -> FieldState:
    """One alternating-direction step (fresh solver; see FullSolver for runs)."""
    ind = cfl_indicator(state, grid, cfg.dt)
    if ind > CFL_LIMIT:
        warnings.warn(f"CFL indicator {ind:.4f} exceeds stability limit {CFL_LIMIT}",
                      RuntimeWarning, stacklevel=2)
    solver = FullSolver(grid, ops, f, cfg)
    return solver.step(state, step_index)


def run_full(
    ic: FieldState,
    cfg: SolverConfig,
    ops: DifferenceOperators,
    f: np.ndarray,
    grid: Grid,
    record: RecordFlags | None = None,
) -> tuple[FieldState, SnapshotSet | None, PhaseTimings]:
    """Integrate nt steps from the initial condition, recording snapshots.

    Snapshot column t holds the state after step t+1, i.e. at time (t+1)*dt;
    the initial condition itself is not a snapshot column.
    """
    record = record if record is not None else RecordFlags()
    timings = PhaseTimings()
    t_start = time.perf_counter()

    ind = cfl_indicator(ic, grid, cfg.dt)
    if ind > CFL_LIMIT:
        warnings.warn(f"CFL indicator {ind:.4f} exceeds stability limit {CFL_LIMIT}",
                      RuntimeWarning, stacklevel=2)

    states = None
    nonlinear = None
    if record.states:
        states = {var: np.empty((grid.n, cfg.nt)) for var in ("u", "v", "phi")}
    if record.nonlinear:
        nonlinear = {term: np.empty((grid.n, cfg.nt)) for term in TERMS}
    times = np.empty(cfg.nt)

    solver = FullSolver(grid, ops, f, cfg)
    state = ic
    for k in range(cfg.nt):
        state = solver.step(state, k, timings)
        times[k] = state.time
        t0 = time.perf_counter()
        if states is not None:
            states["u"][:, k] = state.u
            states["v"][:, k] = state.v
            states["phi"][:, k] = state.phi
        if nonlinear is not None:
            for term, value in all_nonlinear(state, ops).items():
                nonlinear[term][:, k] = value
        timings.recording_s += time.perf_counter() - t0

    timings.total_s = time.perf_counter() - t_start
    snaps = None
    if record.states or record.nonlinear:
        snaps = SnapshotSet(grid=grid, dt=cfg.dt, times=times, states=states, nonlinear=nonlinear)
    return state, snaps, timings
