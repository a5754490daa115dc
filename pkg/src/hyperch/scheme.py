"""Coupled linear scheme: assembly, per-step right-hand side, stepping.

One time step solves a single linear system for the stacked unknowns
[phi | mu_int | mu_edge | psi | mu_loop].  The explicit treatment of the
well derivatives plus the linear stabilizers keeps the matrix constant in
time, so it is assembled and factorized once per run.  The rate fields
are maintained as exact difference quotients of consecutive states and
start at zero, which realizes the mass-conservation initialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import linalg
from . import model as mdl
from . import operators as ops
from .grid import Grid, inward_normal_stencil


class NonFiniteStateError(RuntimeError):
    """A step produced NaN or Inf values."""


@dataclass(frozen=True)
class State:
    """Simulation state: fields, rates, and the clock.

    Phi and Psi are the backward difference quotients of phi and psi over
    the last step (identically zero in a fresh state).
    """

    phi: np.ndarray
    psi: np.ndarray
    Phi: np.ndarray
    Psi: np.ndarray
    t: float = 0.0
    step: int = 0


def init_state(phi0: np.ndarray, psi0: np.ndarray, grid: Grid) -> State:
    """Fresh state with zero rate fields at t = 0."""
    phi0 = ops._check_bulk(phi0, grid).copy()
    psi0 = ops._check_loop(psi0, grid).copy()
    return State(
        phi=phi0,
        psi=psi0,
        Phi=np.zeros(grid.n_int),
        Psi=np.zeros(grid.n_loop),
    )


@dataclass(frozen=True)
class UnknownLayout:
    """Block offsets of the stacked unknown vector."""

    n_int: int
    n_edge: int
    n_loop: int

    @classmethod
    def for_grid(cls, grid: Grid) -> "UnknownLayout":
        return cls(n_int=grid.n_int, n_edge=4 * (grid.n - 1), n_loop=grid.n_loop)

    @property
    def off_phi(self) -> int:
        return 0

    @property
    def off_mu_int(self) -> int:
        return self.n_int

    @property
    def off_mu_edge(self) -> int:
        return 2 * self.n_int

    @property
    def off_psi(self) -> int:
        return 2 * self.n_int + self.n_edge

    @property
    def off_mu_loop(self) -> int:
        return 2 * self.n_int + self.n_edge + self.n_loop

    @property
    def dim(self) -> int:
        return 2 * self.n_int + self.n_edge + 2 * self.n_loop

    def phi_of(self, x: np.ndarray) -> np.ndarray:
        return x[self.off_phi : self.off_phi + self.n_int]

    def mu_int_of(self, x: np.ndarray) -> np.ndarray:
        return x[self.off_mu_int : self.off_mu_int + self.n_int]

    def mu_edge_of(self, x: np.ndarray) -> np.ndarray:
        return x[self.off_mu_edge : self.off_mu_edge + self.n_edge]

    def psi_of(self, x: np.ndarray) -> np.ndarray:
        return x[self.off_psi : self.off_psi + self.n_loop]

    def mu_loop_of(self, x: np.ndarray) -> np.ndarray:
        return x[self.off_mu_loop : self.off_mu_loop + self.n_loop]


@dataclass(frozen=True)
class SolverConfig:
    method: str = "direct"  # "direct" | "bicgstab"
    tol: float = 1e-10
    max_iter: int = 10000

    def __post_init__(self):
        if self.method not in ("direct", "bicgstab"):
            raise ValueError(f"unknown solver method {self.method!r}")
        if self.tol <= 0:
            raise ValueError("solver tol must be positive")
        if self.max_iter < 1:
            raise ValueError("solver max_iter must be >= 1")


def _interior_coupling(grid: Grid) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """5-point Laplacian split into interior-interior and interior-loop parts."""
    n = grid.n
    m = n - 1
    h2 = grid.h * grid.h
    ii, jj = np.meshgrid(np.arange(1, n), np.arange(1, n), indexing="ij")
    ii, jj = ii.ravel(), jj.ravel()
    rows_r = (ii - 1) * m + (jj - 1)

    rows_ii, cols_ii, vals_ii = [rows_r], [rows_r], [np.full(grid.n_int, -4.0 / h2)]
    rows_il, cols_il = [], []
    # neighbor offsets and the loop index each boundary side maps to
    for di, dj, loop_col in (
        (1, 0, lambda i, j: n + j),        # i+1 == n: right edge
        (-1, 0, lambda i, j: 4 * n - j),   # i-1 == 0: left edge
        (0, 1, lambda i, j: 3 * n - i),    # j+1 == n: top edge
        (0, -1, lambda i, j: i),           # j-1 == 0: bottom edge
    ):
        a, b = ii + di, jj + dj
        inside = (1 <= a) & (a <= m) & (1 <= b) & (b <= m)
        rows_ii.append(rows_r[inside])
        cols_ii.append((a[inside] - 1) * m + (b[inside] - 1))
        vals_ii.append(np.full(inside.sum(), 1.0 / h2))
        out = ~inside
        rows_il.append(rows_r[out])
        cols_il.append(loop_col(ii[out], jj[out]))
    l_ii = sp.csr_matrix(
        (np.concatenate(vals_ii), (np.concatenate(rows_ii), np.concatenate(cols_ii))),
        shape=(grid.n_int, grid.n_int),
    )
    l_il = sp.csr_matrix(
        (
            np.full(sum(len(r) for r in rows_il), 1.0 / h2),
            (np.concatenate(rows_il), np.concatenate(cols_il)),
        ),
        shape=(grid.n_int, grid.n_loop),
    )
    return l_ii, l_il


def _boundary_coupling(grid: Grid) -> tuple[sp.csr_matrix, sp.csr_matrix, sp.csr_matrix]:
    """Neumann-closure rows and the normal-derivative operator.

    Returns (b_ei, nd_phi, nd_psi): b_ei holds the -4, +1 interior
    couplings of the rows 3*mu_edge - 4*mu_1 + mu_2 = 0; nd_phi and
    nd_psi assemble the outward normal derivative of the bulk field from
    interior and loop values.
    """
    n = grid.n
    b_ei = sp.lil_matrix((4 * (n - 1), grid.n_int))
    nd_phi = sp.lil_matrix((grid.n_loop, grid.n_int))
    nd_psi = sp.lil_matrix((grid.n_loop, grid.n_loop))
    inv2h = 1.0 / (2.0 * grid.h)
    for k in range(grid.n_loop):
        st = inward_normal_stencil(grid, k)
        w = 1.0 / len(st.triples)
        for (b, v1, v2) in st.triples:
            for ref, coef in ((b, 3.0), (v1, -4.0), (v2, 1.0)):
                kind, idx = ref
                target = nd_phi if kind == "int" else nd_psi
                target[k, idx] += w * coef * inv2h
        if not st.is_corner:
            (_, v1, v2) = st.triples[0]
            e = grid.edge_slot[k]
            b_ei[e, v1[1]] = -4.0
            b_ei[e, v2[1]] = 1.0
    return b_ei.tocsr(), nd_phi.tocsr(), nd_psi.tocsr()


@dataclass
class SparseSystem:
    """Time-constant coupled matrix plus reusable solver assets."""

    matrix: sp.csr_matrix
    layout: UnknownLayout
    grid: Grid
    params: mdl.ModelParams
    # sub-operators kept for warm starts
    l_ii: sp.csr_matrix = field(repr=False)
    l_il: sp.csr_matrix = field(repr=False)
    b_ei: sp.csr_matrix = field(repr=False)
    nd_phi: sp.csr_matrix = field(repr=False)
    nd_psi: sp.csr_matrix = field(repr=False)
    l_loop: sp.csr_matrix = field(repr=False)
    _direct: linalg.DirectFactorization | None = field(default=None, repr=False)
    _precond: linalg.Ilu0Preconditioner | None = field(default=None, repr=False)

    def direct(self) -> linalg.DirectFactorization:
        if self._direct is None:
            self._direct = linalg.DirectFactorization(self.matrix)
        return self._direct

    def preconditioner(self) -> linalg.Ilu0Preconditioner:
        if self._precond is None:
            self._precond = linalg.ilu0_setup(self.matrix)
        return self._precond

    def solve(
        self, b: np.ndarray, solver: SolverConfig, x0: np.ndarray | None = None
    ) -> tuple[np.ndarray, linalg.SolveStats]:
        if solver.method == "direct":
            return self.direct().solve(b, tol=solver.tol)
        return linalg.solve(
            self.matrix, b, x0=x0, tol=solver.tol, max_iter=solver.max_iter,
            precond=self.preconditioner(),
        )

    def warm_start(self, state: State) -> np.ndarray:
        """Initial iterate from the current state's consistent potentials."""
        p = self.params
        mu_i = -(self.l_ii @ state.phi + self.l_il @ state.psi) + mdl.f_val(state.phi, p.eps)
        mu_e = -(self.b_ei @ mu_i) / 3.0
        mu_g = (
            -(self.l_loop @ state.psi)
            + mdl.g_val(state.psi, p.delta)
            + self.nd_phi @ state.phi
            + self.nd_psi @ state.psi
        )
        return np.concatenate([state.phi, mu_i, mu_e, state.psi, mu_g])


def assemble_system(grid: Grid, params: mdl.ModelParams) -> SparseSystem:
    """Assemble the coupled matrix for one (grid, params) pair.

    Row blocks: (a) bulk evolution at interior nodes, (b) bulk chemical
    potential, (b') one-sided Neumann closure of mu at edge nodes,
    (c) loop evolution, (d) loop chemical potential with the normal
    derivative coupling.  Entries depend only on grid and params.
    """
    layout = UnknownLayout.for_grid(grid)
    l_ii, l_il = _interior_coupling(grid)
    b_ei, nd_phi, nd_psi = _boundary_coupling(grid)
    l_loop = ops.loop_laplacian_matrix(grid.n)
    tau = params.tau
    k1 = (params.beta1 / tau + 1.0) / tau
    k2 = (params.beta2 / tau + 1.0) / tau
    eye_i = sp.identity(layout.n_int, format="csr")
    eye_e = sp.identity(layout.n_edge, format="csr")
    eye_l = sp.identity(layout.n_loop, format="csr")
    # mu_edge columns of the bulk-evolution Laplacian: same couplings as
    # the trace columns, remapped from loop index to edge slot (interior
    # stencils never touch corner loop nodes).
    keep = grid.edge_slot >= 0
    remap = sp.csr_matrix(
        (np.ones(int(keep.sum())), (np.flatnonzero(keep), grid.edge_slot[keep])),
        shape=(grid.n_loop, layout.n_edge),
    )
    l_ie = (l_il @ remap).tocsr()
    matrix = sp.bmat(
        [
            [k1 * eye_i, -params.M1 * l_ii, -params.M1 * l_ie, None, None],
            [l_ii - params.s1 * eye_i, eye_i, None, l_il, None],
            [None, b_ei, 3.0 * eye_e, None, None],
            [None, None, None, k2 * eye_l, -params.M2 * l_loop],
            [-nd_phi, None, None, l_loop - params.s2 * eye_l - nd_psi, eye_l],
        ],
        format="csr",
    )
    matrix.sort_indices()
    return SparseSystem(
        matrix=matrix,
        layout=layout,
        grid=grid,
        params=params,
        l_ii=l_ii,
        l_il=l_il,
        b_ei=b_ei,
        nd_phi=nd_phi,
        nd_psi=nd_psi,
        l_loop=l_loop,
    )


def assemble_rhs(state: State, grid: Grid, params: mdl.ModelParams) -> np.ndarray:
    """Per-step right-hand side from the current state."""
    phi = ops._check_bulk(state.phi, grid)
    psi = ops._check_loop(state.psi, grid)
    tau = params.tau
    k1 = (params.beta1 / tau + 1.0) / tau
    k2 = (params.beta2 / tau + 1.0) / tau
    return np.concatenate(
        [
            k1 * phi + (params.beta1 / tau) * state.Phi,
            mdl.f_val(phi, params.eps) - params.s1 * phi,
            np.zeros(4 * (grid.n - 1)),
            k2 * psi + (params.beta2 / tau) * state.Psi,
            mdl.g_val(psi, params.delta) - params.s2 * psi,
        ]
    )


def step(
    state: State,
    system: SparseSystem,
    grid: Grid,
    params: mdl.ModelParams,
    solver: SolverConfig = SolverConfig(),
) -> tuple[State, linalg.SolveStats]:
    """Advance one time step; rates become exact difference quotients."""
    b = assemble_rhs(state, grid, params)
    x0 = system.warm_start(state) if solver.method == "bicgstab" else None
    x, stats = system.solve(b, solver, x0=x0)
    if not np.all(np.isfinite(x)):
        raise NonFiniteStateError(f"non-finite solution at step {state.step + 1}")
    lay = system.layout
    phi_new = lay.phi_of(x).copy()
    psi_new = lay.psi_of(x).copy()
    tau = params.tau
    new = State(
        phi=phi_new,
        psi=psi_new,
        Phi=(phi_new - state.phi) / tau,
        Psi=(psi_new - state.psi) / tau,
        t=state.t + tau,
        step=state.step + 1,
    )
    return new, stats


@dataclass(frozen=True)
class DiagRecord:
    """Per-step diagnostics: energies, masses, solver statistics."""

    step: int
    time: float
    e_bulk: float
    e_surf: float
    e_total: float
    e_modified: float
    mass_bulk: float
    mass_surf: float
    solver_iters: int
    solver_residual: float


def _diag(
    state: State,
    grid: Grid,
    params: mdl.ModelParams,
    stats: linalg.SolveStats | None,
    poisson_tol: float,
) -> DiagRecord:
    e_bulk, e_surf, e_total = mdl.total_energy(state.phi, state.psi, grid, params)
    e_mod = mdl.modified_energy(state, grid, params, tol=poisson_tol)
    return DiagRecord(
        step=state.step,
        time=state.t,
        e_bulk=e_bulk,
        e_surf=e_surf,
        e_total=e_total,
        e_modified=e_mod,
        mass_bulk=mdl.bulk_mass(state.phi, grid),
        mass_surf=mdl.surface_mass(state.psi, grid),
        solver_iters=0 if stats is None else stats.iterations,
        solver_residual=0.0 if stats is None else stats.rel_residual,
    )


def num_steps(t_end: float, tau: float) -> int:
    """Step count covering [0, t_end]: ceiling with a roundoff guard so
    that divisors of t_end are not overcounted."""
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    return max(0, math.ceil(t_end / tau - 1e-9))


def run(
    initial: State,
    grid: Grid,
    params: mdl.ModelParams,
    t_end: float,
    solver: SolverConfig = SolverConfig(),
    diag_cadence: int = 1,
    poisson_tol: float = 1e-10,
    on_step: Callable[[State], None] | None = None,
    system: SparseSystem | None = None,
) -> tuple[State, list[DiagRecord]]:
    """March the scheme to t_end, collecting diagnostics.

    Diagnostics are recorded at step 0, every ``diag_cadence`` steps, and
    at the final step unconditionally.  ``on_step`` is invoked with every
    state, the initial one included.
    """
    if diag_cadence < 1:
        raise ValueError("diag_cadence must be >= 1")
    if system is None:
        system = assemble_system(grid, params)
    state = initial
    records = [_diag(state, grid, params, None, poisson_tol)]
    if on_step is not None:
        on_step(state)
    total = num_steps(t_end, params.tau)
    for k in range(1, total + 1):
        state, stats = step(state, system, grid, params, solver)
        if k % diag_cadence == 0 or k == total:
            records.append(_diag(state, grid, params, stats, poisson_tol))
        if on_step is not None:
            on_step(state)
    return state, records
