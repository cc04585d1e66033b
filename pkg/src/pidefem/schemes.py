"""Time-stepping drivers: the fully implicit scheme and three two-grid variants.

Every driver advances ``N = T / dt`` backward-Euler steps of

    (dU/dt, v) + A(U, v) + dt * sum_i w_ni B-form(level i, v) = (f^n, v)

with homogeneous Dirichlet data.  The standard scheme solves one
nonlinear system per step on its mesh.  The two-grid drivers first solve
the nonlinear problem on a coarse mesh, then a single linear problem on
the fine mesh whose memory sum reuses coarse states:

* ``twogrid_41``  freezes the nonlinear coefficients at the coarse state;
  the fine system carries a convection block and is nonsymmetric.
* ``twogrid_42``  treats the whole memory sum as data (past fine levels
  plus the current coarse level); the fine matrix is mass/dt + stiffness,
  SPD and constant across steps.
* ``twogrid_43``  splits the memory form into its second-order part (kept
  implicit, needs fine history only when ``alpha != 0``) and a
  lower-order part computed entirely from coarse states.  With
  ``alpha = 0`` no fine-grid history is stored at all: the per-level
  integrand samples live on the coarse quadrature points and are carried
  to the fine grid by the per-triangle quadratic reconstruction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import sparse

from .assembly import (
    FormVariant,
    ProblemSpec,
    QpFields,
    apply_dirichlet,
    assemble_B_jacobian,
    assemble_B_vector,
    assemble_Btilde_matrix,
    assemble_mass,
    assemble_qp_vector,
    assemble_stiffness,
    cross_qp_fields,
    fe_qp_fields,
    identity_diffusion,
    memory_integrand,
)
from .mesh import CrossMeshMap, FeFunction, Mesh, QuadSampleTransfer
from .memory import MemoryHistory, MemoryWeights
from .solvers import SolverConfig, newton_solve, solve_nonsymmetric, solve_spd

__all__ = [
    "SCHEME_NAMES",
    "StepsizeCheck",
    "check_stepsize",
    "StabilityDiagnostics",
    "RunResult",
    "run",
    "make_driver",
    "StandardScheme",
    "TwoGridAlg41",
    "TwoGridAlg42",
    "TwoGridAlg43",
]

SCHEME_NAMES = ("standard", "twogrid_41", "twogrid_42", "twogrid_43")


@dataclass
class StepsizeCheck:
    """Advisory classification of a step size against the a-priori bounds."""

    dt: float
    l2_threshold: float
    h1_threshold: float
    admissible_l2: bool
    admissible_h1: bool

    @property
    def label(self) -> str:
        if not self.admissible_l2:
            return "inadmissible"
        return "admissible_H1" if self.admissible_h1 else "admissible_L2"


def check_stepsize(dt: float, T: float, nu0: float, mu0: float, K1: float) -> StepsizeCheck:
    """Classify ``dt`` against the L2 and H1 stability step-size conditions.

    L2 requires ``dt <= min(1/2, 7 nu0^2 / (8 mu0^2 K1^2 T))``, H1
    requires ``dt <= nu0^2 / (2 mu0^2 K1^2 T)``.  Purely advisory.
    """
    if min(dt, T, nu0, mu0, K1) <= 0:
        raise ValueError("step size, horizon and constants must be positive")
    base = nu0**2 / (mu0**2 * K1**2 * T)
    l2_threshold = min(0.5, 7.0 / 8.0 * base)
    h1_threshold = 0.5 * base
    return StepsizeCheck(
        dt=dt,
        l2_threshold=l2_threshold,
        h1_threshold=h1_threshold,
        admissible_l2=dt <= l2_threshold,
        admissible_h1=dt <= l2_threshold and dt <= h1_threshold,
    )


@dataclass
class StabilityDiagnostics:
    """Both sides of the discrete stability inequality along a trajectory.

    ``lhs_n = ||U^n|| + (sum ||U^i - U^{i-1}||^2)^(1/2)
    + (sqrt(nu0)/2) (sum dt ||U^i||_1^2)^(1/2)`` must stay below
    ``rhs_n = E_n^(1/2) (||U^0||^2 + dt sum ||f^i||^2)^(1/2)`` with the
    amplification ``E_n = 6 max(e^(2 t_n), e^((2 mu0 K1 t_n / nu0)^2))``.
    Norms are the discrete ones induced by the mass matrix (L2) and
    mass + unit-diffusion stiffness (H1).
    """

    nu0: float
    mu0: float
    K1: float
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    lhs: np.ndarray = field(default_factory=lambda: np.empty(0))
    rhs: np.ndarray = field(default_factory=lambda: np.empty(0))
    En: np.ndarray = field(default_factory=lambda: np.empty(0))
    all_finite: bool = True

    @property
    def satisfied(self) -> bool:
        return bool(np.all(self.lhs <= self.rhs * (1.0 + 1e-12)))


class _StabilityAccumulator:
    def __init__(self, constants, mass, stiff_unit, dt, u0):
        self.c = constants
        self.mass = mass
        self.h1_mat = mass + stiff_unit
        self.dt = dt
        self.u0_sq = self._l2sq(u0)
        self.sum_incr = 0.0
        self.sum_h1 = 0.0
        self.sum_f = 0.0
        self.rows = []

    def _l2sq(self, v):
        return float(v @ (self.mass @ v))

    def update(self, n, u, u_prev, f_norm_sq):
        c = self.c
        t_n = n * self.dt
        self.sum_incr += self._l2sq(u - u_prev)
        self.sum_h1 += self.dt * float(u @ (self.h1_mat @ u))
        self.sum_f += self.dt * f_norm_sq
        lhs = (
            np.sqrt(self._l2sq(u))
            + np.sqrt(self.sum_incr)
            + 0.5 * np.sqrt(c.nu0) * np.sqrt(self.sum_h1)
        )
        exponent = max(2.0 * t_n, (2.0 * c.mu0 * c.K1 * t_n / c.nu0) ** 2)
        En = 6.0 * np.exp(exponent)
        rhs = np.sqrt(En) * np.sqrt(self.u0_sq + self.sum_f)
        self.rows.append((t_n, lhs, rhs, En))

    def finish(self, all_finite):
        rows = np.array(self.rows).reshape(-1, 4)
        return StabilityDiagnostics(
            nu0=self.c.nu0, mu0=self.c.mu0, K1=self.c.K1,
            times=rows[:, 0], lhs=rows[:, 1], rhs=rows[:, 2], En=rows[:, 3],
            all_finite=all_finite,
        )


@dataclass
class RunResult:
    scheme: str
    fine: FeFunction
    coarse: Optional[FeFunction]
    n_steps: int
    dt: float
    T: float
    stats: dict
    history_report: dict
    stability: Optional[StabilityDiagnostics]
    states: Optional[list] = None


class _Grid:
    """Per-mesh assembled operators shared by the drivers."""

    def __init__(self, mesh: Mesh, spec: ProblemSpec, dt: float):
        self.mesh = mesh
        self.spec = spec
        self.dt = dt
        self.mass = assemble_mass(mesh)
        self.stiff = assemble_stiffness(mesh, spec.diffusion, 0.0)
        self.pattern = mesh.pattern()
        self.bmask = mesh.boundary_mask
        self.qp_points, self.qp_weights = mesh.quad_points()
        self._base_data = None

    def stiffness_at(self, t: float) -> sparse.csr_matrix:
        if self.spec.diffusion_time_dependent:
            return assemble_stiffness(self.mesh, self.spec.diffusion, t)
        return self.stiff

    def base_data(self, t: float) -> np.ndarray:
        """Data array of ``mass/dt + stiffness`` on the shared pattern."""
        if self.spec.diffusion_time_dependent:
            return self.mass.data / self.dt + self.stiffness_at(t).data
        if self._base_data is None:
            self._base_data = self.mass.data / self.dt + self.stiff.data
        return self._base_data

    def base_matrix(self, t: float) -> sparse.csr_matrix:
        return self.pattern.matrix(self.base_data(t).copy())

    def load_and_norm(self, t: float):
        """Load vector of the forcing at time t and its quadrature L2 norm."""
        f_qp = np.asarray(self.spec.forcing(self.qp_points, t), dtype=float)
        load = assemble_qp_vector(self.mesh, None, f_qp)
        return load, float(self.qp_weights @ f_qp**2)

    def interpolate_u0(self) -> np.ndarray:
        return np.asarray(self.spec.u0(self.mesh.nodes), dtype=float)


def _masked_residual(bmask, x, core):
    return np.where(bmask, x, core)


class _NonlinearStep:
    """Newton solve of one fully implicit step on a single grid."""

    def __init__(self, grid: _Grid, config: SolverConfig):
        self.grid = grid
        self.config = config
        grid.spec.require_derivatives()

    def solve(self, n, t_n, u_prev, mem_past, load, w_nn, stats):
        grid = self.grid
        spec = grid.spec
        dt = grid.dt
        base = grid.pattern.matrix(grid.base_data(t_n))
        rhs_fixed = load + (grid.mass @ u_prev) / dt - mem_past
        scale = dt * w_nn

        def residual(x):
            fields = fe_qp_fields(FeFunction(grid.mesh, x))
            bvec = assemble_B_vector(grid.mesh, spec, FormVariant.FULL_B,
                                     fields.vals, fields)
            core = base @ x + scale * bvec - rhs_fixed
            return _masked_residual(grid.bmask, x, core)

        def jacobian(x):
            dB = assemble_B_jacobian(grid.mesh, spec,
                                     fe_qp_fields(FeFunction(grid.mesh, x)))
            J = grid.pattern.matrix(grid.base_data(t_n) + scale * dB.data)
            J, _ = apply_dirichlet(J, np.zeros(grid.mesh.n_nodes), grid.bmask)
            return J

        x, _ = newton_solve(residual, jacobian, u_prev, self.config, stats=stats)
        return x


class _SampleStream:
    """Streaming weighted sum of memory-form integrands at coarse qp.

    Recomputes the per-level integrand from stored coarse states, so the
    history keeps exactly one coarse vector per time level.
    """

    def __init__(self, grid: _Grid):
        self.grid = grid

    def level_integrand(self, state: np.ndarray):
        fields = fe_qp_fields(FeFunction(self.grid.mesh, state))
        return memory_integrand(self.grid.spec, FormVariant.FULL_B,
                                fields.vals, fields)

    def weighted_sum(self, history: MemoryHistory, weights, upto: int):
        nq = 6 * self.grid.mesh.n_triangles
        acc_p = np.zeros((nq, 2))
        acc_s = np.zeros(nq)
        for i in range(1, upto + 1):
            p, s = self.level_integrand(history.entry(i))
            acc_p += weights[i - 1] * p
            acc_s += weights[i - 1] * s
        return acc_p, acc_s


class _BaseDriver:
    scheme = "base"
    uses_coarse = False

    def __init__(
        self,
        spec: ProblemSpec,
        fine_mesh: Mesh,
        dt: float,
        T: float,
        coarse_mesh: Optional[Mesh] = None,
        config: Optional[SolverConfig] = None,
        constants=None,
        record_states: bool = False,
    ):
        if T <= 0:
            raise ValueError("horizon T must be positive")
        n_steps = round(T / dt)
        if n_steps < 1 or abs(n_steps * dt - T) > 1e-12 * max(1.0, T):
            raise ValueError(
                f"dt = {dt} does not divide T = {T} into an integral "
                f"number of steps"
            )
        if self.uses_coarse and coarse_mesh is None:
            raise ValueError(f"scheme {self.scheme} needs a coarse mesh")
        self.spec = spec
        self.config = config or SolverConfig()
        self.dt = float(dt)
        self.T = float(T)
        self.n_steps = n_steps
        self.n = 0
        self.constants = constants
        self.record_states = record_states
        self.states: list = []
        self.stats: dict = {"newton_iters": 0, "linear_iters": 0,
                            "time_coarse_s": 0.0, "time_fine_s": 0.0}
        self.weights = MemoryWeights(spec.kernel, dt) if spec.kernel else None
        if self.weights is None and any(
            f is not None for f in (spec.alpha, spec.beta, spec.gamma, spec.g)
        ):
            raise ValueError("memory coefficients given but no kernel")

        self.fine = _Grid(fine_mesh, spec, self.dt)
        self.u = self.fine.interpolate_u0()
        self.coarse = _Grid(coarse_mesh, spec, self.dt) if self.uses_coarse else None
        self.u_H = self.coarse.interpolate_u0() if self.uses_coarse else None
        self._stability = None
        if constants is not None:
            stiff_unit = (
                self.fine.stiff
                if spec.diffusion is identity_diffusion
                else assemble_stiffness(fine_mesh, identity_diffusion)
            )
            self._stability = _StabilityAccumulator(
                constants, self.fine.mass, stiff_unit, self.dt, self.u
            )
        self._setup()

    def _setup(self):
        pass

    def step(self):
        raise NotImplementedError

    def step_weights(self, n: int) -> np.ndarray:
        if self.weights is None:
            return np.zeros(n)
        return self.weights.for_step(n)

    def _finite_or_raise(self, phase):
        if not np.all(np.isfinite(self.u)):
            raise FloatingPointError(
                f"non-finite values in the {phase} solution at step {self.n}"
            )

    def run(self) -> RunResult:
        t0 = time.perf_counter()
        if self.record_states:
            self.states.append(self.u.copy())
        f_norm_sq = 0.0
        for n in range(1, self.n_steps + 1):
            self.n = n
            f_norm_sq = self.step()
            self._finite_or_raise(self.scheme)
            if self._stability is not None:
                self._stability.update(n, self.u, self._u_prev, f_norm_sq)
            if self.record_states:
                self.states.append(self.u.copy())
        wall = time.perf_counter() - t0
        self.stats["wall_time_s"] = wall
        stability = None
        if self._stability is not None:
            stability = self._stability.finish(bool(np.all(np.isfinite(self.u))))
        return RunResult(
            scheme=self.scheme,
            fine=FeFunction(self.fine.mesh, self.u.copy()),
            coarse=(FeFunction(self.coarse.mesh, self.u_H.copy())
                    if self.uses_coarse else None),
            n_steps=self.n_steps,
            dt=self.dt,
            T=self.T,
            stats=dict(self.stats),
            history_report=self.history_report(),
            stability=stability,
            states=self.states if self.record_states else None,
        )

    def history_report(self) -> dict:
        return {"fine_entries": 0, "fine_bytes": 0, "coarse_entries": 0,
                "coarse_bytes": 0, "peak_bytes": 0}


class StandardScheme(_BaseDriver):
    """Fully implicit backward-Euler scheme on a single mesh."""

    scheme = "standard"

    def _setup(self):
        self.history = MemoryHistory("fine_history", self.fine.mesh.n_nodes)
        self._nonlinear = _NonlinearStep(self.fine, self.config)

    def step(self):
        start = time.perf_counter()
        n = self.n
        t_n = n * self.dt
        w = self.step_weights(n)
        mem_past = self.history.accumulate(w, self.dt, n - 1)
        load, f_norm_sq = self.fine.load_and_norm(t_n)
        self._u_prev = self.u
        self.u = self._nonlinear.solve(n, t_n, self.u, mem_past, load,
                                       w[-1], self.stats)
        fields = fe_qp_fields(FeFunction(self.fine.mesh, self.u))
        self.history.append(n, assemble_B_vector(
            self.fine.mesh, self.spec, FormVariant.FULL_B, fields.vals, fields))
        self.stats["time_fine_s"] += time.perf_counter() - start
        return f_norm_sq

    def history_report(self):
        return {
            "fine_entries": self.history.entry_count,
            "fine_bytes": self.history.nbytes,
            "coarse_entries": 0,
            "coarse_bytes": 0,
            "peak_bytes": self.history.peak_bytes,
        }


class _CoarsePhase:
    """Nonlinear coarse solve shared by the two-grid drivers.

    ``cache="vectors"`` stores the assembled memory vector per level;
    ``cache="states"`` stores the coarse solution itself and recomputes
    integrand samples on demand (the storage-economical mode).
    """

    def __init__(self, grid: _Grid, config: SolverConfig, cache: str):
        self.grid = grid
        self.cache = cache
        self.nonlinear = _NonlinearStep(grid, config)
        width = grid.mesh.n_nodes
        mode = "coarse_only" if cache == "states" else "fine_history"
        self.history = MemoryHistory(mode, width)
        self.stream = _SampleStream(grid) if cache == "states" else None

    def memory_past(self, w, n):
        if self.cache == "vectors":
            return self.history.accumulate(w, self.dt, n - 1), None
        acc_p, acc_s = self.stream.weighted_sum(self.history, w, n - 1)
        mem = self.dt * assemble_qp_vector(self.grid.mesh, acc_p, acc_s)
        return mem, (acc_p, acc_s)

    @property
    def dt(self):
        return self.grid.dt

    def step(self, n, t_n, u_prev, weights, stats):
        load, _ = self.grid.load_and_norm(t_n)
        mem_past, acc = self.memory_past(weights, n)
        u = self.nonlinear.solve(n, t_n, u_prev, mem_past, load,
                                 weights[-1], stats)
        if self.cache == "vectors":
            fields = fe_qp_fields(FeFunction(self.grid.mesh, u))
            self.history.append(n, assemble_B_vector(
                self.grid.mesh, self.grid.spec, FormVariant.FULL_B,
                fields.vals, fields))
        else:
            self.history.append(n, u)
            p_n, s_n = self.stream.level_integrand(u)
            acc = (acc[0] + weights[-1] * p_n, acc[1] + weights[-1] * s_n)
        return u, acc


class _TwoGridDriver(_BaseDriver):
    uses_coarse = True

    coarse_cache = "vectors"

    def _setup(self):
        self.coarse_phase = _CoarsePhase(self.coarse, self.config,
                                         self.coarse_cache)
        self._setup_fine()

    def _setup_fine(self):
        raise NotImplementedError

    def step(self):
        n = self.n
        t_n = n * self.dt
        w = self.step_weights(n)

        start = time.perf_counter()
        self.u_H, acc = self.coarse_phase.step(n, t_n, self.u_H, w, self.stats)
        self.stats["time_coarse_s"] += time.perf_counter() - start

        start = time.perf_counter()
        load, f_norm_sq = self.fine.load_and_norm(t_n)
        self._u_prev = self.u
        self.u = self._fine_step(n, t_n, w, load, acc)
        self.stats["time_fine_s"] += time.perf_counter() - start
        return f_norm_sq

    def _fine_step(self, n, t_n, w, load, acc):
        raise NotImplementedError

    def _fine_rhs_base(self, load):
        return load + (self.fine.mass @ self._u_prev) / self.dt

    def history_report(self):
        fine_hist = getattr(self, "history", None)
        fe = fine_hist.entry_count if fine_hist else 0
        fb = fine_hist.nbytes if fine_hist else 0
        fp = fine_hist.peak_bytes if fine_hist else 0
        ch = self.coarse_phase.history
        return {
            "fine_entries": fe,
            "fine_bytes": fb,
            "coarse_entries": ch.entry_count,
            "coarse_bytes": ch.nbytes,
            "peak_bytes": fp + ch.peak_bytes,
        }


class TwoGridAlg41(_TwoGridDriver):
    """Coarse nonlinear solve, then a fine linear solve with coarse-frozen
    coefficients; the fine system is generally nonsymmetric."""

    scheme = "twogrid_41"

    def _setup_fine(self):
        self.history = MemoryHistory("fine_history", self.fine.mesh.n_nodes)
        self._cross = CrossMeshMap(self.coarse.mesh, self.fine.qp_points)

    def _fine_step(self, n, t_n, w, load, acc):
        spec = self.spec
        w_vals = self._cross.values(self.u_H)
        mem_past = self.history.accumulate(w, self.dt, n - 1)
        n0 = assemble_B_vector(self.fine.mesh, spec, FormVariant.LOWER_ORDER_N,
                               w_vals, None)
        scale = self.dt * w[-1]
        C = assemble_Btilde_matrix(self.fine.mesh, spec,
                                   FormVariant.LINEARIZED_BTILDE, w_vals)
        S = self.fine.pattern.matrix(self.fine.base_data(t_n) + scale * C.data)
        rhs = self._fine_rhs_base(load) - mem_past - scale * n0
        S, rhs = apply_dirichlet(S, rhs, self.fine.bmask)
        x = solve_nonsymmetric(S, rhs, self.config, stats=self.stats)
        fields = fe_qp_fields(FeFunction(self.fine.mesh, x))
        self.history.append(n, assemble_B_vector(
            self.fine.mesh, spec, FormVariant.LINEARIZED_BTILDE, w_vals, fields))
        return x


class TwoGridAlg42(_TwoGridDriver):
    """Coarse nonlinear solve, then an SPD fine solve: the whole memory sum
    is data (past fine levels, current coarse level)."""

    scheme = "twogrid_42"

    def _setup_fine(self):
        self.history = MemoryHistory("fine_history", self.fine.mesh.n_nodes)
        self._cross = CrossMeshMap(self.coarse.mesh, self.fine.qp_points)
        self._fine_matrix = None
        self.fine_matrix_assemblies = 0

    def _fine_system_matrix(self, t_n):
        if self._fine_matrix is None or self.spec.diffusion_time_dependent:
            S = self.fine.base_matrix(t_n)
            S, _ = apply_dirichlet(S, np.zeros(self.fine.mesh.n_nodes),
                                   self.fine.bmask)
            self._fine_matrix = S
            self.fine_matrix_assemblies += 1
        return self._fine_matrix

    def _fine_step(self, n, t_n, w, load, acc):
        spec = self.spec
        mem_past = self.history.accumulate(w, self.dt, n - 1)
        w_fields = cross_qp_fields(self._cross, self.u_H)
        b_cur = assemble_B_vector(self.fine.mesh, spec, FormVariant.FULL_B,
                                  w_fields.vals, w_fields)
        rhs = self._fine_rhs_base(load) - mem_past - self.dt * w[-1] * b_cur
        rhs[self.fine.bmask] = 0.0
        S = self._fine_system_matrix(t_n)
        x = solve_spd(S, rhs, self.config, stats=self.stats)
        fields = fe_qp_fields(FeFunction(self.fine.mesh, x))
        self.history.append(n, assemble_B_vector(
            self.fine.mesh, spec, FormVariant.FULL_B, fields.vals, fields))
        return x


class TwoGridAlg43(_TwoGridDriver):
    """Memory split into implicit second-order part and coarse lower-order
    part.  With ``alpha = 0`` the driver runs in coarse-only storage mode:
    the history holds one coarse state per level and the accumulated
    integrand is transferred from coarse to fine quadrature points."""

    scheme = "twogrid_43"

    @property
    def coarse_cache(self):
        return "states" if self.spec.memory_is_lower_order else "vectors"

    def _setup_fine(self):
        spec = self.spec
        self._lower_order = spec.memory_is_lower_order
        self._fine_matrix = None
        self.fine_matrix_assemblies = 0
        if self._lower_order:
            self.history = None
            self._transfer = QuadSampleTransfer(self.coarse.mesh,
                                                self.fine.qp_points)
        else:
            self.history = MemoryHistory("fine_history", self.fine.mesh.n_nodes)
            self._cross = CrossMeshMap(self.coarse.mesh, self.fine.qp_points)

    def _fine_step(self, n, t_n, w, load, acc):
        if self._lower_order:
            return self._fine_step_lower_order(n, t_n, w, load, acc)
        return self._fine_step_general(n, t_n, w, load)

    def _fine_step_lower_order(self, n, t_n, w, load, acc):
        acc_p, acc_s = acc
        p_fine = self._transfer.apply(acc_p)
        s_fine = self._transfer.apply(acc_s)
        mem = self.dt * assemble_qp_vector(self.fine.mesh, p_fine, s_fine)
        rhs = self._fine_rhs_base(load) - mem
        rhs[self.fine.bmask] = 0.0
        if self._fine_matrix is None or self.spec.diffusion_time_dependent:
            S = self.fine.base_matrix(t_n)
            S, _ = apply_dirichlet(S, np.zeros(self.fine.mesh.n_nodes),
                                   self.fine.bmask)
            self._fine_matrix = S
            self.fine_matrix_assemblies += 1
        return solve_spd(self._fine_matrix, rhs, self.config, stats=self.stats)

    def _fine_step_general(self, n, t_n, w, load):
        spec = self.spec
        w_fields = cross_qp_fields(self._cross, self.u_H)
        mem_past = self.history.accumulate(w, self.dt, n - 1)
        n_cur = assemble_B_vector(self.fine.mesh, spec, FormVariant.LOWER_ORDER_N,
                                  w_fields.vals, w_fields)
        scale = self.dt * w[-1]
        Bs = assemble_Btilde_matrix(self.fine.mesh, spec,
                                    FormVariant.SYMMETRIC_BS, w_fields.vals)
        S = self.fine.pattern.matrix(self.fine.base_data(t_n) + scale * Bs.data)
        rhs = self._fine_rhs_base(load) - mem_past - scale * n_cur
        S, rhs = apply_dirichlet(S, rhs, self.fine.bmask)
        x = solve_spd(S, rhs, self.config, stats=self.stats)
        fields = fe_qp_fields(FeFunction(self.fine.mesh, x))
        level_vec = assemble_B_vector(
            self.fine.mesh, spec, FormVariant.SYMMETRIC_BS, w_fields.vals, fields
        ) + n_cur
        self.history.append(n, level_vec)
        return x


_DRIVERS = {
    "standard": StandardScheme,
    "twogrid_41": TwoGridAlg41,
    "twogrid_42": TwoGridAlg42,
    "twogrid_43": TwoGridAlg43,
}


def make_driver(scheme: str, spec: ProblemSpec, fine_mesh: Mesh, dt: float,
                T: float, **kwargs) -> _BaseDriver:
    if scheme not in _DRIVERS:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEME_NAMES}")
    return _DRIVERS[scheme](spec, fine_mesh, dt, T, **kwargs)


def run(scheme: str, spec: ProblemSpec, fine_mesh: Mesh, dt: float, T: float,
        coarse_mesh: Optional[Mesh] = None, config: Optional[SolverConfig] = None,
        constants=None, record_states: bool = False) -> RunResult:
    """Advance ``T / dt`` steps of the selected scheme and report.

    Returns the final solution(s), solver statistics, the history
    instrumentation and, when ``constants`` are supplied, the stability
    diagnostics of the trajectory.
    """
    driver = make_driver(scheme, spec, fine_mesh, dt, T,
                         coarse_mesh=coarse_mesh, config=config,
                         constants=constants, record_states=record_states)
    return driver.run()
