"""First- and second-order tangent plane time stepping.

Each step solves one linear variational problem in the discrete tangent
space of the current magnetization (reduced to 2N unknowns through nodal
frames) and advances by nodal normalization of m + k v.  The first-order
variant uses a plain mass matrix and needs no weight precomputation; the
second-order variant weights the mass term through a capped function of
the local field strength.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import fem, precond as precond_mod
from .gmres import ReducedOperator, gmres_solve
from .mesh import Mesh, generate_structured_cube, load_mesh
from .physics import AppliedFieldConfig, PiConfig, pi_apply
from .tangent import (FIXED_INVOLUTIONS, apply_q, build_frame, frame_gamma,
                      select_tn_adaptive)


class ConfigError(ValueError):
    pass


class SolverFailure(RuntimeError):
    def __init__(self, step, message):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass(frozen=True)
class SchemeCoefficients:
    """Variant-dependent coefficient family of the tangent plane scheme."""

    variant: str                 # "tps1" | "tps2"
    alpha: float                 # Gilbert damping
    ell_ex2: float               # exchange length squared
    theta: float = 1.0           # first-order stabilization parameter

    def __post_init__(self):
        if self.variant not in ("tps1", "tps2"):
            raise ConfigError(f"unknown scheme variant {self.variant!r}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must be in (0, 1], got {self.alpha}")
        if not 0.0 < self.theta <= 1.0:
            raise ConfigError(f"theta must be in (0, 1], got {self.theta}")
        if self.ell_ex2 < 0.0:
            raise ConfigError(f"ell_ex2 must be nonnegative, got {self.ell_ex2}")

    def check_timestep(self, k):
        if k <= 0.0:
            raise ConfigError(f"time step must be positive, got {k}")
        if self.variant == "tps2" and k >= 1.0:
            raise ConfigError("second-order variant needs k in (0, 1): |log k| degenerates")

    def rho(self, k):
        """|k log k| (natural logarithm)."""
        return abs(k * math.log(k))

    def cap(self, k):
        """Weight cap 1 / |k log k| (second-order variant)."""
        return 1.0 / self.rho(k)

    def beta(self, k):
        if self.variant == "tps1":
            return self.ell_ex2 * self.theta
        return 0.5 * self.ell_ex2 * (1.0 + self.rho(k))

    def wk(self, k, s):
        """Weight function W_k; accepts scalars or arrays."""
        if self.variant == "tps1":
            return self.alpha * np.ones_like(np.asarray(s, dtype=np.float64))
        s = np.asarray(s, dtype=np.float64)
        cap = self.cap(k)
        pos = self.alpha + 0.5 * k * np.minimum(np.maximum(s, 0.0), cap)
        neg_arg = np.minimum(np.maximum(-s, 0.0), cap)
        neg = self.alpha / (1.0 + (0.5 * k / self.alpha) * neg_arg)
        return np.where(s >= 0.0, pos, neg)


def wk_eval(coeffs, k, s):
    """Evaluate the mass weight W_k(s); rejects invalid k for the variant."""
    coeffs.check_timestep(k)
    out = coeffs.wk(k, s)
    return float(out) if np.isscalar(s) else out


def lambda_field(mesh, m, f_plus_pi, ell_ex2):
    """Per-element weight input: -ell_ex2 |grad m|^2 + avg((f + pi(m)) . m).

    The gradient term is exactly piecewise constant; the lower-order term is
    the barycenter value of the P1 interpolant of the nodal product.
    """
    m = np.asarray(m, dtype=np.float64).reshape(mesh.N, 3)
    vol, grad = mesh.element_geometry()
    grad_m = np.einsum("ead,eac->edc", grad, m[mesh.tets])
    frob2 = np.einsum("edc,edc->e", grad_m, grad_m)
    nodal = np.einsum("nc,nc->n", np.asarray(f_plus_pi, dtype=np.float64), m)
    lower = nodal[mesh.tets].mean(axis=1)
    return -ell_ex2 * frob2 + lower


def lh_term(coeffs, m_n, m_nm1, applied, t_n, k, pi_cfg, mesh):
    """Nodal lower-order right-hand-side combination for the current step."""
    if coeffs.variant == "tps1":
        return pi_apply(pi_cfg, mesh, m_n) + applied.nodal(mesh, t_n)
    return (1.5 * pi_apply(pi_cfg, mesh, m_n)
            - 0.5 * pi_apply(pi_cfg, mesh, m_nm1)
            + applied.nodal(mesh, t_n + 0.5 * k))


def assert_unit_nodal(m, tol=1e-14):
    worst = float(np.abs(np.linalg.norm(m, axis=1) - 1.0).max())
    if worst > tol:
        raise ValueError(f"field leaves the unit sphere by {worst:.3e} at some node")
    return worst


def tangency_defect(m, v):
    """max over nodes of |v . m|, and the scale 1 + max |v|."""
    dots = np.abs(np.einsum("nc,nc->n", m, v))
    return float(dots.max()), 1.0 + float(np.abs(v).max())


def normalize_update(m, v, k):
    """Nodewise (m + k v)/|m + k v| with the orthogonality identity asserted.

    Requires v tangent to m at every node; then |m + kv|^2 = |m|^2 + k^2|v|^2
    never falls below 1 for unit m.
    """
    m = np.asarray(m, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    defect, scale = tangency_defect(m, v)
    if defect > 1e-8 * scale:
        worst = int(np.argmax(np.abs(np.einsum("nc,nc->n", m, v))))
        raise ValueError(
            f"update is not tangent: |v.m| = {defect:.3e} at node {worst} (scale {scale:.3e})")
    updated = m + k * v
    nsq = np.einsum("nc,nc->n", updated, updated)
    predicted = np.einsum("nc,nc->n", m, m) + k**2 * np.einsum("nc,nc->n", v, v)
    err = float(np.abs(nsq - predicted).max() / (1.0 + predicted.max()))
    if err > 1e-10:
        raise ValueError(f"orthogonality identity violated by {err:.3e}")
    return updated / np.sqrt(nsq)[:, None]


def exchange_energy(stiffness, m, ell_ex2):
    """(ell_ex2 / 2) ||grad m||_L2^2 from the assembled stiffness matrix."""
    m = np.asarray(m, dtype=np.float64)
    return 0.5 * ell_ex2 * float(np.einsum("nc,nc->", m, stiffness @ m))


@dataclass
class TimeStepState:
    n: int
    t_n: float
    m_n: np.ndarray
    m_nm1: np.ndarray
    last_stats: object = None
    last_v: np.ndarray = None


@dataclass
class StepRecord:
    step: int
    t: float
    gmres_iterations: int
    restarts: int
    final_residual: float
    gamma: float
    d_adapt: float
    exchange_energy: float


@dataclass
class SimulationConfig:
    scheme: str = "tps1"
    alpha: float = 0.5
    theta: float = 1.0
    ell_ex2: float = 10.0
    T: float = 0.05
    k: float = 1e-2
    projection: bool = True
    mesh: dict = field(default_factory=lambda: {
        "kind": "cube", "bounds": [[0, 1], [0, 1], [0, 1]], "n": [2, 2, 2]})
    field_cfg: dict = field(default_factory=lambda: {
        "pi": {"kind": "zero"},
        "applied": {"kind": "academic"},
        "m0": {"kind": "constant", "value": [1.0, 0.0, 0.0]}})
    solver: dict = field(default_factory=lambda: {
        "tol": 1e-14, "restart": 200, "maxit": 100000})
    precond: dict = field(default_factory=lambda: {
        "kind": "stationary", "alpha_p": 1.0, "rebuild_every": 1})
    frame: dict = field(default_factory=lambda: {
        "tn": "adaptive", "strategy": "householder"})
    output: dict = field(default_factory=dict)

    @staticmethod
    def from_dict(d):
        d = dict(d)
        d.pop("sweep", None)
        known = {"scheme", "alpha", "theta", "ell_ex2", "T", "k", "projection",
                 "mesh", "field", "solver", "precond", "frame", "output"}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg = SimulationConfig()
        for key in ("scheme", "alpha", "theta", "ell_ex2", "T", "k", "projection"):
            if key in d:
                setattr(cfg, key, d[key])
        for src, attr in (("mesh", "mesh"), ("field", "field_cfg"), ("solver", "solver"),
                          ("precond", "precond"), ("frame", "frame"), ("output", "output")):
            if src in d:
                merged = dict(getattr(cfg, attr))
                merged.update(d[src])
                setattr(cfg, attr, merged)
        cfg.validate()
        return cfg

    def validate(self):
        coeffs = self.coefficients()       # raises on bad alpha/theta/variant
        coeffs.check_timestep(self.k)
        if self.T <= 0:
            raise ConfigError(f"final time must be positive, got {self.T}")
        steps = self.T / self.k
        if abs(steps - round(steps)) > 1e-8 * max(1.0, steps):
            raise ConfigError(f"T/k = {steps} is not an integer step count")
        if not self.projection and self.scheme != "tps1":
            raise ConfigError("projection can only be skipped for the first-order scheme")
        if self.precond.get("kind") not in precond_mod.PRECONDITIONER_KINDS:
            raise ConfigError(f"unknown preconditioner kind {self.precond.get('kind')!r}")
        if self.precond.get("alpha_p", 1.0) <= 0:
            raise ConfigError("alpha_p must be positive")
        if int(self.precond.get("rebuild_every", 1)) < 1:
            raise ConfigError("rebuild_every must be >= 1")
        tn = self.frame.get("tn", "adaptive")
        if tn != "adaptive" and tn not in FIXED_INVOLUTIONS:
            raise ConfigError(f"unknown tn mode {tn!r}")
        if self.frame.get("strategy", "householder") not in ("householder", "signflip", "rotation"):
            raise ConfigError(f"unknown frame strategy {self.frame.get('strategy')!r}")
        PiConfig.from_dict(self.field_cfg.get("pi", {"kind": "zero"}))
        AppliedFieldConfig.from_dict(self.field_cfg.get("applied", {"kind": "constant"}))
        m0_kind = self.field_cfg.get("m0", {}).get("kind", "constant")
        if m0_kind not in ("constant", "spiral"):
            raise ConfigError(f"unknown m0 kind {m0_kind!r}")
        return self

    def coefficients(self):
        return SchemeCoefficients(variant=self.scheme, alpha=self.alpha,
                                  ell_ex2=self.ell_ex2, theta=self.theta)

    def n_steps(self):
        return int(round(self.T / self.k))

    def build_mesh(self):
        kind = self.mesh.get("kind", "cube")
        if kind == "cube":
            return generate_structured_cube(self.mesh["bounds"], self.mesh["n"])
        if kind == "file":
            with open(self.mesh["path"], "rb") as fh:
                return load_mesh(fh)
        raise ConfigError(f"unknown mesh kind {kind!r}")


def initial_magnetization(cfg, mesh):
    """Nodal unit field from the m0 config fragment."""
    kind = cfg.get("kind", "constant")
    if kind == "constant":
        value = np.asarray(cfg.get("value", (1.0, 0.0, 0.0)), dtype=np.float64)
        value = value / np.linalg.norm(value)
        return np.tile(value, (mesh.N, 1))
    if kind == "spiral":
        # unit field winding in the (1,2)-plane along the first axis
        turns = float(cfg.get("turns", 1.0))
        x = mesh.nodes[:, 0]
        span = x.max() - x.min()
        phase = 2.0 * np.pi * turns * (x - x.min()) / (span if span > 0 else 1.0)
        m = np.zeros((mesh.N, 3))
        m[:, 0] = np.cos(phase)
        m[:, 1] = np.sin(phase)
        return m
    raise ConfigError(f"unknown m0 kind {kind!r}")


class StepContext:
    """Immutable per-run data plus cached preconditioner state."""

    def __init__(self, config, mesh=None):
        if isinstance(config, dict):
            config = SimulationConfig.from_dict(config)
        config.validate()
        self.config = config
        self.mesh = mesh if mesh is not None else config.build_mesh()
        self.coeffs = config.coefficients()
        self.k = float(config.k)
        self.beta_k = self.coeffs.beta(self.k) * self.k
        self.mass = fem.assemble_mass(self.mesh)
        self.stiffness = fem.assemble_stiffness(self.mesh)
        self.pi_cfg = PiConfig.from_dict(config.field_cfg.get("pi", {"kind": "zero"}))
        self.applied = AppliedFieldConfig.from_dict(
            config.field_cfg.get("applied", {"kind": "constant"}))
        self.alpha_p = float(config.precond.get("alpha_p", 1.0))
        self.precond_kind = config.precond.get("kind", "stationary")
        self.rebuild_every = int(config.precond.get("rebuild_every", 1))
        self.tn_mode = config.frame.get("tn", "adaptive")
        self.strategy = config.frame.get("strategy", "householder")
        self.solver = dict(config.solver)

        self._scalar_factor = None
        self._static_precond = None
        self._theoretical = None
        self.precond_builds = 0
        if self.precond_kind in ("stationary", "practical"):
            self._scalar_factor = precond_mod.ScalarFactorization(
                self.mass, self.stiffness, self.alpha_p, self.beta_k)
        if self.precond_kind in ("stationary", "jacobi", "none"):
            self._static_precond = precond_mod.make_preconditioner(
                self.precond_kind, self.mass, self.stiffness, self.alpha_p,
                self.beta_k, scalar_factor=self._scalar_factor)

    def preconditioner_for(self, frame, step):
        if self._static_precond is not None:
            return self._static_precond
        if self.precond_kind == "practical":
            # shares the scalar factorization; only the frame is per-step
            return precond_mod.build_practical(
                frame, self.mass, self.stiffness, self.alpha_p, self.beta_k,
                scalar_factor=self._scalar_factor)
        if self.precond_kind == "theoretical":
            if self._theoretical is None or step % self.rebuild_every == 0:
                self._theoretical = precond_mod.build_theoretical(
                    frame, self.mass, self.stiffness, self.alpha_p, self.beta_k)
                self.precond_builds += 1
            return self._theoretical
        raise ConfigError(f"unknown preconditioner kind {self.precond_kind!r}")

    def initial_state(self):
        m0 = initial_magnetization(self.config.field_cfg.get(
            "m0", {"kind": "constant", "value": [1.0, 0.0, 0.0]}), self.mesh)
        assert_unit_nodal(m0, tol=1e-12)
        return TimeStepState(n=0, t_n=0.0, m_n=m0, m_nm1=m0.copy())


def tps_step(ctx, state):
    """One step of the tangent plane scheme; returns (new_state, record)."""
    cfg = ctx.config
    coeffs = ctx.coeffs
    mesh = ctx.mesh
    k = ctx.k
    m = state.m_n

    norms = np.linalg.norm(m, axis=1)
    mdir = m / norms[:, None]

    selection = select_tn_adaptive(mdir)
    if ctx.tn_mode == "adaptive":
        T = selection.chosen_T
    else:
        T = FIXED_INVOLUTIONS[ctx.tn_mode]
    frame = build_frame(mdir, T, ctx.strategy)

    if coeffs.variant == "tps2":
        f_plus_pi = ctx.applied.nodal(mesh, state.t_n) + pi_apply(ctx.pi_cfg, mesh, m)
        lam = lambda_field(mesh, m, f_plus_pi, coeffs.ell_ex2)
        weights = coeffs.wk(k, lam) / coeffs.alpha
    else:
        # first-order: W_k is the constant alpha, the weight input is skipped
        weights = np.ones(mesh.elem_count)

    lh = lh_term(coeffs, m, state.m_nm1, ctx.applied, state.t_n, k, ctx.pi_cfg, mesh)
    system = fem.build_system(mesh, m, coeffs.alpha, ctx.beta_k, weights, lh,
                              coeffs.ell_ex2, mass=ctx.mass, stiffness=ctx.stiffness)

    pc = ctx.preconditioner_for(frame, state.n)
    op = ReducedOperator(system, frame)
    x, stats = gmres_solve(op, pc, op.reduced_rhs(),
                           tol=ctx.solver.get("tol", 1e-14),
                           restart=int(ctx.solver.get("restart", 200)),
                           maxit=int(ctx.solver.get("maxit", 100000)),
                           reorthogonalize=bool(ctx.solver.get("reorthogonalize", False)))
    if not stats.converged:
        raise SolverFailure(state.n, f"GMRES did not converge "
                            f"(residual {stats.final_relative_residual:.3e} "
                            f"after {stats.iterations} iterations)")

    v = apply_q(frame, x).reshape(mesh.N, 3)
    defect, scale = tangency_defect(m, v)
    if defect > 1e-8 * scale:
        raise SolverFailure(state.n, f"solved update lost tangency: {defect:.3e}")

    if cfg.projection:
        m_next = normalize_update(m, v, k)
    else:
        m_next = m + k * v

    record = StepRecord(
        step=state.n,
        t=state.t_n,
        gmres_iterations=stats.iterations,
        restarts=stats.restarts,
        final_residual=stats.final_relative_residual,
        gamma=frame_gamma(mdir, T),
        d_adapt=selection.gamma,
        exchange_energy=exchange_energy(ctx.stiffness, m, coeffs.ell_ex2),
    )
    new_state = TimeStepState(n=state.n + 1, t_n=state.t_n + k, m_n=m_next,
                              m_nm1=m, last_stats=stats, last_v=v)
    return new_state, record


@dataclass
class SimulationResult:
    config: SimulationConfig
    mesh: Mesh
    records: list
    step_stats: list
    final_state: TimeStepState
    precond_builds: int
    states: list = None

    def average_iterations(self):
        return float(np.mean([r.gmres_iterations for r in self.records]))

    def max_iterations(self):
        return int(max(r.gmres_iterations for r in self.records))


def run_simulation(config, mesh=None, keep_states=False):
    """Run T/k steps; returns records, per-step solver stats and final state.

    Deterministic for a fixed config.  If config.output carries a directory,
    per-step CSV rows and optional field snapshots are written as the run
    progresses (partial output survives a failing step).  keep_states
    retains every intermediate state (test/diagnostic use).
    """
    ctx = StepContext(config, mesh=mesh)
    cfg = ctx.config
    n_steps = cfg.n_steps()
    state = ctx.initial_state()
    states = [state] if keep_states else None

    out_dir = cfg.output.get("dir")
    basename = cfg.output.get("basename", "steps")
    snapshot_every = int(cfg.output.get("snapshot_every", 0))
    dump_residuals = bool(cfg.output.get("residual_csv", False))
    csv_fh = None
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        csv_fh = open(os.path.join(out_dir, basename + ".csv"), "w", encoding="utf-8")
        csv_fh.write(STEP_CSV_HEADER + "\n")

    records = []
    step_stats = []
    try:
        for n in range(n_steps):
            state, record = tps_step(ctx, state)
            records.append(record)
            step_stats.append(state.last_stats)
            if keep_states:
                states.append(state)
            if csv_fh is not None:
                csv_fh.write(format_step_row(record) + "\n")
                csv_fh.flush()
            if out_dir and dump_residuals:
                path = os.path.join(out_dir, f"{basename}_residuals_step{record.step:06d}.csv")
                write_residual_csv(state.last_stats, path)
            if out_dir and snapshot_every > 0 and (record.step + 1) % snapshot_every == 0:
                path = os.path.join(out_dir, f"{basename}_m_{record.step + 1:06d}.vtk")
                write_vtk(ctx.mesh, state.m_n, path)
    finally:
        if csv_fh is not None:
            csv_fh.close()

    return SimulationResult(config=cfg, mesh=ctx.mesh, records=records,
                            step_stats=step_stats, final_state=state,
                            precond_builds=ctx.precond_builds, states=states)


STEP_CSV_HEADER = ("step,t,gmres_iterations,restarts,final_residual,"
                   "gamma,d_adapt,exchange_energy")


def _fmt(v):
    return repr(float(v))


def format_step_row(r):
    return ",".join([
        str(r.step), _fmt(r.t), str(r.gmres_iterations), str(r.restarts),
        _fmt(r.final_residual), _fmt(r.gamma), _fmt(r.d_adapt),
        _fmt(r.exchange_energy),
    ])


def write_residual_csv(stats, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("iteration,residual\n")
        for i, res in enumerate(stats.residual_history):
            fh.write(f"{i},{_fmt(res)}\n")


def write_vtk(mesh, m, path):
    """Legacy ASCII VTK snapshot with the nodal field as POINT_DATA vectors."""
    lines = [
        "# vtk DataFile Version 3.0",
        "magnetization snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.N} double",
    ]
    lines += [" ".join(_fmt(c) for c in p) for p in mesh.nodes]
    lines.append(f"CELLS {mesh.elem_count} {5 * mesh.elem_count}")
    lines += ["4 " + " ".join(str(i) for i in t) for t in mesh.tets]
    lines.append(f"CELL_TYPES {mesh.elem_count}")
    lines += ["10"] * mesh.elem_count
    lines.append(f"POINT_DATA {mesh.N}")
    lines.append("VECTORS m double")
    lines += [" ".join(_fmt(c) for c in row) for row in np.asarray(m)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
