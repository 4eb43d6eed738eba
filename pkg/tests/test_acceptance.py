"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest -s tests/test_acceptance.py` to see the per-criterion lines
interleaved; all tolerances are pinned here and nowhere else.
"""

import sys
import time

import numpy as np
import pytest
import scipy.sparse as sp

from tangent_plane_llg import (FIXED_INVOLUTIONS, SimulationConfig,
                               build_frame, build_stationary_2d, build_system,
                               build_theoretical, generate_structured_cube,
                               gmres_solve, make_preconditioner,
                               mumag4_parameters, nondimensionalize,
                               run_simulation, select_tn_adaptive)
from tangent_plane_llg.diagnostics import (check_bounded_ratio,
                                           check_inverse_bounds,
                                           check_mapping_identities,
                                           dense_oracle_solve, energy_norm)
from tangent_plane_llg.gmres import ReducedOperator
from tangent_plane_llg.physics import applied_field_mumag4
from tangent_plane_llg.scheme import SchemeCoefficients, lambda_field, lh_term

from conftest import UNIT_BOUNDS, random_unit_field

MODULE_T0 = time.perf_counter()

ALL_PRECONDS = ("theoretical", "stationary", "practical", "jacobi", "none")
MAIN_PRECONDS = ("theoretical", "stationary", "practical")
STRATEGIES = ("householder", "signflip", "rotation")


def report(num, name, passed):
    line = f"ACCEPTANCE {num:2d} {name:<42s} {'PASS' if passed else 'FAIL'}"
    print(line, file=sys.__stdout__, flush=True)
    assert passed, line


def spiral_field(mesh, turns=1.0):
    x = mesh.nodes[:, 0]
    span = x.max() - x.min()
    phase = 2 * np.pi * turns * (x - x.min()) / span
    m = np.zeros((mesh.N, 3))
    m[:, 0] = np.cos(phase)
    m[:, 1] = np.sin(phase)
    return m


def academic_config(**over):
    base = {
        "scheme": "tps1", "alpha": 0.5, "ell_ex2": 10.0, "T": 0.03, "k": 0.01,
        "mesh": {"kind": "cube", "bounds": UNIT_BOUNDS, "n": [4, 4, 4]},
        "field": {"pi": {"kind": "zero"}, "applied": {"kind": "academic"},
                  "m0": {"kind": "constant", "value": [1, 0, 0]}},
        "precond": {"kind": "stationary", "alpha_p": 1.0},
        "frame": {"tn": "t3-", "strategy": "householder"},
    }
    for key, val in over.items():
        if isinstance(val, dict) and key in base:
            base[key] = {**base[key], **val}
        else:
            base[key] = val
    return SimulationConfig.from_dict(base)


def mumag_like_config(kind, alpha_p):
    f = applied_field_mumag4()
    return SimulationConfig.from_dict({
        "scheme": "tps1", "alpha": 0.02, "ell_ex2": 32.3283,
        "T": 3 * 0.017688, "k": 0.017688,
        "mesh": {"kind": "cube", "bounds": [[0, 100], [0, 25], [0, 3]],
                 "n": [20, 5, 1]},
        "field": {"pi": {"kind": "uniaxial", "axis": [0, 0, 1], "strength": 0.5},
                  "applied": {"kind": "constant", "value": list(f)},
                  "m0": {"kind": "spiral", "turns": 1.0}},
        "precond": {"kind": kind, "alpha_p": alpha_p},
        "frame": {"tn": "adaptive"},
    })


@pytest.fixture(scope="module")
def cube27():
    return generate_structured_cube(UNIT_BOUNDS, (2, 2, 2))


def build_step_system(mesh, variant):
    """Initial-step linear system of the scheme on the 27-node cube."""
    from tangent_plane_llg.physics import AppliedFieldConfig, PiConfig
    coeffs = SchemeCoefficients(variant, alpha=0.5, ell_ex2=10.0)
    k = 0.01
    beta_k = coeffs.beta(k) * k
    m = spiral_field(mesh)
    applied = AppliedFieldConfig(kind="academic")
    pi_cfg = PiConfig(kind="zero")
    if variant == "tps2":
        lam = lambda_field(mesh, m, applied.nodal(mesh, 0.0), coeffs.ell_ex2)
        weights = coeffs.wk(k, lam) / coeffs.alpha
    else:
        weights = np.ones(mesh.elem_count)
    lh = lh_term(coeffs, m, m, applied, 0.0, k, pi_cfg, mesh)
    system = build_system(mesh, m, coeffs.alpha, beta_k, weights, lh,
                          coeffs.ell_ex2)
    return m, system, beta_k


def test_criterion_01_oracle_equivalence(cube27):
    started = time.perf_counter()
    ok = True
    for variant in ("tps1", "tps2"):
        m, system, beta_k = build_step_system(cube27, variant)
        t = select_tn_adaptive(m).chosen_T
        for strategy in STRATEGIES:
            frame = build_frame(m, t, strategy)
            x_ref, _ = dense_oracle_solve(system, frame)
            op = ReducedOperator(system, frame)
            rhs = op.reduced_rhs()
            for kind in ALL_PRECONDS:
                pc = make_preconditioner(kind, system.mass, system.stiffness,
                                         1.0, beta_k, frame=frame)
                x, stats = gmres_solve(op, pc, rhs, tol=1e-14)
                ok &= stats.converged
                rel = np.linalg.norm(x - x_ref) / np.linalg.norm(x_ref)
                ok &= rel <= 1e-9
                residual = np.abs(op.matvec(x) - rhs).max()
                ok &= residual <= 1e-9 * np.abs(rhs).max()
    elapsed = time.perf_counter() - started
    ok &= elapsed < 30.0
    report(1, "oracle equivalence (30 combos, <30 s)", ok)


def test_criterion_02_jacobi_triple_coincidence(cube27):
    from tangent_plane_llg import assemble_mass, assemble_stiffness
    mass, stiffness = assemble_mass(cube27), assemble_stiffness(cube27)
    alpha_p, beta_k = 1.0, 0.1
    scalar = alpha_p * mass + beta_k * stiffness
    diag = scalar.diagonal()
    plain = np.repeat(1.0 / diag, 2)
    worst = 0.0
    for seed in range(5):
        m = random_unit_field(cube27.N, seed=200 + seed)
        for t in (select_tn_adaptive(m).chosen_T, FIXED_INVOLUTIONS["t1+"]):
            frame = build_frame(m, t)
            q = frame.as_sparse()
            inner = (q.T @ sp.kron(scalar, sp.identity(3, format="csr"),
                                   format="csr") @ q).tocsr()
            congruent = 1.0 / inner.diagonal()
            worst = max(worst, float(np.abs(plain - congruent).max()))
            d3inv = sp.diags(np.repeat(1.0 / diag, 3))
            sandwiched = (q.T @ d3inv @ q).toarray()
            worst = max(worst, float(np.abs(np.diag(plain) - sandwiched).max()))
    report(2, f"Jacobi triple coincidence (err {worst:.1e})", worst <= 1e-13)


def test_criterion_03_constant_field_identity(cube27):
    from tangent_plane_llg import assemble_mass, assemble_stiffness
    mass, stiffness = assemble_mass(cube27), assemble_stiffness(cube27)
    worst = 0.0
    for key in ("t3-", "t1-", "t2+"):
        t = FIXED_INVOLUTIONS[key]
        mu = np.tile(t[:, 2], (cube27.N, 1))
        frame = build_frame(mu, t)
        theo = build_theoretical(frame, mass, stiffness, 1.0, 0.1)
        stat = build_stationary_2d(mass, stiffness, 1.0, 0.1)
        for i in range(2 * cube27.N):
            e = np.zeros(2 * cube27.N)
            e[i] = 1.0
            worst = max(worst, float(np.abs(theo.apply(e) - stat.apply(e)).max()))
    report(3, f"theoretical = stationary, constant field ({worst:.1e})",
           worst <= 1e-13)


def test_criterion_04_h_robustness():
    started = time.perf_counter()
    avg = {}
    for n in (4, 6, 8):
        for kind in MAIN_PRECONDS + ("none",):
            cfg = academic_config(mesh={"n": [n, n, n]},
                                  precond={"kind": kind, "alpha_p": 1.0})
            res = run_simulation(cfg)
            avg[(n, kind)] = res.average_iterations()
    ok = True
    for kind in MAIN_PRECONDS:
        vals = [avg[(n, kind)] for n in (4, 6, 8)]
        ok &= (max(vals) - min(vals)) / min(vals) <= 0.25
    growth = (avg[(8, "none")] - avg[(4, "none")]) / avg[(4, "none")]
    ok &= growth >= 0.5
    elapsed = time.perf_counter() - started
    ok &= elapsed < 180.0
    report(4, f"h-robust preconds, none grows {growth:.0%} (<3 min)", ok)


def test_criterion_05_alpha_p_study():
    avg = {}
    for alpha_p in (1.0, 0.02):
        for kind in MAIN_PRECONDS:
            res = run_simulation(mumag_like_config(kind, alpha_p))
            avg[(alpha_p, kind)] = res.average_iterations()
    ok = all(avg[(1.0, kind)] < avg[(0.02, kind)] for kind in MAIN_PRECONDS)
    detail = ", ".join(f"{k}: {avg[(1.0, k)]:.0f}<{avg[(0.02, k)]:.0f}"
                       for k in MAIN_PRECONDS)
    report(5, f"alpha_p=1 beats alpha_p=alpha ({detail})", ok)


def test_criterion_06_constraint_suite():
    runs = [
        academic_config(field={"m0": {"kind": "spiral", "turns": 1.0}},
                        precond={"kind": "practical", "alpha_p": 1.0}),
        academic_config(scheme="tps2",
                        field={"m0": {"kind": "spiral", "turns": 1.0}},
                        precond={"kind": "theoretical", "alpha_p": 1.0},
                        frame={"tn": "adaptive"}),
        mumag_like_config("stationary", 1.0),
    ]
    ok = True
    for cfg in runs:
        res = run_simulation(cfg, keep_states=True)
        k = cfg.k
        for prev, cur in zip(res.states, res.states[1:]):
            m_prev, v, m_new = prev.m_n, cur.last_v, cur.m_n
            ok &= float(np.abs(np.linalg.norm(m_new, axis=1) - 1).max()) <= 1e-14
            defect = np.abs(np.einsum("nc,nc->n", m_prev, v)).max()
            ok &= defect <= 1e-9 * (1 + np.abs(v).max())
            updated = m_prev + k * v
            nsq = np.einsum("nc,nc->n", updated, updated)
            pred = 1.0 + k**2 * np.einsum("nc,nc->n", v, v)
            ok &= float(np.abs(nsq - pred).max() / (1.0 + pred.max())) <= 1e-12
    report(6, "unit norm, tangency, orthogonality identity", ok)


def test_criterion_07_structural_matrices(cube27):
    from tangent_plane_llg import (assemble_cross, assemble_mass,
                                   assemble_stiffness, assemble_weighted_mass)
    rng = np.random.default_rng(77)
    mass, stiffness = assemble_mass(cube27), assemble_stiffness(cube27)
    m = random_unit_field(cube27.N, seed=300)
    ok = True

    cross = assemble_cross(cube27, m)
    ok &= (cross + cross.T).nnz == 0  # skew-symmetry, bit-exact

    ok &= np.linalg.eigvalsh(mass.toarray()).min() > 0
    weights = 0.5 + rng.random(cube27.elem_count)
    mk = assemble_weighted_mass(cube27, weights).toarray()
    ok &= np.linalg.eigvalsh(0.5 * (mk + mk.T)).min() > 0
    ok &= np.linalg.eigvalsh(stiffness.toarray()).min() >= -1e-12

    frame = build_frame(m, select_tn_adaptive(m).chosen_T)
    q = frame.as_sparse()
    ok &= np.abs((q.T @ q).toarray() - np.eye(2 * cube27.N)).max() <= 1e-14

    ok &= check_mapping_identities(frame, m).max_error <= 1e-13

    worst_energy = 0.0
    for _ in range(5):
        x = rng.standard_normal(2 * cube27.N)
        a, b = energy_norm(mass, stiffness, frame, 1.0, 0.1, x, mesh=cube27)
        worst_energy = max(worst_energy, abs(a - b) / a)
    ok &= worst_energy <= 1e-12
    report(7, "structural matrix suite", ok)


def test_criterion_08_nondimensionalization():
    out = nondimensionalize(mumag4_parameters())
    ok = abs(out["ell_ex2"] - 32.3283) <= 1e-3
    ok &= abs(out["k"] - 0.017688) <= 1e-5
    report(8, f"ell_ex2={out['ell_ex2']:.4f}, k={out['k']:.6f}", ok)


def test_criterion_09_linear_convergence():
    ok = True
    for kind in MAIN_PRECONDS:
        cfg = academic_config(mesh={"n": [6, 6, 6]},
                              precond={"kind": kind, "alpha_p": 1.0})
        res = run_simulation(cfg)
        hist = np.array(res.step_stats[0].residual_history)
        ratios = hist[1:] / hist[:-1]
        ok &= np.mean(ratios < 1.0) >= 0.95
        logs = np.log(hist)
        grid = np.arange(len(logs))
        design = np.vstack([grid, np.ones_like(grid)]).T
        coef, *_ = np.linalg.lstsq(design, logs, rcond=None)
        predicted = design @ coef
        r2 = 1.0 - ((logs - predicted) ** 2).sum() / ((logs - logs.mean()) ** 2).sum()
        ok &= coef[0] < 0
        ok &= r2 >= 0.95
    report(9, "linear convergence (ratio<1, R2>=0.95)", ok)


def test_criterion_10_appendix_checks(cube27):
    rng = np.random.default_rng(99)
    ok = True
    for seed in range(100):
        mu = random_unit_field(cube27.N, seed=400 + seed)
        if (1.0 + mu[:, 2] <= 0).any():
            mu[:, 2] = np.abs(mu[:, 2])  # keep away from the excluded pole
        ok &= check_bounded_ratio(cube27, mu, depth=5).passed

    for trial in range(100):
        dim = int(rng.integers(5, 41))
        g = rng.standard_normal((dim, dim))
        b0 = g @ g.T + dim * np.eye(dim)
        g2 = rng.standard_normal((dim, dim))
        skew = rng.standard_normal((dim, dim))
        b = g2 @ g2.T + dim * np.eye(dim) + 0.7 * (skew - skew.T)
        ok &= check_inverse_bounds(b, b0, n_pairs=100, seed=trial).passed
    report(10, "appendix bounds (ratio<=2, inverse transfer)", ok)


def test_criterion_11_total_runtime():
    elapsed = time.perf_counter() - MODULE_T0
    report(11, f"acceptance suite runtime {elapsed:.1f}s (<300 s)",
           elapsed < 300.0)
