"""Acceptance criteria 1-14.

Every test records one PASS/FAIL line (printed in the terminal summary) and
then asserts the same condition, so a failing criterion also fails pytest.
"""
import filecmp
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from glap.blowup import (Bk_limit_check, gk_limit_check, lambda_continuation,
                         liouville_scaling_probe, rescale)
from glap.fixed_point import FixedPointConfig, iterate, solve_multistart
from glap.mesh import (Field, interval_mesh, luxemburg_norm, modular, rectangle_mesh)
from glap.solver import DiscreteProblem, inner_solve, torsion_bump
from glap.source import composite, lane_emden
from glap.young import (YoungFunction, complementary, delta2_constant, lieberman_exponents,
                        phi_implicit, phi_ratio_band, regvar_exponent, varphi,
                        young_inequality_constant)
from oracles import lane_emden_1d, plap_closed_form, power_conjugate

ROOT = Path(__file__).resolve().parents[1]
PROBLEMS = ROOT / "problems"
ENERGY_SLACK = 1e-13


def energy_violations(hist):
    e = np.asarray(hist)
    return int(np.sum(np.diff(e) > ENERGY_SLACK * (1 + np.abs(e[:-1]))))


def young_fixtures():
    return {"power1.5": YoungFunction.power(1.5), "power2": YoungFunction.power(2),
            "power3": YoungFunction.power(3), "plog": YoungFunction.plog(2, 1),
            "double_power": YoungFunction.double_power(2, 3)}


# ---------------------------------------------------------------------------

def test_c01_young_algebra(criterion):
    worst = {"lieb": 0.0, "d2": 0.0, "conj": 0.0, "regvar": 0.0}
    t = np.logspace(-2, 2, 100)
    for p in (1.5, 2.0, 2.7, 3.0):
        yf = YoungFunction.power(p)
        pm, pp, _, _ = lieberman_exponents(yf)
        worst["lieb"] = max(worst["lieb"], abs(pm - p), abs(pp - p))
        worst["d2"] = max(worst["d2"], abs(delta2_constant(yf) - 2 ** p))
        ref = power_conjugate(t, p)
        worst["conj"] = max(worst["conj"], float(np.max(np.abs(complementary(yf, t) - ref) / ref)))
        worst["regvar"] = max(worst["regvar"], abs(regvar_exponent(yf)[0] - p))
    ok = (worst["lieb"] <= 1e-9 and worst["d2"] <= 1e-9 and worst["conj"] <= 1e-8
          and worst["regvar"] <= 1e-6)
    criterion(1, "Young algebra exactness", ok,
              ", ".join(f"{k} err {v:.2e}" for k, v in worst.items()))
    assert ok


def test_c02_lieberman_band_consistency(criterion):
    details, ok = [], True
    for name in ("plog", "double_power"):
        pm, pp, r2m, r2p = lieberman_exponents(young_fixtures()[name])
        inside = pm - 1e-6 <= r2m and r2p <= pp + 1e-6
        ok &= inside
        details.append(f"{name}: tg/G [{r2m:.4f}, {r2p:.4f}] in [{pm:.4f}, {pp:.4f}]")
    criterion(2, "tg/G band inside Lieberman band", ok, "; ".join(details))
    assert ok


def test_c03_young_inequality(criterion):
    consts = {k: young_inequality_constant(yf) for k, yf in young_fixtures().items()}
    finite = all(math.isfinite(c) for c in consts.values())
    rng = np.random.default_rng(3)
    worst = 0.0
    for yf in young_fixtures().values():
        t = 10 ** rng.uniform(-2, 2, 100)
        s = yf.g(t)
        gap = np.abs(t * s - yf.G(t) - complementary(yf, s)) / (1 + t * s)
        worst = max(worst, float(gap.max()))
    ok = finite and worst <= 1e-8
    criterion(3, "Young inequality constant and equality case", ok,
              f"max constant {max(consts.values()):.4g}, equality err {worst:.2e}")
    assert ok


def test_c04_phi_comparison(criterion):
    t = np.logspace(-2, 2, 200)
    worst = 0.0
    for p, q in ((2.0, 4.0), (1.5, 3.0), (3.0, 5.0)):
        r = phi_implicit(YoungFunction.power(p), lambda s: s ** (q - 1), t) / varphi(
            YoungFunction.power(p), lambda s: s ** (q - 1), t)
        worst = max(worst, float(np.max(np.abs(r - p ** (-1 / p)))))
    kmin, kmax = phi_ratio_band(YoungFunction.plog(2, 1), lambda s: s ** 3, t)
    ok = worst <= 1e-8 and 0 < kmin <= kmax < math.inf
    criterion(4, "phi / varphi comparison", ok,
              f"power ratio err {worst:.2e}; plog band [{kmin:.4f}, {kmax:.4f}]")
    assert ok


def test_c05_luxemburg(criterion):
    mesh = rectangle_mesh(0, 1, 0, 1, 1 / 8)
    rng = np.random.default_rng(5)
    err_lp, viol_h, viol_ball = 0.0, 0, 0
    for p in (1.5, 2.0, 3.0):
        yf = YoungFunction.power(p, scale=p)           # G = t^p
        for _ in range(5):
            u = rng.normal(size=mesh.n_vertices)
            lp = float(np.sum(mesh.vertex_masses * np.abs(u) ** p) ** (1 / p))
            err_lp = max(err_lp, abs(luxemburg_norm(mesh, u, yf) - lp) / lp)
    yf = YoungFunction.plog(2, 1)
    for _ in range(1000):
        u = rng.normal(scale=10 ** rng.uniform(-2, 2), size=mesh.n_vertices)
        c = 10 ** rng.uniform(-2, 2) * rng.choice([-1, 1])
        n = luxemburg_norm(mesh, u, yf)
        if abs(luxemburg_norm(mesh, c * u, yf) - abs(c) * n) > 1e-10 * abs(c) * n:
            viol_h += 1
        if (n <= 1) != (modular(mesh, u, yf) <= 1 + 1e-12):
            viol_ball += 1
    ok = err_lp <= 1e-8 and viol_h == 0 and viol_ball == 0
    criterion(5, "Luxemburg norms", ok,
              f"L^p rel err {err_lp:.2e}; homogeneity violations {viol_h}; unit-ball violations {viol_ball}")
    assert ok


def test_c06_inner_solver(criterion):
    viol = 0
    errs = []
    for n in (64, 128, 256):
        mesh = interval_mesh(0, 1, 1 / n)
        x = mesh.vertices[:, 0]
        dp = DiscreteProblem(mesh, YoungFunction.power(2))
        u, rep = inner_solve(dp, np.pi ** 2 * np.sin(np.pi * x), tol=1e-12)
        viol += energy_violations(rep.energy_history)
        errs.append(float(np.max(np.abs(u.values - np.sin(np.pi * x)))))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    mesh = interval_mesh(-1, 1, 1 / 512)
    dp = DiscreteProblem(mesh, YoungFunction.power(3))
    u, rep = inner_solve(dp, np.ones(mesh.n_vertices), tol=1e-10)
    viol += energy_violations(rep.energy_history)
    max_err = abs(u.sup() - 2 / 3)
    node_err = float(np.max(np.abs(u.values - plap_closed_form(mesh.vertices[:, 0]))))
    # extra fixtures: nonlinear p, zeroth-order term, 2D
    for p, L in ((1.5, 0.0), (2.5, 1.0), (4.0, 2.0)):
        m2 = rectangle_mesh(0, 1, 0, 1, 1 / 16)
        _, r2 = inner_solve(DiscreteProblem(m2, YoungFunction.power(p), L=L),
                            np.ones(m2.n_vertices), tol=1e-10)
        viol += energy_violations(r2.energy_history)
    ok = min(orders) >= 1.8 and max_err <= 1e-3 and viol == 0
    criterion(6, "inner solver S", ok,
              f"orders {orders[0]:.3f}, {orders[1]:.3f}; p=3 max err {max_err:.2e} "
              f"(nodal {node_err:.2e}); energy violations {viol}")
    assert ok


def test_c07_positivity_of_S(criterion):
    mesh = rectangle_mesh(0, 1, 0, 1, 1 / 16)
    rng = np.random.default_rng(7)
    worst, viol = math.inf, 0
    for k in range(50):
        p = (1.5, 2.0, 3.0)[k % 3]
        dp = DiscreteProblem(mesh, YoungFunction.power(p), L=1.0)
        psi = rng.uniform(0, 1, mesh.n_vertices) ** 3 * 10 ** rng.uniform(-2, 2)
        u, rep = inner_solve(dp, psi, tol=1e-10)
        viol += energy_violations(rep.energy_history)
        worst = min(worst, float(u.values.min()))
    ok = worst >= -1e-10 and viol == 0
    criterion(7, "positivity of S", ok, f"min nodal value {worst:.3e} over 50 fields")
    assert ok


def _le_problem(h=1 / 256):
    mesh = interval_mesh(0, 1, h)
    return DiscreteProblem(mesh, YoungFunction.power(2), lane_emden(4), L=1.0)


def test_c08_fixed_point(criterion):
    dp = _le_problem()
    cfg = FixedPointConfig(omega=0.5, r=1e-2, R=1e2)
    u, tr = solve_multistart(dp, cfg)
    _, oracle = lane_emden_1d(4.0, 1.0)
    err = float(np.max(np.abs(u.values - oracle(dp.mesh.vertices[:, 0]))))
    _, tiny = iterate(dp, 1e-6 * torsion_bump(dp.mesh), cfg)
    ok = (tr.outcome == "converged" and tr.weak_residual <= 1e-6 and err <= 1e-3
          and tiny.outcome == "collapsed_to_zero")
    criterion(8, "fixed point (multi-start)", ok,
              f"outcome {tr.outcome} via {tr.via}; weak residual {tr.weak_residual:.2e}; "
              f"oracle err {err:.2e}; tiny start -> {tiny.outcome}")
    assert ok


def test_c09_case2_mu_is_one(criterion):
    mesh = interval_mesh(-1, 1, 1 / 32)
    bump = Field(mesh, torsion_bump(mesh))
    worst = 0.0
    laws = [{"q": 4.0}, {"q": 3.0}, {"q": 2.5}, {"kind": "exp"}]
    for law in laws:
        dp = DiscreteProblem(mesh, YoungFunction.power(2), composite(f=law))
        lams = (2.0, 8.0, 1e3, 1e6) if law.get("kind") == "exp" else (0.5, 2.0, 8.0, 1e3, 1e6)
        for lam in lams:
            res = rescale(bump, dp, "case2", lam)
            worst = max(worst, abs(res.mu_k - 1.0))
    ok = worst <= 1e-12
    criterion(9, "case-2 mu_k = 1", ok, f"max |mu_k - 1| = {worst:.2e}")
    assert ok


def test_c10_gk_limit(criterion):
    tab = gk_limit_check(YoungFunction.plog(2, 1), lambda t: t ** 3,
                         [1e1, 1e2, 1e3, 1e4, 1e5], np.linspace(0, 2, 201), p=2.0)
    ok = tab.monotone and tab.deviation[-1] < 1e-2
    criterion(10, "g_k limit (plog)", ok,
              f"non-increasing {tab.monotone}; deviations "
              + ", ".join(f"{d:.3g}" for d in tab.deviation) + " (need final < 1e-2)")
    assert ok


def test_c11_Bk_limit(criterion):
    st = composite(f={"q": 4.0}, B0=1.0, f0={"q": 3.0})
    tab = Bk_limit_check(st, YoungFunction.power(2), [1e2, 1e3, 1e4, 1e5])
    slope = tab.slope()
    ok = abs(slope + 1) <= 0.1
    criterion(11, "B_k limit rate", ok, f"log-log slope {slope:.4f}")
    assert ok


@pytest.mark.slow
def test_c12_lambda_continuation(criterion):
    mesh = rectangle_mesh(0, 1, 0, 1, 1 / 64)
    dp = DiscreteProblem(mesh, YoungFunction.power(2), lane_emden(4), L=1.0)
    start = time.perf_counter()
    tab = lambda_continuation(dp, np.linspace(0, 50, 26))
    u_fp, tr = solve_multistart(dp, FixedPointConfig())
    elapsed = time.perf_counter() - start
    rows = tab.rows
    ok_rows = [r for r in rows if r["converged"]]
    bounded = all(r["sup_norm"] + r["lambda"] <= tab.max_bound_observed for r in ok_rows)
    n_bisect = sum(1 for r in rows if r["lambda"] not in set(np.linspace(0, 50, 26)))
    row0 = next(r for r in rows if r["lambda"] == 0.0)
    match = abs(row0["sup_norm"] - u_fp.sup())
    ok = (math.isfinite(tab.lambda_star_estimate) and tab.bracket is not None
          and tab.bracket[0] is not None and n_bisect == 6 and bounded
          and tr.outcome == "converged" and match <= 1e-5 and elapsed <= 600)
    criterion(12, "lambda continuation", ok,
              f"lambda* = {tab.lambda_star_estimate:.5g} bracket {tab.bracket}; "
              f"C_emp = {tab.max_bound_observed:.5g}; lambda=0 vs fixed point {match:.1e}; "
              f"{elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_c13_liouville_scaling(criterion):
    res = liouville_scaling_probe(2.0, 4.0, (1, 2, 4, 8), h=1 / 8)
    ok = all(res.converged) and abs(res.slope + 1) <= 0.1
    criterion(13, "Liouville scaling probe", ok,
              f"slope {res.slope:.4f} (expected -1); ratios "
              + ", ".join(f"{r:.4f}" for r in res.pair_ratios))
    assert ok


def _cli(args, out):
    return subprocess.run([sys.executable, "-m", "glap.cli", *args, "--out", str(out)],
                          capture_output=True, text=True)


def test_c14_determinism(criterion, tmp_path):
    runs = [
        ["young", "check", "--spec", str(PROBLEMS / "young_power2.json")],
        ["solve", "--problem", str(PROBLEMS / "plap_1d_p3.json"), "--h", "1/256"],
        ["solve", "--problem", str(PROBLEMS / "lane_emden_1d.json"), "--seed", "11"],
        ["fixed-point", "--problem", str(PROBLEMS / "lane_emden_1d.json"), "--seed", "3"],
        ["gk-limit", "--spec", str(PROBLEMS / "gk_plog.json")],
    ]
    mismatches, failures, compared = [], [], 0
    for k, args in enumerate(runs):
        a, b = tmp_path / f"{k}a", tmp_path / f"{k}b"
        ra, rb = _cli(args, a), _cli(args, b)
        if ra.returncode != 0 or rb.returncode != 0:
            failures.append(f"{' '.join(args[:2])}: exit {ra.returncode}/{rb.returncode}")
            continue
        names = sorted(p.name for p in a.iterdir() if p.suffix in (".csv", ".json"))
        compared += len(names)
        _, mis, err = filecmp.cmpfiles(a, b, names, shallow=False)
        mismatches += [f"{k}:{n}" for n in mis + err]
    ok = not mismatches and not failures and compared > 0
    criterion(14, "CLI determinism", ok,
              f"{compared} artifacts compared; mismatches {mismatches or 0}; failures {failures or 0}")
    assert ok
