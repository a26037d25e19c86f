"""Acceptance criteria, one test per criterion.

Every test appends a single ``ACCEPTANCE <n> PASS|FAIL`` line (shown in the
terminal summary) and then asserts the criterion at its stated tolerance.
"""
import itertools
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from hankelmor.evaluation import (error_horizon, frequency_response, h2_error,
                                  impulse_trace, lower_bound_error,
                                  spectral_estimate)
from hankelmor.gramians import (build_full_transformation, empirical_gramians,
                                exact_balanced_truncation,
                                exact_hankel_singular_values,
                                transformed_gramians)
from hankelmor.hankel import hankel_from_markov, hankel_from_snapshots
from hankelmor.lti import (PlantConfig, adjoint_system, build_plant,
                           markov_parameters, random_stable_system,
                           scalar_system, tail_horizon)
from hankelmor.pipeline import max_entry_difference, run_pipelines
from hankelmor.reduction import (bpod_modes, choose_order, era_reduce,
                                 pseudo_adjoint_modes, svd_truncate)
from hankelmor.sampling import (SnapshotMatrix, collect_adjoint,
                                collect_markov_pairs, collect_primal,
                                default_sampling)

pytestmark = pytest.mark.slow


def report(number, ok, detail):
    line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# -- shared random fixture set ------------------------------------------------------------
GRID = list(itertools.product((5, 20, 100), (1, 3), (1, 3), (0.5, 0.9), (1, 5)))


def fixture_set(count=20, seed=2024):
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(GRID), size=count, replace=False)
    out = []
    for i, k in enumerate(sorted(picks)):
        n, p, q, rho, P = GRID[k]
        model = random_stable_system(n, p, q, rho, seed=1000 + i)
        tail = max(tail_horizon(model, 1e-8), tail_horizon(adjoint_system(model), 1e-8))
        m = math.ceil(tail / P) + 1
        out.append((model, m, P))
    return out


@pytest.fixture(scope="module")
def fixtures():
    return fixture_set()


@pytest.fixture(scope="module")
def fixture_runs(fixtures):
    runs = []
    for model, m, P in fixtures:
        pair = hankel_from_markov(collect_markov_pairs(model, m, m, P), m, m, P)
        r = choose_order(svd_truncate(pair.H).s)
        runs.append((model, m, P, r, run_pipelines(model, m, m, P, [r])))
    return runs


def test_1_equivalence(fixture_runs):
    t0 = time.perf_counter()
    worst = max(max_entry_difference(res.models["era", r], res.models["bpod", r])
                for _, _, _, r, res in fixture_runs)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-8
    report(1, ok, f"max relative entry gap ERA vs BPOD over {len(fixture_runs)} "
                  f"systems = {worst:.2e} (tol 1e-8)")
    assert ok


def test_2_oracle_convergence(fixture_runs):
    hsv_gap = resp_gap = 0.0
    w = np.linspace(np.pi / 100, np.pi, 100)
    for model, m, P, r, res in fixture_runs:
        s = res.era_svd.s[:r]
        exact = exact_hankel_singular_values(model, period=P)[:r]
        hsv_gap = max(hsv_gap, np.max(np.abs(s - exact) / exact))
        oracle = exact_balanced_truncation(model, r, period=P)
        g_era = frequency_response(res.models["era", r], w).gains
        g_bt = frequency_response(oracle, w).gains
        resp_gap = max(resp_gap, np.max(np.abs(g_era - g_bt) / g_bt))
    ok = hsv_gap < 1e-6 and resp_gap < 1e-4
    report(2, ok, f"HSV relative gap {hsv_gap:.2e} (tol 1e-6); ERA vs BT oracle "
                  f"gain gap {resp_gap:.2e} at 100 frequencies (tol 1e-4)")
    assert ok


def test_3_transformed_gramians(s2):
    rng = np.random.default_rng(0)
    X = SnapshotMatrix(rng.standard_normal((200, 51)), 1, 1)
    Y = SnapshotMatrix(rng.standard_normal((200, 51)), 1, 1, "adjoint")
    svd = svd_truncate(Y.data.T @ X.data)
    modes = bpod_modes(X, Y, svd)
    d = transformed_gramians(build_full_transformation(modes.phi, modes.psi),
                             empirical_gramians(X, Y), svd.s, modes.psi)
    s1 = svd.s[0]
    off = max(np.linalg.norm(d.block(n, b)) for n in ("Wc", "Wo") for b in ("ur", "ll"))
    S2 = np.diag(svd.s ** 2)
    prod_dev = max(np.abs(d.block("product", "ul") - S2).max(),
                   *(np.abs(d.block("product", b)).max() for b in ("ur", "ll", "lr")))
    true_ok = off <= 1e-8 * s1 and prod_dev <= 1e-8 * s1 ** 2

    Xs, Ys = collect_primal(s2, 60, 1), collect_adjoint(s2, 60, 1)
    svd2 = svd_truncate(hankel_from_snapshots(Xs, Ys, s2).H)
    true2 = bpod_modes(Xs, Ys, svd2, 1)
    pseudo = pseudo_adjoint_modes(true2.phi)
    d2 = transformed_gramians(build_full_transformation(true2.phi, pseudo.psi),
                              empirical_gramians(Xs, Ys), svd2.s[:1], true2.psi)
    m3 = np.linalg.norm(d2.M3)
    cross = np.abs(d2.M3 - d2.M3_independent).max()
    pseudo_ok = m3 > 0.1 * svd2.s[0] and cross <= 1e-8
    ok = true_ok and pseudo_ok
    report(3, ok, f"true modes: off-diagonal {off / s1:.1e} sigma1, product "
                  f"{prod_dev / s1 ** 2:.1e} sigma1^2 (tol 1e-8); pseudo on S2: "
                  f"|M3| = {m3 / svd2.s[0]:.2f} sigma1 (> 0.1), cross-check {cross:.1e} (tol 1e-8)")
    assert ok


def test_4_cost_ratio(scalar):
    X = collect_primal(scalar, 200, 1)
    Y = collect_adjoint(scalar, 200, 1)
    bp = hankel_from_snapshots(X, Y, scalar)
    er = hankel_from_markov(collect_markov_pairs(scalar, 200, 200, 1), 200, 200, 1)
    from fractions import Fraction
    ratio = Fraction(bp.counters["H"], er.counters["H"])
    ok = ratio == Fraction(201 ** 2, 401)
    report(4, ok, f"block inner products {bp.counters['H']} / {er.counters['H']} = "
                  f"{ratio} (expected 40401/401, {float(ratio):.2f})")
    assert ok


ORDERS = list(range(2, 21))


@pytest.fixture(scope="module")
def plant_ranking(plant):
    # sampled to the 1e-8 tail so that order 20 lies within the Hankel rank
    t0 = time.perf_counter()
    tail = max(tail_horizon(plant, 1e-8), tail_horizon(adjoint_system(plant), 1e-8))
    m = tail + 1
    res = run_pipelines(plant, m, m, 1, ORDERS, methods=["era", "bpod", "pseudo", "pod"],
                        m_out=20)
    K = error_horizon(plant)
    full = impulse_trace(plant, K)
    errors = {key: h2_error(full, impulse_trace(model, K, lifted=True))
              for key, model in res.models.items()}
    lb = lower_bound_error(plant, res.projector, K)
    return res, errors, lb, time.perf_counter() - t0


def test_5_method_ranking(plant_ranking):
    res, e, lb, elapsed = plant_ranking
    ranked = all(e["era", r] <= e["pseudo", r] and e["era", r] <= e["pod", r] for r in ORDERS)
    violations = [r for r in ORDERS if e["era", r] > e["pseudo", r] or e["era", r] > e["pod", r]]
    ratio = max(max(e["pseudo", r], e["pod", r]) / e["era", r] for r in ORDERS)
    conv_era = e["era", 20] / lb
    conv_bpod = e["bpod", 20] / lb
    ok = ranked and ratio > 2 and conv_era <= 1.05 and conv_bpod <= 1.05 and elapsed < 300
    report(5, ok, f"era <= pseudo, pod at all r in 2..20: {ranked} (violations at r={violations}); "
                  f"max ratio {ratio:.2f} (need > 2); era/bpod error at r=20 = "
                  f"{conv_era:.3f}/{conv_bpod:.3f} x lower bound (need <= 1.05); {elapsed:.0f} s")
    assert ok


def test_6_adjoint_perturbation(plant):
    m_c, m_o, P = default_sampling(plant)
    diffs = {}
    for eps in (1e-2, 1e-3, 1e-4, 0.0):
        res = run_pipelines(plant, m_c, m_o, P, [10], m_out=20, adjoint_eps=eps, seed=0)
        diffs[eps] = max_entry_difference(res.models["era", 10], res.models["bpod", 10])
    monotone = diffs[1e-2] > diffs[1e-3] > diffs[1e-4]
    ok = monotone and diffs[0.0] < 1e-8
    report(6, ok, "ERA/BPOD max entry difference " + ", ".join(
        f"eps={k:g}: {v:.2e}" for k, v in diffs.items()) + " (monotone, < 1e-8 at 0)")
    assert ok


def test_7_biorthogonality_and_moments(fixtures, plant_ranking):
    bio = 0.0
    moment = {1: 0.0, 5: 0.0}
    for model, m, P in fixtures:
        X, Y = collect_primal(model, m, P), collect_adjoint(model, m, P)
        svd = svd_truncate(hankel_from_snapshots(X, Y, model).H)
        r = choose_order(svd.s)
        bio = max(bio, bpod_modes(X, Y, svd, r).biorthogonality_error())
        seq = collect_markov_pairs(model, m, m, P)
        pair = hankel_from_markov(seq, m, m, P)
        esvd = svd_truncate(pair.H)
        red = era_reduce(pair, esvd, esvd.n1)
        got = markov_parameters(red.system(), int(seq.indices[-1]) + 1)
        scale = np.abs(seq.blocks).max()
        with np.errstate(over="ignore", invalid="ignore"):
            gap = max(np.abs(got.block(k) - seq.block(k)).max() for k in seq.indices)
        moment[P] = max(moment[P], gap / scale)
    res = plant_ranking[0]
    for r in (10, 20):
        bio = max(bio, bpod_modes(res.X, res.Y, res.bpod_svd, r).biorthogonality_error())
    worst = max(moment.values())
    ok = bio < 1e-8 and worst < 1e-8
    report(7, ok, f"max |Psi^T Phi - I| = {bio:.2e} (tol 1e-8); order-n1 ERA Markov "
                  f"reproduction gap {moment[1]:.2e} on P=1 fixtures, {moment[5]:.2e} "
                  f"on P=5 fixtures (tol 1e-8 relative)")
    assert ok


def test_8_spectral_estimate(scalar, plant):
    worst = {}
    for name, model in (("scalar", scalar), ("plant", plant)):
        sw = spectral_estimate(model, 500_000, seed=0)
        ref = frequency_response(model, sw.frequencies).gains
        mask = ref > 0.1 * ref.max()
        worst[name] = np.max(np.abs(sw.gains[mask] - ref[mask]) / ref[mask])
    ok = all(v <= 0.10 for v in worst.values())
    report(8, ok, "Welch vs direct gain, worst relative gap on bins above 0.1 peak: "
                  + ", ".join(f"{k} {v:.2%}" for k, v in worst.items()) + " (tol 10%)")
    assert ok
