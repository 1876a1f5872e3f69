"""One test per acceptance criterion; each records a PASS/FAIL line shown in the run summary."""
import hashlib
import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ensemble_belief, random_psd
from dynir import metrics as M
from dynir.click_model import all_observations, truncated_observations
from dynir.experiment import ExperimentConfig, run_experiment
from dynir.oracle import exhaustive_bellman
from dynir.planner import PlanConfig, dir_mps, dir_mps_exact, iir_prp_mps, prp_rank
from dynir.relevance_model import RelevanceBelief, condition_on_observation

LN2_SQ = math.log(2) ** 2


def gain_sorted(belief):
    g = [2 ** m - 1 + 2 ** (m - 1) * LN2_SQ * v for m, v in zip(belief.mean, belief.var)]
    return [d for _, d in sorted(zip([-x for x in g], belief.doc_ids))]


def test_1_search_length_reference_numbers(acceptance_report):
    r = (2 / 3, 2 / 3, 1 / 3)
    start = time.perf_counter()
    got = [M.expected_search_length(r),
           M.expected_search_length((r[0], r[2], r[1])),
           M.expected_search_length(joint={(1, 1, 0): 2 / 3, (0, 0, 1): 1 / 3}),
           M.expected_search_length(joint={(1, 0, 1): 2 / 3, (0, 1, 0): 1 / 3})]
    elapsed = time.perf_counter() - start
    want = [Fraction(8, 27), Fraction(11, 27), Fraction(2, 3), Fraction(1, 3)]
    err = max(abs(g - float(w)) for g, w in zip(got, want))
    ok = err <= 1e-12 and elapsed < 1e-3
    acceptance_report(1, ok, f"8/27 11/27 2/3 1/3 max error {err:.1e}, {elapsed * 1e3:.3f} ms")
    assert ok


def test_2_exact_planner_matches_brute_force(acceptance_report):
    rng = np.random.default_rng(20240601)
    worst, same_page, count = 0.0, 0, 0
    start = time.perf_counter()
    for n, m in itertools.product((3, 4, 5), (1, 2)):
        for _ in range(50):
            b = ensemble_belief(rng, n)
            cfg = PlanConfig(2, m, float(rng.random()), 1.0, "exact")
            plan = dir_mps_exact(b, cfg)
            value, (page1, _) = exhaustive_bellman(b, cfg)
            worst = max(worst, abs(plan.expected_utility - value))
            same_page += plan.page1 == page1
            count += 1
    elapsed = time.perf_counter() - start
    ok = worst < 1e-9 and elapsed < 60
    acceptance_report(2, ok, f"{count} instances, max deviation {worst:.1e}, "
                             f"same page 1 on {same_page}/{count}, {elapsed:.1f} s")
    assert ok


def test_3_sequential_approximation_bound(acceptance_report):
    rng = np.random.default_rng(33)
    ratios, violations = [], 0
    start = time.perf_counter()
    for k in range(100):
        n, m = (4, 5, 6)[k % 3], (1, 2)[k % 2]
        b = ensemble_belief(rng, n)
        lam, mass = float(rng.random()), (0.95, 1.0)[(k // 2) % 2]
        seq = dir_mps(b, PlanConfig(2, m, lam, mass)).expected_utility
        exact = dir_mps_exact(b, PlanConfig(2, m, lam, mass, "exact")).expected_utility
        violations += seq > exact + 1e-9
        ratios.append(seq / exact)
    elapsed = time.perf_counter() - start
    mean_ratio = float(np.mean(ratios))
    ok = violations == 0 and mean_ratio >= 0.9 and elapsed < 60
    acceptance_report(3, ok, f"sequential > exact on {violations}/100, mean ratio {mean_ratio:.4f}, "
                             f"min ratio {min(ratios):.4f}, {elapsed:.1f} s")
    assert ok


def test_4_degenerate_cases(acceptance_report):
    rng = np.random.default_rng(44)
    failures = []
    for k in range(20):
        b = ensemble_belief(rng, 15)
        cfg = PlanConfig(2, 5, 0.0)
        if list(dir_mps(b, cfg).page1) != gain_sorted(b)[:5]:
            failures.append(f"gain sort {k}")
        flat = RelevanceBelief(b.doc_ids, b.mean, np.zeros_like(b.cov))
        if dir_mps(flat, cfg).page1 != prp_rank(flat, 5):
            failures.append(f"prp {k}")
        if [d for p in iir_prp_mps(b, cfg) for d in p] != gain_sorted(b)[:10]:
            failures.append(f"greedy gain {k}")
    ok = not failures
    acceptance_report(4, ok, "lambda=0 orderings equal on 20 instances" if ok else ", ".join(failures))
    assert ok


def _sort_prefix(q, mass):
    clicks, probs = all_observations(q)
    total, n = 0.0, 0
    for n, p in enumerate(probs, start=1):
        total += p
        if total >= mass:
            break
    return clicks[:n], probs[:n]


def test_5_click_model_normalization(acceptance_report):
    rng = np.random.default_rng(55)
    worst, bad = 0.0, 0
    start = time.perf_counter()
    for k in range(1000):
        m = 1 + k % 12
        b = np.sort(rng.uniform(0.01, 1.0, m))[::-1]
        q = b * rng.random(m)
        _, full = all_observations(q)
        worst = max(worst, abs(math.fsum(full) - 1.0))
        clicks, probs = truncated_observations(q, 0.95)
        ref_clicks, ref_probs = _sort_prefix(q, 0.95)
        sound = math.fsum(probs) >= 0.95 and math.fsum(probs[:-1]) < 0.95
        if not sound or not np.array_equal(clicks, ref_clicks) or not np.allclose(probs, ref_probs):
            bad += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and bad == 0 and elapsed < 10
    acceptance_report(5, ok, f"1000 draws, max |sum-1| {worst:.1e}, truncation faults {bad}, "
                             f"{elapsed:.1f} s")
    assert ok


def test_6_gaussian_conditioning(acceptance_report):
    start = time.perf_counter()
    hand = RelevanceBelief(("d1", "d2"), [0.5, 0.5], [[0.04, 0.02], [0.02, 0.04]])
    post = condition_on_observation(hand, ("d2",), (1,))
    hand_ok = abs(post.mean[0] - 0.75) <= 1e-12 and abs(post.cov[0, 0] - 0.03) <= 1e-12

    rng = np.random.default_rng(66)
    mean = np.array([0.45, 0.55, 0.5])
    cov = np.array([[0.04, 0.012, 0.02], [0.012, 0.03, -0.008], [0.02, -0.008, 0.05]])
    b = RelevanceBelief(("a", "b", "c"), mean, cov)
    post = condition_on_observation(b, ("c",), (1,))
    x = rng.multivariate_normal(mean, cov, size=100_000)
    design = np.column_stack([np.ones(len(x)), x[:, 2]])
    point = np.array([1.0, 1.0])
    xtx_inv = np.linalg.inv(design.T @ design)
    z_scores = []
    for j in range(2):
        coef, *_ = np.linalg.lstsq(design, x[:, j], rcond=None)
        resid = x[:, j] - design @ coef
        se = math.sqrt(resid @ resid / (len(x) - 2) * point @ xtx_inv @ point)
        z_scores.append(abs(point @ coef - post.mean[j]) / se)
    mc_ok = max(z_scores) < 3

    psd_bad = 0
    for k in range(1000):
        n = 2 + k % 7
        c = random_psd(rng, n)
        prior = RelevanceBelief(tuple(f"d{i}" for i in range(n)), rng.random(n), c)
        ranked = tuple(prior.doc_ids[i] for i in rng.permutation(n)[:1 + k % (n - 1)])
        p = condition_on_observation(prior, ranked, rng.integers(0, 2, len(ranked)))
        symmetric = np.allclose(p.cov, p.cov.T, atol=1e-12)
        psd = np.linalg.eigvalsh(p.cov)[0] >= -1e-9
        shrinks = np.all(p.var <= prior.var[prior.index(p.doc_ids)] + 1e-12)
        psd_bad += not (symmetric and psd and shrinks)
    elapsed = time.perf_counter() - start
    ok = hand_ok and mc_ok and psd_bad == 0 and elapsed < 30
    acceptance_report(6, ok, f"hand example {'ok' if hand_ok else 'wrong'}, Monte Carlo max z "
                             f"{max(z_scores):.2f}, PSD/variance faults {psd_bad}/1000, {elapsed:.1f} s")
    assert ok


def test_7_expected_gain_monte_carlo(acceptance_report):
    rng = np.random.default_rng(77)
    worst, worst_exact = 0.0, 0.0
    for _ in range(20):
        r, s2 = rng.uniform(0, 1), rng.uniform(0, 0.05)
        b = RelevanceBelief(("d",), [r], [[s2]])
        got = M.expected_dcg(("d",), b)
        mc = float(np.mean(2.0 ** rng.normal(r, math.sqrt(s2), 400_000) - 1.0))
        exact = 2 ** r * math.exp(s2 * LN2_SQ / 2) - 1
        worst = max(worst, abs(got - mc))
        worst_exact = max(worst_exact, abs(got - exact))
    ok = worst < 5e-3 and worst_exact < 1.5e-4
    acceptance_report(7, ok, f"20 pairs, max |formula - Monte Carlo| {worst:.1e}, "
                             f"max |formula - closed form| {worst_exact:.1e} (bound 1.5e-4)")
    assert ok


_bounded_failures = []
docs = st.sampled_from("abcdefghij")


@settings(max_examples=10_000, deadline=None, database=None)
@given(st.lists(docs, min_size=1, max_size=10, unique=True),
       st.dictionaries(docs, st.integers(0, 4)),
       st.dictionaries(st.sampled_from("1234"), st.sets(docs), min_size=1),
       st.floats(0.01, 0.99))
def _bounded_metrics(ranking, qrel, subs, alpha):
    values = {"ndcg": M.ndcg(ranking, qrel), "ap": M.average_precision(ranking, qrel),
              "err": M.err(ranking, qrel), "alpha_ndcg": M.alpha_ndcg(ranking, subs, alpha),
              "err_ia": M.err_ia(ranking, subs), "ia_precision": M.ia_precision(ranking, subs)}
    for name, v in values.items():
        if not 0.0 <= v <= 1.0:
            _bounded_failures.append((name, v))
    assert all(0.0 <= v <= 1.0 for v in values.values())


def test_8_metric_sanity(acceptance_report):
    qrel = {"a": 3, "b": 2, "c": 1, "d": 0}
    ideal_ok = M.ndcg(("a", "b", "c", "d"), qrel) == 1.0
    sdcg_ok = M.sdcg([("c", "a", "d")], qrel) == M.dcg(("c", "a", "d"), qrel)
    try:
        _bounded_metrics()
        bounded_ok = True
    except AssertionError:
        bounded_ok = False
    ok = ideal_ok and sdcg_ok and bounded_ok
    acceptance_report(8, ok, f"ideal NDCG=1 {ideal_ok}, sDCG(T=1)=DCG {sdcg_ok}, "
                             f"10000 random cases bounded {bounded_ok} {_bounded_failures[:3]}")
    assert ok


def _digest(tables):
    h = hashlib.sha256()
    for name in sorted(tables):
        h.update(name.encode())
        h.update(tables[name].encode())
    return h.hexdigest()


@pytest.fixture(scope="module")
def desk_scale(tmp_path_factory):
    config = ExperimentConfig(synthetic={"topics": 100, "docs": 30, "methods": 5},
                              lambdas=[0.0, 0.5, 0.8, 1.0], pages=2, page_size=10,
                              obs_mass=0.95, seed=0)
    runs = []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"run{k}")
        config.output_dir = str(out)
        start = time.perf_counter()
        result = run_experiment(config)
        elapsed = time.perf_counter() - start
        files = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
        runs.append((result, elapsed, hashlib.sha256(b"".join(files.values())).hexdigest(), files))
    return runs


@pytest.mark.slow
def test_9_desk_scale_experiment(acceptance_report, desk_scale):
    result, elapsed, digest, _ = desk_scale[0]
    reproducible = digest == desk_scale[1][2]
    algorithms = {r[1] for r in result.rows}
    utility = result.summary["mean_expected_utility"]
    lines, ordered = [], True
    for lam in sorted(utility, key=float):
        u = utility[lam]
        dir_s, s_prp = u["DIR-MPS"] - u["S-MPS"], u["S-MPS"] - u["PRP"]
        ordered &= dir_s >= -1e-12 and s_prp >= -1e-12
        lines.append(f"lambda={lam}: DIR-S {dir_s:+.4f}, S-PRP {s_prp:+.4f}")
    print("\n".join(lines))
    ok = elapsed < 600 and reproducible and len(algorithms) == 7 and ordered
    acceptance_report(9, ok, f"100 topics x 7 algorithms x 4 lambdas in {elapsed:.0f} s, "
                             f"byte-identical {reproducible}; " + "; ".join(lines))
    assert ok


@pytest.mark.slow
def test_10_determinism(acceptance_report, desk_scale):
    (_, _, first, files_a), (_, _, second, files_b) = desk_scale
    same = first == second and files_a == files_b
    acceptance_report(10, same, f"two runs, sha256 {first[:16]} vs {second[:16]}")
    assert same
