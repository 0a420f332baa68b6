"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest -v tests/test_acceptance.py`` (the lines are repeated in the
terminal summary) or directly with ``python3 tests/test_acceptance.py``.
Training criteria use 5 seeds (0..4) on n=5000 datasets; all runs except the
hidden-1200 Two-Moons check use hidden widths 256-256. Expect roughly an hour
on a single core.
"""
import math
import statistics
import sys
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from mist import losses
from mist import model as mlp
from mist.config import MistConfig, ablation_config
from mist.datasets import Dataset, make_two_moons, make_two_rings
from mist.evaluation import clustering_accuracy, kmeans
from mist.graph import build_knn, geodesics
from mist.trainer import mist_loss, prepare, train

from gradcheck import central_diff, max_rel_err
from oracles import best_permutation_acc, floyd_warshall, knn_by_full_sort, random_simplex

SEEDS = (0, 1, 2, 3, 4)
HIDDEN = (256, 256)
RESULTS = []


def report(n, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    return ok


@lru_cache(maxsize=None)
def dataset(name):
    return make_two_moons(5000, 0.05, 0) if name == "moons" else make_two_rings(5000, 0.01, 0.35, 0)


@lru_cache(maxsize=None)
def base_config(name, hidden=HIDDEN):
    # Two-Moons uses (K0, beta) = (15, 0); Two-Rings (15, 0.6); everything else shared.
    return MistConfig(hidden=hidden, beta=0.0 if name == "moons" else 0.6)


@lru_cache(maxsize=None)
def _prepared(name, k0, beta):
    cfg = MistConfig(k0=k0, beta=beta)
    return prepare(dataset(name), cfg)


@lru_cache(maxsize=None)
def accs(name, cfg):
    sampler, radii = _prepared(name, cfg.k0, cfg.beta)
    out = []
    for s in SEEDS:
        t = time.perf_counter()
        _, rep = train(dataset(name), cfg.with_(seed=s), sampler, radii)
        out.append(rep.final_acc)
        print(f"  {name} {cfg.terms} {cfg.variant} K0={cfg.k0} h={cfg.hidden[0]} seed {s}: "
              f"ACC {rep.final_acc:.2f} ({time.perf_counter() - t:.0f}s)", flush=True)
    return tuple(out)


def fmt(a):
    return "[" + ", ".join(f"{v:.1f}" for v in a) + f"] mean {np.mean(a):.1f}"


def test_c1_two_moons():
    ok = True
    for hidden in (HIDDEN, (1200, 1200)):
        a = accs("moons", base_config("moons", hidden))
        good = sum(v >= 99.0 for v in a) >= 4 and statistics.median(a) == 100.0
        ok &= report(1, good, f"Two-Moons hidden {hidden[0]}: {fmt(a)} (need >=4/5 at >=99, median 100)")
    assert ok


def test_c2_two_rings():
    a = accs("rings", base_config("rings"))
    ok = report(2, any(v == 100.0 for v in a) and np.mean(a) >= 75.0,
                f"Two-Rings: {fmt(a)} (need one seed at 100 and mean >= 75)")
    assert ok


def test_c3_plain_infonce_variant():
    m = accs("moons", base_config("moons").with_(variant="plainnce"))
    r = accs("rings", base_config("rings").with_(variant="plainnce"))
    ok1 = report(3, sum(v >= 99.0 for v in m) >= 4, f"PlainNCE Two-Moons: {fmt(m)} (need >=4/5 at >=99)")
    ok2 = report(3, np.mean(r) >= 85.0, f"PlainNCE Two-Rings: {fmt(r)} (need mean >= 85)")
    assert ok1 and ok2


def test_c4_kmeans_anchors():
    r = clustering_accuracy(dataset("rings").labels, kmeans(dataset("rings"), 2, seed=0))
    m = clustering_accuracy(dataset("moons").labels, kmeans(dataset("moons"), 2, seed=0))
    ok = report(4, 48 <= r <= 55 and 70 <= m <= 82,
                f"K-means Two-Rings {r:.1f} in [48, 55], Two-Moons {m:.1f} in [70, 82]")
    assert ok


def test_c5_ablation_ordering():
    base = base_config("rings")
    full = np.mean(accs("rings", base))
    abc = np.mean(accs("rings", ablation_config("ABC", base, "synthetic")))
    bc = np.mean(accs("rings", ablation_config("BC", base, "synthetic")))
    ok = report(5, full > abc and full > bc,
                f"Two-Rings means ABCD {full:.1f} vs ABC {abc:.1f} vs BC {bc:.1f} (need ABCD above both)")
    assert ok


def test_c6_k0_robustness():
    a15 = accs("rings", base_config("rings"))
    a50 = accs("rings", base_config("rings").with_(k0=50))
    ok = report(6, np.mean(a50) <= 60.0 and np.mean(a15) >= 90.0,
                f"Two-Rings K0=50 {fmt(a50)} (need <= 60), K0=15 {fmt(a15)} (need >= 90)")
    assert ok


def test_c7_algebraic_identities():
    rng = np.random.default_rng(2024)
    worst = 0.0
    bound_ok = sym_ok = True
    for _ in range(200):
        m, c = int(rng.integers(2, 65)), int(rng.integers(2, 11))
        alpha = float(rng.choice([0.0, 1.0, 2.0]))
        tau = float(rng.uniform(0.01, 1.0)) * (1.0 if alpha == 1 else 1.0 / abs(1 - alpha))
        cfg = losses.CriticConfig(alpha, tau)
        Z = random_simplex(rng, m, c, rng.uniform(0.1, 8))
        Zt = random_simplex(rng, m, c, rng.uniform(0.1, 8))
        t = losses.contrastive_terms(Z, Zt, cfg, grads=False)
        worst = max(worst, abs(-(t.i_nce + t.i_nce_prime) / 2 - (-math.log(m) + t.l_ps + t.l_ng)))
        bound_ok &= t.i_nce <= math.log(m) and t.i_nce_prime <= math.log(m)
        sym_ok &= losses.critic(Z[0], Zt[0], cfg) == losses.critic(Zt[0], Z[0], cfg)
    ok = report(7, worst <= 1e-8 and bound_ok and sym_ok,
                f"max identity gap {worst:.2e} (<= 1e-8), I <= log m {bound_ok}, critic symmetry {sym_ok}")
    assert ok


def test_c8_oracle_equivalence():
    rng = np.random.default_rng(8)
    knn = geo = hun = 0
    for _ in range(50):
        n = int(rng.integers(2, 201))
        x = rng.standard_normal((n, int(rng.integers(1, 5))))
        if rng.random() < 0.3:
            x = np.round(x)
        k = int(rng.integers(1, n))
        knn += np.array_equal(build_knn(Dataset(x), k).neighbors, knn_by_full_sort(x, k))
    for _ in range(50):
        n = int(rng.integers(2, 61))
        x = rng.standard_normal((n, 2))
        g = build_knn(Dataset(x), int(rng.integers(1, min(n - 1, 6) + 1)))
        edges = [(i, int(j), float(w)) for i in range(n) for j, w in zip(g.neighbors[i], g.distances[i])]
        ref, got = floyd_warshall(n, edges), geodesics(g).dist
        fin = np.isfinite(ref)
        geo += bool(np.array_equal(fin, np.isfinite(got)) and
                    np.max(np.abs(ref[fin] - got[fin]), initial=0.0) <= 1e-9)
    for _ in range(50):
        c, n = int(rng.integers(1, 7)), int(rng.integers(1, 60))
        yt, yp = rng.integers(0, c, n), rng.integers(0, c, n)
        hun += abs(clustering_accuracy(yt, yp, c) - best_permutation_acc(yt, yp, c)) <= 1e-12
    ok = report(8, knn == geo == hun == 50, f"K-NN {knn}/50, geodesics {geo}/50, Hungarian {hun}/50")
    assert ok


def test_c9_full_gradient():
    cfg = MistConfig(hidden=(4, 4), tau=0.5)
    st = mlp.init(3, 2, hidden=(4, 4), seed=11)
    rng = np.random.default_rng(12)
    x = rng.standard_normal((6, 3))
    xt = x + 0.3 * rng.standard_normal((6, 3))
    eps = np.full(6, 0.2)
    parts, grads, r_adv = mist_loss(st, x, xt, cfg, eps, np.random.default_rng(13), update_running_stats=False)
    z0 = mlp.forward(st, np.vstack([x, xt]), train=True, update_running_stats=False, n_ref=6)[0][:6].copy()
    rest = cfg.with_(terms="BCD")

    def f():
        p = mist_loss(st, x, xt, rest, eps, None, update_running_stats=False)[0]
        return p.total + losses.vat_loss(st, x, eps, cfg.xi, None, z_clean=z0, r_adv=r_adv)[0]

    fd = central_diff(f, st.params)
    worst = max(max_rel_err(grads[k], fd[k]) for k in st.params)
    ok = report(9, worst <= 1e-4, f"max relative error {worst:.2e} vs central differences (<= 1e-4)")
    assert ok


def test_c10_entropy_and_simplex():
    rng = np.random.default_rng(10)
    worst_sum = 0.0
    in_range = True
    for c in (2, 3, 10):
        st = mlp.init(4, c, hidden=(32, 32), seed=c)
        for scale in (0.1, 1.0, 100.0):
            x = scale * rng.standard_normal((50, 4))
            for train_mode in (True, False):
                z = mlp.forward(st, x, train=train_mode, update_running_stats=False)[0]
                worst_sum = max(worst_sum, float(np.max(np.abs(z.sum(axis=1) - 1))))
                for h in (losses.marginal_entropy(z), losses.conditional_entropy(z)):
                    in_range &= 0.0 <= h <= math.log(c) + 1e-9
    closed = True
    for c in range(2, 11):
        uni, hot = np.full((4, c), 1 / c), np.eye(c)
        # "exact" up to summation round-off of c terms
        closed &= abs(losses.marginal_entropy(uni) - math.log(c)) <= 1e-12
        closed &= abs(losses.conditional_entropy(uni) - math.log(c)) <= 1e-12
        closed &= losses.conditional_entropy(hot) == 0.0 and losses.marginal_entropy(hot[:1]) == 0.0
    ok = report(10, worst_sum <= 1e-6 and in_range and closed,
                f"max |row sum - 1| {worst_sum:.1e}, entropies in range {in_range}, closed forms {closed}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
