"""Acceptance criteria 1-10, each at its pinned tolerance.

Every test records a pass/fail line that is printed in the terminal summary
("acceptance criteria" section). Benchmarks use master seed 0 and are never
re-seeded to chase a band.
"""

import itertools
import time

import numpy as np
import pytest

from conftest import record
from kfc import aggregation as agg
from kfc.aggregation import AggregationSample, Kernel, Method
from kfc.bregman import ALL_DIVERGENCES, Divergence, _divergence, grad_phi, phi, repair_to_domain
from kfc.cli import main as cli_main
from kfc.clustering import kmeans_fit
from kfc.datagen import DatasetSpec, Family, generate
from kfc.metrics import nmi
from kfc.pipeline import PipelineParams, bench_families, derive_seed, k_sweep

SEED = 0
REPS = 20
FAMILIES = list(Family)


def timed(f):
    t = time.perf_counter()
    out = f()
    return out, time.perf_counter() - t


def check(criterion, part, ok, detail):
    record(criterion, part, ok, detail)
    return ok


# -- shared benchmark runs ---------------------------------------------------------


@pytest.fixture(scope="session")
def cls_report():
    params = PipelineParams(methods=(Method.COMB2,), kernels=(Kernel.GAUSSIAN,))
    return bench_families(FAMILIES, "classification", REPS, params, seed=SEED)


@pytest.fixture(scope="session")
def reg_report():
    params = PipelineParams(methods=(Method.COMB2, Method.COMB3), kernels=(Kernel.GAUSSIAN,))
    return bench_families(FAMILIES, "regression", REPS, params, seed=SEED)


# -- 1. divergence axioms ----------------------------------------------------------


def _interior(div, rng, shape):
    if div is Divergence.EUCLID:
        return rng.normal(0, 3, shape)
    if div is Divergence.LOGIT:
        return rng.uniform(0.01, 0.99, shape)
    return rng.uniform(0.05, 20, shape)


def test_c1_divergence_axioms():
    def run():
        rng = np.random.default_rng(1)
        failures = []
        N, d = 10_000, 3
        for div in ALL_DIVERGENCES:
            x, y = _interior(div, rng, (N, d)), _interior(div, rng, (N, d))
            D = _divergence(div, x, y)
            if np.any(D < 0):
                failures.append(f"{div.value}: negative")
            if np.max(np.abs(_divergence(div, x, x))) > 1e-12:
                failures.append(f"{div.value}: d(x,x) != 0")
            # generator form phi(x) - phi(y) - <x - y, grad phi(y)>
            G = phi(div, x) - phi(div, y) - np.einsum("ij,ij->i", x - y, grad_phi(div, y))
            if not np.allclose(D, G, rtol=1e-8, atol=1e-8 * np.abs(phi(div, x)).max()):
                failures.append(f"{div.value}: generator mismatch")
            pts = _interior(div, rng, (100, d))
            fd = np.stack([(phi(div, pts + e) - phi(div, pts - e)) / 2e-6 for e in np.eye(d) * 1e-6], axis=1)
            if not np.allclose(grad_phi(div, pts), fd, rtol=1e-4, atol=1e-6):
                failures.append(f"{div.value}: gradient mismatch")
            lam = rng.uniform(0.01, 0.99, (N, 1))
            x2 = _interior(div, rng, (N, d))
            lhs = _divergence(div, lam * x + (1 - lam) * x2, y)
            rhs = lam[:, 0] * D + (1 - lam[:, 0]) * _divergence(div, x2, y)
            if np.any(lhs > rhs + 1e-10 * np.maximum(1, np.abs(rhs))):
                failures.append(f"{div.value}: convexity")
        return failures

    failures, dt = timed(run)
    ok = check(1, "axioms, 1e4 cases per divergence", not failures and dt < 10,
               f"{'; '.join(failures) or 'all hold'}; {dt:.2f}s (limit 10s)")
    assert ok


# -- 2. mean-as-minimizer oracle -------------------------------------------------


def test_c2_mean_minimizer():
    def run():
        rng = np.random.default_rng(2)
        bad = []
        for div in ALL_DIVERGENCES:
            U = _interior(div, rng, (50, 2))
            mean_cost = _divergence(div, U, U.mean(axis=0)[None, :]).mean()
            lo, hi = U.min(axis=0), U.max(axis=0)
            cands = rng.uniform(lo, hi, (1000, 2))
            costs = np.array([_divergence(div, U, c[None, :]).mean() for c in cands])
            if not np.all(mean_cost <= costs):
                bad.append(div.value)
        return bad

    bad, dt = timed(run)
    ok = check(2, "mean beats 1000 candidates", not bad and dt < 5,
               f"failures: {bad or 'none'}; {dt:.2f}s (limit 5s)")
    assert ok


# -- 3. K-means invariants ---------------------------------------------------------


def test_c3_kmeans_invariants():
    def run():
        problems = []
        for i, fam in enumerate(FAMILIES):
            train, _ = generate(DatasetSpec(fam, seed=100 + i))
            for div in ALL_DIVERGENCES:
                X = repair_to_domain(train, div).data.X
                a = kmeans_fit(X, 3, div, seed=7)
                b = kmeans_fit(X, 3, div, seed=7)
                same = (np.array_equal(a.centroids.centers, b.centroids.centers) and np.array_equal(a.labels, b.labels)
                        and a.history == b.history)
                if not same:
                    problems.append(f"{fam.value}/{div.value}: not deterministic")
                if a.distortion > min(a.restart_distortions):
                    problems.append(f"{fam.value}/{div.value}: restart dominance")
                for s in range(5):
                    h = np.array(kmeans_fit(X, 3, div, restarts=1, seed=s).history)
                    if np.any(np.diff(h) > 1e-10 * np.maximum(1, h[:-1])):
                        problems.append(f"{fam.value}/{div.value}: distortion increased")
        return problems

    problems, dt = timed(run)
    ok = check(3, "monotone, restart dominance, determinism", not problems and dt < 30,
               f"{'; '.join(problems) or 'all hold'}; {dt:.2f}s (limit 30s)")
    assert ok


# -- 4. NMI reproduction -----------------------------------------------------------

NMI_BANDS = [
    ("exp", "itakura", 0.70, 0.83),
    ("pois", "gkl", 0.85, 0.97),
    ("geom", "logit", 0.82, 0.92),
    ("gauss2d", "euclid", 0.94, 1.00),
    ("gauss3d", "euclid", 0.86, 0.96),
]


@pytest.mark.parametrize("family,div,lo,hi", NMI_BANDS, ids=[f"{f}-{d}" for f, d, _, _ in NMI_BANDS])
def test_c4_nmi_band(cls_report, family, div, lo, hi):
    m = cls_report.value(family, div, "nmi")
    sd = cls_report.value(family, div, "nmi", stat="sd")
    ok = check(4, f"{family}/{div} NMI in [{lo}, {hi}]", lo <= m <= hi, f"mean {m:.4f} (sd {sd:.4f})")
    assert ok


def test_c4_orderings(cls_report):
    def best(fam):
        return max(ALL_DIVERGENCES, key=lambda d: cls_report.value(fam, d.value, "nmi")).value

    exp_best = best("exp")
    ok1 = check(4, "Itakura best on Exp", exp_best == "itakura",
                "best " + exp_best + " " + ", ".join(f"{d.value}={cls_report.value('exp', d.value, 'nmi'):.4f}"
                                                     for d in ALL_DIVERGENCES))
    g = {f: best(f) for f in ("gauss2d", "gauss3d")}
    ok2 = check(4, "Euclid or GKL best on both Gaussians", all(v in ("euclid", "gkl") for v in g.values()),
                f"best {g}")
    assert ok1 and ok2


# -- 5. classification -------------------------------------------------------------


def test_c5_classification(cls_report):
    comb = cls_report.value("exp", "comb2", "misclassification", kernel="gaussian")
    single = cls_report.value("gauss2d", "single", "misclassification")
    best = min(cls_report.value("gauss2d", d.value, "misclassification") for d in ALL_DIVERGENCES)
    ok1 = check(5, "Exp Comb2C in [0.015, 0.055]", 0.015 <= comb <= 0.055, f"mean {comb:.4f}")
    ok2 = check(5, "Gauss2D Single >= 0.40", single >= 0.40, f"mean {single:.4f}")
    ok3 = check(5, "Gauss2D best member <= 0.18", best <= 0.18, f"mean {best:.4f}")
    assert ok1 and ok2 and ok3


# -- 6. regression -----------------------------------------------------------------


def test_c6_regression(reg_report):
    v = reg_report.value
    single, euclid = v("gauss2d", "single", "rmse"), v("gauss2d", "euclid", "rmse")
    comb = v("gauss2d", "comb2", "rmse", kernel="gaussian")
    oks = [
        check(6, "Gauss2D Single in [18, 26]", 18 <= single <= 26, f"mean {single:.3f}"),
        check(6, "Gauss2D Euclid member in [4, 8]", 4 <= euclid <= 8,
              f"mean {euclid:.3f} (sd {v('gauss2d', 'euclid', 'rmse', stat='sd'):.3f})"),
        check(6, "Gauss2D Comb2R in [4, 8]", 4 <= comb <= 8,
              f"mean {comb:.3f} (sd {v('gauss2d', 'comb2', 'rmse', kernel='gaussian', stat='sd'):.3f})"),
    ]
    for fam in FAMILIES:
        best = min(v(fam.value, d.value, "rmse") for d in ALL_DIVERGENCES)
        c = v(fam.value, "comb2", "rmse", kernel="gaussian")
        oks.append(check(6, f"{fam.value} Comb2R <= 1.25 x best member", c <= 1.25 * best,
                         f"{c:.3f} vs best {best:.3f} (ratio {c / best:.3f})"))
    assert all(oks)


# -- 7. combiner oracle equivalence --------------------------------------------------


def test_c7_combiner_bridges():
    def run():
        bad = []
        for n, M, rep in itertools.product(range(1, 21), range(1, 5), range(3)):
            rng = np.random.default_rng((n, M, rep))
            X = rng.normal(size=(n, 1))
            # classification: every label vector is a query
            Pc = rng.integers(0, 2, (n, M)).astype(float)
            sc = AggregationSample(X, Pc, rng.integers(0, 2, n).astype(float))
            qc = np.array(list(itertools.product([0.0, 1.0], repeat=M)))
            ref = agg.comb1_classify(sc, qc)
            for h in (0.25, 0.999):
                if not np.array_equal(agg.comb2_classify(sc, qc, "uniform", h), ref):
                    bad.append(f"cls n={n} M={M} h={h}")
            # regression: every sample prediction vector is a query (all pairs)
            Pr = rng.integers(0, 4, (n, M)).astype(float) + rng.choice([0.0, 0.25], (n, M))
            sr = AggregationSample(X, Pr, rng.normal(size=n))
            for eps in (0.2, 0.5, 1.0, 2.0):
                a = agg.comb2_regress(sr, Pr, "uniform", eps)
                if not np.array_equal(a, agg.comb1_regress(sr, Pr, eps, 1.0)):
                    bad.append(f"reg n={n} M={M} eps={eps}")
                W = agg.normalized(agg.comb1_weights(sr, Pr, eps, 1.0))
                if np.any(np.abs(W.sum(axis=1) - 1) > 1e-12):
                    bad.append(f"weights n={n} M={M}")
                y = sr.outputs
                if np.any(a < y.min() - 1e-12) or np.any(a > y.max() + 1e-12):
                    bad.append(f"range n={n} M={M}")
        return bad

    bad, dt = timed(run)
    ok = check(7, "comb2 uniform == comb1, weights, range", not bad and dt < 10,
               f"{len(bad)} mismatches {bad[:3]}; {dt:.2f}s (limit 10s)")
    assert ok


# -- 8. NMI oracle -----------------------------------------------------------------


def test_c8_nmi_oracle():
    def run():
        errs = [abs(nmi([0, 0, 1, 1], [0, 0, 1, 1]) - 1), abs(nmi([0, 0, 1, 1], [0, 1, 0, 1])),
                abs(nmi([0, 0, 1, 1], [1, 1, 0, 0]) - 1)]
        rng = np.random.default_rng(8)
        asym = relabel = 0.0
        for _ in range(1000):
            n = int(rng.integers(4, 60))
            a, b = rng.integers(0, 4, n), rng.integers(0, 5, n)
            if len(set(a)) < 2 or len(set(b)) < 2:
                continue
            v = nmi(a, b)
            asym = max(asym, abs(v - nmi(b, a)))
            perm = rng.permutation(5)
            relabel = max(relabel, abs(v - nmi(perm[a], perm[b])))
        return max(errs), asym, relabel

    (e, asym, rel), dt = timed(run)
    ok = check(8, "hand examples, symmetry, relabel invariance", e <= 1e-12 and asym <= 1e-12 and rel <= 1e-12
               and dt < 5, f"example err {e:.1e}, asym {asym:.1e}, relabel {rel:.1e}; {dt:.2f}s (limit 5s)")
    assert ok


# -- 9. end-to-end determinism -------------------------------------------------------


def test_c9_bench_determinism(tmp_path):
    def bench(out, jobs):
        code = cli_main(["bench", "--families", "gauss2d,pois", "--task", "regression", "--reps", "3",
                         "--n-train", "100", "--n-test", "30", "--seed", "5", "--jobs", str(jobs), "--out", str(out)])
        assert code == 0
        return {p.name: p.read_bytes() for p in sorted(out.iterdir())}

    def run():
        a = bench(tmp_path / "a", 1)
        b = bench(tmp_path / "b", 1)
        c = bench(tmp_path / "c", 8)
        return a == b, a == c, sorted(a)

    (same, par, names), dt = timed(run)
    ok = check(9, "same seed: byte-identical CSVs, --jobs 1 vs 8", same and par and dt < 300,
               f"repeat {'identical' if same else 'DIFFERENT'}, jobs {'identical' if par else 'DIFFERENT'} "
               f"({', '.join(names)}); {dt:.1f}s (limit 300s)")
    assert ok


# -- 10. K sweep substitute for the real-data table ---------------------------------


def test_c10_k_sweep(reg_report):
    train, test = generate(DatasetSpec("gauss2d", "regression", seed=derive_seed(SEED, 10)))
    params = PipelineParams(methods=(), single=False)
    sweep = k_sweep(train.concat(test), [1, 2, 3], reps=REPS, params=params, seed=SEED, name="gauss2d")
    best = [min(sweep.value("gauss2d", d.value, "rmse", K=K) for d in ALL_DIVERGENCES) for K in (1, 2, 3)]
    mono = all(best[i + 1] <= best[i] * 1.01 for i in range(2))
    ok1 = check(10, "Gauss2D best member non-increasing K=1..3 (1% slack)", mono,
                "best member RMSE " + " -> ".join(f"{b:.3f}" for b in best))
    wins = {f.value: (reg_report.value(f.value, "comb3", "rmse", kernel="gaussian"),
                      reg_report.value(f.value, "comb2", "rmse", kernel="gaussian")) for f in FAMILIES}
    beaten = [f for f, (c3, c2) in wins.items() if c3 <= c2]
    ok2 = check(10, "Comb3R <= Comb2R on at least one family", bool(beaten),
                "; ".join(f"{f}: {c3:.3f} vs {c2:.3f}" for f, (c3, c2) in wins.items()))
    assert ok1 and ok2
