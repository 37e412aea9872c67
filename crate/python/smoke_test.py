"""Smoke test for the lambda_family_py extension.

Build the module first, e.g. `maturin develop -m crates/python/Cargo.toml`,
or copy target/release/liblambda_family_py.so next to this file as
lambda_family_py.so.
"""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent))

import numpy as np
from scipy import integrate, stats

import lambda_family_py as lf


def check(name, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'} {name} {detail}")
    return ok


def main():
    results = []

    p = lf.StudentParams(3.0, [0.5, -1.0], [[2.0, 0.3], [0.3, 1.0]])
    ref = stats.multivariate_t(loc=p.mu, shape=p.sigma, df=3.0)
    x = [0.2, 0.7]
    results.append(check("log_density vs scipy", abs(p.log_density(x) - ref.logpdf(x)) < 1e-10))

    g = p.grad_log_density(x)
    h = 1e-6
    fd = [(p.log_density([x[0] + h, x[1]]) - p.log_density([x[0] - h, x[1]])) / (2 * h),
          (p.log_density([x[0], x[1] + h]) - p.log_density([x[0], x[1] - h])) / (2 * h)]
    results.append(check("gradient vs finite differences", max(abs(a - b) for a, b in zip(g, fd)) < 1e-6))

    xs = np.array(p.sample(200_000, seed=3))
    results.append(check("sample mean", np.abs(xs.mean(axis=0) - p.mu).max() < 0.03))

    results.append(check("lambda and alpha", math.isclose(p.lam, -2 / 5) and math.isclose(p.alpha, 1 + 2 / 5)))

    a = lf.StudentParams(3.0, [0.0], [[1.0]])
    b = lf.StudentParams(3.0, [1.0], [[1.0]])
    alpha = b.alpha
    pa = stats.t(df=3, loc=0.0, scale=1.0)
    qb = stats.t(df=3, loc=1.0, scale=1.0)
    val, _ = integrate.quad(lambda t: pa.pdf(t) ** alpha * qb.pdf(t) ** (1 - alpha), -np.inf, np.inf, epsabs=1e-13)
    rd_quad = math.log(val) / (alpha - 1)
    rd = lf.renyi_divergence(a, b)
    results.append(check("renyi divergence vs scipy quadrature", abs(rd - rd_quad) < 1e-7, f"{rd:.12f} {rd_quad:.12f}"))

    results.append(check("compatibility", not lf.is_compatible(1.0, 10.0, 5) and lf.is_compatible(3.0, 10.0, 5)))
    results.append(check("coupling is -inf off domain", lf.coupling(-1.0, [1.0], [2.0]) == -math.inf))

    m1, m2 = p.escort_moments(3.0)
    back = lf.params_from_escort_moments(3.0, m1, m2)
    results.append(check("escort moment round trip", np.allclose(back.sigma, p.sigma, atol=1e-12) and np.allclose(back.mu, p.mu, atol=1e-12)))

    target = lf.StudentParams(3.0, [0.3, -0.2, 0.1], np.diag([1.0, 2.0, 0.5]).tolist())
    its = lf.vi(target, 3.0, 50, method="exact", seed=1)
    first, last = lf.renyi_divergence(target, its[1]), lf.renyi_divergence(target, its[-1])
    results.append(check("exact VI converges", len(its) == 51 and last < first, f"{first:.4f} -> {last:.4f}"))
    its = lf.vi(target, 3.0, 20, method="scaled_mala", seed=1)
    results.append(check("scaled MALA VI runs", len(its) == 21 and lf.renyi_divergence(target, its[-1]) < 1.0))

    data = target.sample(5000, seed=2)
    fit, bound = lf.mle(data, 3.0)
    mean_ll = np.mean([fit.log_density(x) for x in data])
    results.append(check("MLE bound", mean_ll >= bound, f"{mean_ll:.4f} >= {bound:.4f}"))
    online = lf.mle_online(data, 3.0)
    results.append(check("online equals batch", np.allclose(online.sigma, fit.sigma, atol=1e-9)))

    try:
        lf.StudentParams(3.0, [0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])
        results.append(check("non-PD scale raises", False))
    except ValueError as e:
        results.append(check("non-PD scale raises", "positive definite" in str(e)))

    print(f"{sum(results)} of {len(results)} checks passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
