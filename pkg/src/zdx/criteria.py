"""Executable acceptance checks on the fixture drivers.

Each ``criterion_k`` returns a :class:`CriterionResult` made of named checks
(value, target, verdict).  ``scale`` < 1 shrinks sample sizes for quick runs;
the acceptance criteria themselves use ``scale=1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import driver as drv
from .excursion import (
    alpha_dp,
    conditioned_moment_ratio,
    exp_law_test,
    geometric_exp_ks,
    reduced_chain,
    sample_excursions,
    visit_distribution,
)
from .greenkubo import gk_fp_identity, gk_subset_invariance, induction_check
from .kernel import g_asymptotic, g_fourier_many, g_series, g_series_many
from .lattice import make_fp
from .mlgm import birkhoff_samples, limit_params, normalization_ratio, sampler_report, second_moment_ratio
from .rng import stream
from .spectral import decompose, fit_stable_params, integrale_ratio, llt_check, norm_A, phi0


@dataclass
class Check:
    name: str
    value: object
    target: str
    passed: bool

    def to_json(self) -> dict:
        return {"name": self.name, "value": _plain(self.value), "target": self.target, "passed": bool(self.passed)}


@dataclass
class CriterionResult:
    number: int
    title: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name: str, value, target: str, passed) -> None:
        self.checks.append(Check(name, value, target, bool(passed)))

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = ""
        if not self.passed:
            extra = " (failed: " + "; ".join(f"{c.name}={_short(c.value)} vs {c.target}" for c in self.failures()) + ")"
        return f"criterion {self.number:2d} {status}: {self.title}{extra}"

    def to_json(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed,
                "checks": [c.to_json() for c in self.checks]}


def _plain(v):
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(_plain(v))


def _n(base: float, scale: float, minimum: int = 1000) -> int:
    return max(int(base * scale), minimum)


def criterion_1(seed: int = 1, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Kac identity E[N_p] = 1."""
    res = CriterionResult(1, "Kac identity E[N_p] = 1")
    n = _n(1e6, scale)
    cases = [("lazy_1d", drv.lazy_1d(), [(1,), (3,), (5,)]), ("lazy_2d", drv.lazy_2d(), [(1, 0), (2, 1)])]
    for name, dr, ps in cases:
        batch = sample_excursions(dr, ps, n, seed, ("kac", name), workers=workers)
        for p in ps:
            N = batch.counts(p)
            mean = float(N.mean())
            se = float(N.std(ddof=1) / math.sqrt(len(N)))
            res.add(f"{name} p={p} mean N_p ({batch.engine}, {len(N)} excursions)", (mean, se),
                    "|mean - 1| <= 3 SE", abs(mean - 1) <= 3 * se)
    pmf = visit_distribution(reduced_chain(drv.lazy_1d(), [(1,)]), (1,), tail=1e-14)
    exact = float(np.dot(np.arange(len(pmf)), pmf))
    res.add("lazy_1d p=1 exact enumeration", exact, "|E - 1| <= 1e-10", abs(exact - 1) <= 1e-10)
    return res


def criterion_2(seed: int = 2, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Spitzer: alpha(p) = g(p)."""
    res = CriterionResult(2, "Spitzer identity alpha(p) = g(p)")
    l2 = drv.lazy_2d()
    for p in [(1, 0), (2, 1), (3, 3)]:
        g = g_series(l2, p)
        inv = 1 / g.value
        rel = 1e-3
        br = alpha_dp(l2, p, tol=rel * inv)
        g_lo, g_hi = 1 / (g.value + g.error_bound), 1 / (g.value - g.error_bound)
        gap = max(br.lo - g_hi, g_lo - br.hi, 0.0)
        res.add(f"lazy_2d p={p} bracket vs 1/g_series", {"bracket": (br.lo, br.hi), "inv_g": inv, "R": br.box_radius},
                "overlap, bracket width <= 1e-3 relative",
                br.converged and gap == 0.0 and br.width <= rel * inv)
    l1 = drv.lazy_1d()
    br = alpha_dp(l1, (1,), tol=1e-6)
    g1 = g_series(l1, (1,))
    res.add("lazy_1d alpha(1) from bracket", (1 / br.hi, 1 / br.lo), "within 1e-4 of 4",
            abs(1 / br.hi - 4) <= 1e-4 and abs(1 / br.lo - 4) <= 1e-4)
    res.add("lazy_1d g_series(1)", g1.value, "within 1e-4 of 4", abs(g1.value - 4) <= 1e-4)
    return res


def _kernel_points(d: int) -> list:
    if d == 1:
        return [(k,) for k in range(1, 6)]
    return [(a, b) for a in range(1, 6) for b in range(0, a + 1) if a * a + b * b <= 25]


def criterion_3(seed: int = 3, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Kernel triangulation."""
    res = CriterionResult(3, "potential kernel: series vs Fourier vs asymptotics")
    for name, dr in drv.fixtures().items():
        pts = _kernel_points(dr.d)
        ser = g_series_many(dr, pts)
        fou = g_fourier_many(dr, pts)
        worst = 0.0
        ok = True
        for s, f in zip(ser, fou):
            diff = abs(s.value - f.value)
            bound = s.error_bound + f.error_bound
            worst = max(worst, diff / bound if bound else math.inf)
            ok &= diff <= bound
        res.add(f"{name} |series - fourier| / bound, |p| <= 5", worst, "<= 1", ok)
    l1 = drv.lazy_1d()
    params = limit_params(l1)
    ratio = g_series(l1, (50,)).value / g_asymptotic(params, None, (50,)).value
    res.add("lazy_1d g_series/g_asymptotic at |p|=50", ratio, "within 5% of 1", abs(ratio - 1) <= 0.05)
    l2 = drv.lazy_2d()
    vals = g_series_many(l2, [(4, 0), (8, 0), (16, 0), (32, 0)])
    resid = [v.value - 8 / math.pi * math.log(r) for v, r in zip(vals, (4, 8, 16, 32))]
    spread = max(resid) - min(resid)
    res.add("lazy_2d spread of g - (8/pi) log|p| over |p| in {4,8,16,32}", spread, "< 0.2", spread < 0.2)
    return res


def criterion_4(seed: int = 4, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Green-Kubo identities."""
    res = CriterionResult(4, "Green-Kubo identities: sigma^2(f_p) = 2g(p) - 2 and subset invariance")
    sets = {"lazy_1d": [(k,) for k in range(1, 6)], "markov_3state": [(k,) for k in range(1, 6)],
            "lazy_2d": [(1, 0), (1, 1), (2, 1)]}
    for name, dr in drv.fixtures().items():
        for p in sets[name]:
            r = gk_fp_identity(dr, p)
            res.add(f"{name} p={p} gk_extension - (2g - 2)", r["difference"], f"<= {r['tolerance']:.2e}", r["holds"])
    g = stream(seed, "subset_observables")
    for M in (2, 3):
        ch = drv.cyclic_chain(M)
        for trial in range(3):
            h = g.normal(size=ch.n_states)
            r = gk_subset_invariance(ch, M, h)
            res.add(f"cyclic M={M} observable {trial}: full vs induced", r["difference"], "<= 1e-8",
                    abs(r["difference"]) <= 1e-8)
    return res


def criterion_5(seed: int = 5, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Induction invariance on the Markov fixture."""
    res = CriterionResult(5, "induction invariance: gk_extension vs gk_induced (Markov fixture)")
    mk = drv.markov_3state()
    for p in (1, 2):
        r = induction_check(mk, make_fp((p,)), n_steps=_n(1e7, scale), seed=seed, workers=workers)
        res.add(f"f_{p}: induced - extension", {"extension": r["gk_extension"], "induced": r["gk_induced"],
                                                 "ci": r["ci"]}, "|diff| <= 3 CI", r["holds"])
    return res


def geometric_chi_square(samples: np.ndarray, prob: float) -> tuple:
    """Chi-square goodness of fit of samples on {1, 2, ...} to Geometric(prob); tail bins merged to expected >= 5."""
    n = len(samples)
    k_max = int(samples.max())
    ks = np.arange(1, k_max + 1)
    pk = prob * (1 - prob) ** (ks - 1)
    cut = int(np.searchsorted(-(n * pk), -5.0))  # first k with expected count < 5
    cut = max(cut, 1)
    obs = np.bincount(samples, minlength=k_max + 1)[1:]
    o = np.concatenate([obs[:cut], [obs[cut:].sum()]])
    e = np.concatenate([n * pk[:cut], [n * (1 - prob) ** cut]])
    r = stats.chisquare(o, e)
    return float(r.statistic), float(r.pvalue)


def criterion_6(seed: int = 6, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Hitting laws."""
    res = CriterionResult(6, "hitting laws of N_p given N_p > 0")
    n_cond = _n(1e5, scale)
    l1 = drv.lazy_1d()
    # rejection: keep the excursions that reach 1
    need = n_cond
    kept = []
    chunk = 0
    while need > 0:
        b = sample_excursions(l1, [(1,)], 4 * n_cond, seed, ("geom", chunk), workers=workers)
        N = b.counts((1,))
        N = N[N > 0][:need]
        kept.append(N)
        need -= len(N)
        chunk += 1
    N = np.concatenate(kept)
    stat, pv = geometric_chi_square(N, 0.25)
    res.add("lazy_1d N_1 | N_1 > 0 vs Geometric(1/4): chi-square p-value", pv, "> 0.01", pv > 0.01)
    l2 = drv.lazy_2d()
    p = (20, 0)
    rep = exp_law_test(l2, p, n_cond, seed, workers, dp_tol=1e-4)
    floor = geometric_exp_ks(rep["alpha_hat"])
    res.add(f"lazy_2d p={p} KS(N_p/alpha_hat, Exp(1))", {"ks": rep["ks_stat"], "alpha_hat": rep["alpha_hat"],
                                                         "geometric_floor": floor}, "<= 0.05", rep["ks_stat"] <= 0.05)
    res.add(f"lazy_2d p={p} exponential tail fit kappa", rep["tail_fit"][1], "> 0", rep["tail_fit"][1] > 0)
    res.add(f"lazy_2d p={p} h-transform weight inside the DP bracket", rep.get("dp_bracket"), "contains 1/alpha_hat",
            rep.get("dp_consistent", False))
    for q in (2, 3):
        m = conditioned_moment_ratio(l2, p, q, n_cond, seed + q, workers)
        res.add(f"lazy_2d p={p} E|f|^{q} / (Gamma(1+q) alpha^{q - 1})", (m["ratio"], m["ratio_se"]),
                "within 10% of 1", abs(m["ratio"] - 1) <= 0.1)
    return res


def criterion_7(seed: int = 7, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """MLGM sampler vs moment formula."""
    res = CriterionResult(7, "MLGM sampler moments vs closed form")
    n = _n(1e6, scale)
    for gamma in (0.0, 1 / 3, 0.5):
        r = sampler_report(gamma, n, seed, moments=(2, 4))
        for m in (2, 4):
            e = r["moments"][m]["relative_error"]
            res.add(f"gamma={gamma:.4g} m={m} relative error", e, "<= 2%", abs(e) <= 0.02)
        if gamma == 0.0:
            res.add("gamma=0 Laplace variance", r["variance"], "within 1% of 1", abs(r["variance"] - 1) <= 0.01)
    return res


def criterion_8(seed: int = 8, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Generalized CLT, d = 1."""
    res = CriterionResult(8, "generalized CLT for lazy_1d, f_1")
    l1 = drv.lazy_1d()
    f1 = make_fp((1,))
    params = limit_params(l1)
    ns = [2**8, 2**10, 2**12, 2**14]
    ratios = [second_moment_ratio(l1, f1, n, params, sigma2=6.0) for n in ns]
    dev = [abs(r - 1) for r in ratios]
    res.add("exact second moment ratio at 2^14", ratios[-1], "within 15% of 1", dev[-1] <= 0.15)
    res.add("exact second moment ratios over 2^8..2^14", ratios, "|ratio - 1| decreasing",
            all(a > b for a, b in zip(dev, dev[1:])))
    Z = birkhoff_samples(l1, f1, ns, _n(1e5, scale), seed, workers)
    p0 = phi0(params)
    m3 = [float(np.mean((Z[:, i] / (math.sqrt(p0) * norm_A(params, n))) ** 3)) for i, n in enumerate(ns)]
    res.add("normalized third moment", m3, "|m3| decreasing", all(abs(a) > abs(b) for a, b in zip(m3, m3[1:])))
    nr = normalization_ratio(l1, 10**5, params)
    res.add("return_mass / (Phi(0) A_n^2) at n=1e5", nr, "within 5% of 1", abs(nr - 1) <= 0.05)
    return res


def criterion_9(seed: int = 9, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    """Spectral correctness."""
    res = CriterionResult(9, "spectral: aperiodicity, theta, local limit theorem")
    pm = decompose(drv.pm1_walk(), 16, fit=False)
    res.add("pm1 walk flagged periodic", (pm.aperiodic, pm.lattice.aperiodic), "both False",
            not pm.aperiodic and not pm.lattice.aperiodic)
    for name, dr in drv.fixtures().items():
        s = decompose(dr, 16, fit=False)
        res.add(f"{name} aperiodic", (s.aperiodic, s.lattice.aperiodic), "both True", s.aperiodic and s.lattice.aperiodic)
    mk = drv.markov_3state()
    theta = fit_stable_params(decompose(mk, 64, fit=False))[0].theta
    half = float(mk.asymptotic_covariance[0, 0]) / 2
    res.add("markov_3state theta vs sigma^2_GK(F)/2", (theta, half), "within 1%", abs(theta / half - 1) <= 0.01)
    l1 = drv.lazy_1d()
    lo = llt_check(l1, 100)
    hi = llt_check(l1, 10**4)
    res.add("llt scaled error n=1e4 vs n=1e2", (hi["max_scaled_error"], lo["max_scaled_error"]), "decreasing",
            hi["max_scaled_error"] < lo["max_scaled_error"])
    rel = abs(hi["p0"] / hi["phi0_over_an"] - 1)
    res.add("mu(S_n=0) vs Phi(0)/a_n at n=1e4", (hi["p0"], hi["phi0_over_an"]), "within 1%", rel <= 0.01)
    return res


def criterion_10(seed: int = 10, scale: float = 1.0, workers: int = 1) -> CriterionResult:
    res = CriterionResult(10, "simplex sum ratio")
    r2 = integrale_ratio(2, 2.0, 1, 10**5)
    res.add("q=2 alpha=2 d=1 at n=1e5", r2, "within 1% of pi/4", abs(r2 / (math.pi / 4) - 1) <= 0.01)
    r1 = integrale_ratio(1, 2.0, 1, 10**5)
    res.add("q=1", r1, "exactly 1", r1 == 1.0)
    return res


CRITERIA = {k: globals()[f"criterion_{k}"] for k in range(1, 11)}


def run_all(seed: int = 0, scale: float = 1.0, workers: int = 1, which=None) -> list:
    which = which or sorted(CRITERIA)
    return [CRITERIA[k](seed=seed + k, scale=scale, workers=workers) for k in which]


def paper_identities(seed: int = 0, scale: float = 1.0, workers: int = 1) -> list:
    """The exact identities: Kac, Spitzer, 2g - 2 and subset invariance."""
    return [criterion_1(seed + 1, scale, workers), criterion_2(seed + 2, scale, workers),
            criterion_4(seed + 4, scale, workers)]
