"""End-to-end acceptance battery for the two bundled studies.

Each check prints one [ACCEPTANCE] line and asserts exactly what that line
reports; the lines are replayed after the run summary so a full run shows
all nine verdicts at a glance.  The two batteries repeat the complete
pipeline (simulate, fit, null draws, relative information) on five fresh
seeds each, at a scale small enough for a laptop but large enough that the
orderings under test are driven by the data rather than by Monte Carlo
noise.
"""

import json
import math
import re
import time
import warnings

import numpy as np
import pytest
from conftest import record_acceptance
from numpy.random import SeedSequence, default_rng
from scipy import integrate

from relinfo.bernstein import (
    BernsteinModel,
    BernsteinPrior,
    RegressionData,
    design_points,
    eval_poly,
    prior_prob_monotone,
    ri_design,
)
from relinfo.cli import EXIT_OK, main
from relinfo.exceptions import (
    DegenerateInformationError,
    PluginNoiseWarning,
    ToleranceNotMetWarning,
)
from relinfo.measures import (
    ConditionalRatioSamples,
    ObservedLodSamples,
    lod_variance,
    ri_compute,
)
from relinfo.mcmc import ChainConfig, null_draws_with_fallback, run_chain
from relinfo.sir import (
    HouseholdRecord,
    Member,
    SirData,
    SirModel,
    SirParams,
    SirPriors,
    covariate_vector,
    observed_loglik_is,
    posterior_null_probability,
    ri_scenario_infection_times,
    ri_scenario_new_households,
    simulate_households,
)

SIR_SEEDS = (101, 102, 103, 104, 105)
DESIGN_SEEDS = (201, 202, 203, 204, 205)
RUN_TIME_LIMIT = 600.0

# every RIResult computed anywhere in this battery, for the algebra check
RESULTS = []


def _check(criterion, label, ok, detail):
    line = f"[ACCEPTANCE] criterion {criterion} ({label}): {'PASS' if ok else 'FAIL'} ({detail})"
    print(line)
    record_acceptance(criterion, line)
    assert ok, line


def _house(*members):
    return HouseholdRecord([Member(*m) for m in members])


# ---------------------------------------------------------------------------
# battery fixtures
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def sir_battery():
    """Five seeded household studies at the default generative settings.

    Each run simulates 20 six-member households with a balanced covariate,
    fits the unconstrained chain to the observed view (latent infection
    times hidden), draws the null-conditional parameters, and evaluates
    both missing-data scenarios.
    """
    runs = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", PluginNoiseWarning)
        warnings.simplefilter("ignore", ToleranceNotMetWarning)
        for seed in SIR_SEEDS:
            start = time.perf_counter()
            rng = default_rng(SeedSequence([seed, 0x51]))
            complete = simulate_households(SirParams(1.0, -0.5, 1.0), 20, 6, "balanced", rng)
            data = SirData([record.observed_view() for record in complete])
            model = SirModel(is_tol=0.25, is_initial=512, is_max=50000)
            config = ChainConfig(n_iterations=8000, burn_in=2000, thinning=6, seed=seed)
            ds = run_chain(model, data, config)
            nulls = null_draws_with_fallback(
                model,
                data,
                ds,
                n_min=50,
                fallback_config=config,
                seed_seq=SeedSequence([seed, 0x5EED]),
            ).subsample(150)
            r_inf = ri_scenario_infection_times(ds, nulls, data, bootstrap_replicates=0)
            r_new = ri_scenario_new_households(
                ds,
                nulls,
                4,
                covariate_vector(6, "balanced"),
                SeedSequence([seed, 0xA1]),
                n_is_samples=384,
                bootstrap_replicates=0,
            )
            RESULTS.extend([r_inf, r_new])
            runs.append(
                {
                    "seed": seed,
                    "bi3_infection_times": r_inf.bi3,
                    "bi3_new_households": r_new.bi3,
                    "p_null": posterior_null_probability(ds),
                    "seconds": time.perf_counter() - start,
                }
            )
    return runs


@pytest.fixture(scope="module")
def design_battery():
    """Five seeded design studies: linear truth, all four candidate designs."""
    runs = []
    keep = None
    for seed in DESIGN_SEEDS:
        gen = default_rng(SeedSequence([seed, 0x51]))
        x = np.linspace(0.0, 1.0, 10)
        y = 0.6 * x + 0.4 * gen.standard_normal(x.size)
        data = RegressionData(x=x, y=y)
        model = BernsteinModel(prior=BernsteinPrior.poisson(5.0, n_max=20), sigma=0.4)
        config = ChainConfig(n_iterations=20000, burn_in=5000, thinning=10, seed=seed)
        ds = run_chain(model, data, config)
        nulls = null_draws_with_fallback(
            model,
            data,
            ds,
            n_min=50,
            fallback_config=config,
            seed_seq=SeedSequence([seed, 0x5EED]),
        ).subsample(150)
        values = {"seed": seed}
        for i, name in enumerate(("replicate_k", "partition_k", "duplicate_2k", "partition_2k")):
            res = ri_design(
                ds,
                nulls,
                design_points(name, 9),
                0.4,
                default_rng(SeedSequence([seed, 3, i])),
                bootstrap_replicates=0,
            )
            RESULTS.append(res)
            values[name] = res.bi3
        runs.append(values)
        keep = (ds, nulls)
    return {"runs": runs, "chain": keep}


@pytest.fixture(scope="module")
def degenerate_results(design_battery):
    # empty design: nothing is missing, so the observed data carry everything
    ds, nulls = design_battery["chain"]
    empty = ri_design(ds, nulls, [], 0.4, default_rng(0), bootstrap_replicates=0)

    # single-member households: the index infection time is observed by
    # convention, so there are no latent times and again nothing is missing
    removals = (0.7, 1.1, 0.4, 2.0, 0.9, 1.5)
    data = SirData([_house((1, i % 2, 0.0, r)) for i, r in enumerate(removals)])
    model = SirModel()
    config = ChainConfig(n_iterations=3000, burn_in=500, thinning=5, seed=8)
    chain = run_chain(model, data, config)
    nulls1 = null_draws_with_fallback(
        model, data, chain, n_min=30, fallback_config=config,
        seed_seq=SeedSequence([8, 0x5EED]),
    ).subsample(40)
    single = ri_scenario_infection_times(chain, nulls1, data, bootstrap_replicates=0)

    RESULTS.extend([empty, single])
    return {"empty": empty, "single": single}


# ---------------------------------------------------------------------------
# criteria 1 and 2: household study
# ---------------------------------------------------------------------------


def test_household_scenario_ordering(sir_battery):
    held = sum(r["bi3_infection_times"] > r["bi3_new_households"] for r in sir_battery)
    slowest = max(r["seconds"] for r in sir_battery)
    pairs = ", ".join(
        f"seed {r['seed']}: {r['bi3_infection_times']:.3f} vs {r['bi3_new_households']:.3f}"
        for r in sir_battery
    )
    _check(
        1,
        "household scenario ordering",
        held >= 4 and slowest <= RUN_TIME_LIMIT,
        f"BI3 infection-times > BI3 new-households in {held}/5 runs, need >= 4 "
        f"[{pairs}]; slowest run {slowest:.0f}s, limit {RUN_TIME_LIMIT:.0f}s",
    )


def test_household_test_direction(sir_battery):
    held = sum(r["p_null"] > 0.5 for r in sir_battery)
    values = ", ".join(f"{r['p_null']:.3f}" for r in sir_battery)
    _check(
        2,
        "household test direction",
        held >= 4,
        f"posterior P(covariate effect < 0) > 0.5 in {held}/5 runs, need >= 4 [{values}]",
    )


# ---------------------------------------------------------------------------
# criterion 3: design orderings
# ---------------------------------------------------------------------------

DESIGN_ORDERINGS = (
    ("replicate_k", "partition_k"),
    ("duplicate_2k", "replicate_k"),
    ("partition_2k", "partition_k"),
    ("duplicate_2k", "partition_2k"),
)


def test_design_orderings(design_battery):
    held = sum(
        all(run[a] < run[b] for a, b in DESIGN_ORDERINGS) for run in design_battery["runs"]
    )
    triples = "; ".join(
        "seed {seed}: rep {replicate_k:.3f}, part {partition_k:.3f}, "
        "dup2 {duplicate_2k:.3f}, part2 {partition_2k:.3f}".format(**run)
        for run in design_battery["runs"]
    )
    _check(
        3,
        "design point orderings",
        held >= 4,
        f"all four pairwise BI3 orderings held in {held}/5 runs, need >= 4 [{triples}]",
    )


# ---------------------------------------------------------------------------
# criterion 4: household likelihood against quadrature
# ---------------------------------------------------------------------------


def _pair_density(tau, p, r1, r2, z2):
    # joint density of the second member's infection at tau with removals at
    # r1 and r2, for a two-member household whose index is removed at r1
    if not 0.0 < tau < min(r1, r2):
        return 0.0
    h = p.beta0 * math.exp(p.beta1 * z2)
    log_f = math.log(h) + 2.0 * math.log(p.gamma0) - h * tau - p.gamma0 * (r1 + (r2 - tau))
    return math.exp(log_f)


def _quad_loglik(p, r1, r2, z2):
    value, err = integrate.quad(_pair_density, 0.0, min(r1, r2), args=(p, r1, r2, z2))
    assert err < 1e-10 * value
    return math.log(value)


def test_household_likelihood_oracles():
    pair = _house((1, 0, 0.0, 1.0), (2, 1, None, 2.0))
    prior_rng = default_rng(4099)
    rng = default_rng(40)
    worst = 0.0
    for _ in range(10):
        p = SirPriors().sample(prior_rng)
        oracle = _quad_loglik(p, 1.0, 2.0, 1)
        estimate, _ = observed_loglik_is(p, pair, 100000, rng)
        worst = max(worst, abs(estimate - oracle) / abs(oracle))

    # a single-member household has a closed-form observed likelihood
    single = _house((1, 0, 0.0, 1.3))
    value, se = observed_loglik_is(SirParams(0.8, 0.3, 1.7), single, 50, rng)
    exact = math.log(1.7) - 1.7 * 1.3
    gap = abs(value - exact)
    _check(
        4,
        "household likelihood oracles",
        worst <= 0.02 and gap <= 1e-10 and se == 0.0,
        f"worst relative error vs quadrature {worst:.4f} over 10 prior draws, limit 0.02; "
        f"single-member value off by {gap:.2e}, limit 1e-10",
    )


# ---------------------------------------------------------------------------
# criterion 5: monotone prior and fixed-order posterior oracles
# ---------------------------------------------------------------------------


def test_monotone_prior_oracles():
    prior = BernsteinPrior.poisson()
    analytic = prior_prob_monotone(prior)
    rng = default_rng(777)
    total = 10**6
    orders = rng.choice(np.arange(1, prior.n_max + 1), size=total, p=prior.order_pmf)
    hits = 0
    for n in range(1, prior.n_max + 1):
        count = int((orders == n).sum())
        if count:
            u = rng.uniform(prior.tau1, prior.tau2, size=(count, n + 1))
            hits += int(np.all(np.diff(u, axis=1) >= 0.0, axis=1).sum())
    estimate = hits / total
    mc_se = math.sqrt(estimate * (1.0 - estimate) / total)
    mc_ok = abs(analytic - estimate) <= 3 * mc_se

    # order fixed at 1: the posterior mean of F(0.5) reduces to a ratio of
    # two-dimensional integrals over the coefficient box
    x1, y1, sigma = 0.3, 0.5, 0.4
    model = BernsteinModel(prior=BernsteinPrior.poisson(5.0, n_max=1), sigma=sigma)
    data = RegressionData([x1], [y1])
    ds = run_chain(model, data, ChainConfig(n_iterations=30000, burn_in=5000, thinning=10, seed=2121))

    def weight(b1, b0):
        resid = y1 - (b0 * (1 - x1) + b1 * x1)
        return math.exp(-(resid**2) / (2 * sigma**2))

    den, _ = integrate.dblquad(weight, -2, 2, -2, 2, epsabs=1e-10)
    num, _ = integrate.dblquad(
        lambda b1, b0: 0.5 * (b0 + b1) * weight(b1, b0), -2, 2, -2, 2, epsabs=1e-10
    )
    oracle = num / den
    f_half = np.array([eval_poly(d.theta, 0.5) for d in ds.draws])
    se = f_half.std(ddof=1) / math.sqrt(ds.ess["f_half"])
    quad_gap = abs(f_half.mean() - oracle)
    _check(
        5,
        "monotone prior oracles",
        mc_ok and quad_gap <= 3 * se,
        f"analytic monotone mass {analytic:.6f} vs Monte Carlo {estimate:.6f} "
        f"(3 se = {3 * mc_se:.6f}); posterior mean F(0.5) off oracle by {quad_gap:.5f} "
        f"(3 se = {3 * se:.5f})",
    )


# ---------------------------------------------------------------------------
# criterion 6: measure algebra across the whole battery
# ---------------------------------------------------------------------------


def test_measure_algebra(sir_battery, design_battery, degenerate_results):
    violations = sum(1 for r in RESULTS if not (r.bi4 >= r.bi3 - 1e-12))

    # dyadic values and shifts add exactly, so invariance must hold to the bit
    ell = np.array([0.5, 1.25, -3.75, 2.0, 0.0, -0.125, 6.5])
    base = lod_variance(ell)
    shifts = (4.0, -16.0, 1024.0, 0.03125)
    shift_ok = all(lod_variance(ell + c) == base for c in shifts)
    _check(
        6,
        "measure algebra",
        violations == 0 and shift_ok and len(RESULTS) >= 30,
        f"BI4 >= BI3 on all {len(RESULTS)} computed results, {violations} violations; "
        f"variance shift exactness on {len(shifts)} dyadic shifts: {shift_ok}",
    )


# ---------------------------------------------------------------------------
# criterion 7: prior recovery for both samplers
# ---------------------------------------------------------------------------


def test_sampler_prior_recovery():
    # zero-data household chain: marginals must match the prior moments
    ds = run_chain(
        SirModel(), SirData([]), ChainConfig(n_iterations=12000, burn_in=2000, thinning=5, seed=1907)
    )
    moment_gaps = []
    moments_ok = True
    for name, mean in (("beta0", 1.0), ("beta1", 0.0), ("gamma0", 1.0)):
        series = ds.params[name]
        se = series.std(ddof=1) / math.sqrt(ds.ess[name])
        gap = abs(series.mean() - mean)
        moment_gaps.append(f"{name} off {gap:.3f} (3 se = {3 * se:.3f})")
        moments_ok = moments_ok and gap <= 3 * se

    # zero-data variable-order chain: visit frequencies must match the pmf
    prior = BernsteinPrior.poisson(4.0, n_max=10)
    rj = run_chain(
        BernsteinModel(prior=prior, sigma=0.4),
        None,
        ChainConfig(n_iterations=210000, burn_in=10000, thinning=20, seed=1912),
    )
    n_series = rj.params["n"]
    ess = rj.ess["n"]
    worst_z = 0.0
    for n in range(1, prior.n_max + 1):
        p = prior.pmf(n)
        se = math.sqrt(p * (1.0 - p) / ess)
        worst_z = max(worst_z, abs(np.mean(n_series == n) - p) / se)
    _check(
        7,
        "sampler prior recovery",
        moments_ok and worst_z <= 3.0,
        "; ".join(moment_gaps) + f"; worst order-frequency z-score {worst_z:.2f}, limit 3",
    )


# ---------------------------------------------------------------------------
# criterion 8: degenerate and trivial cases
# ---------------------------------------------------------------------------


def test_degenerate_cases(degenerate_results):
    empty = degenerate_results["empty"]
    single = degenerate_results["single"]
    empty_ok = empty.bi3 == 1.0 and empty.bi4 == 1.0
    single_ok = single.bi3 == 1.0 and single.bi4 == 1.0
    try:
        ri_compute(
            ObservedLodSamples(np.zeros(8)),
            [ConditionalRatioSamples(0, np.zeros(8))],
            bootstrap_replicates=0,
        )
        flat_raises = False
    except DegenerateInformationError:
        flat_raises = True
    _check(
        8,
        "degenerate cases",
        empty_ok and single_ok and flat_raises,
        f"empty design BI3 = {empty.bi3}, single-member BI3 = {single.bi3}, both must be "
        f"exactly 1.0; flat 0/0 input raised: {flat_raises}",
    )


# ---------------------------------------------------------------------------
# criterion 9: pipeline reproducibility
# ---------------------------------------------------------------------------

CLI_CFG = {
    "model": {
        "kind": "regression",
        "slope": 0.6,
        "sigma": 0.4,
        "k": 9,
        "prior": {"mean": 4.0, "n_max": 10},
    },
    "mcmc": {"n_iterations": 4000, "burn_in": 1000, "thinning": 5},
    "ri": {"n_null_min": 30, "n_null_max": 60, "bootstrap_replicates": 50},
    "scenario": {"name": "design", "designs": ["replicate_k", "partition_2k"]},
    "seed": 41,
}

WALL_CLOCK = re.compile(rb'"wall_clock_seconds": [^,\n]+')


def test_pipeline_reproducibility(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps(CLI_CFG))
    dirs = (tmp_path / "first", tmp_path / "second")
    codes = []
    for out in dirs:
        for args in (
            ["simulate", "--config", str(cfg), "--out", str(out)],
            ["fit", "--config", str(cfg), "--out", str(out), "--ri"],
            ["report", "--out", str(out)],
        ):
            codes.append(main(args))
    if any(code != EXIT_OK for code in codes):
        _check(9, "pipeline reproducibility", False, f"exit codes {codes}, expected all 0")
        return
    names = sorted(p.name for p in dirs[0].iterdir())
    same_listing = sorted(p.name for p in dirs[1].iterdir()) == names
    mismatched = []
    for name in names:
        a = (dirs[0] / name).read_bytes()
        b = (dirs[1] / name).read_bytes()
        if name == "report.json":
            a = WALL_CLOCK.sub(b'"wall_clock_seconds": 0', a)
            b = WALL_CLOCK.sub(b'"wall_clock_seconds": 0', b)
        if a != b:
            mismatched.append(name)
    _check(
        9,
        "pipeline reproducibility",
        same_listing and not mismatched,
        f"{len(names)} output files byte-identical across independent directories"
        + (f"; mismatches: {mismatched}" if mismatched else " (report compared net of wall clock)"),
    )
