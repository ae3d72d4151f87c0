"""Command-line pipeline: simulate, fit, ri, report.

Each subcommand reads one JSON config and works inside one output directory
using conventional file names (households.json / regression.csv for data,
draws_chain<i>.csv for chains, report.json / report.svg / ratios_<label>.csv
for results), so a study is a short sequence of shell commands and every
number in the report can be traced back to a file on disk.  Runs are fully
seeded: repeating a command with the same config and seed rewrites every
output byte for byte, except the report's wall-clock field.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import time

import numpy as np

from .bernstein import RegressionData, design_points, monotone_odds, ri_design
from .config import RunConfig, default_out_dir
from .exceptions import ConfigError, InsufficientNullDrawsError, RelinfoError
from .mcmc import DrawSet, merge_drawsets, null_draws_with_fallback, run_chains
from .report import Report, ScenarioResult, render_plot, write_ratio_csv
from .sir import (
    SirData,
    SirParams,
    covariate_vector,
    households_to_json,
    ri_scenario_infection_times,
    ri_scenario_new_households,
    simulate_households,
)

__all__ = ["main", "EXIT_OK", "EXIT_ERROR", "EXIT_NO_NULLS"]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_NULLS = 3

# stream tags keeping the pipeline stages on disjoint substreams of one seed
_TAG_SIMULATE = 0x51
_TAG_NULL_FALLBACK = 0x5EED
_TAG_NEW_HOUSEHOLDS = 0xA1
_TAG_DESIGN = 3

_SIR_SCENARIOS = {"infection_times", "new_households", "sir_compare"}

DATA_FILES = {"sir": "households.json", "regression": "regression.csv"}
TRUTH_FILES = {"sir": "households_truth.json", "regression": "regression_truth.json"}


def _parser():
    p = argparse.ArgumentParser(
        prog="relinfo",
        description=(
            "Quantify how much of the evidence about a hypothesis is carried "
            "by data you have not observed yet."
        ),
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument(
            "--config", required=config_required, help="path to the JSON run configuration"
        )
        sp.add_argument("--seed", type=int, default=None, help="override the config seed")
        sp.add_argument(
            "--out",
            default=None,
            help="output directory (default: $RELINFO_OUT, else the working directory)",
        )
        sp.add_argument(
            "--scenario", default=None, help="override the config scenario name"
        )
        sp.add_argument(
            "--chains", type=int, default=1, help="number of independent chains (fit)"
        )

    common(sub.add_parser("simulate", help="draw a synthetic dataset plus truth sidecar"))
    fit = sub.add_parser("fit", help="run the posterior chain(s) and persist the draws")
    common(fit)
    fit.add_argument(
        "--ri", action="store_true", help="compute relative information after fitting"
    )
    common(sub.add_parser("ri", help="compute relative information from persisted draws"))
    common(
        sub.add_parser("report", help="re-render plot and ratio CSVs from report.json"),
        config_required=False,
    )
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    out = args.out if args.out is not None else default_out_dir()
    try:
        os.makedirs(out, exist_ok=True)
        if args.command == "report":
            return cmd_report(out)
        cfg = RunConfig.from_json(args.config)
        seed = cfg.seed if args.seed is None else args.seed
        if args.command == "simulate":
            return cmd_simulate(cfg, seed, out)
        if args.command == "fit":
            code = cmd_fit(cfg, seed, out, args.chains)
            if code != EXIT_OK or not args.ri:
                return code
        return cmd_ri(cfg, seed, out, scenario_override=args.scenario)
    except InsufficientNullDrawsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_NULLS
    except (RelinfoError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg, seed, out):
    gen = cfg.generative_params()
    rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_SIMULATE]))
    data_path = os.path.join(out, DATA_FILES[cfg.kind])
    truth_path = os.path.join(out, TRUTH_FILES[cfg.kind])
    if cfg.kind == "sir":
        params = SirParams(gen["beta0"], gen["beta1"], gen["gamma0"])
        records = simulate_households(
            params, gen["n_households"], gen["household_size"], gen["covariate_scheme"], rng
        )
        households_to_json([r.observed_view() for r in records], data_path)
        truth = {
            "kind": "sir",
            "seed": seed,
            "params": {"beta0": params.beta0, "beta1": params.beta1, "gamma0": params.gamma0},
            "households": [r.to_obj() for r in records],
        }
    else:
        x = np.linspace(0.0, 1.0, gen["k"] + 1)
        f = gen["slope"] * x
        y = f + gen["sigma"] * rng.standard_normal(x.size)
        RegressionData(x, y).to_csv(data_path)
        truth = {
            "kind": "regression",
            "seed": seed,
            "params": {"slope": gen["slope"], "sigma": gen["sigma"], "k": gen["k"]},
            "f_values": [float(v) for v in f],
        }
    with open(truth_path, "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {data_path}")
    print(f"wrote {truth_path}")
    return EXIT_OK


def cmd_fit(cfg, seed, out, n_chains):
    model = cfg.build_model()
    y_ob = _resolve_data(cfg, out)
    drawsets = run_chains(model, y_ob, cfg.chain_config(seed=seed), n_chains=n_chains)
    for ds in drawsets:
        csv_path, _ = ds.save(out, stem=f"draws_chain{ds.chain_index}")
        acc = ", ".join(f"{k}={v:.2f}" for k, v in sorted(ds.acceptance_rates.items()))
        ess = min((v for v in ds.ess.values() if np.isfinite(v)), default=float("nan"))
        print(
            f"chain {ds.chain_index}: {len(ds.draws)} draws -> {csv_path} "
            f"(acceptance {acc}; min ESS {ess:.0f})"
        )
    return EXIT_OK


def cmd_ri(cfg, seed, out, scenario_override=None):
    t0 = time.perf_counter()
    model = cfg.build_model()
    y_ob = _resolve_data(cfg, out)
    drawsets = _load_drawsets(out, model, y_ob)
    merged = merge_drawsets(drawsets)

    n_min = cfg.ri["n_null_min"]
    nulls = null_draws_with_fallback(
        model,
        y_ob,
        merged,
        n_min=n_min,
        fallback_config=cfg.chain_config(seed=seed),
        seed_seq=np.random.SeedSequence([seed, _TAG_NULL_FALLBACK]),
    )
    if len(nulls) < n_min:
        raise InsufficientNullDrawsError(
            f"the constrained rerun retained only {len(nulls)} null draws, below "
            f"ri.n_null_min = {n_min}; raise mcmc.n_iterations or lower the floor"
        )
    nulls = nulls.subsample(cfg.ri["n_null_max"])
    null_ids = [int(i) for i in nulls.indices]

    name = scenario_override or cfg.scenario.get("name")
    if name is None:
        name = "sir_compare" if cfg.kind == "sir" else "design"
    if cfg.kind == "sir":
        scenarios = _sir_scenarios(cfg, seed, name, merged, nulls, null_ids, y_ob)
    else:
        scenarios = _design_scenarios(cfg, seed, name, model, merged, nulls, null_ids)

    diag = {
        "n_chains": len(drawsets),
        "n_draws": len(merged.draws),
        "acceptance_rates": {f"chain{ds.chain_index}": ds.acceptance_rates for ds in drawsets},
        "ess": {f"chain{ds.chain_index}": ds.ess for ds in drawsets},
        "null_draws": {
            "source": nulls.source,
            "n_used": len(nulls),
            "n_total": nulls.n_total,
            "posterior_probability": nulls.posterior_probability,
        },
    }
    if cfg.kind == "sir":
        diag["posterior_null_probability"] = nulls.posterior_probability
    else:
        odds = monotone_odds(merged, model.prior)
        diag["monotone_odds"] = {
            "posterior_prob": odds.posterior_prob,
            "prior_prob": odds.prior_prob,
            "ratio": odds.ratio,
        }

    report = Report(
        config_echo=cfg.raw,
        seed=seed,
        model_kind=cfg.kind,
        scenarios=scenarios,
        preferred=Report.choose_preferred(scenarios),
        diagnostics=_jsonable(diag),
        wall_clock_seconds=time.perf_counter() - t0,
    )
    report_path = os.path.join(out, "report.json")
    report.save(report_path)
    _emit_outputs(report, out)
    _print_summary(report, report_path)
    return EXIT_OK


def cmd_report(out):
    report_path = os.path.join(out, "report.json")
    if not os.path.exists(report_path):
        raise ConfigError(f"no report at {report_path}; run ri first")
    report = Report.load(report_path)
    _emit_outputs(report, out)
    _print_summary(report, report_path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _resolve_data(cfg, out):
    """The dataset named by the config: a path, prior-only, or the convention."""
    if cfg.data is False:
        return SirData([]) if cfg.kind == "sir" else None
    if isinstance(cfg.data, str):
        path = cfg.data
    else:
        path = os.path.join(out, DATA_FILES[cfg.kind])
        if not os.path.exists(path):
            raise ConfigError(
                f"no dataset at {path}; run simulate first or point config 'data' at a file"
            )
    if cfg.kind == "sir":
        return SirData.from_json(path)
    return RegressionData.from_csv(path)


def _load_drawsets(out, model, y_ob):
    stems = []
    for entry in os.listdir(out):
        m = re.fullmatch(r"draws_chain(\d+)\.csv", entry)
        if m:
            stems.append((int(m.group(1)), entry[:-4]))
    if not stems:
        raise ConfigError(f"no draws_chain*.csv in {out}; run fit first")
    return [DrawSet.load(out, model, y_ob, stem=stem) for _, stem in sorted(stems)]


def _sir_scenarios(cfg, seed, name, merged, nulls, null_ids, y_ob):
    if name not in _SIR_SCENARIOS:
        raise ConfigError(f"scenario {name!r} does not apply to a sir model")
    kwargs = cfg.ri_kwargs(seed=seed)
    scen = cfg.scenario
    out = []
    if name in ("infection_times", "sir_compare"):
        res = ri_scenario_infection_times(merged, nulls, y_ob, **kwargs)
        out.append(
            ScenarioResult(
                "infection_times",
                res,
                {"null_draw_ids": null_ids, "n_latent": int(y_ob.n_latent)},
            )
        )
    if name in ("new_households", "sir_compare"):
        n_new = int(scen.get("n_new", 4))
        template = scen.get("template_z")
        if template is None:
            template = covariate_vector(cfg.generative_params()["household_size"], "balanced")
        template = np.asarray(template, dtype=float)
        res = ri_scenario_new_households(
            merged,
            nulls,
            n_new,
            template,
            np.random.SeedSequence([seed, _TAG_NEW_HOUSEHOLDS]),
            n_is_samples=cfg.ri["scenario_is_samples"],
            **kwargs,
        )
        out.append(
            ScenarioResult(
                "new_households",
                res,
                {
                    "null_draw_ids": null_ids,
                    "n_new": n_new,
                    "template_z": [float(z) for z in template],
                },
            )
        )
    return out


def _design_scenarios(cfg, seed, name, model, merged, nulls, null_ids):
    if name != "design":
        raise ConfigError(f"scenario {name!r} does not apply to a regression model")
    kwargs = cfg.ri_kwargs(seed=seed)
    scen = cfg.scenario
    k = int(scen.get("k", cfg.generative_params()["k"]))
    entries = scen.get("designs")
    if entries is None and scen.get("new_points") is not None:
        entries = [scen["new_points"]]
    if entries is None:
        entries = ["replicate_k", "partition_k", "duplicate_2k", "partition_2k"]
    sigma = model.sigma
    if "sigma" in merged.params:
        sigma = float(np.mean(merged.params["sigma"]))
    out = []
    for i, entry in enumerate(entries):
        if isinstance(entry, str):
            label, points = entry, design_points(entry, k=k)
        else:
            label, points = f"custom_{i}", np.asarray(entry, dtype=float)
        rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_DESIGN, i]))
        res = ri_design(merged, nulls, points, sigma, rng, **kwargs)
        out.append(
            ScenarioResult(
                label,
                res,
                {
                    "null_draw_ids": null_ids,
                    "new_points": [float(v) for v in points],
                    "sigma": sigma,
                },
            )
        )
    return out


def _emit_outputs(report, out):
    render_plot(report, os.path.join(out, "report.svg"))
    for s in report.scenarios:
        ids = s.extras.get("null_draw_ids", range(len(s.result.v_ratio_per_null)))
        write_ratio_csv(os.path.join(out, f"ratios_{s.label}.csv"), ids, s.result.v_ratio_per_null)


def _print_summary(report, report_path):
    for s in report.scenarios:
        r = s.result
        print(
            f"{s.label}: bi3={r.bi3:.4f} (se {r.mc_se_bi3:.4f}) "
            f"bi4={r.bi4:.4f} (se {r.mc_se_bi4:.4f})"
        )
    print(f"preferred: {report.preferred}")
    print(f"wrote {report_path}")


def _jsonable(x):
    """Recursively coerce to plain JSON types so reports round-trip exactly."""
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x)
    if isinstance(x, (np.integer, int)) and not isinstance(x, bool):
        return int(x)
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x]
    return x


if __name__ == "__main__":
    raise SystemExit(main())
