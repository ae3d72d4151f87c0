"""Run configuration: one strict JSON file with per-stage sections.

Unknown keys are rejected at every level so a typo cannot silently fall
back to a default.  The raw parsed object is kept verbatim for echoing
into reports.
"""

from __future__ import annotations

import copy
import json
import os
from dataclasses import dataclass

from .bernstein import BernsteinModel, BernsteinPrior
from .exceptions import ConfigError
from .mcmc import ChainConfig
from .sir import SirModel, SirPriors

_TOP_KEYS = {"model", "mcmc", "ri", "scenario", "seed", "data"}
_MCMC_KEYS = {"n_iterations", "burn_in", "thinning", "adapt", "target_acceptance", "initial_scales"}
_RI_KEYS = {
    "n_null_min",
    "n_null_max",
    "bootstrap_replicates",
    "is_tol",
    "is_initial_samples",
    "is_max_samples",
    "scenario_is_samples",
    "correct_plugin_noise",
}
_SIR_MODEL_KEYS = {
    "kind",
    "beta0",
    "beta1",
    "gamma0",
    "household_size",
    "n_households",
    "covariate_scheme",
    "priors",
}
_SIR_PRIOR_KEYS = {"beta0_rate", "gamma0_rate", "beta1_mean", "beta1_sd"}
_REG_MODEL_KEYS = {"kind", "slope", "sigma", "k", "prior", "sigma_prior_rate"}
_REG_PRIOR_KEYS = {"mean", "n_max", "tau1", "tau2"}
_SCENARIO_KEYS = {"name", "n_new", "template_z", "designs", "k", "new_points"}
_SCENARIO_NAMES = {"infection_times", "new_households", "sir_compare", "design"}

RI_DEFAULTS = {
    "n_null_min": 50,
    "n_null_max": 250,
    "bootstrap_replicates": 200,
    "is_tol": 0.15,
    "is_initial_samples": 512,
    "is_max_samples": 100000,
    "scenario_is_samples": 512,
    "correct_plugin_noise": False,
}
MCMC_DEFAULTS = {
    "n_iterations": 12000,
    "burn_in": 3000,
    "thinning": 6,
    "adapt": True,
    "target_acceptance": 0.3,
    "initial_scales": None,
}


def _reject_unknown(section, keys, allowed):
    extra = set(keys) - allowed
    if extra:
        raise ConfigError(
            f"{section}: unknown key(s) {sorted(extra)}; allowed: {sorted(allowed)}"
        )


def default_out_dir():
    """The --out fallback: $RELINFO_OUT if set, else the working directory."""
    return os.environ.get("RELINFO_OUT", ".")


@dataclass
class RunConfig:
    """Parsed and validated configuration plus the verbatim input echo."""

    raw: dict
    model: dict
    mcmc: dict
    ri: dict
    scenario: dict
    seed: int
    data: object  # path string, None (unset), or False (explicit prior-only)

    @classmethod
    def from_obj(cls, obj, base_dir="."):
        if not isinstance(obj, dict):
            raise ConfigError(f"config root must be an object, got {type(obj).__name__}")
        _reject_unknown("config", obj, _TOP_KEYS)

        model = obj.get("model")
        if not isinstance(model, dict) or "kind" not in model:
            raise ConfigError("config: 'model' must be an object with a 'kind'")
        kind = model["kind"]
        if kind == "sir":
            _reject_unknown("model", model, _SIR_MODEL_KEYS)
            _reject_unknown("model.priors", model.get("priors", {}), _SIR_PRIOR_KEYS)
        elif kind == "regression":
            _reject_unknown("model", model, _REG_MODEL_KEYS)
            _reject_unknown("model.prior", model.get("prior", {}), _REG_PRIOR_KEYS)
        else:
            raise ConfigError(f"model.kind must be 'sir' or 'regression', got {kind!r}")

        mcmc = dict(MCMC_DEFAULTS)
        _reject_unknown("mcmc", obj.get("mcmc", {}), _MCMC_KEYS)
        mcmc.update(obj.get("mcmc", {}))

        ri = dict(RI_DEFAULTS)
        _reject_unknown("ri", obj.get("ri", {}), _RI_KEYS)
        ri.update(obj.get("ri", {}))

        scenario = obj.get("scenario", {})
        _reject_unknown("scenario", scenario, _SCENARIO_KEYS)
        if scenario and scenario.get("name") not in _SCENARIO_NAMES:
            raise ConfigError(
                f"scenario.name must be one of {sorted(_SCENARIO_NAMES)}, "
                f"got {scenario.get('name')!r}"
            )

        seed = obj.get("seed", 0)
        if not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")

        data = obj.get("data")
        if data is True or (data is not None and not isinstance(data, (str, bool))):
            raise ConfigError("data must be a path string or null for prior-only")
        if isinstance(data, str):
            path = data if os.path.isabs(data) else os.path.join(base_dir, data)
            if not os.path.exists(path):
                raise ConfigError(f"data file {path!r} does not exist")
            data = path
        elif "data" in obj:
            data = False  # explicit null: prior-only fit

        return cls(
            raw=copy.deepcopy(obj),
            model=model,
            mcmc=mcmc,
            ri=ri,
            scenario=dict(scenario),
            seed=seed,
            data=data,
        )

    @classmethod
    def from_json(cls, path):
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
        return cls.from_obj(obj, base_dir=os.path.dirname(os.path.abspath(path)))

    # --- derived objects ----------------------------------------------------

    @property
    def kind(self):
        return self.model["kind"]

    def chain_config(self, seed=None):
        return ChainConfig(seed=self.seed if seed is None else seed, **self.mcmc)

    def build_model(self):
        if self.kind == "sir":
            priors = SirPriors(**self.model.get("priors", {}))
            return SirModel(
                priors=priors,
                is_tol=self.ri["is_tol"],
                is_initial=self.ri["is_initial_samples"],
                is_max=self.ri["is_max_samples"],
            )
        prior_keys = self.model.get("prior", {})
        prior = BernsteinPrior.poisson(
            mean=prior_keys.get("mean", 5.0),
            n_max=prior_keys.get("n_max", 20),
            tau1=prior_keys.get("tau1", -2.0),
            tau2=prior_keys.get("tau2", 2.0),
        )
        return BernsteinModel(
            prior=prior,
            sigma=self.model.get("sigma", 0.4),
            sigma_prior_rate=self.model.get("sigma_prior_rate"),
        )

    def generative_params(self):
        """The simulation settings for cmd_simulate, with study defaults."""
        m = self.model
        if self.kind == "sir":
            return {
                "beta0": m.get("beta0", 1.0),
                "beta1": m.get("beta1", -0.5),
                "gamma0": m.get("gamma0", 1.0),
                "household_size": m.get("household_size", 6),
                "n_households": m.get("n_households", 20),
                "covariate_scheme": m.get("covariate_scheme", "balanced"),
            }
        return {
            "slope": m.get("slope", 0.6),
            "sigma": m.get("sigma", 0.4),
            "k": m.get("k", 9),
        }

    def ri_kwargs(self, seed=None):
        """Keywords forwarded to ri_compute by every scenario."""
        return {
            "bootstrap_replicates": self.ri["bootstrap_replicates"],
            "seed": self.seed if seed is None else seed,
            "correct_plugin_noise": self.ri["correct_plugin_noise"],
        }
