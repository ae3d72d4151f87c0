"""Metropolis-within-Gibbs machinery over an abstract model contract.

The engine knows nothing about any concrete model.  A model supplies log
densities, an optional missing-data refresh kernel, and a list of update
blocks; the engine sweeps the blocks, runs one missing-data pass per
iteration, adapts proposal scales during burn-in, and collects thinned
post-burn-in draws with per-draw observed-data log likelihoods.

All functions are deterministic given the seed: randomness flows through
numpy Generators derived from a single SeedSequence, and multi-chain runs
give chain ``i`` the ``i``-th spawned child stream.
"""

from __future__ import annotations

import abc
import csv
import json
import math
import os
from dataclasses import dataclass, replace

import numpy as np

from .exceptions import (
    ChainInitializationError,
    DegenerateSeriesError,
    InsufficientNullDrawsError,
    InsufficientSamplesError,
)
from .validation import as_float_vector

TARGET_ACCEPTANCE = 0.3


@dataclass(frozen=True)
class ChainConfig:
    """Sampler settings; defaults suit the bundled desk-scale studies."""

    n_iterations: int = 50000
    burn_in: int = 10000
    thinning: int = 10
    adapt: bool = True
    target_acceptance: float = TARGET_ACCEPTANCE
    initial_scales: dict | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_iterations < 1:
            raise ValueError("n_iterations must be positive")
        if not (0 <= self.burn_in < self.n_iterations):
            raise ValueError("burn_in must satisfy 0 <= burn_in < n_iterations")
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")
        if not (0.0 < self.target_acceptance < 1.0):
            raise ValueError("target_acceptance must lie in (0, 1)")

    def n_retained(self):
        return (self.n_iterations - self.burn_in) // self.thinning

    def to_dict(self):
        return {
            "n_iterations": self.n_iterations,
            "burn_in": self.burn_in,
            "thinning": self.thinning,
            "adapt": self.adapt,
            "target_acceptance": self.target_acceptance,
            "initial_scales": self.initial_scales,
            "seed": self.seed,
        }


def reflect_interval(x, lower=None, upper=None):
    """Fold ``x`` back into [lower, upper] by boundary reflection.

    Reflection keeps a random-walk proposal symmetric on the interval, so no
    Hastings correction is needed.  The two-sided fold is closed-form (the
    reflected walk has period twice the width), so arbitrarily distant
    proposals cost the same as nearby ones.
    """
    if lower is not None and upper is not None:
        if not lower < upper:
            raise ValueError("lower must be strictly below upper")
        if lower <= x <= upper:
            return x
        period = 2.0 * (upper - lower)
        y = math.fmod(x - lower, period)
        if y < 0.0:
            y += period
        return lower + (period - y if 2.0 * y > period else y)
    if lower is not None and x < lower:
        return 2.0 * lower - x
    if upper is not None and x > upper:
        return 2.0 * upper - x
    return x


class Block:
    """One per-iteration update step; subclasses define how it proposes."""

    def __init__(self, name, initial_scale=0.5, uses_scale=True):
        self.name = name
        self.initial_scale = initial_scale
        self.uses_scale = uses_scale


class MetropolisBlock(Block):
    """A block whose proposal the engine accepts or rejects itself.

    ``propose`` returns ``(candidate, log_correction)`` where the correction
    absorbs both asymmetric-proposal Hastings terms and change-of-variable
    jacobians; the engine adds it to the log posterior ratio.
    """

    def propose(self, theta, y_ob, y_mis, scale, rng):
        raise NotImplementedError


class RandomWalkBlock(MetropolisBlock):
    """Scalar random walk on an identity or log transformed coordinate."""

    def __init__(
        self,
        name,
        getter,
        setter,
        transform="identity",
        initial_scale=0.5,
        lower=None,
        upper=None,
    ):
        super().__init__(name, initial_scale=initial_scale, uses_scale=True)
        if transform not in ("identity", "log"):
            raise ValueError(f"unknown transform {transform!r}")
        self.getter = getter
        self.setter = setter
        self.transform = transform
        self.lower = lower
        self.upper = upper

    def propose(self, theta, y_ob, y_mis, scale, rng):
        value = self.getter(theta)
        x = math.log(value) if self.transform == "log" else value
        x_new = reflect_interval(x + scale * rng.standard_normal(), self.lower, self.upper)
        if self.transform == "log":
            # sampling on the log scale: target picks up a jacobian e^x
            correction = x_new - x
            candidate = self.setter(theta, math.exp(x_new))
        else:
            correction = 0.0
            candidate = self.setter(theta, x_new)
        return candidate, correction


class KernelBlock(Block):
    """A self-contained transition kernel (e.g. a variable-dimension move).

    ``update`` returns ``(new_theta, accepted, scale_used)``; ``scale_used``
    tells the engine whether this particular move consumed the tunable scale,
    so adaptation only reacts to moves the scale actually influenced.
    """

    def __init__(self, name, update, initial_scale=0.5, uses_scale=True):
        super().__init__(name, initial_scale=initial_scale, uses_scale=uses_scale)
        self._update = update

    def update(self, theta, y_ob, y_mis, scale, rng):
        return self._update(theta, y_ob, y_mis, scale, rng)


class ModelContract(abc.ABC):
    """What a model must provide to be driven by :func:`run_chain`.

    ``theta`` and ``y_mis`` are opaque to the engine; only the model reads
    them.  Methods must be pure given their arguments (the engine may call
    them in any order), and ``sample_missing_update`` must return a fresh
    object so retained snapshots stay immutable.
    """

    kind = "model"

    @abc.abstractmethod
    def log_prior(self, theta) -> float: ...

    @abc.abstractmethod
    def complete_loglik(self, theta, y_ob, y_mis) -> float: ...

    @abc.abstractmethod
    def observed_loglik(self, theta, y_ob, rng) -> tuple[float, float]:
        """Return (estimate, standard error); exact models return se 0."""

    @abc.abstractmethod
    def sample_missing_update(self, theta, y_ob, y_mis, rng):
        """One refresh pass over the missing data; identity when none exists."""

    @abc.abstractmethod
    def missing_conditional_logdensity(self, theta, y_ob, y_mis, rng) -> tuple[float, float]:
        """log p(y_mis | y_ob, theta) with its estimation se (0 when exact)."""

    @abc.abstractmethod
    def null_predicate(self, theta) -> bool: ...

    @abc.abstractmethod
    def parameter_blocks(self) -> list:
        ...

    @abc.abstractmethod
    def initial_state(self, y_ob, rng):
        """Return (theta, y_mis) with finite prior and complete log likelihood."""

    def null_constrained_variant(self):
        """A copy of the model whose chain never leaves the null region."""
        raise NotImplementedError(f"{type(self).__name__} has no constrained variant")

    # --- persistence and summary hooks -------------------------------------

    def param_names(self, y_ob) -> list:
        raise NotImplementedError

    def param_values(self, theta, y_ob) -> list:
        raise NotImplementedError

    def theta_from_values(self, values, y_ob):
        raise NotImplementedError

    def missing_names(self, y_ob) -> list:
        return []

    def missing_values(self, y_mis, y_ob) -> list:
        return []

    def missing_from_values(self, values, y_ob):
        return None

    def scalar_summaries(self, theta, y_ob) -> dict:
        return dict(zip(self.param_names(y_ob), self.param_values(theta, y_ob)))


@dataclass(frozen=True)
class ParameterDraw:
    theta: object
    y_mis_id: int | None
    ell_ob: float
    ell_ob_se: float
    log_prior: float
    iteration: int


@dataclass
class DrawSet:
    """Retained posterior draws plus chain diagnostics.

    ``params`` holds one float column per persisted parameter name;
    ``missing`` flattens each draw's missing-data snapshot into a row (or is
    None when the model has no missing data).  ``save``/``load`` round-trip
    the draws through a CSV (one row per draw, column order as in
    ``column_names``) with a JSON metadata sidecar.
    """

    draws: list
    y_mis_store: list
    params: dict
    missing: np.ndarray | None
    acceptance_rates: dict
    ess: dict
    final_scales: dict
    scale_history: dict
    config: ChainConfig
    chain_index: int
    model_kind: str
    column_names: list

    def __len__(self):
        return len(self.draws)

    @property
    def ell_ob(self):
        return np.array([d.ell_ob for d in self.draws])

    @property
    def ell_ob_se(self):
        return np.array([d.ell_ob_se for d in self.draws])

    @property
    def thetas(self):
        return [d.theta for d in self.draws]

    def y_mis_of(self, draw):
        return self.y_mis_store[draw.y_mis_id] if draw.y_mis_id is not None else None

    def save(self, out_dir, stem="draws"):
        """Write <stem>.csv and <stem>_meta.json under out_dir; return paths."""
        os.makedirs(out_dir, exist_ok=True)
        csv_path = os.path.join(out_dir, f"{stem}.csv")
        meta_path = os.path.join(out_dir, f"{stem}_meta.json")
        n_fixed = 4  # iteration, log_prior, ell_ob, ell_ob_se
        param_names = self.column_names[n_fixed : n_fixed + len(self.params)]
        mis_names = self.column_names[n_fixed + len(self.params) :]
        with open(csv_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.column_names)
            for i, d in enumerate(self.draws):
                row = [d.iteration, repr(d.log_prior), repr(d.ell_ob), repr(d.ell_ob_se)]
                row += [_csv_cell(self.params[name][i]) for name in param_names]
                if mis_names:
                    row += [_csv_cell(v) for v in self.missing[i]]
                writer.writerow(row)
        meta = {
            "model_kind": self.model_kind,
            "chain_index": self.chain_index,
            "config": self.config.to_dict(),
            "columns": self.column_names,
            "n_draws": len(self.draws),
            "acceptance_rates": self.acceptance_rates,
            "ess": {k: (None if not np.isfinite(v) else v) for k, v in self.ess.items()},
            "final_scales": self.final_scales,
        }
        with open(meta_path, "w") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return csv_path, meta_path

    @classmethod
    def load(cls, out_dir, model, y_ob, stem="draws"):
        csv_path = os.path.join(out_dir, f"{stem}.csv")
        meta_path = os.path.join(out_dir, f"{stem}_meta.json")
        with open(meta_path) as fh:
            meta = json.load(fh)
        if meta["model_kind"] != model.kind:
            raise ValueError(
                f"draw set was produced by a {meta['model_kind']!r} model, "
                f"got a {model.kind!r} model"
            )
        param_names = model.param_names(y_ob)
        mis_names = model.missing_names(y_ob)
        expected = ["iteration", "log_prior", "ell_ob", "ell_ob_se"] + param_names + mis_names
        if meta["columns"] != expected:
            raise ValueError("draw set columns do not match the model and data")
        draws, y_store = [], []
        params = {name: [] for name in param_names}
        missing_rows = []
        with open(csv_path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != expected:
                raise ValueError("CSV header does not match metadata columns")
            for row in reader:
                iteration = int(row[0])
                log_prior, ell, se = (float(v) for v in row[1:4])
                values = [_parse_cell(v) for v in row[4 : 4 + len(param_names)]]
                for name, v in zip(param_names, values):
                    params[name].append(v)
                theta = model.theta_from_values(values, y_ob)
                if mis_names:
                    mis_vals = [float(v) for v in row[4 + len(param_names) :]]
                    missing_rows.append(mis_vals)
                    y_mis = model.missing_from_values(mis_vals, y_ob)
                    y_store.append(y_mis)
                    mis_id = len(y_store) - 1
                else:
                    mis_id = None
                draws.append(ParameterDraw(theta, mis_id, ell, se, log_prior, iteration))
        return cls(
            draws=draws,
            y_mis_store=y_store,
            params={k: np.array(v) for k, v in params.items()},
            missing=np.array(missing_rows) if mis_names else None,
            acceptance_rates=meta["acceptance_rates"],
            ess={k: (float("nan") if v is None else v) for k, v in meta["ess"].items()},
            final_scales=meta["final_scales"],
            scale_history={},
            config=ChainConfig(**meta["config"]),
            chain_index=meta["chain_index"],
            model_kind=meta["model_kind"],
            column_names=meta["columns"],
        )


def _csv_cell(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def _parse_cell(text):
    return float("nan") if text == "" else float(text)


def _accept(rng, log_ratio):
    if math.isnan(log_ratio):
        return False
    if log_ratio >= 0:
        return True
    return math.log(rng.random()) < log_ratio


def run_chain(model, y_ob, config, seed_seq=None, chain_index=0) -> DrawSet:
    """Run one chain and return its retained draws.

    Sweep per iteration: every parameter block in order, then one missing-data
    refresh.  Proposal scales adapt by Robbins-Monro on the log scale during
    burn-in only (step size (t+1)^-0.6 toward the target acceptance rate) and
    are frozen afterwards.  Retained draws are the post-burn-in states at the
    end of each thinning window, each with an observed-data log-likelihood
    estimate computed from its own spawned substream.

    Non-finite proposal evaluations are rejections, not errors; only a
    non-finite *initial* state raises ChainInitializationError.
    """
    root = seed_seq if seed_seq is not None else np.random.SeedSequence(config.seed)
    chain_ss, obs_ss, init_ss = root.spawn(3)
    rng = np.random.default_rng(chain_ss)

    theta, y_mis = model.initial_state(y_ob, np.random.default_rng(init_ss))
    lp = model.log_prior(theta)
    lc = model.complete_loglik(theta, y_ob, y_mis)
    if not (math.isfinite(lp) and math.isfinite(lc)):
        raise ChainInitializationError(
            f"initial state has log_prior={lp} and complete_loglik={lc}"
        )

    blocks = model.parameter_blocks()
    scales = {}
    for block in blocks:
        override = (config.initial_scales or {}).get(block.name)
        scales[block.name] = float(override) if override is not None else block.initial_scale

    log_target = lp + lc
    attempts = {b.name: [0, 0] for b in blocks}   # burn-in, post
    accepts = {b.name: [0, 0] for b in blocks}
    scale_history = {b.name: np.empty(config.n_iterations) for b in blocks}

    draws, y_store = [], []
    for it in range(config.n_iterations):
        in_burn = it < config.burn_in
        phase = 0 if in_burn else 1
        gamma = (it + 1) ** -0.6
        for block in blocks:
            scale = scales[block.name]
            if isinstance(block, KernelBlock):
                theta_new, accepted, scale_used = block.update(theta, y_ob, y_mis, scale, rng)
                if accepted:
                    theta = theta_new
                    log_target = None
            else:
                candidate, correction = block.propose(theta, y_ob, y_mis, scale, rng)
                if log_target is None:
                    log_target = _log_target(model, theta, y_ob, y_mis)
                cand_target = _log_target(model, candidate, y_ob, y_mis)
                accepted = _accept(rng, cand_target - log_target + correction)
                if accepted:
                    theta = candidate
                    log_target = cand_target
                scale_used = True
            attempts[block.name][phase] += 1
            accepts[block.name][phase] += accepted
            if config.adapt and in_burn and block.uses_scale and scale_used:
                adjust = gamma * ((1.0 if accepted else 0.0) - config.target_acceptance)
                # clamp so saturated acceptance (e.g. a flat target) cannot
                # run the scale off to overflow
                scales[block.name] = min(1e10, max(1e-10, scale * math.exp(adjust)))
            scale_history[block.name][it] = scales[block.name]

        new_mis = model.sample_missing_update(theta, y_ob, y_mis, rng)
        if new_mis is not y_mis:
            y_mis = new_mis
            log_target = None

        if not in_burn and (it - config.burn_in + 1) % config.thinning == 0:
            draw_rng = np.random.default_rng(obs_ss.spawn(1)[0])
            ell, se = model.observed_loglik(theta, y_ob, draw_rng)
            if y_mis is not None:
                y_store.append(y_mis)
                mis_id = len(y_store) - 1
            else:
                mis_id = None
            draws.append(
                ParameterDraw(theta, mis_id, ell, se, model.log_prior(theta), it)
            )

    param_names = model.param_names(y_ob)
    params = {name: np.empty(len(draws)) for name in param_names}
    for i, d in enumerate(draws):
        for name, v in zip(param_names, model.param_values(d.theta, y_ob)):
            params[name][i] = v if v is not None else np.nan

    mis_names = model.missing_names(y_ob)
    if mis_names:
        missing = np.empty((len(draws), len(mis_names)))
        for i, d in enumerate(draws):
            missing[i] = model.missing_values(y_store[d.y_mis_id], y_ob)
    else:
        missing = None

    ess = {}
    for name in _summary_names(model, draws, y_ob):
        series = np.array([model.scalar_summaries(d.theta, y_ob)[name] for d in draws])
        try:
            ess[name] = effective_sample_size(series)
        except (DegenerateSeriesError, InsufficientSamplesError):
            ess[name] = float("nan")

    post_rates = {
        name: (accepts[name][1] / attempts[name][1]) if attempts[name][1] else 0.0
        for name in attempts
    }
    return DrawSet(
        draws=draws,
        y_mis_store=y_store,
        params=params,
        missing=missing,
        acceptance_rates=post_rates,
        ess=ess,
        final_scales=dict(scales),
        scale_history=scale_history,
        config=config,
        chain_index=chain_index,
        model_kind=model.kind,
        column_names=["iteration", "log_prior", "ell_ob", "ell_ob_se"] + param_names + mis_names,
    )


def _summary_names(model, draws, y_ob):
    if not draws:
        return []
    return list(model.scalar_summaries(draws[0].theta, y_ob))


def _log_target(model, theta, y_ob, y_mis):
    lp = model.log_prior(theta)
    if not math.isfinite(lp):
        return -math.inf
    ll = model.complete_loglik(theta, y_ob, y_mis)
    total = lp + ll
    return total if math.isfinite(total) else -math.inf


def run_chains(model, y_ob, config, n_chains=1) -> list:
    """Run ``n_chains`` independent chains; chain i uses spawned stream i."""
    if n_chains < 1:
        raise ValueError("n_chains must be positive")
    children = np.random.SeedSequence(config.seed).spawn(n_chains)
    return [
        run_chain(model, y_ob, config, seed_seq=child, chain_index=i)
        for i, child in enumerate(children)
    ]


def effective_sample_size(series) -> float:
    """Initial-positive-sequence autocorrelation estimate of the ESS.

    Sums autocorrelations in consecutive pairs until the first non-positive
    pair, the standard cut-off for reversible chains.  Result is clipped to
    (0, len(series)].
    """
    x = as_float_vector(series, "series")
    n = x.size
    if n < 10:
        raise InsufficientSamplesError(f"effective_sample_size needs >= 10 values, got {n}")
    if np.all(x == x[0]):
        raise DegenerateSeriesError("series is constant; ESS is undefined")
    xc = x - x.mean()
    width = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, width)
    acov = np.fft.irfft(f * np.conj(f), width)[:n].real / n
    rho = acov / acov[0]
    tau = -1.0
    j = 0
    while 2 * j + 1 < n:
        pair = rho[2 * j] + rho[2 * j + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
        j += 1
    if tau <= 0.0:
        return float(n)
    return float(min(n / tau, n))


@dataclass
class NullDraws:
    """Posterior draws restricted to the null region of the parameter space."""

    draws: list
    indices: np.ndarray
    posterior_probability: float
    n_total: int
    source: str = "filtered"

    def __len__(self):
        return len(self.draws)

    @property
    def ell_ob(self):
        return np.array([d.ell_ob for d in self.draws])

    def subsample(self, n_max):
        """Deterministic evenly spaced subset of at most n_max draws."""
        if n_max is None or len(self.draws) <= n_max:
            return self
        pick = np.unique(np.linspace(0, len(self.draws) - 1, n_max).round().astype(int))
        return NullDraws(
            draws=[self.draws[i] for i in pick],
            indices=self.indices[pick],
            posterior_probability=self.posterior_probability,
            n_total=self.n_total,
            source=self.source,
        )


def filter_null(drawset, model, y_ob=None, n_min=50) -> NullDraws:
    """Retain the draws satisfying the model's null predicate.

    Raises InsufficientNullDrawsError when fewer than ``n_min`` survive: with
    little posterior mass on the null, conditioning by filtering is hopeless
    and a dedicated constrained rerun (proposals reflected into the null
    region; see the model's ``null_constrained_variant``) is the economical
    way to draw from the null-conditional posterior.
    """
    keep = [i for i, d in enumerate(drawset.draws) if model.null_predicate(d.theta)]
    n_total = len(drawset.draws)
    prob = len(keep) / n_total if n_total else 0.0
    if len(keep) < n_min:
        raise InsufficientNullDrawsError(
            f"only {len(keep)} of {n_total} draws fall in the null region "
            f"(posterior probability ~ {prob:.2g}); sampling the "
            "null-conditional posterior by filtering is too expensive here. "
            "Rerun with a constrained chain (proposals reflected into the "
            "null region) and use its draws instead."
        )
    return NullDraws(
        draws=[drawset.draws[i] for i in keep],
        indices=np.array(keep),
        posterior_probability=prob,
        n_total=n_total,
    )


def null_draws_with_fallback(model, y_ob, drawset, n_min=50, fallback_config=None, seed_seq=None):
    """Filter for null draws; fall back to a constrained rerun when too few.

    The fallback runs ``model.null_constrained_variant()`` under
    ``fallback_config`` (defaults to the drawset's own config) on a fresh
    stream and reports the unconstrained fraction as the posterior
    probability estimate.
    """
    try:
        return filter_null(drawset, model, y_ob, n_min=n_min)
    except InsufficientNullDrawsError:
        n_in = sum(1 for d in drawset.draws if model.null_predicate(d.theta))
        prob = n_in / len(drawset.draws) if len(drawset.draws) else 0.0
        constrained = model.null_constrained_variant()
        config = fallback_config if fallback_config is not None else drawset.config
        ss = seed_seq if seed_seq is not None else np.random.SeedSequence([config.seed, 0x5EED])
        cset = run_chain(constrained, y_ob, config, seed_seq=ss)
        return NullDraws(
            draws=list(cset.draws),
            indices=np.arange(len(cset.draws)),
            posterior_probability=prob,
            n_total=len(drawset.draws),
            source="constrained",
        )


def merge_drawsets(drawsets) -> DrawSet:
    """Concatenate retained draws from several chains of the same model."""
    drawsets = list(drawsets)
    if not drawsets:
        raise ValueError("no draw sets to merge")
    if len(drawsets) == 1:
        return drawsets[0]
    first = drawsets[0]
    if any(d.model_kind != first.model_kind or d.column_names != first.column_names for d in drawsets):
        raise ValueError("draw sets come from different models")
    draws, y_store = [], []
    for ds in drawsets:
        offset = len(y_store)
        y_store.extend(ds.y_mis_store)
        for d in ds.draws:
            mis_id = d.y_mis_id + offset if d.y_mis_id is not None else None
            draws.append(replace(d, y_mis_id=mis_id))
    params = {
        name: np.concatenate([ds.params[name] for ds in drawsets]) for name in first.params
    }
    missing = (
        np.concatenate([ds.missing for ds in drawsets])
        if first.missing is not None
        else None
    )
    return DrawSet(
        draws=draws,
        y_mis_store=y_store,
        params=params,
        missing=missing,
        acceptance_rates=first.acceptance_rates,
        ess={},
        final_scales=first.final_scales,
        scale_history={},
        config=first.config,
        chain_index=-1,
        model_kind=first.model_kind,
        column_names=first.column_names,
    )
