"""Monte Carlo estimators of relative information for Bayesian hypothesis tests.

A test loses evidence when part of the data it would ideally use is missing.
The estimators here quantify what fraction of the test information the
observed data retain, on the log-likelihood scale.  Two variance components
enter:

* the variance, across posterior draws, of the observed-data log likelihood
  (the evidence the test actually has), and
* for each draw ``theta0`` from the null-conditional posterior, the variance
  of the log ratio of conditional densities of the completed data under a
  posterior draw versus under ``theta0`` (the extra evidence the missing data
  would contribute).

``bi3`` pools the ratio variances across null draws before forming the
fraction; ``bi4`` averages the per-null-draw fractions.  Values near 1 mean
the observed data already carry almost all the information; small values mean
the missing part would add a lot.  Inputs are plain Monte Carlo draws; nothing
in this module knows about any particular model.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegenerateInformationError,
    InsufficientSamplesError,
    PluginNoiseWarning,
)
from .validation import as_float_vector, as_rng


@dataclass(frozen=True)
class ObservedLodSamples:
    """Observed-data log-likelihood values, one per posterior draw.

    Only differences between draws matter, so any additive constant (data
    normalisation, dropped terms) is irrelevant.  ``se`` optionally carries a
    per-value estimation standard error when the log likelihoods themselves
    are Monte Carlo estimates.
    """

    values: np.ndarray
    se: np.ndarray | None = None

    def __post_init__(self):
        values = as_float_vector(self.values, "values")
        object.__setattr__(self, "values", values)
        if self.se is not None:
            se = as_float_vector(self.se, "se")
            if se.shape != values.shape:
                raise ValueError("se must have the same length as values")
            if np.any(se < 0):
                raise ValueError("se entries must be non-negative")
            object.__setattr__(self, "se", se)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class ConditionalRatioSamples:
    """Log ratios of conditional completed-data densities for one null draw.

    ``values[m]`` is ``log p(missing_m | observed, theta_m) -
    log p(missing_m | observed, theta0)`` for the m-th joint posterior draw
    ``(theta_m, missing_m)`` and this object's fixed null draw ``theta0``.
    """

    null_draw_id: int | str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", as_float_vector(self.values, "values"))

    def __len__(self):
        return self.values.size


@dataclass(frozen=True, eq=False)
class RIResult:
    """Relative-information estimates plus their Monte Carlo uncertainty."""

    bi3: float
    bi4: float
    v_lod: float
    v_ratio_per_null: np.ndarray
    mc_se_bi3: float
    mc_se_bi4: float
    n_theta_draws: int
    n_null_draws: int
    n_mis_draws: int

    def __post_init__(self):
        for name in ("bi3", "bi4"):
            val = getattr(self, name)
            if not (0.0 <= val <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1], got {val}")
        if self.bi4 < self.bi3 - 1e-9:
            raise ValueError(
                f"bi4 ({self.bi4}) below bi3 ({self.bi3}); averaged fractions "
                "can never fall below the pooled fraction"
            )
        if self.v_lod < 0:
            raise ValueError("v_lod must be non-negative")
        v_r = np.asarray(self.v_ratio_per_null, dtype=float)
        if np.any(v_r < 0):
            raise ValueError("v_ratio_per_null entries must be non-negative")
        object.__setattr__(self, "v_ratio_per_null", v_r)
        for name in ("mc_se_bi3", "mc_se_bi4"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("n_theta_draws", "n_null_draws", "n_mis_draws"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")

    def to_dict(self):
        return {
            "bi3": self.bi3,
            "bi4": self.bi4,
            "v_lod": self.v_lod,
            "v_ratio_per_null": [float(v) for v in self.v_ratio_per_null],
            "mc_se_bi3": self.mc_se_bi3,
            "mc_se_bi4": self.mc_se_bi4,
            "n_theta_draws": self.n_theta_draws,
            "n_null_draws": self.n_null_draws,
            "n_mis_draws": self.n_mis_draws,
        }

    @classmethod
    def from_dict(cls, obj):
        return cls(
            bi3=float(obj["bi3"]),
            bi4=float(obj["bi4"]),
            v_lod=float(obj["v_lod"]),
            v_ratio_per_null=np.asarray(obj["v_ratio_per_null"], dtype=float),
            mc_se_bi3=float(obj["mc_se_bi3"]),
            mc_se_bi4=float(obj["mc_se_bi4"]),
            n_theta_draws=int(obj["n_theta_draws"]),
            n_null_draws=int(obj["n_null_draws"]),
            n_mis_draws=int(obj["n_mis_draws"]),
        )


def lod_variance(ell) -> float:
    """Sample variance of the observed-data log likelihood across draws.

    Shift invariant: adding a constant to every value leaves the result
    unchanged, so log likelihoods may be reported up to any normalisation.
    """
    values = ell.values if isinstance(ell, ObservedLodSamples) else as_float_vector(ell, "ell")
    if values.size < 2:
        raise InsufficientSamplesError(
            f"lod_variance needs at least 2 draws, got {values.size}"
        )
    return float(np.var(values, ddof=1))


def ratio_variance(ratios) -> tuple[float, float]:
    """Sample variance of conditional log density ratios, with its own mc se.

    The Monte Carlo standard error of the variance estimate uses the plug-in
    fourth-moment formula var(s^2) ~ (m4 - s^4 (n-3)/(n-1)) / n.
    """
    values = (
        ratios.values
        if isinstance(ratios, ConditionalRatioSamples)
        else as_float_vector(ratios, "ratios")
    )
    n = values.size
    if n < 2:
        raise InsufficientSamplesError(
            f"ratio_variance needs at least 2 draws, got {n}"
        )
    centered = values - values.mean()
    v = float(np.dot(centered, centered) / (n - 1))
    m4 = float(np.mean(centered**4))
    var_of_var = (m4 - v * v * (n - 3) / (n - 1)) / n
    mc_se = float(np.sqrt(max(var_of_var, 0.0)))
    return v, mc_se


def _check_variance_inputs(v_lod, v_ratios):
    v_lod = float(v_lod)
    if not np.isfinite(v_lod) or v_lod < 0:
        raise ValueError(f"v_lod must be finite and non-negative, got {v_lod}")
    v_ratios = as_float_vector(v_ratios, "v_ratios")
    if np.any(v_ratios < 0):
        raise ValueError("v_ratios entries must be non-negative")
    return v_lod, v_ratios


def bi3(v_lod, v_ratios) -> float:
    """Pooled relative information: v_lod over v_lod plus the mean ratio variance."""
    v_lod, v_ratios = _check_variance_inputs(v_lod, v_ratios)
    mean_ratio = float(v_ratios.mean())
    if v_lod == 0.0 and mean_ratio == 0.0:
        raise DegenerateInformationError(
            "observed and conditional likelihoods are both flat "
            "(v_lod = 0 and every ratio variance = 0); the relative "
            "information is undefined"
        )
    return v_lod / (v_lod + mean_ratio)


def bi4(v_lod, v_ratios) -> float:
    """Averaged relative information: mean over null draws of per-draw fractions.

    By convexity of x -> v/(v+x) this is always at least `bi3` on the same
    inputs, with equality exactly when all ratio variances agree.
    """
    v_lod, v_ratios = _check_variance_inputs(v_lod, v_ratios)
    if v_lod == 0.0:
        zero = np.nonzero(v_ratios == 0.0)[0]
        if zero.size:
            raise DegenerateInformationError(
                "observed and conditional likelihoods are both flat for null "
                f"draw index {zero[0]} (v_lod = 0 and v_ratios[{zero[0]}] = 0)"
            )
    return float(np.mean(v_lod / (v_lod + v_ratios)))


def _adjusted_v_lod(values, se, correct_plugin_noise):
    v = float(np.var(values, ddof=1))
    if correct_plugin_noise and se is not None:
        v = max(v - float(np.mean(se**2)), 0.0)
    return v


def ri_compute(
    ell,
    ratios,
    *,
    bootstrap_replicates=200,
    seed=0,
    correct_plugin_noise=False,
    noise_warning_fraction=0.1,
) -> RIResult:
    """Assemble both relative-information measures from raw Monte Carlo draws.

    Parameters
    ----------
    ell : ObservedLodSamples
        Observed-data log likelihood per posterior draw, optionally with
        per-value estimation standard errors.
    ratios : sequence of ConditionalRatioSamples
        One entry per null draw; all entries must have the same number of
        values (the joint posterior draws), and distinct ids.
    bootstrap_replicates : int
        Replicates for the nonparametric bootstrap behind ``mc_se_bi3`` and
        ``mc_se_bi4``.  Each replicate resamples the log-likelihood draws,
        the set of null draws, and each selected null draw's ratio values,
        all with replacement.  0 disables the bootstrap (se fields become 0).
    seed : int | Generator
        Bootstrap randomness; fixed seed gives bit-identical se fields.
    correct_plugin_noise : bool
        Subtract the mean squared per-value se from the log-likelihood
        variance (floored at zero) to undo plug-in noise inflation.
    noise_warning_fraction : float
        Warn when any per-value se exceeds this fraction of the sample
        standard deviation of the log-likelihood values.

    Raises
    ------
    DegenerateInformationError
        When v_lod and all (or, for the averaged measure, any) ratio
        variances are simultaneously zero.
    """
    if not isinstance(ell, ObservedLodSamples):
        ell = ObservedLodSamples(np.asarray(ell, dtype=float))
    ratios = list(ratios)
    if not ratios:
        raise ValueError("ratios must contain at least one null draw")
    ids = [r.null_draw_id for r in ratios]
    if len(set(ids)) != len(ids):
        raise ValueError("null_draw_id values must be distinct")
    n_mis = len(ratios[0])
    if any(len(r) != n_mis for r in ratios):
        raise ValueError("all ratio sample vectors must have the same length")

    if ell.values.size < 2:
        raise InsufficientSamplesError("need at least 2 log-likelihood draws")

    sd = float(np.std(ell.values, ddof=1))
    if ell.se is not None and sd > 0 and float(ell.se.max()) > noise_warning_fraction * sd:
        warnings.warn(
            "per-draw log-likelihood standard errors exceed "
            f"{noise_warning_fraction:.0%} of the spread of the values; the "
            "plug-in variance may be noise-inflated (consider more "
            "importance samples or correct_plugin_noise=True)",
            PluginNoiseWarning,
            stacklevel=2,
        )

    v_lod = _adjusted_v_lod(ell.values, ell.se, correct_plugin_noise)
    v_ratios = np.array([ratio_variance(r)[0] for r in ratios])

    zero = np.nonzero(v_ratios == 0.0)[0]
    if v_lod == 0.0 and zero.size:
        raise DegenerateInformationError(
            "observed and conditional likelihoods are both flat for null draw "
            f"{ratios[zero[0]].null_draw_id!r}"
        )

    b3 = bi3(v_lod, v_ratios)
    b4 = bi4(v_lod, v_ratios)
    mc3, mc4 = _bootstrap_se(
        ell, ratios, bootstrap_replicates, seed, correct_plugin_noise
    )
    return RIResult(
        bi3=b3,
        bi4=b4,
        v_lod=v_lod,
        v_ratio_per_null=v_ratios,
        mc_se_bi3=mc3,
        mc_se_bi4=mc4,
        n_theta_draws=ell.values.size,
        n_null_draws=len(ratios),
        n_mis_draws=n_mis,
    )


def _bootstrap_se(ell, ratios, replicates, seed, correct_plugin_noise):
    if replicates <= 0:
        return 0.0, 0.0
    rng = as_rng(seed)
    values = ell.values
    se = ell.se
    ratio_matrix = np.stack([r.values for r in ratios])  # (n_null, n_mis)
    n_e = values.size
    n_j, n_m = ratio_matrix.shape
    rows = np.arange(n_j)[:, None]
    reps3, reps4 = [], []
    for _ in range(replicates):
        e_idx = rng.integers(0, n_e, n_e)
        j_idx = rng.integers(0, n_j, n_j)
        m_idx = rng.integers(0, n_m, (n_j, n_m))
        v_lod_b = _adjusted_v_lod(
            values[e_idx], se[e_idx] if se is not None else None, correct_plugin_noise
        )
        resampled = ratio_matrix[j_idx][rows, m_idx]
        v_r_b = np.var(resampled, axis=1, ddof=1)
        # a replicate can collapse to 0/0 on tiny inputs; skip it rather than
        # invent a convention value for the ratio
        if v_lod_b == 0.0 and np.any(v_r_b == 0.0):
            continue
        reps3.append(v_lod_b / (v_lod_b + v_r_b.mean()))
        reps4.append(np.mean(v_lod_b / (v_lod_b + v_r_b)))
    if len(reps3) < 2:
        return 0.0, 0.0
    return float(np.std(reps3, ddof=1)), float(np.std(reps4, ddof=1))


_INPUT_KEYS = {"ell", "ell_se", "ratios", "bootstrap_replicates", "seed", "correct_plugin_noise"}


def compute_from_json(payload: dict) -> dict:
    """JSON-dict interface to :func:`ri_compute`.

    Input schema::

        {"ell": [...], "ell_se": [...],            # ell_se optional
         "ratios": [{"null_draw_id": ..., "values": [...]}, ...],
         "bootstrap_replicates": 200, "seed": 0,   # optional
         "correct_plugin_noise": false}            # optional

    Output schema::

        {"bi3": ..., "bi4": ..., "v_lod": ..., "v_ratio_per_null": [...],
         "mc_se_bi3": ..., "mc_se_bi4": ...}
    """
    if not isinstance(payload, dict):
        raise ValueError("payload must be a JSON object")
    unknown = set(payload) - _INPUT_KEYS
    if unknown:
        raise ValueError(f"unknown keys in payload: {sorted(unknown)}")
    for key in ("ell", "ratios"):
        if key not in payload:
            raise ValueError(f"payload is missing required key {key!r}")
    ell = ObservedLodSamples(
        np.asarray(payload["ell"], dtype=float),
        se=np.asarray(payload["ell_se"], dtype=float) if "ell_se" in payload else None,
    )
    ratio_objs = []
    for i, entry in enumerate(payload["ratios"]):
        extra = set(entry) - {"null_draw_id", "values"}
        if extra:
            raise ValueError(f"unknown keys in ratios[{i}]: {sorted(extra)}")
        ratio_objs.append(
            ConditionalRatioSamples(entry["null_draw_id"], np.asarray(entry["values"], dtype=float))
        )
    result = ri_compute(
        ell,
        ratio_objs,
        bootstrap_replicates=int(payload.get("bootstrap_replicates", 200)),
        seed=int(payload.get("seed", 0)),
        correct_plugin_noise=bool(payload.get("correct_plugin_noise", False)),
    )
    out = result.to_dict()
    return {
        "bi3": out["bi3"],
        "bi4": out["bi4"],
        "v_lod": out["v_lod"],
        "v_ratio_per_null": out["v_ratio_per_null"],
        "mc_se_bi3": out["mc_se_bi3"],
        "mc_se_bi4": out["mc_se_bi4"],
    }
