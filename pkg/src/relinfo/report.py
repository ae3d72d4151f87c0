"""Run reports: scenario results bundled with the context that produced them.

A :class:`Report` is the durable artifact of an analysis run.  It echoes the
configuration, records every scenario's relative-information result, and names
the preferred scenario (the one whose missing data would help most).  Reports
serialize to JSON losslessly: floats round-trip exactly and NaN diagnostics
are preserved, so rerunning a seeded analysis reproduces the file byte for
byte apart from the wall-clock field.
"""

from __future__ import annotations

import dataclasses
import json

import numpy as np

from .measures import RIResult

__all__ = [
    "ScenarioResult",
    "Report",
    "write_ratio_csv",
    "render_plot",
]


@dataclasses.dataclass(frozen=True)
class ScenarioResult:
    """One scenario's relative-information result plus traceability extras.

    ``extras`` holds scenario-specific context such as the null-draw ids the
    per-null variances refer to, design point coordinates, or the number of
    simulated households.  Values must be JSON-representable.
    """

    label: str
    result: RIResult
    extras: dict = dataclasses.field(default_factory=dict)

    def to_obj(self):
        res = dataclasses.asdict(self.result)
        res["v_ratio_per_null"] = [float(v) for v in self.result.v_ratio_per_null]
        return {"label": self.label, "result": res, "extras": self.extras}

    @classmethod
    def from_obj(cls, obj):
        res = dict(obj["result"])
        res["v_ratio_per_null"] = np.asarray(res["v_ratio_per_null"], dtype=float)
        return cls(
            label=obj["label"],
            result=RIResult(**res),
            extras=dict(obj.get("extras", {})),
        )


@dataclasses.dataclass
class Report:
    """Full record of an analysis run.

    ``preferred`` names the scenario with the smallest pooled fraction of
    observed information (smallest ``bi3``): collecting that scenario's
    missing data closes the largest share of the information gap.
    """

    config_echo: dict
    seed: int
    model_kind: str
    scenarios: list
    preferred: str | None
    diagnostics: dict
    wall_clock_seconds: float

    @staticmethod
    def choose_preferred(scenarios):
        """Label of the scenario whose missing data matter most, or None."""
        candidates = [s for s in scenarios if np.isfinite(s.result.bi3)]
        if not candidates:
            return None
        return min(candidates, key=lambda s: s.result.bi3).label

    def to_obj(self):
        return {
            "config_echo": self.config_echo,
            "seed": self.seed,
            "model_kind": self.model_kind,
            "scenarios": [s.to_obj() for s in self.scenarios],
            "preferred": self.preferred,
            "diagnostics": self.diagnostics,
            "wall_clock_seconds": self.wall_clock_seconds,
        }

    @classmethod
    def from_obj(cls, obj):
        return cls(
            config_echo=obj["config_echo"],
            seed=obj["seed"],
            model_kind=obj["model_kind"],
            scenarios=[ScenarioResult.from_obj(s) for s in obj["scenarios"]],
            preferred=obj["preferred"],
            diagnostics=obj["diagnostics"],
            wall_clock_seconds=obj["wall_clock_seconds"],
        )

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_obj(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_obj(json.load(fh))


def write_ratio_csv(path, null_ids, v_ratios):
    """Write per-null-draw ratio variances as a two-column CSV."""
    if len(null_ids) != len(v_ratios):
        raise ValueError("null_ids and v_ratios must have equal length")
    with open(path, "w") as fh:
        fh.write("null_draw_id,v_ratio\n")
        for i, v in zip(null_ids, v_ratios):
            fh.write(f"{int(i)},{float(v)!r}\n")


def render_plot(report, path):
    """Render the report's scenario measures as a grouped bar chart (SVG).

    Output is deterministic: the Agg backend, a fixed hash salt, and a
    suppressed date field keep repeated renders byte-identical.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "relinfo"

    labels = [s.label for s in report.scenarios]
    bi3 = np.array([s.result.bi3 for s in report.scenarios], dtype=float)
    bi4 = np.array([s.result.bi4 for s in report.scenarios], dtype=float)
    se3 = np.array([s.result.mc_se_bi3 for s in report.scenarios], dtype=float)
    se4 = np.array([s.result.mc_se_bi4 for s in report.scenarios], dtype=float)

    fig, ax = plt.subplots(figsize=(max(4.0, 1.6 * max(1, len(labels))), 3.6))
    pos = np.arange(len(labels), dtype=float)
    width = 0.38
    if len(labels):
        ax.bar(pos - width / 2, bi3, width, yerr=se3, capsize=3,
               label="pooled (BI3)", color="#3465a4")
        ax.bar(pos + width / 2, bi4, width, yerr=se4, capsize=3,
               label="averaged (BI4)", color="#f57900")
    ax.set_xticks(pos)
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("fraction of observed information")
    title = f"{report.model_kind}: relative information by scenario"
    if report.preferred is not None:
        title += f" (preferred: {report.preferred})"
    ax.set_title(title, fontsize=10)
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
