"""Experiment orchestration: configs, staged pipeline, persistence.

An experiment is described by a plain JSON-able dictionary (schema below),
resolved from up to three layers with rising precedence: preset defaults,
then a config file, then individual overrides.  ``run_experiment`` drives
the build -> simulate -> estimate -> verify pipeline, persisting estimate
tables, region tables, verdicts and a run manifest under
``output_dir/<run_id>``.  The run id is a content hash of the resolved
config, so re-running the same experiment lands in the same directory and
reproduces every persisted numeric byte for byte.

Config schema (all sections JSON primitives)::

    {
      "name": "...",                       # optional label
      "domain":   {"dimension", "grid_size", "mode_cutoff"},
      "operator": {"kind": "laplacian", "shift": 0.0}
                  | {"kind": "varcoef", "name": "<operator preset>"}
                  | {"kind": "diagonal", "eigenvalues": [...]},
      "noise":    {"theta", "truncation"},
      "g":        {"kind": "identity"}
                  | {"kind": "preset", "name", "m", "q"}
                  | {"kind": "scalar", "value", "m", "q"}
                  | {"kind": "table", "values", "m", "q"},
      "plan":     {"seed" (required), "alpha", "T", "steps", "replicas",
                   "time_stride", "space_count", "scheme"},
      "query":    {"theorem", "d", "q", ...} | null,
      "sweep":    {"alpha": [...], "slack": 0.03} | null,
      "estimator": {"temporal_mode", "times", "point_index"},
      "output_dir": "runs",
      "persist_trajectories": false,
      "note": "..."
    }
"""

import copy
import hashlib
import json
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .convolve import RecordSpec, SimulationPlan, simulate
from .noise import GProcess, g_preset, make_cameron_martin, validate_noise_hypotheses
from .presets import get_preset, list_presets, operator_preset
from .regularity import (
    RegularityQuery,
    estimate_spatial_exponent,
    estimate_temporal_exponent,
    exponent_budget,
    gamma_ceiling,
    region_boundary,
    select_sigma_delta,
    verify_region,
)
from .spectral import (
    SpectralDomain,
    build_laplacian_system,
    build_variable_coefficient_system,
    diagonal_system,
)
from .trajio import export_trajectories_csv, load_trajectories, save_trajectories

__all__ = [
    "ExperimentConfig",
    "RunManifest",
    "StageError",
    "HypothesisError",
    "resolve_config",
    "run_experiment",
    "estimates_from_run",
    "export_plotdata",
    "region_csv",
    "list_presets",
    "get_preset",
]

_TOP_KEYS = {
    "name", "description", "domain", "operator", "noise", "g", "plan",
    "query", "sweep", "estimator", "output_dir", "persist_trajectories",
    "note",
}
_PLAN_DEFAULTS = {
    "alpha": 2.0, "T": 1.0, "steps": 4096, "replicas": 8,
    "time_stride": 1, "space_count": 64, "scheme": "auto",
}


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


class HypothesisError(RuntimeError):
    """The configured noise violates the hypotheses the query relies on."""


def _fmt(value) -> str:
    return format(float(value), ".17g")


def _deep_merge(base: dict, top: dict) -> dict:
    out = dict(base)
    for key, val in top.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_override(text: str):
    if "=" not in text:
        raise ValueError(f"override {text!r} is not of the form key.path=value")
    path, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw  # bare strings stay strings
    return path.split("."), value


def resolve_config(preset: Optional[str] = None,
                   config_file=None,
                   overrides=None) -> dict:
    """Layer preset defaults, a JSON config file, and overrides.

    Precedence grows left to right: overrides beat the file, the file
    beats the preset.  ``overrides`` is a list of ``key.path=value``
    strings with JSON-parsed values.
    """
    merged: dict = {}
    if preset is not None:
        merged = get_preset(preset)
    if config_file is not None:
        with open(config_file, "r", encoding="utf-8") as fh:
            loaded = json.load(fh)
        if "preset" in loaded:
            base = get_preset(loaded.pop("preset"))
            loaded = _deep_merge(base, loaded)
        merged = _deep_merge(merged, loaded)
    for text in overrides or ():
        path, value = _parse_override(text)
        node = merged
        for key in path[:-1]:
            node = node.setdefault(key, {})
            if not isinstance(node, dict):
                raise ValueError(f"cannot descend into {key!r} in {text!r}")
        node[path[-1]] = value
    return merged


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, immutable experiment description."""

    domain: dict
    noise: dict
    plan: dict
    operator: dict = field(default_factory=lambda: {"kind": "laplacian"})
    g: dict = field(default_factory=lambda: {"kind": "identity"})
    query: Optional[dict] = None
    sweep: Optional[dict] = None
    estimator: dict = field(default_factory=dict)
    output_dir: str = "runs"
    persist_trajectories: bool = False
    note: str = ""
    name: str = "custom"

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for section in ("domain", "noise", "plan"):
            if section not in raw or not isinstance(raw[section], dict):
                raise ValueError(f"config needs a {section!r} section")
        plan = dict(_PLAN_DEFAULTS, **raw["plan"])
        if "seed" not in plan:
            raise ValueError("plan.seed is required; no silent entropy")
        return cls(
            domain=dict(raw["domain"]),
            noise=dict(raw["noise"]),
            plan=plan,
            operator=dict(raw.get("operator") or {"kind": "laplacian"}),
            g=dict(raw.get("g") or {"kind": "identity"}),
            query=dict(raw["query"]) if raw.get("query") else None,
            sweep=dict(raw["sweep"]) if raw.get("sweep") else None,
            estimator=dict(raw.get("estimator") or {}),
            output_dir=str(raw.get("output_dir", "runs")),
            persist_trajectories=bool(raw.get("persist_trajectories", False)),
            note=str(raw.get("note", "")),
            name=str(raw.get("name", "custom")),
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "domain": self.domain,
            "operator": self.operator,
            "noise": self.noise,
            "g": self.g,
            "plan": self.plan,
            "query": self.query,
            "sweep": self.sweep,
            "estimator": self.estimator,
            "output_dir": self.output_dir,
            "persist_trajectories": self.persist_trajectories,
            "note": self.note,
        }

    @property
    def run_id(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True,
                           separators=(",", ":"))
        digest = hashlib.sha1(canon.encode("utf-8")).hexdigest()[:10]
        return f"{self.name}-{digest}"


@dataclass
class RunManifest:
    """Everything needed to reproduce and audit one experiment run."""

    run_id: str
    config: dict
    versions: dict
    derived: dict = field(default_factory=dict)
    stages: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    verdict: Optional[dict] = None
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config": self.config,
            "versions": self.versions,
            "derived": self.derived,
            "stages": self.stages,
            "timings": self.timings,
            "outputs": self.outputs,
            "verdict": self.verdict,
            "note": self.note,
        }


def _versions() -> dict:
    from . import __version__

    return {"hspde": __version__, "numpy": np.__version__}


def _query_params(query: RegularityQuery) -> str:
    parts = [f"d={query.d}", f"q={query.q}"]
    if query.p is not None:
        parts.append(f"p={query.p}")
    if query.theorem == "fractional":
        parts.append(f"alpha={query.alpha}")
    if query.theta is not None:
        parts.append(f"theta={query.theta}")
    if query.m is not None:
        parts.append(f"m={query.m}")
    return ";".join(parts)


def region_csv(query: RegularityQuery, n_points: int = 33) -> str:
    """Boundary polyline as plot-ready CSV text."""
    rows = region_boundary(query, n_points=n_points)
    params = _query_params(query)
    lines = ["beta,gamma_max,theorem,params"]
    for beta, gamma in rows:
        lines.append(f"{_fmt(beta)},{_fmt(gamma)},{query.theorem},{params}")
    return "\n".join(lines) + "\n"


def _build_system(config: ExperimentConfig):
    op = config.operator
    kind = op.get("kind", "laplacian")
    if kind == "diagonal":
        system = diagonal_system(np.asarray(op["eigenvalues"], dtype=float))
        return system.domain, system
    domain = SpectralDomain(**config.domain)
    if kind == "laplacian":
        return domain, build_laplacian_system(domain,
                                              shift=float(op.get("shift", 0.0)))
    if kind == "varcoef":
        return domain, build_variable_coefficient_system(
            domain, operator_preset(op["name"]))
    raise ValueError(f"unknown operator kind {kind!r}")


def _build_g(config: ExperimentConfig) -> GProcess:
    g = config.g
    kind = g.get("kind", "identity")
    if kind == "identity":
        return GProcess.identity()
    if kind == "preset":
        return g_preset(g["name"], float(g["m"]), float(g["q"]))
    if kind == "scalar":
        return GProcess.multiplication(float(g["value"]), m=float(g["m"]),
                                       q=float(g["q"]))
    if kind == "table":
        return GProcess.from_table(np.asarray(g["values"], dtype=float),
                                   m=float(g["m"]), q=float(g["q"]))
    raise ValueError(f"unknown g kind {kind!r}")


def _build_query(config: ExperimentConfig) -> Optional[RegularityQuery]:
    if config.query is None:
        return None
    return RegularityQuery(**config.query)


def _derived_p(query: RegularityQuery) -> Optional[float]:
    if query.theorem != "colored":
        return None
    inv = 0.5 - float(query.theta) / query.d + 1.0 / float(query.m)
    return 1.0 / inv if inv > 0 else None


def _derived_block(system, query) -> dict:
    out = {"effective_shift": float(system.effective_shift),
           "operator_family": system.family}
    if query is None:
        return out
    budget = exponent_budget(query)
    out["budget"] = float(budget)
    out["derived_p"] = _derived_p(query)
    if budget > 0 and query.theorem != "remark33":
        beta = budget / 2
        gamma = gamma_ceiling(query, beta) / 2
        sel = select_sigma_delta(query, beta, gamma)
        out["sigma"] = float(sel.sigma)
        out["delta"] = float(sel.delta)
        out["selection_at"] = [float(beta), float(gamma)]
    return out


def _estimate_rows(alpha: float, ens, estimator: dict) -> list:
    times = estimator.get("times")
    point_index = estimator.get("point_index")
    rows = []
    pw = estimate_temporal_exponent(ens, mode="pointwise",
                                    point_index=point_index)
    sup = estimate_temporal_exponent(ens, mode="sup-space")
    sp = estimate_spatial_exponent(ens, times=times)
    for est, mode in ((pw, "pointwise"), (sup, "sup-space"), (sp, "pooled")):
        rows.append((alpha, est.kind, mode, est.value, est.fit_r2,
                     est.lag_range[0], est.lag_range[1],
                     int(np.sum(np.isfinite(est.per_replica)))))
    return rows


def _estimates_csv(rows: list) -> str:
    lines = ["alpha,kind,mode,value,fit_r2,lag_lo,lag_hi,replicas"]
    for alpha, kind, mode, value, r2, lo, hi, reps in rows:
        lines.append(
            f"{_fmt(alpha)},{kind},{mode},{_fmt(value)},{_fmt(r2)},"
            f"{_fmt(lo)},{_fmt(hi)},{reps}"
        )
    return "\n".join(lines) + "\n"


def _temporal_headline(rows: list, alpha: float, mode: str) -> float:
    for row in rows:
        if row[0] == alpha and row[1] == "temporal" and row[2] == mode:
            return row[3]
    raise KeyError(f"no temporal estimate for alpha={alpha}")


def run_experiment(config, workers: Optional[int] = None,
                   until: str = "verify") -> RunManifest:
    """Execute build -> simulate -> estimate -> verify and persist results.

    ``config`` is an ExperimentConfig or a raw dict.  Any stage failure
    aborts with the stage name after writing the partial manifest; a
    hypothesis violation surfaces as HypothesisError.  ``until`` stops the
    pipeline early after the named stage ("simulate", "estimate" or the
    default "verify").
    """
    if until not in ("simulate", "estimate", "verify"):
        raise ValueError(f"unknown pipeline stage {until!r}")
    if not isinstance(config, ExperimentConfig):
        config = ExperimentConfig.from_dict(config)
    out_dir = Path(config.output_dir) / config.run_id
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest(run_id=config.run_id, config=config.to_dict(),
                           versions=_versions(), note=config.note)

    def persist_manifest():
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(manifest.as_dict(), indent=1,
                                   sort_keys=True) + "\n", encoding="utf-8")
        if "manifest.json" not in manifest.outputs:
            manifest.outputs.append("manifest.json")

    def run_stage(stage, fn):
        t0 = time.perf_counter()
        try:
            result = fn()
        except HypothesisError as err:
            manifest.stages[stage] = f"failed: {err}"
            manifest.timings[stage] = time.perf_counter() - t0
            persist_manifest()
            raise
        except Exception as err:
            manifest.stages[stage] = f"failed: {err}"
            manifest.timings[stage] = time.perf_counter() - t0
            persist_manifest()
            raise StageError(stage, err) from err
        manifest.stages[stage] = "ok"
        manifest.timings[stage] = time.perf_counter() - t0
        return result

    # ---- build ----
    def build():
        domain, system = _build_system(config)
        noise = make_cameron_martin(domain, float(config.noise["theta"]),
                                    int(config.noise["truncation"]))
        G = _build_g(config)
        query = _build_query(config)
        if query is not None and query.theorem == "colored":
            p = _derived_p(query)
            report = validate_noise_hypotheses(G, noise, p=p, d=query.d)
            if not report["ok"]:
                bad = [c["name"] for c in report["clauses"] if not c["ok"]]
                raise HypothesisError(
                    f"noise hypotheses violated: {'; '.join(bad)}")
        return domain, system, noise, G, query

    domain, system, noise, G, query = run_stage("build", build)
    manifest.derived = _derived_block(system, query)

    alphas = list(config.sweep["alpha"]) if config.sweep \
        else [float(config.plan["alpha"])]
    plan_args = dict(config.plan)
    plan_args.pop("alpha", None)
    record = RecordSpec(time_stride=int(plan_args.pop("time_stride")),
                        space_count=int(plan_args.pop("space_count")))

    # ---- simulate ----
    def make_plan(alpha):
        return SimulationPlan(system=system, noise=noise, G=G,
                              seed=int(plan_args["seed"]), alpha=float(alpha),
                              T=float(plan_args["T"]),
                              steps=int(plan_args["steps"]),
                              replicas=int(plan_args["replicas"]),
                              record=record,
                              scheme=str(plan_args.get("scheme", "auto")))

    def simulate_all():
        ensembles = {}
        for alpha in alphas:
            ensembles[alpha] = simulate(make_plan(alpha), workers=workers)
        return ensembles

    ensembles = run_stage("simulate", simulate_all)

    if config.persist_trajectories:
        def persist_traj():
            for alpha, ens in ensembles.items():
                tag = "trajectories" if len(alphas) == 1 \
                    else f"trajectories-alpha-{_fmt(alpha)}"
                save_trajectories(ens, str(out_dir / tag))
                manifest.outputs.extend([f"{tag}.bin", f"{tag}.json"])
        run_stage("persist-trajectories", persist_traj)

    if until == "simulate":
        persist_manifest()
        return manifest

    # ---- estimate ----
    def estimate_all():
        rows = []
        for alpha in alphas:
            rows.extend(_estimate_rows(alpha, ensembles[alpha],
                                       config.estimator))
        (out_dir / "estimates.csv").write_text(_estimates_csv(rows),
                                               encoding="utf-8")
        manifest.outputs.append("estimates.csv")
        return rows

    rows = run_stage("estimate", estimate_all)

    if until == "estimate":
        persist_manifest()
        return manifest

    # ---- verify ----
    def verify():
        if config.sweep:
            mode = config.estimator.get("temporal_mode", "pointwise")
            slack = float(config.sweep.get("slack", 0.03))
            betas = [_temporal_headline(rows, a, mode) for a in alphas]
            steps_ok = [betas[i + 1] >= betas[i] - slack
                        for i in range(len(betas) - 1)]
            return {
                "kind": "alpha-sweep",
                "alphas": [float(a) for a in alphas],
                "beta_hats": betas,
                "temporal_mode": mode,
                "slack": slack,
                "steps_ok": steps_ok,
                "passed": bool(all(steps_ok)),
            }
        if query is not None:
            verdict = verify_region(ensembles[alphas[0]], query)
            payload = verdict.as_dict()
            payload["kind"] = "region"
            payload["theorem"] = query.theorem
            payload["params"] = _query_params(query)
            return payload
        return None

    verdict = run_stage("verify", verify)
    manifest.verdict = verdict
    if verdict is not None:
        (out_dir / "verdict.json").write_text(
            json.dumps(verdict, indent=1, sort_keys=True) + "\n",
            encoding="utf-8")
        manifest.outputs.append("verdict.json")
    if query is not None and exponent_budget(query) > 0:
        (out_dir / "region.csv").write_text(region_csv(query),
                                            encoding="utf-8")
        manifest.outputs.append("region.csv")

    persist_manifest()
    return manifest


def _load_run(run_dir) -> dict:
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.is_file():
        raise FileNotFoundError(f"unknown run id: no manifest under {run_dir}")
    return json.loads(manifest_path.read_text(encoding="utf-8"))


def _increment_profile_csv(ens) -> str:
    """Median dyadic max-increment profiles, plot-ready."""
    from .regularity import _kept_lags, _max_increments  # shared lag policy

    lines = ["axis,lag,median_max_increment"]
    n_t = ens.values.shape[1]
    dt = float(ens.time_grid[1] - ens.time_grid[0])
    for lag in _kept_lags(n_t):
        meds = [
            _max_increments(ens.values[r], [lag])[0]
            for r in range(ens.replicas)
        ]
        lines.append(f"time,{_fmt(lag * dt)},{_fmt(np.median(meds))}")
    n_s = int(ens.space_shape[0])
    if n_s >= 33:
        pts = ens.space_points.reshape(tuple(ens.space_shape) + (-1,))
        gap = float(pts[1, ..., 0].ravel()[0] - pts[0, ..., 0].ravel()[0])
        full = ens.values.reshape(ens.values.shape[:2] + tuple(ens.space_shape))
        for _ in range(len(ens.space_shape) - 1):
            full = full[..., full.shape[-1] // 2]
        for lag in _kept_lags(n_s):
            meds = [
                np.abs(full[r, :, lag:] - full[r, :, :-lag]).max()
                for r in range(ens.replicas)
            ]
            lines.append(f"space,{_fmt(lag * gap)},{_fmt(np.median(meds))}")
    return "\n".join(lines) + "\n"


def estimates_from_run(run_dir) -> str:
    """Recompute the estimate table from a run's persisted trajectories."""
    manifest = _load_run(run_dir)
    run_dir = Path(run_dir)
    traj = sorted(run_dir.glob("trajectories*.json"))
    if not traj:
        raise FileNotFoundError(
            "run has no persisted trajectories; re-run with "
            "persist_trajectories enabled")
    estimator = manifest["config"].get("estimator") or {}
    fallback = manifest["config"]["plan"].get("alpha", 2.0)
    rows = []
    for path in traj:
        ens = load_trajectories(str(path))
        alpha = float(ens.provenance.get("alpha", fallback))
        rows.extend(_estimate_rows(alpha, ens, estimator))
    return _estimates_csv(rows)


def export_plotdata(run_dir, kind: str, out_path=None, max_replicas=None):
    """Plot-ready CSV for a persisted run.

    ``region`` and ``increments`` return CSV text; ``trajectory`` writes a
    (possibly large) CSV to ``out_path`` (default inside the run dir) and
    returns the path.
    """
    manifest = _load_run(run_dir)
    run_dir = Path(run_dir)
    if kind == "region":
        query_dict = manifest["config"].get("query")
        if not query_dict:
            raise ValueError("run has no region query to export")
        return region_csv(RegularityQuery(**query_dict))
    traj = sorted(run_dir.glob("trajectories*.json"))
    if kind in ("increments", "trajectory") and not traj:
        raise FileNotFoundError(
            "run has no persisted trajectories; re-run with "
            "persist_trajectories enabled")
    if kind == "increments":
        return _increment_profile_csv(load_trajectories(traj[0]))
    if kind == "trajectory":
        ens = load_trajectories(traj[0])
        out_path = Path(out_path) if out_path \
            else run_dir / "trajectory-export.csv"
        export_trajectories_csv(ens, out_path, max_replicas=max_replicas)
        return out_path
    raise ValueError(f"unknown export kind {kind!r}")
