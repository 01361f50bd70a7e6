"""Scenario files: JSON configs validated against ``schemas/scenario.json``."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .ensembles import ChannelSpec, RngSpec
from .experiments import SpectralProblem
from .linalg import in_upper_half
from .pencil import NCPolynomial, Pencil
from .stieltjes import DeterministicModel, QuantileTable, complex_from_json, matrix_from_json
from .subordination import FixedPointConfig

BUNDLED = ("semicircle", "free-sum", "bernoulli-anticommutator", "marchenko-pastur", "wishart-embed",
           "quantile-diag", "mimo-band", "theta-decay")
DEFAULT_SEED = 20240601
MAX_GRID_POINTS = 200_000


class ScenarioError(ValueError):
    """Invalid or unreadable scenario (exit code 2)."""


def load_schema(name: str) -> dict:
    return json.loads(resources.files("ncspec").joinpath(f"schemas/{name}.json").read_text())


def validate(instance, schema_name: str) -> None:
    """Raise jsonschema.ValidationError unless ``instance`` matches the named schema."""
    jsonschema.validate(instance, load_schema(schema_name))


def bundled_path(name: str):
    return resources.files("ncspec").joinpath(f"scenarios/{name}.json")


@dataclass
class Scenario:
    name: str
    seed: int
    problem: SpectralProblem
    grid: np.ndarray
    solver: FixedPointConfig
    sample: dict | None = None
    experiments: list = field(default_factory=list)
    embed: dict | None = None
    raw: dict = field(default_factory=dict)

    @property
    def rng(self) -> RngSpec:
        return RngSpec(self.seed)


def read_scenario(ref) -> dict:
    """Parse a scenario file, or a bundled scenario by name."""
    path = Path(ref)
    try:
        if path.exists():
            text = path.read_text()
        elif str(ref) in BUNDLED:
            text = bundled_path(str(ref)).read_text()
        else:
            raise ScenarioError(f"scenario not found: {ref}")
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {ref}: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioError(f"scenario {ref} is not valid JSON: {e}") from e


def _model(d: dict | None) -> DeterministicModel:
    if not d:
        return DeterministicModel.empty()
    if d["mode"] == "empirical":
        return DeterministicModel("empirical", tuple(matrix_from_json(m) for m in d.get("matrices", [])))
    return DeterministicModel("quantile", tables=tuple(QuantileTable.from_json(t) for t in d.get("tables", [])),
                              offsets=tuple(d.get("offsets", ())), m=d.get("m", 4096))


def _problem(d: dict, model: DeterministicModel) -> SpectralProblem:
    eps = d.get("epsilon_pad", 1e-8)
    if "polynomial" in d:
        P = NCPolynomial.parse(d["polynomial"], d.get("p"), d.get("q", model.q))
        for key, used in (("p", P.p), ("q", P.q)):
            if key in d and used > d[key]:
                raise ScenarioError(f"polynomial uses {key}={used} letters but {key}={d[key]} was declared")
        return SpectralProblem.from_polynomial(P, model, eps)
    if "pencil" in d:
        pc = d["pencil"]
        L = Pencil(matrix_from_json(pc["a0"]), tuple(matrix_from_json(m) for m in pc.get("a", [])),
                   tuple(matrix_from_json(m) for m in pc.get("b", [])))
        return SpectralProblem.from_pencil(L, model)
    if model.q:
        raise ScenarioError("wishart and channel problems take no deterministic model")
    if "wishart" in d:
        w = d["wishart"]
        P = NCPolynomial.parse(w["polynomial"], len(w["s"]), 0)
        return SpectralProblem.white_wishart(P, w["r"], w["s"], eps)
    c = d["channel"]
    spec = ChannelSpec(c["L"], c["r"], c["t"], tuple(c["sigma2"]), 1, c.get("block_rows", 1))
    return SpectralProblem.channel(spec, eps)


def _grid(g: dict) -> np.ndarray:
    lo, hi, step = g["t_min"], g["t_max"], g["step"]
    if hi <= lo:
        raise ScenarioError("grid needs t_max > t_min")
    n = int(round((hi - lo) / step)) + 1
    if n > MAX_GRID_POINTS:
        raise ScenarioError(f"grid has {n} points, more than {MAX_GRID_POINTS}")
    return np.linspace(lo, hi, max(n, 2))


def _solver(d: dict | None, eta: float) -> FixedPointConfig:
    d = dict(d or {})
    allowed = {f.name for f in fields(FixedPointConfig)}
    return FixedPointConfig(**{k: v for k, v in d.items() if k in allowed}, eta=eta)


def _check_experiment(e: dict, problem: SpectralProblem) -> None:
    need = {
        "spectrum_inclusion": ("N", "trials", "epsilon"),
        "histogram_vs_density": ("N", "trials", "max_ks"),
        "theta_decay": ("N_list", "trials", "Lam"),
        "sd_mean_residual": ("N", "trials", "Lam", "Gam"),
        "g_difference_decay": ("N_list", "trials", "lam"),
        "quantile_convergence": ("N", "table"),
        "embedding_identity": ("polynomial", "r", "s", "N"),
        "support_edges": ("expected", "tolerance"),
        "density_reference": ("tolerance",),
        "trace_moment": ("N", "trials", "expected_value"),
    }[e["kind"]]
    missing = [k for k in need if k not in e]
    if missing:
        raise ScenarioError(f"experiment {e['kind']} is missing {', '.join(missing)}")
    k = problem.pencil.k
    for key in ("Lam", "Gam", "envelope_Lam"):
        if key in e:
            spectral_arg(e[key], k)
    if e["kind"] in ("theta_decay", "sd_mean_residual", "g_difference_decay") and problem.sampler is not None:
        raise ScenarioError(f"{e['kind']} needs a polynomial or pencil problem")


def spectral_arg(v, k: int) -> np.ndarray:
    """A complex scalar (times the identity) or an explicit k×k matrix in the upper half-plane."""
    if isinstance(v, list) and v and isinstance(v[0], list):
        M = matrix_from_json(v)
    else:
        M = complex_from_json(v) * np.eye(k)
    if M.shape != (k, k):
        raise ScenarioError(f"spectral argument has shape {M.shape}, pencil needs ({k}, {k})")
    if not in_upper_half(M):
        raise ScenarioError("spectral arguments must have positive definite imaginary part")
    return M


def build_scenario(raw: dict, seed: int | None = None) -> Scenario:
    try:
        validate(raw, "scenario")
    except jsonschema.ValidationError as e:
        where = "/".join(str(x) for x in e.absolute_path) or "<root>"
        raise ScenarioError(f"scenario schema violation at {where}: {e.message}") from e
    try:
        model = _model(raw.get("model"))
        problem = _problem(raw["problem"], model)
        g = raw["grid"]
        grid = _grid(g)
        solver = _solver(raw.get("solver"), g.get("eta", 1e-3))
        for e in raw.get("experiments", []):
            _check_experiment(e, problem)
    except ScenarioError:
        raise
    except (ValueError, KeyError, TypeError) as e:
        raise ScenarioError(f"invalid scenario: {e}") from e
    return Scenario(raw["name"], int(raw.get("seed", DEFAULT_SEED) if seed is None else seed), problem, grid,
                    solver, raw.get("sample"), list(raw.get("experiments", [])), raw.get("embed"), raw)


def load_scenario(ref, seed: int | None = None) -> Scenario:
    return build_scenario(read_scenario(ref), seed)
