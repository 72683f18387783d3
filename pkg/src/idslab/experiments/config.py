"""Experiment configuration: JSON schema validation plus semantic checks."""
from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from ..disorder import DisorderError, DisorderModel, standardize
from ..lattice import BoxError, BoxSpec, HoppingKernel, KernelSymmetryError, kernel_from_symbol

KINDS = (
    "free-dos",
    "classify-point",
    "ids",
    "window",
    "wegner",
    "holder",
    "cauchy-check",
    "self-energy",
    "conjecture-probe",
    "expansion-identity",
)

_ENSEMBLE_FIELDS = ("disorder", "box", "lambdas", "ensemble")
REQUIRED = {
    "free-dos": ("energies",),
    "classify-point": ("energies",),
    "ids": _ENSEMBLE_FIELDS + ("energies",),
    "window": _ENSEMBLE_FIELDS + ("energies", "deltas"),
    "wegner": _ENSEMBLE_FIELDS + ("energies", "deltas"),
    "holder": _ENSEMBLE_FIELDS + ("energies", "deltas"),
    "cauchy-check": _ENSEMBLE_FIELDS + ("energies", "deltas"),
    "self-energy": _ENSEMBLE_FIELDS,
    "conjecture-probe": _ENSEMBLE_FIELDS + ("energies",),
    "expansion-identity": (),
}


class ConfigError(ValueError):
    """Validation failure; ``errors`` is a list of (field path, message)."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = errors
        super().__init__("invalid config:\n" + "\n".join(f"  {p}: {m}" for p, m in errors))

    def report(self) -> dict:
        return {"valid": False, "errors": [{"path": p, "message": m} for p, m in self.errors]}


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("schema.json").read_text())


def _path(err: jsonschema.ValidationError) -> str:
    return "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in err.absolute_path)


@dataclass
class ExperimentConfig:
    raw: dict
    kind: str
    kernel: HoppingKernel
    seed: int
    disorder: DisorderModel | None = None
    box: BoxSpec | None = None
    lambdas: list[float] = field(default_factory=list)
    deltas: list[float] = field(default_factory=list)
    energies: list[float] = field(default_factory=list)
    ensemble: int = 1
    method: str = "auto"
    kpm_moments: int = 1024
    resolution: int | None = None
    output_dir: str | None = None
    options: dict = field(default_factory=dict)

    @property
    def config_hash(self) -> str:
        body = {k: v for k, v in self.raw.items() if k != "output_dir"}
        return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()

    def with_seed(self, seed: int) -> "ExperimentConfig":
        raw = copy.deepcopy(self.raw)
        raw["seed"] = int(seed)
        return parse_config(raw)


def _build_kernel(spec) -> HoppingKernel:
    if isinstance(spec, str):
        return kernel_from_symbol(spec, 1 if spec in ("laplacian_1d", "zero") else None)
    name = spec.get("name", "custom")
    dim = spec.get("dimension")
    if name != "custom":
        return kernel_from_symbol(name, dim)
    return kernel_from_symbol([(xi, c) for xi, c in spec.get("coefficients", [])], dim)


def _build_disorder(spec: dict) -> DisorderModel:
    fam = spec["family"]
    if fam == "uniform":
        m = DisorderModel.uniform(spec.get("a", -0.5), spec.get("b", 0.5))
    elif fam == "gaussian":
        m = DisorderModel.gaussian(spec.get("sigma", 1.0), **({"q": spec["q"]} if "q" in spec else {}))
    elif fam == "cauchy":
        m = DisorderModel.cauchy(spec.get("scale", 1.0))
    else:
        m = DisorderModel.piecewise(spec["edges"], spec["weights"])
    return standardize(m) if spec.get("standardize", False) else m


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate ``raw`` and build the typed config, collecting every error."""
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = [(_path(e), e.message) for e in sorted(validator.iter_errors(raw), key=lambda e: list(e.absolute_path))]
    if errors:
        raise ConfigError(errors)

    kind = raw["kind"]
    for name in REQUIRED[kind]:
        if name not in raw:
            errors.append((f"$.{name}", f"required for kind {kind!r}"))
    for name in ("lambdas", "deltas", "energies"):
        grid = raw.get(name)
        if grid is not None and any(b < a for a, b in zip(grid, grid[1:])):
            errors.append((f"$.{name}", "grid must be sorted ascending"))

    kernel = disorder = box = None
    try:
        kernel = _build_kernel(raw["kernel"])
    except (KernelSymmetryError, ValueError) as exc:
        errors.append(("$.kernel", str(exc)))
    if "disorder" in raw:
        try:
            disorder = _build_disorder(raw["disorder"])
        except (DisorderError, KeyError) as exc:
            errors.append(("$.disorder", str(exc)))
    if "box" in raw and kernel is not None:
        try:
            box = BoxSpec(kernel.dimension, raw["box"]["L"])
            if 2 * kernel.support_radius >= box.L:
                errors.append(("$.box.L", f"kernel support radius {kernel.support_radius} needs L > {2 * kernel.support_radius}"))
        except BoxError as exc:
            errors.append(("$.box", str(exc)))

    opts = raw.get("options", {})
    if kind in ("wegner", "holder", "self-energy") and any(x <= 0 for x in raw.get("lambdas", [])):
        errors.append(("$.lambdas", f"kind {kind!r} needs lam > 0"))
    if kind == "cauchy-check" and disorder is not None and disorder.family != "cauchy":
        errors.append(("$.disorder.family", "cauchy-check needs cauchy disorder"))
    if kind == "self-energy":
        z = opts.get("z")
        if not (isinstance(z, list) and len(z) == 2):
            errors.append(("$.options.z", "self-energy needs z as [re, im]"))
        elif not z[1] > 0:
            errors.append(("$.options.z", "Im z must be > 0"))
        if disorder is not None and not disorder.standardized:
            errors.append(("$.disorder.standardize", "self-energy needs a standardized disorder model"))
    if kind == "conjecture-probe" and "half_width" not in opts:
        errors.append(("$.options.half_width", "required for conjecture-probe"))
    if errors:
        raise ConfigError(errors)

    return ExperimentConfig(
        raw=copy.deepcopy(raw),
        kind=kind,
        kernel=kernel,
        seed=int(raw["seed"]),
        disorder=disorder,
        box=box,
        lambdas=[float(x) for x in raw.get("lambdas", [])],
        deltas=[float(x) for x in raw.get("deltas", [])],
        energies=[float(x) for x in raw.get("energies", [])],
        ensemble=int(raw.get("ensemble", 1)),
        method=raw.get("method", "auto"),
        kpm_moments=int(raw.get("kpm_moments", 1024)),
        resolution=raw.get("resolution"),
        output_dir=raw.get("output_dir"),
        options=dict(opts),
    )


def load_config(source: str | Path | dict[str, Any]) -> ExperimentConfig:
    if isinstance(source, dict):
        return parse_config(source)
    try:
        raw = json.loads(Path(source).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([("$", f"not valid JSON: {exc}")]) from exc
    return parse_config(raw)
