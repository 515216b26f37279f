"""
Scenario files: loading, field-by-field validation and defaults.

A scenario is a JSON (or YAML) mapping:

    {
      "schema_version": 1,
      "kind": "arrival",
      "name": "arrival-antisymmetric",
      "description": "...",
      "seed": 20240601,
      "parameters": {...},
      "output": {"directory": "results/arrival"}
    }

Every problem is reported with its field path before any computation.
"""
import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import yaml

from histories_sim.utils.errors import ValidationError

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
KINDS = ("histories", "records", "lindblad", "qsd", "qbm", "hybrid", "timeless", "arrival", "double-slit")
SEED_LIMIT = 1 << 64

Issues = List[Tuple[str, str]]


@dataclass(frozen=True)
class Field:
    """
    Expected shape of one parameter.

    kind is one of number, integer, string, boolean, list, mapping,
    matrix, vector or any.
    """

    kind: str
    required: bool = True
    default: Any = None
    minimum: Optional[float] = None
    strictly_positive: bool = False
    choices: Optional[Tuple[Any, ...]] = None
    fields: Optional[Dict[str, "Field"]] = None
    items: Optional["Field"] = None


def optional(kind: str, default: Any = None, **kwargs) -> Field:
    return Field(kind, required=False, default=default, **kwargs)


def positive(kind: str = "number", **kwargs) -> Field:
    return Field(kind, strictly_positive=True, **kwargs)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _parse_complex(value: Any) -> bool:
    if _is_number(value):
        return True
    if isinstance(value, str):
        try:
            complex(value.replace(" ", ""))
            return True
        except ValueError:
            return False
    return False


def _check_matrix(value: Any, path: str, issues: Issues) -> None:
    if not isinstance(value, list) or not value or not all(isinstance(row, list) for row in value):
        issues.append((path, "expected a nonempty list of rows"))
        return
    width = len(value)
    for i, row in enumerate(value):
        if len(row) != width:
            issues.append((f"{path}[{i}]", f"expected {width} entries for a square matrix, got {len(row)}"))
        for j, entry in enumerate(row):
            if not _parse_complex(entry):
                issues.append((f"{path}[{i}][{j}]", f"not a number: {entry!r}"))


def _check_vector(value: Any, path: str, issues: Issues) -> None:
    if not isinstance(value, list) or not value:
        issues.append((path, "expected a nonempty list of amplitudes"))
        return
    for i, entry in enumerate(value):
        if not _parse_complex(entry):
            issues.append((f"{path}[{i}]", f"not a number: {entry!r}"))


def normalize(value: Any, rule: Field, path: str, issues: Issues) -> Any:
    """Check ``value`` against ``rule``; return it with nested defaults filled in."""
    kind = rule.kind
    if kind in ("number", "integer"):
        if kind == "integer" and not (isinstance(value, int) and not isinstance(value, bool)):
            issues.append((path, f"expected an integer, got {value!r}"))
            return value
        if not _is_number(value):
            issues.append((path, f"expected a number, got {value!r}"))
            return value
        if rule.strictly_positive and not value > 0:
            issues.append((path, f"must be positive, got {value}"))
        if rule.minimum is not None and value < rule.minimum:
            issues.append((path, f"must be >= {rule.minimum}, got {value}"))
    elif kind == "string" and not isinstance(value, str):
        issues.append((path, f"expected a string, got {value!r}"))
    elif kind == "boolean" and not isinstance(value, bool):
        issues.append((path, f"expected true or false, got {value!r}"))
    elif kind == "matrix":
        _check_matrix(value, path, issues)
    elif kind == "vector":
        _check_vector(value, path, issues)
    elif kind == "list":
        if not isinstance(value, list):
            issues.append((path, f"expected a list, got {type(value).__name__}"))
            return value
        if rule.items is not None:
            value = [normalize(item, rule.items, f"{path}[{i}]", issues) for i, item in enumerate(value)]
    elif kind == "mapping":
        if not isinstance(value, dict):
            issues.append((path, f"expected a mapping, got {type(value).__name__}"))
            return value
        if rule.fields is not None:
            value = normalize_mapping(value, rule.fields, path, issues)
    if rule.choices is not None and value not in rule.choices:
        issues.append((path, f"expected one of {list(rule.choices)}, got {value!r}"))
    return value


def normalize_mapping(values: Dict[str, Any], fields: Dict[str, Field], path: str, issues: Issues) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for name, rule in fields.items():
        child = f"{path}.{name}" if path else name
        if name not in values or values[name] is None:
            if rule.required:
                issues.append((child, "required field missing"))
            elif rule.default is not None:
                out[name] = normalize(rule.default, rule, child, issues)
            else:
                out[name] = None
            continue
        out[name] = normalize(values[name], rule, child, issues)
    for name in values:
        if name not in fields:
            issues.append((f"{path}.{name}" if path else name, "unknown field"))
    return out


# ==================== PARAMETER SCHEMAS ====================

POTENTIAL = {
    "kind": optional("string", "free", choices=("free", "harmonic", "quartic")),
    "omega": optional("number", strictly_positive=True),
    "quartic": optional("number", strictly_positive=True),
    "quadratic": optional("number", 0.0),
}

LATTICE = {
    "n_sites": Field("integer", minimum=2),
    "dx": positive(),
    "mass": optional("number", 1.0, strictly_positive=True),
    "hbar": optional("number", 1.0, strictly_positive=True),
    "potential": optional("mapping", {"kind": "free"}, fields=POTENTIAL),
}

FAMILY_ITEM = Field("any")

HISTORIES = {
    "hamiltonian": Field("matrix"),
    "initial_state": Field("vector"),
    "times": Field("list", items=Field("number")),
    "families": Field("list", items=FAMILY_ITEM),
    "tolerance": optional("number", 1e-8, strictly_positive=True),
    "hbar": optional("number", 1.0, strictly_positive=True),
}

RECORDS = dict(HISTORIES, record_tolerance=optional("number", 1e-8, strictly_positive=True))

LINDBLAD = {
    "hamiltonian": Field("matrix"),
    "lindblads": optional("list", [], items=Field("matrix")),
    "initial_state": Field("vector"),
    "dt": positive(),
    "steps": Field("integer", minimum=1),
    "record_every": optional("integer", 1, minimum=1),
    "observables": optional("mapping", {}),
    "hbar": optional("number", 1.0, strictly_positive=True),
}

QSD = dict(
    LINDBLAD,
    n_traj=Field("integer", minimum=1),
    chunk=optional("integer", minimum=1),
)

QBM = {
    "cgs": optional(
        "mapping",
        {},
        fields={
            "mass": optional("number", 1.0, strictly_positive=True),
            "gamma": optional("number", 1.0, strictly_positive=True),
            "sigma": optional("number", 1.0, strictly_positive=True),
            "temperature": optional("number", 300.0, strictly_positive=True),
        },
    ),
    "mass": positive(),
    "gamma": positive(),
    "temperature": Field("number", minimum=0.0),
    "sigma": positive(),
    "potential": optional("string", "free", choices=("free", "harmonic")),
    "omega": optional("number", 0.0, minimum=0.0),
    "hbar": optional("number", 1.0, strictly_positive=True),
    "n_intervals": Field("integer", minimum=2),
    "duration": positive(),
    "x0": optional("number", 0.0),
    "p0": optional("number", 0.0),
    "width": positive(),
    "displacements": Field("list", items=Field("number")),
    "separation": optional("number", 0.0),
    "n_mc": optional("integer", 10000, minimum=1000),
}

HYBRID = {
    "coupling": Field("number"),
    "amplitude": positive(),
    "kappa": Field("number", minimum=0.0),
    "mass": optional("number", 1.0, strictly_positive=True),
    "gamma": optional("number", 0.0, minimum=0.0),
    "spring": optional("number", 0.0, minimum=0.0),
    "X0": optional("number", 0.0),
    "V0": optional("number", 0.0),
    "dt": positive(),
    "steps": Field("integer", minimum=1),
    "n_runs": Field("integer", minimum=1),
    "modes": optional("list", ["stochastic", "mean-field"], items=Field("string", choices=("stochastic", "mean-field"))),
}

ENSEMBLE = {
    "kind": Field("string", choices=("thermal", "shell", "gaussian")),
    "n_samples": Field("integer", minimum=1),
    "temperature": optional("number", strictly_positive=True),
    "amplitude": optional("number", strictly_positive=True),
    "mean_x": optional("number", 0.0),
    "mean_p": optional("number", 0.0),
    "sigma_x": optional("number", strictly_positive=True),
    "sigma_p": optional("number", strictly_positive=True),
}

REGION = {"lower": Field("number"), "upper": Field("number")}

SEMICLASSICAL = {
    "lattice": Field("mapping", fields=LATTICE),
    "state": Field("mapping"),
    "n_samples": optional("integer", 20000, minimum=1),
}

TIMELESS = {
    "mass": optional("number", 1.0, strictly_positive=True),
    "potential": Field("mapping", fields=POTENTIAL),
    "step": positive(),
    "horizon": positive(),
    "ensemble": optional("mapping", fields=ENSEMBLE),
    "regions": Field("list", items=Field("mapping", fields=REGION)),
    "epsilon": optional("number", strictly_positive=True),
    "semiclassical": optional("mapping", fields=SEMICLASSICAL),
}

STATE = {
    "kind": Field("string", choices=("gaussian", "antisymmetric", "symmetric", "eigenstate")),
    "x0": optional("number", 0.0),
    "p0": optional("number", 0.0),
    "width": optional("number", 1.0, strictly_positive=True),
    "level": optional("integer", 0, minimum=0),
}

ENVIRONMENT = {
    "D_loc": Field("number", minimum=0.0),
    "gamma": optional("number", 0.0, minimum=0.0),
    "temperature": optional("number", 0.0, minimum=0.0),
    "dt": positive(),
}

ARRIVAL = {
    "lattice": Field("mapping", fields=LATTICE),
    "region": Field("mapping", fields={"lower": optional("number"), "upper": optional("number")}),
    "tau": positive(),
    "n_steps": Field("integer", minimum=2),
    "method": optional("string", "trotter", choices=("trotter", "wall")),
    "alternatives": optional("string", "enter", choices=("enter", "cross")),
    "state": Field("mapping", fields=STATE),
    "environments": optional("list", [], items=Field("mapping", fields=ENVIRONMENT)),
    "langevin": optional(
        "mapping",
        fields={
            "n_samples": optional("integer", 10000, minimum=1),
            "substeps": optional("integer", 10, minimum=1),
        },
    ),
}

DOUBLE_SLIT = {
    "lattice": Field("mapping", fields=LATTICE),
    "slit_position": positive(),
    "width": positive(),
    "duration": positive(),
    "D_loc": positive(),
    "dt": positive(),
    "window": positive(),
}

PARAMETERS: Dict[str, Dict[str, Field]] = {
    "histories": HISTORIES,
    "records": RECORDS,
    "lindblad": LINDBLAD,
    "qsd": QSD,
    "qbm": QBM,
    "hybrid": HYBRID,
    "timeless": TIMELESS,
    "arrival": ARRIVAL,
    "double-slit": DOUBLE_SLIT,
}

TOP_LEVEL = {
    "schema_version": Field("integer", choices=(SCHEMA_VERSION,)),
    "kind": Field("string", choices=KINDS),
    "name": Field("string"),
    "description": optional("string", ""),
    "seed": Field("integer", minimum=0),
    "parameters": Field("mapping"),
    "output": optional("mapping", {}, fields={"directory": optional("string")}),
}


# ==================== SCENARIO ====================

@dataclass(frozen=True)
class Scenario:
    """A validated scenario with defaults filled in."""

    kind: str
    name: str
    seed: int
    parameters: Dict[str, Any]
    description: str = ""
    output: Dict[str, Any] = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION
    source: Optional[Path] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": self.schema_version,
            "kind": self.kind,
            "name": self.name,
            "description": self.description,
            "seed": self.seed,
            "parameters": self.parameters,
            "output": self.output,
        }

    def fingerprint(self) -> str:
        """sha256 of the canonical JSON of the validated scenario."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_seed(self, seed: Optional[int]) -> "Scenario":
        if seed is None:
            return self
        _check_seed(seed, "seed")
        return Scenario(
            self.kind, self.name, seed, self.parameters, self.description, self.output, self.schema_version, self.source
        )

    def __str__(self) -> str:
        return f"Scenario({self.name}, kind={self.kind}, seed={self.seed})"


def _check_seed(seed: int, path: str) -> None:
    if not 0 <= seed < SEED_LIMIT:
        raise ValidationError("invalid seed", [(path, f"must lie in [0, 2^64), got {seed}")])


def validate_scenario(raw: Any, source: Optional[Path] = None) -> Scenario:
    """
    Validate a parsed scenario mapping.

    Raises:
        ValidationError: Listing every problem with its field path
    """
    if not isinstance(raw, dict):
        raise ValidationError("scenario must be a mapping", [("<root>", f"got {type(raw).__name__}")])
    issues: Issues = []
    top = normalize_mapping(raw, TOP_LEVEL, "", issues)
    kind = top.get("kind")
    parameters = top.get("parameters")
    if kind in PARAMETERS and isinstance(parameters, dict):
        parameters = normalize_mapping(parameters, PARAMETERS[kind], "parameters", issues)
        issues.extend(_cross_checks(kind, parameters))
    seed = top.get("seed")
    if isinstance(seed, int) and not isinstance(seed, bool) and seed >= SEED_LIMIT:
        issues.append(("seed", f"must lie in [0, 2^64), got {seed}"))
    if issues:
        label = source.name if source is not None else top.get("name", "scenario")
        raise ValidationError(f"{label} failed validation with {len(issues)} problem(s)", issues)
    return Scenario(
        kind=kind,
        name=top["name"],
        seed=seed,
        parameters=parameters,
        description=top.get("description") or "",
        output=top.get("output") or {},
        schema_version=top["schema_version"],
        source=source,
    )


def _cross_checks(kind: str, parameters: Dict[str, Any]) -> Issues:
    """Constraints that involve more than one field."""
    issues: Issues = []
    if kind in ("histories", "records"):
        times, families = parameters.get("times"), parameters.get("families")
        if isinstance(times, list) and isinstance(families, list) and len(times) != len(families):
            issues.append(("parameters.families", f"{len(families)} families for {len(times)} times"))
        if isinstance(times, list) and any(b <= a for a, b in zip(times, times[1:])):
            issues.append(("parameters.times", "must be strictly increasing"))
    if kind in ("timeless",):
        for i, region in enumerate(parameters.get("regions") or []):
            if isinstance(region, dict) and _is_number(region.get("lower")) and _is_number(region.get("upper")):
                if region["upper"] <= region["lower"]:
                    issues.append((f"parameters.regions[{i}].upper", "must exceed lower"))
        if parameters.get("ensemble") is None and parameters.get("semiclassical") is None:
            issues.append(("parameters.ensemble", "need an ensemble, a semiclassical block or both"))
        ensemble = parameters.get("ensemble") or {}
        needed = {"thermal": ("temperature",), "shell": ("amplitude",), "gaussian": ("sigma_x", "sigma_p")}
        for name in needed.get(ensemble.get("kind"), ()):
            if ensemble.get(name) is None:
                issues.append((f"parameters.ensemble.{name}", f"required for a {ensemble['kind']} ensemble"))
        potential = parameters.get("potential") or {}
        if ensemble.get("kind") in ("thermal", "shell") and potential.get("kind") != "harmonic":
            issues.append(("parameters.potential.kind", f"a {ensemble['kind']} ensemble needs the harmonic potential"))
    if kind == "qbm":
        displacements = parameters.get("displacements")
        if isinstance(displacements, list) and len(displacements) < 3:
            issues.append(("parameters.displacements", "need at least 3 displacements for a curvature fit"))
        if parameters.get("potential") == "harmonic" and not parameters.get("omega"):
            issues.append(("parameters.omega", "required for a harmonic potential"))
    if kind == "arrival":
        region = parameters.get("region") or {}
        if region.get("lower") is None and region.get("upper") is None:
            issues.append(("parameters.region", "needs a lower or an upper edge"))
        lower, upper = region.get("lower"), region.get("upper")
        if _is_number(lower) and _is_number(upper) and upper < lower:
            issues.append(("parameters.region.upper", "must be >= lower"))
        if parameters.get("environments") and parameters.get("method") != "trotter":
            issues.append(("parameters.method", "environments need the 'trotter' method"))
        state = parameters.get("state") or {}
        if parameters.get("langevin") is not None and state.get("kind") != "gaussian":
            issues.append(("parameters.langevin", "the Langevin oracle needs a gaussian initial state"))
    for path, potential in _potentials(kind, parameters):
        if potential.get("kind") == "harmonic" and potential.get("omega") is None:
            issues.append((f"{path}.omega", "required for a harmonic potential"))
        if potential.get("kind") == "quartic" and potential.get("quartic") is None:
            issues.append((f"{path}.quartic", "required for a quartic potential"))
    return issues


def _potentials(kind: str, parameters: Dict[str, Any]):
    if kind == "timeless" and isinstance(parameters.get("potential"), dict):
        yield "parameters.potential", parameters["potential"]
    for owner in ("lattice",):
        block = parameters.get(owner)
        if isinstance(block, dict) and isinstance(block.get("potential"), dict):
            yield f"parameters.{owner}.potential", block["potential"]
    semiclassical = parameters.get("semiclassical")
    if isinstance(semiclassical, dict) and isinstance(semiclassical.get("lattice"), dict):
        lattice = semiclassical["lattice"]
        if isinstance(lattice.get("potential"), dict):
            yield "parameters.semiclassical.lattice.potential", lattice["potential"]


class ScenarioLoader(yaml.SafeLoader):
    """SafeLoader that reads ``1e-8`` as a float, as JSON and YAML 1.2 do."""


ScenarioLoader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def parse_scenario_text(text: str, source: Optional[Path] = None) -> Scenario:
    """
    Parse scenario text and validate it.

    ``.json`` sources, and text that opens with ``{``, go through ``json``;
    anything else is YAML.
    """
    origin = str(source or "<text>")
    as_json = (source is not None and Path(source).suffix.lower() == ".json") or text.lstrip().startswith("{")
    try:
        raw = json.loads(text) if as_json else yaml.load(text, Loader=ScenarioLoader)
    except json.JSONDecodeError as e:
        raise ValidationError("scenario is not valid JSON", [(origin, str(e))]) from e
    except yaml.YAMLError as e:
        raise ValidationError("scenario is not valid YAML", [(origin, str(e))]) from e
    return validate_scenario(raw, source)


def load_scenario(path: Union[str, Path]) -> Scenario:
    """
    Load and validate a scenario file.

    Raises:
        ValidationError: If the file is missing, unparsable or invalid
    """
    path = Path(path)
    if not path.is_file():
        raise ValidationError("scenario file not found", [(str(path), "no such file")])
    scenario = parse_scenario_text(path.read_text(encoding="utf-8"), path)
    logger.debug(f"Loaded {scenario} from {path}")
    return scenario
