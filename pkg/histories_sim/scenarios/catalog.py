"""Bundled scenarios shipped under histories_sim/scenarios/data/."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

from histories_sim.config import config
from histories_sim.scenarios.schema import KINDS, Scenario, load_scenario
from histories_sim.utils.errors import ValidationError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    kind: str
    description: str
    path: Path

    def __str__(self) -> str:
        return f"{self.name:<28} {self.kind:<12} {self.description}"


def bundled_paths(directory: Optional[Path] = None) -> List[Path]:
    directory = config.SCENARIO_DIR if directory is None else Path(directory)
    return sorted(directory.glob("*.json"))


def list_scenarios(directory: Optional[Path] = None) -> List[CatalogEntry]:
    """
    Every bundled scenario, validated, sorted by file name.

    Raises:
        ValidationError: If a bundled file fails validation
    """
    entries = []
    for path in bundled_paths(directory):
        scenario = load_scenario(path)
        entries.append(CatalogEntry(scenario.name, scenario.kind, scenario.description, path))
    logger.debug(f"Catalog holds {len(entries)} scenarios")
    return entries


def bundled_scenario(kind: str, directory: Optional[Path] = None) -> Scenario:
    """
    The default bundled scenario of ``kind``: the file named after the kind
    when present, otherwise the first file of that kind.
    """
    if kind not in KINDS:
        raise ValidationError(f"unknown scenario kind {kind!r}", [("kind", f"expected one of {list(KINDS)}")])
    paths = bundled_paths(directory)
    preferred = [p for p in paths if p.stem == kind]
    for path in preferred + paths:
        scenario = load_scenario(path)
        if scenario.kind == kind:
            return scenario
    raise ValidationError(f"no bundled scenario of kind {kind!r}", [("kind", "nothing bundled")])
