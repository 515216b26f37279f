"""
Result bundles and the atomic writer that puts them on disk.

A run directory holds ``summary.json`` (summary, provenance and the
validated scenario) and one CSV file per table.
"""
import csv
import json
import math
import shutil
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from histories_sim import __version__
from histories_sim.scenarios.schema import Scenario
from histories_sim.utils.logger import LoggerMixin

SIGNIFICANT_DIGITS = 17


@dataclass
class Table:
    """A named CSV payload: header plus rows."""

    columns: Sequence[str]
    rows: List[Sequence[Any]] = field(default_factory=list)

    def append(self, *values: Any) -> None:
        self.rows.append(values)

    def extend(self, rows: Iterable[Sequence[Any]]) -> None:
        self.rows.extend(rows)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass
class Provenance:
    """Everything needed to trace a number back to its inputs."""

    scenario_hash: str
    version: str
    seed: int
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    @classmethod
    def of(cls, scenario: Scenario) -> "Provenance":
        return cls(scenario.fingerprint(), __version__, scenario.seed)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario_hash": self.scenario_hash,
            "version": self.version,
            "seed": self.seed,
            "created_at": self.created_at.isoformat(),
        }


@dataclass
class ResultBundle:
    """
    Summary values, CSV tables and provenance of one scenario run.

    Summary values are plain numbers, booleans or strings; numpy scalars
    are converted on export.
    """

    scenario: Scenario
    summary: Dict[str, Any] = field(default_factory=dict)
    tables: Dict[str, Table] = field(default_factory=dict)
    provenance: Optional[Provenance] = None

    def __post_init__(self):
        if self.provenance is None:
            self.provenance = Provenance.of(self.scenario)

    def table(self, name: str, columns: Sequence[str]) -> Table:
        """Create (or return) the table ``name``."""
        if name not in self.tables:
            self.tables[name] = Table(list(columns))
        return self.tables[name]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": self.scenario.kind,
            "name": self.scenario.name,
            "summary": {key: _plain(value) for key, value in self.summary.items()},
            "tables": {name: {"file": f"{name}.csv", "rows": len(table)} for name, table in self.tables.items()},
            "provenance": self.provenance.to_dict(),
            "scenario": self.scenario.to_dict(),
        }

    def __str__(self) -> str:
        return f"ResultBundle({self.scenario.name}: {len(self.summary)} summary values, {len(self.tables)} tables)"


def _plain(value: Any) -> Any:
    """JSON-ready form of a summary value; non-finite floats become strings."""
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else repr(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {"real": _plain(value.real), "imag": _plain(value.imag)}
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_plain(v) for v in value]
    return value


def format_cell(value: Any) -> str:
    """CSV cell text; floats keep 17 significant digits."""
    if isinstance(value, (np.bool_, bool)):
        return "true" if value else "false"
    if isinstance(value, (np.integer, int)):
        return str(int(value))
    if isinstance(value, (np.floating, float)):
        return f"{float(value):.{SIGNIFICANT_DIGITS}g}"
    return str(value)


class ResultWriter(LoggerMixin):
    """Writes bundles below a base directory, one run directory each."""

    def __init__(self, base_dir: Path):
        self.base_dir = Path(base_dir)

    @contextmanager
    def transaction(self, target: Path):
        """
        Yield a temporary directory that replaces ``target`` on success.

        A previous ``target`` is renamed aside, the staging directory is
        renamed into place, and only then is the old copy deleted. If the
        swap fails the old copy is renamed back. On any exception the
        staging directory is removed and the error re-raised.

        Example:
            >>> with writer.transaction(Path("results/arrival")) as staging:
            ...     (staging / "summary.json").write_text("{}")
        """
        target = Path(target)
        target.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=f".{target.name}-", dir=target.parent))
        try:
            yield staging
            previous = staging.with_name(f"{staging.name}.previous")
            replacing = target.exists()
            if replacing:
                target.rename(previous)
            try:
                staging.rename(target)
            except Exception:
                if replacing:
                    previous.rename(target)
                raise
            if replacing:
                shutil.rmtree(previous, ignore_errors=True)
            self.logger.debug(f"Committed results to {target}")
        except Exception as e:
            shutil.rmtree(staging, ignore_errors=True)
            self.logger.error(f"Writing results to {target} failed, rolled back: {e}")
            raise

    def target_for(self, bundle: ResultBundle, out_dir: Optional[Path] = None) -> Path:
        if out_dir is not None:
            return Path(out_dir)
        configured = bundle.scenario.output.get("directory")
        if configured:
            return Path(configured)
        return self.base_dir / bundle.scenario.name

    def write(self, bundle: ResultBundle, out_dir: Optional[Path] = None) -> Path:
        """
        Write ``summary.json`` and the CSV tables atomically.

        Returns:
            Path: The run directory
        """
        target = self.target_for(bundle, out_dir)
        with self.transaction(target) as staging:
            with open(staging / "summary.json", "w", encoding="utf-8") as handle:
                json.dump(bundle.to_dict(), handle, indent=2, sort_keys=False)
                handle.write("\n")
            for name, table in bundle.tables.items():
                with open(staging / f"{name}.csv", "w", encoding="utf-8", newline="") as handle:
                    writer = csv.writer(handle)
                    writer.writerow(table.columns)
                    for row in table.rows:
                        writer.writerow([format_cell(v) for v in row])
        self.logger.info(f"Wrote {bundle} to {target}")
        return target
