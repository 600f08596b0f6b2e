# src/runner/scenario_loader.py
from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any, List, Optional, Sequence

from pydantic import ValidationError as SchemaError

from src.runner.scenario_config import ScenarioConfig
from src.shared.errors import ConfigError


class ScenarioLoader:
    """
    Loads scenario configs from:
      repo_root/scenarios/*.json
    """

    def __init__(self, scenario_dir: Optional[str | Path] = None) -> None:
        self._scenario_dir = Path(scenario_dir) if scenario_dir else self._default_scenario_dir()

    def list_scenario_paths(self) -> List[Path]:
        if not self._scenario_dir.exists():
            return []
        return sorted(self._scenario_dir.glob("*.json"))

    def list_names(self) -> List[str]:
        return [p.stem for p in self.list_scenario_paths()]

    def load(self, name: str) -> Optional[ScenarioConfig]:
        """
        Load one built-in scenario by file stem; None if absent.
        """
        p = self.scenario_path(name)
        if not p.exists():
            return None
        return load_scenario_file(p)

    def scenario_path(self, name: str) -> Path:
        return self._scenario_dir / f"{name}.json"

    def _default_scenario_dir(self) -> Path:
        repo_root = Path(__file__).resolve().parents[2]
        return repo_root / "scenarios"


def load_scenario_file(path: str | Path) -> ScenarioConfig:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"scenario file not found: {p}", path=str(p))
    text = p.read_text(encoding="utf-8", errors="replace")
    return parse_scenario_text(text, source=str(p))


def parse_scenario_text(text: str, source: str = "<string>") -> ScenarioConfig:
    """
    Parse and validate a scenario document.

    ConfigError carries the 1-based line of the problem: exact for JSON
    syntax errors, best effort (line of the offending key) for schema errors.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: invalid JSON: {exc.msg}", line=exc.lineno, path="") from exc

    try:
        return ScenarioConfig.model_validate(data)
    except SchemaError as exc:
        first = exc.errors()[0]
        loc = [str(x) for x in first.get("loc", ())]
        json_path = ".".join(loc)
        line = _line_of(text, first.get("loc", ()))
        where = f"{source}:{line}" if line else source
        raise ConfigError(
            f"{where}: {json_path or '<root>'}: {first.get('msg', 'invalid value')}",
            line=line,
            path=json_path,
        ) from exc


def _line_of(text: str, loc: Sequence[Any]) -> Optional[int]:
    """Line of the deepest named key in loc (searched after its parents), else None."""
    lines = text.splitlines()
    start = 0
    found: Optional[int] = None
    for part in loc:
        if not isinstance(part, str):
            continue
        pattern = re.compile(r'"' + re.escape(part) + r'"\s*:')
        for i in range(start, len(lines)):
            if pattern.search(lines[i]):
                found = i + 1
                start = i
                break
    return found
