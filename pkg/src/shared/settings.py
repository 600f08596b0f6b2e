# src/shared/settings.py
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

load_dotenv()


def _repo_root() -> Path:
    # repo_root/src/shared/settings.py -> repo_root
    return Path(__file__).resolve().parents[2]


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name, "").strip()
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        return default


def _env_path(name: str, default: Path) -> Path:
    raw = os.getenv(name, "").strip()
    return Path(raw) if raw else default


@dataclass(frozen=True)
class Settings:
    """
    Runtime knobs, read from the environment (and .env) at construction.

    POTENTIA_THREADS      worker pool bound (>= 1)
    POTENTIA_OUTPUT_ROOT  where outputs/<scenario>/ directories go
    POTENTIA_SCENARIO_DIR built-in scenario files
    """
    threads: int = field(default_factory=lambda: max(1, _env_int("POTENTIA_THREADS", 1)))
    output_root: Path = field(default_factory=lambda: _env_path("POTENTIA_OUTPUT_ROOT", _repo_root() / "outputs"))
    scenario_dir: Path = field(default_factory=lambda: _env_path("POTENTIA_SCENARIO_DIR", _repo_root() / "scenarios"))
    tol_scale: float = 1.0

    def with_overrides(
        self,
        threads: Optional[int] = None,
        output_root: Optional[str] = None,
        tol_scale: Optional[float] = None,
    ) -> "Settings":
        out = self
        if threads is not None:
            out = replace(out, threads=max(1, int(threads)))
        if output_root:
            out = replace(out, output_root=Path(output_root))
        if tol_scale is not None:
            if not (tol_scale > 0.0):
                raise ValueError("tol_scale must be > 0")
            out = replace(out, tol_scale=float(tol_scale))
        return out
