# src/shared/run_logger.py
from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional


def now_utc_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class RunEvent:
    scenario: str
    event: str  # "start" | "finish" | "failure" | "warning"
    experiment: str = ""
    status: Optional[str] = None
    message: Optional[str] = None
    data: Dict[str, Any] = field(default_factory=dict)
    timestamp_utc: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        if not d.get("timestamp_utc"):
            d["timestamp_utc"] = now_utc_iso()
        return d


class RunLogger:
    """
    Appends run events to a JSONL file.

    Default path:
      <output_dir>/events.jsonl
    """

    def __init__(self, output_dir: str | Path) -> None:
        self._log_path = Path(output_dir) / "events.jsonl"
        self._log_path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    @property
    def path(self) -> Path:
        return self._log_path

    def log(self, event: RunEvent) -> None:
        line = json.dumps(event.to_dict(), ensure_ascii=False, default=str)
        with self._lock:
            with self._log_path.open("a", encoding="utf-8") as f:
                f.write(line + "\n")
