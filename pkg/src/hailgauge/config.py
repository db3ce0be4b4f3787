"""Run configuration: dataclass plus TOML loading and a canonical hash."""

from __future__ import annotations

import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .gateway import ModelEndpoint
from .metrics import POLICY_PAPER_ZERO

ENDPOINT_KEYS = {
    "model_id",
    "adapter",
    "base_url",
    "auth_env_var",
    "max_output_tokens",
    "temperature",
    "request_timeout",
    "max_retries",
    "rate_limit_per_sec",
    "mock_script",
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    samples_path: str
    endpoints: List[ModelEndpoint]
    strategies: List[str]
    output_dir: str
    annotations_path: Optional[str] = None
    scoring_policy: str = POLICY_PAPER_ZERO
    max_concurrency: int = 1
    cache_dir: Optional[str] = None
    prompts_dir: Optional[str] = None
    use_raw_values: bool = False
    max_plausible_cm: Optional[float] = 50.0
    convert_mm: bool = True
    only_samples: Optional[List[str]] = None
    run_id: Optional[str] = None
    prompt_hashes: Dict[str, str] = field(default_factory=dict)

    def canonical_dict(self) -> dict:
        """Everything that affects run results, in a stable shape."""
        return {
            "samples_path": self.samples_path,
            "annotations_path": self.annotations_path,
            "endpoints": [
                {
                    "model_id": e.model_id,
                    "adapter": e.adapter,
                    "base_url": e.base_url,
                    "max_output_tokens": e.max_output_tokens,
                    "temperature": e.temperature,
                    "mock_script": e.mock_script,
                }
                for e in sorted(self.endpoints, key=lambda e: e.model_id)
            ],
            "strategies": sorted(self.strategies),
            "scoring_policy": self.scoring_policy,
            "use_raw_values": self.use_raw_values,
            "max_plausible_cm": self.max_plausible_cm,
            "convert_mm": self.convert_mm,
            "only_samples": sorted(self.only_samples) if self.only_samples else None,
            "prompt_hashes": dict(sorted(self.prompt_hashes.items())),
        }

    def config_hash(self) -> str:
        payload = json.dumps(self.canonical_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(payload).hexdigest()


def _endpoint_from_table(name: str, table: dict, config_dir: Path) -> ModelEndpoint:
    unknown = set(table) - ENDPOINT_KEYS
    if unknown:
        raise ConfigError(f"[endpoints.{name}] has unknown keys: {sorted(unknown)}")
    table = dict(table)
    table.setdefault("model_id", name)
    if table.get("mock_script"):
        table["mock_script"] = str(_resolve(config_dir, table["mock_script"]))
    return ModelEndpoint(**table)


def _resolve(base: Path, value: str) -> Path:
    path = Path(value)
    return path if path.is_absolute() else base / path


def load_config(path: Path | str) -> RunConfig:
    """Load a TOML run config with [dataset], [endpoints.*], and [run] sections."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from exc
    base = path.parent
    dataset = data.get("dataset", {})
    run = data.get("run", {})
    endpoints_table = data.get("endpoints", {})
    if "samples" not in dataset:
        raise ConfigError("[dataset] section must set 'samples'")
    if not endpoints_table:
        raise ConfigError("at least one [endpoints.<name>] section is required")
    endpoints = [
        _endpoint_from_table(name, table, base)
        for name, table in endpoints_table.items()
    ]
    annotations = dataset.get("annotations")
    return RunConfig(
        samples_path=str(_resolve(base, dataset["samples"])),
        annotations_path=str(_resolve(base, annotations)) if annotations else None,
        endpoints=endpoints,
        strategies=list(run.get("strategies", ["P1", "P2"])),
        output_dir=str(_resolve(base, run.get("output_dir", "runs"))),
        scoring_policy=run.get("scoring_policy", POLICY_PAPER_ZERO),
        max_concurrency=int(run.get("max_concurrency", 1)),
        cache_dir=str(_resolve(base, run["cache_dir"])) if run.get("cache_dir") else None,
        prompts_dir=str(_resolve(base, run["prompts_dir"])) if run.get("prompts_dir") else None,
        use_raw_values=bool(run.get("use_raw_values", False)),
        max_plausible_cm=run.get("max_plausible_cm", 50.0),
        convert_mm=bool(run.get("convert_mm", True)),
        run_id=run.get("run_id"),
    )
