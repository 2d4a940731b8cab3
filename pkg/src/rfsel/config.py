"""Run configuration: parsing, validation and the standard method grid."""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .dataset import Dataset, ingest_csv
from .evaluation import DEFAULT_REPLICATES, MethodSpec
from .forest import ForestParams
from .selectors import ImportanceSource
from .synthgen import GroundTruth, SyntheticSpec, generate_synthetic

WORKERS_ENV = "RFSEL_WORKERS"
FERN_COVERAGE = 30  # expected tests per column at the start of a selection


class ConfigError(ValueError):
    pass


@dataclass
class DataSource:
    synthetic: Optional[SyntheticSpec] = None
    csv_path: Optional[str] = None
    label_column: object = -1
    delimiter: str = ","

    def load(self) -> tuple[Dataset, Optional[GroundTruth]]:
        if self.synthetic is not None:
            return generate_synthetic(self.synthetic)
        return ingest_csv(self.csv_path, self.label_column, self.delimiter), None

    def to_dict(self) -> dict:
        if self.synthetic is not None:
            return {"synthetic": asdict(self.synthetic)}
        return {"csv": {"path": self.csv_path, "label_column": self.label_column,
                        "delimiter": self.delimiter}}


@dataclass
class RunConfig:
    data: DataSource
    methods: list
    seed: int
    replicates: int = DEFAULT_REPLICATES
    scs_alpha: float = 0.01
    compare_alpha: float = 0.01
    validation: ForestParams = field(default_factory=ForestParams)
    duplicates: str = "drop"
    output: str = "run"
    workers: int = 1
    raw: dict = field(default_factory=dict)


def ferns_for_coverage(n_features: int, depth: int, uses: int = FERN_COVERAGE) -> int:
    """Fern count giving each real or shadow column about ``uses`` tests."""
    columns = n_features + max(n_features, 5)
    return int(math.ceil(uses * columns / depth))


def _importance(d: dict, n_features: int) -> ImportanceSource:
    d = dict(d)
    if d.get("n_members") == "auto":
        if d.get("kind") != "ferns":
            raise ConfigError("n_members: auto is only defined for ferns")
        d["n_members"] = ferns_for_coverage(n_features, int(d.get("depth", 5)))
    try:
        return ImportanceSource(**d)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad importance source {d}: {e}") from None


def full_grid(ferns_members="auto", forest_members: int = 500, rfe: Optional[dict] = None,
               rrf: Optional[dict] = None) -> list:
    """The 22-row grid: RF-ACE, Boruta and RFE over ten importance sources, RRF."""
    sources = [{"kind": "ferns", "depth": k, "n_members": ferns_members} for k in range(1, 8)]
    sources += [{"kind": "forest", "measure": m, "n_members": forest_members}
                for m in ("gini", "raw", "normalized")]
    labels = [f"Ferns {k}" for k in range(1, 8)] + ["RF Gini", "RF Raw", "RF Norm."]
    rows = [{"name": "RF-ACE", "selector": "rface",
             "importance": {"kind": "forest", "measure": "gini", "n_members": forest_members}}]
    rows += [{"name": f"Bor. {lab}", "selector": "boruta", "importance": src}
             for lab, src in zip(labels, sources)]
    rows += [{"name": f"RFE {lab}", "selector": "rfe", "importance": src,
              "params": dict(rfe or {})} for lab, src in zip(labels, sources)]
    rows.append({"name": "RRF", "selector": "rrf", "params": dict(rrf or {})})
    return rows


def _methods(raw_methods, n_features: int) -> list:
    if not raw_methods:
        raise ConfigError("config needs at least one method")
    rows = []
    for item in raw_methods:
        if not isinstance(item, dict):
            raise ConfigError(f"method entries must be mappings, got {item!r}")
        if "grid" in item:
            if item["grid"] != "full":
                raise ConfigError(f"unknown method grid {item['grid']!r}")
            rows += full_grid(**{k: v for k, v in item.items() if k != "grid"})
        else:
            rows.append(item)
    out = []
    for row in rows:
        try:
            name, selector = row["name"], row["selector"]
        except KeyError as e:
            raise ConfigError(f"method {row} is missing {e}") from None
        imp = row.get("importance")
        src = _importance(imp, n_features) if imp is not None else None
        try:
            out.append(MethodSpec(name, selector, src, dict(row.get("params") or {})))
        except ValueError as e:
            raise ConfigError(str(e)) from None
    names = [m.name for m in out]
    if len(set(names)) != len(names):
        raise ConfigError("method names must be unique")
    return out


def parse_config(raw: dict, base_dir: Path = Path(".")) -> tuple[RunConfig, Dataset,
                                                               Optional[GroundTruth]]:
    """Validate a config mapping; returns the config, the loaded dataset and any ground truth."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if "config" in raw and "payload_sha256" in raw:  # a run manifest
        raw = raw["config"]
    if "seed" not in raw:
        raise ConfigError("config must set a master seed")
    data = raw.get("data") or {}
    if "synthetic" in data:
        try:
            src = DataSource(synthetic=SyntheticSpec(**data["synthetic"]))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad synthetic spec: {e}") from None
    elif "csv" in data:
        c = data["csv"]
        path = Path(c["path"])
        if not path.is_absolute():
            path = base_dir / path
        src = DataSource(csv_path=str(path), label_column=c.get("label_column", -1),
                         delimiter=c.get("delimiter", ","))
    else:
        raise ConfigError("data must name either a 'synthetic' spec or a 'csv' source")
    dataset, truth = src.load()
    replicates = int(raw.get("replicates", DEFAULT_REPLICATES))
    if replicates < 2:
        raise ConfigError("replicates must be >= 2")
    alpha = raw.get("alpha") or {}
    try:
        validation = ForestParams(**(raw.get("validation") or {}))
    except (TypeError, ValueError) as e:
        raise ConfigError(f"bad validation forest: {e}") from None
    workers = raw.get("workers", os.environ.get(WORKERS_ENV, 1))
    duplicates = raw.get("duplicates", "drop")
    if duplicates not in ("keep", "drop"):
        raise ConfigError("duplicates must be 'keep' or 'drop'")
    methods = _methods(raw.get("methods"), dataset.n_features)
    if raw.get("baseline", False):
        methods.append(MethodSpec("All features", "all"))
    cfg = RunConfig(
        data=src, methods=methods, seed=int(raw["seed"]), replicates=replicates,
        scs_alpha=float(alpha.get("scs", 0.01)), compare_alpha=float(alpha.get("compare", 0.01)),
        validation=validation, duplicates=duplicates, output=str(raw.get("output", "run")),
        workers=int(workers), raw=raw)
    return cfg, dataset, truth


def load_config(path) -> tuple[RunConfig, Dataset, Optional[GroundTruth]]:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    return parse_config(raw, path.parent)
