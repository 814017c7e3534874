"""One serializable configuration object for every pipeline stage.

A RunConfig collects the knobs of all stages so a whole pipeline run is
reproducible from a single JSON file. Its hash is embedded in every
artifact a stage writes; two artifacts with the same hash were produced
by byte-identical configuration. Worker count and endpoint credentials
are deliberately excluded from the hash — neither changes output bytes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .canon import stable_hash
from .errors import ConfigConflict
from .retrieval import DEFAULT_STRUCT_SEED, RetrievalWeights
from .runner import DEFAULT_BUDGETS, PolicyConfig
from .scoring import DEFAULT_LAMBDA, ScoringConfig

PATH_KEYS = (
    "raw",
    "graphs",
    "warnings",
    "bench",
    "skips",
    "split",
    "memory",
    "log",
    "report",
    "predictions",
)


def _default_weights() -> dict:
    return RetrievalWeights().to_dict()


def _default_scoring() -> dict:
    return ScoringConfig().to_dict()


def _default_runner() -> dict:
    return {
        "planning": True,
        "fallback": True,
        "budgets": dict(DEFAULT_BUDGETS),
        "few_shot_count": 3,
        "few_shot_seed": 42,
        "rag_k": 3,
        "graph_k": 3,
        "graph_hops": 1,
        "log_full_prompts": False,
    }


def _default_endpoints() -> dict:
    return {"embed_url": "", "embed_token": "", "chat_url": "", "chat_token": ""}


@dataclass
class RunConfig:
    paths: dict[str, str] = field(default_factory=dict)
    seed: int = 0
    k_options: int = 4
    n_records: int = 200
    protocol: str = "random"
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    held_out_class: str = "battery"
    dev_ratio: float = 0.1
    partition: str = "test"
    max_prefix_len: int = 4
    struct_seed: int = DEFAULT_STRUCT_SEED
    embeddings: bool = True
    field_map: dict | None = None
    caps: dict | None = None
    weights: dict = field(default_factory=_default_weights)
    top_k: int = 8
    lam: float = DEFAULT_LAMBDA
    policy: str = "argmax_hybrid"
    scoring: dict = field(default_factory=_default_scoring)
    runner: dict = field(default_factory=_default_runner)
    endpoints: dict = field(default_factory=_default_endpoints)
    pairs: str = ""
    axes: list[str] | None = None
    jobs: int = 1

    def __post_init__(self):
        self.ratios = tuple(float(r) for r in self.ratios)
        strangers = set(self.paths) - set(PATH_KEYS)
        if strangers:
            raise ConfigConflict(f"unknown path keys: {sorted(strangers)}")
        self.runner = {**_default_runner(), **self.runner}
        self.endpoints = {**_default_endpoints(), **self.endpoints}

    def to_dict(self) -> dict:
        return {
            "paths": dict(sorted(self.paths.items())),
            "seed": self.seed,
            "k_options": self.k_options,
            "n_records": self.n_records,
            "protocol": self.protocol,
            "ratios": list(self.ratios),
            "held_out_class": self.held_out_class,
            "dev_ratio": self.dev_ratio,
            "partition": self.partition,
            "max_prefix_len": self.max_prefix_len,
            "struct_seed": self.struct_seed,
            "embeddings": self.embeddings,
            "field_map": dict(self.field_map) if self.field_map is not None else None,
            "caps": dict(self.caps) if self.caps is not None else None,
            "weights": dict(self.weights),
            "top_k": self.top_k,
            "lam": self.lam,
            "policy": self.policy,
            "scoring": dict(self.scoring),
            "runner": dict(self.runner),
            "endpoints": dict(self.endpoints),
            "pairs": self.pairs,
            "axes": list(self.axes) if self.axes is not None else None,
            "jobs": self.jobs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        strangers = set(d) - known
        if strangers:
            raise ConfigConflict(f"unknown configuration keys: {sorted(strangers)}")
        kwargs = dict(d)
        if "ratios" in kwargs:
            kwargs["ratios"] = tuple(kwargs["ratios"])
        if kwargs.get("axes") is not None:
            kwargs["axes"] = list(kwargs["axes"])
        return cls(**kwargs)

    def merged(self, overrides: dict) -> "RunConfig":
        """A copy with ``overrides`` applied; nested dicts merge per key."""
        base = self.to_dict()
        for key, value in overrides.items():
            if key not in base:
                raise ConfigConflict(f"unknown configuration key {key!r}")
            if isinstance(base[key], dict) and isinstance(value, dict):
                base[key] = {**base[key], **value}
            else:
                base[key] = value
        return RunConfig.from_dict(base)

    def config_hash(self) -> str:
        """Stable digest of everything that can change artifact content.

        File locations, worker count, and credentials are excluded: none
        of them alters the rows a stage computes, so renaming an output
        or changing parallelism does not masquerade as a different run.
        """
        d = self.to_dict()
        del d["paths"]
        del d["jobs"]
        d["endpoints"] = {
            k: v for k, v in d["endpoints"].items() if not k.endswith("_token")
        }
        return stable_hash(d)

    # --- stage-object views -------------------------------------------------------------

    def retrieval_weights(self) -> RetrievalWeights:
        return RetrievalWeights(**self.weights)

    def scoring_config(self) -> ScoringConfig:
        return ScoringConfig.from_dict(self.scoring)

    def policy_config(self) -> PolicyConfig:
        r = self.runner
        return PolicyConfig(
            policy=self.policy,
            lam=self.lam,
            top_k=self.top_k,
            weights=self.retrieval_weights(),
            scoring=self.scoring_config(),
            planning=bool(r["planning"]),
            fallback=bool(r["fallback"]),
            budgets={**DEFAULT_BUDGETS, **r["budgets"]},
            few_shot_count=int(r["few_shot_count"]),
            few_shot_seed=int(r["few_shot_seed"]),
            rag_k=int(r["rag_k"]),
            graph_k=int(r["graph_k"]),
            graph_hops=int(r["graph_hops"]),
            seed=self.seed,
            log_full_prompts=bool(r["log_full_prompts"]),
        )

    def path(self, key: str) -> str:
        if key not in PATH_KEYS:
            raise ConfigConflict(f"unknown path key {key!r}")
        value = self.paths.get(key, "")
        if not value:
            raise ConfigConflict(f"no {key!r} path configured")
        return value


def load_config_file(path: str | Path) -> dict:
    """Raw dict from a JSON config file (validated on merge)."""
    with Path(path).open("r", encoding="utf-8") as fh:
        content = json.load(fh)
    if not isinstance(content, dict):
        raise ConfigConflict(f"config file {path} must hold a JSON object")
    return content
