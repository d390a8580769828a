"""Declarative run configuration: one YAML file drives every command.

Credentials never live in the config; providers reference environment
variable names. Flags override config values. `preset:<name>` resolves to a
configuration shipped with the package.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import yaml

from .detection import TokenizerConfig
from .errors import ConfigError
from .model import PropertySpec
from .providers import (
    DEFAULT_PRESENCE_PENALTY,
    DEFAULT_TEMPERATURE,
    HashEmbedder,
    HttpChatProvider,
    HttpEmbedder,
    ReplayProvider,
)
from .runner import AdapterSpec, CommandMtAdapter, FileMtAdapter, HttpMtAdapter

LLM_KINDS = ("http", "replay")
EMBEDDER_KINDS = ("http", "hash")


def derive_seed(seed: int, purpose: str) -> int:
    """Stable sub-seed for one pipeline stage, so stages are independently
    reproducible from the single configured seed."""
    digest = hashlib.sha256(f"{seed}:{purpose}".encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


@dataclass(frozen=True)
class LlmConfig:
    kind: str
    url: str = ""
    model: str = ""
    api_key_env: str = ""
    temperature: float = DEFAULT_TEMPERATURE
    presence_penalty: float = DEFAULT_PRESENCE_PENALTY
    replay_dir: str = ""

    def __post_init__(self) -> None:
        if self.kind not in LLM_KINDS:
            raise ConfigError(f"llm provider kind must be one of {LLM_KINDS}, got {self.kind!r}")
        if self.kind == "http" and not self.url:
            raise ConfigError("llm provider kind 'http' requires a url")
        if self.kind == "replay" and not self.replay_dir:
            raise ConfigError("llm provider kind 'replay' requires a replay_dir")


@dataclass(frozen=True)
class EmbedderConfig:
    kind: str
    url: str = ""
    api_key_env: str = ""
    dim: int = 32

    def __post_init__(self) -> None:
        if self.kind not in EMBEDDER_KINDS:
            raise ConfigError(
                f"embedder kind must be one of {EMBEDDER_KINDS}, got {self.kind!r}"
            )
        if self.kind == "http" and not self.url:
            raise ConfigError("embedder kind 'http' requires a url")


@dataclass(frozen=True)
class RunConfig:
    base_dir: Path
    workspace: Path
    seed: int
    target_count: int
    k: int
    alpha: float
    tokenizer: TokenizerConfig
    token_boundary: bool
    llm: LlmConfig
    embedder: EmbedderConfig
    properties: tuple[PropertySpec, ...]
    systems: tuple[AdapterSpec, ...]
    offline: bool = False

    def property_by_id(self, property_id: str) -> PropertySpec:
        for spec in self.properties:
            if spec.id == property_id:
                return spec
        raise ConfigError(f"unknown property id {property_id!r}")

    def system_by_id(self, system_id: str) -> AdapterSpec:
        for spec in self.systems:
            if spec.system_id == system_id:
                return spec
        raise ConfigError(f"unknown system id {system_id!r}")

    def property_dir(self, property_id: str) -> Path:
        return self.workspace / property_id

    def build_llm(self):
        if self.offline and self.llm.kind == "http":
            raise ConfigError("--offline forbids the http LLM provider")
        if self.llm.kind == "replay":
            return ReplayProvider(self._resolve(self.llm.replay_dir))
        return HttpChatProvider(
            url=self.llm.url, model=self.llm.model, api_key_env=self.llm.api_key_env
        )

    def build_embedder(self):
        if self.offline and self.embedder.kind == "http":
            raise ConfigError("--offline forbids the http embedding provider")
        if self.embedder.kind == "hash":
            return HashEmbedder(dim=self.embedder.dim)
        return HttpEmbedder(url=self.embedder.url, api_key_env=self.embedder.api_key_env)

    def build_adapter(self, spec: AdapterSpec):
        if self.offline and spec.kind == "http":
            raise ConfigError(f"--offline forbids http adapter {spec.system_id!r}")
        if spec.kind == "http":
            return HttpMtAdapter(spec)
        if spec.kind == "command":
            return CommandMtAdapter(spec)
        return FileMtAdapter(replace(spec, path=str(self._resolve(spec.path))))

    def _resolve(self, rel: str) -> Path:
        path = Path(rel)
        return path if path.is_absolute() else self.base_dir / path


def _expect_mapping(obj: Any, context: str) -> Mapping:
    if not isinstance(obj, Mapping):
        raise ConfigError(f"{context} must be a mapping")
    return obj


def _get(d: Mapping, key: str, context: str, default: Any = ...) -> Any:
    if key in d:
        return d[key]
    if default is ...:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return default


def packaged_template(name: str) -> str:
    return resources.files("mtbehave.prompts").joinpath(name).read_text(encoding="utf-8")


def _load_template(base_dir: Path, rel: str | None, default_name: str, context: str) -> str:
    if not rel:
        return packaged_template(default_name)
    path = Path(rel)
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(f"{context}: template file {path} not found")
    return path.read_text(encoding="utf-8")


def _parse_property(raw: Any, base_dir: Path) -> PropertySpec:
    d = _expect_mapping(raw, "properties entry")
    prop_id = str(_get(d, "id", "property"))
    context = f"property {prop_id!r}"
    detector = str(_get(d, "detector", context, "exhaustive"))
    pair = _get(d, "language_pair", context)
    if not isinstance(pair, (list, tuple)) or len(pair) != 2:
        raise ConfigError(f"{context}: language_pair must be [source, target]")
    demos = _get(d, "demos", context)
    if not isinstance(demos, list) or not all(isinstance(x, str) for x in demos):
        raise ConfigError(f"{context}: demos must be a list of strings")
    source_prompt = _load_template(base_dir, d.get("source_prompt"), "source.txt", context)
    candidate_default = (
        "contrastive_correct.txt" if detector == "contrastive" else "candidates.txt"
    )
    candidate_prompt = _load_template(
        base_dir, d.get("candidate_prompt"), candidate_default, context
    )
    foil_prompt = None
    if detector == "contrastive":
        foil_prompt = _load_template(
            base_dir, d.get("foil_prompt"), "contrastive_foil.txt", context
        )
    return PropertySpec(
        id=prop_id,
        name=str(_get(d, "name", context)),
        detector=detector,
        source_prompt=source_prompt,
        candidate_prompt=candidate_prompt,
        foil_prompt=foil_prompt,
        demos=tuple(demos),
        language_pair=(str(pair[0]), str(pair[1])),
    )


def _parse_system(raw: Any) -> AdapterSpec:
    d = _expect_mapping(raw, "systems entry")
    system_id = str(_get(d, "id", "system"))
    context = f"system {system_id!r}"
    pair = d.get("language_pair", ["", ""])
    return AdapterSpec(
        system_id=system_id,
        kind=str(_get(d, "kind", context)),
        endpoint=str(d.get("endpoint", "")),
        command=str(d.get("command", "")),
        path=str(d.get("path", "")),
        language_pair=(str(pair[0]), str(pair[1])),
        batch_size=int(d.get("batch_size", 32)),
    )


def resolve_config_path(spec: str) -> Path:
    """Resolve a --config argument; `preset:<name>` maps to packaged configs."""
    if spec.startswith("preset:"):
        name = spec.split(":", 1)[1].replace("-", "_")
        packaged = resources.files("mtbehave.presets").joinpath(f"{name}.yaml")
        path = Path(str(packaged))
        if not path.exists():
            raise ConfigError(f"unknown preset {spec!r}")
        return path
    path = Path(spec)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    return path


def load_config(path_spec: str, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Parse and validate a run configuration.

    `overrides` carries CLI flag values (seed, k, alpha, target_count,
    offline, workspace); flags win over the file.
    """
    path = resolve_config_path(path_spec)
    overrides = dict(overrides or {})
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    d = _expect_mapping(raw if raw is not None else {}, str(path))
    base_dir = path.parent

    stats = _expect_mapping(d.get("stats", {}), "stats")
    tok = _expect_mapping(d.get("tokenizer", {}), "tokenizer")
    det = _expect_mapping(d.get("detection", {}), "detection")
    providers = _expect_mapping(d.get("providers", {}), "providers")

    properties = tuple(_parse_property(p, base_dir) for p in d.get("properties", []))
    ids = [p.id for p in properties]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ConfigError(f"duplicate property ids: {dupes}")
    systems = tuple(_parse_system(s) for s in d.get("systems", []))
    sys_ids = [s.system_id for s in systems]
    if len(set(sys_ids)) != len(sys_ids):
        dupes = sorted({i for i in sys_ids if sys_ids.count(i) > 1})
        raise ConfigError(f"duplicate system ids: {dupes}")

    llm_cfg_raw = providers.get("llm")
    if llm_cfg_raw is not None:
        llm_map = _expect_mapping(llm_cfg_raw, "providers.llm")
        llm = LlmConfig(
            kind=str(_get(llm_map, "kind", "providers.llm")),
            url=str(llm_map.get("url", "")),
            model=str(llm_map.get("model", "")),
            api_key_env=str(llm_map.get("api_key_env", "")),
            temperature=float(llm_map.get("temperature", DEFAULT_TEMPERATURE)),
            presence_penalty=float(llm_map.get("presence_penalty", DEFAULT_PRESENCE_PENALTY)),
            replay_dir=str(llm_map.get("replay_dir", "")),
        )
    else:
        llm = LlmConfig(kind="replay", replay_dir="replays")

    emb_cfg_raw = providers.get("embedder")
    if emb_cfg_raw is not None:
        emb_map = _expect_mapping(emb_cfg_raw, "providers.embedder")
        embedder = EmbedderConfig(
            kind=str(_get(emb_map, "kind", "providers.embedder")),
            url=str(emb_map.get("url", "")),
            api_key_env=str(emb_map.get("api_key_env", "")),
            dim=int(emb_map.get("dim", 32)),
        )
    else:
        embedder = EmbedderConfig(kind="hash")

    workspace_raw = overrides.get("workspace") or d.get("workspace", "workspace")
    workspace = Path(workspace_raw)
    if not workspace.is_absolute():
        workspace = base_dir / workspace

    config = RunConfig(
        base_dir=base_dir,
        workspace=workspace,
        seed=int(overrides.get("seed") if overrides.get("seed") is not None else d.get("seed", 0)),
        target_count=int(
            overrides.get("target_count")
            if overrides.get("target_count") is not None
            else d.get("target_count", 1000)
        ),
        k=int(overrides.get("k") if overrides.get("k") is not None else stats.get("k", 1000)),
        alpha=float(
            overrides.get("alpha")
            if overrides.get("alpha") is not None
            else stats.get("alpha", 0.05)
        ),
        tokenizer=TokenizerConfig(
            mode=str(tok.get("mode", "whitespace")),
            strip_edge_punct=bool(tok.get("strip_edge_punct", True)),
        ),
        token_boundary=bool(det.get("token_boundary", False)),
        llm=llm,
        embedder=embedder,
        properties=properties,
        systems=systems,
        offline=bool(overrides.get("offline", False)),
    )
    if config.seed < 0:
        raise ConfigError("seed must be >= 0")
    if config.target_count < 1:
        raise ConfigError("target_count must be >= 1")
    return config
