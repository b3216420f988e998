"""INI config files with [model], [train] and [simulate] sections.

Model and training keys may sit in either [model] or [train]; they share one
namespace. Example::

    [train]
    lr = 0.05
    epochs = 30
    embed_dim = 8

    [simulate]
    horizon = 50
    node_universe = 20
    g0_nodes = 10
    rates = 0.05, 0.02, 0.1, 0.05, 0.5, 0.3
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields
from pathlib import Path

from .params import ModelConfig, ModelParams, load_model
from .simulator import SimSpec, random_initial_graph
from .training import TrainConfig

MODEL_KEYS = {"embed_dim", "attr_embed_dim", "raw_dim", "bptt_window", "edge_attr_factor"}
TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


class ConfigError(ValueError):
    pass


def _convert(name: str, raw: str, typ):
    try:
        if typ is bool or typ == "bool":
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if name == "kinds":
            return tuple(int(x) for x in raw.replace(",", " ").split())
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


@dataclass
class RunConfig:
    train: TrainConfig
    model: dict
    simulate: dict

    def model_config(self, node_attr_dim: int, edge_attr_dim: int) -> ModelConfig:
        return ModelConfig(node_attr_dim=node_attr_dim, edge_attr_dim=edge_attr_dim, **self.model)


def parse_config(text: str, seed: int | None = None) -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    unknown = set(cp.sections()) - {"model", "train", "simulate"}
    if unknown:
        raise ConfigError(f"unknown sections: {sorted(unknown)}")
    flat: dict[str, str] = {}
    for sec in ("model", "train"):
        if cp.has_section(sec):
            flat.update(cp[sec])
    bad = set(flat) - MODEL_KEYS - TRAIN_KEYS
    if bad:
        raise ConfigError(f"unknown keys: {sorted(bad)}")
    model_types = {f.name: f.type for f in fields(ModelConfig)}
    train_types = {f.name: f.type for f in fields(TrainConfig)}
    model = {k: _convert(k, v, model_types[k]) for k, v in flat.items() if k in MODEL_KEYS}
    train = {k: _convert(k, v, train_types[k]) for k, v in flat.items() if k in TRAIN_KEYS}
    if seed is not None:
        train["seed"] = seed
    sim = dict(cp["simulate"]) if cp.has_section("simulate") else {}
    if seed is not None and sim:
        sim["seed"] = str(seed)
    try:
        return RunConfig(TrainConfig(**train), model, sim)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def read_config(path: str | Path, seed: int | None = None) -> RunConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), seed)


def sim_spec(run: RunConfig, base_dir: Path | None = None) -> SimSpec:
    s = run.simulate
    if not s:
        raise ConfigError("config has no [simulate] section")
    try:
        seed = int(s.get("seed", 0))
        node_dim = int(s.get("node_attr_dim", 2))
        edge_dim = int(s.get("edge_attr_dim", 1))
        header = random_initial_graph(
            n_universe=int(s["node_universe"]),
            n_nodes=int(s.get("g0_nodes", 0)),
            n_edges=int(s.get("g0_edges", 0)),
            node_attr_dim=node_dim,
            edge_attr_dim=edge_dim,
            seed=seed,
        )
        source = s.get("source", "constant")
        kw = dict(
            horizon=float(s["horizon"]),
            header=header,
            attr_mode=s.get("attr_mode", "constant"),
            attr_std=float(s.get("attr_std", 0.1)),
            seed=seed,
        )
        if source == "constant":
            rates = tuple(float(x) for x in s["rates"].replace(",", " ").split())
            return SimSpec(rates=rates, **kw)
        if source == "model":
            if "model" in s:
                path = Path(s["model"])
                if base_dir is not None and not path.is_absolute():
                    path = base_dir / path
                params, mcfg = load_model(path)
            else:
                mcfg = run.model_config(node_dim, edge_dim)
                params = ModelParams.initialize(mcfg, seed=int(s.get("model_seed", seed)))
            return SimSpec(params=params, model_cfg=mcfg, **kw)
        raise ConfigError(f"unknown simulate source {source!r}")
    except KeyError as exc:
        raise ConfigError(f"[simulate] missing key {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
