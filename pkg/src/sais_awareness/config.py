"""Run configuration: INI-style ``key = value`` sections, per-node vectors in
CSV side files.

Example::

    [graph]
    kind = preferential_attachment   ; or: file = edges.txt
    n = 200
    m0 = 2
    seed = 0

    [params]
    delta = 1/7
    beta = recipe        ; stress * delta / lambda1(A)
    stress = 1.5
    r = 1/2

    [cost]
    C_bar = 1
    kappa_lower = 0
    kappa_upper_over_beta = 3.243

A value naming a ``.csv`` file is read as a per-node vector (one number per
line, last column used, non-numeric header lines skipped). Paths are
relative to the config file.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Optional

import numpy as np

from .allocation import CostModel
from .dynamics import SaisParams
from .graph import Graph, generate, largest_eigenvalue, load_edge_list

PUBLISHED_BETA = 7.4e-3


class ConfigError(ValueError):
    pass


def _number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"not a number: {text!r}") from None


def _read_vector(path: Path) -> np.ndarray:
    if not path.exists():
        raise ConfigError(f"vector file not found: {path}")
    values = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(Fraction(line.split(",")[-1].strip())))
        except ValueError:
            if values:
                raise ConfigError(f"bad entry {line!r} in {path}") from None
    return np.array(values)


@dataclass
class RunConfig:
    sections: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        if path.suffix == ".json":
            # a manifest written by a previous run
            data = json.loads(path.read_text())
            return cls(data["config"], Path(data.get("base_dir", path.parent)))
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        parser.optionxform = str
        try:
            parser.read_string(path.read_text())
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        sections = {s: dict(parser[s]) for s in parser.sections()}
        return cls(sections, path.parent.resolve())

    def get(self, section: str, key: str, default=None) -> Optional[str]:
        return self.sections.get(section, {}).get(key, default)

    def set(self, section: str, key: str, value) -> None:
        self.sections.setdefault(section, {})[key] = str(value)

    def number(self, section: str, key: str, default=None) -> Optional[float]:
        raw = self.get(section, key)
        return default if raw is None else _number(raw)

    def vector(self, section: str, key: str, n: int, default=None) -> Optional[np.ndarray]:
        raw = self.get(section, key)
        if raw is None:
            return None if default is None else np.broadcast_to(float(default), (n,)).copy()
        if raw.strip().endswith(".csv"):
            vec = _read_vector(self.base_dir / raw.strip())
            if vec.shape != (n,):
                raise ConfigError(f"{raw} holds {vec.size} values, graph has {n} nodes")
            return vec
        return np.full(n, _number(raw))

    # resolution -------------------------------------------------------------

    def graph(self) -> Graph:
        source = self.get("graph", "file")
        if source is not None:
            path = self.base_dir / source
            if not path.exists():
                raise ConfigError(f"graph file not found: {path}")
            return load_edge_list(path.read_text())
        kind = self.get("graph", "kind")
        if kind is None:
            raise ConfigError("[graph] needs either 'file' or 'kind'")
        n = int(self.number("graph", "n", 0))
        kwargs = {}
        if self.get("graph", "p") is not None:
            kwargs["p"] = self.number("graph", "p")
        if self.get("graph", "m0") is not None:
            kwargs["m0"] = int(self.number("graph", "m0"))
        try:
            return generate(kind, n, int(self.number("graph", "seed", 0)), **kwargs)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def params(self, g: Graph, kappa=None) -> tuple[SaisParams, dict]:
        """SAIS parameters and provenance notes for the manifest."""
        n = g.n
        notes = {}
        delta = self.vector("params", "delta", n)
        if delta is None:
            raise ConfigError("[params] delta is required")
        r = self.vector("params", "r", n, default=0.5)
        if (self.get("params", "beta") or "").strip() == "recipe":
            stress = self.number("params", "stress", 1.5)
            lam = largest_eigenvalue(g.adjacency()).lambda1 if g.m else 0.0
            if lam <= 0:
                raise ConfigError("beta = recipe needs a graph with at least one edge")
            beta = stress * delta / lam
            notes["beta_recipe"] = {
                "formula": "stress * delta / lambda1(A)",
                "stress": stress,
                "lambda1": lam,
                "beta_from_formula": beta.tolist() if np.ptp(beta) else float(beta[0]),
                "published_beta": PUBLISHED_BETA,
            }
        else:
            beta = self.vector("params", "beta", n)
            if beta is None:
                raise ConfigError("[params] beta is required")
        if kappa is None:
            kappa = self.vector("params", "kappa", n, default=0.0)
        try:
            return SaisParams.create(n, beta, delta, kappa, r), notes
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def cost(self, params: SaisParams) -> CostModel:
        n = params.n
        C_bar = self.vector("cost", "C_bar", n, default=1.0)
        kl = self.vector("cost", "kappa_lower", n, default=0.0)
        ku = self.vector("cost", "kappa_upper", n)
        if ku is None:
            ratio = self.number("cost", "kappa_upper_over_beta")
            if ratio is None:
                raise ConfigError("[cost] needs kappa_upper or kappa_upper_over_beta")
            ku = ratio * params.beta
        try:
            return CostModel.for_params(params, C_bar, kl, ku)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return {"config": self.sections, "base_dir": str(self.base_dir)}
