"""Flat key-value run configuration (JSON), units spelled out in key names."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path

from ..circuits import SeedMaterial, Topology, gen_topology

__all__ = ["ConfigError", "ProtocolConfig"]


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProtocolConfig:
    n: int = 14
    d: int = 10
    M: int = 2000
    b: int = 15
    m: int = 200
    chi: float = 0.3
    t_threshold_s: float = 2.2
    cutoff_per_sample_s: float = 2.5
    k_seed_hex: str = "00c0ffee"
    topo_seed: int = 0
    test_set_nonce: str = ""
    host: str = "127.0.0.1"
    port: int = 0
    precheck_timeout_s: float = 30.0
    precheck_retries: int = 3
    backoff_s: float = 0.05
    max_consecutive_failures: int = 20
    eps_sou: float = 1e-6
    adversary_P_eff_flops: float = 0.0
    B_flops: float = 90e18
    ext_seed_hex: str | None = None
    ell: int | None = None

    def __post_init__(self):
        try:
            SeedMaterial.from_hex(self.k_seed_hex)
        except ValueError as e:
            raise ConfigError(f"k_seed_hex: {e}") from None
        if self.n < 2 or self.n % 2:
            raise ConfigError("n must be even and >= 2")
        if not 1 <= self.d:
            raise ConfigError("d must be >= 1")
        if self.b < 1:
            raise ConfigError("b must be >= 1")
        if not 1 <= self.m <= self.M:
            raise ConfigError(f"need 1 <= m <= M, got m={self.m}, M={self.M}")
        if self.cutoff_per_sample_s <= 0 or self.t_threshold_s <= 0:
            raise ConfigError("time limits must be positive")
        if not 0 < self.eps_sou <= 1:
            raise ConfigError("eps_sou must be in (0, 1]")

    @property
    def seed(self) -> SeedMaterial:
        return SeedMaterial.from_hex(self.k_seed_hex)

    def topology(self) -> Topology:
        return gen_topology(self.n, self.d, self.topo_seed, allow_repeats=self.d > self.n - 1)

    def batch_cutoff_s(self, size: int) -> float:
        """Cutoff for a batch of ``size`` circuits: per-sample cutoff times size (2b for a full batch)."""
        return self.cutoff_per_sample_s * size

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def replace(self, **kw) -> "ProtocolConfig":
        return dataclasses.replace(self, **kw)

    @classmethod
    def from_dict(cls, d: dict) -> "ProtocolConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_file(cls, path: str | Path) -> "ProtocolConfig":
        try:
            data = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a flat JSON object")
        return cls.from_dict(data)
