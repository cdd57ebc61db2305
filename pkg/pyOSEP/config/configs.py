"""Configuration module.

   Notes:
   ------
       1- ProtocolConfig is readonly. Profiles are stored as TOML (or JSON)
          files and loaded by 'load_config'.
       2- Dict is the payload container used everywhere a free form
          mapping is exchanged (messages, pipelines, reports).
"""
from __future__ import annotations

import json
import platform
from dataclasses import asdict, dataclass, fields, replace
from enum import Enum
from pathlib import Path

import pytoml
from addict import Dict as DefaultDict


class SecurityProfile(str, Enum):
    STANDARD = "STANDARD"
    SECURE = "SECURE"


class Dict(DefaultDict):
    def __missing__(self, key) -> None:
        # calling dict.unassinged properties return None
        return None


class ConfigError(Exception):
    def __init__(self, message: str, cause=None) -> None:
        self.message = message
        self.__cause__ = cause
        super().__init__(self.message)


# Entropy of each mask element demanded by the secure profile.
SECURE_MASK_BITS = 128


@dataclass(frozen=True)
class ProtocolConfig:
    """Parameters of one outsourced solve.

    Attributes
    ----------
    eps : float
        Convergence tolerance on ||x^k - x^{k+1}||_inf.
    omega : int | None
        Iteration cap. None means 10 * n + 1000 for an n x n matrix.
    mask_bits : int
        Bit length of every mask element.
    use_scaling : bool
        Multiply each outgoing masked vector by a fresh random a_k.
    verify_tol : float
        Relative residual tolerance of the final verification.
    key_bits : int
        Paillier modulus size used when a key has to be generated.
    frac_bits : int
        Fractional bits of the fixed-point encoding.
    guard_bits : int
        Headroom demanded by the codec for n-term dot products.
    profile : SecurityProfile
        SECURE enforces mask_bits >= 128.
    timeout : float
        Seconds to wait for each message from the worker.
    """
    eps: float = 1e-9
    omega: int | None = None
    mask_bits: int = SECURE_MASK_BITS
    use_scaling: bool = False
    verify_tol: float = 1e-6
    key_bits: int = 2048
    frac_bits: int = 40
    guard_bits: int = 64
    profile: SecurityProfile = SecurityProfile.STANDARD
    timeout: float = 30.0

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}.")
        if self.omega is not None and self.omega < 1:
            raise ConfigError(f"omega must be at least 1, got {self.omega}.")
        if self.mask_bits < 1:
            raise ConfigError(f"mask_bits must be at least 1, got {self.mask_bits}.")
        if not self.verify_tol > 0:
            raise ConfigError(f"verify_tol must be positive, got {self.verify_tol}.")
        if self.key_bits < 16:
            raise ConfigError(f"key_bits must be at least 16, got {self.key_bits}.")
        if self.frac_bits < 0 or self.guard_bits < 0:
            raise ConfigError("frac_bits and guard_bits must be nonnegative.")
        if not self.timeout > 0:
            raise ConfigError(f"timeout must be positive, got {self.timeout}.")
        profile = SecurityProfile(self.profile)
        object.__setattr__(self, "profile", profile)
        if profile == SecurityProfile.SECURE and self.mask_bits < SECURE_MASK_BITS:
            raise ConfigError(
                f"The {profile.value} profile needs mask_bits >= {SECURE_MASK_BITS}, "
                f"got {self.mask_bits}.")

    def omega_for(self, dim: int) -> int:
        if self.omega is not None:
            return self.omega
        return 10 * dim + 1000

    def replace(self, **changes) -> ProtocolConfig:
        return replace(self, **changes)

    def to_dict(self) -> Dict:
        d = Dict(asdict(self))
        d.profile = self.profile.value
        return d

    @staticmethod
    def from_mapping(mapping) -> ProtocolConfig:
        known = {f.name for f in fields(ProtocolConfig)}
        unknown = set(mapping) - known
        if unknown:
            raise ConfigError(f"Unknown protocol settings: {sorted(unknown)}.")
        try:
            return ProtocolConfig(**dict(mapping))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid protocol settings: {e}", cause=e)


def load_config(path: Path | str) -> ProtocolConfig:
    """Load a protocol profile from a TOML or JSON file.

    A TOML profile may keep its settings at the top level or under a
    '[protocol]' table.

    Parameters
    ----------
    path : Path | str
        The profile file.

    Returns
    -------
    ProtocolConfig

    Raises
    ------
    ConfigError
        On unreadable files, syntax errors or unknown settings.
    """
    path = Path(path)
    try:
        with open(path, "r") as f:
            if path.suffix == ".json":
                data = json.load(f)
            else:
                data = pytoml.load(f)
    except (OSError, ValueError, pytoml.TomlError) as e:
        raise ConfigError(f"Cannot read the profile '{path}'.", cause=e)
    if "protocol" in data and isinstance(data["protocol"], dict):
        data = data["protocol"]
    return ProtocolConfig.from_mapping(data)


class Configurable:
    def on_common_config(self):
        pass

    def on_linux_config(self):
        pass

    def on_darwin_config(self):
        pass

    def on_windows_config(self):
        pass

    def on_others_config(self):
        pass

    def _set_config(self):
        """Platform dependent configuration."""
        self.on_common_config()
        os = platform.system().lower()
        match os:
            case "linux":
                self.on_linux_config()
            case "darwin":
                self.on_darwin_config()
            case "windows":
                self.on_windows_config()
            case _:
                self.on_others_config()
