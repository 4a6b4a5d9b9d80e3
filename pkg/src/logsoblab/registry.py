"""Fitted universal constants: fit once, freeze, assert against afterwards.

The registry is a JSON file (by default the copy shipped in
``logsoblab/data/constants.json``)::

    {"version": 1,
     "constants": {"square_fluct_lower_c0": {"value": ..., "kind": "lower", "observed": ...,
                                  "margin": 0.8, "scenario": "E1", "config_hash": "..."}}}

A ``lower`` constant bounds an observed quantity from below, so it is
frozen at ``margin * observed`` with ``margin < 1``; an ``upper`` constant
is frozen at ``margin * observed`` with ``margin > 1``.  The margin absorbs
Monte Carlo noise on re-runs with other seeds.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .errors import ConfigError

DEFAULT_PATH = Path(__file__).parent / "data" / "constants.json"
MARGINS = {"lower": 0.8, "upper": 1.25}


def config_hash(cfg) -> str:
    """First 12 hex digits of the SHA-256 of the canonical JSON of ``cfg``."""
    s = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(s.encode()).hexdigest()[:12]


class Registry:
    """Named constants with fit / assert modes.

    ``mode="assert"``: :meth:`resolve` returns frozen values and raises
    ConfigError for a missing one.  ``mode="fit"``: :meth:`resolve` fits
    and stores; refitting an existing name needs ``override=True``, and a
    save after any override bumps the version.
    """

    def __init__(self, path=None, mode: str = "assert", override: bool = False):
        if mode not in ("assert", "fit"):
            raise ConfigError(f"unknown registry mode {mode!r}")
        self.path = Path(path) if path is not None else DEFAULT_PATH
        self.mode = mode
        self.override = override
        self._refit = False
        self._fitted_now: set = set()
        if self.path.exists():
            data = json.loads(self.path.read_text())
        else:
            data = {"version": 0, "constants": {}}
        self.version = int(data.get("version", 0))
        self.constants = dict(data.get("constants", {}))

    def __contains__(self, name):
        return name in self.constants

    def get(self, name: str) -> float:
        if name not in self.constants:
            raise ConfigError(f"constant {name!r} is not in the registry {self.path}; "
                              "run the fitting scenario with --fit-constants first")
        return float(self.constants[name]["value"])

    def fit(self, name: str, observed: float, kind: str, scenario: str, cfg_hash: str,
            margin: float | None = None) -> float:
        if self.mode != "fit":
            raise ConfigError("fitting requires fit mode")
        if kind not in MARGINS:
            raise ConfigError(f"unknown constant kind {kind!r}")
        if name in self.constants and name not in self._fitted_now:
            if not self.override:
                raise ConfigError(f"constant {name!r} is frozen; refitting needs the override flag")
            self._refit = True
        m = MARGINS[kind] if margin is None else float(margin)
        self.constants[name] = {"value": float(observed) * m, "kind": kind, "observed": float(observed),
                                "margin": m, "scenario": scenario, "config_hash": cfg_hash}
        self._fitted_now.add(name)
        return self.constants[name]["value"]

    def resolve(self, name: str, observed: float, kind: str, scenario: str, cfg_hash: str) -> float:
        """The value assertions should use: fitted now (fit mode) or frozen."""
        if self.mode == "fit":
            return self.fit(name, observed, kind, scenario, cfg_hash)
        return self.get(name)

    def save(self) -> None:
        if not self._fitted_now:
            return
        if self.version == 0 or self._refit:
            self.version += 1
        self.path.parent.mkdir(parents=True, exist_ok=True)
        data = {"version": self.version, "constants": dict(sorted(self.constants.items()))}
        self.path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        self._refit = False
        self._fitted_now = set()

    def table(self) -> list:
        return [{"name": k, **v} for k, v in sorted(self.constants.items())]
