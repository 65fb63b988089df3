"""Flat ``section.key = value`` run configuration."""
from __future__ import annotations

import copy
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigParse
from .fields import FrequencyGrid, InitialSpec, make_initial, resolved_n_xi
from .params import PlasmaParams, Species

CHECK_NAMES = ("upper_px_phi", "upper_py", "upper_growth", "lower_growth", "lemma_energy")

DEFAULTS: dict[str, dict[str, object]] = {
    "physics": {"species": "ion", "T_plus": 1.0, "T_minus": 1.0, "m_plus": 1.0, "m_minus": 1.0,
                "e_charge": 0.28209479177387814},
    "grid": {"k_max": 8, "xi_min": -32.0, "xi_max": 32.0, "n_xi": 0},
    "initial": {"profile": "gaussian_bump", "seed": 0, "amplitude": 1.0, "width": 1.0, "center": 0.0,
                "fields": "eta,psi,omega", "k": 1, "xi0": 0.0, "field": "eta", "gaussian": False,
                "k_band": 8, "real": True},
    "time": {"t_max": 200.0, "n_outputs": 401, "tol": 1e-8, "step_cap": 0.1},
    "checks": {"run": ",".join(CHECK_NAMES), "fit_start": 20.0, "k_bound": 1e3, "c_floor": 1e-12,
               "lower_t_start": 1.0, "r_order": 0.5, "lemma_modes": 100, "lemma_t_max": 50.0, "lemma_k_max": 8,
               "lemma_xi_max": 16.0, "lemma_outputs": 501},
    "output": {"dir": "out", "modes_xi_stride": 16, "modes_t_stride": 10},
    "run": {"threads": 1},
}

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(raw, default, key):
    text = str(raw).strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if isinstance(default, int):
            value = float(text)
            if value != int(value):
                raise ValueError(text)
            return int(value)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigParse(f"{key}: cannot interpret {text!r} as {type(default).__name__}") from None
    return text


def split_key(key: str) -> tuple[str, str]:
    """Resolve ``section.key`` or a bare key that is unique across sections."""
    key = key.strip()
    if "." in key:
        section, name = key.split(".", 1)
        if section in DEFAULTS and name in DEFAULTS[section]:
            return section, name
        raise KeyError(key)
    if key == "seed":
        return "initial", "seed"
    hits = [s for s, d in DEFAULTS.items() if key in d]
    if len(hits) == 1:
        return hits[0], key
    raise KeyError(key)


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    # construction -------------------------------------------------------
    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cfg = cls()
        for lineno, line in enumerate(text.splitlines(), 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigParse(f"line {lineno}: expected 'section.key = value', got {line.strip()!r}")
            key, value = stripped.split("=", 1)
            cfg.set(key.strip(), value.strip(), where=f"line {lineno}")
        return cfg

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigParse(f"cannot read config {path}: {exc}") from exc
        return cls.from_text(text)

    def set(self, key: str, value, where: str = "override"):
        try:
            section, name = split_key(key)
        except KeyError:
            raise ConfigParse(f"{where}: unknown key {key!r}") from None
        self.values[section][name] = _coerce(value, DEFAULTS[section][name], f"{section}.{name}")

    def apply_overrides(self, items) -> "RunConfig":
        for item in items or ():
            if "=" not in item:
                raise ConfigParse(f"--set expects section.key=value, got {item!r}")
            key, value = item.split("=", 1)
            self.set(key, value, where="--set")
        return self

    def copy(self) -> "RunConfig":
        return RunConfig(copy.deepcopy(self.values))

    def get(self, key: str):
        section, name = split_key(key)
        return self.values[section][name]

    # validation and derived objects ---------------------------------------
    def validate(self) -> "RunConfig":
        t = self.values["time"]
        if not t["t_max"] > 0.0:
            raise ConfigParse("time.t_max must be > 0")
        if t["n_outputs"] < 2:
            raise ConfigParse("time.n_outputs must be >= 2")
        if not 0.0 < t["tol"] <= 1e-2:
            raise ConfigParse("time.tol must lie in (0, 1e-2]")
        n_xi = self.values["grid"]["n_xi"]
        if n_xi != 0 and n_xi < 2:
            raise ConfigParse("grid.n_xi must be 0 (auto) or >= 2")
        try:
            Species.parse(self.values["physics"]["species"])
            self.params()
            self.grid()
        except ValueError as exc:
            raise ConfigParse(str(exc)) from exc
        if not self.values["checks"]["r_order"] >= 0.0:
            raise ConfigParse("checks.r_order must be >= 0")
        unknown = set(self.checks()) - set(CHECK_NAMES)
        if unknown:
            raise ConfigParse(f"checks.run: unknown check(s) {', '.join(sorted(unknown))}")
        o = self.values["output"]
        if o["modes_xi_stride"] < 1 or o["modes_t_stride"] < 1:
            raise ConfigParse("output strides must be >= 1")
        return self

    def params(self) -> PlasmaParams:
        p = self.values["physics"]
        return PlasmaParams(species=p["species"], T_plus=p["T_plus"], T_minus=p["T_minus"],
                            m_plus=p["m_plus"], m_minus=p["m_minus"], e_charge=p["e_charge"])

    def grid(self) -> FrequencyGrid:
        g = self.values["grid"]
        n_xi = g["n_xi"]
        if n_xi == 0:
            # auto: resolve phase mixing up to t_max
            n_xi = resolved_n_xi(g["xi_min"], g["xi_max"], self.values["time"]["t_max"], self.params())
        return FrequencyGrid(k_max=g["k_max"], xi_min=g["xi_min"], xi_max=g["xi_max"], n_xi=n_xi)

    def times(self) -> np.ndarray:
        t = self.values["time"]
        return np.linspace(0.0, t["t_max"], t["n_outputs"])

    def initial(self) -> InitialSpec:
        i = dict(self.values["initial"])
        profile = i.pop("profile")
        seed = i.pop("seed")
        return make_initial(self.grid(), profile, seed=seed, **i)

    def checks(self) -> list[str]:
        return [c.strip() for c in str(self.values["checks"]["run"]).split(",") if c.strip()]

    def threads(self) -> int:
        n = int(self.values["run"]["threads"])
        return n if n > 0 else (os.cpu_count() or 1)

    def as_flat(self) -> dict:
        return {f"{s}.{k}": v for s, d in self.values.items() for k, v in d.items()}

    def to_text(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in sorted(self.as_flat().items()))
