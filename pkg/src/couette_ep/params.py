"""Physical constants, Fourier mode labels and the shear symbols.

Everything downstream sees the constants only through the grouped
accessors on :class:`PlasmaParams` (``weight``, ``charge_coupling``,
``screening``, ...), so the electron species never touches the ion-only
temperatures and mass.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

#: e such that 4*pi*e**2 == 1, the nondimensional default.
UNIT_CHARGE = 1.0 / math.sqrt(4.0 * math.pi)


class Species(str, enum.Enum):
    ION = "ion"
    ELECTRON = "electron"

    @classmethod
    def parse(cls, value) -> "Species":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown species {value!r}; expected 'ion' or 'electron'") from None


@dataclass(frozen=True)
class PlasmaParams:
    """Species-tagged nondimensional constants.

    ``q = 4*pi*e_charge**2`` is cached on construction.  The defaults are the
    all-ones set (temperatures, masses and ``q`` equal to one).
    """

    species: Species = Species.ION
    T_plus: float = 1.0
    T_minus: float = 1.0
    m_plus: float = 1.0
    m_minus: float = 1.0
    e_charge: float = UNIT_CHARGE
    q: float = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "species", Species.parse(self.species))
        for name in ("T_plus", "T_minus", "m_plus", "m_minus", "e_charge"):
            value = float(getattr(self, name))
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"{name} must be finite and > 0, got {value!r}")
            object.__setattr__(self, name, value)
        object.__setattr__(self, "q", 4.0 * math.pi * self.e_charge**2)

    @classmethod
    def all_ones(cls, species="ion") -> "PlasmaParams":
        return cls(species=Species.parse(species))

    @property
    def is_ion(self) -> bool:
        return self.species is Species.ION

    # grouped constants -------------------------------------------------
    @property
    def weight(self) -> float:
        """Density weight in the symmetrized state: sqrt(T+/m+) or 1/sqrt(m-)."""
        if self.is_ion:
            return math.sqrt(self.T_plus / self.m_plus)
        return 1.0 / math.sqrt(self.m_minus)

    @property
    def charge_coupling(self) -> float:
        """q/T+ for ions, q for electrons."""
        return self.q / self.T_plus if self.is_ion else self.q

    @property
    def screening(self) -> float:
        """Debye-type shift added to alpha: q/T- for ions, 0 for electrons."""
        return self.q / self.T_minus if self.is_ion else 0.0

    @property
    def lambda_sq_max(self) -> float:
        """Upper bound on lambda**2 over all modes and times."""
        if self.is_ion:
            return 1.0 + self.q / self.T_plus + 2.0 * self.m_plus / self.T_plus
        return 1.0 + self.q + 2.0 * self.m_minus

    @property
    def h_gamma_bound(self) -> float:
        return math.sqrt(2.0) / 2.0 if self.is_ion else math.sqrt(2.0) / 4.0

    @property
    def gronwall_prefactor(self) -> float:
        return 2.0 + math.sqrt(2.0) if self.is_ion else 2.0 + math.sqrt(2.0) / 2.0

    @property
    def tv_h_gamma_bound(self) -> float:
        return 14.0 * math.sqrt(2.0) if self.is_ion else 4.0 * math.sqrt(2.0)

    @property
    def tv_log_lambda_bound(self) -> float:
        return math.log(self.lambda_sq_max)

    def kernel_constants(self) -> tuple[float, float, float]:
        """(weight, charge_coupling, screening) as consumed by the kernels."""
        return self.weight, self.charge_coupling, self.screening

    def with_updates(self, **changes) -> "PlasmaParams":
        values = dict(
            species=self.species,
            T_plus=self.T_plus,
            T_minus=self.T_minus,
            m_plus=self.m_plus,
            m_minus=self.m_minus,
            e_charge=self.e_charge,
        )
        values.update(changes)
        return PlasmaParams(**values)

    def as_dict(self) -> dict:
        return {
            "species": self.species.value,
            "T_plus": self.T_plus,
            "T_minus": self.T_minus,
            "m_plus": self.m_plus,
            "m_minus": self.m_minus,
            "e_charge": self.e_charge,
            "q": self.q,
        }


@dataclass(frozen=True, order=True)
class ModeCoord:
    """Fourier mode (k, xi); k is a nonzero integer."""

    k: int
    xi: float

    def __post_init__(self):
        if int(self.k) != self.k:
            raise ValueError(f"k must be an integer, got {self.k!r}")
        if int(self.k) == 0:
            raise ValueError("k = 0 modes are excluded (zero x-average data)")
        if not math.isfinite(self.xi):
            raise ValueError("xi must be finite")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "xi", float(self.xi))

    @property
    def critical_time(self) -> float:
        return self.xi / self.k


def alpha(t, mode: ModeCoord):
    """k**2 + (xi - k t)**2, the moving-frame symbol of -Laplacian."""
    u = mode.xi - mode.k * np.asarray(t, dtype=float)
    out = mode.k * mode.k + u * u
    return float(out) if out.ndim == 0 else out


def dt_alpha(t, mode: ModeCoord):
    """Time derivative of :func:`alpha`, -2k(xi - k t)."""
    out = -2.0 * mode.k * (mode.xi - mode.k * np.asarray(t, dtype=float))
    return float(out) if out.ndim == 0 else out


def alpha_kxi(t, k, xi):
    """Broadcasting version of :func:`alpha` on raw arrays."""
    u = xi - k * t
    return k * k + u * u
