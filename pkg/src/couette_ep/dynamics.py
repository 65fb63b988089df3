"""Per-mode symmetrized dynamics.

For a mode (k, xi) the symmetrized pair ``(c1, c2)`` obeys the
non-autonomous linear system ``d/dt c = L(t) c + M(t) F`` with a
trace-free real generator ``L = [[-h, -m], [p, h]]`` and forcing vector
``M = (0, -2 k^2 alpha^(-7/4))``.  ``F`` is the (time independent) Fourier
coefficient of eta_in + omega_in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson, trapezoid

from .errors import StepSizeUnderflow
from .kernels import STATUS_MAX_STEPS, STATUS_UNDERFLOW, mode_coefficients, run_integrator
from .params import ModeCoord, PlasmaParams, alpha

DT_MIN = 1e-9
DEFAULT_STEP_CAP = 0.1


@dataclass(frozen=True)
class SymPair:
    """Symmetrized state (A1, A2) for ions or (B1, B2) for electrons."""

    c1: complex
    c2: complex

    def __post_init__(self):
        c1, c2 = complex(self.c1), complex(self.c2)
        if not (np.isfinite(c1) and np.isfinite(c2)):
            raise ValueError("SymPair components must be finite")
        object.__setattr__(self, "c1", c1)
        object.__setattr__(self, "c2", c2)

    @classmethod
    def from_array(cls, values) -> "SymPair":
        return cls(complex(values[0]), complex(values[1]))

    def as_array(self) -> np.ndarray:
        return np.array([self.c1, self.c2], dtype=complex)

    def norm(self) -> float:
        return math.hypot(abs(self.c1), abs(self.c2))


@dataclass(frozen=True)
class CoeffBundle:
    lam: float
    gamma: float
    h: float
    m_coef: float
    p_coef: float


def coeffs(t: float, mode: ModeCoord, params: PlasmaParams) -> CoeffBundle:
    """lambda, gamma, h, m, p at time t (species dispatched through params)."""
    h, m, p, _ = mode_coefficients(float(t), float(mode.k), mode.xi, *params.kernel_constants())
    return CoeffBundle(lam=math.sqrt(p / m), gamma=math.sqrt(m * p), h=h, m_coef=m, p_coef=p)


def coefficient_arrays(t, k, xi, params: PlasmaParams):
    """Vectorized ``(h, m, p, mf)`` over broadcast arrays of t, k, xi."""
    weight, coupling, screening = params.kernel_constants()
    t, k, xi = np.broadcast_arrays(np.asarray(t, float), np.asarray(k, float), np.asarray(xi, float))
    u = xi - k * t
    a = k * k + u * u
    sa = np.sqrt(a)
    h = -0.5 * k * u / a
    m = weight * sa
    p = weight * sa + 2.0 * k * k / (weight * a * sa) + weight * coupling * sa / (a + screening)
    mf = -2.0 * k * k * np.sqrt(sa) / (a * a)
    return h, m, p, mf


def build_L(t: float, mode: ModeCoord, params: PlasmaParams) -> np.ndarray:
    h, m, p, _ = mode_coefficients(float(t), float(mode.k), mode.xi, *params.kernel_constants())
    return np.array([[-h, -m], [p, h]])


def build_M(t: float, mode: ModeCoord) -> np.ndarray:
    a = alpha(t, mode)
    return np.array([0.0, -2.0 * mode.k**2 * a ** (-1.75)])


def _pi_weight(a, params: PlasmaParams):
    return params.weight * a ** (-0.25)


def symmetrize(pi_hat, psi_hat, t, mode: ModeCoord, params: PlasmaParams) -> SymPair:
    """(Pi_hat, Psi_hat) -> symmetrized pair at time t."""
    a = alpha(t, mode)
    return SymPair(_pi_weight(a, params) * pi_hat, psi_hat * a ** (-0.75))


def unsymmetrize(state: SymPair, t, mode: ModeCoord, params: PlasmaParams) -> tuple[complex, complex]:
    a = alpha(t, mode)
    return state.c1 / _pi_weight(a, params), state.c2 * a**0.75


def energy(state: SymPair, t, mode: ModeCoord, params: PlasmaParams) -> float:
    """lam |c1|^2 + 2 (h/gamma) Re(c1 conj c2) + |c2|^2 / lam."""
    c = coeffs(t, mode, params)
    cross = (state.c1 * state.c2.conjugate()).real
    return c.lam * abs(state.c1) ** 2 + 2.0 * (c.h / c.gamma) * cross + abs(state.c2) ** 2 / c.lam


def energy_tilde(state: SymPair, t, mode: ModeCoord, params: PlasmaParams) -> float:
    c = coeffs(t, mode, params)
    return c.lam * abs(state.c1) ** 2 + abs(state.c2) ** 2 / c.lam


def energy_arrays(c1, c2, h, m, p):
    """Vectorized energy functional from coefficient arrays."""
    lam = np.sqrt(p / m)
    gam = np.sqrt(m * p)
    cross = (c1 * np.conj(c2)).real
    return lam * np.abs(c1) ** 2 + 2.0 * (h / gam) * cross + np.abs(c2) ** 2 / lam


def adjugate(phi: np.ndarray) -> np.ndarray:
    """Adjugate of a (..., 2, 2) stack; the inverse when det == 1."""
    out = np.empty_like(phi)
    out[..., 0, 0] = phi[..., 1, 1]
    out[..., 0, 1] = -phi[..., 0, 1]
    out[..., 1, 0] = -phi[..., 1, 0]
    out[..., 1, 1] = phi[..., 0, 0]
    return out


def apply2(mat: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """``mat @ vec`` over stacks of 2x2 matrices and 2-vectors."""
    v0, v1 = vec[..., 0], vec[..., 1]
    return np.stack((mat[..., 0, 0] * v0 + mat[..., 0, 1] * v1,
                     mat[..., 1, 0] * v0 + mat[..., 1, 1] * v1), axis=-1)


@dataclass
class ModeTrajectory:
    mode: ModeCoord
    params: PlasmaParams
    times: np.ndarray
    states: np.ndarray  # (n, 2) complex
    fundamental: np.ndarray  # (n, 2, 2) real
    energies: np.ndarray
    forcing: complex
    tv_h_gamma: np.ndarray
    tv_log_lambda: np.ndarray
    max_h_over_gamma: float
    gronwall_excess: float
    n_steps: int
    tol: float = field(default=1e-8)

    def state(self, i: int) -> SymPair:
        return SymPair.from_array(self.states[i])

    def determinants(self) -> np.ndarray:
        f = self.fundamental
        return f[:, 0, 0] * f[:, 1, 1] - f[:, 0, 1] * f[:, 1, 0]

    def homogeneous_states(self, initial=None) -> np.ndarray:
        """Phi(t) @ initial for every stored time."""
        a0 = self.states[0] if initial is None else np.asarray(initial, complex)
        return np.einsum("nij,j->ni", self.fundamental, a0)


def _pack(initial: SymPair) -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 1.0,
                     initial.c1.real, initial.c1.imag, initial.c2.real, initial.c2.imag])


def _check_grid(t_grid) -> np.ndarray:
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1:
        raise ValueError("t_grid must be a non-empty 1-D sequence")
    if t_grid[0] != 0.0:
        raise ValueError("t_grid must start at 0")
    if np.any(np.diff(t_grid) <= 0.0) or not np.all(np.isfinite(t_grid)):
        raise ValueError("t_grid must be finite and strictly increasing")
    return t_grid


def integrate_mode(
    initial: SymPair,
    forcing: complex,
    mode: ModeCoord,
    params: PlasmaParams,
    t_grid,
    tol: float = 1e-8,
    step_cap: float = DEFAULT_STEP_CAP,
    dt_min: float = DT_MIN,
) -> ModeTrajectory:
    """Integrate state and fundamental matrix of one mode on ``t_grid``.

    Raises
    ------
    StepSizeUnderflow
        if the step controller asks for a step below ``dt_min``.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    t_grid = _check_grid(t_grid)
    forcing = complex(forcing)
    (status, n_steps, t_fail, max_hg, excess), y, tvh, tvl = run_integrator(
        mode.k, mode.xi, params.kernel_constants(), _pack(initial), forcing, t_grid,
        tol, step_cap, dt_min, params.gronwall_prefactor,
    )
    if status == STATUS_UNDERFLOW:
        raise StepSizeUnderflow(
            f"step size fell below {dt_min:g} at t={t_fail:.6g} for mode k={mode.k}, xi={mode.xi:g}",
            mode=mode, t=t_fail,
        )
    if status == STATUS_MAX_STEPS:
        raise StepSizeUnderflow(f"step budget exhausted at t={t_fail:.6g} for {mode}", mode=mode, t=t_fail)

    fundamental = y[:, :4].reshape(-1, 2, 2)
    states = np.empty((len(t_grid), 2), dtype=complex)
    states[:, 0] = y[:, 4] + 1j * y[:, 5]
    states[:, 1] = y[:, 6] + 1j * y[:, 7]
    h, m, p, _ = coefficient_arrays(t_grid, mode.k, mode.xi, params)
    energies = energy_arrays(states[:, 0], states[:, 1], h, m, p)
    return ModeTrajectory(
        mode=mode, params=params, times=t_grid, states=states, fundamental=fundamental,
        energies=energies, forcing=forcing, tv_h_gamma=tvh, tv_log_lambda=tvl,
        max_h_over_gamma=float(max_hg), gronwall_excess=float(excess), n_steps=int(n_steps), tol=tol,
    )


def _quadrature_nodes(t: float, mode: ModeCoord, params: PlasmaParams, per_radian: int = 16) -> np.ndarray:
    coarse = np.linspace(0.0, t, 257)
    h, m, p, _ = coefficient_arrays(coarse, mode.k, mode.xi, params)
    phase = trapezoid(1.0 + np.abs(h) + np.maximum(m, p), coarse)
    n = max(512, int(math.ceil(per_radian * phase)))
    n += n % 2
    return np.linspace(0.0, t, n + 1)


def duhamel_solution(
    initial: SymPair,
    forcing: complex,
    mode: ModeCoord,
    params: PlasmaParams,
    t: float,
    tol: float = 1e-10,
) -> SymPair:
    """Solution at time t from the variation-of-constants formula.

    ``Phi(t) (A_in + int_0^t adj(Phi(s)) M(s) ds F)``; Phi comes from an
    unforced integration and the integral from composite Simpson.
    """
    a_in = initial.as_array()
    if t == 0.0:
        return initial
    nodes = _quadrature_nodes(float(t), mode, params)
    traj = integrate_mode(SymPair(0, 0), 0.0, mode, params, nodes, tol=tol)
    phi = traj.fundamental
    _, _, _, mf = coefficient_arrays(nodes, mode.k, mode.xi, params)
    # adj(Phi) @ (0, mf) = mf * (-Phi01, Phi00)
    integrand = np.stack([-phi[:, 0, 1] * mf, phi[:, 0, 0] * mf], axis=-1)
    integral = simpson(integrand, x=nodes, axis=0)
    a_t = phi[-1] @ (a_in + integral * complex(forcing))
    return SymPair.from_array(a_t)
