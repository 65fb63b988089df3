"""Frequency grids, initial data, grid-wide evolution and Plancherel norms.

Grid evolution uses time-shift covariance of the mode equations: for fixed
k the generator depends on (t, xi) only through ``xi - k t``.  One long
"anchor" trajectory per |k| therefore yields every mode of that row:

    Phi_xi(t) = Psi(tau + t) Psi(tau)^-1,   tau = (xi_anchor - xi) / k

with the matching shift for the particular (unit-forced) solution.  Mode
(-k, -xi) has the same generator as (k, xi), so a symmetric grid needs
only the k > 0 anchors.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import DEFAULT_STEP_CAP, SymPair, adjugate, apply2, coefficient_arrays, energy_arrays, integrate_mode
from ._accel import USE_NUMBA
from .errors import MissingMode, UnknownProfile
from .kernels import gather_row
from .params import ModeCoord, PlasmaParams

PROFILES = ("gaussian_bump", "single_mode", "random_band")


@dataclass(frozen=True)
class FrequencyGrid:
    """Nonzero k in [-k_max, k_max] times a uniform xi grid."""

    k_max: int = 8
    xi_min: float = -32.0
    xi_max: float = 32.0
    n_xi: int = 513
    k_values: tuple | None = None

    def __post_init__(self):
        if self.n_xi < 2:
            raise ValueError("n_xi must be >= 2")
        if not self.xi_max > self.xi_min:
            raise ValueError("xi_max must exceed xi_min")
        if self.k_values is not None:
            ks = tuple(sorted(int(k) for k in self.k_values))
            if 0 in ks or len(set(ks)) != len(ks) or not ks:
                raise ValueError("k_values must be distinct nonzero integers")
            object.__setattr__(self, "k_values", ks)
        elif self.k_max < 1:
            raise ValueError("k_max must be >= 1")

    @property
    def k_list(self) -> np.ndarray:
        if self.k_values is not None:
            return np.array(self.k_values, dtype=int)
        ks = np.arange(-self.k_max, self.k_max + 1)
        return ks[ks != 0]

    @property
    def xi(self) -> np.ndarray:
        return np.linspace(self.xi_min, self.xi_max, self.n_xi)

    @property
    def d_xi(self) -> float:
        return (self.xi_max - self.xi_min) / (self.n_xi - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.k_list), self.n_xi

    def mesh(self):
        """(K, XI) arrays of shape ``self.shape``."""
        return np.meshgrid(self.k_list.astype(float), self.xi, indexing="ij")

    def quad_weights(self) -> np.ndarray:
        """Trapezoid weights along xi."""
        w = np.full(self.n_xi, self.d_xi)
        w[0] = w[-1] = 0.5 * self.d_xi
        return w

    def integrate(self, values) -> float:
        """Sum over k of the trapezoid rule in xi."""
        return float(np.sum(np.asarray(values) * self.quad_weights()))

    def modes(self) -> list[ModeCoord]:
        return [ModeCoord(int(k), float(x)) for k in self.k_list for x in self.xi]

    def is_symmetric(self) -> bool:
        return np.allclose(self.xi, -self.xi[::-1], rtol=0.0, atol=1e-12)

    def refined(self) -> "FrequencyGrid":
        """Same extent with the xi spacing halved."""
        return FrequencyGrid(self.k_max, self.xi_min, self.xi_max, 2 * (self.n_xi - 1) + 1, self.k_values)

    def as_dict(self) -> dict:
        return {"k_list": [int(k) for k in self.k_list], "xi_min": self.xi_min,
                "xi_max": self.xi_max, "n_xi": self.n_xi, "d_xi": self.d_xi}


@dataclass
class InitialSpec:
    """Fourier samples of eta_in, psi_in, omega_in on a grid."""

    grid: FrequencyGrid
    eta_hat: np.ndarray
    psi_hat: np.ndarray
    omega_hat: np.ndarray
    real: bool = True
    profile: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("eta_hat", "psi_hat", "omega_hat"):
            arr = np.asarray(getattr(self, name), dtype=complex)
            if arr.shape != self.grid.shape:
                raise ValueError(f"{name} has shape {arr.shape}, grid expects {self.grid.shape}")
            setattr(self, name, arr)

    @property
    def f_hat(self) -> np.ndarray:
        return self.eta_hat + self.omega_hat

    def is_zero(self) -> bool:
        return not (np.any(self.eta_hat) or np.any(self.psi_hat) or np.any(self.omega_hat))

    def satisfies_reality(self, atol=1e-14) -> bool:
        """f(-k, -xi) == conj f(k, xi) for all three fields (symmetric grids only)."""
        if not self.grid.is_symmetric() or not np.array_equal(self.grid.k_list, -self.grid.k_list[::-1]):
            return False
        return all(np.allclose(a, np.conj(a[::-1, ::-1]), atol=atol, rtol=0.0)
                   for a in (self.eta_hat, self.psi_hat, self.omega_hat))

    def symmetrized(self, params: PlasmaParams) -> np.ndarray:
        """Initial symmetrized pairs, shape (n_k, n_xi, 2)."""
        K, XI = self.grid.mesh()
        a0 = K * K + XI * XI
        out = np.empty(self.grid.shape + (2,), dtype=complex)
        out[..., 0] = params.weight * a0 ** (-0.25) * self.eta_hat
        out[..., 1] = a0 ** (-0.75) * self.psi_hat
        return out


def _gaussian(xi, center, width):
    return np.exp(-0.5 * ((xi - center) / width) ** 2)


def _enforce_reality(arr: np.ndarray, grid: FrequencyGrid) -> np.ndarray:
    # keep the k > 0 half and mirror it
    ks = grid.k_list
    out = arr.copy()
    for i, k in enumerate(ks):
        if k < 0:
            j = int(np.nonzero(ks == -k)[0][0])
            out[i] = np.conj(arr[j, ::-1])
    return out


def make_initial(grid: FrequencyGrid, profile: str = "gaussian_bump", seed: int = 0, **options) -> InitialSpec:
    """Build initial data from a named profile.

    gaussian_bump
        every field equals ``amplitude * 2**-|k| * exp(-(xi-center)^2 / (2 width^2))``
        (options: amplitude=1, width=1, center=0, fields="eta,psi,omega").
    single_mode
        one nonzero sample at (k, nearest xi node to xi0) in one field
        (options: k=1, xi0=0, amplitude=1, field="eta").  With
        ``gaussian=True`` the row k (and -k if present) gets a Gaussian in xi.
    random_band
        complex normal samples (seeded) times a Gaussian envelope for
        ``|k| <= k_band`` (options: amplitude=1, width=1, k_band=k_max).
    """
    K, XI = grid.mesh()
    zeros = np.zeros(grid.shape, dtype=complex)
    real = bool(options.pop("real", True))
    fields = {"eta": zeros.copy(), "psi": zeros.copy(), "omega": zeros.copy()}
    amplitude = float(options.get("amplitude", 1.0))
    width = float(options.get("width", 1.0))

    if profile == "gaussian_bump":
        center = float(options.get("center", 0.0))
        names = [s.strip() for s in str(options.get("fields", "eta,psi,omega")).split(",") if s.strip()]
        shape = amplitude * 2.0 ** (-np.abs(K)) * _gaussian(XI, center, width)
        for name in names:
            if name not in fields:
                raise ValueError(f"unknown field {name!r}")
            fields[name] = shape.astype(complex)
    elif profile == "single_mode":
        k0 = int(options.get("k", 1))
        xi0 = float(options.get("xi0", 0.0))
        name = str(options.get("field", "eta"))
        if name not in fields:
            raise ValueError(f"unknown field {name!r}")
        rows = np.nonzero(grid.k_list == k0)[0]
        if rows.size == 0:
            raise ValueError(f"k={k0} is not on the grid")
        if options.get("gaussian", False):
            fields[name][rows[0]] = amplitude * _gaussian(grid.xi, xi0, width)
            if real and np.any(grid.k_list == -k0):
                fields[name] = _enforce_reality(fields[name], grid) if k0 > 0 else fields[name]
        else:
            j = int(np.argmin(np.abs(grid.xi - xi0)))
            fields[name][rows[0], j] = amplitude
    elif profile == "random_band":
        rng = np.random.default_rng(seed)
        k_band = int(options.get("k_band", grid.k_list.max()))
        env = amplitude * _gaussian(XI, 0.0, width) * (np.abs(K) <= k_band)
        for name in ("eta", "psi", "omega"):
            noise = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
            arr = env * noise / math.sqrt(2.0)
            if real and grid.is_symmetric() and np.array_equal(grid.k_list, -grid.k_list[::-1]):
                arr = _enforce_reality(arr, grid)
            fields[name] = arr
    else:
        raise UnknownProfile(f"unknown profile {profile!r}; expected one of {', '.join(PROFILES)}")

    meta = {"profile": profile, "seed": int(seed), **{k: v for k, v in options.items()}}
    return InitialSpec(grid, fields["eta"], fields["psi"], fields["omega"], real=real, profile=profile, meta=meta)


def phase_speed(params: PlasmaParams) -> float:
    """Large-alpha limit of gamma / alpha^(1/2).

    The phase of a mode grows like ``phase_speed * |xi - k t|`` per unit
    time, so at time t the state oscillates in xi with wavenumber up to
    ``phase_speed * t`` (twice that in quadratic quantities).
    """
    return params.weight * math.sqrt(1.0 + (params.charge_coupling if params.is_ion else 0.0))


def resolved_n_xi(xi_min: float, xi_max: float, t_max: float, params: PlasmaParams,
                  minimum: int = 513, envelope_band: float = 8.0) -> int:
    """Smallest ``2**m + 1 >= minimum`` whose spacing resolves phase mixing up to ``t_max``.

    Quadratic norms carry oscillations of wavenumber up to
    ``2 * phase_speed * t`` in xi.  The trapezoid rule aliases wavenumber
    ``2 pi / d_xi`` to zero, so ``d_xi <= 2 pi / (2 * phase_speed * t_max + envelope_band)``
    keeps the aliased content outside the band of the data envelope.
    """
    d_max = 2.0 * math.pi / (2.0 * phase_speed(params) * t_max + envelope_band)
    intervals = 1 << max(0, math.ceil(math.log2(max(minimum - 1, 1))))
    while (xi_max - xi_min) / intervals > d_max:
        intervals *= 2
    return intervals + 1


# --------------------------------------------------------------------------
# grid-wide evolution


def _inverse_2x2(phi: np.ndarray) -> np.ndarray:
    det = phi[..., 0, 0] * phi[..., 1, 1] - phi[..., 0, 1] * phi[..., 1, 0]
    return adjugate(phi) / det[..., None, None]


@dataclass
class _Anchor:
    virtual: np.ndarray  # sorted stop times
    fundamental: np.ndarray  # (n_u, 2, 2)
    particular: np.ndarray  # (n_u, 2), zero start, unit forcing
    n_steps: int


@dataclass
class _Row:
    key: tuple
    tau: np.ndarray  # (n_xi,) time shift into the anchor
    start_inv: np.ndarray  # (n_xi, 2, 2) inverse of Psi(tau)
    p_start: np.ndarray  # (n_xi, 2)


@dataclass
class GridPropagator:
    """Fundamental matrices and unit-forced responses for every grid mode.

    Only the anchor trajectories are stored; per-time arrays are assembled
    on request.  :meth:`fundamental` returns Phi(t_n) for every mode and
    :meth:`forced_response` the solution at t_n started from zero with
    F = 1, so the state of any dataset is ``Phi A_in + w F_hat``.
    """

    grid: FrequencyGrid
    params: PlasmaParams
    times: np.ndarray
    anchors: dict
    rows: list
    n_steps: int = 0

    def time_index(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[idx], t, rel_tol=1e-12, abs_tol=1e-12):
            raise MissingMode(f"time {t} is not an output time of this propagator")
        return idx

    def propagators(self, n: int):
        """(Phi, w) at output index n, shapes (n_k, n_xi, 2, 2) and (n_k, n_xi, 2)."""
        t = self.times[n]
        phi = np.empty(self.grid.shape + (2, 2))
        forced = np.empty(self.grid.shape + (2,))
        for i, row in enumerate(self.rows):
            anchor = self.anchors[row.key]
            if USE_NUMBA:
                gather_row(anchor.virtual, anchor.fundamental, anchor.particular, row.tau + t,
                           row.start_inv, row.p_start, phi[i], forced[i])
                continue
            stop = _nearest(anchor.virtual, row.tau + t)
            phi[i] = anchor.fundamental[stop] @ row.start_inv
            forced[i] = anchor.particular[stop] - apply2(phi[i], row.p_start)
        return phi, forced

    def fundamental(self, n: int) -> np.ndarray:
        return self.propagators(n)[0]

    def forced_response(self, n: int) -> np.ndarray:
        return self.propagators(n)[1]

    def states(self, spec: InitialSpec, n: int) -> np.ndarray:
        phi, forced = self.propagators(n)
        return apply2(phi, spec.symmetrized(self.params)) + forced * spec.f_hat[..., None]

    def homogeneous_states(self, spec: InitialSpec, n: int) -> np.ndarray:
        return apply2(self.fundamental(n), spec.symmetrized(self.params))

    def lower_bound_functional(self, spec: InitialSpec, n: int) -> np.ndarray:
        """R(t_n) = A_in + adj(Phi) w F for every mode."""
        phi, forced = self.propagators(n)
        adj_w = apply2(adjugate(phi), forced)
        return spec.symmetrized(self.params) + adj_w * spec.f_hat[..., None]


def _merged_times(values, rel=1e-11):
    # union of shifted output times with rounding-level duplicates removed
    v = np.unique(np.ravel(values))
    keep = np.ones(v.size, dtype=bool)
    keep[1:] = np.diff(v) > rel * (1.0 + np.abs(v[1:]))
    return v[keep]


def _nearest(sorted_values, x):
    if sorted_values.size == 1:
        return np.zeros(np.shape(x), dtype=int)
    idx = np.clip(np.searchsorted(sorted_values, x), 1, sorted_values.size - 1)
    left = sorted_values[idx - 1]
    right = sorted_values[idx]
    return np.where(np.abs(x - left) <= np.abs(right - x), idx - 1, idx)


def _anchor_key(k: int, grid: FrequencyGrid):
    # mode (k, xi) behaves like (|k|, sign(k) xi)
    s = 1 if k > 0 else -1
    xs = s * grid.xi
    return abs(int(k)), float(xs.max()), xs


def propagate_grid(
    grid: FrequencyGrid,
    params: PlasmaParams,
    times,
    tol: float = 1e-8,
    step_cap: float = DEFAULT_STEP_CAP,
    threads: int = 1,
) -> GridPropagator:
    """Integrate one anchor trajectory per distinct (|k|, anchor xi) pair.

    Anchors are independent jobs; with ``threads > 1`` they run on a thread
    pool (the compiled kernel releases the GIL).  Results are keyed, so the
    output does not depend on scheduling.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ValueError("times must start at 0 and increase")

    row_keys = []
    jobs = {}
    for k in grid.k_list:
        kk, xa, xs = _anchor_key(int(k), grid)
        tau = (xa - xs) / kk
        row_keys.append(((kk, xa), tau))
        jobs.setdefault((kk, xa), []).append(tau)

    def run(key):
        kk, xa = key
        shifts = np.concatenate(jobs[key])
        virtual = _merged_times(shifts[:, None] + times[None, :])
        traj = integrate_mode(SymPair(0.0, 0.0), 1.0, ModeCoord(kk, xa), params, virtual,
                              tol=tol, step_cap=step_cap)
        return key, _Anchor(virtual, traj.fundamental, np.ascontiguousarray(traj.states.real), traj.n_steps)

    keys = sorted(jobs)
    if threads and threads > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            anchors = dict(pool.map(run, keys))
    else:
        anchors = dict(run(key) for key in keys)

    rows = []
    for key, tau in row_keys:
        anchor = anchors[key]
        start = _nearest(anchor.virtual, tau)
        rows.append(_Row(key, tau, _inverse_2x2(anchor.fundamental[start]), anchor.particular[start]))
    n_steps = sum(a.n_steps for a in anchors.values())
    return GridPropagator(grid, params, times, anchors, rows, n_steps=n_steps)


# --------------------------------------------------------------------------
# snapshots and norms


@dataclass
class SpectralSnapshot:
    t: float
    pi_hat: np.ndarray
    psi_hat: np.ndarray
    gamma_hat: np.ndarray


@dataclass(frozen=True)
class NormSet:
    pux: float
    puy: float
    qu: float
    eta: float
    phi: float


def states_to_fields(states: np.ndarray, t: float, grid: FrequencyGrid, params: PlasmaParams):
    """Undo the symmetrization on a (n_k, n_xi, 2) array."""
    K, XI = grid.mesh()
    u = XI - K * t
    a = K * K + u * u
    pi_hat = states[..., 0] * a**0.25 / params.weight
    psi_hat = states[..., 1] * a**0.75
    return pi_hat, psi_hat


def evolve_snapshot(spec: InitialSpec, trajectories, t: float) -> SpectralSnapshot:
    """Moving-frame (Pi, Psi, Gamma) hat at time t.

    ``trajectories`` is a :class:`GridPropagator` or a mapping from
    :class:`ModeCoord` to :class:`ModeTrajectory` covering every grid mode.
    """
    grid = spec.grid
    if isinstance(trajectories, GridPropagator):
        n = trajectories.time_index(t)
        states = trajectories.states(spec, n)
        params = trajectories.params
    else:
        states = np.empty(grid.shape + (2,), dtype=complex)
        params = None
        for i, k in enumerate(grid.k_list):
            for j, x in enumerate(grid.xi):
                mode = ModeCoord(int(k), float(x))
                traj = trajectories.get(mode)
                if traj is None:
                    raise MissingMode(f"no trajectory for mode k={mode.k}, xi={mode.xi:g}")
                idx = np.nonzero(np.isclose(traj.times, t, rtol=1e-12, atol=1e-12))[0]
                if idx.size == 0:
                    raise MissingMode(f"trajectory for {mode} has no sample at t={t}")
                states[i, j] = traj.states[idx[0]]
                params = traj.params
    pi_hat, psi_hat = states_to_fields(states, t, grid, params)
    return SpectralSnapshot(t=float(t), pi_hat=pi_hat, psi_hat=psi_hat, gamma_hat=spec.f_hat - pi_hat)


def helmholtz_norms(snapshot: SpectralSnapshot, grid: FrequencyGrid, params: PlasmaParams) -> NormSet:
    """L2 norms of P[u]^x, P[u]^y, Q[u], eta and phi by Plancherel quadrature."""
    t = snapshot.t
    K, XI = grid.mesh()
    u = XI - K * t
    a = K * K + u * u
    g2 = np.abs(snapshot.gamma_hat) ** 2
    p2 = np.abs(snapshot.pi_hat) ** 2
    pux2 = grid.integrate(u * u / a**2 * g2)
    puy2 = grid.integrate(K * K / a**2 * g2)
    qu2 = grid.integrate(np.abs(snapshot.psi_hat) ** 2 / a)
    eta2 = grid.integrate(p2)
    phi2 = grid.integrate((4.0 * math.pi * params.e_charge) ** 2 * p2 / (a + params.screening) ** 2)
    return NormSet(*(math.sqrt(max(v, 0.0)) for v in (pux2, puy2, qu2, eta2, phi2)))


def sym_weighted_norm(states, grid: FrequencyGrid, params: PlasmaParams, t: float) -> float:
    """sum_k int alpha^(1/2) |A|^2 dxi for a (n_k, n_xi, 2) state array.

    Equals ``qu**2 + weight**2 * eta**2`` from :func:`helmholtz_norms`.
    """
    K, XI = grid.mesh()
    a = K * K + (XI - K * t) ** 2
    return grid.integrate(np.sqrt(a) * np.sum(np.abs(states) ** 2, axis=-1))


def sobolev_norm(values, grid: FrequencyGrid, r: float, s: float, isotropic: bool = False) -> float:
    """Anisotropic H^r_x H^s_y norm, or isotropic H^s with ``isotropic=True``."""
    K, XI = grid.mesh()
    v2 = np.abs(np.asarray(values)) ** 2
    if isotropic:
        w = (1.0 + K * K + XI * XI) ** s
    else:
        w = (1.0 + K * K) ** r * (1.0 + XI * XI) ** s
    return math.sqrt(grid.integrate(w * v2))


def initial_energy(spec: InitialSpec, params: PlasmaParams) -> np.ndarray:
    """E(0) of every grid mode."""
    K, XI = spec.grid.mesh()
    a0 = spec.symmetrized(params)
    h0, m0, p0, _ = coefficient_arrays(0.0, K, XI, params)
    return energy_arrays(a0[..., 0], a0[..., 1], h0, m0, p0)


def homogeneous_energy_ratio(hom_states: np.ndarray, e0: np.ndarray, t: float, grid: FrequencyGrid,
                             params: PlasmaParams):
    """Min and max over modes with E(0) > 0 of E(t)/E(0) for the unforced part."""
    mask = e0 > 1e-300
    if not np.any(mask):
        return 0.0, 0.0
    K, XI = grid.mesh()
    h, m, p, _ = coefficient_arrays(t, K, XI, params)
    e = energy_arrays(hom_states[..., 0], hom_states[..., 1], h, m, p)
    ratio = e[mask] / e0[mask]
    return float(ratio.min()), float(ratio.max())
