"""The nonlinear source map J: velocities, smeared Lorentz forces and currents.

Charge densities are represented band-limited: the bump profile is sampled
at the grid points around the origin, stripped of Nyquist modes, and moved
to a particle position by the spectral phase ``exp(-i k.q)``.  With this
representation the discrete Gauss law, the force quadrature and the
current deposition all use the same density, which is what makes the
constraint and energy identities hold at the semi-discrete level.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError, GeometryError, StructureError
from .spectral import FieldPair
from .state import PhaseSpacePoint

FOUR_PI = 4.0 * np.pi
# a few ulps below one, so that |v| computed from the components stays < 1
_BELOW_ONE = 1.0 - 2.0**-50


def velocity(p, m, sigma=None):
    """Relativistic velocity ``sigma p / sqrt(m^2 + |p|^2)`` (c = 1).

    ``p`` may have shape ``(3,)`` or ``(N, 3)`` with ``m`` broadcastable.
    The speed is kept strictly below one in floating point, which matters
    once ``|p|/|m|`` exceeds about 1e7.
    """
    p = np.asarray(p, dtype=float)
    m = np.asarray(m, dtype=float)
    if np.any(m == 0):
        raise DomainError("velocity is undefined for zero mass")
    if sigma is None:
        sigma = np.sign(m)
    sigma = np.asarray(sigma, dtype=float)
    pn = np.linalg.norm(p, axis=-1)
    speed = pn / np.sqrt(m * m + pn * pn)
    speed = np.minimum(speed, _BELOW_ONE)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(pn > 0, speed / np.where(pn > 0, pn, 1.0), 0.0)
    v = (sigma * scale)[..., None] * p
    vn = np.linalg.norm(v, axis=-1)
    if np.any(vn >= _BELOW_ONE):
        v = v * np.where(vn >= _BELOW_ONE, _BELOW_ONE / np.where(vn > 0, vn, 1.0), 1.0)[..., None]
    return v


def bump(r, R):
    """``exp(-1/(1 - (r/R)^2))`` inside ``r < R``, zero outside."""
    r = np.asarray(r, dtype=float)
    s = (r / R) ** 2
    inside = s < 1.0
    out = np.zeros_like(s)
    out[inside] = np.exp(-1.0 / (1.0 - s[inside]))
    return out


@dataclass(frozen=True)
class ChargeShape:
    """Smooth radial charge profile of support radius ``R`` and total ``e_total``."""

    R: float
    e_total: float

    def __post_init__(self):
        if not self.R > 0:
            raise DomainError(f"support radius must be positive, got {self.R}")

    @cached_property
    def continuum_constant(self):
        """Normalization ``c`` with ``int c*bump = e_total`` in the continuum."""
        val, _ = integrate.quad(lambda r: 4 * np.pi * r * r * float(bump(r, self.R)), 0.0, self.R,
                                epsabs=0.0, epsrel=1e-13, limit=200)
        return self.e_total / val

    def profile(self, r):
        """Continuum profile ``rho(r)``."""
        return self.continuum_constant * bump(r, self.R)

    def check_fits(self, grid):
        if 2.0 * self.R > grid.L / 2.0:
            raise GeometryError(
                f"support diameter {2 * self.R} exceeds half the box {grid.L / 2}",
                R=self.R, L=grid.L,
            )

    def spectrum(self, grid):
        """Band-limited half spectrum of the density centred at the origin.

        The sampled bump is scaled so that its midpoint sum equals
        ``e_total`` exactly; the Nyquist modes are then removed.
        """
        self.check_fits(grid)
        cache = _SPECTRUM_CACHE.setdefault(grid, {})
        key = (self.R, self.e_total)
        if key not in cache:
            samples = bump(grid.radius, self.R)
            total = np.sum(samples) * grid.cell_volume
            if total <= 0:
                raise GeometryError(f"support radius {self.R} is not resolved by dx={grid.dx}")
            samples *= self.e_total / total
            cache[key] = grid.fft(samples) * grid.resolved
            cache[key].flags.writeable = False
        return cache[key]

    def samples(self, grid):
        """Real-space grid samples of the band-limited density at the origin."""
        return grid.ifft(self.spectrum(grid))


_SPECTRUM_CACHE = {}


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Coupling constants ``e_ij`` between the force on i and the field of j."""

    e: np.ndarray
    preset: str = "custom"

    def __post_init__(self):
        e = np.array(self.e, dtype=float)
        if e.ndim != 2 or e.shape[0] != e.shape[1]:
            raise StructureError(f"coupling matrix must be square, got shape {e.shape}")
        e.flags.writeable = False
        object.__setattr__(self, "e", e)

    @classmethod
    def ml(cls, n):
        return cls(np.ones((n, n)), "ML")

    @classmethod
    def ml_si(cls, n):
        return cls(np.ones((n, n)) - np.eye(n), "ML_SI")

    @classmethod
    def from_preset(cls, preset, n):
        if preset == "ML":
            return cls.ml(n)
        if preset == "ML_SI":
            return cls.ml_si(n)
        raise ConfigError(f"unknown coupling preset {preset!r}", key="coupling")

    @property
    def N(self):
        return self.e.shape[0]


@dataclass(eq=False)
class TangentState:
    """Output of J: ``dq`` velocities, ``dp`` forces, ``dE``/``dB`` fields per charge."""

    dq: np.ndarray
    dp: np.ndarray
    fields: list = field(default_factory=list)


class SourceModel:
    """Array-level kernels of J for fixed grid, shapes and coupling."""

    def __init__(self, grid, shapes, coupling):
        shapes = tuple(shapes)
        if coupling.N != len(shapes):
            raise StructureError(f"coupling is {coupling.N}x{coupling.N} but {len(shapes)} shapes given")
        self.grid = grid
        self.shapes = shapes
        self.coupling = coupling
        self.N = len(shapes)
        if self.N:
            self.rho_hat = np.stack([s.spectrum(grid) for s in shapes])
        else:
            self.rho_hat = np.zeros((0,) + grid.spectral_shape, dtype=complex)

    def densities(self, q):
        """Shifted density spectra, shape ``(N, n, n, nz)``."""
        q = np.asarray(q, dtype=float).reshape(-1, 3)
        out = np.empty_like(self.rho_hat)
        for i in range(self.N):
            np.multiply(self.rho_hat[i], self.grid.shift_phase(q[i]), out=out[i])
        return out

    def forces(self, rho_q, v, E_hat, B_hat):
        """Smeared Lorentz forces ``(N, 3)`` from density and field spectra."""
        N = self.N
        if N == 0:
            return np.zeros((0, 3))
        g = self.grid
        # weighted Parseval sums as one matrix product over the flattened modes
        scale = g.cell_volume / g.n**3
        wr = (np.conj(rho_q) * g.half_weights).reshape(N, -1)
        a = (wr @ E_hat.reshape(N * 3, -1).T).real.reshape(N, N, 3) * scale  # (i, j, comp)
        b = (wr @ B_hat.reshape(N * 3, -1).T).real.reshape(N, N, 3) * scale
        vb = np.cross(v[:, None, :], b)
        return np.einsum("ij,ijc->ic", self.coupling.e, a + vb)

    def currents(self, rho_q, v):
        """Current term ``-4 pi v rho(. - q)`` as spectra ``(N, 3, n, n, nz)``."""
        return -FOUR_PI * v[:, :, None, None, None] * rho_q[:, None]

    def longitudinal_field(self, q):
        """``-4 pi i k rho(. - q) / |k|^2``, shape ``(N, 3, n, n, nz)``.

        By continuity the time integral of the longitudinal current between
        two positions is the difference of this field at the endpoints.
        """
        g = self.grid
        sym = -1j * FOUR_PI * g.kvec * g.inv_ksq
        return sym[None] * self.densities(q)[:, None]

    def self_consistent_J(self, q, p, m, E_hat, B_hat):
        """Return ``(v, F, dE_hat)`` for array states."""
        v = velocity(p, m)
        rho_q = self.densities(q)
        F = self.forces(rho_q, v, E_hat, B_hat)
        return v, F, self.currents(rho_q, v)


@dataclass(eq=False)
class System:
    """Everything that stays fixed during a run: grid, shapes, coupling, weight."""

    grid: object
    shapes: tuple
    coupling: CouplingMatrix
    weight: object

    def __post_init__(self):
        self.shapes = tuple(self.shapes)
        if self.weight.grid != self.grid:
            raise StructureError("weight is sampled on a different grid")

    @cached_property
    def model(self):
        return SourceModel(self.grid, self.shapes, self.coupling)

    @property
    def N(self):
        return len(self.shapes)


def _check_state(phi, shapes):
    if phi.N != len(shapes):
        raise StructureError(f"state has {phi.N} charges but {len(shapes)} shapes were given")


def lorentz_force(i, phi, shapes, coupling):
    """Smeared force ``sum_j e_ij int rho_i(x - q_i) (E_j + v_i x B_j)`` on charge i.

    The value equals the midpoint sum over grid points of the band-limited
    density times the fields (evaluated via Parseval).
    """
    _check_state(phi, shapes)
    model = SourceModel(phi.grid, shapes, coupling)
    q, p, m = phi.positions(), phi.momenta(), phi.masses()
    v = velocity(p, m)
    rho_i = model.densities(q)[i]
    E_hat = np.stack([f.E_hat for f in phi.fields])
    B_hat = np.stack([f.B_hat for f in phi.fields])
    g = phi.grid
    a = g.spectral_inner(rho_i, E_hat)  # (j, comp)
    b = g.spectral_inner(rho_i, B_hat)
    terms = a + np.cross(v[i], b)
    return coupling.e[i] @ terms


def density_field(i, phi, shapes, band_limited=False):
    """Grid samples of ``rho_i(x - q_i)``.

    By default the compactly supported profile is sampled at the periodic
    distance from ``q_i`` and scaled so its midpoint sum is ``e_total``; it
    vanishes exactly where ``|x - q_i| >= R``.  With ``band_limited`` the
    density used by the integrator is returned instead (same total, small
    tails outside the support because the Nyquist modes are removed).
    """
    _check_state(phi, shapes)
    grid = phi.grid
    pt = phi.particles[i]
    shape = shapes[i]
    if band_limited:
        return grid.ifft(shape.spectrum(grid) * grid.shift_phase(pt.q))
    shape.check_fits(grid)
    d = grid.coords - np.asarray(pt.q, dtype=float)[:, None, None, None]
    d -= grid.L * np.round(d / grid.L)
    samples = bump(np.sqrt(np.sum(d * d, axis=0)), shape.R)
    total = np.sum(samples) * grid.cell_volume
    if total <= 0:
        raise GeometryError(f"support radius {shape.R} is not resolved by dx={grid.dx}")
    return samples * (shape.e_total / total)


def current_source(i, phi, shapes, band_limited=False):
    """Grid samples of ``-4 pi v(p_i) rho_i(x - q_i)``, shape ``(3, n, n, n)``."""
    pt = phi.particles[i]
    v = velocity(pt.p, pt.m)
    return -FOUR_PI * v[:, None, None, None] * density_field(i, phi, shapes, band_limited)[None]


def apply_J(phi, shapes, coupling):
    """The full source map J(phi) as a :class:`TangentState`."""
    _check_state(phi, shapes)
    model = SourceModel(phi.grid, shapes, coupling)
    if phi.N == 0:
        return TangentState(np.zeros((0, 3)), np.zeros((0, 3)), [])
    E_hat = np.stack([f.E_hat for f in phi.fields])
    B_hat = np.stack([f.B_hat for f in phi.fields])
    v, F, dE = model.self_consistent_J(phi.positions(), phi.momenta(), phi.masses(), E_hat, B_hat)
    zero = np.zeros((3,) + phi.grid.spectral_shape, dtype=complex)
    fields = [FieldPair.from_spectra(phi.grid, dE[i], zero) for i in range(phi.N)]
    return TangentState(v, F, fields)


def tangent_norm(ts, w):
    """``||J(phi)||`` in the weighted phase-space norm."""
    from .weights import _weighted_sq

    total = float(np.sum(ts.dq**2) + np.sum(ts.dp**2))
    for fp in ts.fields:
        total += _weighted_sq(fp.E, w) + _weighted_sq(fp.B, w)
    return float(np.sqrt(total))


@dataclass
class JBoundReport:
    lhs: float
    rhs: float
    C_J: float
    passed: bool

    @property
    def slack(self):
        """``rhs - lhs``; positive when the bound holds strictly."""
        return self.rhs - self.lhs

    @property
    def ratio(self):
        return self.rhs / self.lhs if self.lhs > 0 else np.inf


def j_bound_constant(shapes, coupling, masses, w):
    """``C_J = N K_vel + 2 N e sum||rho_i/sqrt(w)|| + 4 pi K_vel sum||rho_i||_w``."""
    N = len(shapes)
    if N == 0:
        return 0.0
    grid = w.grid
    k_vel = float(np.sum(2.0 / np.abs(masses)))
    e = float(np.max(np.abs(coupling.e))) if coupling.e.size else 0.0
    rho_over_sqrt_w = 0.0
    rho_w = 0.0
    for s in shapes:
        rho = s.samples(grid)
        rho_over_sqrt_w += np.sqrt(np.sum(rho * rho / w.values) * grid.cell_volume)
        rho_w += np.sqrt(np.sum(rho * rho * w.values) * grid.cell_volume)
    return N * k_vel + 2.0 * N * e * rho_over_sqrt_w + FOUR_PI * k_vel * rho_w


def j_bound_check(phi, shapes, coupling, w):
    """Compare ``||J(phi)||`` with ``C_J sum_i (1 + C_w|q_i|)^P_w ||phi||``."""
    from .weights import phase_norm

    ts = apply_J(phi, shapes, coupling)
    lhs = tangent_norm(ts, w)
    C_J = j_bound_constant(shapes, coupling, phi.masses(), w)
    growth = sum((1.0 + w.C_w * np.linalg.norm(pt.q)) ** w.P_w for pt in phi.particles)
    rhs = C_J * growth * phase_norm(phi, w)
    return JBoundReport(lhs, rhs, C_J, bool(lhs <= rhs))


def empirical_j_lipschitz(phi, shapes, coupling, w, rng, trials=8, rel_scale=1e-3):
    """Largest observed ``||J(phi + d) - J(phi)|| / ||d||`` over random ``d``."""
    from .weights import phase_norm

    base = apply_J(phi, shapes, coupling)
    grid = phi.grid
    size = rel_scale * max(phase_norm(phi, w), 1.0)
    worst = 0.0
    for _ in range(trials):
        fields = [
            FieldPair(grid, *(grid.ifft(grid.fft(rng.normal(size=(3,) + grid.shape)) * grid.resolved)
                              for _ in range(2)))
            for _ in phi.particles
        ]
        moves = [(rng.normal(size=3), rng.normal(size=3)) for _ in phi.particles]
        delta = PhaseSpacePoint([pt.replace(q=dq, p=dp) for pt, (dq, dp) in zip(phi.particles, moves)],
                                fields, grid)
        s = size / phase_norm(delta, w)
        pert = PhaseSpacePoint(
            [pt.replace(q=pt.q + s * dq, p=pt.p + s * dp) for pt, (dq, dp) in zip(phi.particles, moves)],
            [f + d.scaled(s) for f, d in zip(phi.fields, fields)],
            grid,
        )
        other = apply_J(pert, shapes, coupling)
        diff = TangentState(
            other.dq - base.dq,
            other.dp - base.dp,
            [a - b for a, b in zip(other.fields, base.fields)],
        )
        worst = max(worst, tangent_norm(diff, w) / size)
    return worst
