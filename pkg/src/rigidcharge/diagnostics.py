"""Constraint residuals, energies, growth and Lipschitz checks, regularity ratios."""

from dataclasses import dataclass, field

import numpy as np

from .evolution import _picard_arrays, _strang_arrays, array_norm, check_horizon, to_arrays
from .sources import FOUR_PI, j_bound_constant
from .spectral import div_hat
from .weights import field_norm, multi_indices, phase_norm


def constraint_residuals(phi, shapes):
    """Per-charge ``||div E_i - 4 pi rho_i(. - q_i)||`` and ``||div B_i||`` (L2).

    The ``k = 0`` mode is excluded: on the torus it carries the uniform
    neutralizing background and no divergence can match it.
    """
    grid = phi.grid
    gauss, divb = [], []
    for pt, fp, shape in zip(phi.particles, phi.fields, shapes):
        rho_q = shape.spectrum(grid) * grid.shift_phase(pt.q)
        r = div_hat(fp.E_hat, grid) - FOUR_PI * rho_q
        r[0, 0, 0] = 0.0
        b = div_hat(fp.B_hat, grid)
        b[0, 0, 0] = 0.0
        gauss.append(float(np.sqrt(grid.spectral_sq_norm(r))))
        divb.append(float(np.sqrt(grid.spectral_sq_norm(b))))
    return np.array(gauss), np.array(divb)


def charge_reference(phi, shapes):
    """``||4 pi rho_i||`` per charge, the natural scale of the Gauss residual."""
    grid = phi.grid
    return np.array([
        float(np.sqrt(grid.spectral_sq_norm(FOUR_PI * s.spectrum(grid)))) for s in shapes
    ])


def kinetic_energy(phi):
    return float(sum(pt.sigma * np.sqrt(pt.m**2 + pt.p @ pt.p) for pt in phi.particles))


def energy(phi, variant="total_field"):
    """Energy with per-charge field energies or with the field energy of the summed fields.

    ``per_charge``: ``sum_i sigma_i sqrt(m_i^2 + p_i^2) + (1/8 pi) int (E_i^2 + B_i^2)``.
    ``total_field``: same kinetic part, field part of ``sum_i E_i`` and ``sum_i B_i``.
    """
    grid = phi.grid
    kin = kinetic_energy(phi)
    if not phi.fields:
        return kin
    if variant == "per_charge":
        f = sum(grid.spectral_sq_norm(fp.E_hat).sum() + grid.spectral_sq_norm(fp.B_hat).sum()
                for fp in phi.fields)
    elif variant == "total_field":
        E = sum(fp.E_hat for fp in phi.fields)
        B = sum(fp.B_hat for fp in phi.fields)
        f = grid.spectral_sq_norm(E).sum() + grid.spectral_sq_norm(B).sum()
    else:
        raise ValueError(f"unknown energy variant {variant!r}")
    return kin + float(f) / (2.0 * FOUR_PI)


# ---------------------------------------------------------------------------
# growth bounds


@dataclass
class BoundCheck:
    lhs: np.ndarray
    rhs: np.ndarray
    passed: bool
    worst_margin: float

    @classmethod
    def from_series(cls, lhs, rhs):
        lhs = np.asarray(lhs, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        with np.errstate(invalid="ignore"):
            margins = rhs - lhs
        worst = float(np.min(margins)) if margins.size else np.inf
        return cls(lhs, rhs, bool(np.all(lhs <= rhs)), worst)


def gronwall_constant(C_J, N, C_w, P_w, norm0, T):
    """``C(T) = e^(gamma T) C_J N (1 + C_w (||phi0|| + T))^P_w`` without the ``e^(gamma T)``.

    The caller multiplies by ``e^(gamma T)``; kept separate so the free-flow
    factor is visible.
    """
    return C_J * N * (1.0 + C_w * (norm0 + abs(T))) ** P_w


def gronwall_rhs(t, gamma, C_J, N, C_w, P_w, norm0):
    """``e^(gamma|t|) (1 + C|t| e^(C|t|)) ||phi0||`` with ``C = C(|t|)``."""
    t = np.abs(np.asarray(t, dtype=float))
    with np.errstate(over="ignore"):
        C = np.exp(gamma * t) * gronwall_constant(C_J, N, C_w, P_w, norm0, t)
        return np.exp(gamma * t) * (1.0 + C * t * np.exp(C * t)) * norm0


def growth_bound_check(times, norms, gamma, C_J=0.0, N=0, C_w=0.0, P_w=0, free_only=False):
    """Compare the running sup of ``||phi_t||`` with the a-priori bound.

    With ``free_only`` the bound is ``e^(gamma|t|) ||phi0||`` (no sources).
    """
    norms = np.asarray(norms, dtype=float)
    norm0 = float(norms[0])
    lhs = np.maximum.accumulate(norms)
    if free_only:
        rhs = np.exp(gamma * np.abs(np.asarray(times, dtype=float))) * norm0
    else:
        rhs = gronwall_rhs(times, gamma, C_J, N, C_w, P_w, norm0)
    # a relative slack of a few ulps absorbs rounding when both sides coincide
    return BoundCheck.from_series(lhs, rhs * (1 + 1e-12))


# ---------------------------------------------------------------------------
# run-time recording


@dataclass
class DiagnosticsRecord:
    t: float
    H_per: float
    H_tot: float
    gauss_residuals: np.ndarray
    divB_residuals: np.ndarray
    phase_norm: float
    propagator_bound_margin: float


class DiagnosticsRecorder:
    """Callback for :func:`evolve` that records one :class:`DiagnosticsRecord` per call."""

    def __init__(self, system, phi0, every=1):
        self.system = system
        self.every = max(1, int(every))
        self.records = []
        self._calls = 0
        w = system.weight
        self.norm0 = phase_norm(phi0, w)
        self.C_J = j_bound_constant(system.shapes, system.coupling, phi0.masses(), w)
        self._sup = 0.0

    def __call__(self, t, phi):
        call = self._calls
        self._calls += 1
        if call % self.every:
            return
        w = self.system.weight
        gauss, divb = constraint_residuals(phi, self.system.shapes)
        norm = phase_norm(phi, w)
        self._sup = max(self._sup, norm)
        rhs = float(gronwall_rhs(t, w.gamma, self.C_J, phi.N, w.C_w, w.P_w, self.norm0))
        self.records.append(DiagnosticsRecord(
            t=float(t),
            H_per=energy(phi, "per_charge"),
            H_tot=energy(phi, "total_field"),
            gauss_residuals=gauss,
            divB_residuals=divb,
            phase_norm=norm,
            propagator_bound_margin=rhs - self._sup,
        ))

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def growth_check(self):
        w = self.system.weight
        N = self.system.N
        return growth_bound_check(self.column("t"), self.column("phase_norm"), w.gamma,
                                  self.C_J, N, w.C_w, w.P_w)


# ---------------------------------------------------------------------------
# Lipschitz twin runs


def perturb(phi, delta, particle=0, slot="p", component=0):
    """Copy of ``phi`` with ``delta`` added to one coordinate of one particle."""
    parts = list(phi.particles)
    pt = parts[particle]
    vec = np.array(getattr(pt, slot), dtype=float)
    vec[component] += delta
    parts[particle] = pt.replace(**{slot: vec})
    return phi.with_particles(parts)


@dataclass
class LipschitzReport:
    deltas: np.ndarray
    ratios: np.ndarray
    times: np.ndarray
    distances: list = field(default_factory=list)

    @property
    def spread(self):
        """``(max - min) / min`` of the ratios over the nonzero perturbations."""
        r = self.ratios[np.asarray(self.deltas) != 0]
        if r.size == 0 or np.min(r) == 0:
            return 0.0
        return float((np.max(r) - np.min(r)) / np.min(r))

    def stable(self, tol=0.2):
        return bool(np.all(np.isfinite(self.ratios)) and self.spread < tol)


def lipschitz_probe(system, phi0, cfg, deltas=(1e-4, 1e-6, 1e-8), perturbation=None):
    """Run ``phi0`` and perturbed copies in lockstep; report sup-distance ratios.

    ``perturbation(phi, delta)`` builds the perturbed start; the default adds
    ``delta`` to the x-momentum of particle 0.  For each ``delta`` the ratio
    is ``sup_t ||phi_t - phi~_t|| / ||phi0 - phi~0||`` (``0`` when the
    initial distance is zero).
    """
    if perturbation is None:
        perturbation = perturb
    if cfg.check_horizon and system.N:
        check_horizon(system, cfg.T, cfg.dt)
    base = to_arrays(phi0)
    twins = [to_arrays(perturbation(phi0, d)) for d in deltas]
    initial = [array_norm(system, t.q - base.q, t.p - base.p, t.E - base.E, t.B - base.B) for t in twins]
    dist = [[d0] for d0 in initial]
    times = [0.0]
    steps = int(round(abs(cfg.T) / cfg.dt))
    h = np.sign(cfg.T) * cfg.dt if cfg.T else cfg.dt

    def step(st):
        if cfg.scheme == "picard":
            return _picard_arrays(system, st, h, cfg)[0]
        return _strang_arrays(system, st, h)

    for n in range(steps):
        base = step(base)
        twins = [step(t) for t in twins]
        times.append((n + 1) * h)
        for k, t in enumerate(twins):
            dist[k].append(array_norm(system, t.q - base.q, t.p - base.p, t.E - base.E, t.B - base.B))
    ratios = np.array([max(d) / d0 if d0 > 0 else 0.0 for d, d0 in zip(dist, initial)])
    return LipschitzReport(np.asarray(deltas, dtype=float), ratios, np.array(times),
                           [np.array(d) for d in dist])


# ---------------------------------------------------------------------------
# regularity


def regularity_probe(field_arr, w, k, grid):
    """``sup_x sum_{|a| <= k-2} |D^a F(x)|`` divided by ``||F||_{H^k_w}``.

    Returns 0 for the zero field.
    """
    if k < 2:
        raise ValueError("regularity probe needs k >= 2")
    F = np.asarray(field_arr, dtype=float)
    if F.ndim == 3:
        F = F[None]
    denom = field_norm(F, w, grid, k)
    if denom == 0:
        return 0.0
    F_hat = grid.fft(F)
    ik = 1j * grid.kvec
    total = np.zeros(grid.shape)
    for order in range(k - 1):
        for a in multi_indices(order):
            sym = ik[0] ** a[0] * ik[1] ** a[1] * ik[2] ** a[2]
            D = grid.ifft(sym * F_hat)
            total += np.sqrt(np.sum(D * D, axis=0))
    return float(np.max(total) / denom)


__all__ = [
    "BoundCheck", "DiagnosticsRecord", "DiagnosticsRecorder", "LipschitzReport",
    "charge_reference", "constraint_residuals", "energy",
    "growth_bound_check", "gronwall_rhs", "lipschitz_probe", "perturb", "regularity_probe",
]
