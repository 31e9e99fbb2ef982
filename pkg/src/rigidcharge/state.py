"""Particle states and the full phase-space point."""

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, StructureError


@dataclass(frozen=True, eq=False)
class ParticleState:
    """Position ``q``, momentum ``p`` and (nonzero, possibly negative) mass ``m``.

    Positions are stored unwrapped; periodicity is applied only where
    the charge density is evaluated.
    """

    q: np.ndarray
    p: np.ndarray
    m: float = 1.0

    def __post_init__(self):
        q = np.array(self.q, dtype=float).reshape(3)
        p = np.array(self.p, dtype=float).reshape(3)
        if self.m == 0 or not np.isfinite(self.m):
            raise DomainError(f"mass must be finite and nonzero, got {self.m}")
        q.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "m", float(self.m))

    @property
    def sigma(self):
        return 1.0 if self.m > 0 else -1.0

    def replace(self, q=None, p=None):
        return ParticleState(self.q if q is None else q, self.p if p is None else p, self.m)


class PhaseSpacePoint:
    """State ``(q_i, p_i, E_i, B_i)`` for N charges, one field pair per charge."""

    __slots__ = ("particles", "fields", "grid")

    def __init__(self, particles, fields, grid=None):
        particles = tuple(particles)
        fields = tuple(fields)
        if len(particles) != len(fields):
            raise StructureError(
                f"{len(particles)} particles but {len(fields)} field pairs"
            )
        grids = {f.grid for f in fields}
        if len(grids) > 1:
            raise StructureError("all field pairs must share one grid")
        if grids:
            (only,) = grids
            if grid is not None and grid != only:
                raise StructureError("field grid differs from the declared grid")
            grid = only
        if grid is None:
            raise StructureError("a grid is required for a state without charges")
        self.particles = particles
        self.fields = fields
        self.grid = grid

    @property
    def N(self):
        return len(self.particles)

    def with_fields(self, fields):
        return PhaseSpacePoint(self.particles, fields, self.grid)

    def with_particles(self, particles):
        return PhaseSpacePoint(particles, self.fields, self.grid)

    def positions(self):
        return np.array([pt.q for pt in self.particles]).reshape(-1, 3)

    def momenta(self):
        return np.array([pt.p for pt in self.particles]).reshape(-1, 3)

    def masses(self):
        return np.array([pt.m for pt in self.particles], dtype=float)
