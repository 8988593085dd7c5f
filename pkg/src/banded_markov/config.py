"""Numerical tolerances shared across modules."""

from dataclasses import dataclass, fields, replace


@dataclass(frozen=True)
class Tolerances:
    """Default tolerances.

    Entries documented as "per row" or "per state" are multiplied by the
    problem size where they are used (``recon`` by the factorization depth,
    ``bio``, ``meas`` and ``stat`` by ``N + 1``, ``sep`` by the Perron root).
    """

    row: float = 1e-12
    recon: float = 1e-10
    fill: float = 1e-12
    pivot: float = 1e-13
    poly: float = 1e-10
    poly_abs: float = 1e-14
    sep: float = 1e-10
    bio: float = 1e-9
    meas: float = 1e-10
    spec: float = 1e-11
    km: float = 1e-9
    stat: float = 1e-10
    mass: float = 1e-3

    def override(self, **changes):
        for key, value in changes.items():
            if key not in self.names():
                raise KeyError(f"unknown tolerance {key!r}")
            if not value > 0:
                raise ValueError(f"tolerance {key!r} must be positive")
        return replace(self, **changes)

    @classmethod
    def names(cls):
        return [f.name for f in fields(cls)]


DEFAULT_TOLERANCES = Tolerances()
