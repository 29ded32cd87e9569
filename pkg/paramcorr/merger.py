"""Virial scaling of dissipationless (dry) mergers.

A system of mass ``M_i`` and mean square speed ``<v_i**2>`` accretes mass
``M_a = eta * M_i`` with ``<v_a**2> = epsilon * <v_i**2>``. Energy
conservation and the virial theorem give the final mean square speed,
gravitational radius and mean density relative to the initial ones.
"""

import math
from dataclasses import asdict, dataclass

from paramcorr.errors import NoSolutionError


@dataclass(frozen=True)
class MergerParams:
    """Accreted-to-initial mass ratio ``eta`` and mean-square-speed ratio ``epsilon``."""

    eta: float
    epsilon: float

    def __post_init__(self):
        for name in ("eta", "epsilon"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class MergerRatios:
    v2_ratio: float
    size_ratio: float
    density_ratio: float

    def to_dict(self) -> dict:
        return asdict(self)


def merger_ratios(params: MergerParams) -> MergerRatios:
    """Final-to-initial ratios of ``<v**2>``, gravitational radius and density.

    With ``eta_eps = eta * epsilon``::

        v2_ratio      = (1 + eta_eps) / (1 + eta)
        size_ratio    = (1 + eta)**2 / (1 + eta_eps)
        density_ratio = (1 + eta_eps)**3 / (1 + eta)**5

    An equal-mass merger of identical systems (``eta = epsilon = 1``) keeps
    the speeds, doubles the size and quarters the density.
    """
    one_eta = 1.0 + params.eta
    one_eta_eps = 1.0 + params.eta * params.epsilon
    return MergerRatios(
        v2_ratio=one_eta_eps / one_eta,
        size_ratio=one_eta**2 / one_eta_eps,
        density_ratio=one_eta_eps**3 / one_eta**5,
    )


def invert_for_eta(size_ratio_target: float, epsilon: float) -> float:
    """Mass ratio ``eta >= 0`` producing ``size_ratio_target`` at ``epsilon``.

    Solves ``(1 + eta)**2 = T * (1 + eta * epsilon)``, i.e.
    ``eta**2 + (2 - T * epsilon) * eta + (1 - T) = 0``, and returns the
    smallest non-negative root.

    Raises:
        ValueError: If the target is not positive or epsilon is negative.
        NoSolutionError: If no root is non-negative.
    """
    T = float(size_ratio_target)
    if not (math.isfinite(T) and T > 0):
        raise ValueError(f"size_ratio_target must be positive, got {size_ratio_target}")
    if not (math.isfinite(epsilon) and epsilon >= 0):
        raise ValueError(f"epsilon must be finite and >= 0, got {epsilon}")
    if T == 1.0:
        return 0.0

    b = 2.0 - T * epsilon
    c = 1.0 - T
    disc = b * b - 4.0 * c
    if disc < 0:
        raise NoSolutionError(
            f"No real mass ratio gives size ratio {T} at epsilon={epsilon}"
        )
    sq = math.sqrt(disc)
    # Numerically stable pair of roots
    q = -0.5 * (b + math.copysign(sq, b))
    roots = [q, c / q]
    candidates = sorted(r for r in roots if r >= 0)
    if not candidates:
        raise NoSolutionError(
            f"No non-negative mass ratio gives size ratio {T} at epsilon={epsilon}"
        )
    return candidates[0]
