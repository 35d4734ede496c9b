"""Measurement-line partitions of a rectangle and the observer decay test.

Sensors sit on full-length vertical lines x = b_i and horizontal lines
y = a_j. The lines cut the rectangle into sub-rectangles; on each of them the
estimation error decays once the Lipschitz constant L is below the
sub-rectangle's first Dirichlet eigenvalue.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import EnvelopeInvalid
from .spectral import Rectangle, weyl_constant


@dataclass(frozen=True)
class SubRect:
    x0: float
    x1: float
    y0: float
    y1: float

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height

    @property
    def first_eigenvalue(self):
        return np.pi**2 * (self.width**-2 + self.height**-2)

    def as_rectangle(self):
        return Rectangle(self.width, self.height)


@dataclass(frozen=True)
class SensorPartition:
    domain: Rectangle
    vertical_lines: tuple = ()
    horizontal_lines: tuple = ()

    def __post_init__(self):
        v = tuple(float(b) for b in self.vertical_lines)
        h = tuple(float(a) for a in self.horizontal_lines)
        object.__setattr__(self, "vertical_lines", v)
        object.__setattr__(self, "horizontal_lines", h)
        for lines, length, name in ((v, self.domain.width, "vertical"),
                                    (h, self.domain.height, "horizontal")):
            pts = (0.0,) + lines + (length,)
            if any(b <= a for a, b in zip(pts, pts[1:])):
                raise ValueError(f"{name} lines must be strictly increasing and interior")

    @property
    def x_breaks(self):
        return (0.0,) + self.vertical_lines + (self.domain.width,)

    @property
    def y_breaks(self):
        return (0.0,) + self.horizontal_lines + (self.domain.height,)

    @property
    def subdomains(self):
        xb, yb = self.x_breaks, self.y_breaks
        return [SubRect(xb[i], xb[i + 1], yb[j], yb[j + 1])
                for i in range(len(xb) - 1) for j in range(len(yb) - 1)]

    @property
    def first_eigenvalues(self):
        return np.array([s.first_eigenvalue for s in self.subdomains])

    @property
    def rhs(self):
        """pi^2 (min gap^-2 over x + min gap^-2 over y), the smallest first eigenvalue."""
        gx = np.diff(self.x_breaks)
        gy = np.diff(self.y_breaks)
        return float(np.pi**2 * ((1.0 / gx**2).min() + (1.0 / gy**2).min()))

    def decay_margin(self, L):
        return float(self.first_eigenvalues.min() - L)

    def to_dict(self):
        return {"vertical_lines": list(self.vertical_lines),
                "horizontal_lines": list(self.horizontal_lines)}


def volume_threshold(d, L):
    """Largest subdomain volume for which the error system decays at Lipschitz L."""
    if L <= 0:
        raise ValueError("Lipschitz constant must be positive")
    return 1.0 / weyl_constant(d) * (d / (L * (d + 2.0))) ** (d / 2.0)


@dataclass
class PartitionCheck:
    satisfied: bool
    margin: float
    envelope_rate: float


def check_partition(p, L):
    """Test L < pi^2 (min_i (b_i - b_{i-1})^-2 + min_j (a_j - a_{j-1})^-2)."""
    rhs = p.rhs
    return PartitionCheck(L < rhs, rhs - L, p.decay_margin(L))


def equidistant_partition(M1, M2, domain=None):
    """M1 equally spaced vertical lines and M2 equally spaced horizontal lines."""
    domain = domain or Rectangle()
    if M1 < 0 or M2 < 0:
        raise ValueError("line counts must be non-negative")
    v = tuple(domain.width * i / (M1 + 1) for i in range(1, M1 + 1))
    h = tuple(domain.height * j / (M2 + 1) for j in range(1, M2 + 1))
    return SensorPartition(domain, v, h)


def random_partition(M1, M2, rng, domain=None):
    domain = domain or Rectangle()
    v = np.sort(rng.uniform(0, domain.width, M1))
    h = np.sort(rng.uniform(0, domain.height, M2))
    return SensorPartition(domain, tuple(v), tuple(h))


@dataclass
class SensorChoice:
    M: int
    split: tuple
    partition: SensorPartition


def minimal_sensor_lines(L, domain=None, max_lines=10_000):
    """Fewest equidistant lines whose partition satisfies the decay condition.

    For each total M every split (M1, M2) is tried; among passing splits the
    all-vertical one (M, 0) is preferred, then the largest condition value.
    """
    domain = domain or Rectangle()
    if L <= 0:
        raise ValueError("Lipschitz constant must be positive")
    for M in range(max_lines + 1):
        passing = []
        for M1 in range(M, -1, -1):
            p = equidistant_partition(M1, M - M1, domain)
            if check_partition(p, L).satisfied:
                passing.append((M1, p))
        if passing:
            M1, p = max(passing, key=lambda t: (t[0] == M, t[1].rhs, t[0]))
            return SensorChoice(M, (M1, M - M1), p)
    raise RuntimeError("search exhausted")  # unreachable for finite L


def exhaustive_split_table(M_max, domain=None):
    """RHS of the decay condition for every equidistant split with M1 + M2 <= M_max."""
    domain = domain or Rectangle()
    return {(M1, M2): equidistant_partition(M1, M2, domain).rhs
            for M1, M2 in itertools.product(range(M_max + 1), repeat=2) if M1 + M2 <= M_max}


def observer_decay_envelope(p, L, eps0_norm, t):
    """eps0_norm * exp((L - min first eigenvalue) t)."""
    if not check_partition(p, L).satisfied:
        raise EnvelopeInvalid(
            f"partition does not satisfy the decay condition at L={L}: envelope grows")
    return eps0_norm * np.exp((L - p.first_eigenvalues.min()) * np.asarray(t, dtype=float))


def bly_first_eigenvalue_bound(volume, d=2):
    """Lower bound 2 pi / volume (d=2) for the first eigenvalue of any subdomain."""
    return d / (d + 2.0) * (1.0 / (weyl_constant(d) * volume)) ** (2.0 / d)


def threshold_holds(p, L, d=2):
    return max(s.area for s in p.subdomains) < volume_threshold(d, L)

