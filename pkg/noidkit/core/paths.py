"""Integration paths in the z-plane: line and arc segments, routed approaches, generator loops."""

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from noidkit.errors import TransportError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LineSegment:
    start: complex
    end: complex

    def point(self, s):
        return self.start + (self.end - self.start) * np.asarray(s)

    def velocity(self, s):
        return np.full(np.shape(s), self.end - self.start, dtype=complex)

    def reversed(self) -> "LineSegment":
        return LineSegment(self.end, self.start)

    @property
    def length(self) -> float:
        return abs(self.end - self.start)


@dataclass(frozen=True)
class ArcSegment:
    """center + radius exp(i (theta0 + s sweep)), s in [0, 1]."""

    center: complex
    radius: float
    theta0: float
    sweep: float

    def point(self, s):
        return self.center + self.radius * np.exp(1j * (self.theta0 + self.sweep * np.asarray(s)))

    def velocity(self, s):
        return 1j * self.sweep * (self.point(s) - self.center)

    @property
    def start(self) -> complex:
        return complex(self.point(0.0))

    @property
    def end(self) -> complex:
        return complex(self.point(1.0))

    def reversed(self) -> "ArcSegment":
        return ArcSegment(self.center, self.radius, self.theta0 + self.sweep, -self.sweep)

    @property
    def length(self) -> float:
        return abs(self.sweep) * self.radius


Segment = Union[LineSegment, ArcSegment]


@dataclass(frozen=True)
class PathSpec:
    """Piecewise-smooth path; ``loop`` marks closed generators."""

    segments: tuple[Segment, ...]
    loop: bool = False

    def __post_init__(self):
        if not self.segments:
            raise TransportError("a path needs at least one segment", location=None)
        for left, right in zip(self.segments[:-1], self.segments[1:]):
            if abs(left.end - right.start) > 1e-12 * max(1.0, abs(left.end)):
                raise TransportError(f"path segments do not join at {left.end}", location=left.end)
        if self.loop and abs(self.end - self.start) > 1e-14 * max(1.0, abs(self.start)):
            raise TransportError("loop path is not closed", location=self.end)

    @property
    def start(self) -> complex:
        return complex(self.segments[0].start)

    basepoint = start

    @property
    def end(self) -> complex:
        return complex(self.segments[-1].end)

    @property
    def length(self) -> float:
        return float(sum(seg.length for seg in self.segments))

    def reversed(self) -> "PathSpec":
        return PathSpec(tuple(seg.reversed() for seg in reversed(self.segments)), self.loop)

    def then(self, other: "PathSpec") -> "PathSpec":
        return PathSpec(self.segments + other.segments, loop=False)

    def sample(self, per_segment: int = 64) -> np.ndarray:
        s = np.linspace(0.0, 1.0, per_segment + 1)
        return np.concatenate([np.atleast_1d(seg.point(s)) for seg in self.segments])

    def clearance(self, points: Sequence[complex], per_segment: int = 256) -> float:
        """Smallest distance from the path to the given points."""
        points = np.asarray(points, dtype=complex).ravel()
        if points.size == 0:
            return np.inf
        trace = self.sample(per_segment)
        return float(np.min(np.abs(trace[:, None] - points[None, :])))

    def validate(self, singular: Sequence[complex], clearance: float = 1e-6) -> None:
        distance = self.clearance(singular)
        if distance < clearance:
            raise TransportError(f"path passes within {distance:.3e} of the singular set", location=self.start)


def straight_path(a: complex, b: complex) -> PathSpec:
    return PathSpec((LineSegment(complex(a), complex(b)),))


def polyline(points: Sequence[complex]) -> PathSpec:
    points = [complex(p) for p in points]
    return PathSpec(tuple(LineSegment(p, q) for p, q in zip(points[:-1], points[1:]) if p != q))


def circle_path(center: complex, radius: float, theta0: float = 0.0, turns: int = 1) -> PathSpec:
    return PathSpec((ArcSegment(complex(center), float(radius), float(theta0), 2 * np.pi * turns),), loop=True)


class Obstacle(NamedTuple):
    center: complex
    keep_out: float


def _segment_distance(a: complex, b: complex, point: complex) -> tuple[float, float]:
    """Distance from point to segment [a, b] and the projection parameter."""
    direction = b - a
    if direction == 0:
        return abs(point - a), 0.0
    s = float(np.clip(((point - a) * np.conj(direction)).real / abs(direction) ** 2, 0.0, 1.0))
    return abs(point - (a + s * direction)), s


def route(a: complex, b: complex, obstacles: Sequence[Obstacle], depth: int = 8) -> list[complex]:
    """Waypoints of a polyline from a to b keeping out of every obstacle disk."""
    for obstacle in obstacles:
        distance, s = _segment_distance(a, b, obstacle.center)
        if distance >= obstacle.keep_out or s in (0.0, 1.0):
            continue
        if depth == 0:
            raise TransportError(f"cannot route a path around {obstacle.center}", location=obstacle.center)
        direction = (b - a) / abs(b - a)
        foot = a + s * (b - a)
        side = obstacle.center - foot
        normal = -side / abs(side) if abs(side) > 1e-14 else 1j * direction
        waypoint = obstacle.center + 1.5 * obstacle.keep_out * normal
        logger.debug("detour around %s through %s", obstacle.center, waypoint)
        return route(a, waypoint, obstacles, depth - 1)[:-1] + route(waypoint, b, obstacles, depth - 1)
    return [a, b]


class GeneratorLoop(NamedTuple):
    """Approach from the basepoint to q on the circle, and the circle from q around the end."""

    approach: PathSpec
    circle: PathSpec

    @property
    def full(self) -> PathSpec:
        return PathSpec(self.approach.segments + self.circle.segments + self.approach.reversed().segments, loop=True)

    @property
    def q(self) -> complex:
        return self.circle.start


def generator_loop(
    z0: complex,
    center: complex,
    radius: float,
    obstacles: Sequence[Obstacle] = (),
    clearance: float = 1e-6,
    singular: Optional[Sequence[complex]] = None,
) -> GeneratorLoop:
    """Positively oriented loop around ``center`` based at z0."""
    offset = complex(z0) - complex(center)
    if abs(offset) <= radius:
        raise TransportError(f"basepoint {z0} lies inside the generator circle around {center}", location=z0)
    theta = float(np.angle(offset))
    q = complex(center) + radius * np.exp(1j * theta)
    approach = polyline(route(complex(z0), q, obstacles))
    circle = circle_path(center, radius, theta)
    if singular is not None:
        approach.validate(singular, clearance)
        circle.validate(singular, clearance)
    return GeneratorLoop(approach, circle)
