"""Derivative-free search over measurement angles.

Objectives are inequality expressions evaluated through a model's
closed form (or lambda-quadrature when no closed form exists); Monte
Carlo backed objectives are rejected.  The search is a coarse grid scan
followed by compass pattern refinement with a halving step, which is
plenty for the smooth trigonometric surfaces that arise here.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np

from .errors import UnsupportedObjectiveError
from .estimation import quadrature_ch_probs, quadrature_E
from .models import Model, get_model

TAU = math.tau

OCTUPLE = ("a", "a2", "b", "b2", "ar", "a2r", "br", "b2r")

INEQUALITY_KINDS = ("retarded_chsh", "same_retarded_chsh", "retarded_ch", "chsh")

#: Default coarse-grid resolution.
GRID_STEP = math.pi / 24

#: Grid scans larger than this are coarsened (doubling the step) to stay
#: tractable; refinement still runs at full precision.
MAX_GRID_POINTS = 20_000_000
MAX_GRID_POINTS_QUADRATURE = 50_000


@dataclass(frozen=True)
class ObjectiveSpec:
    """What to extremize.

    ``retarded`` is "tied" (retarded angles follow the actual ones),
    "free" (they are variables or fixed angles of their own), or a
    mapping of fixed retarded angles.  Variables not listed in ``free``
    take their values from ``fixed`` (default 0).
    """

    model: str
    inequality: str
    direction: str = "minimize"
    free: tuple[str, ...] = ("a", "a2", "b", "b2")
    fixed: Mapping[str, float] = field(default_factory=dict)
    retarded: Union[str, Mapping[str, float]] = "tied"
    grid_step: float = GRID_STEP
    quadrature_nodes: int = 100_000

    def __post_init__(self) -> None:
        if self.inequality not in INEQUALITY_KINDS:
            raise ValueError(f"inequality must be one of {INEQUALITY_KINDS}")
        if self.direction not in ("minimize", "maximize"):
            raise ValueError("direction must be 'minimize' or 'maximize'")
        for name in self.free:
            if name not in OCTUPLE:
                raise ValueError(f"unknown variable {name!r}")
        for name in self.fixed:
            if name not in OCTUPLE:
                raise ValueError(f"unknown fixed variable {name!r}")
        if isinstance(self.retarded, str):
            if self.retarded not in ("tied", "free"):
                raise ValueError("retarded must be 'tied', 'free', or a mapping")
        else:
            object.__setattr__(self, "retarded", dict(self.retarded))
        if not self.free:
            raise ValueError("at least one free variable is required")

    @classmethod
    def from_dict(cls, data: Mapping) -> "ObjectiveSpec":
        kwargs = dict(data)
        if "free" in kwargs:
            kwargs["free"] = tuple(kwargs["free"])
        return cls(**kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ObjectiveSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Optimum:
    """Best point found, with the evaluation trace of the search."""

    settings: dict[str, float]
    value: float
    evaluations: int
    trace: tuple[tuple[int, float], ...]

    def to_dict(self) -> dict:
        return {
            "settings": dict(self.settings),
            "value": self.value,
            "evaluations": self.evaluations,
            "trace": [list(t) for t in self.trace],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


# ----------------------------------------------------------------------
# Objective construction
# ----------------------------------------------------------------------


def _model_E(model: Model, nodes: int) -> Callable[..., np.ndarray]:
    closed = getattr(model, "closed_form_E", None)
    if closed is not None:
        return lambda a, b, ar, br: np.asarray(closed(a, b, ar, br), dtype=float)
    if getattr(model, "is_local", False):
        def by_quadrature(a, b, ar, br):
            a, b, ar, br = np.broadcast_arrays(
                np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                np.asarray(ar, dtype=float), np.asarray(br, dtype=float),
            )
            out = np.empty(a.shape)
            for idx in np.ndindex(a.shape):
                out[idx] = quadrature_E(
                    model, float(a[idx]), float(b[idx]),
                    float(ar[idx]), float(br[idx]), nodes,
                )
            return out
        return by_quadrature
    raise UnsupportedObjectiveError(
        f"model {model.name} offers neither a closed form nor lambda functions"
    )


def _model_p12(model: Model, nodes: int) -> Callable[..., np.ndarray]:
    closed = getattr(model, "closed_form_p12", None)
    if closed is not None:
        return lambda a, b, ar, br: np.asarray(closed(a, b, ar, br), dtype=float)
    if getattr(model, "is_local", False):
        def by_quadrature(a, b, ar, br):
            a, b, ar, br = np.broadcast_arrays(
                np.asarray(a, dtype=float), np.asarray(b, dtype=float),
                np.asarray(ar, dtype=float), np.asarray(br, dtype=float),
            )
            out = np.empty(a.shape)
            for idx in np.ndindex(a.shape):
                out[idx] = quadrature_ch_probs(
                    model, float(a[idx]), float(b[idx]),
                    float(ar[idx]), float(br[idx]), nodes,
                )[0]
            return out
        return by_quadrature
    raise UnsupportedObjectiveError(
        f"model {model.name} offers neither a closed form nor lambda functions"
    )


def _model_marginals(model: Model, nodes: int) -> Callable[..., tuple]:
    p1 = getattr(model, "closed_form_p1", None)
    p2 = getattr(model, "closed_form_p2", None)
    if p1 is not None and p2 is not None:
        return lambda a2, b2: (
            np.asarray(p1(a2, 0.0), dtype=float),
            np.asarray(p2(b2, 0.0), dtype=float),
        )
    if not getattr(model, "is_local", False):
        raise UnsupportedObjectiveError(
            f"model {model.name} offers neither a closed form nor lambda functions"
        )

    def by_quadrature(a2, b2):
        a2, b2 = np.broadcast_arrays(
            np.asarray(a2, dtype=float), np.asarray(b2, dtype=float)
        )
        m1 = np.empty(a2.shape)
        m2 = np.empty(b2.shape)
        for idx in np.ndindex(a2.shape):
            _, m1[idx], m2[idx] = quadrature_ch_probs(
                model, float(a2[idx]), float(b2[idx]), 0.0, 0.0, nodes
            )
        return m1, m2

    return by_quadrature


def _uses_quadrature(model: Model) -> bool:
    return getattr(model, "closed_form_E", None) is None


def build_objective(spec: ObjectiveSpec) -> Callable[[Mapping[str, np.ndarray]], np.ndarray]:
    """Vectorized objective over dicts of free-variable arrays."""
    model = get_model(spec.model)
    E = _model_E(model, spec.quadrature_nodes)

    def resolve(assign: Mapping[str, np.ndarray], name: str) -> np.ndarray:
        if name in assign:
            return np.asarray(assign[name], dtype=float)
        if name in spec.fixed:
            return np.asarray(spec.fixed[name], dtype=float)
        base = name[:-1]  # "ar" -> "a"
        if name.endswith("r"):
            if spec.retarded == "tied":
                return resolve(assign, base)
            if isinstance(spec.retarded, dict) and name in spec.retarded:
                return np.asarray(spec.retarded[name], dtype=float)
        return np.asarray(0.0)

    if spec.inequality in ("retarded_chsh", "chsh", "same_retarded_chsh"):
        def objective(assign: Mapping[str, np.ndarray]) -> np.ndarray:
            a = resolve(assign, "a")
            a2 = resolve(assign, "a2")
            b = resolve(assign, "b")
            b2 = resolve(assign, "b2")
            if spec.inequality == "same_retarded_chsh":
                ar = a2r = a
                br = b2r = b
            elif spec.inequality == "chsh":
                ar, a2r, br, b2r = a, a2, b, b2
            else:
                ar = resolve(assign, "ar")
                a2r = resolve(assign, "a2r")
                br = resolve(assign, "br")
                b2r = resolve(assign, "b2r")
            return (
                E(a2, b2, a2r, b2r)
                + E(a2, b, ar, b2r)
                + E(a, b2, a2r, br)
                - E(a, b, ar, br)
            )
        return objective

    p12 = _model_p12(model, spec.quadrature_nodes)
    marginals = _model_marginals(model, spec.quadrature_nodes)

    def objective(assign: Mapping[str, np.ndarray]) -> np.ndarray:
        a = resolve(assign, "a")
        a2 = resolve(assign, "a2")
        b = resolve(assign, "b")
        b2 = resolve(assign, "b2")
        ar = resolve(assign, "ar")
        a2r = resolve(assign, "a2r")
        br = resolve(assign, "br")
        b2r = resolve(assign, "b2r")
        m1, m2 = marginals(a2, b2)
        return (
            p12(a2, b2, a2r, b2r)
            + p12(a2, b, ar, b2r)
            + p12(a, b2, a2r, br)
            - p12(a, b, ar, br)
            - m1
            - m2
        )

    return objective


# ----------------------------------------------------------------------
# Search
# ----------------------------------------------------------------------


def _grid_axes(spec: ObjectiveSpec, model_is_quadrature: bool) -> tuple[float, np.ndarray]:
    step = spec.grid_step
    limit = MAX_GRID_POINTS_QUADRATURE if model_is_quadrature else MAX_GRID_POINTS
    k = len(spec.free)
    while (math.ceil(TAU / step)) ** k > limit:
        step *= 2.0
    return step, np.arange(0.0, TAU, step)


def optimize(spec: ObjectiveSpec) -> Optimum:
    """Coarse grid scan plus compass refinement (step halves to 1e-7).

    The returned settings are canonicalized by rotating ``a`` to zero
    when that rotation provably leaves the objective value unchanged.
    """
    model = get_model(spec.model)
    objective = build_objective(spec)
    sign = 1.0 if spec.direction == "minimize" else -1.0
    evaluations = 0

    def value_of(point: Mapping[str, float]) -> float:
        arrays = {k: np.asarray(v) for k, v in point.items()}
        return float(objective(arrays))

    # --- grid stage -----------------------------------------------------
    quadrature_backed = _uses_quadrature(model)
    step, axis = _grid_axes(spec, quadrature_backed)
    free = spec.free
    grids = np.meshgrid(*[axis] * len(free), indexing="ij")
    flat = {name: g.ravel() for name, g in zip(free, grids)}
    values = sign * np.asarray(objective(flat), dtype=float).ravel()
    evaluations += values.size
    best_flat = int(np.argmin(values))
    best_point = {name: float(flat[name][best_flat]) for name in free}
    best_value = float(values[best_flat])
    trace = [(0, sign * best_value)]

    # --- compass refinement ----------------------------------------------
    iteration = 0
    while step >= 1e-7:
        moved = False
        for name in free:
            trial_pts = {k: np.full(2, best_point[k]) for k in free}
            trial_pts[name] = np.asarray(
                [best_point[name] - step, best_point[name] + step]
            )
            vals = sign * np.asarray(objective(trial_pts), dtype=float).ravel()
            evaluations += 2
            j = int(np.argmin(vals))
            if vals[j] < best_value:
                best_value = float(vals[j])
                best_point[name] = float(trial_pts[name][j]) % TAU
                moved = True
        iteration += 1
        trace.append((iteration, sign * best_value))
        if not moved:
            step /= 2.0

    # --- canonicalize the rotation degeneracy ------------------------------
    settings = {name: float(v) % TAU for name, v in best_point.items()}
    true_best = sign * best_value
    if "a" in settings and settings["a"] != 0.0:
        shift = settings["a"]
        rotated = {name: (v - shift) % TAU for name, v in settings.items()}
        if abs(value_of(rotated) - true_best) <= 1e-12:
            settings = rotated
        evaluations += 1

    final_value = value_of(settings)
    trace.append((iteration + 1, final_value))
    return Optimum(
        settings=settings,
        value=final_value,
        evaluations=evaluations,
        trace=tuple(trace),
    )
