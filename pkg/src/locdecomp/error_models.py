"""Catalog of localization-error components and their composition.

The disparity between two independent localizers is modeled as a sum of
parameterized error components.  Each component maps its parameter slice
and the agent's measured kinematic state to a 2-vector contribution in the
navigation frame.  Components declare which kinematic fields they read;
state-independent components (e.g. a uniform map translation) declare
none.  A :class:`CompositeModel` stacks the parameters of all active
components into one state vector and enforces that each kinematic field
feeds at most one component, so the contributions remain separable.

Shipped components:

- ``map_translation``   uniform shift of the environment representation
- ``body_offset``       vehicle-fixed localizer offset, rotated by heading
- ``map_rotation``      map rotated about a pivot (via planar transform)
- ``map_scale``         map uniformly scaled about a pivot
- ``map_shear``         axis-aligned map shear about a pivot

Position-dependent components are derived from an invertible planar
transform ``e``: with localizer A as the reference, the contribution is
``p - e^-1(p)`` evaluated at the reference position ``p`` (flip
``reference`` to ``"other"`` to host the deformation on the other side,
which uses the forward map instead).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .exceptions import DimensionMismatch, SingularTransform
from .frames import Heading, as_vec2, rotation_matrix

KINEMATIC_FIELDS = ("heading", "ref_position")


@dataclass(frozen=True)
class KinematicInput:
    """Measured agent state for one time step.

    ``ref_position`` is the reference localizer's navigation-frame position
    estimate; position-dependent components evaluate at it.
    """

    t: float
    heading: Heading
    ref_position: np.ndarray

    def __post_init__(self):
        if not np.isfinite(self.t):
            raise ValueError(f"timestamp must be finite, got {self.t}")
        object.__setattr__(self, "ref_position", as_vec2(self.ref_position, "ref_position"))


@dataclass(frozen=True)
class ErrorComponent:
    """One parameterized error contribution.

    ``fn(params, u)`` must be deterministic, return a 2-vector, and read
    only the kinematic fields listed in ``depends_on``.  ``neutral`` is the
    parameter value at which the contribution vanishes for every input; it
    seeds filter initialization (zero for offsets, zero for the scale
    deviation since scale is parameterized as 1 + sigma).
    """

    name: str
    param_dim: int
    depends_on: frozenset
    neutral: np.ndarray
    fn: Callable[[np.ndarray, KinematicInput], np.ndarray]

    def __post_init__(self):
        if self.param_dim < 1:
            raise ValueError(f"param_dim must be >= 1, got {self.param_dim}")
        unknown = set(self.depends_on) - set(KINEMATIC_FIELDS)
        if unknown:
            raise ValueError(f"unknown kinematic fields {sorted(unknown)}; "
                             f"known: {KINEMATIC_FIELDS}")
        neutral = np.asarray(self.neutral, dtype=float)
        if neutral.shape != (self.param_dim,):
            raise ValueError(f"neutral must have shape ({self.param_dim},), got {neutral.shape}")
        object.__setattr__(self, "neutral", neutral)
        object.__setattr__(self, "depends_on", frozenset(self.depends_on))

    def evaluate(self, params, u: KinematicInput) -> np.ndarray:
        params = np.asarray(params, dtype=float)
        if params.shape != (self.param_dim,):
            raise DimensionMismatch(
                f"component '{self.name}' expects {self.param_dim} parameters, "
                f"got shape {params.shape}")
        return as_vec2(self.fn(params, u), f"output of '{self.name}'")


@dataclass(frozen=True)
class CompositeModel:
    """Ordered combination of error components over one stacked state vector.

    Construction rejects two components reading the same kinematic field:
    a field contributing to several components makes their split
    unrecoverable from the difference observations.
    """

    components: tuple
    offsets: tuple = field(init=False)
    state_dim: int = field(init=False)

    def __post_init__(self):
        components = tuple(self.components)
        if not components:
            raise ValueError("a composite model needs at least one component")
        seen: dict[str, str] = {}
        for comp in components:
            for f in comp.depends_on:
                if f in seen:
                    raise ValueError(
                        f"kinematic field '{f}' feeds both '{seen[f]}' and "
                        f"'{comp.name}'; each field may drive only one component")
                seen[f] = comp.name
        offsets = []
        total = 0
        for comp in components:
            offsets.append(total)
            total += comp.param_dim
        object.__setattr__(self, "components", components)
        object.__setattr__(self, "offsets", tuple(offsets))
        object.__setattr__(self, "state_dim", total)

    def slices(self) -> list[slice]:
        return [slice(off, off + comp.param_dim)
                for off, comp in zip(self.offsets, self.components)]

    def neutral_state(self) -> np.ndarray:
        return np.concatenate([comp.neutral for comp in self.components])

    def evaluate(self, x, u: KinematicInput) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.state_dim,):
            raise DimensionMismatch(
                f"state must have shape ({self.state_dim},), got {x.shape}")
        out = np.zeros(2)
        for off, comp in zip(self.offsets, self.components):
            out += comp.evaluate(x[off:off + comp.param_dim], u)
        return out


def evaluate_difference_model(model: CompositeModel, x, u: KinematicInput) -> np.ndarray:
    """Predicted localizer difference for state ``x`` at kinematic input ``u``."""
    return model.evaluate(x, u)


def measured_difference(p_ref, p_other) -> np.ndarray:
    """Difference vector between two position estimates in one aligned frame."""
    return as_vec2(p_ref, "p_ref") - as_vec2(p_other, "p_other")


# ---------------------------------------------------------------------------
# basic components
# ---------------------------------------------------------------------------

def map_translation() -> ErrorComponent:
    """Uniform map shift: the contribution equals the parameters, for any input."""
    def fn(params, u):
        return params.copy()

    return ErrorComponent(name="map_translation", param_dim=2,
                          depends_on=frozenset(), neutral=np.zeros(2), fn=fn)


def body_offset() -> ErrorComponent:
    """Vehicle-fixed localizer offset, rotated into the navigation frame by heading."""
    def fn(params, u):
        return rotation_matrix(u.heading.angle) @ params

    return ErrorComponent(name="body_offset", param_dim=2,
                          depends_on=frozenset({"heading"}), neutral=np.zeros(2), fn=fn)


# ---------------------------------------------------------------------------
# position-dependent components built from invertible planar transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PlanarTransform:
    """Invertible parametric map of the plane onto itself.

    ``forward(point, params)`` and ``inverse(point, params)`` must be exact
    inverses wherever defined; ``inverse`` raises
    :class:`~locdecomp.exceptions.SingularTransform` where the map cannot
    be inverted (e.g. zero scale).  At ``neutral`` parameters both maps are
    the identity.
    """

    name: str
    param_dim: int
    neutral: np.ndarray
    forward: Callable[[np.ndarray, np.ndarray], np.ndarray]
    inverse: Callable[[np.ndarray, np.ndarray], np.ndarray]


def transform_difference(transform: PlanarTransform, params, u: KinematicInput,
                         reference: str = "ref") -> np.ndarray:
    """Difference contribution of a map deformation at the reference position.

    With the reference localizer hosting the comparison, the other
    localizer's estimate is the inverse image of the reference position
    under the deformation, so the contribution is ``p - e^-1(p; params)``.
    ``reference="other"`` flips the roles and uses the forward map.
    """
    if reference not in ("ref", "other"):
        raise ValueError(f"reference must be 'ref' or 'other', got {reference!r}")
    params = np.asarray(params, dtype=float)
    p = u.ref_position
    image = transform.inverse(p, params) if reference == "ref" else transform.forward(p, params)
    return p - image


def rotation_about(pivot=(0.0, 0.0)) -> PlanarTransform:
    """Rotation of the plane about ``pivot``; one parameter (angle, radians)."""
    pivot = as_vec2(pivot, "pivot")

    def forward(point, params):
        return pivot + rotation_matrix(params[0]) @ (point - pivot)

    def inverse(point, params):
        return pivot + rotation_matrix(-params[0]) @ (point - pivot)

    return PlanarTransform(name="rotation", param_dim=1, neutral=np.zeros(1),
                           forward=forward, inverse=inverse)


def scale_about(pivot=(0.0, 0.0), min_scale: float = 1e-9) -> PlanarTransform:
    """Uniform scaling about ``pivot``; the parameter is the deviation from 1.

    The scale factor is ``1 + sigma`` so the neutral parameter is zero.
    """
    pivot = as_vec2(pivot, "pivot")

    def forward(point, params):
        return pivot + (1.0 + params[0]) * (point - pivot)

    def inverse(point, params):
        s = 1.0 + params[0]
        if abs(s) < min_scale:
            raise SingularTransform(f"scale factor {s} is not invertible")
        return pivot + (point - pivot) / s

    return PlanarTransform(name="scale", param_dim=1, neutral=np.zeros(1),
                           forward=forward, inverse=inverse)


def shear_along(pivot=(0.0, 0.0), axis: str = "x") -> PlanarTransform:
    """Axis-aligned shear about ``pivot``; one parameter (shear factor).

    ``axis="x"`` displaces the x coordinate proportionally to y;
    ``axis="y"`` the converse.
    """
    pivot = as_vec2(pivot, "pivot")
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    row, col = (0, 1) if axis == "x" else (1, 0)

    def matrix(k):
        m = np.eye(2)
        m[row, col] = k
        return m

    def forward(point, params):
        return pivot + matrix(params[0]) @ (point - pivot)

    def inverse(point, params):
        return pivot + matrix(-params[0]) @ (point - pivot)

    return PlanarTransform(name=f"shear_{axis}", param_dim=1, neutral=np.zeros(1),
                           forward=forward, inverse=inverse)


def deformation_component(transform: PlanarTransform,
                          reference: str = "ref") -> ErrorComponent:
    """Wrap a planar transform into a position-dependent error component."""
    def fn(params, u):
        return transform_difference(transform, params, u, reference=reference)

    name = transform.name if reference == "ref" else f"{transform.name}_other"
    return ErrorComponent(name=name, param_dim=transform.param_dim,
                          depends_on=frozenset({"ref_position"}),
                          neutral=transform.neutral.copy(), fn=fn)


def map_rotation(pivot=(0.0, 0.0), reference: str = "ref") -> ErrorComponent:
    """Map rotated about a pivot; estimate the rotation angle."""
    comp = deformation_component(rotation_about(pivot), reference)
    return ErrorComponent(name="map_rotation", param_dim=comp.param_dim,
                          depends_on=comp.depends_on, neutral=comp.neutral, fn=comp.fn)


def map_scale(pivot=(0.0, 0.0), reference: str = "ref") -> ErrorComponent:
    """Map scaled about a pivot; estimate the scale deviation from 1."""
    comp = deformation_component(scale_about(pivot), reference)
    return ErrorComponent(name="map_scale", param_dim=comp.param_dim,
                          depends_on=comp.depends_on, neutral=comp.neutral, fn=comp.fn)


def map_shear(pivot=(0.0, 0.0), axis: str = "x", reference: str = "ref") -> ErrorComponent:
    """Map sheared along an axis about a pivot; estimate the shear factor."""
    comp = deformation_component(shear_along(pivot, axis), reference)
    return ErrorComponent(name="map_shear", param_dim=comp.param_dim,
                          depends_on=comp.depends_on, neutral=comp.neutral, fn=comp.fn)
