"""Repulsive radial interaction potentials with compact support.

Admissible potentials are nonnegative, radial, compactly supported and
square integrable.  Hard spheres are deliberately not representable; a
ladder of increasingly tall square wells (see the CLI) is the supported
way to approximate a hard core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = ["RadialPotential", "square_well", "truncated_gaussian", "tabulated", "load_tabulated"]


@dataclass(frozen=True)
class RadialPotential:
    """A nonnegative radial potential V(r), identically zero past ``support_radius``.

    ``kind`` is one of ``"square_well"``, ``"truncated_gaussian"``,
    ``"tabulated"`` or ``"zero"``; ``params`` holds the kind-specific
    parameters.  Instances are immutable and safe to share across threads.
    """

    kind: str
    params: dict = field(default_factory=dict)
    support_radius: float = 0.0

    def __post_init__(self):
        if self.support_radius < 0:
            raise ValueError("support_radius must be nonnegative")
        if self.kind == "square_well":
            if self.params["height"] < 0:
                raise ValueError("square well height must be >= 0")
        elif self.kind == "truncated_gaussian":
            if self.params["height"] < 0 or self.params["width"] <= 0:
                raise ValueError("gaussian needs height >= 0 and width > 0")
        elif self.kind == "tabulated":
            r = np.asarray(self.params["r"], dtype=float)
            v = np.asarray(self.params["v"], dtype=float)
            if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
                raise ValueError("tabulated potential needs matching 1-d r/v arrays")
            if not np.all(np.diff(r) > 0) or r[0] < 0:
                raise ValueError("tabulated radii must be increasing and nonnegative")
            if np.any(v < 0):
                raise ValueError("potential values must be nonnegative")
        elif self.kind != "zero":
            raise ValueError(f"unknown potential kind {self.kind!r}")

    def __call__(self, r):
        return self.eval(r)

    def eval(self, r):
        """Evaluate V(r) for scalar or array ``r >= 0``."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("radius must be nonnegative")
        if self.kind == "zero":
            out = np.zeros_like(r)
        elif self.kind == "square_well":
            out = np.where(r <= self.support_radius, self.params["height"], 0.0)
        elif self.kind == "truncated_gaussian":
            v0, w = self.params["height"], self.params["width"]
            out = np.where(r <= self.support_radius, v0 * np.exp(-((r / w) ** 2)), 0.0)
        else:
            rt = np.asarray(self.params["r"], dtype=float)
            vt = np.asarray(self.params["v"], dtype=float)
            out = np.interp(r, rt, vt, left=vt[0], right=0.0)
            out = np.where(r > self.support_radius, 0.0, out)
        return out if out.ndim else float(out)

    def v_hat_zero(self) -> float:
        """Return the zero-momentum transform 4*pi*int V(r) r^2 dr."""
        if self.kind == "zero":
            return 0.0
        if self.kind == "square_well":
            return 4.0 * math.pi * self.params["height"] * self.support_radius**3 / 3.0
        if self.kind == "truncated_gaussian":
            v0, w, rc = self.params["height"], self.params["width"], self.support_radius
            x = rc / w
            # int_0^rc exp(-(r/w)^2) r^2 dr = w^3 (sqrt(pi) erf(x)/4 - x exp(-x^2)/2)
            integral = w**3 * (math.sqrt(math.pi) * math.erf(x) / 4.0 - x * math.exp(-x * x) / 2.0)
            return 4.0 * math.pi * v0 * integral
        # piecewise linear: per-segment exact integral of (a + b r) r^2
        rt = np.asarray(self.params["r"], dtype=float)
        vt = np.asarray(self.params["v"], dtype=float)
        r0, r1 = rt[:-1], rt[1:]
        v0, v1 = vt[:-1], vt[1:]
        b = (v1 - v0) / (r1 - r0)
        a = v0 - b * r0
        seg = a * (r1**3 - r0**3) / 3.0 + b * (r1**4 - r0**4) / 4.0
        total = float(np.sum(seg))
        if rt[0] > 0:  # extend flat to r=0, matching eval()
            total += vt[0] * rt[0] ** 3 / 3.0
        return 4.0 * math.pi * total


def square_well(height: float, radius: float) -> RadialPotential:
    """Square well of the given height on [0, radius]."""
    return RadialPotential("square_well", {"height": height, "radius": radius}, support_radius=radius)


def truncated_gaussian(height: float, width: float, cutoff: float) -> RadialPotential:
    """Gaussian bump height*exp(-(r/width)^2) truncated at ``cutoff``."""
    return RadialPotential(
        "truncated_gaussian", {"height": height, "width": width, "cutoff": cutoff}, support_radius=cutoff
    )


def tabulated(r, v) -> RadialPotential:
    """Piecewise-linear potential through the nodes (r_i, v_i), zero beyond the last node."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    return RadialPotential("tabulated", {"r": r, "v": v}, support_radius=float(r[-1]))


def zero_potential() -> RadialPotential:
    return RadialPotential("zero", {}, support_radius=0.0)


def load_tabulated(path) -> RadialPotential:
    """Load a two-column (r, V) text file; '#' starts a comment."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ValueError("expected two columns (r, V)")
    return tabulated(data[:, 0], data[:, 1])
