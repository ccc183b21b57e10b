"""Spatial-derivative features for the functional-form learner.

1D fields use finite differences (second order, centered in the interior,
one-sided at domain boundaries, arbitrary node spacing via Fornberg
weights).  2D bi-periodic fields use FFT differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

#: descriptor -> (x order, y order); y orders only meaningful in 2D
DERIVATIVE_ORDERS = {
    "u": (0, 0),
    "u_x": (1, 0),
    "u_xx": (2, 0),
    "u_y": (0, 1),
    "u_yy": (0, 2),
    "u_xy": (1, 1),
}

DEFAULT_1D = ("u", "u_x", "u_xx")
DEFAULT_2D = ("u", "u_x", "u_y", "u_xx", "u_yy", "u_xy")


@dataclass(frozen=True)
class FeatureSpec:
    """Which derivatives to extract and how."""

    descriptors: tuple = DEFAULT_1D
    method: str = "fd"          # "fd" | "spectral"
    stencil: int = 3
    dx: float | None = None

    def __post_init__(self):
        if len(set(self.descriptors)) != len(self.descriptors):
            raise InputError("duplicate feature descriptors")
        for d in self.descriptors:
            if d not in DERIVATIVE_ORDERS:
                raise InputError(f"unknown descriptor {d!r}")
        if self.method not in ("fd", "spectral"):
            raise InputError(f"unknown method {self.method!r}")
        if self.stencil < 3 or self.stencil % 2 == 0:
            raise InputError("stencil size must be odd and >= 3")

    def to_dict(self):
        return {"descriptors": list(self.descriptors), "method": self.method,
                "stencil": self.stencil, "dx": self.dx}

    @classmethod
    def from_dict(cls, d):
        return cls(descriptors=tuple(d["descriptors"]), method=d["method"],
                   stencil=d["stencil"], dx=d["dx"])


def fornberg_weights(x_nodes, x0, order):
    """Finite-difference weights for d^order/dx^order at x0 on given nodes."""
    x_nodes = np.asarray(x_nodes, dtype=float)
    n = x_nodes.size
    if order >= n:
        raise InputError("need more nodes than the derivative order")
    w = np.zeros((order + 1, n))
    w[0, 0] = 1.0
    c1 = 1.0
    c4 = x_nodes[0] - x0
    for i in range(1, n):
        mn = min(i, order)
        c2 = 1.0
        c5 = c4
        c4 = x_nodes[i] - x0
        for j in range(i):
            c3 = x_nodes[i] - x_nodes[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    w[k, i] = c1 * (k * w[k - 1, i - 1]
                                    - c5 * w[k, i - 1]) / c2
                w[0, i] = -c1 * c5 * w[0, i - 1] / c2
            for k in range(mn, 0, -1):
                w[k, j] = ((c4 * w[k, j] - k * w[k - 1, j]) / c3)
            w[0, j] = c4 * w[0, j] / c3
        c1 = c2
    return w[order]


def fd_derivatives_1d(values, positions, spec: FeatureSpec,
                      eval_index=None):
    """Feature matrix (points x descriptors) by finite differences.

    values/positions: the field samples (possibly including boundary ghost
    nodes).  eval_index selects which rows to evaluate (default: all).
    Interior points use a centered window of ``spec.stencil`` nodes; near
    the ends the window shifts one-sided, widened by one node for second
    derivatives to keep second-order accuracy.
    """
    values = np.asarray(values, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if values.shape != positions.shape or values.ndim != 1:
        raise InputError("values and positions must be matching 1D arrays")
    n = values.size
    if n < spec.stencil:
        raise InputError("fewer points than the stencil size")
    if eval_index is None:
        eval_index = np.arange(n)
    cols = []
    half = spec.stencil // 2
    for name in spec.descriptors:
        order = DERIVATIVE_ORDERS[name][0]
        if DERIVATIVE_ORDERS[name][1] != 0:
            raise InputError(f"{name!r} is not a 1D descriptor")
        col = np.empty(len(eval_index))
        for out_i, i in enumerate(eval_index):
            width = spec.stencil
            lo = i - half
            if (lo < 0 or lo + width > n) and order >= 2:
                width += 1  # one-sided second derivative needs an extra node
            lo = min(max(lo, 0), n - width)
            w = fornberg_weights(positions[lo:lo + width], positions[i], order)
            col[out_i] = w @ values[lo:lo + width]
        cols.append(col)
    return np.column_stack(cols)


def spectral_derivatives_2d(field, spec: FeatureSpec):
    """Feature tensor (nx, ny, descriptors) by FFT on the [0, 2*pi)^2 grid."""
    field = np.asarray(field, dtype=float)
    if field.ndim != 2:
        raise InputError("expected a 2D field")
    nx, ny = field.shape
    kx = np.fft.fftfreq(nx, d=1.0 / nx)[:, None]
    ky = np.fft.fftfreq(ny, d=1.0 / ny)[None, :]
    coeffs = np.fft.fft2(field)
    out = np.empty(field.shape + (len(spec.descriptors),))
    for c, name in enumerate(spec.descriptors):
        px, py = DERIVATIVE_ORDERS[name]
        mult = (1j * kx) ** px * (1j * ky) ** py
        if px % 2 == 1 and nx % 2 == 0:
            mult = mult * (np.abs(kx) != nx // 2)
        if py % 2 == 1 and ny % 2 == 0:
            mult = mult * (np.abs(ky) != ny // 2)
        deriv = np.fft.ifft2(coeffs * mult)
        if np.max(np.abs(deriv.imag)) > 1e-10 * max(1.0, np.max(np.abs(field))):
            raise InputError("field produced a non-real derivative")
        out[:, :, c] = deriv.real
    return out
