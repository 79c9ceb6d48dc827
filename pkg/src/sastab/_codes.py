"""Descriptor codes shared by the registry and the compiled kernel.

A KernelSpec flattens a scalar builtin problem into integer codes plus a few
double parameters so the compiled loop can switch on them without touching
Python objects. The compiled module asserts at import that its C-side enums
agree with these values; change them in both places or not at all.
"""

from dataclasses import dataclass

# drift fields, parameter p
DRIFT_EXP_PULL = 1  # -x * exp(|x|)
DRIFT_NEG_TANH = 2  # -tanh(x)
DRIFT_AFFINE = 3    # p - x
DRIFT_NEG_LINEAR = 4  # -p * x

# noise kinds
NOISE_MULTIPLICATIVE = 1  # scale(x) * standard normal
NOISE_ADD_UNIFORM = 2     # uniform(p0, p1)
NOISE_ADD_GAUSSIAN = 3    # p0 + p1 * standard normal

# variance bound f
FVAR_SCALE_SQUARED = 1  # scale(x)^2
FVAR_CONST = 2          # p

# engine modes
MODE_VANILLA = 0
MODE_ADAPTIVE = 1
MODE_PROJECTION = 2


@dataclass(frozen=True)
class KernelSpec:
    """Flat descriptor of a scalar problem for the compiled loop."""

    drift_code: int
    drift_p: float = 0.0
    w_center: float = 0.0  # W(x) = (x - center)^2
    noise_kind: int = NOISE_ADD_GAUSSIAN
    scale_code: int = 0    # multiplicative noise: drift-table code of the scale
    scale_p: float = 0.0
    noise_p0: float = 0.0
    noise_p1: float = 1.0
    fvar_kind: int = FVAR_CONST
    fvar_p: float = 1.0
