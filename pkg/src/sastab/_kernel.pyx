# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled scalar iteration loop.

Mirrors engine._run_python bit for bit for descriptor-complete scalar
problems: same libm functions, same operation order, same Philox draws
through numpy's C API. Any change here must be mirrored in the pure loop
(and in registry callables) or the cross-path equality test will fail.
"""

from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp, fabs, isfinite, sqrt, tanh

from numpy.random cimport bitgen_t
from numpy.random.c_distributions cimport (
    random_standard_normal,
    random_standard_uniform,
)

from . import _codes

# the C switches below hard-code these values; bail loudly if they drift
assert _codes.DRIFT_EXP_PULL == 1
assert _codes.DRIFT_NEG_TANH == 2
assert _codes.DRIFT_AFFINE == 3
assert _codes.DRIFT_NEG_LINEAR == 4
assert _codes.NOISE_MULTIPLICATIVE == 1
assert _codes.NOISE_ADD_UNIFORM == 2
assert _codes.NOISE_ADD_GAUSSIAN == 3
assert _codes.FVAR_SCALE_SQUARED == 1
assert _codes.FVAR_CONST == 2
assert _codes.MODE_VANILLA == 0
assert _codes.MODE_ADAPTIVE == 1
assert _codes.MODE_PROJECTION == 2


cdef inline double _drift(int code, double p, double y) noexcept nogil:
    if code == 1:
        return -(y * exp(fabs(y)))
    elif code == 2:
        return -tanh(y)
    elif code == 3:
        return p - y
    else:
        return -(p * y)


cdef inline double _wval(double center, double y) noexcept nogil:
    cdef double t = y - center
    return t * t


cdef inline double _fvar(int kind, double p, int scale_code, double scale_p,
                         double y) noexcept nogil:
    cdef double s
    if kind == 1:
        s = _drift(scale_code, scale_p, y)
        return s * s
    return p


cdef inline double _gval(double w, double hh, double fv,
                         double margin) noexcept nogil:
    cdef double v = margin * sqrt((hh + fv) / w)
    return v if v > 1.0 else 1.0


def run_scalar(double y0, Py_ssize_t horizon, double[::1] a,
               int drift_code, double drift_p, double w_center,
               int noise_kind, int scale_code, double scale_p,
               double noise_p0, double noise_p1,
               int fvar_kind, double fvar_p,
               int mode, double threshold_n, double margin, double radius,
               object bit_generator,
               double[::1] out_g, double[::1] out_aeff,
               double[::1] out_w, double[::1] out_y, double[::1] out_noise):
    """Run up to `horizon` steps; returns (steps, overflowed, terminal_y)."""
    cdef bitgen_t *rng
    capsule = bit_generator.capsule
    if not PyCapsule_IsValid(capsule, "BitGenerator"):
        raise ValueError("expected a BitGenerator capsule")
    rng = <bitgen_t *> PyCapsule_GetPointer(capsule, "BitGenerator")

    cdef double y = y0
    cdef double w, w_next, h, m, xi, s, g, a_eff, y_next, hh, fv, nrm
    cdef Py_ssize_t n, steps = horizon
    cdef bint overflowed = False

    with bit_generator.lock, nogil:
        w = _wval(w_center, y)
        for n in range(horizon):
            h = _drift(drift_code, drift_p, y)
            # noise first, then g: fixed draw order (g depends only on y)
            if noise_kind == 1:
                s = _drift(scale_code, scale_p, y)
                xi = random_standard_normal(rng)
                m = s * xi
            elif noise_kind == 2:
                xi = random_standard_uniform(rng)
                m = noise_p0 + (noise_p1 - noise_p0) * xi
            else:
                xi = random_standard_normal(rng)
                m = noise_p0 + noise_p1 * xi
            if mode == 1 and w > threshold_n:
                hh = h * h
                fv = _fvar(fvar_kind, fvar_p, scale_code, scale_p, y)
                g = _gval(w, hh, fv, margin)
            else:
                g = 1.0
            a_eff = a[n] / g
            y_next = y + a_eff * (h + m)
            if mode == 2:
                # sqrt(y*y), not fabs(y): matches the pure path's norm
                nrm = sqrt(y_next * y_next)
                if nrm > radius:
                    y_next = (y_next / nrm) * radius
            out_g[n] = g
            out_aeff[n] = a_eff
            out_w[n] = w
            out_y[n] = y
            out_noise[n] = m
            w_next = _wval(w_center, y_next)
            if (not isfinite(y_next)) or (not isfinite(w_next)):
                overflowed = True
                steps = n + 1
                y = y_next
                break
            y = y_next
            w = w_next
    return steps, overflowed, y
