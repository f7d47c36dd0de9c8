"""Closed-form and quadrature references shared by the tests."""
import math

import numpy as np
from scipy.integrate import quad
from scipy.special import roots_hermitenorm


def heat_gaussian(x, t):
    """``T(t) exp(-x^2)`` for ``u_t = u_xx``."""
    return np.exp(-(x**2) / (1 + 4 * t)) / np.sqrt(1 + 4 * t)


def ou_mehler(f, x, t, nodes=80):
    """``T(t) f(x) = E f(e^{-t} x + sqrt(1 - e^{-2t}) Z)`` for ``u_t = u_xx - x u_x``."""
    z, w = roots_hermitenorm(nodes)
    s = math.sqrt(1 - math.exp(-2 * t))
    pts = math.exp(-t) * np.asarray(x)[:, None] + s * z[None, :]
    return f(pts) @ w / math.sqrt(2 * math.pi)


def gaussian_increment_1d(h):
    """``int |f(x + h) - f(x)|^2 dx`` for ``f = exp(-x^2)``."""
    return 2 * math.sqrt(math.pi / 2) * (1 - np.exp(-np.asarray(h) ** 2 / 2))


def gaussian_increment_2d(r):
    """``int |f(x + h) - f(x)|^2 dx`` for ``f = exp(-|x|^2)`` and ``|h| = r``."""
    return 2 * (math.pi / 2) * (1 - np.exp(-np.asarray(r) ** 2 / 2))


def besov_reference(s, d, h_min, window):
    """``(int_{h_min <= |h| <= window} int |f(x + h) - f(x)|^2 dx / |h|^{d + 2s} dh)^{1/2}`` by adaptive quadrature."""
    if d == 1:
        val = 2 * quad(lambda h: gaussian_increment_1d(h) / h ** (1 + 2 * s), h_min, window)[0]
    else:
        val = quad(lambda r: 2 * math.pi * r * gaussian_increment_2d(r) / r ** (2 + 2 * s), h_min, window)[0]
    return math.sqrt(val)
