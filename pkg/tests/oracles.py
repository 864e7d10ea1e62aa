"""Frozen reference values.

Closed-form values are evaluated here with :mod:`decimal` at 30 digits,
independently of the library code.  Measured values (``MEASURED``) were recorded once at the
stated configuration and are frozen as regression anchors; the tests compare
them with a relative tolerance that absorbs BLAS / FFT reordering only.
"""

from decimal import Decimal as D, getcontext

getcontext().prec = 30

# <3> = sqrt(1 + 9); alpha = 1/2 gives r_k = <k>^{alpha/(1-alpha)} = <k>
R3_HALF = float(D(10).sqrt())
XI3_HALF = float(3 * D(10).sqrt())
# k = 2, alpha = 1/2: centre 2 sqrt(5), radius c1 sqrt(5)
XI2_HALF = float(2 * D(5).sqrt())
R2_HALF = float(D(5).sqrt())
# Q(k=3, l=1) with a = pi, alpha = 1/2: centre -(pi/a) l / r_k = -1/sqrt(10), radius 1/sqrt(10)
QBALL_3_1_CENTRE = float(-1 / D(10).sqrt())
QBALL_3_1_RADIUS = float(1 / D(10).sqrt())


def bump_profile(t):
    """Reference transition profile rho(t), evaluated in 30-digit arithmetic."""
    u = (D(3) / 2 - D(str(t))) / (D(1) / 2)

    def e(v):
        return (-1 / v).exp() if v > 0 else D(0)

    return float(e(u) / (e(u) + e(1 - u)))


RHO_1_25 = bump_profile(1.25)  # the symmetric midpoint: exactly 1/2


def ball_indicator_norm_1d(p1):
    """||1_{B(0,1)}||_{L_p} in one dimension = 2^{1/p}."""
    return float(D(2) ** (1 / D(str(p1))))


def bspline_ft_modulus(order, w):
    """|((1 - e^{-iw}) / (iw))^p| = |sin(w/2) / (w/2)|^p (Taylor series of sin in 30 digits)."""
    x = D(str(w)) / 2
    term, total, j = x, D(0), 1
    while abs(term) > D("1e-40"):
        total += term
        term *= -x * x / ((2 * j) * (2 * j + 1))
        j += 1
    return float(abs(total / x) ** order)


MEASURED = {
    # alpha = 0, n = 1, c1 = 1 cover: every point lies in at most three unit balls
    "n0_alpha0_c1": 3,
    # Gram(Phi, Phi), alpha = 0, n = 1, T = 32, kmax = 16, N = 1024, (s, p, q, delta) = (0, 2, 2, 1)
    "gram_C_alpha0": 11.909836948946587,
    # direct-space Gram envelope (scale exponent n/2, space exponent 4, no frequency factor), same frame
    "gram_C_direct_alpha0": 973.4182834286293,
    # <xi>^1 multiplier matrix, same frame, columns rescaled by <xi_k>^{-1}
    "bracket1_C_alpha0": 18.379087740622438,
    # closure constant, n = 1, alpha = 1/2, s = 0, p = q = 1.5, delta = 1, kmax = 4
    "closure_C_half": 1.4163972791465638,
    # summability sum at n = 1, alpha = 1/2, delta = 1, kmax = 16
    "summability_Ca_half_16": 1.5821218792637632,
}
