"""Two-parameter Mittag-Leffler function for real arguments of moderate size."""
import math

from scipy.special import gammaln, gammasgn

Z_MAX = 10.0
_MAX_TERMS = 100_000


def mittag_leffler(alpha: float, beta: float, z: float, z_max: float = Z_MAX) -> float:
    """E_{alpha,beta}(z) = sum_k z^k / Gamma(alpha k + beta) by direct summation.

    Intended for bound evaluation at desk scale.  Arguments with ``|z| > z_max``
    are rejected; for large negative ``z`` the alternating series loses all
    accuracy and a different algorithm would be needed.
    """
    if not alpha > 0.0:
        raise ValueError("alpha must be positive")
    if abs(z) > z_max:
        raise ValueError(f"|z|={abs(z)} exceeds the series domain bound {z_max}")
    if z == 0.0:
        return _inv_gamma(beta)
    logz = math.log(abs(z))
    neg = z < 0.0
    terms = []
    total = 0.0
    for k in range(_MAX_TERMS):
        arg = alpha * k + beta
        sg = gammasgn(arg)
        if sg == 0.0 or (arg <= 0.0 and arg == math.floor(arg)):
            continue  # 1/Gamma vanishes at the poles
        t = sg * math.exp(k * logz - gammaln(arg))
        if neg and k % 2:
            t = -t
        terms.append(t)
        total += t
        shrinking = arg > 0.0 and logz < gammaln(arg + alpha) - gammaln(arg)
        if shrinking and abs(t) <= 2.0 ** -53 * abs(total):
            break
    else:
        raise ArithmeticError("Mittag-Leffler series did not converge")
    return math.fsum(terms)


def _inv_gamma(x: float) -> float:
    if x <= 0.0 and x == math.floor(x):
        return 0.0
    return gammasgn(x) * math.exp(-gammaln(x))
