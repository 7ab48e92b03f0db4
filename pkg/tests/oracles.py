"""Independent reference computations used by the tests.

Nothing here imports the package's numeric engines.  The main tool is the
attempt-duration identity: attempt j lasts min(G, T_j) with G ~ Exp(q),
whose mean is (1 - E[e^{-qT_j}])/q, so

    E[Y] = sum_{j>=1} P(attempt j happens) (1 - p_j)/q = (1/q) sum_{k>=1} w_k,

where w_k is the probability that the first k attempts all fail.  The
transform oracle sums the attempt series in 40-digit arithmetic.
"""
import math

import mpmath as mp
import numpy as np
from scipy import integrate, stats

mp.mp.dps = 40


def affine_headway(t1, j, alpha, delta):
    t = t1
    for _ in range(j - 1):
        t = alpha * (t - delta) + delta
    return t


def _atom_rejection(atoms, j, q, alpha, delta):
    """1 - E[e^{-q T_j}] for a fresh draw from atoms, with T_j = h_j(T)."""
    return 1 - mp.fsum(mp.mpf(p) * mp.exp(-q * affine_headway(mp.mpf(t), j, alpha, delta)) for t, p in atoms)


def mean_by_identity(atoms, q, alpha=1.0, delta=0.0, resample=True, tol=1e-30):
    """E[Y] for a discrete headway law; ``resample`` picks b2 (True) or b3 (False)."""
    q = mp.mpf(q)
    alpha, delta = mp.mpf(alpha), mp.mpf(delta)
    if q == 0:
        return mp.fsum(mp.mpf(p) * mp.mpf(t) for t, p in atoms)
    if resample:
        groups = [(atoms, mp.mpf(1))]
    else:
        groups = [(((t, 1.0),), mp.mpf(p)) for t, p in atoms]
    total = mp.mpf(0)
    for group, weight in groups:
        w, s, j = mp.mpf(1), mp.mpf(0), 1
        while True:
            w *= _atom_rejection(group, j, q, alpha, delta)
            s += w
            if w < tol:
                break
            j += 1
            if j > 200_000:
                raise RuntimeError("identity series too slow")
        total += weight * s / q
    return total


def lst_by_series(atoms, q, s, alpha=1.0, delta=0.0, resample=True, tol=1e-30):
    """Attempt series for the service transform in high precision."""
    return complex(_lst_mp(atoms, q, s, alpha, delta, resample, tol))


def _lst_mp(atoms, q, s, alpha, delta, resample, tol):
    q, s = mp.mpf(q), mp.mpc(s)
    alpha, delta = mp.mpf(alpha), mp.mpf(delta)
    u = s + q
    if resample:
        groups = [(atoms, mp.mpf(1))]
    else:
        groups = [(((t, 1.0),), mp.mpf(p)) for t, p in atoms]
    total = mp.mpc(0)
    for group, weight in groups:
        m = lambda j: mp.fsum(mp.mpf(p) * mp.exp(-u * affine_headway(mp.mpf(t), j, alpha, delta)) for t, p in group)
        if q == 0:
            total += weight * m(1)
            continue
        r = q / u
        acc, prod, k = mp.mpc(0), mp.mpc(1), 0
        while True:
            mk = m(k + 1)
            acc += prod * mk
            prod *= r * (1 - mk)
            k += 1
            if abs(prod) < tol:
                break
            if k > 200_000:
                raise RuntimeError("transform series too slow")
        total += weight * acc
    return total


def second_moment_by_series(atoms, q, alpha=1.0, delta=0.0, resample=True):
    """E[Y^2] as the second derivative of the high-precision transform."""
    with mp.workdps(60):
        f = lambda s: mp.re(_lst_mp(atoms, q, s, alpha, delta, resample, mp.mpf("1e-50")))
        return float(mp.diff(f, 0, 2, h=mp.mpf("1e-15")))


def b1_mean(t, q):
    return math.expm1(q * t) / q if q > 0 else t


def b1_second_moment(t, q):
    """2 e^{qt}(e^{qt} - 1 - qt)/q^2, from differentiating the closed B1 transform twice."""
    if q == 0:
        return t * t
    x = mp.mpf(q) * t
    return float(2 * mp.exp(x) * (mp.expm1(x) - x) / mp.mpf(q) ** 2)


def b1_node_mean_impatient(t1, q, alpha, delta, tol=1e-18):
    """Plain float version of the identity for one first headway; used under scipy quad."""
    w, s, j = 1.0, 0.0, 1
    a = 1.0
    while True:
        tj = a * (t1 - delta) + delta
        w *= -math.expm1(-q * tj)
        s += w
        if w < tol:
            return s / q
        j += 1
        a *= alpha


def b3_continuous_mean(scipy_dist, q, alpha, delta):
    """b3 mean with a continuous first headway by adaptive quadrature over T_1."""
    f = lambda t: b1_node_mean_impatient(t, q, alpha, delta) * scipy_dist.pdf(t)
    hi = scipy_dist.isf(1e-17)
    val, _ = integrate.quad(f, 0.0, hi, limit=500, epsabs=0, epsrel=1e-12, points=[delta] if delta > 0 else None)
    return val


def b2_continuous_mean(lst, q, alpha, delta, tol=1e-20):
    """b2 mean with T_j = a_j T + b_j, T from a law with transform ``lst``."""
    w, s, j, a = 1.0, 0.0, 1, 1.0
    while True:
        b = delta * (1.0 - a)
        w *= 1.0 - math.exp(-q * b) * lst(q * a)
        s += w
        if w < tol:
            return s / q
        j += 1
        a *= alpha


def gamma_scipy(shape, rate):
    return stats.gamma(shape, scale=1.0 / rate)


def md1_mean_wait(lam, t):
    rho = lam * t
    return lam * t * t / (2.0 * (1.0 - rho))


def md1_pmf(lam, t, n_max):
    """Departure-epoch queue length of M/D/1 by the embedded chain's balance equations."""
    a = lam * t
    k = np.arange(n_max + 2)
    arr = np.array([float(mp.exp(-a) * mp.mpf(a) ** int(i) / mp.factorial(int(i))) for i in k])
    rho = a
    pi = np.zeros(n_max + 1)
    pi[0] = 1.0 - rho
    # pi_{n+1} a_0 = pi_n - pi_0 a_n - sum_{j=1}^{n} pi_j a_{n-j+1}
    for n in range(n_max):
        acc = pi[n] - pi[0] * arr[n] - sum(pi[j] * arr[n - j + 1] for j in range(1, n + 1))
        pi[n + 1] = acc / arr[0]
    return pi
