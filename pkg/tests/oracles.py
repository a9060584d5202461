"""Independent reference computations used by the tests.

Nothing here imports the package: each oracle rebuilds its quantity from
the textbook formula with plain loops, Gaussian elimination or closed forms.
"""

import math

import numpy as np

JITTER = 1e-8


def se_kernel(a, b, ell, var):
    return var * math.exp(-((a - b) ** 2) / (2.0 * ell * ell))


def dense_cov(xs, ell, var, noise, jitter=JITTER):
    n = len(xs)
    out = [[se_kernel(xs[i], xs[j], ell, var) for j in range(n)] for i in range(n)]
    for i in range(n):
        out[i][i] += noise + jitter * var
    return out


def gauss_solve(a, b):
    """Solve ``a x = b`` by Gaussian elimination with partial pivoting.

    ``b`` may be a vector or a list of column vectors (2-D list).
    """
    n = len(a)
    m = [list(map(float, row)) for row in a]
    rhs = np.array(b, dtype=float)
    vec = rhs.ndim == 1
    r = [list(row) for row in (rhs[:, None] if vec else rhs)]
    for col in range(n):
        piv = max(range(col, n), key=lambda i: abs(m[i][col]))
        m[col], m[piv] = m[piv], m[col]
        r[col], r[piv] = r[piv], r[col]
        for i in range(col + 1, n):
            f = m[i][col] / m[col][col]
            if f == 0.0:
                continue
            for j in range(col, n):
                m[i][j] -= f * m[col][j]
            for j in range(len(r[i])):
                r[i][j] -= f * r[col][j]
    x = [[0.0] * len(r[0]) for _ in range(n)]
    for i in range(n - 1, -1, -1):
        for j in range(len(r[0])):
            s = r[i][j] - sum(m[i][k] * x[k][j] for k in range(i + 1, n))
            x[i][j] = s / m[i][i]
    x = np.array(x)
    return x[:, 0] if vec else x


def gauss_logdet(a):
    """log|det a| by elimination (a is SPD in every use here)."""
    n = len(a)
    m = [list(map(float, row)) for row in a]
    logdet = 0.0
    for col in range(n):
        piv = max(range(col, n), key=lambda i: abs(m[i][col]))
        m[col], m[piv] = m[piv], m[col]
        logdet += math.log(abs(m[col][col]))
        for i in range(col + 1, n):
            f = m[i][col] / m[col][col]
            for j in range(col, n):
                m[i][j] -= f * m[col][j]
    return logdet


def conditional(xs, ys, prior_mean, ell, var, noise, x_star):
    """Posterior mean/variance at ``x_star``; ``prior_mean`` is a callable."""
    a = dense_cov(xs, ell, var, noise)
    kstar = [se_kernel(x, x_star, ell, var) for x in xs]
    resid = [y - prior_mean(x) for x, y in zip(xs, ys)]
    alpha = gauss_solve(a, resid)
    v = gauss_solve(a, kstar)
    mean = prior_mean(x_star) + sum(k * al for k, al in zip(kstar, alpha))
    variance = var - sum(k * vi for k, vi in zip(kstar, v))
    return mean, variance


def loglik(xs, ys, prior_mean, ell, var, noise):
    a = dense_cov(xs, ell, var, noise)
    resid = [y - prior_mean(x) for x, y in zip(xs, ys)]
    alpha = gauss_solve(a, resid)
    quad = sum(r * al for r, al in zip(resid, alpha))
    return -0.5 * quad - 0.5 * gauss_logdet(a) - 0.5 * len(xs) * math.log(2 * math.pi)


def bivariate_normal_logpdf(r1, r2, s11, s12, s22):
    """``log N((r1, r2) | 0, [[s11, s12], [s12, s22]])`` with the explicit 2x2 inverse."""
    det = s11 * s22 - s12 * s12
    quad = (s22 * r1 * r1 - 2 * s12 * r1 * r2 + s11 * r2 * r2) / det
    return -math.log(2 * math.pi) - 0.5 * math.log(det) - 0.5 * quad


def half_cauchy_pdf(q, scale):
    return 2.0 / (math.pi * scale * (1.0 + (q / scale) ** 2))


def half_cauchy_quantile(p, scale):
    return scale * math.tan(math.pi * p / 2.0)


def normal_logpdf(v, sd):
    return -0.5 * (v / sd) ** 2 - math.log(sd) - 0.5 * math.log(2 * math.pi)


def wls_normal_equations(x, y, b, h, kernel, order=1):
    """Boundary prediction and coefficients from ``(X'WX) beta = X'Wy`` with an
    explicitly built diagonal W, solved by Gaussian elimination."""
    u = [xi - b for xi in x]
    if kernel == "triangular":
        w = [max(0.0, 1.0 - abs(ui / h)) for ui in u]
    else:
        w = [1.0 if abs(ui / h) <= 1.0 else 0.0 for ui in u]
    X = np.array([[ui ** k for k in range(order + 1)] for ui in u])
    W = np.diag(w)
    lhs = (X.T @ W @ X).tolist()
    rhs = (X.T @ W @ np.array(y)).tolist()
    beta = gauss_solve(lhs, rhs)
    return beta[0], beta


def boundary_kernel_constant(k):
    """AMSE constant of a one-sided local linear fit with kernel ``k`` on [0, 1].

    Built from the equivalent kernel by numerical quadrature.
    """
    from scipy.integrate import quad

    m0, m1, m2 = (quad(lambda u, j=j: u**j * k(u), 0, 1)[0] for j in range(3))

    def equivalent(u):
        return (m2 - m1 * u) * k(u) / (m0 * m2 - m1**2)

    var = quad(lambda u: equivalent(u) ** 2, 0, 1)[0]
    bias = quad(lambda u: u * u * equivalent(u), 0, 1)[0]
    return (var / bias**2) ** 0.2
