"""Reference values for p-value ratios, cone quantiles and FAB statistics.

Run with `python3 theory_oracle.py`; printed values are frozen into the
C++ tests. Independent of the C++ code paths: regularized incomplete beta and
direct quadrature in mpmath.
"""
import mpmath as mp

mp.mp.dps = 40


def upper_beta(a, b, c):
    return 1 - mp.betainc(a, b, 0, c, regularized=True)


def ratio_exact(n, p, c):
    num = upper_beta(mp.mpf(p) / 2, mp.mpf(n - p) / 2, c)
    den = upper_beta(mp.mpf(1) / 2, mp.mpf(n - 1) / 2, c) / 2
    return num / den


def lower_bound(n, p, c):
    return mp.mpf(4) / (n - p) * (c / (1 - c)) ** (mp.mpf(p - 1) / 2)


def cone_quantile(n, alpha):
    f = lambda c: upper_beta(mp.mpf(1) / 2, mp.mpf(n - 1) / 2, c * c) / 2 - alpha
    lo, hi = mp.mpf(0), mp.mpf(1)
    for _ in range(140):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if f(mid) > 0 else (lo, mid)
    return (lo + hi) / 2


def log_In(n, r):
    f = lambda z: z ** (n - 1) * mp.e ** (-(z - r) ** 2 / 2)
    mode = (r + mp.sqrt(r * r + 4 * (n - 1))) / 2
    pts = sorted(set([0, max(mode, mp.mpf(0)), mode + 10, mode + 40, mp.inf]))
    return mp.log(mp.quad(f, pts))


# Fixed example shared with test_stat_kernels.cpp.
U = mp.matrix([0.5, -0.1, 0.7, 0.3])
X = mp.matrix([[1.0, 0.2], [0.5, -1.0], [0.3, 0.4], [-0.6, 0.9]])
BETA0 = mp.matrix([0.8, -0.5])
PSI = mp.matrix([[0.5, 0.1], [0.1, 0.3]])
SIGMA2 = 1.3


def unit(v):
    return v / mp.sqrt(sum(x * x for x in v))


def kernel_xr(u, mu, Sigma):
    Si = Sigma ** -1
    x = mp.sqrt((u.T * Si * u)[0])
    r = (u.T * Si * mu)[0] / x
    return x, r


def fab_value(u, mu, Sigma):
    n = len(u)
    x, r = kernel_xr(u, mu, Sigma)
    return r * r / 2 + log_In(n, r) - n * mp.log(x)


def afab_value(u, mu, Sigma):
    n = len(u)
    x, r = kernel_xr(u, mu, Sigma)
    return r * r / 4 + mp.sqrt(n) * r - n * mp.log(x)


def log_term(u, mu, C, s2):
    n = len(u)
    Sigma = C + s2 * mp.eye(n)
    Si = Sigma ** -1
    x, r = kernel_xr(u, mu, Sigma)
    q = (mu.T * Si * mu)[0]
    return -mp.log(mp.det(Sigma)) / 2 - n * mp.log(x) + log_In(n, r) + (r * r - q) / 2


def ig_mixture(u, mu, C, a, b):
    # substitute t = log sigma^2; IG density times the Jacobian sigma^2
    logdens = lambda t: a * mp.log(b) - mp.loggamma(a) - a * t - b * mp.e ** (-t)
    f = lambda t: mp.e ** (log_term(u, mu, C, mp.e ** t) + logdens(t))
    return mp.log(mp.quad(f, [-12, -3, mp.log(b / (a + 1)), 2, 12]))


if __name__ == "__main__":
    for n, p, c in [(10, 5, 0.999), (10, 4, 0.8), (4, 2, 0.5), (50, 25, 0.3), (5, 3, 0.1)]:
        c = mp.mpf(c)
        print(f"ratio({n},{p},{mp.nstr(c, 4)}) = {mp.nstr(ratio_exact(n, p, c), 17)}  bound = {mp.nstr(lower_bound(n, p, c), 17)}")
    for n, a in [(3, 0.05), (10, 0.05), (50, 0.01), (400, 0.05)]:
        print(f"cone_quantile({n},{a}) = {mp.nstr(cone_quantile(n, mp.mpf(a)), 17)}")

    u = unit(U)
    mu = X * BETA0
    C = X * PSI * X.T
    Sigma = C + SIGMA2 * mp.eye(4)
    print("fab example  =", mp.nstr(fab_value(u, mu, Sigma), 17))
    print("afab example =", mp.nstr(afab_value(u, mu, Sigma), 17))
    print("ig mixture example (alpha=3, beta=2) =", mp.nstr(ig_mixture(u, mu, C, mp.mpf(3), mp.mpf(2)), 17))
    x, r = kernel_xr(u, mu, Sigma)
    print("kernel x, r =", mp.nstr(x, 17), mp.nstr(r, 17))
