"""High-precision reference values for the I_n(r) kernel and related statistics.

Run with `python3 kernel_oracle.py`; the printed values are frozen into
tests/test_special_functions.cpp and tests/test_stat_kernels.cpp.
"""
import mpmath as mp

mp.mp.dps = 40


def log_In(n, r):
    f = lambda z: z ** (n - 1) * mp.e ** (-(z - r) ** 2 / 2)
    mode = (r + mp.sqrt(r * r + 4 * (n - 1))) / 2
    pts = [0, max(mode, mp.mpf(0)), mode + 10, mode + 40, mp.inf]
    pts = sorted(set(pts))
    return mp.log(mp.quad(f, pts))


if __name__ == "__main__":
    for n, r in [(1, 0), (2, 0), (3, 0), (2, 1), (5, -3), (10, 2.5), (50, -5), (100, -2), (200, 5), (200, -5)]:
        print(f"log_In({n}, {r}) = {mp.nstr(log_In(n, mp.mpf(r)), 17)}")
    # approximation error sweep for n = 100
    worst = 0
    for i in range(-20, 21):
        r = mp.mpf(i) / 10
        exact = log_In(100, r)
        approx = (50 - 1) * mp.log(2) + mp.loggamma(50) + 10 * r - r * r / 4
        worst = max(worst, abs(exact - approx) / abs(exact))
    print("worst relative log_In_approx error, n=100, r in [-2,2]:", mp.nstr(worst, 6))
    print("T example n=2 r=1:", mp.nstr(mp.mpf(1) / 2 + log_In(2, 1), 17))
