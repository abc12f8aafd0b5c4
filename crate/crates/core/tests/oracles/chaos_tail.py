"""Arbitrary-precision reference values for the discarded-chaos bound.

    sum_{n > n_max} M^n C^n (max(1, D^(2Ln)) / n!)^(1/(2L)) * D^(1/2 - 1/(2L)),
    C = 2L / (2L - 1)

Run: python3 chaos_tail.py
"""
from mpmath import mp, mpf, factorial, nsum, inf

mp.dps = 50


def tail(m, delta, l, n_max):
    m, delta = mpf(m), mpf(delta)
    c = mpf(2 * l) / (2 * l - 1)
    pre = delta ** (mpf(1) / 2 - mpf(1) / (2 * l))
    term = lambda n: (m * c) ** n * (max(1, delta ** (2 * l * n)) / factorial(n)) ** (mpf(1) / (2 * l))
    return pre * nsum(term, [n_max + 1, inf])


if __name__ == "__main__":
    for args in [(1, 0.5, 2, 0), (1, 0.5, 2, 4), (1, 0.5, 2, 8), (0.7, 2.0, 3, 5), (2, 1, 1, 3)]:
        print(args, mp.nstr(tail(*args), 20))
