"""Independent reference values for the C++ tests, computed with fractions.

Run `python3 tests/oracle/oracle.py` to regenerate; the numbers printed here are
frozen in tests/test_oracle_values.cpp.
"""
from fractions import Fraction as F
import math


def st(theta, d, tau):
    # Least values with T0/theta >= tau+d, T1/theta >= (1-1/theta)T0 + tau,
    # T2/theta >= 3d, T3/theta >= (1-1/theta)T2 + 2d, all tight.
    T0 = theta * (tau + d)
    T1 = theta * ((1 - 1 / theta) * T0 + tau)
    T2 = theta * 3 * d
    T3 = theta * ((1 - 1 / theta) * T2 + 2 * d)
    return T0, T1, T2, T3


def st_sim(theta, d, tau, rounds):
    T0, T1, T2, T3 = st(theta, d, tau)
    return T0 + T1 + 3 * d + rounds * (T2 + T3 + 3 * d)


def main_closed(theta, d):
    T1 = 3 * theta * d
    T_listen = (theta - 1) * T1 + 3 * theta * d
    return T1, T_listen


def main_bound_ok(theta):
    x = 7 * theta - 2
    return x <= 0 or x * x < 32


def phi0(theta):
    return 1 + 5 * (theta - 1) / (2 + 2 * theta - 3 * theta * theta)


def wilson(k, n, z):
    p = k / n
    den = 1 + z * z / n
    c = (p + z * z / (2 * n)) / den
    m = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return c - m, c + m


if __name__ == "__main__":
    for args in [(F(11, 10), F(1), F(10)), (F(1001, 1000), F(1), F(5)), (F(3, 2), F(2), F(7))]:
        print("st", *args, [str(x) for x in st(*args)], "sim8", st_sim(*args, 8))
    for th in [F(1001, 1000), F(1004, 1000)]:
        print("main", th, [str(x) for x in main_closed(th, F(1))], "phi0", phi0(th))
    for th in [F(11, 10), F(12, 10), F(1004, 1000), F(1096, 1000), F(1097, 1000)]:
        print("bound", th, main_bound_ok(th))
    for th, ph in [(F(1004, 1000), F(1021, 1000)), (F(1001, 1000), F(1035, 1000)), (F(1001, 1000), F(1025, 1000))]:
        print("product", th, ph, th * th * ph < F(31, 30))
    for k, n in [(50, 100), (5000, 10000), (9, 10)]:
        print("wilson", k, n, "%.12f %.12f" % wilson(k, n, 2.5758293035489004))
