"""Straight-loop reference implementations, written independently of prbcast.metrics.

Each loop collects its terms and sums them with math.fsum (correctly rounded).
"""
import math


def mse(y, f):
    terms = []
    for a, b in zip(y, f):
        terms.append((a - b) * (a - b))
    return math.fsum(terms) / len(y)


def mae(y, f):
    terms = []
    for a, b in zip(y, f):
        terms.append(abs(a - b))
    return math.fsum(terms) / len(y)


def snaive_mae(train, m):
    terms = []
    for t in range(m, len(train)):
        terms.append(abs(train[t] - train[t - m]))
    return math.fsum(terms) / len(terms)


def mase(y, f, train, m):
    return mae(y, f) / snaive_mae(train, m)


def mape(y, f):
    terms = []
    for a, b in zip(y, f):
        terms.append(abs(a - b) / abs(a))
    return math.fsum(terms) / len(y)


def nd(y, f):
    num, den = [], []
    for a, b in zip(y, f):
        num.append(abs(a - b))
        den.append(abs(a))
    return math.fsum(num) / math.fsum(den)


def coverage(y, f):
    hits = 0
    for a, b in zip(y, f):
        if a < b:
            hits += 1
    return hits / len(y)


def pinball(y, f, q, aggregation="sum"):
    terms = []
    for a, b in zip(y, f):
        if a >= b:
            terms.append((a - b) * q)
        else:
            terms.append((b - a) * (1 - q))
    total = math.fsum(terms)
    return total if aggregation == "sum" else total / len(y)


def normal_cdf(x):
    return 0.5 * math.erfc(-x / math.sqrt(2.0))
