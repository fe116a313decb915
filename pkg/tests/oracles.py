"""Throwaway reference evaluations written with plain Python loops.

They deliberately share no code with the package.
"""
import math


def correlation_oracle(f):
    n = len(f)
    idx = list(range(1, n + 1))
    fm = sum(f) / n
    im = sum(idx) / n
    num = abs(sum((f[i] - fm) * (idx[i] - im) for i in range(n)))
    den = math.sqrt(sum((v - fm) ** 2 for v in f) * sum((i - im) ** 2 for i in idx))
    return 0.0 if den == 0 else num / den


def monotonicity_oracle(f):
    n = len(f)
    pos = sum(1 for i in range(n - 1) if f[i + 1] - f[i] > 0)
    neg = sum(1 for i in range(n - 1) if f[i + 1] - f[i] < 0)
    return abs(pos / (n - 1) - neg / (n - 1))


def rmse_oracle(y, yhat):
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(y, yhat)) / len(y))


def count_units_by_line_scan(path):
    ids = set()
    with open(path) as fh:
        for line in fh:
            tok = line.split()
            if tok:
                ids.add(int(float(tok[0])))
    return len(ids)
