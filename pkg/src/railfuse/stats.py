"""Repeated random splits and Student's unpaired t-test."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    df: int


def unpaired_ttest(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """Equal-variance two-sample t-test with a two-sided p-value.

    The pooled variance uses the unbiased (n-1) sample variances.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = a.size, b.size
    if na < 2 or nb < 2:
        raise ValueError("each sample needs at least two values")
    df = na + nb - 2
    ssa = float(((a - a.mean()) ** 2).sum())
    ssb = float(((b - b.mean()) ** 2).sum())
    pooled = (ssa + ssb) / df
    if pooled <= 0:
        raise ValueError("zero pooled variance")
    t = float((a.mean() - b.mean()) / math.sqrt(pooled * (1.0 / na + 1.0 / nb)))
    # P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    p = float(betainc(0.5 * df, 0.5, df / (df + t * t)))
    return TTestResult(t, p, df)


def mean_std(values: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and population (divide-by-n) standard deviation."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("mean_std of an empty sequence")
    return float(v.mean()), float(v.std())


def zfold_split(n: int, z: int, seed: int, val_fraction: float = 0.2) -> list[tuple[np.ndarray, np.ndarray]]:
    """`z` independent random (train, val) partitions of range(n)."""
    if z < 2:
        raise ValueError("Z must be at least 2")
    if n < z:
        raise ValueError(f"cannot draw {z} folds from {n} items")
    if not 0.0 < val_fraction < 1.0:
        raise ValueError("val_fraction must lie in (0, 1)")
    n_val = min(max(1, int(round(n * val_fraction))), n - 1)
    folds = []
    for i in range(z):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5F1D, i]))
        perm = rng.permutation(n)
        folds.append((np.sort(perm[n_val:]), np.sort(perm[:n_val])))
    return folds
