"""Model-agnostic Shapley values: exact enumeration and KernelSHAP regression.

A coalition mask marks the features that take the explained row's value;
the rest come from a baseline row.  The value of a coalition is the model
output averaged over all baseline rows.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BudgetExceeded, ModelFailure
from .tabular import ColumnKind

Model = Callable[[np.ndarray], np.ndarray]

EXACT_LIMIT = 20
AUTO_EXACT_LIMIT = 13
RIDGE = 1e-10
AGG_METHODS = ("mean_abs", "median", "mean")


@dataclass(frozen=True)
class ShapConfig:
    num_samples: int = 3000
    mode: str = "auto"
    seed: int = 0
    agg_method: str = "mean_abs"

    def __post_init__(self):
        if self.num_samples <= 0:
            raise ValueError("num_samples must be positive")
        if self.mode not in ("auto", "exact", "sampled"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.agg_method not in AGG_METHODS:
            raise ValueError(f"unknown agg_method {self.agg_method!r}")


@dataclass(frozen=True)
class Baseline:
    rows: np.ndarray
    source: str = "user-file"

    def __post_init__(self):
        rows = np.asarray(self.rows)
        if rows.ndim == 1:
            rows = rows[None, :]
        if rows.ndim != 2 or len(rows) == 0:
            raise ValueError("baseline needs at least one row")
        object.__setattr__(self, "rows", rows)

    @property
    def arity(self) -> int:
        return self.rows.shape[1]


def _column_mode(values: np.ndarray):
    present = [v for v in values if v is not None]
    if not present:
        return None
    counts = Counter(present)
    best = max(counts.values())
    # first value to reach the top count, in row order
    return next(v for v in present if counts[v] == best)


def auto_baseline(matrix: np.ndarray, kinds: Sequence | None = None) -> Baseline:
    """One row: column means for numeric features, modes for categorical ones."""
    matrix = np.asarray(matrix)
    m = matrix.shape[1]
    kinds = [ColumnKind(k) for k in kinds] if kinds is not None else [
        ColumnKind.NUMERIC if matrix.dtype != object else ColumnKind.CATEGORICAL] * m
    if matrix.dtype != object:
        return Baseline(np.nanmean(matrix.astype(np.float64), axis=0)[None, :], "auto")
    row = np.empty(m, dtype=object)
    for j, kind in enumerate(kinds):
        col = matrix[:, j]
        row[j] = float(np.nanmean(col.astype(np.float64))) if kind is ColumnKind.NUMERIC else _column_mode(col)
    return Baseline(row[None, :], "auto")


def impute_baseline(baseline: Baseline, reference: Baseline) -> Baseline:
    """Fill missing baseline cells from a one-row reference (the auto baseline)."""
    rows = baseline.rows.copy()
    fill = reference.rows[0]
    for j in range(rows.shape[1]):
        col = rows[:, j]
        miss = np.array([v is None or (isinstance(v, float) and math.isnan(v)) for v in col])
        if miss.any():
            rows[miss, j] = fill[j]
    return Baseline(rows, baseline.source)


# ---------------------------------------------------------------- coalition evaluation

def hybrid_rows(x: np.ndarray, baseline: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """[masks x baseline rows] synthetic inputs, flattened row-major."""
    out = np.where(masks[:, None, :], x[None, None, :], baseline[None, :, :])
    return out.reshape(-1, x.shape[0])


def coalition_values(model: Model, x: np.ndarray, baseline: np.ndarray, masks: np.ndarray) -> np.ndarray:
    if len(masks) == 0:
        return np.zeros(0)
    rows = hybrid_rows(x, baseline, masks)
    out = np.asarray(model(rows), dtype=np.float64).reshape(-1)
    if out.shape[0] != rows.shape[0]:
        raise ModelFailure(f"model returned {out.shape[0]} outputs for {rows.shape[0]} rows")
    return out.reshape(len(masks), len(baseline)).mean(axis=1)


def _all_masks(m: int) -> np.ndarray:
    idx = np.arange(1 << m, dtype=np.int64)
    return ((idx[:, None] >> np.arange(m)) & 1).astype(bool)


def exact_shapley(x: np.ndarray, model: Model, baseline: Baseline) -> tuple[np.ndarray, float]:
    """Shapley values by enumerating all 2^M coalitions; returns (phi, base value)."""
    x = np.asarray(x)
    m = x.shape[0]
    if m > EXACT_LIMIT:
        raise BudgetExceeded(f"exact enumeration needs 2^{m} coalitions; limit is 2^{EXACT_LIMIT}")
    if baseline.arity != m:
        raise ValueError(f"baseline has {baseline.arity} features, row has {m}")
    v = coalition_values(model, x, baseline.rows, _all_masks(m))
    idx = np.arange(1 << m, dtype=np.int64)
    sizes = np.array([bin(i).count("1") for i in range(1 << m)])
    fact = [math.factorial(k) for k in range(m + 1)]
    weight = np.array([fact[s] * fact[m - s - 1] / fact[m] if s < m else 0.0 for s in range(m + 1)])
    phi = np.empty(m)
    for i in range(m):
        without = idx[((idx >> i) & 1) == 0]
        phi[i] = np.sum(weight[sizes[without]] * (v[without | (1 << i)] - v[without]))
    return phi, float(v[0])


# ---------------------------------------------------------------- kernel regression

def shapley_kernel(m: int, s: int) -> float:
    """Regression weight of one coalition of size s among m features."""
    return (m - 1) / (math.comb(m, s) * s * (m - s))


def sample_coalitions(m: int, num_samples: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Coalition masks of sizes 1..m-1 and their regression weights.

    Sizes are enumerated completely, smallest (and their complements) first,
    while the budget allows; the remaining mass is filled by paired random
    draws with size probability proportional to the kernel.  When the
    budget covers all 2^m - 2 masks the result is the full enumeration.
    """
    if m < 2:
        return np.zeros((0, m), dtype=bool), np.zeros(0)
    n_sizes = math.ceil((m - 1) / 2)
    n_paired = (m - 1) // 2
    size_weight = np.array([(m - 1) / (s * (m - s)) for s in range(1, n_sizes + 1)])
    size_weight[:n_paired] *= 2
    size_weight /= size_weight.sum()

    masks: list[np.ndarray] = []
    weights: list[float] = []
    left = num_samples
    remaining = size_weight.copy()
    n_full = 0
    for s in range(1, n_sizes + 1):
        paired = s <= n_paired
        count = math.comb(m, s) * (2 if paired else 1)
        if left * remaining[s - 1] / count < 1.0 - 1e-8:
            break
        n_full += 1
        left -= count
        if remaining[s - 1] < 1.0:
            remaining /= 1.0 - remaining[s - 1]
        w = size_weight[s - 1] / math.comb(m, s) / (2 if paired else 1)
        for inds in itertools.combinations(range(m), s):
            mask = np.zeros(m, dtype=bool)
            mask[list(inds)] = True
            masks.append(mask)
            weights.append(w)
            if paired:
                masks.append(~mask)
                weights.append(w)

    if n_full < n_sizes and left > 0:
        probs = size_weight.copy()
        probs[:n_paired] /= 2  # each draw below also adds the complement
        probs = probs[n_full:] / probs[n_full:].sum()
        draws = rng.choice(len(probs), size=4 * left, p=probs)
        seen: dict[bytes, int] = {}
        first_random = len(masks)
        for d in draws:
            if left <= 0:
                break
            s = int(d) + n_full + 1
            mask = np.zeros(m, dtype=bool)
            mask[rng.permutation(m)[:s]] = True
            key = mask.tobytes()
            pair = s <= n_paired
            if key not in seen:
                seen[key] = len(masks)
                masks.append(mask)
                weights.append(1.0)
                left -= 1
                if pair and left > 0:
                    masks.append(~mask)
                    weights.append(1.0)
                    left -= 1
            else:
                pos = seen[key]
                weights[pos] += 1.0
                if pair and pos + 1 < len(masks) and np.array_equal(masks[pos + 1], ~mask):
                    weights[pos + 1] += 1.0
        tail = np.asarray(weights[first_random:])
        if tail.size:
            weights[first_random:] = list(tail * (size_weight[n_full:].sum() / tail.sum()))
    return np.array(masks, dtype=bool).reshape(-1, m), np.asarray(weights, dtype=np.float64)


def solve_constrained(z: np.ndarray, y: np.ndarray, w: np.ndarray, total: float) -> tuple[np.ndarray, bool]:
    """Weighted least squares for phi subject to sum(phi) == total.

    Solves the KKT system of the Lagrangian; falls back to a tiny ridge when
    it is singular.  Returns (phi, used_ridge).
    """
    m = z.shape[1]
    zw = z * w[:, None]
    gram = zw.T @ z
    rhs = zw.T @ y
    kkt = np.zeros((m + 1, m + 1))
    kkt[:m, :m] = gram
    kkt[:m, m] = 1.0
    kkt[m, :m] = 1.0
    b = np.concatenate([rhs, [total]])
    ridge = False
    try:
        if np.linalg.cond(kkt) > 1e12:
            raise np.linalg.LinAlgError("ill-conditioned")
        sol = np.linalg.solve(kkt, b)
    except np.linalg.LinAlgError:
        ridge = True
        kkt[:m, :m] += RIDGE * np.eye(m)
        sol = np.linalg.lstsq(kkt, b, rcond=None)[0]
    phi = sol[:m]
    # restore the constraint exactly after any fallback
    phi += (total - phi.sum()) / m
    return phi, ridge


@dataclass
class ShapExplanation:
    phi: np.ndarray
    base_value: float
    output: float
    evaluations: int = 0
    flags: list[str] = field(default_factory=list)


def kernel_shap(
    x: np.ndarray,
    model: Model,
    baseline: Baseline,
    cfg: ShapConfig = ShapConfig(),
    rng: np.random.Generator | None = None,
    base_value: float | None = None,
    output: float | None = None,
) -> ShapExplanation:
    """KernelSHAP attribution for one row.

    ``base_value`` and ``output`` may be supplied when already known (they
    are shared across a dataset); otherwise they are evaluated here.
    """
    x = np.asarray(x)
    m = x.shape[0]
    if baseline.arity != m:
        raise ValueError(f"baseline has {baseline.arity} features, row has {m}")
    if cfg.mode == "sampled" and cfg.num_samples < 2 * m + 4:
        raise ValueError(f"num_samples={cfg.num_samples} is below 2M+4={2 * m + 4}")
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    evals = 0
    if base_value is None:
        base_value = coalition_values(model, x, baseline.rows, np.zeros((1, m), dtype=bool))[0]
        evals += len(baseline.rows)
    if output is None:
        output = float(np.asarray(model(x[None, :]), dtype=np.float64).reshape(-1)[0])
        evals += 1
    delta = output - base_value
    if m == 0:
        return ShapExplanation(np.zeros(0), base_value, output, evals)
    if m == 1:
        return ShapExplanation(np.array([delta]), base_value, output, evals)
    masks, weights = sample_coalitions(m, cfg.num_samples, rng)
    v = coalition_values(model, x, baseline.rows, masks)
    evals += len(masks) * len(baseline.rows)
    phi, ridge = solve_constrained(masks.astype(np.float64), v - base_value, weights, delta)
    flags = ["singular system: ridge-regularized solve"] if ridge else []
    return ShapExplanation(phi, float(base_value), float(output), evals, flags)


# ---------------------------------------------------------------- datasets

def aggregate(local: np.ndarray, method: str) -> np.ndarray:
    if method == "mean_abs":
        return np.abs(local).mean(axis=0)
    if method == "median":
        return np.median(local, axis=0)
    if method == "mean":
        return local.mean(axis=0)
    raise ValueError(f"unknown agg_method {method!r}")


@dataclass
class AttributionResult:
    local: np.ndarray
    base_value: float
    global_importance: np.ndarray
    agg_method: str
    feature_names: list[str]
    outputs: np.ndarray
    mode: str
    flags: list[str] = field(default_factory=list)

    def ranking(self) -> list[tuple[str, float]]:
        """Features by global importance, descending; ties keep column order."""
        order = sorted(range(len(self.feature_names)), key=lambda j: (-self.global_importance[j], j))
        return [(self.feature_names[j], float(self.global_importance[j])) for j in order]


def resolve_mode(cfg: ShapConfig, m: int) -> str:
    if cfg.mode == "auto":
        return "exact" if m <= AUTO_EXACT_LIMIT else "sampled"
    return cfg.mode


def example_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed & 0xFFFFFFFFFFFFFFFF, index])


def explain_dataset(
    rows: np.ndarray,
    model: Model,
    baseline: Baseline,
    cfg: ShapConfig = ShapConfig(),
    feature_names: Sequence[str] | None = None,
    workers: int = 1,
) -> AttributionResult:
    """Explain every row (a parallel map) and aggregate column-wise."""
    rows = np.asarray(rows)
    if rows.ndim != 2 or len(rows) == 0:
        raise ValueError("need a nonempty 2-D matrix of rows")
    n, m = rows.shape
    names = list(feature_names) if feature_names is not None else [f"f{j}" for j in range(m)]
    mode = resolve_mode(cfg, m)
    if mode == "sampled" and cfg.num_samples < 2 * m + 4:
        raise ValueError(f"num_samples={cfg.num_samples} is below 2M+4={2 * m + 4}")
    base_value = float(np.mean(np.asarray(model(baseline.rows), dtype=np.float64)))
    outputs = np.asarray(model(rows), dtype=np.float64).reshape(-1)
    if outputs.shape[0] != n:
        raise ModelFailure(f"model returned {outputs.shape[0]} outputs for {n} rows")

    def one(i: int) -> tuple[np.ndarray, list[str]]:
        if mode == "exact":
            phi, _ = exact_shapley(rows[i], model, baseline)
            return phi, []
        ex = kernel_shap(rows[i], model, baseline, cfg, example_rng(cfg.seed, i),
                         base_value=base_value, output=outputs[i])
        return ex.phi, ex.flags

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, range(n)))
    else:
        results = [one(i) for i in range(n)]
    local = np.vstack([r[0] for r in results]) if m else np.zeros((n, 0))
    flags = sorted({f"row {i}: {f}" for i, r in enumerate(results) for f in r[1]})
    return AttributionResult(local, base_value, aggregate(local, cfg.agg_method), cfg.agg_method,
                             names, outputs, mode, flags)
