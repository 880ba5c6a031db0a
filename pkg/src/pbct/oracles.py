"""Reference implementations used by the test suite to certify production code.

Everything in this module is written for obvious correctness, not speed, and
deliberately shares no code with the production modules it checks: only numpy,
scipy.optimize and the standard library are imported here.  A registry at the
bottom maps each oracle to the production path it certifies together with the
agreement tolerance enforced by the tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def finite_difference_gradient(f: Callable[[np.ndarray], float],
                               point: np.ndarray,
                               step: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function, one coordinate at a time."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = np.asarray(point, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = float(f(x))
        flat[i] = orig - step
        fm = float(f(x))
        flat[i] = orig
        if not (math.isfinite(fp) and math.isfinite(fm)):
            raise ValueError(f"non-finite evaluation at coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


# ---------------------------------------------------------------------------
# assignment brute force
# ---------------------------------------------------------------------------

def permutation_assignment(counts: np.ndarray) -> tuple[dict[int, int], float]:
    """Exhaustive-maximum assignment over all k! permutations, k <= 6.

    `counts[i, j]` is the number of items in predicted cluster i with gold
    label j; the returned mapping i -> j maximizes the total matched count.
    Ties resolve to the first permutation in lexicographic order.
    """
    counts = np.asarray(counts, dtype=np.float64)
    k = counts.shape[0]
    if counts.shape != (k, k):
        raise ValueError("counts must be square")
    if k > 6:
        raise ValueError("permutation_assignment refuses k > 6")
    best_value = -math.inf
    best_perm: tuple[int, ...] | None = None
    for perm in itertools.permutations(range(k)):
        value = sum(counts[i, perm[i]] for i in range(k))
        if value > best_value:
            best_value = value
            best_perm = perm
    assert best_perm is not None
    return {i: best_perm[i] for i in range(k)}, float(best_value)


# ---------------------------------------------------------------------------
# clustering metrics from first principles
# ---------------------------------------------------------------------------

def pairwise_clustering_metrics(golds: Sequence, preds: Sequence):
    """(NMI, FM) computed from explicit entropy sums and O(n^2) pair counting.

    NMI uses the arithmetic mean of the two entropies as normalizer.  Returns
    (None, None) on empty input rather than pretending the metrics are zero.
    """
    if len(golds) != len(preds):
        raise ValueError("label lists must have equal length")
    n = len(golds)
    if n == 0:
        return None, None

    gold_ids = {lab: i for i, lab in enumerate(dict.fromkeys(golds))}
    pred_ids = {lab: i for i, lab in enumerate(dict.fromkeys(preds))}
    counts = np.zeros((len(gold_ids), len(pred_ids)), dtype=np.float64)
    for g, p in zip(golds, preds):
        counts[gold_ids[g], pred_ids[p]] += 1.0

    a = counts.sum(axis=1)
    b = counts.sum(axis=0)
    h_gold = -sum((ai / n) * math.log(ai / n) for ai in a if ai > 0)
    h_pred = -sum((bj / n) * math.log(bj / n) for bj in b if bj > 0)
    mi = 0.0
    for i in range(counts.shape[0]):
        for j in range(counts.shape[1]):
            nij = counts[i, j]
            if nij > 0:
                mi += (nij / n) * math.log(nij * n / (a[i] * b[j]))

    if len(gold_ids) == 1 and len(pred_ids) == 1:
        nmi = 1.0
    elif mi <= 1e-15:
        nmi = 0.0
    else:
        nmi = mi / ((h_gold + h_pred) / 2.0)

    tp = fp = fn = 0
    for i in range(n):
        for j in range(i + 1, n):
            same_gold = golds[i] == golds[j]
            same_pred = preds[i] == preds[j]
            if same_gold and same_pred:
                tp += 1
            elif same_pred and not same_gold:
                fp += 1
            elif same_gold and not same_pred:
                fn += 1
    if tp == 0:
        fm = 0.0
    else:
        fm = tp / math.sqrt((tp + fp) * (tp + fn))
    return nmi, fm


# ---------------------------------------------------------------------------
# exact discrete transport
# ---------------------------------------------------------------------------

def _check_transport_inputs(p, q, cost):
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("p and q must be same-length vectors")
    if cost.shape != (p.size, p.size):
        raise ValueError("cost matrix shape mismatch")
    for name, v in (("p", p), ("q", q)):
        if abs(v.sum() - 1.0) > 1e-6 or (v < -1e-12).any():
            raise ValueError(f"{name} is not a probability vector")
    return p, q, cost


def transport_value_lp(p, q, cost) -> float:
    """Exact transportation LP optimum via scipy's HiGHS simplex."""
    p, q, cost = _check_transport_inputs(p, q, cost)
    k = p.size
    # variables x_ij flattened row-major; drop the last (redundant) constraint
    a_eq = []
    b_eq = []
    for i in range(k):
        row = np.zeros(k * k)
        row[i * k:(i + 1) * k] = 1.0
        a_eq.append(row)
        b_eq.append(p[i])
    for j in range(k - 1):
        col = np.zeros(k * k)
        col[j::k] = 1.0
        a_eq.append(col)
        b_eq.append(q[j])
    res = linprog(cost.reshape(-1), A_eq=np.array(a_eq), b_eq=np.array(b_eq),
                  bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"LP solve failed: {res.message}")
    return float(res.fun)


def enumerate_transport_vertices(p, q):
    """All extreme couplings of the transportation polytope, tiny supports only.

    Depth-first over every order of picking a cell and saturating the smaller
    remaining marginal; every basic feasible solution arises from some order.
    Exponential, so capped at support size 3.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    k = p.size
    if k > 3:
        raise ValueError("vertex enumeration capped at support size 3")
    vertices: list[np.ndarray] = []
    seen: set[tuple] = set()

    def recurse(plan, rp, rq, live_r, live_c):
        if not live_r or not live_c:
            key = tuple(np.round(plan.reshape(-1), 12))
            if key not in seen:
                seen.add(key)
                vertices.append(plan.copy())
            return
        for i in list(live_r):
            for j in list(live_c):
                move = min(rp[i], rq[j])
                plan[i, j] += move
                rp2 = rp.copy(); rq2 = rq.copy()
                rp2[i] -= move; rq2[j] -= move
                lr = live_r - {i} if rp2[i] <= 1e-15 else live_r
                lc = live_c - {j} if rq2[j] <= 1e-15 else live_c
                if lr == live_r and lc == live_c:
                    lr = live_r - {i}  # zero move on a dead pair: drop the row
                recurse(plan, rp2, rq2, lr, lc)
                plan[i, j] -= move

    recurse(np.zeros((k, k)), p.copy(), q.copy(),
            set(range(k)), set(range(k)))
    return vertices


def transport_value_bruteforce(p, q, cost) -> float:
    """Exact optimal-transport value, independent of the production solver.

    Supports up to 3 use exhaustive vertex enumeration; larger supports
    (up to a few hundred) fall back to the HiGHS LP path.
    """
    p, q, cost = _check_transport_inputs(p, q, cost)
    if p.size <= 3:
        vertices = enumerate_transport_vertices(p, q)
        return float(min(float((v * cost).sum()) for v in vertices))
    return transport_value_lp(p, q, cost)


# ---------------------------------------------------------------------------
# straight-line toy encoder forward pass
# ---------------------------------------------------------------------------

def _layernorm(x, gain, bias, eps=1e-5):
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + eps) * gain + bias


def _softmax(x, axis=-1):
    shifted = x - x.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=axis, keepdims=True)


def toy_encoder_forward(weights: dict[str, np.ndarray], token_ids: Sequence[int]) -> np.ndarray:
    """Re-derivation of the tiny self-attention encoder, written independently.

    `weights` holds plain math-orientation arrays ([in, out] matrices) under
    the same key names the production module uses in its state dict.
    Returns the final hidden matrix [T, h].
    """
    ids = np.asarray(token_ids, dtype=np.int64)
    x = weights["tok_embed"][ids] + weights["pos_embed"][: ids.size]
    n_layers = len({k.split(".")[1] for k in weights if k.startswith("blocks.")})
    h = x.shape[-1]
    for layer in range(n_layers):
        w = lambda name: weights[f"blocks.{layer}.{name}"]
        q = x @ w("wq") + w("bq")
        k = x @ w("wk") + w("bk")
        v = x @ w("wv") + w("bv")
        att = _softmax(q @ k.T / math.sqrt(h), axis=-1)
        x = _layernorm(x + (att @ v) @ w("wo") + w("bo"),
                       w("ln1_gain"), w("ln1_bias"))
        f = np.maximum(x @ w("w1") + w("b1"), 0.0) @ w("w2") + w("b2")
        x = _layernorm(x + f, w("ln2_gain"), w("ln2_bias"))
    return x


def toy_encoder_mask_logits(weights: dict[str, np.ndarray],
                            token_ids: Sequence[int],
                            position: int) -> np.ndarray:
    """Vocabulary logits at one position: tied to the embedding table."""
    hidden = toy_encoder_forward(weights, token_ids)
    return hidden[position] @ weights["tok_embed"].T


# ---------------------------------------------------------------------------
# registry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleEntry:
    fn: Callable
    production: str  # dotted path of the production counterpart
    tolerance: float
    note: str = ""


ORACLES: dict[str, OracleEntry] = {
    "transport_exact": OracleEntry(
        transport_value_bruteforce, "pbct.transport.wasserstein", 1e-6,
        "exact LP value vs production solver"),
    "assignment_bruteforce": OracleEntry(
        permutation_assignment, "pbct.evaluation.hungarian_map", 0.0,
        "factorial brute force vs Hungarian assignment, k <= 6"),
    "clustering_pairwise": OracleEntry(
        pairwise_clustering_metrics, "pbct.evaluation.compute_metrics", 1e-9,
        "entropy/pair-count NMI and FM vs production metrics"),
    "toy_forward": OracleEntry(
        toy_encoder_forward, "pbct.encoder.toy.ToyEncoder.encode", 1e-5,
        "straight-line numpy forward vs production toy encoder"),
    "finite_difference": OracleEntry(
        finite_difference_gradient, "pbct.losses.total_loss", 1e-4,
        "central differences vs autograd, relative error"),
}
