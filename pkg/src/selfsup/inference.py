"""Posterior label marginals: loopy BP over the factor graph, an
evidence-only variant for the weight M-step, and an exact brute-force
oracle for small subgraphs."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from selfsup.evidence import KIND_PAIR, FactorGraph, VirtualEvidence


class InferenceError(ValueError):
    pass


@dataclass
class BPConfig:
    max_sweeps: int = 50
    damping: float = 0.5
    tolerance: float = 1e-6
    schedule: str = "sequential"  # or "synchronous"

    def __post_init__(self) -> None:
        if not 0 <= self.damping < 1:
            raise InferenceError(f"damping must be in [0, 1), got {self.damping}")
        if self.schedule not in ("sequential", "synchronous"):
            raise InferenceError(f"unknown schedule {self.schedule!r}")


@dataclass
class Marginals:
    """Per-instance label distributions plus BP diagnostics."""

    probs: np.ndarray  # rows index instance_ids
    instance_ids: tuple[int, ...]
    iterations: int = 0
    residual: float = 0.0
    converged: bool = True
    pair_beliefs: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)
    _row: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self._row:
            self._row = {i: r for r, i in enumerate(self.instance_ids)}
        sums = self.probs.sum(axis=1)
        if not np.allclose(sums, 1.0, atol=1e-9):
            raise InferenceError(f"marginals must sum to 1, max error {abs(sums - 1).max()}")
        if (self.probs < 0).any():
            raise InferenceError("marginals must be nonnegative")

    def dist(self, instance_id: int) -> np.ndarray:
        return self.probs[self._row[instance_id]]


def _log_theta(g: FactorGraph, pred_logs: np.ndarray | None) -> np.ndarray:
    theta = g.unary_log_potentials()
    if pred_logs is not None:
        theta += pred_logs
    return theta


def _run_bp(theta: np.ndarray, pairs: list[VirtualEvidence], cfg: BPConfig):
    """Damped log-space BP on a pairwise model; returns beliefs and pair beliefs."""
    n, L = theta.shape
    # messages[(f, a, b)] = log message from variable a through factor f to variable b
    msgs: dict[tuple[int, int, int], np.ndarray] = {}
    incident: dict[int, list[int]] = {}
    for f, e in enumerate(pairs):
        i, j = e.pair
        msgs[(f, i, j)] = np.zeros(L)
        msgs[(f, j, i)] = np.zeros(L)
        incident.setdefault(i, []).append(f)
        incident.setdefault(j, []).append(f)

    def compute(f: int, src: int, dst: int, w: float) -> np.ndarray:
        # aggregate at src excluding this factor's return message
        h = theta[src].copy()
        for f2 in incident[src]:
            if f2 != f:
                e2 = pairs[f2]
                other = e2.pair[0] if e2.pair[1] == src else e2.pair[1]
                h += msgs[(f2, other, src)]
        # pair potential exp(w * I[y_src == y_dst])
        out = np.empty(L)
        for y in range(L):
            extra = np.zeros(L)
            extra[y] = w
            out[y] = logsumexp(h + extra)
        out -= logsumexp(out)
        return out

    residual = np.inf
    sweeps = 0
    if pairs:
        for sweeps in range(1, cfg.max_sweeps + 1):
            residual = 0.0
            if cfg.schedule == "sequential":
                for f, e in enumerate(pairs):
                    i, j = e.pair
                    for src, dst in ((i, j), (j, i)):
                        new = compute(f, src, dst, e.weight)
                        new = cfg.damping * msgs[(f, src, dst)] + (1 - cfg.damping) * new
                        residual = max(residual, float(np.abs(new - msgs[(f, src, dst)]).max()))
                        msgs[(f, src, dst)] = new
            else:
                updates = {}
                for f, e in enumerate(pairs):
                    i, j = e.pair
                    for src, dst in ((i, j), (j, i)):
                        updates[(f, src, dst)] = compute(f, src, dst, e.weight)
                for key, new in updates.items():
                    new = cfg.damping * msgs[key] + (1 - cfg.damping) * new
                    residual = max(residual, float(np.abs(new - msgs[key]).max()))
                    msgs[key] = new
            if residual < cfg.tolerance:
                break
    else:
        residual = 0.0

    beliefs = theta.copy()
    for f, e in enumerate(pairs):
        i, j = e.pair
        beliefs[j] += msgs[(f, i, j)]
        beliefs[i] += msgs[(f, j, i)]
    probs = softmax(beliefs, axis=1)

    pair_beliefs = {}
    for f, e in enumerate(pairs):
        i, j = e.pair
        hi = beliefs[i] - msgs[(f, j, i)]
        hj = beliefs[j] - msgs[(f, i, j)]
        logb = hi[:, None] + hj[None, :] + e.weight * np.eye(len(hi))
        logb -= logsumexp(logb)
        pair_beliefs[(i, j)] = np.exp(logb)

    converged = (not pairs) or residual < cfg.tolerance
    return probs, pair_beliefs, sweeps, residual, converged


def bp_posterior(g: FactorGraph, pred: np.ndarray, cfg: BPConfig | None = None) -> Marginals:
    """Marginals of prod_v Phi_v * prod_i Psi_i by loopy BP.

    pred: N x L predictor distributions (rows sum to 1).
    """
    cfg = cfg or BPConfig()
    pred = np.asarray(pred, dtype=float)
    n, L = len(g.corpus), g.corpus.n_labels
    if pred.shape != (n, L):
        raise InferenceError(f"pred shape {pred.shape} != ({n}, {L})")
    theta = _log_theta(g, np.log(np.clip(pred, 1e-300, None)))
    probs, pb, sweeps, residual, converged = _run_bp(theta, g.pair_factors(), cfg)
    return Marginals(probs, tuple(range(n)), sweeps, residual, converged, pb)


def evidence_only_marginals(g: FactorGraph, cfg: BPConfig | None = None) -> Marginals:
    """Marginals with the predictor replaced by the uniform distribution."""
    cfg = cfg or BPConfig()
    n = len(g.corpus)
    theta = _log_theta(g, None)
    probs, pb, sweeps, residual, converged = _run_bp(theta, g.pair_factors(), cfg)
    return Marginals(probs, tuple(range(n)), sweeps, residual, converged, pb)


def brute_force_posterior(
    g: FactorGraph,
    pred: np.ndarray | None,
    subset: list[int] | None = None,
    limit: int = 15,
) -> Marginals:
    """Exact marginals over a factor-closed subset by full enumeration."""
    subset = list(range(len(g.corpus))) if subset is None else list(subset)
    if len(subset) > limit:
        raise InferenceError(f"subset of {len(subset)} exceeds limit {limit}")
    sset = set(subset)
    pairs = []
    for e in g.pair_factors():
        i, j = e.pair
        inside = (i in sset) + (j in sset)
        if inside == 1:
            raise InferenceError(f"pair factor {e.pair} crosses the subset boundary")
        if inside == 2:
            pairs.append(e)

    L = g.corpus.n_labels
    theta_full = _log_theta(g, np.log(np.clip(pred, 1e-300, None)) if pred is not None else None)
    theta = theta_full[subset]  # k x L
    k = len(subset)
    pos = {i: r for r, i in enumerate(subset)}

    # enumerate all L^k assignments
    assigns = np.array(list(itertools.product(range(L), repeat=k)), dtype=np.int64)
    logw = theta[np.arange(k)[None, :], assigns].sum(axis=1)
    for e in pairs:
        a, b = pos[e.pair[0]], pos[e.pair[1]]
        logw = logw + e.weight * (assigns[:, a] == assigns[:, b])
    logz = logsumexp(logw)
    w = np.exp(logw - logz)

    probs = np.zeros((k, L))
    for r in range(k):
        for y in range(L):
            probs[r, y] = w[assigns[:, r] == y].sum()
    probs /= probs.sum(axis=1, keepdims=True)

    pair_beliefs = {}
    for e in pairs:
        a, b = pos[e.pair[0]], pos[e.pair[1]]
        pb = np.zeros((L, L))
        for ya in range(L):
            for yb in range(L):
                pb[ya, yb] = w[(assigns[:, a] == ya) & (assigns[:, b] == yb)].sum()
        pair_beliefs[e.pair] = pb / pb.sum()

    return Marginals(probs, tuple(subset), 0, 0.0, True, pair_beliefs)


def expected_feature(g: FactorGraph, e: VirtualEvidence, m: Marginals) -> float:
    """E[f_v] under the given marginals.

    Unary evidences average the label marginal over their groundings;
    pair factors use the BP pair belief when available, else the product
    of singleton marginals.
    """
    if e.kind == KIND_PAIR:
        i, j = e.pair
        pb = m.pair_beliefs.get((i, j))
        if pb is not None:
            return float(np.trace(pb))
        return float(np.dot(m.dist(i), m.dist(j)))
    touched = g.groundings.get(e.id)
    if touched is None:
        touched = e.touched_instances(g.corpus)
    if not touched:
        return 0.0
    return float(np.mean([m.dist(i)[e.label] for i in touched]))
