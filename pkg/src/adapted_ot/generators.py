"""Constructors for the example processes and the Monte-Carlo estimators
behind the convergence-rate experiments.

Tree builders return validated FilteredTrees; the estimators are seeded,
batch-sharded (worker i consumes seed + i * 2**32) and therefore reproduce
bit-identically for a fixed seed regardless of batching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln, ndtri

from .trees import FilteredTree, Node, TimeGrid

DP_CAP = 14


# ---------------------------------------------------------------------------
# Tree constructors


def random_walk_tree(n: int, cap: int = DP_CAP) -> FilteredTree:
    """Scaled random walk with step size 1/n on the full binary tree (the
    filtration is the coin history)."""
    if not (1 <= n <= cap):
        raise ValueError(f"steps must be in [1, {cap}]")
    s = 1.0 / math.sqrt(n)
    grid = TimeGrid(tuple((i + 1) / n for i in range(n)))
    levels = [(Node(None, 1.0, (0.0,)),)]
    # node j at level i encodes the i coin bits of j; value = signed count * s
    counts = [0]
    for i in range(1, n + 1):
        new_counts = []
        nodes = []
        for parent, k in enumerate(counts):
            for step in (1, -1):
                nodes.append(Node(parent, 0.5, ((k + step) * s,)))
                new_counts.append(k + step)
        levels.append(tuple(nodes))
        counts = new_counts
    return FilteredTree(grid, tuple(levels), 1)


def _symmetric_quantile_points(m: int) -> np.ndarray:
    """Conditional means of Z ~ N(0,1) on its m quantile intervals,
    constructed antisymmetric so they sum to exactly zero."""
    if m < 1:
        raise ValueError("branching must be >= 1")
    if m == 1:
        return np.zeros(1)
    z = ndtri(np.arange(1, m) / m)
    pdf = np.exp(-z * z / 2.0) / math.sqrt(2.0 * math.pi)
    pdf = np.concatenate([[0.0], pdf, [0.0]])
    pts = (pdf[:-1] - pdf[1:]) * m
    half = pts[: m // 2]
    if m % 2:
        return np.concatenate([half, [0.0], -half[::-1]])
    return np.concatenate([half, -half[::-1]])


def gaussian_lattice_tree(grid: TimeGrid, variances, m: int) -> FilteredTree:
    """Independent Gaussian increments with the given per-step variances,
    each quantized to its m conditional quantile means (zero-variance steps
    do not branch).  Quantile-mean quantization preserves the zero mean, so
    the tree is a martingale."""
    variances = np.asarray(variances, dtype=float)
    if variances.size != grid.n_steps:
        raise ValueError("one variance per grid step required")
    if (variances < -1e-12).any():
        raise ValueError("negative increment variance")
    base = _symmetric_quantile_points(m)
    levels = [(Node(None, 1.0, (0.0,)),)]
    values = [0.0]
    for i, v in enumerate(variances):
        nodes = []
        new_vals = []
        if v <= 1e-15:
            for parent, val in enumerate(values):
                nodes.append(Node(parent, 1.0, (val,)))
                new_vals.append(val)
        else:
            pts = math.sqrt(v) * base
            for parent, val in enumerate(values):
                for pt in pts:
                    nodes.append(Node(parent, 1.0 / m, (val + pt,)))
                    new_vals.append(val + pt)
        levels.append(tuple(nodes))
        values = new_vals
    return FilteredTree(grid, tuple(levels), 1)


def quantized_bm_tree(n: int, m: int, leaf_cap: int = 60_000) -> FilteredTree:
    """Brownian reference at desk scale: n equal steps of variance 1/n,
    m-point quantile quantization each."""
    if m ** n > leaf_cap:
        raise ValueError("tree would exceed the leaf cap")
    grid = TimeGrid(tuple((i + 1) / n for i in range(n)))
    return gaussian_lattice_tree(grid, np.full(n, 1.0 / n), m)


def figure1_pair(e: float):
    """The introductory pair on the grid {1/2, 1}: both carry nearly the same
    law, but the right process reveals the terminal branch at time 1/2."""
    if not (0.0 < e < 1.0):
        raise ValueError("gap must be in (0,1)")
    g = TimeGrid((0.5, 1.0))
    p = FilteredTree(g, (
        (Node(None, 1.0, (1.0,)),),
        (Node(0, 1.0, (1.0,)),),
        (Node(0, 0.5, (2.0,)), Node(0, 0.5, (0.0,))),
    ))
    pe = FilteredTree(g, (
        (Node(None, 1.0, (1.0,)),),
        (Node(0, 0.5, (1.0 + e,)), Node(0, 0.5, (1.0 - e,))),
        (Node(0, 1.0, (2.0,)), Node(1, 1.0, (0.0,))),
    ))
    return p, pe


def _jump_tree(m: int, jump_first, jump_later) -> FilteredTree:
    """Common skeleton of the jump counterexample: a fair +-1 mark V revealed
    at a uniform interior grid slot U; node kinds are 'alive' and
    '(jump slot, sign)'.  jump_first(sign) is the value at the jump slot,
    jump_later(sign) the value afterwards."""
    n_steps = m + 1
    grid = TimeGrid(tuple((i + 1) / n_steps for i in range(n_steps)))
    levels = [(Node(None, 1.0, (0.0,)),)]
    # state per node: ('alive',) or ('jump', slot, sign)
    states = [("alive",)]
    for i in range(1, n_steps + 1):
        nodes = []
        new_states = []
        for parent, st in enumerate(states):
            if st[0] == "alive":
                slot_i = i  # jumps happen at slots 1..m
                if slot_i <= m:
                    q = 1.0 / (m - slot_i + 1)
                    for sign in (1.0, -1.0):
                        nodes.append(Node(parent, q / 2.0, (jump_first(sign),)))
                        new_states.append(("jump", slot_i, sign))
                    if q < 1.0:
                        nodes.append(Node(parent, 1.0 - q, (0.0,)))
                        new_states.append(("alive",))
                else:
                    nodes.append(Node(parent, 1.0, (0.0,)))
                    new_states.append(("alive",))
            else:
                _, slot, sign = st
                val = jump_first(sign) if i == slot else jump_later(sign)
                nodes.append(Node(parent, 1.0, (val,)))
                new_states.append(st)
        levels.append(tuple(nodes))
        states = new_states
    return FilteredTree(grid, tuple(levels), 1)


def counterexample_pair(n: int, m: int):
    """Jump process X (straight to the mark V at slot U) versus its squeezed
    approximation X^n (V/n at U, then V one grid step later).

    Grid: m+1 uniform points; U is uniform over the m interior slots, so the
    second jump always fits before the horizon.  Both trees are naturally
    filtered; X is a martingale.
    """
    if m < 2 or n < 1:
        raise ValueError("need m >= 2 and n >= 1")
    x = _jump_tree(m, lambda s: s, lambda s: s)
    xn = _jump_tree(m, lambda s: s / n, lambda s: s)
    return xn, x


def counterexample_limit(m: int) -> FilteredTree:
    return counterexample_pair(1, m)[1]


def aldous_functional(tree: FilteredTree) -> float:
    """E[ sup_t |X_t - E[X_1 | F_t]|^2 ], the squared distance between the
    path and its terminal prediction, maximized along the path."""
    n = tree.n_levels
    term = [None] * n
    term[n - 1] = tree.level_values[n - 1].copy()
    for i in range(n - 2, -1, -1):
        out = np.zeros_like(tree.level_values[i])
        for v in range(len(tree.levels[i])):
            for c in tree.children[i][v]:
                out[v] += tree.levels[i + 1][c].prob * term[i + 1][c]
        term[i] = out
    total = 0.0
    for k in range(tree.n_leaves):
        worst = 0.0
        for i in range(n):
            a = tree.ancestors[i][k]
            gap = float(np.linalg.norm(tree.level_values[i][a] - term[i][a]))
            worst = max(worst, gap * gap)
        total += tree.leaf_probs[k] * worst
    return float(total)


def offset_rw_pair(m: int):
    """Two scaled random walks on a common 2m-level grid whose information
    arrives at interleaved levels: X steps at odd levels, Y at even levels.

    Every strictly bicausal coupling of the pair is the product coupling
    (the offset-grid phenomenon), while a one-level shift couples them at
    cost of a single step.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    n_steps = 2 * m
    grid = TimeGrid(tuple((i + 1) / n_steps for i in range(n_steps)))
    s = 1.0 / math.sqrt(m)

    def walk(active_parity):
        levels = [(Node(None, 1.0, (0.0,)),)]
        values = [0.0]
        for i in range(1, n_steps + 1):
            nodes = []
            new_vals = []
            if i % 2 == active_parity:
                for parent, val in enumerate(values):
                    for step in (s, -s):
                        nodes.append(Node(parent, 0.5, (val + step,)))
                        new_vals.append(val + step)
            else:
                for parent, val in enumerate(values):
                    nodes.append(Node(parent, 1.0, (val,)))
                    new_vals.append(val)
            levels.append(tuple(nodes))
            values = new_vals
        return FilteredTree(grid, tuple(levels), 1)

    return walk(1), walk(0)


def bursty_time_change(k_bursts: int = 5, width: float = 0.05,
                       margin: float = 0.05):
    """Nondecreasing time change gathering all variance in k short ramps, the
    last ending at 1 - margin so that a shift by up to `margin` keeps 1 -> 1."""
    starts = np.linspace(0.1, 1.0 - margin - width, k_bursts)

    def phi(t):
        t = np.asarray(t, dtype=float)
        v = np.clip((t[..., None] - starts) / width, 0.0, 1.0).sum(axis=-1)
        return v / k_bursts
    return phi


def shifted_time_change(phi, shift: float):
    def psi(t):
        t = np.asarray(t, dtype=float)
        return phi(np.maximum(t - shift, 0.0))
    return psi


def time_changed_bm_pair(phi1, phi2, n: int, m: int):
    """Quantized trees of time-changed Brownian motions: increment variances
    are the phi-increments over a uniform n-step grid."""
    grid = TimeGrid(tuple((i + 1) / n for i in range(n)))
    times = np.array((0.0,) + grid.times)

    def build(phi):
        v = np.diff(np.asarray(phi(times), dtype=float))
        if (v < -1e-12).any():
            raise ValueError("time change must be nondecreasing")
        total = float(np.asarray(phi(1.0)))
        if abs(total - 1.0) > 1e-9 or abs(float(np.asarray(phi(0.0)))) > 1e-9:
            raise ValueError("time change must map 0 to 0 and 1 to 1")
        v = np.where(v > 1e-9, v, 0.0)  # drop rounding spill between cells
        return gaussian_lattice_tree(grid, v, m)

    return build(phi1), build(phi2)


# ---------------------------------------------------------------------------
# Random trees for property checks


def _simplex_probs(rng, k: int) -> np.ndarray:
    """Flat simplex sample rounded to multiples of 1/64 (each branch >= 1/64),
    so the marginals are exact dyadic rationals."""
    w = rng.dirichlet(np.ones(k))
    counts = rng.multinomial(64 - k, w) + 1
    return counts / 64.0


def random_tree(rng, max_steps: int = 3, dim: int = 1,
                branching=(2, 3), root_atoms: int = 1,
                value_scale: float = 1.0) -> FilteredTree:
    """Small random tree for the property batteries: at most `max_steps`
    grid steps on a uniform grid, 2-3 children per node, dyadic exact
    probabilities, i.i.d. uniform values in [-scale, scale]."""
    n = int(rng.integers(1, max_steps + 1))
    grid = TimeGrid(tuple((i + 1) / n for i in range(n)))

    def val():
        return tuple(rng.uniform(-value_scale, value_scale, dim))

    if root_atoms == 1:
        levels = [(Node(None, 1.0, val()),)]
    else:
        probs = _simplex_probs(rng, root_atoms)
        levels = [tuple(Node(None, float(p), val()) for p in probs)]
    for _ in range(n):
        nodes = []
        for parent in range(len(levels[-1])):
            k = int(rng.choice(branching))
            probs = _simplex_probs(rng, k)
            for p in probs:
                nodes.append(Node(parent, float(p), val()))
        levels.append(tuple(nodes))
    return FilteredTree(grid, tuple(levels), dim)


def random_martingale_tree(rng, max_steps: int = 3, branching=(2, 3),
                           value_scale: float = 1.0) -> FilteredTree:
    """Random martingale: child values are the parent value plus exactly
    centered offsets."""
    n = int(rng.integers(1, max_steps + 1))
    grid = TimeGrid(tuple((i + 1) / n for i in range(n)))
    levels = [(Node(None, 1.0, (0.0,)),)]
    values = [0.0]
    for _ in range(n):
        nodes = []
        new_vals = []
        for parent, val in enumerate(values):
            k = int(rng.choice(branching))
            probs = _simplex_probs(rng, k)
            offs = rng.uniform(-value_scale, value_scale, k)
            offs = offs - float(probs @ offs)
            for p, o in zip(probs, offs):
                nodes.append(Node(parent, float(p), (val + o,)))
                new_vals.append(val + o)
        levels.append(tuple(nodes))
        values = new_vals
    return FilteredTree(grid, tuple(levels), 1)


# ---------------------------------------------------------------------------
# Monte-Carlo estimators (Donsker / Euler rates)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    samples: int
    seed: int


_MC_BATCH = 512


def _batch_seeds(seed: int, samples: int, batch: int = _MC_BATCH):
    out = []
    done = 0
    i = 0
    while done < samples:
        take = min(batch, samples - done)
        out.append((seed + i * 2 ** 32, take))
        done += take
        i += 1
    return out


class _HypergeomTables:
    """CDF/PMF tables of first-half success counts per segment length.

    table[(L, L1)][P, j] = P(hypergeom(L, P, L1) <= j); built once per
    length via log-binomials, so lookups inside the sampling loops are pure
    fancy indexing.
    """

    def __init__(self):
        self.cache = {}

    def get(self, L: int, L1: int):
        key = (L, L1)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        P = np.arange(L + 1)[:, None]
        j = np.arange(L1 + 1)[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            logpmf = (_logchoose(P, j) + _logchoose(L - P, L1 - j)
                      - _logchoose(L, L1))
        pmf = np.where(np.isfinite(logpmf), np.exp(logpmf), 0.0)
        cdf = np.cumsum(pmf, axis=1)
        self.cache[key] = (pmf, cdf)
        return pmf, cdf


def _logchoose(n, k):
    n = np.asarray(n, dtype=float)
    k = np.asarray(k, dtype=float)
    bad = (k < 0) | (k > n)
    safe_k = np.where(bad, 0.0, k)
    out = gammaln(n + 1) - gammaln(safe_k + 1) - gammaln(n - safe_k + 1)
    return np.where(bad, -np.inf, out)


def _dyadic_block(rng, counts, winc, L: int, dt: float, tables):
    """Refine block totals down to single steps.

    counts: plus-step counts per segment; winc: BM increments per segment.
    At each split the conditional count is drawn exactly (hypergeometric)
    and the BM midpoint is its quantile-coupled Brownian-bridge sample.
    Returns per-step (counts in {0,1}, BM step increments), in time order.
    """
    if L == 1:
        return counts[..., None], winc[..., None]
    L1 = L // 2
    L2 = L - L1
    pmf, cdf = tables.get(L, L1)
    p1 = rng.hypergeometric(counts, L - counts, L1)
    u = rng.random(counts.shape)
    prev = np.where(p1 > 0, cdf[counts, np.maximum(p1 - 1, 0)], 0.0)
    ut = np.clip(prev + u * pmf[counts, p1], 1e-15, 1.0 - 1e-15)
    w1 = winc * (L1 / L) + math.sqrt(dt * L1 * L2 / L) * ndtri(ut)
    c1, s1 = _dyadic_block(rng, p1, w1, L1, dt, tables)
    c2, s2 = _dyadic_block(rng, counts - p1, winc - w1, L2, dt, tables)
    return (np.concatenate([c1, c2], axis=-1),
            np.concatenate([s1, s2], axis=-1))


def rw_bm_block_coupling_cost(n: int, eps: float, samples: int, seed: int,
                              oversample: int = 4) -> McEstimate:
    """E sup_t |B_t - B^n_t| under the pasted block coupling.

    Blocks of length eps are coupled independently of each other, which
    makes the pasted coupling eps-bicausal by construction, so the estimate
    is an upper bound for the eps-bicausal transport cost.  Within a block
    the walk's total and the BM increment are quantile-coupled and the BM
    interior is filled by bridge sampling whose dyadic midpoints are
    quantile-coupled to the walk's conditional step counts (the computable
    stand-in for the strong-approximation coupling).
    """
    B = round(1.0 / eps)
    K = round(eps * n)
    if abs(B * eps - 1.0) > 1e-9 or abs(K - eps * n) > 1e-9 or K < 1:
        raise ValueError("need 1/eps and eps*n integral, eps*n >= 1")
    dt = 1.0 / n
    step = 1.0 / math.sqrt(n)
    tables = _HypergeomTables()
    # binomial CDF of the block plus-count, for exact quantile inversion
    jj = np.arange(K + 1)
    bpmf = np.exp(_logchoose(K, jj) - K * math.log(2.0))
    bcdf = np.cumsum(bpmf)
    bcdf[-1] = 1.0

    sups = []
    for bseed, s in _batch_seeds(seed, samples):
        rng = np.random.default_rng(bseed)
        v = rng.random((s, B))
        counts = np.searchsorted(bcdf, v, side="left").astype(np.int64)
        winc = math.sqrt(eps) * ndtri(np.clip(v, 1e-15, 1 - 1e-15))
        cstep, wstep = _dyadic_block(rng, counts, winc, K, dt, tables)
        signs = (2 * cstep - 1).reshape(s, n)
        wstep = wstep.reshape(s, n)
        rw = np.cumsum(signs * step, axis=1)
        bm = np.cumsum(wstep, axis=1)
        rw0 = np.concatenate([np.zeros((s, 1)), rw[:, :-1]], axis=1)
        bm0 = np.concatenate([np.zeros((s, 1)), bm[:, :-1]], axis=1)
        # at step ends: after the jump and against the left limit
        sup = np.abs(bm - rw).max(axis=1)
        sup = np.maximum(sup, np.abs(bm - rw0).max(axis=1))
        if oversample > 1:
            # bridge samples between step endpoints, sequential conditionals
            x = bm0.copy()
            for r in range(1, oversample):
                rem = oversample - r + 1
                mean = x + (bm - x) / rem
                var = dt / oversample * (rem - 1) / rem
                x = mean + math.sqrt(var) * rng.standard_normal((s, n))
                sup = np.maximum(sup, np.abs(x - rw0).max(axis=1))
        sups.append(sup)
    allsup = np.concatenate(sups)
    return McEstimate(float(allsup.mean()),
                      float(allsup.std(ddof=1) / math.sqrt(samples)),
                      samples, seed)


def euler_pair_cost(mu, sigma, x0: float, n: int, samples: int, seed: int,
                    fine_factor: int = 64) -> McEstimate:
    """E sup_t |X_t - X^n_t| for the coarse Euler scheme driven by the same
    Brownian increments as the fine reference (the identity coupling, which
    is 1/n-bicausal when sigma is bounded away from zero)."""
    if fine_factor < 1:
        raise ValueError("fine_factor must be >= 1")
    nf = n * fine_factor
    dtf = 1.0 / nf
    sq = math.sqrt(dtf)
    sups = []
    sigma_min = np.inf
    for bseed, s in _batch_seeds(seed, samples):
        rng = np.random.default_rng(bseed)
        x = np.full(s, float(x0))
        xc = np.full(s, float(x0))
        acc = np.zeros(s)
        sup = np.zeros(s)
        for k in range(nf):
            t = k * dtf
            dw = sq * rng.standard_normal(s)
            sv = np.asarray(sigma(t, x), dtype=float)
            sigma_min = min(sigma_min, float(sv.min()))
            x = x + np.asarray(mu(t, x), dtype=float) * dtf + sv * dw
            acc += dw
            if (k + 1) % fine_factor == 0:
                sup = np.maximum(sup, np.abs(x - xc))  # before the coarse jump
                tc = (k + 1 - fine_factor) * dtf
                xc = xc + np.asarray(mu(tc, xc), dtype=float) / n \
                    + np.asarray(sigma(tc, xc), dtype=float) * acc
                acc = np.zeros(s)
            sup = np.maximum(sup, np.abs(x - xc))
        sups.append(sup)
    if sigma_min <= 0.0:
        raise ValueError("sigma must stay strictly positive")
    allsup = np.concatenate(sups)
    return McEstimate(float(allsup.mean()),
                      float(allsup.std(ddof=1) / math.sqrt(samples)),
                      samples, seed)


# ---------------------------------------------------------------------------
# Coefficient expression grammar for the SDE experiments
#
#   expr   := term (("+" | "-") term)*
#   term   := factor ("*" factor)*
#   factor := "-" factor | atom
#   atom   := NUMBER | "t" | "x" | "(" expr ")"
#           | ("min" | "max" | "clip") "(" expr ("," expr)* ")"


def parse_coefficient(text: str) -> Callable:
    """Compile an expression over {t, x, numbers, +, -, *, min, max, clip}
    into a numpy-vectorized coefficient function f(t, x)."""
    tokens = _tokenize(text)
    pos = [0]

    def peek():
        return tokens[pos[0]] if pos[0] < len(tokens) else None

    def take(expected=None):
        tok = peek()
        if tok is None or (expected is not None and tok != expected):
            raise ValueError(f"bad coefficient expression near token {tok!r}")
        pos[0] += 1
        return tok

    def expr():
        node = term()
        while peek() in ("+", "-"):
            op = take()
            rhs = term()
            node = (lambda a, b: (lambda t, x: a(t, x) + b(t, x)))(node, rhs) \
                if op == "+" else \
                (lambda a, b: (lambda t, x: a(t, x) - b(t, x)))(node, rhs)
        return node

    def term():
        node = factor()
        while peek() == "*":
            take()
            rhs = factor()
            node = (lambda a, b: (lambda t, x: a(t, x) * b(t, x)))(node, rhs)
        return node

    def factor():
        if peek() == "-":
            take()
            inner = factor()
            return lambda t, x: -inner(t, x)
        return atom()

    def atom():
        tok = take()
        if tok == "(":
            node = expr()
            take(")")
            return node
        if tok == "t":
            return lambda t, x: t + 0.0 * np.asarray(x, dtype=float)
        if tok == "x":
            return lambda t, x: np.asarray(x, dtype=float)
        if tok in ("min", "max", "clip"):
            take("(")
            args = [expr()]
            while peek() == ",":
                take()
                args.append(expr())
            take(")")
            want = 3 if tok == "clip" else 2
            if len(args) != want:
                raise ValueError(f"{tok} expects {want} arguments")
            if tok == "min":
                a, b = args
                return lambda t, x: np.minimum(a(t, x), b(t, x))
            if tok == "max":
                a, b = args
                return lambda t, x: np.maximum(a(t, x), b(t, x))
            a, lo, hi = args
            return lambda t, x: np.clip(a(t, x), lo(t, x), hi(t, x))
        try:
            val = float(tok)
        except ValueError:
            raise ValueError(f"unexpected token {tok!r}") from None
        return lambda t, x, _v=val: _v + 0.0 * np.asarray(x, dtype=float)

    node = expr()
    if peek() is not None:
        raise ValueError(f"trailing tokens in expression: {tokens[pos[0]:]}")
    return node


def _tokenize(text: str):
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "+-*(),":
            out.append(ch)
            i += 1
        elif ch.isalpha():
            j = i
            while j < len(text) and text[j].isalpha():
                j += 1
            out.append(text[i:j])
            i = j
        elif ch.isdigit() or ch == ".":
            j = i
            while j < len(text) and (text[j].isdigit() or text[j] in ".eE"
                                     or (text[j] in "+-" and text[j - 1] in "eE")):
                j += 1
            out.append(text[i:j])
            i = j
        else:
            raise ValueError(f"bad character {ch!r} in expression")
    return out
