"""Prediction processes, Hoover-Keisler minimization, natural filtrations.

On a finite tree the rank-1 prediction process at a node is the conditional
path law given that atom; higher ranks condition the label path of the rank
below.  Labels stabilize after at most depth+1 iterations, and the stable
partition drives a bisimulation-style quotient.
"""

from __future__ import annotations

import numpy as np

from .trees import (FilteredTree, Node, check_valid, law, standard_tree,
                    _round_key)


def _conditional_law_key(weights, items):
    """Canonical key of a finitely supported law: merge duplicate support
    points (weights rounded to 1e-12) and sort."""
    buckets = {}
    for w, it in zip(weights, items):
        if it in buckets:
            buckets[it] += float(w)
        else:
            buckets[it] = float(w)
    return tuple(sorted((k, round(w, 12)) for k, w in buckets.items()))


def rank1_conditional_laws(tree: FilteredTree):
    """Per level, per node: (weights, leaf_indices) of the conditional path
    law given that atom.  Path data itself lives in tree.leaf_paths."""
    out = []
    lp = tree.leaf_probs
    for i in range(tree.n_levels):
        anc = tree.ancestors[i]
        per_node = []
        for v in range(len(tree.levels[i])):
            leaves = np.nonzero(anc == v)[0]
            w = lp[leaves]
            per_node.append((w / w.sum(), leaves))
        out.append(per_node)
    return out


def _labels_rank1(tree: FilteredTree):
    path_keys = [_round_key(tree.leaf_paths[k]) for k in range(tree.n_leaves)]
    table = {}
    labels = []
    for per_node in rank1_conditional_laws(tree):
        lv = []
        for w, leaves in per_node:
            key = _conditional_law_key(w, [path_keys[k] for k in leaves])
            lv.append(table.setdefault(key, len(table)))
        labels.append(lv)
    return labels


def _labels_next(tree: FilteredTree, labels):
    """One conditioning step: label at v becomes the conditional law of the
    whole label path given the atom v."""
    lp = tree.leaf_probs
    label_paths = [tuple(labels[i][tree.ancestors[i][k]] for i in range(tree.n_levels))
                   for k in range(tree.n_leaves)]
    table = {}
    out = []
    for i in range(tree.n_levels):
        anc = tree.ancestors[i]
        lv = []
        for v in range(len(tree.levels[i])):
            leaves = np.nonzero(anc == v)[0]
            w = lp[leaves]
            key = _conditional_law_key(w / w.sum(), [label_paths[k] for k in leaves])
            lv.append(table.setdefault(key, len(table)))
        out.append(lv)
    return out


def _partition_signature(labels):
    """Per-level grouping of node indices by label, order-independent."""
    sig = []
    for lv in labels:
        groups = {}
        for idx, lab in enumerate(lv):
            groups.setdefault(lab, []).append(idx)
        sig.append(tuple(sorted(tuple(g) for g in groups.values())))
    return tuple(sig)


def prediction_process(tree: FilteredTree, rank: int = 1):
    """Prediction labels of the given rank: list over levels of per-node
    integer labels (equal labels = identical conditional laws)."""
    check_valid(tree)
    if rank < 1:
        raise ValueError("rank must be >= 1")
    labels = _labels_rank1(tree)
    for _ in range(rank - 1):
        labels = _labels_next(tree, labels)
    return labels


def stable_labels(tree: FilteredTree):
    """Iterate prediction labels until the node partition stabilizes.

    Returns (labels, rank).  Stabilization happens after at most depth+1
    iterations because each step refines the partition or fixes it.
    """
    check_valid(tree)
    labels = _labels_rank1(tree)
    sig = _partition_signature(labels)
    rank = 1
    while True:
        nxt = _labels_next(tree, labels)
        nsig = _partition_signature(nxt)
        if nsig == sig:
            return labels, rank
        labels, sig = nxt, nsig
        rank += 1
        if rank > tree.n_levels + 1:
            raise RuntimeError("prediction labels failed to stabilize")


def hk_minimize(tree: FilteredTree) -> FilteredTree:
    """Quotient the tree by Hoover-Keisler equivalence of its atoms.

    Sibling nodes with equal stable prediction labels are merged (their
    probabilities added); merges higher up make the equal-label descendants
    siblings, so the stable partition of the result is discrete per level.
    The path law is untouched and the adapted distance to the input is 0.
    """
    labels, _ = stable_labels(tree)
    probs = tree.node_probs

    new_levels = []
    # groups at the previous level: list of lists of original node indices
    root_groups = {}
    order = []
    for j in range(len(tree.levels[0])):
        k = labels[0][j]
        if k not in root_groups:
            root_groups[k] = []
            order.append(k)
        root_groups[k].append(j)
    prev_groups = [root_groups[k] for k in order]
    new_levels.append(tuple(
        Node(None, float(sum(tree.levels[0][j].prob for j in g)),
             tree.levels[0][g[0]].value)
        for g in prev_groups))

    for i in range(1, tree.n_levels):
        groups = []
        nodes = []
        for parent_new, g in enumerate(prev_groups):
            parent_mass = sum(probs[i - 1][j] for j in g)
            sub = {}
            sub_order = []
            for j in g:
                for c in tree.children[i - 1][j]:
                    k = labels[i][c]
                    if k not in sub:
                        sub[k] = []
                        sub_order.append(k)
                    sub[k].append(c)
            for k in sub_order:
                members = sub[k]
                mass = sum(probs[i][c] for c in members)
                nodes.append(Node(parent_new, float(mass / parent_mass),
                                  tree.levels[i][members[0]].value))
                groups.append(members)
        new_levels.append(tuple(nodes))
        prev_groups = groups
    return FilteredTree(tree.grid, tuple(new_levels), tree.dim)


def is_naturally_filtered(tree: FilteredTree) -> bool:
    """True iff the filtration reveals nothing beyond the path history:
    nodes with identical realized value histories share their rank-1 label."""
    labels = prediction_process(tree, 1)
    for i in range(tree.n_levels):
        hist = {}
        for v in range(len(tree.levels[i])):
            # value history along the ancestry of node v
            path = []
            k, lev = v, i
            while lev >= 0:
                path.append(tree.levels[lev][k].value)
                k = tree.levels[lev][k].parent
                lev -= 1
                if k is None:
                    break
            key = _round_key(np.array(path[::-1]))
            if key in hist:
                if hist[key] != labels[i][v]:
                    return False
            else:
                hist[key] = labels[i][v]
    return True


def natural_tree(tree: FilteredTree) -> FilteredTree:
    """Standard naturally filtered process carrying law(tree)."""
    return standard_tree(law(tree))
