import numpy as np
import pytest

from adapted_ot import FilteredTree, Node, TimeGrid, figure1_pair


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


@pytest.fixture
def fig1():
    return figure1_pair(0.1)


def two_coin_tree():
    """Fair coin at t=1/2 then fair coin at t=1, values are partial sums."""
    g = TimeGrid((0.5, 1.0))
    return FilteredTree(g, (
        (Node(None, 1.0, (0.0,)),),
        (Node(0, 0.5, (1.0,)), Node(0, 0.5, (-1.0,))),
        (Node(0, 0.5, (2.0,)), Node(0, 0.5, (0.0,)),
         Node(1, 0.5, (0.0,)), Node(1, 0.5, (-2.0,))),
    ))


def deterministic_tree(values=(0.0, 0.3, 1.0)):
    n = len(values) - 1
    g = TimeGrid(tuple((i + 1) / n for i in range(n)))
    levels = [(Node(None, 1.0, (values[0],)),)]
    for v in values[1:]:
        levels.append((Node(0, 1.0, (v,)),))
    return FilteredTree(g, tuple(levels), 1)
