"""Filtration surgery: coarsening, quotienting, and natural filtrations.

* Coarsening the filtration onto a subgrid moves information by at most one
  subgrid gap, so the adapted distance to the original is bounded by the
  mesh.
* Quotienting by stable prediction labels (bisimulation) removes exactly
  the information that no probabilistic functional can see: the law is
  untouched and the adapted distance to the original is zero.
* A process is naturally filtered when its rank-1 prediction process is a
  function of the path history; the causal distance to the standard
  naturally filtered tree of its law is then zero in one direction always,
  and in both directions exactly in the natural case.

Run:  python demos/mesh_and_minimality.py
"""

import numpy as np

from adapted_ot import (TimeGrid, aw, coarsen_filtration, cw, hk_minimize,
                        is_naturally_filtered, law, natural_tree,
                        random_tree, random_walk_tree, tree_isomorphic)

rng = np.random.default_rng(123)

print("-- mesh bound ----------------------------------------------------")
t = random_walk_tree(4)
for target in (TimeGrid((0.5, 1.0)), TimeGrid((0.25, 1.0)), TimeGrid((1.0,))):
    c = coarsen_filtration(t, target)
    val = aw(t, c, witness=False).value
    print(f"target {str(target.times):>18}: aw = {val:.4f} <= mesh = "
          f"{target.mesh():.4f}")

print()
print("-- quotient by stable prediction labels ---------------------------")
for _ in range(3):
    x = random_tree(rng, root_atoms=2)
    m = hk_minimize(x)
    sizes = lambda tr: [len(lv) for lv in tr.levels]
    print(f"levels {sizes(x)} -> {sizes(m)}, aw(x, quotient) = "
          f"{aw(x, m, witness=False).value:.2e}, law preserved = "
          f"{np.allclose(law(x).weights, law(m).weights)}")

print()
print("-- natural filtrations --------------------------------------------")
x = random_tree(rng)
s = natural_tree(x)
print(f"random tree natural?   {is_naturally_filtered(x)}")
print(f"its history tree:      natural = {is_naturally_filtered(s)}, "
      f"cw(x -> history tree) = {cw(x, s, witness=False).value:.2e}")
print(f"quotient of history tree isomorphic to itself: "
      f"{tree_isomorphic(hk_minimize(s), hk_minimize(natural_tree(s)))}")
