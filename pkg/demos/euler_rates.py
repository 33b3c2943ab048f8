"""Strong Euler-scheme rates under the identity coupling.

The coarse scheme is driven by the same Brownian increments as a fine
reference solution; since the diffusion coefficient stays positive, both
filtrations are generated by the same noise up to one coarse step, making
the identity coupling 1/n-bicausal.  The expected sup-distance then decays
like sqrt(log(n)/n).

Run:  python demos/euler_rates.py  (about a minute)
"""

from adapted_ot import parse_coefficient
from adapted_ot.experiments import euler_table

for mu_s, sigma_s in (("0", "1"), ("clip(-x, -1, 1)", "max(0.4, 1 - 0.5 * x * x)")):
    mu, sigma = parse_coefficient(mu_s), parse_coefficient(sigma_s)
    rec = euler_table(mu, sigma, 0.0, [2 ** k for k in range(4, 10)],
                      samples=2000, seed=11)
    print(f"mu = {mu_s!r}, sigma = {sigma_s!r}")
    for n, mean, se in rec.outputs["rows"]:
        print(f"  n={n:>4}: {mean:.4f} +- {se:.4f}")
    print(f"  log-log slope: {rec.outputs['slope']:.3f} (target about -1/2)\n")
