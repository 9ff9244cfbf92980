"""Taylor-remainder verification of the assembled shape derivatives.

For a random spline direction dt, the remainder
|J(s) - J(0) - s <dJ, I dt>| must shrink like s^2 when the assembled
derivative is correct, and only like s when it is off by any constant
factor.  The fitted slope of the remainder on a log-log grid makes this
a sharp, automated check.
"""

import dataclasses

from morphopt import driver

config = dataclasses.replace(driver.default_config("model"), refinements=0)
result = driver.gradient_check(config, seed=3)
print("model problem: predicted slope %.6e at J0 = %.6f"
      % (result.pairing, result.J0))
print("      s            J(s)        remainder")
for s, j, remainder in result.rows:
    print("  %8.1e  %.12f  %10.3e" % (s, j, remainder))
print("fitted remainder order: %.3f (2 means the derivative is exact "
      "to first order)" % result.order)

# The same check on the free-boundary functional, and a deliberately
# broken derivative: scaling it by 1.5 must drag the order down to 1.
bern = dataclasses.replace(driver.default_config("bernoulli"),
                           refinements=1)
good = driver.gradient_check(bern, seed=3)
bad = driver.gradient_check(bern, seed=3, dj_scale=1.5)
print("free-boundary functional: order %.3f correct, %.3f with a 1.5x "
      "scaling fault" % (good.order, bad.order))
