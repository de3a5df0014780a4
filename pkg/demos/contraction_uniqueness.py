"""The contraction map on wedge powers is not always pinned down by its properties.

M = R/9 + R/27 + R/3 over Z/27 with psi = (9, 24, 9).  The kernel N of psi is
R/9 + R/9.  Both the computed map and twice it satisfy the composition
identity and have the same image 3 (wedge^2 N), yet they differ.  No
summand of M carries all of psi(M), so the splitting route is unavailable.
"""

import numpy as np

from klab.acceptance import uniqueness_verdict
from klab.exterior import ExteriorPower, compound, contraction_matrix, element_images, module_elements, psi_hat, psi_hat_by_splitting
from klab.ring_linalg import ModuleMap, PresentedModule, ResidueRing

R = ResidueRing(3, 3)
M = PresentedModule.diagonal(R, [2, 3, 1])
c = np.array([9, 24, 9])
N, inc = ModuleMap(M, PresentedModule.free(R, 1), c.reshape(-1, 1)).kernel()
print("N:", N.invariant_factors)

f = psi_hat(M, c, N, inc, 3)
g = ModuleMap(f.domain, f.codomain, 2 * f.matrix % 27, check=False)
for name, h in (("f", f), ("2f", g)):
    # composing with wedge^2 N -> wedge^2 M must give the plain contraction
    lhs = h.matrix @ compound(R, inc.matrix, 2) % 27
    ident = ExteriorPower(M, 2).module.is_zero(lhs - contraction_matrix(R, c, 3))
    print(name, "identity:", ident, "image is 3 * target:", element_images(h) == module_elements(h.codomain, 3))
print("f == 2f:", f.equals(g))
print("splitting available:", psi_hat_by_splitting(M, c, 3) is not None)
print("verdict:", uniqueness_verdict(f, inc, 1, 3))
