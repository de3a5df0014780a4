"""A Kolyvagin system of rank two that is not a stub system.

At a vertex with H_F(n) = R^2 + (R/m)^2 the wedge of the two torsion
generators is nonzero, and zero everywhere else still gives a section.
It cannot lie in the stub module, which is free of rank one.
"""

from klab import systems as S
from klab.selmer_instance import generate_instance

inst = generate_instance(3, 2, 2, 4, (1, 1), seed=0)
n = S.torsion_wedge_vertex(inst)
print("vertex:", inst.vertex_name(n), "H_F(n):", inst.H(n).invariant_factors)
kap = S.torsion_wedge_section(inst, n)
KM = S.kolyvagin_modules(inst)
print("section:", kap.is_section(), "stub values:", kap.is_stub(), "in stub module:", KM.in_stub(kap))
print("KS:", KM.KS.invariant_factors, "stub KS:", KM.stub.invariant_factors)
