"""Reading the dual Selmer group off the profile of a Stark system.

With dual structure R/m^2 + R/m, the value at 1 has valuation 3.  Over
Z/2^4 that is visible and the profile gives back (2, 1).  Over Z/3^3 the
value at 1 is already zero, so only the tail past ord survives.
"""

from klab import systems as S
from klab.selmer_instance import generate_instance

for p, k in ((2, 4), (3, 3)):
    inst = generate_instance(p, k, 1, 3, (2, 1), seed=0)
    g = S.stark_module(inst).generator()
    prof = S.invariant_profile(g)
    rec = S.recover_structure(prof)
    print(f"p={p} k={k}")
    print("  dphi:", prof.to_json()["dphi"], "ord:", prof.ord, "d:", prof.d)
    print("  recovered:", rec["invariant_factors"], "finite:", rec["finite"])
    print("  comparison:", S.compare_recovery(inst, rec))
    kap = S.pi_transform(inst, g)
    print("  length bound from kappa_1:", S.lower_bound_check(inst, kap, True))
