"""One prime, core rank one: the smallest instance end to end.

X is all of L = R^2 (finite line f, transverse line t), so the dual side is
zero and both vertices 1 and q are core.
"""

from klab import systems as S
from klab.selmer_instance import check_instance, inst_a

inst = inst_a(p=3, k=2)
print(inst)
print("valid:", check_instance(inst)["valid"])

for n in inst.vertices():
    print(f"vertex {inst.vertex_name(n)}: H_F(n) rows {inst.H(n).howell.tolist()}, lambda = {inst.lam(n)}")

# Psi_{q,1} contracts f ^ t along the transverse coordinate: f ^ t -> -f
print("Psi_{q,1} matrix:", S.psi_map(inst, (0,), ()).matrix.tolist())

SS = S.stark_module(inst)
g = SS.generator()
print("Stark module invariant factors:", SS.module.invariant_factors)
print("generator:", g.to_json())

kap = S.pi_transform(inst, g)
print("Kolyvagin transform:", kap.to_json(), "section:", kap.is_section())
KM = S.kolyvagin_modules(inst)
print("KS:", KM.KS.invariant_factors, "stub KS:", KM.stub.invariant_factors)
