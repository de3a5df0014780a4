"""Finite stages of a tower: primes carry levels, reductions drop primes.

A prime of level j takes part in the instances over Z/p^i for i <= j only.
tower_check compares the Stark modules stage by stage.
"""

import json

from klab import systems as S
from klab.selmer_instance import generate_tower_instance, tower_levels

inst = generate_tower_instance(3, 2, 1, 3, [2, 1, 2], seed=0)
print("active primes per level:", tower_levels(inst))
rep = S.tower_check(inst)
print(json.dumps({k: rep[k] for k in ("ok", "limit_compatible", "failures")}, default=str))
print("Kolyvagin side:", S.kolyvagin_tower_check(inst)["ok"])
