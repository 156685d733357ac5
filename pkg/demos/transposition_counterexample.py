"""Transposition on a qubit: 2-partially contractive but not 3-partially contractive."""
import numpy as np

from pcmap import contractivity as ct
from pcmap import maps as mp

T = mp.transposition(2)
print("   p       lhs        rhs     violated")
for p in np.arange(1, 10) / 10:
    c = ct.lemma3s_condition_B(T, p, B=ct.TRANSPOSITION_WITNESS_B)
    print(f"{p:5.2f}  {c.lhs:9.6f}  {c.rhs:9.6f}  {c.violated}")

for k, cert in ct.hierarchy_scan(T, p_grid_size=21):
    print(f"C_{k}: {cert.verdict}")
