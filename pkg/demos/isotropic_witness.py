"""Witnessing isotropic two-qubit states with certified level-3 maps."""
import numpy as np

from pcmap import entanglement as ent
from pcmap import maps as mp

for label, phi in [("Lambda_0.6", mp.lambda_family(0.6)), ("Lambda_2/3", mp.lambda_family(2 / 3)),
                   ("Omega_0.55", mp.omega_family(0.55)), ("Omega_0.5", mp.omega_family(0.5))]:
    print(f"{label:11s} PSD for f <= {ent.isotropic_threshold(phi):.6f}")

bank = ent.default_contractive_bank()
for f in np.linspace(0.3, 1.0, 8):
    classes = ent.classify_new_hierarchy(ent.isotropic_state(2, f), bank)
    print(f"f={f:.2f}", " ".join(f"E_{k}:{v}" for k, v in classes.items()))
