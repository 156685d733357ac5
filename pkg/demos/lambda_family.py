"""Level-3 certification of Lambda_a across the CP boundary and up to a = 2/3."""
from pcmap import contractivity as ct
from pcmap import maps as mp
from pcmap import operators as ops

for a in (0.4, 0.5, 0.55, 0.6, 0.65, 0.66, 0.68, 0.75):
    phi = mp.lambda_family(a)
    cert = ct.certify_c3_covariant(phi, p_grid_size=21)
    print(f"a={a:.2f}  choi lambda_min={ops.lambda_min(phi.choi):+.4f}  C_3: {cert.verdict}"
          f"  min margin {cert.details['min_margin']:+.2e}")
