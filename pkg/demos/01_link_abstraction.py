"""
Short packets over a fading link
================================

How far is a 256-bit packet in 240 resource elements from being decodable,
and how many resource elements does a given error target cost?
"""

import numpy as np

from gfra import FblCodeSpec, db_to_linear, per_normal_approx, required_blocklength

spec = FblCodeSpec(k_bits=256, n_re=240)

# error probability against SNR: a steep waterfall around 1 bit/RE
for snr_db in (-3, -1, 0, 1, 2, 3, 9):
    eps = per_normal_approx(spec, db_to_linear(snr_db))
    print(f"{snr_db:>4} dB  eps = {eps:.3e}")

# on Rayleigh fading the average is dominated by deep fades
rng = np.random.default_rng(0)
gains = rng.standard_exponential(1_000_000)
print("average eps at 9 dB, Rayleigh:", per_normal_approx(spec, db_to_linear(9) * gains).mean())

# the inverse: blocklength needed at 9 dB for a few targets
for target in (1e-1, 1e-4, 1e-5, 1e-9):
    print(f"target {target:g}: n = {required_blocklength(256, target, db_to_linear(9))}")
