"""From directional sounder sweeps to a path-loss model: synthesize a
campaign, pick out multipath components, fit the close-in exponent.

    python demos/channel_fit.py
"""

import numpy as np

from thzwdc.channel import PathLossModel, free_space_path_loss
from thzwdc.padp import Mpc, extract_mpcs, fit_campaign, generate_campaign, parse_padp_text

freq = 300e9
truth = PathLossModel.close_in(freq, free_space_path_loss(1.0, freq), exponent_n=2.2, shadow_sigma_db=3.0)
paths = [Mpc(1.0, 0.0, 0.0, 0.0), Mpc(2.5, 120.0, 5.0, -6.0), Mpc(4.0, 240.0, -10.0, -10.0)]
distances = np.geomspace(1.0, 50.0, 120)
campaign = generate_campaign(truth, paths, distances, seed=4)

d, text = campaign[40]
print(f"Receiver at {d:.1f} m, strongest components:")
for m in extract_mpcs(parse_padp_text(text)):
    print(f"  delay {m.delay_ns:4.2f} ns  az {m.azimuth_deg:5.1f}  zen {m.zenith_deg:5.1f}  {m.power_dbm:7.2f} dBm")

free = fit_campaign(campaign)
anchored = fit_campaign(campaign, anchor_pl0_db=truth.pl0_db)
print(f"\ntruth     pl0 {truth.pl0_db:6.2f} dB  n 2.20  sigma 3.00 dB")
print(f"free fit  pl0 {free.pl0_db:6.2f} dB  n {free.exponent_n:.2f}  sigma {free.shadow_sigma_db:.2f} dB")
print(f"anchored  pl0 {anchored.pl0_db:6.2f} dB  n {anchored.exponent_n:.2f}  sigma {anchored.shadow_sigma_db:.2f} dB")
