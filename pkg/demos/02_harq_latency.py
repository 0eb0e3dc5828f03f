"""
Retransmission schemes and their latency staircases
===================================================

Reactive HARQ waits a full round trip between attempts, K-repetition sends
back to back, proactive repetition stops once an ACK arrives, grant-based
access pays a scheduling handshake first.
"""

from gfra import TimingConfig
from gfra.harq import FblLinked, GrantBased, KRepetition, Proactive, Reactive, simulate_harq
from gfra.phy import FblCodeSpec, LinkBudget

timing = TimingConfig()  # 60 kHz, 2-symbol mini-slots of 35.7 us
print("mini-slot:", round(timing.minislot_ms * 1000, 1), "us, round trip:", timing.rtt_minislots, "mini-slots")

# 0 dB average SNR makes the first attempt fail often enough to see the steps
model = FblLinked(FblCodeSpec(256, 240), LinkBudget(avg_snr_db=0.0))

for scheme in (Reactive(), KRepetition(4), Proactive(4), GrantBased(7)):
    res = simulate_harq(scheme, model, timing, 200_000, seed=1)
    c = res.ccdf()
    print(f"\n{scheme.name}: lost {res.misses} of 200000, mean resources {res.resources.mean():.2f}")
    for t, s in zip(c.support, c.survival):
        print(f"  P(latency > {t:.3f} ms) = {s:.2e}")
