"""
Adversarial aggregators
=======================

Each scenario plugs a misbehaving aggregator (or a coalition of them) into a
small three-party, three-aggregator deployment and checks that the attack
is stopped.
"""

from tapfed.harness import default_attack_config, run_attack_scenario
from tapfed.harness.config import SCENARIOS

cfg = default_attack_config()
for name in SCENARIOS:
    verdict = run_attack_scenario(name, cfg)
    print(f"{name:22s} {verdict.outcome:10s} expected {verdict.expected:10s} {verdict.details}")

# a coalition as large as the threshold can of course decrypt on its own
print(run_attack_scenario("collusion", cfg, coalition_size=cfg.threshold_t).details)
