"""
Surviving dropouts
==================

Five aggregators with threshold three. In round 2 one aggregator disappears
before it receives any update, another after receiving them, and one party
drops out. The remaining three aggregators are enough, and the fusion
weights are renormalised over the four surviving parties.
"""

from tapfed.harness import DropEvent, ExperimentConfig, Simulation, TrainerSpec

cfg = ExperimentConfig(
    n_parties=5, s_aggregators=5, threshold_t=3, max_rounds=3, lambda_bits=128,
    trainer=TrainerSpec(n_samples=500, n_features=5),
    dropout={2: (DropEvent("a2", "before"), DropEvent("a4", "after"), DropEvent("p3"))},
)

for rec in Simulation(cfg).run().records:
    print(f"round {rec.round_index}: {rec.status}, parties={rec.participants}, "
          f"responders={rec.responders}, deviation={rec.max_deviation:.1e}")
    for ev in rec.events:
        print("   ", ev)

# losing a third aggregator leaves only two shares, below the threshold
cfg = ExperimentConfig(
    n_parties=5, s_aggregators=5, threshold_t=3, max_rounds=1, lambda_bits=128,
    trainer=TrainerSpec(n_samples=500, n_features=5),
    dropout={1: (DropEvent("a1"), DropEvent("a2"), DropEvent("a3", "after"))},
)
print(Simulation(cfg).run().records[0].status)
