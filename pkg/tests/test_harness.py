import numpy as np
import pytest

from tapfed.errors import ConfigError, TransportError
from tapfed.harness.attacks import default_attack_config, run_attack_scenario
from tapfed.harness.config import DropEvent, ExperimentConfig, TrainerSpec, parse_config, with_overrides
from tapfed.harness.data import Dataset, make_two_class, partition_data
from tapfed.harness.simulation import Simulation, run_plaintext_fedavg
from tapfed.harness.trainer import ToyModel, train_local
from tapfed.harness.transport import Transport
from tapfed.codec import EncodingConfig

SMALL = ExperimentConfig(
    n_parties=4, s_aggregators=3, threshold_t=2, max_rounds=3, lambda_bits=64, seed=1,
    encoding=EncodingConfig(value_precision=3, weight_precision=3, value_bound=5.0),
    trainer=TrainerSpec(n_samples=200, n_features=3),
)


def test_config_parsing_sections_and_overrides():
    text = """
[experiment]
n_parties = 5
s_aggregators = 5
threshold_t = 3
lambda_bits = 128
fusion_mode = iter-avg

[encoding]
value_precision = 5

[trainer]
partition = label-skew
concentration = 0.5

[dropout]
round.2 = a1@before, a2@after, p5

[adversary]
behavior = isolation
round = 3
aggregator = a3

[dp]
mechanism = laplace
scale = 0.1
"""
    cfg = parse_config(text, {"encoding.weight_precision": "2", "seed": "9"})
    assert (cfg.n_parties, cfg.s_aggregators, cfg.threshold_t, cfg.seed) == (5, 5, 3, 9)
    assert cfg.encoding.value_precision == 5 and cfg.encoding.weight_precision == 2
    assert cfg.dropout[2] == (DropEvent("a1", "before"), DropEvent("a2", "after"),
                              DropEvent("p5", "before"))
    assert cfg.adversary.aggregator == "a3" and cfg.adversary.round_index == 3
    assert cfg.dp.mechanism == "laplace" and cfg.trainer.partition == "label-skew"


@pytest.mark.parametrize("text", [
    "",
    "[experiment]\nthreshold_t = 3\ns_aggregators = 2",
    "[experiment]\nbogus = 1",
    "[nowhere]\nx = 1",
    "[dropout]\nround.1 = a9",
    "[dropout]\nround.1 = a1@during",
    "[experiment]\nlambda_bits = 32",  # default encoding needs a larger group
    "[adversary]\nround = 2",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_transport_has_no_peer_channel():
    tr = Transport()
    with pytest.raises(TransportError):
        tr.send("a1", "a2", b"x")
    assert tr.send("a1", "p1", b"abc")
    assert tr.bytes_by_edge[("a1", "p1")] == 3
    tr.offline = {"p2"}
    assert not tr.send("a1", "p2", b"zz")
    assert tr.deliver("p2") == []


def test_partition_iid_and_skew_reproducible():
    data = make_two_class(300, 4, seed=0)
    iid = partition_data(data, 3, "iid", seed=1)
    assert sum(len(p) for p in iid) == 300
    a = partition_data(data, 4, "label-skew", 0.3, seed=5)
    b = partition_data(data, 4, "label-skew", 0.3, seed=5)
    assert all(np.array_equal(x.y, y.y) and np.array_equal(x.X, y.X) for x, y in zip(a, b))
    even = partition_data(data, 3, "label-skew", float("inf"), seed=5)
    sizes = [len(p) for p in even]
    assert max(sizes) - min(sizes) <= 2
    with pytest.raises(ConfigError):
        partition_data(data, 3, "sorted")


def test_trainer_reduces_loss():
    data = make_two_class(400, 3, seed=2)
    model = ToyModel.zeros(3, "logistic-regression")
    trained = train_local(model, data, epochs=20, lr=0.5, l2=1e-3)
    assert trained.loss(data) < model.loss(data)
    assert trained.accuracy(data) > 0.7
    assert np.array_equal(model.weights, np.zeros(4))


def test_linear_regression_family():
    cfg = with_overrides(SMALL, trainer=TrainerSpec(family="linear-regression", n_samples=200,
                                                    n_features=3))
    records = Simulation(cfg).run().records
    assert records[-1].test_loss < records[0].test_loss or records[0].test_loss < 1e-3
    assert all(r.max_deviation <= (cfg.n_parties + 1) * 1e-3 for r in records)


def test_honest_run_deterministic_and_matches_plaintext():
    a = Simulation(SMALL).run()
    b = Simulation(SMALL).run()
    plain, _ = run_plaintext_fedavg(SMALL)
    for ra, rb, rp in zip(a.records, b.records, plain):
        assert ra.status == "ok"
        assert np.array_equal(ra.global_update, rb.global_update)
        assert ra.bytes_by_edge == rb.bytes_by_edge
        assert ra.max_deviation <= (SMALL.n_parties + 1) * 1e-3
        assert np.max(np.abs(ra.global_update - rp.global_update)) < 0.05


def test_aggregator_dropout_before_and_after():
    cfg = with_overrides(SMALL, max_rounds=2, dropout={
        1: (DropEvent("a1", "before"),), 2: (DropEvent("a3", "after"), DropEvent("p2"))})
    r1, r2 = Simulation(cfg).run().records
    assert r1.status == "ok" and r1.responders == ["a2", "a3"]
    assert r2.status == "ok" and r2.responders == ["a1", "a2"]
    assert "p2" not in r2.participants and "dropout:a3:after" in r2.events
    assert r2.max_deviation <= (cfg.n_parties + 1) * 1e-3


def test_too_many_aggregator_drops_fail_round():
    cfg = with_overrides(SMALL, max_rounds=2, dropout={
        1: (DropEvent("a1"), DropEvent("a2", "after"))})
    r1, r2 = Simulation(cfg).run().records
    assert r1.status == "failed" and r2.status == "ok"


def test_aggregators_never_message_each_other():
    sim = Simulation(SMALL)
    sim.run_round(1)
    roles = {(s[0], r[0]) for s, r in sim.transport.bytes_by_edge}
    assert ("a", "a") not in roles


@pytest.mark.parametrize("scenario", ["isolation", "tamper"])
def test_attack_scenarios_quick(scenario):
    verdict = run_attack_scenario(scenario, default_attack_config())
    assert verdict.matches, verdict.details


def test_unknown_scenario():
    with pytest.raises(ValueError):
        run_attack_scenario("bribery")


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
