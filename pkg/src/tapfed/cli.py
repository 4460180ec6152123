"""Command line entry point: ``tapfed {keygen,run,attack,bench}``."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import random
import sys
import tempfile
import time
from pathlib import Path

from . import tmcfe, wire
from .errors import ConfigError
from .group_math import gen_group
from .harness.attacks import default_attack_config, make_interceptor, run_attack_scenario
from .harness.config import SCENARIOS, ExperimentConfig, load_config, parse_config
from .harness.simulation import Simulation, run_plaintext_fedavg

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_SCENARIO = 3

ROUND_COLUMNS = [
    "round", "status", "participants", "responders", "mean_train_loss", "test_loss",
    "test_accuracy", "plaintext_test_accuracy", "max_deviation", "bytes_updates",
    "bytes_requests", "bytes_grants", "bytes_partials", "bytes_total", "events",
]

log = logging.getLogger("tapfed")


def atomic_write(path: Path, data) -> None:
    """Write to a sibling temp file and rename, so the target is whole or absent."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def _fmt(x):
    return "" if x is None else repr(float(x))


def parse_overrides(pairs) -> dict:
    out = {}
    for item in pairs or ():
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not key=value")
        out[key.strip()] = value.strip()
    return out


def _load(args, default=None) -> ExperimentConfig:
    overrides = parse_overrides(args.set)
    if args.seed is not None:
        overrides["experiment.seed"] = str(args.seed)
    if args.config:
        return load_config(args.config, overrides)
    if default is not None:
        cfg = default
        if overrides:
            # re-parse through the text format so overrides get the same validation
            cfg = parse_config(config_to_text(cfg), overrides)
        return cfg
    raise ConfigError("--config is required")


def config_to_text(cfg: ExperimentConfig) -> str:
    enc, tr = cfg.encoding, cfg.trainer
    lines = ["[experiment]"]
    for key in ("n_parties", "s_aggregators", "threshold_t", "max_rounds", "local_epochs",
                "lambda_bits", "seed", "fusion_mode", "party_quorum"):
        lines.append(f"{key} = {getattr(cfg, key)}")
    if cfg.trust_threshold is not None:
        lines.append(f"trust_threshold = {cfg.trust_threshold}")
    lines += ["", "[encoding]", f"value_precision = {enc.value_precision}",
              f"weight_precision = {enc.weight_precision}", f"value_bound = {enc.value_bound}",
              f"max_weight = {enc.max_weight}", "", "[trainer]"]
    for key in ("family", "n_samples", "n_features", "test_fraction", "partition",
                "concentration", "data_seed", "class_separation", "learning_rate", "l2"):
        lines.append(f"{key} = {getattr(tr, key)}")
    if tr.dataset_csv:
        lines.append(f"dataset_csv = {tr.dataset_csv}")
    if cfg.dropout:
        lines += ["", "[dropout]"]
        for rnd, evs in sorted(cfg.dropout.items()):
            lines.append(f"round.{rnd} = " + ", ".join(f"{e.entity}@{e.phase}" for e in evs))
    if cfg.adversary:
        a = cfg.adversary
        lines += ["", "[adversary]", f"behavior = {a.behavior}", f"round = {a.round_index}",
                  f"aggregator = {a.aggregator}", f"target_party = {a.target_party}"]
    if cfg.dp:
        lines += ["", "[dp]", f"mechanism = {cfg.dp.mechanism}", f"scale = {cfg.dp.scale}"]
    return "\n".join(lines) + "\n"


def round_row(rec, plain_acc=None) -> dict:
    losses = list(rec.train_loss.values())
    return {
        "round": rec.round_index,
        "status": rec.status,
        "participants": len(rec.participants),
        "responders": len(rec.responders),
        "mean_train_loss": _fmt(sum(losses) / len(losses)) if losses else "",
        "test_loss": _fmt(rec.test_loss),
        "test_accuracy": _fmt(rec.test_accuracy),
        "plaintext_test_accuracy": _fmt(plain_acc),
        "max_deviation": _fmt(rec.max_deviation),
        "bytes_updates": rec.bytes_of_kind("party", "aggregator"),
        "bytes_requests": rec.bytes_of_kind("aggregator", "infra"),
        "bytes_grants": rec.bytes_of_kind("infra", "aggregator"),
        "bytes_partials": rec.bytes_of_kind("aggregator", "party"),
        "bytes_total": rec.bytes_total,
        "events": ";".join(rec.events),
    }


def cmd_keygen(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    group = gen_group(cfg.lambda_bits, seed=cfg.seed)
    dim = cfg.trainer.n_features + 1
    pp, msk = tmcfe.setup(cfg.lambda_bits, [dim] * cfg.n_parties, cfg.threshold_t,
                          cfg.s_aggregators, seed=random.Random(cfg.seed + 1), group=group)
    atomic_write(out / "group.txt", group.to_text())
    for i in range(1, cfg.n_parties + 1):
        atomic_write(out / f"party-{i}.key", wire.encode_party_key(tmcfe.sk_distribute(pp, msk, i)))
    public = {"t": pp.threshold_t, "s": pp.share_count_s, "n": pp.client_count_n,
              "vector_lengths": list(pp.vector_lengths), "hash_id": pp.hash_id,
              "element_bytes": group.element_bytes}
    atomic_write(out / "public.json", json.dumps(public, indent=2, sort_keys=True) + "\n")
    print(f"wrote group and {cfg.n_parties} party keys to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out)
    started = time.perf_counter()
    # message-level adversaries from [adversary] ride along; the others only run under `attack`
    plugin, ref = make_interceptor(cfg.adversary)
    sim = Simulation(cfg, plugin)
    if ref is not None:
        ref[0] = sim
    records = [sim.run_round(k) for k in range(1, cfg.max_rounds + 1)]
    elapsed = time.perf_counter() - started
    plain, plain_model = run_plaintext_fedavg(cfg)

    rows = [round_row(r, p.test_accuracy) for r, p in zip(records, plain)]
    atomic_write(out / "rounds.csv", _csv_text(ROUND_COLUMNS, rows))

    timing_cols = ["round"] + [f"{ph}_ms" for ph in records[0].phase_ms]
    timing_rows = [{"round": r.round_index, **{f"{k}_ms": f"{v:.3f}" for k, v in r.phase_ms.items()}}
                   for r in records]
    atomic_write(out / "timings.csv", _csv_text(timing_cols, timing_rows))

    pay_rows = []
    for r in records:
        for pid, n in sorted(r.update_bytes.items()):
            pay_rows.append({"round": r.round_index, "sender": pid, "kind": "ProtectedUpdate",
                             "bytes": n})
        for aid, n in sorted(r.partial_bytes.items()):
            pay_rows.append({"round": r.round_index, "sender": aid, "kind": "Partial", "bytes": n})
    atomic_write(out / "payload.csv", _csv_text(["round", "sender", "kind", "bytes"], pay_rows))

    last = records[-1]
    summary = {
        "rounds": len(records),
        "failed_rounds": sum(r.status != "ok" for r in records),
        "final_test_accuracy": sim.global_model.accuracy(sim.test),
        "plaintext_final_test_accuracy": plain_model.accuracy(sim.test),
        "max_deviation": max((r.max_deviation for r in records if r.max_deviation is not None),
                             default=None),
        "total_bytes": sum(r.bytes_total for r in records),
        "ciphertext_bytes_per_party": last.update_bytes and max(last.update_bytes.values()),
        "element_bytes": sim.group.element_bytes,
        "total_seconds": round(elapsed, 3),
    }
    atomic_write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_attack(args) -> int:
    scenarios = args.scenario or list(SCENARIOS)
    for s in scenarios:
        if s not in SCENARIOS:
            print(f"unknown scenario {s!r}; choose from {', '.join(SCENARIOS)}", file=sys.stderr)
            return EXIT_CONFIG
    cfg = _load(args, default=default_attack_config())
    verdicts = []
    for s in scenarios:
        kwargs = {}
        if s == "collusion" and args.coalition is not None:
            kwargs["coalition_size"] = args.coalition
        v = run_attack_scenario(s, cfg, **kwargs)
        verdicts.append(v)
        print(f"{'PASS' if v.matches else 'FAIL'} {s}: {v.outcome} (expected {v.expected})")
    payload = [{"scenario": v.scenario, "outcome": v.outcome, "expected": v.expected,
                "matches": v.matches, "details": v.details} for v in verdicts]
    atomic_write(Path(args.out) / "verdicts.json",
                 json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return EXIT_OK if all(v.matches for v in verdicts) else EXIT_SCENARIO


def bench_rows(lambda_bits: int, etas, bound: int, repeats: int, seed: int = 0):
    group = gen_group(lambda_bits, seed=seed)
    rows = []
    for eta in etas:
        pp, msk = tmcfe.setup(lambda_bits, [eta, eta], 2, 3, seed=seed, group=group)
        sks = [tmcfe.sk_distribute(pp, msk, i) for i in (1, 2)]
        keys = tmcfe.dk_generate_batch(pp, msk, [1, 1], b"bench", seed=seed)
        rng = random.Random(seed)
        for rep in range(repeats):
            xs = [[rng.randrange(bound // 2) for _ in range(eta)] for _ in range(2)]
            t0 = time.perf_counter()
            cts = [tmcfe.encrypt(sks[i], xs[i], b"bench", rng) for i in range(2)]
            t_enc = (time.perf_counter() - t0) / (2 * eta)
            t0 = time.perf_counter()
            parts = [tmcfe.share_decrypt_batch(pp, cts, [1, 1], k) for k in keys]
            t_share = (time.perf_counter() - t0) / (len(keys) * eta)
            t0 = time.perf_counter()
            tmcfe.combine_decrypt_batch(pp, parts, bound)
            t_comb = (time.perf_counter() - t0) / eta
            rows.append({"lambda_bits": lambda_bits, "eta": eta, "bound": bound, "repeat": rep,
                         "encrypt_ms_per_coord": f"{1e3 * t_enc:.4f}",
                         "share_decrypt_ms_per_coord": f"{1e3 * t_share:.4f}",
                         "combine_dlog_ms_per_coord": f"{1e3 * t_comb:.4f}"})
    return rows


def cmd_bench(args) -> int:
    lambda_bits = args.lambda_bits
    if args.config:
        lambda_bits = load_config(args.config, parse_overrides(args.set)).lambda_bits
    etas = [int(e) for e in args.eta.split(",")]
    rows = bench_rows(lambda_bits, etas, args.bound, args.repeats, args.seed or 0)
    cols = list(rows[0])
    text = _csv_text(cols, rows)
    atomic_write(Path(args.out) / "bench.csv", text)
    print(text, end="")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tapfed", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required, help="experiment config file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config value, e.g. encoding.value_precision=6")

    p = sub.add_parser("keygen", help="generate a group and party keys")
    common(p, config_required=True)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("run", help="run a training experiment")
    common(p, config_required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("attack", help="run attack scenarios")
    common(p)
    p.add_argument("--scenario", action="append", help=f"one of {', '.join(SCENARIOS)}")
    p.add_argument("--coalition", type=int, default=None, help="collusion coalition size")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("bench", help="per-operation microbenchmarks")
    common(p)
    p.add_argument("--lambda-bits", type=int, default=256)
    p.add_argument("--eta", default="1,2,4,8")
    p.add_argument("--bound", type=int, default=10**6)
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
