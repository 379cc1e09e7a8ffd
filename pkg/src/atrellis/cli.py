"""Command-line pipeline: simulate -> profile -> train -> detect -> eval.

All artifacts are plain JSON / JSON-lines files carrying a schema_version
field.  Exit codes: 0 success, 1 runtime or data failure, 2 usage error.
Set ATRELLIS_LOG={error|info|debug} to control logging.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from . import anomaly_ensemble as ens
from . import clustering_tree as ct
from . import synth_traffic as sim
from .errors import AtrellisError, EmptyTree, SchemaError
from .feature_pipeline import FeatureConfig, featurize
from .neural_autoencoder import TrainConfig
from .traffic_model import (PacketRecord, flows_of_trace,
                            read_packets_jsonl, write_packets_jsonl)

log = logging.getLogger("atrellis")

MANIFEST_SCHEMA_VERSION = "1.0"
METRICS_SCHEMA_VERSION = "1.0"


class UsageError(Exception):
    pass


def _infer_device_ip(packets: List[PacketRecord]) -> str:
    if not packets:
        raise EmptyTree("empty trace")
    first = packets[0]
    for candidate in (first.src_ip, first.dst_ip):
        if all(candidate in (p.src_ip, p.dst_ip) for p in packets):
            return candidate
    raise AtrellisError("could not infer device IP; pass --device-ip")


def _load_trace(path: str, strict: bool) -> List[PacketRecord]:
    return list(read_packets_jsonl(path, strict=strict))


def _parse_attack(text: str) -> sim.AttackSpec:
    try:
        obj = json.loads(text)
        return sim.AttackSpec(
            kind=obj["kind"], start=float(obj.get("start", 0.0)),
            rate=float(obj.get("rate", 1.0)),
            duration=float(obj.get("duration", 60.0)),
            target=obj.get("target", {}))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise UsageError(f"bad --attack spec: {exc}") from exc


def _device_spec_from_file(path: str) -> sim.DeviceSpec:
    with open(path) as fh:
        doc = json.load(fh)
    activities = tuple(
        sim.ActivitySpec(
            name=a["name"], remote_ip=a["remote_ip"],
            dst_port=int(a["dst_port"]), proto=a["proto"],
            period=float(a["period"]), sizes=tuple(a["sizes"]),
            size_probs=tuple(a["size_probs"]),
            packets_per_burst=int(a.get("packets_per_burst", 4)),
            jitter=float(a.get("jitter", 1.0)),
            intra_gap=float(a.get("intra_gap", 0.05)),
            domain=a.get("domain"),
            bidirectional=bool(a.get("bidirectional", True)))
        for a in doc["activities"])
    return sim.DeviceSpec(doc["device_ip"], activities)


def cmd_simulate(args) -> int:
    if args.fixture:
        if args.fixture not in sim.FIXTURES:
            raise UsageError(
                f"unknown fixture {args.fixture!r}; "
                f"choose from {', '.join(sorted(sim.FIXTURES))}")
        spec = sim.FIXTURES[args.fixture]
    elif args.spec:
        spec = _device_spec_from_file(args.spec)
    else:
        raise UsageError("one of --fixture or --spec is required")

    trace = sim.generate(spec, args.duration, args.seed)
    for attack_text in args.attack or []:
        atk = _parse_attack(attack_text)
        trace = sim.inject_attack(trace, atk, args.seed,
                                  device_ip=spec.device_ip)
    write_packets_jsonl(args.out, trace)

    counts: dict = {}
    for p in trace:
        counts[p.label] = counts.get(p.label, 0) + 1
    manifest = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "fixture": args.fixture,
        "spec_file": args.spec,
        "device_ip": spec.device_ip,
        "seed": args.seed,
        "duration": args.duration,
        "label_counts": dict(sorted(counts.items())),
    }
    with open(args.out + ".manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %d packets to %s", len(trace), args.out)
    return 0


def cmd_profile(args) -> int:
    packets = _load_trace(args.trace, args.strict)
    device_ip = args.device_ip or _infer_device_ip(packets)
    tree = ct.ClusterTree(device_ip, args.local_prefix or ())
    for pkt in packets:
        tree.insert(pkt)
    profile = ct.build_profile(tree, ct.MergeConfig(args.h_s))
    ct.save_profile(args.out, profile)
    print(f"{len(profile.keys)} activity keys for device {device_ip}")
    for i, key in enumerate(profile.keys):
        remote = key.remote_pattern.value or key.remote_pattern.kind
        print(f"  key {i}: {key.proto} {remote} "
              f"dst={key.dst_port_pattern.port} "
              f"({len(key.member_flows)} member flows)")
    return 0


def cmd_train(args) -> int:
    packets = _load_trace(args.trace, args.strict)
    profile = ct.load_profile(args.profile)
    _, table = flows_of_trace(packets, profile.device_ip,
                              args.local_prefix or ())
    fcfg = FeatureConfig(r=args.r)
    tcfg = TrainConfig(epochs=args.epochs)
    ensemble = ens.train_ensemble(
        profile, table, fcfg, tcfg,
        ens.ThresholdConfig(args.quantile), seed=args.seed)
    ens.save_ensemble(args.out, ensemble)
    print(f"trained {len(ensemble.submodels)} submodels")
    return 0


def cmd_detect(args) -> int:
    ensemble = ens.load_ensemble(args.ensemble)
    packets = _load_trace(args.trace, args.strict)
    keys, table = flows_of_trace(packets, ensemble.profile.device_ip,
                                 args.local_prefix or ())
    dump = open(args.dump_features, "w") if args.dump_features else None
    try:
        with open(args.out, "w") as fh:
            for key in keys:
                verdict = ens.detect(ensemble, key, table[key])
                fh.write(json.dumps(ens.verdict_to_dict(verdict)) + "\n")
                if dump:
                    vec = featurize(table[key], ensemble.feature_config)
                    dump.write(json.dumps(
                        {"flow_key": ct.flow_key_to_dict(key),
                         "values": vec.values.tolist()}) + "\n")
    finally:
        if dump:
            dump.close()
    print(f"judged {len(keys)} flows")
    return 0


def cmd_eval(args) -> int:
    packets = _load_trace(args.trace, args.strict)
    if any(p.label is None for p in packets):
        raise UsageError("eval requires a fully labeled trace")
    device_ip = args.device_ip or _infer_device_ip(packets)
    _, table = flows_of_trace(packets, device_ip, args.local_prefix or ())

    truth = {}
    for key, flow in table.items():
        attack = next((p.label for p in flow
                       if p.label and p.label.startswith("attack:")), None)
        truth[json.dumps(ct.flow_key_to_dict(key), sort_keys=True)] = \
            attack or "benign"

    verdicts, labels = [], []
    with open(args.verdicts) as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            key = ct.flow_key_from_dict(doc["flow_key"])
            ident = json.dumps(ct.flow_key_to_dict(key), sort_keys=True)
            if ident not in truth:
                raise AtrellisError(f"verdict for unknown flow: {ident}")
            verdicts.append(ens.Verdict(
                kind=doc["kind"], flow=key,
                models_triggered=doc["models_triggered"],
                score=doc.get("score"), activity=doc.get("activity"),
                reason=doc.get("reason")))
            labels.append(truth[ident])

    metrics = ens.evaluate(verdicts, labels)
    metrics["schema_version"] = METRICS_SCHEMA_VERSION
    with open(args.out, "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(f"{'attack':<14} {'count':>6} {'tpr':>7} {'auc':>7}")
    print(f"{'(overall)':<14} {metrics['n_attack']:>6} "
          f"{metrics['tpr']:>7.3f} {metrics['auc']:>7.3f}")
    for kind, row in metrics["per_attack"].items():
        print(f"{kind:<14} {row['count']:>6} {row['tpr']:>7.3f} "
              f"{row['auc']:>7.3f}")
    print(f"fpr={metrics['fpr']:.4f} on {metrics['n_benign']} benign flows")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atrellis",
        description="activity-profiling and anomaly-detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trace=True):
        if trace:
            p.add_argument("trace", help="packet trace (JSON-lines)")
        p.add_argument("-o", "--out", required=True)
        p.add_argument("--strict", action="store_true",
                       help="reject unknown packet fields")
        p.add_argument("--local-prefix", action="append", metavar="CIDR")
        p.add_argument("--device-ip")

    p = sub.add_parser("simulate", help="generate a labeled synthetic trace")
    p.add_argument("--fixture", help=f"one of: {', '.join(sorted(sim.FIXTURES))}")
    p.add_argument("--spec", help="device spec JSON file")
    p.add_argument("--duration", type=float, default=7200.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--attack", action="append", metavar="JSON",
                   help='attack spec, e.g. {"kind":"PortScan","start":100}')
    p.add_argument("-o", "--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("profile", help="build the activity profile")
    common(p)
    p.add_argument("--h-s", type=float, default=0.5, dest="h_s",
                   help="Jaccard merge threshold")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("train", help="train the per-activity ensemble")
    common(p)
    p.add_argument("profile", help="activity profile JSON")
    p.add_argument("--r", type=int, default=10,
                   help="packets per flow used for features")
    p.add_argument("--quantile", type=float, default=0.995)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=50)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="judge every flow of a trace")
    common(p)
    p.add_argument("ensemble", help="trained ensemble JSON")
    p.add_argument("--dump-features", metavar="PATH",
                   help="also write per-flow feature vectors (JSON-lines)")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", help="score verdicts against trace labels")
    common(p)
    p.add_argument("verdicts", help="verdict JSON-lines from detect")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    level = os.environ.get("ATRELLIS_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (AtrellisError, SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
