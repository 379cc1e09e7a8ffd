"""Tree-structured activity clustering of bidirectional flows.

Flows are routed through four rule levels (protocol, address class, source
port class, destination port class) into leaves.  Each leaf keeps a hash
table from flow key to a constant-size incremental statistics record.  At
profiling time, flows within a leaf whose packet-size sets are sufficiently
similar (Jaccard index >= h_s) are merged into one abstract activity key,
with wildcarded domains and "reg/dyn" port patterns.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

from .errors import (EmptyTree, NonMonotonicTimestamp, NoPacketsInDirection,
                     SchemaError)
from .traffic_model import (BC_MC, DOMAIN, IN, LOCAL_IP, OUT, REMOTE_IP,
                            SYSTEM, FlowKey, PacketRecord, Remote,
                            classify_port, direction_of, flow_key_of)

PROFILE_SCHEMA_VERSION = "1.0"

# port pattern kinds for activity keys
EXACT = "exact"
REGDYN = "regdyn"

# remote pattern kinds for activity keys
EXACT_DOMAIN = "domain"
WILDCARD_DOMAIN = "wildcard"
REMOTE_IP_CLASS = "remote_ip"
LOCAL_IP_CLASS = "local_ip"
BC_MC_CLASS = "bc_mc"


@dataclass
class IncrementalStats:
    """Constant-size per-flow statistics: packet counts and inter-arrival
    sums per direction, plus the set of distinct packet sizes.

    The record holds exactly 7 fields no matter how many packets the flow
    carries; only the size set grows, bounded by the number of distinct
    lengths observed.
    """

    n_in: int = 0
    n_out: int = 0
    t_in: float = 0.0
    t_out: float = 0.0
    sizes: set = field(default_factory=set)
    last_ts_in: Optional[float] = None
    last_ts_out: Optional[float] = None


def update_stats(stats: IncrementalStats, direction: str, size: int,
                 ts: float) -> IncrementalStats:
    """Fold one packet into the stats record.

    The first packet in each direction contributes a zero inter-arrival
    gap.  Timestamps within a direction must be non-decreasing.
    """
    if direction == IN:
        if stats.last_ts_in is not None:
            if ts < stats.last_ts_in:
                raise NonMonotonicTimestamp(
                    f"in-direction ts {ts} < {stats.last_ts_in}")
            stats.t_in += ts - stats.last_ts_in
        stats.n_in += 1
        stats.last_ts_in = ts
    else:
        if stats.last_ts_out is not None:
            if ts < stats.last_ts_out:
                raise NonMonotonicTimestamp(
                    f"out-direction ts {ts} < {stats.last_ts_out}")
            stats.t_out += ts - stats.last_ts_out
        stats.n_out += 1
        stats.last_ts_out = ts
    stats.sizes.add(size)
    return stats


def mean_interarrival(stats: IncrementalStats, direction: str) -> float:
    """Average gap between consecutive packets of one direction.

    A single-packet direction has mean gap 0 by convention.
    """
    n = stats.n_in if direction == IN else stats.n_out
    t = stats.t_in if direction == IN else stats.t_out
    if n < 1:
        raise NoPacketsInDirection(f"no packets in direction {direction!r}")
    return t / max(n - 1, 1)


@dataclass(frozen=True)
class TreePath:
    """Routing path of a flow through the four rule levels.

    Source ports route individually only when they are system ports;
    registered and dynamic source ports share one "reg/dyn" bucket (a
    client's ephemeral port carries no service information).  Destination
    system and registered ports route individually (they name services);
    dynamic destination ports share one bucket.
    """

    proto: str
    addr_class: str
    src_bucket: Tuple
    dst_bucket: Tuple


def tree_path_of(key: FlowKey) -> TreePath:
    src = classify_port(key.src_port, "src")
    if src.kind == SYSTEM:
        src_bucket = (SYSTEM, src.port)
    else:
        src_bucket = (REGDYN,)
    dst = classify_port(key.dst_port, "dst")
    if dst.kind in (SYSTEM, "registered"):
        dst_bucket = (dst.kind, dst.port)
    else:
        dst_bucket = ("dynamic",)
    return TreePath(key.proto, key.remote.kind, src_bucket, dst_bucket)


class ClusterTree:
    """Single-writer flow table keyed by tree path then flow key."""

    def __init__(self, device_ip: str, local_prefixes: Sequence[str] = ()):
        self.device_ip = device_ip
        self.local_prefixes = tuple(local_prefixes)
        self.leaves: Dict[TreePath, Dict[FlowKey, IncrementalStats]] = {}
        self.total_packets = 0

    def insert(self, pkt: PacketRecord) -> FlowKey:
        key = flow_key_of(pkt, self.device_ip, self.local_prefixes)
        path = tree_path_of(key)
        leaf = self.leaves.setdefault(path, {})
        stats = leaf.setdefault(key, IncrementalStats())
        update_stats(stats, direction_of(pkt, self.device_ip),
                     pkt.length, pkt.ts)
        self.total_packets += 1
        return key

    def stats_of(self, key: FlowKey) -> IncrementalStats:
        return self.leaves[tree_path_of(key)][key]


def insert_packet(tree: ClusterTree, pkt: PacketRecord) -> FlowKey:
    return tree.insert(pkt)


def jaccard(s1: FrozenSet, s2) -> float:
    """|intersection| / |union|; two empty sets count as identical (1.0)."""
    if not s1 and not s2:
        return 1.0
    s1, s2 = set(s1), set(s2)
    return len(s1 & s2) / len(s1 | s2)


@dataclass(frozen=True)
class RemotePattern:
    """Remote side of an activity key: exact domain, wildcarded domain
    suffix, or one of the address classes."""

    kind: str
    value: Optional[str] = None

    def matches(self, remote: Remote) -> bool:
        if self.kind == EXACT_DOMAIN:
            return remote.kind == DOMAIN and remote.value == self.value
        if self.kind == WILDCARD_DOMAIN:
            return remote.kind == DOMAIN and remote.value.endswith(self.value)
        if self.kind == REMOTE_IP_CLASS:
            return remote.kind == REMOTE_IP
        if self.kind == LOCAL_IP_CLASS:
            return remote.kind == LOCAL_IP
        return remote.kind == BC_MC


@dataclass(frozen=True)
class PortPattern:
    """Port side of an activity key: an exact port or the reg/dyn range."""

    kind: str
    port: Optional[int] = None

    def matches(self, port: int) -> bool:
        if self.kind == EXACT:
            return port == self.port
        return port >= 1024


@dataclass(frozen=True)
class ActivityKey:
    """Abstract flow rule identifying one device activity."""

    proto: str
    remote_pattern: RemotePattern
    src_port_pattern: PortPattern
    dst_port_pattern: PortPattern
    member_flows: Tuple[FlowKey, ...] = field(default=(), compare=False)


@dataclass(frozen=True)
class MergeConfig:
    h_s: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.h_s <= 1.0:
            raise ValueError(f"h_s must be in [0,1], got {self.h_s}")


@dataclass
class ActivityProfile:
    device_ip: str
    keys: List[ActivityKey]


def _domain_suffix(a: str, b: str) -> Optional[str]:
    """Longest shared dot-separated tail of two domains, or None if fewer
    than two labels are shared."""
    la, lb = a.split("."), b.split(".")
    shared = []
    while la and lb and la[-1] == lb[-1]:
        shared.append(la.pop())
        lb.pop()
    if len(shared) < 2:
        return None
    return ".".join(reversed(shared))


def _mergeable(f1: FlowKey, f2: FlowKey) -> bool:
    """Whether two flows of one leaf may generalize into one key:
    equal dst ports, src ports equal or both reg/dyn, and domains (when
    present) equal or sharing a suffix of at least two labels."""
    if f1.dst_port != f2.dst_port:
        return False
    if f1.src_port != f2.src_port and (f1.src_port < 1024 or f2.src_port < 1024):
        return False
    if f1.remote.kind == DOMAIN:
        if f1.remote.value != f2.remote.value \
                and _domain_suffix(f1.remote.value, f2.remote.value) is None:
            return False
    return True


def _flow_sort_key(f: FlowKey):
    return (f.remote.kind, f.remote.value, f.src_port, f.dst_port, f.proto)


def _generalize(group: List[FlowKey]) -> ActivityKey:
    first = group[0]
    kind = first.remote.kind
    if kind == DOMAIN:
        names = {f.remote.value for f in group}
        if len(names) == 1:
            remote = RemotePattern(EXACT_DOMAIN, first.remote.value)
        else:
            names = sorted(names)
            suffix = names[0]
            for name in names[1:]:
                suffix = _domain_suffix(suffix, name)
            remote = RemotePattern(WILDCARD_DOMAIN, "." + suffix)
    elif kind == REMOTE_IP:
        remote = RemotePattern(REMOTE_IP_CLASS)
    elif kind == LOCAL_IP:
        remote = RemotePattern(LOCAL_IP_CLASS)
    else:
        remote = RemotePattern(BC_MC_CLASS)
    src_ports = {f.src_port for f in group}
    if len(src_ports) == 1:
        src = PortPattern(EXACT, first.src_port)
    else:
        src = PortPattern(REGDYN)  # all >= 1024 by the mergeable rule
    dst = PortPattern(EXACT, first.dst_port)
    return ActivityKey(first.proto, remote, src, dst,
                       tuple(sorted(group, key=_flow_sort_key)))


def merge_activities(leaf_entries: Dict[FlowKey, IncrementalStats],
                     cfg: MergeConfig) -> List[ActivityKey]:
    """Single-linkage agglomeration of one leaf's flows.

    Two flows join one activity when their size sets have Jaccard >= h_s
    and their keys are compatible under the generalization rules; groups
    chain transitively.  Each group becomes one abstract key; singletons
    become exact keys.
    """
    flows = sorted(leaf_entries, key=_flow_sort_key)
    parent = list(range(len(flows)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(flows)):
        for j in range(i + 1, len(flows)):
            if find(i) == find(j):
                continue
            if _mergeable(flows[i], flows[j]) and \
                    jaccard(leaf_entries[flows[i]].sizes,
                            leaf_entries[flows[j]].sizes) >= cfg.h_s:
                parent[find(j)] = find(i)

    groups: Dict[int, List[FlowKey]] = {}
    for i, f in enumerate(flows):
        groups.setdefault(find(i), []).append(f)
    return [_generalize(g) for _, g in sorted(groups.items())]


def _path_sort_key(path: TreePath):
    return (path.proto, path.addr_class,
            tuple(str(x) for x in path.src_bucket),
            tuple(str(x) for x in path.dst_bucket))


def build_profile(tree: ClusterTree, cfg: MergeConfig) -> ActivityProfile:
    """Merge every leaf and concatenate the resulting activity keys.

    Keys whose patterns coincide (possible across groups of one leaf)
    are collapsed into one, pooling their member flows.
    """
    if tree.total_packets == 0:
        raise EmptyTree("no packets inserted")
    merged: Dict[Tuple, ActivityKey] = {}
    for path in sorted(tree.leaves, key=_path_sort_key):
        for key in merge_activities(tree.leaves[path], cfg):
            ident = (key.proto, key.remote_pattern, key.src_port_pattern,
                     key.dst_port_pattern)
            if ident in merged:
                pooled = tuple(sorted(
                    set(merged[ident].member_flows) | set(key.member_flows),
                    key=_flow_sort_key))
                merged[ident] = ActivityKey(*ident, pooled)
            else:
                merged[ident] = key
    return ActivityProfile(tree.device_ip, list(merged.values()))


# --- serialization --------------------------------------------------------

def flow_key_to_dict(f: FlowKey) -> dict:
    return {"device_ip": f.device_ip,
            "remote": {"kind": f.remote.kind, "value": f.remote.value},
            "src_port": f.src_port, "dst_port": f.dst_port, "proto": f.proto}


def flow_key_from_dict(d: dict) -> FlowKey:
    return FlowKey(d["device_ip"],
                   Remote(d["remote"]["kind"], d["remote"]["value"]),
                   d["src_port"], d["dst_port"], d["proto"])


def activity_key_to_dict(k: ActivityKey) -> dict:
    return {
        "proto": k.proto,
        "remote_pattern": {"kind": k.remote_pattern.kind,
                           "value": k.remote_pattern.value},
        "src_port_pattern": {"kind": k.src_port_pattern.kind,
                             "port": k.src_port_pattern.port},
        "dst_port_pattern": {"kind": k.dst_port_pattern.kind,
                             "port": k.dst_port_pattern.port},
        "member_flows": [flow_key_to_dict(f) for f in k.member_flows],
    }


def activity_key_from_dict(d: dict) -> ActivityKey:
    return ActivityKey(
        d["proto"],
        RemotePattern(d["remote_pattern"]["kind"], d["remote_pattern"]["value"]),
        PortPattern(d["src_port_pattern"]["kind"], d["src_port_pattern"]["port"]),
        PortPattern(d["dst_port_pattern"]["kind"], d["dst_port_pattern"]["port"]),
        tuple(flow_key_from_dict(f) for f in d["member_flows"]),
    )


def profile_to_dict(profile: ActivityProfile) -> dict:
    return {"schema_version": PROFILE_SCHEMA_VERSION,
            "device_ip": profile.device_ip,
            "keys": [activity_key_to_dict(k) for k in profile.keys]}


def check_schema_version(doc: dict, expected: str, what: str) -> None:
    version = doc.get("schema_version")
    if version is None or version.split(".")[0] != expected.split(".")[0]:
        raise SchemaError(f"{what}: unsupported schema_version {version!r}")


def profile_from_dict(doc: dict) -> ActivityProfile:
    check_schema_version(doc, PROFILE_SCHEMA_VERSION, "profile")
    return ActivityProfile(doc["device_ip"],
                           [activity_key_from_dict(k) for k in doc["keys"]])


def save_profile(path, profile: ActivityProfile) -> None:
    with open(path, "w") as fh:
        json.dump(profile_to_dict(profile), fh, indent=2)
        fh.write("\n")


def load_profile(path) -> ActivityProfile:
    with open(path) as fh:
        return profile_from_dict(json.load(fh))
