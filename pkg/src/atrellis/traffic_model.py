"""Canonical domain types for packets, bidirectional flows, and the
address/port classification rules that drive flow clustering.

A flow is identified by a canonical bidirectional 5-tuple oriented from the
monitored device's side: (device IP, remote domain-or-IP, device port, remote
port, protocol).  Request and reply packets map to the same key.
"""

from __future__ import annotations

import functools
import ipaddress
import json
import logging
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence

from .errors import ForeignPacket, MalformedAddress, SchemaError

log = logging.getLogger("atrellis")

TCP = "TCP"
UDP = "UDP"
PROTOCOLS = (TCP, UDP)

# direction of a packet relative to the monitored device
OUT = "out"
IN = "in"

# IANA port ranges
SYSTEM = "system"        # 0..1023
REGISTERED = "registered"  # 1024..49151
DYNAMIC = "dynamic"      # 49152..65535

# address classes for the remote endpoint
DOMAIN = "domain"
REMOTE_IP = "remote_ip"
LOCAL_IP = "local_ip"
BC_MC = "bc_mc"

PACKET_FIELDS = frozenset(
    {"ts", "src_ip", "dst_ip", "src_port", "dst_port", "proto", "length",
     "dns_name", "label"}
)


def normalize_domain(name: str) -> str:
    """Lowercase and strip a trailing dot."""
    return name.lower().rstrip(".")


@dataclass(frozen=True)
class PacketRecord:
    """One observed packet.

    ``dns_name`` is the pre-resolved domain of the *remote* endpoint, when
    known.  ``label`` is present only in simulator output ("benign" or
    "attack:<kind>").
    """

    ts: float
    src_ip: str
    dst_ip: str
    src_port: int
    dst_port: int
    proto: str
    length: int
    dns_name: Optional[str] = None
    label: Optional[str] = None

    def __post_init__(self):
        if self.ts < 0:
            raise ValueError(f"negative timestamp: {self.ts}")
        if not 1 <= self.length <= 65535:
            raise ValueError(f"bad packet length: {self.length}")
        for p in (self.src_port, self.dst_port):
            if not 0 <= p <= 65535:
                raise ValueError(f"port out of range: {p}")
        if self.proto not in PROTOCOLS:
            raise ValueError(f"unknown protocol: {self.proto!r}")
        if self.dns_name is not None:
            object.__setattr__(self, "dns_name", normalize_domain(self.dns_name))


@dataclass(frozen=True)
class PortClass:
    """IANA range of a port.  System and Registered retain the concrete
    port; Dynamic does not."""

    kind: str
    port: Optional[int] = None


@dataclass(frozen=True)
class Remote:
    """Classified remote endpoint: the address class plus its concrete
    value (the domain name for DOMAIN, the IP text otherwise)."""

    kind: str
    value: str


@dataclass(frozen=True)
class FlowKey:
    """Canonical bidirectional 5-tuple, always oriented from the device."""

    device_ip: str
    remote: Remote
    src_port: int
    dst_port: int
    proto: str


@functools.lru_cache(maxsize=65536)
def _parse_ipv4(text: str) -> ipaddress.IPv4Address:
    try:
        return ipaddress.IPv4Address(text)
    except (ipaddress.AddressValueError, ValueError) as exc:
        raise MalformedAddress(f"not an IPv4 address: {text!r}") from exc


@functools.lru_cache(maxsize=256)
def _parse_prefixes(prefixes: tuple) -> tuple:
    return tuple(ipaddress.IPv4Network(p) for p in prefixes)


def classify_port(port: int, role: str = "dst") -> PortClass:
    """Classify a port into its IANA range.

    The logic is identical for src and dst roles; ``role`` exists only so
    callers can record which side they classified.
    """
    if not 0 <= port <= 65535:
        raise ValueError(f"port out of range: {port}")
    if port <= 1023:
        return PortClass(SYSTEM, port)
    if port <= 49151:
        return PortClass(REGISTERED, port)
    return PortClass(DYNAMIC)


def classify_address(dst_ip: str, dns_name: Optional[str],
                     local_prefixes: Sequence[str]) -> Remote:
    """Classify a remote endpoint.

    Precedence: broadcast/multicast > resolved domain > local IP > remote IP.
    Multicast outranks a resolved name so that mDNS/SSDP replies carrying
    names for multicast groups stay in the bc/mc class.
    """
    return _classify_address(dst_ip, dns_name, tuple(local_prefixes))


@functools.lru_cache(maxsize=65536)
def _classify_address(dst_ip, dns_name, local_prefixes) -> Remote:
    addr = _parse_ipv4(dst_ip)
    networks = _parse_prefixes(tuple(local_prefixes))
    if addr.is_multicast or addr == ipaddress.IPv4Address("255.255.255.255") \
            or any(addr == net.broadcast_address for net in networks):
        return Remote(BC_MC, dst_ip)
    if dns_name:
        return Remote(DOMAIN, normalize_domain(dns_name))
    if any(addr in net for net in networks):
        return Remote(LOCAL_IP, dst_ip)
    return Remote(REMOTE_IP, dst_ip)


def direction_of(pkt: PacketRecord, device_ip: str) -> str:
    """OUT iff the device is the packet's source."""
    if pkt.src_ip == device_ip:
        return OUT
    if pkt.dst_ip == device_ip:
        return IN
    raise ForeignPacket(f"device {device_ip} is neither endpoint of "
                        f"{pkt.src_ip}->{pkt.dst_ip}")


def flow_key_of(pkt: PacketRecord, device_ip: str,
                local_prefixes: Sequence[str] = ()) -> FlowKey:
    """Canonical bidirectional flow key; request and reply packets map to
    the same key."""
    d = direction_of(pkt, device_ip)
    if d == OUT:
        remote_ip, sport, dport = pkt.dst_ip, pkt.src_port, pkt.dst_port
    else:
        remote_ip, sport, dport = pkt.src_ip, pkt.dst_port, pkt.src_port
    remote = classify_address(remote_ip, pkt.dns_name, local_prefixes)
    return FlowKey(device_ip, remote, sport, dport, pkt.proto)


def flows_of_trace(packets: Iterable[PacketRecord], device_ip: str,
                   local_prefixes: Sequence[str] = ()):
    """Group a time-ordered trace into flows.

    Returns ``(keys, table)`` where ``table`` maps each flow key to its
    time-ordered packets and ``keys`` lists the flow keys ordered by
    first-packet timestamp.
    """
    table: dict = {}
    keys: list = []
    for pkt in packets:
        key = flow_key_of(pkt, device_ip, local_prefixes)
        if key not in table:
            table[key] = []
            keys.append(key)
        table[key].append(pkt)
    return keys, table


# --- JSON-lines packet format -------------------------------------------

def packet_to_dict(pkt: PacketRecord) -> dict:
    d = {
        "ts": pkt.ts,
        "src_ip": pkt.src_ip,
        "dst_ip": pkt.dst_ip,
        "src_port": pkt.src_port,
        "dst_port": pkt.dst_port,
        "proto": pkt.proto,
        "length": pkt.length,
    }
    if pkt.dns_name is not None:
        d["dns_name"] = pkt.dns_name
    if pkt.label is not None:
        d["label"] = pkt.label
    return d


def packet_from_dict(obj: dict, strict: bool = False) -> PacketRecord:
    unknown = set(obj) - PACKET_FIELDS
    if unknown:
        if strict:
            raise SchemaError(f"unknown packet fields: {sorted(unknown)}")
        log.warning("ignoring unknown packet fields: %s", sorted(unknown))
    missing = PACKET_FIELDS - {"dns_name", "label"} - set(obj)
    if missing:
        raise SchemaError(f"missing packet fields: {sorted(missing)}")
    return PacketRecord(
        ts=float(obj["ts"]),
        src_ip=str(obj["src_ip"]),
        dst_ip=str(obj["dst_ip"]),
        src_port=int(obj["src_port"]),
        dst_port=int(obj["dst_port"]),
        proto=str(obj["proto"]),
        length=int(obj["length"]),
        dns_name=obj.get("dns_name"),
        label=obj.get("label"),
    )


def write_packets_jsonl(path, packets: Iterable[PacketRecord]) -> None:
    with open(path, "w") as fh:
        for pkt in packets:
            fh.write(json.dumps(packet_to_dict(pkt)) + "\n")


def read_packets_jsonl(path, strict: bool = False) -> Iterator[PacketRecord]:
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield packet_from_dict(json.loads(line), strict=strict)
