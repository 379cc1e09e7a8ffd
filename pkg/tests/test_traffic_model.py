import json

import pytest
from hypothesis import given, strategies as st

from atrellis.errors import ForeignPacket, MalformedAddress, SchemaError
from atrellis.traffic_model import (BC_MC, DOMAIN, DYNAMIC, IN, LOCAL_IP,
                                    OUT, REGISTERED, REMOTE_IP, SYSTEM,
                                    PacketRecord, classify_address,
                                    classify_port, direction_of, flow_key_of,
                                    packet_from_dict, packet_to_dict,
                                    read_packets_jsonl, write_packets_jsonl)

DEVICE = "192.168.1.10"


def pkt(**kw):
    base = dict(ts=1.0, src_ip=DEVICE, dst_ip="8.8.8.8", src_port=50001,
                dst_port=53, proto="UDP", length=70)
    base.update(kw)
    return PacketRecord(**base)


class TestClassifyPort:
    def test_system(self):
        c = classify_port(22)
        assert c.kind == SYSTEM and c.port == 22

    def test_registered_keeps_port(self):
        c = classify_port(1900)
        assert c.kind == REGISTERED and c.port == 1900

    def test_dynamic_drops_port(self):
        c = classify_port(55000)
        assert c.kind == DYNAMIC and c.port is None

    @pytest.mark.parametrize("port,kind", [
        (0, SYSTEM), (1023, SYSTEM), (1024, REGISTERED),
        (49151, REGISTERED), (49152, DYNAMIC), (65535, DYNAMIC),
    ])
    def test_boundaries(self, port, kind):
        assert classify_port(port).kind == kind

    @given(st.integers(0, 65535))
    def test_total_partition(self, port):
        kind = classify_port(port).kind
        assert kind == (SYSTEM if port <= 1023
                        else REGISTERED if port <= 49151 else DYNAMIC)


class TestClassifyAddress:
    def test_multicast(self):
        assert classify_address("239.255.255.250", None, []).kind == BC_MC

    def test_resolved_domain(self):
        r = classify_address("129.6.15.28", "time.nist.gov", [])
        assert r.kind == DOMAIN and r.value == "time.nist.gov"

    def test_remote_ip(self):
        r = classify_address("203.0.113.5", None, ["192.168.1.0/24"])
        assert r.kind == REMOTE_IP

    def test_local_ip(self):
        r = classify_address("192.168.1.9", None, ["192.168.1.0/24"])
        assert r.kind == LOCAL_IP

    def test_subnet_broadcast(self):
        r = classify_address("192.168.1.255", None, ["192.168.1.0/24"])
        assert r.kind == BC_MC

    def test_multicast_outranks_domain(self):
        r = classify_address("239.255.255.250", "something.local", [])
        assert r.kind == BC_MC

    def test_dns_name_promotes_remote_ip(self):
        plain = classify_address("203.0.113.5", None, [])
        named = classify_address("203.0.113.5", "host.example.com", [])
        assert plain.kind == REMOTE_IP and named.kind == DOMAIN

    def test_domain_normalized(self):
        r = classify_address("203.0.113.5", "Host.Example.COM.", [])
        assert r.value == "host.example.com"

    def test_malformed(self):
        with pytest.raises(MalformedAddress):
            classify_address("not-an-ip", None, [])
        with pytest.raises(MalformedAddress):
            classify_address("2001:db8::1", None, [])


class TestFlowKey:
    def test_out_packet(self):
        key = flow_key_of(pkt(dns_name="dns.google"), DEVICE)
        assert key.device_ip == DEVICE
        assert key.remote.value == "dns.google"
        assert key.src_port == 50001 and key.dst_port == 53

    def test_reply_maps_to_same_key(self):
        out = pkt(dns_name="dns.google")
        reply = pkt(src_ip="8.8.8.8", dst_ip=DEVICE, src_port=53,
                    dst_port=50001, dns_name="dns.google")
        assert flow_key_of(out, DEVICE) == flow_key_of(reply, DEVICE)

    def test_foreign_packet(self):
        foreign = pkt(src_ip="10.1.1.1", dst_ip="10.2.2.2")
        with pytest.raises(ForeignPacket):
            flow_key_of(foreign, DEVICE)

    @given(st.integers(1024, 65535), st.integers(0, 1023),
           st.integers(1, 1500))
    def test_bidirectional_idempotence(self, sport, dport, length):
        a = pkt(src_port=sport, dst_port=dport, length=length)
        b = pkt(src_ip=a.dst_ip, dst_ip=a.src_ip, src_port=dport,
                dst_port=sport, length=length)
        assert flow_key_of(a, DEVICE) == flow_key_of(b, DEVICE)


class TestDirection:
    def test_out(self):
        assert direction_of(pkt(), DEVICE) == OUT

    def test_in(self):
        p = pkt(src_ip="8.8.8.8", dst_ip=DEVICE)
        assert direction_of(p, DEVICE) == IN

    def test_foreign(self):
        with pytest.raises(ForeignPacket):
            direction_of(pkt(), "10.9.9.9")


class TestPacketValidation:
    def test_rejects_zero_length(self):
        with pytest.raises(ValueError):
            pkt(length=0)

    def test_rejects_bad_port(self):
        with pytest.raises(ValueError):
            pkt(src_port=70000)

    def test_rejects_unknown_proto(self):
        with pytest.raises(ValueError):
            pkt(proto="ICMP")


class TestJsonLines:
    def test_round_trip(self, tmp_path):
        packets = [pkt(), pkt(ts=2.0, dns_name="dns.google", label="benign")]
        path = tmp_path / "trace.jsonl"
        write_packets_jsonl(path, packets)
        assert list(read_packets_jsonl(path)) == packets

    def test_strict_rejects_unknown_field(self):
        obj = packet_to_dict(pkt())
        obj["bogus"] = 1
        with pytest.raises(SchemaError):
            packet_from_dict(obj, strict=True)

    def test_lenient_ignores_unknown_field(self):
        obj = packet_to_dict(pkt())
        obj["bogus"] = 1
        assert packet_from_dict(obj, strict=False) == pkt()

    def test_missing_field(self):
        obj = packet_to_dict(pkt())
        del obj["proto"]
        with pytest.raises(SchemaError):
            packet_from_dict(obj)
