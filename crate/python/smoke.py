"""Smoke test for the lightint Python module.

Build the extension first, e.g. `maturin develop -m crates/py/Cargo.toml`,
or copy target/release/liblightint.so to lightint.so on PYTHONPATH.
"""

import json
import math
import os

import lightint

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def check_wire():
    assert lightint.overhead_bytes("DLINT", 5, 3) == 12
    assert lightint.overhead_bytes("PLINT", 5, 3) == 16
    assert lightint.overhead_bytes("P4INT", 5, 1) == 36
    assert lightint.overhead_bytes("PINT_LITE", 5, 3) == 4

    header = lightint.decode_header(bytes.fromhex("400000000703"), "PLINT", 1)
    assert header == {"scheme": "PLINT", "init_ttl": 64, "slots": [(7, 3)]}, header
    assert lightint.encode_header(header).hex() == "400000000703"

    dlint = {"scheme": "DLINT", "slots": [0xFFFFFFFE, 5]}
    raw = lightint.encode_header(dlint)
    assert lightint.decode_header(raw, "DLINT", 2) == dlint
    try:
        lightint.decode_header(bytes.fromhex("fffffff5"), "DLINT", 1)
    except ValueError:
        pass
    else:
        raise AssertionError("unassigned code decoded")


def check_oracles():
    assert abs(lightint.coupon_collector(5) - 5 * (1 + 1 / 2 + 1 / 3 + 1 / 4 + 1 / 5)) < 1e-9
    assert lightint.duplicate_fraction(10, 1) < 1e-12
    fp = lightint.bf_false_positive_rate(1000, 100, 2)
    assert abs(fp - (1 - math.exp(-2 * 100 / 1000)) ** 2) < 1e-3
    assert abs(lightint.bf_optimal_hash_count(1000, 100) - 10 * math.log(2)) < 1e-9


def check_bloom():
    store = lightint.BloomStateStore(1024, [1, 2])
    flow = (0x0A000001, 0x0A000002, 1234, 80, 6)
    assert store.lookup(flow) == "AWAITING_INIT"
    store.update(flow, "INSERTED_ID")
    assert store.lookup(flow) == "INSERTED_ID"
    assert len(store.indices(flow)) == 2
    assert store.cells == 1024


def check_topology():
    topo = lightint.Topology([(1, 2, 0.001), (2, 3, 0.001), (1, 3, 0.005)])
    assert topo.route(1, 3) == [1, 2, 3]
    assert topo.node_count() == 3


def check_run():
    config = {
        "seed": 1,
        "duration": 5.0,
        "scheme": "DLINT",
        "v": 2,
        "topology": {"edges": [[1, 2, 0.0002], [2, 3, 0.0002], [3, 4, 0.0002]]},
        "flows": [{"src": 1, "dst": 4, "size_packets": 500, "inter_packet_gap": 0.005}],
    }
    row = lightint.run_scenario(json.dumps(config))
    assert row["scheme"] == "DLINT" and row["v"] == 2
    assert row["packets_delivered"] == 500
    assert row["complete_traces"] > 0
    assert row["ids_per_trace"] is not None

    with open(os.path.join(ROOT, "scenarios", "btn27_update.json")) as f:
        text = f.read()
    row = lightint.run_scenario(text, os.path.join(ROOT, "scenarios"))
    assert row["updates_eligible"] >= 0
    print("btn27 DLINT:", {k: row[k] for k in ("complete_traces", "update_detection_rate")})


if __name__ == "__main__":
    check_wire()
    check_oracles()
    check_bloom()
    check_topology()
    check_run()
    print("smoke: ok")
