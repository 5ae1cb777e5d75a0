use std::collections::HashMap;

use lightint_core::wire::{
    decode_header, encode_header, DlintHeader, P4IntHeader, PintLiteHeader, PlintHeader, PlintSlot, Scheme,
    SlotValue, SwitchId, TelemetryHeader, WireError,
};

struct Vector {
    label: String,
    scheme: Scheme,
    v: usize,
    bytes: Vec<u8>,
    outcome: String,
}

fn hex(s: &str) -> Vec<u8> {
    assert!(s.len() % 2 == 0, "odd hex length: {s}");
    (0..s.len()).step_by(2).map(|i| u8::from_str_radix(&s[i..i + 2], 16).unwrap()).collect()
}

fn vectors() -> Vec<Vector> {
    let text = include_str!("fixtures/wire_vectors.txt");
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|line| {
            let f: Vec<&str> = line.split_whitespace().collect();
            let (label, scheme, v, outcome) = (f[0], f[1], f[2], f[f.len() - 1]);
            // Hex may be split into several whitespace-separated chunks.
            let digits: String = f[3..f.len() - 1].concat();
            Vector {
                label: label.to_string(),
                scheme: scheme.parse().unwrap(),
                v: v.parse().unwrap(),
                bytes: hex(&digits),
                outcome: outcome.to_string(),
            }
        })
        .collect()
}

fn sid(raw: u32) -> SwitchId {
    SwitchId::new(raw).unwrap()
}

fn expected() -> HashMap<&'static str, TelemetryHeader> {
    let p4 = |v: u8, stack: Vec<u32>| TelemetryHeader::P4Int(P4IntHeader { stack, ..P4IntHeader::new(v) });
    HashMap::from([
        ("dlint_init", TelemetryHeader::Dlint(DlintHeader { slots: vec![SlotValue::INIT] })),
        ("dlint_id_empty", TelemetryHeader::Dlint(DlintHeader { slots: vec![SlotValue(5), SlotValue::EMPTY] })),
        (
            "dlint_signals",
            TelemetryHeader::Dlint(DlintHeader { slots: vec![SlotValue::RESET, SlotValue::INIT, SlotValue(3)] }),
        ),
        ("dlint_probe", TelemetryHeader::Dlint(DlintHeader { slots: vec![SlotValue::PROBE] })),
        ("dlint_max_id", TelemetryHeader::Dlint(DlintHeader { slots: vec![SlotValue(0xFFFF_FFF0)] })),
        (
            "plint_one",
            TelemetryHeader::Plint(PlintHeader { init_ttl: 64, slots: vec![PlintSlot { sw_id: sid(7), hop_num: 3 }] }),
        ),
        (
            "plint_two",
            TelemetryHeader::Plint(PlintHeader {
                init_ttl: 64,
                slots: vec![PlintSlot { sw_id: sid(1), hop_num: 1 }, PlintSlot { sw_id: sid(258), hop_num: 2 }],
            }),
        ),
        ("p4int_two_hops", p4(1, vec![1, 2])),
        ("p4int_v2", p4(2, vec![9, 0])),
        ("pint_lite", TelemetryHeader::PintLite(PintLiteHeader { sw_id: sid(42) })),
    ])
}

fn outcome_of(err: &WireError) -> &'static str {
    match err {
        WireError::MalformedSlot { .. } => "malformed_slot",
        WireError::TruncatedHeader { .. } => "truncated",
        WireError::TrailingBytes { .. } => "trailing",
        WireError::MalformedMeta(_) => "malformed_meta",
        WireError::ZeroValueCount => "zero_value_count",
        WireError::InvalidSwitchId(_) => "invalid_switch_id",
        WireError::InvariantViolation(_) => "invariant",
    }
}

#[test]
fn golden_vectors_decode_as_recorded() {
    let expected = expected();
    let vectors = vectors();
    assert_eq!(vectors.len(), 21);
    for vec in &vectors {
        match decode_header(&vec.bytes, vec.scheme, vec.v) {
            Ok(header) => {
                assert_eq!(vec.outcome, "ok", "{}: decoded unexpectedly", vec.label);
                assert_eq!(Some(&header), expected.get(vec.label.as_str()), "{}", vec.label);
                assert_eq!(encode_header(&header).unwrap(), vec.bytes, "{}: re-encoding", vec.label);
            }
            Err(e) => assert_eq!(outcome_of(&e), vec.outcome, "{}: {e}", vec.label),
        }
    }
}

#[test]
fn every_expected_header_has_a_vector() {
    let labels: Vec<String> = vectors().into_iter().filter(|v| v.outcome == "ok").map(|v| v.label).collect();
    for label in expected().keys() {
        assert!(labels.iter().any(|l| l == label), "{label} missing from fixtures");
    }
}
