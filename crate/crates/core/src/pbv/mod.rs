//! Packet capture to Packet Byte Vector conversion.
//!
//! A Packet Byte Vector (PBV) is the fixed-length model input: the
//! network-layer datagram of one packet with the link header stripped,
//! optionally address-scrubbed, truncated or zero-padded to
//! [`PBV_LEN`] octets, and mapped octet-wise onto `[-1, 1]`.

mod build;
pub mod capture;
mod filter;
pub mod frames;

pub use build::{build_dataset, build_dataset_with, ClassCounts, BuildSummary, InputSummary, Manifest, ManifestEntry, ReasonCounts};
pub use capture::{read_capture, CaptureReader, CaptureWriter, RawPacket, Timestamp, LINKTYPE_ETHERNET, LINKTYPE_RAW};
pub use filter::{filter_packet, Decision, DropReason, FilterPolicy, Protocol};

use crate::error::{Error, Result};
use filter::{parse_layers, Network};

pub const PBV_LEN: usize = 1480;

/// Maps an octet onto `[-1, 1]` as `b / 127.5 - 1`.
#[inline]
pub fn normalize_octet(b: u8) -> f32 {
    f32::from(b) / 127.5 - 1.0
}

/// Inverse of [`normalize_octet`], rounding to the nearest octet.
#[inline]
pub fn denormalize(v: f32) -> u8 {
    ((v + 1.0) * 127.5).round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct PacketByteVector {
    values: Vec<f32>,
}

impl PacketByteVector {
    pub fn from_octets(octets: &[u8; PBV_LEN]) -> Self {
        Self {
            values: octets.iter().map(|&b| normalize_octet(b)).collect(),
        }
    }

    /// Accepts only values that are exact images of some octet.
    pub fn from_values(values: Vec<f32>) -> Result<Self> {
        if values.len() != PBV_LEN {
            return Err(Error::Contract(format!(
                "packet byte vector needs {PBV_LEN} values, got {}",
                values.len()
            )));
        }
        if let Some((i, v)) = values
            .iter()
            .enumerate()
            .find(|(_, &v)| !(-1.0..=1.0).contains(&v) || normalize_octet(denormalize(v)) != v)
        {
            return Err(Error::Contract(format!("value {v} at {i} is not a normalized octet")));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn octets(&self) -> [u8; PBV_LEN] {
        let mut out = [0u8; PBV_LEN];
        for (o, &v) in out.iter_mut().zip(&self.values) {
            *o = denormalize(v);
        }
        out
    }
}

/// The raw (pre-normalization) octets of a kept packet's vector.
pub fn pbv_octets(pkt: &RawPacket, policy: &FilterPolicy) -> Result<[u8; PBV_LEN]> {
    let layers = parse_layers(pkt)
        .map_err(|r| Error::Contract(format!("packet cannot be converted: {r}")))?;
    let datagram = &pkt.bytes[layers.net_start..layers.net_end];
    let mut buf: Vec<u8> = match layers.transport {
        Some(t) if !policy.include_transport_header => {
            let hdr_start = t.start - layers.net_start;
            let mut v = datagram[..hdr_start].to_vec();
            v.extend_from_slice(&datagram[hdr_start + t.header_len..]);
            v
        }
        _ => datagram[..datagram.len().min(PBV_LEN)].to_vec(),
    };
    if policy.zero_ip_addresses {
        let span = match layers.network {
            Network::Ipv4 => Some(12..20),
            Network::Ipv6 => Some(8..40),
            _ => None,
        };
        if let Some(span) = span {
            let end = span.end.min(buf.len());
            if span.start < end {
                buf[span.start..end].fill(0);
            }
        }
    }
    let mut out = [0u8; PBV_LEN];
    let n = buf.len().min(PBV_LEN);
    out[..n].copy_from_slice(&buf[..n]);
    Ok(out)
}

/// Converts a packet the filter kept into its normalized vector.
pub fn to_pbv(pkt: &RawPacket, policy: &FilterPolicy) -> Result<PacketByteVector> {
    pbv_octets(pkt, policy).map(|o| PacketByteVector::from_octets(&o))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::Ipv4Addr;

    fn raw(link_type: u32, bytes: Vec<u8>) -> RawPacket {
        RawPacket {
            link_type,
            timestamp: Timestamp { secs: 0, nanos: 0 },
            orig_len: bytes.len() as u32,
            bytes,
        }
    }

    fn a() -> Ipv4Addr {
        Ipv4Addr::new(10, 1, 2, 3)
    }
    fn b() -> Ipv4Addr {
        Ipv4Addr::new(192, 168, 7, 9)
    }

    #[test]
    fn octet_round_trip_is_exact() {
        for o in 0..=255u8 {
            let v = normalize_octet(o);
            assert!((-1.0..=1.0).contains(&v));
            assert_eq!(denormalize(v), o);
        }
        assert_eq!(normalize_octet(0), -1.0);
        assert_eq!(normalize_octet(255), 1.0);
    }

    #[test]
    fn default_policy_drops_the_listed_protocols() {
        let p = FilterPolicy::default();
        let cases = [
            (frames::arp_request(a(), b()), DropReason::Protocol(Protocol::Arp)),
            (frames::icmpv4_echo(a(), b()), DropReason::Protocol(Protocol::Icmpv4)),
            (frames::dhcpv4_discover(), DropReason::Protocol(Protocol::Dhcpv4)),
            (frames::dhcpv6_solicit(), DropReason::Protocol(Protocol::Dhcpv6)),
            (frames::icmpv6_echo(), DropReason::Protocol(Protocol::Icmpv6)),
            (frames::ethernet(0x88CC, &[0; 40]), DropReason::NonIp),
        ];
        for (frame, want) in cases {
            assert_eq!(filter_packet(&raw(LINKTYPE_ETHERNET, frame), &p), Decision::Drop(want));
        }
    }

    #[test]
    fn tls_over_tcp_is_kept() {
        let f = frames::tcp_ipv4_frame(a(), b(), 50000, 443, &frames::tls_record(&[0xAA; 300]));
        assert_eq!(filter_packet(&raw(LINKTYPE_ETHERNET, f), &FilterPolicy::default()), Decision::Keep);
    }

    #[test]
    fn arp_falls_back_to_non_ip_when_not_listed() {
        let mut p = FilterPolicy::default();
        p.dropped_protocols.remove(&Protocol::Arp);
        let pkt = raw(LINKTYPE_ETHERNET, frames::arp_request(a(), b()));
        assert_eq!(filter_packet(&pkt, &p), Decision::Drop(DropReason::NonIp));
        p.drop_non_ip = false;
        assert_eq!(filter_packet(&pkt, &p), Decision::Keep);
    }

    #[test]
    fn zero_payload_switch() {
        let f = frames::tcp_ipv4_frame(a(), b(), 1, 2, &[]);
        let pkt = raw(LINKTYPE_ETHERNET, f);
        let mut p = FilterPolicy::default();
        assert!(filter_packet(&pkt, &p).is_keep());
        p.keep_zero_payload = false;
        assert_eq!(filter_packet(&pkt, &p), Decision::Drop(DropReason::ZeroPayload));
    }

    #[test]
    fn malformed_and_unknown_links_are_dropped() {
        let p = FilterPolicy::default();
        assert_eq!(filter_packet(&raw(LINKTYPE_ETHERNET, vec![0; 5]), &p), Decision::Drop(DropReason::Malformed));
        assert_eq!(filter_packet(&raw(LINKTYPE_RAW, vec![0x45, 0, 0]), &p), Decision::Drop(DropReason::Malformed));
        assert_eq!(filter_packet(&raw(147, vec![0; 64]), &p), Decision::Drop(DropReason::UnsupportedLink));
    }

    #[test]
    fn all_zero_datagram_maps_to_minus_one() {
        let pkt = raw(LINKTYPE_ETHERNET, frames::ethernet(0x9000, &[0u8; 1480]));
        let mut p = FilterPolicy::default();
        p.drop_non_ip = false;
        let v = to_pbv(&pkt, &p).unwrap();
        assert_eq!(v.values().len(), PBV_LEN);
        assert!(v.values().iter().all(|&x| x == -1.0));
    }

    #[test]
    fn short_datagram_is_zero_padded() {
        let d = frames::ipv4(a(), b(), 253, 64, &[0xFF; 80]);
        assert_eq!(d.len(), 100);
        let pkt = raw(LINKTYPE_RAW, d);
        let v = to_pbv(&pkt, &FilterPolicy::default()).unwrap();
        assert!(v.values()[20..100].iter().all(|&x| x == 1.0));
        assert!(v.values()[100..].iter().all(|&x| x == -1.0));
        assert_eq!(v.values()[0], normalize_octet(0x45));
    }

    #[test]
    fn leading_ff_maps_to_plus_one() {
        let pkt = raw(LINKTYPE_ETHERNET, frames::ethernet(0x1234, &[0xFF; 10]));
        let mut p = FilterPolicy::default();
        p.drop_non_ip = false;
        assert_eq!(to_pbv(&pkt, &p).unwrap().values()[0], 1.0);
    }

    #[test]
    fn addresses_are_zeroed_and_ethernet_padding_ignored() {
        let f = frames::tcp_ipv4_frame(a(), b(), 1234, 443, &[7; 4]);
        assert_eq!(f.len(), 60); // padded frame, datagram is 44 bytes
        let pkt = raw(LINKTYPE_ETHERNET, f);
        let o = pbv_octets(&pkt, &FilterPolicy::default()).unwrap();
        assert!(o[12..20].iter().all(|&x| x == 0));
        assert_eq!(&o[40..44], &[7; 4]);
        assert!(o[44..].iter().all(|&x| x == 0));

        let mut keep = FilterPolicy::default();
        keep.zero_ip_addresses = false;
        let o = pbv_octets(&pkt, &keep).unwrap();
        assert_eq!(&o[12..16], &a().octets());
    }

    #[test]
    fn transport_header_can_be_excluded() {
        let f = frames::tcp_ipv4_frame(a(), b(), 1234, 443, &[7; 4]);
        let mut p = FilterPolicy::default();
        p.include_transport_header = false;
        let o = pbv_octets(&raw(LINKTYPE_ETHERNET, f), &p).unwrap();
        assert_eq!(&o[20..24], &[7; 4]);
        assert_eq!(o[24], 0);
    }

    #[test]
    fn long_datagram_is_truncated() {
        let d = frames::ipv4(a(), b(), 253, 64, &[0x80; 2000]);
        let v = pbv_octets(&raw(LINKTYPE_RAW, d), &FilterPolicy::default()).unwrap();
        assert!(v[20..].iter().all(|&x| x == 0x80));
    }

    #[test]
    fn from_values_rejects_off_grid_values() {
        assert!(PacketByteVector::from_values(vec![0.0; PBV_LEN]).is_err());
        assert!(PacketByteVector::from_values(vec![-1.0; 10]).is_err());
        let ok = PacketByteVector::from_values(vec![normalize_octet(3); PBV_LEN]).unwrap();
        assert_eq!(ok.octets()[0], 3);
    }
}
