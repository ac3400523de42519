//! Link/network/transport header walk and the keep/drop policy.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::capture::{RawPacket, LINKTYPE_ETHERNET, LINKTYPE_RAW};

const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86DD;
const ETHERTYPE_ARP: u16 = 0x0806;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88A8;

const IPPROTO_ICMP: u8 = 1;
const IPPROTO_TCP: u8 = 6;
const IPPROTO_UDP: u8 = 17;
const IPPROTO_ICMPV6: u8 = 58;

/// Protocols the filter can be told to discard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Arp,
    Dhcpv4,
    Dhcpv6,
    Icmpv4,
    Icmpv6,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Arp => "arp",
            Protocol::Dhcpv4 => "dhcpv4",
            Protocol::Dhcpv6 => "dhcpv6",
            Protocol::Icmpv4 => "icmpv4",
            Protocol::Icmpv6 => "icmpv6",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterPolicy {
    pub dropped_protocols: BTreeSet<Protocol>,
    pub drop_non_ip: bool,
    pub zero_ip_addresses: bool,
    /// Keep TCP/UDP headers inside the vector; when false only the IP header
    /// and the transport payload are used.
    pub include_transport_header: bool,
    /// Keep TCP/UDP segments that carry no payload (pure ACKs and the like).
    pub keep_zero_payload: bool,
}

impl Default for FilterPolicy {
    fn default() -> Self {
        Self {
            dropped_protocols: [
                Protocol::Arp,
                Protocol::Dhcpv4,
                Protocol::Dhcpv6,
                Protocol::Icmpv4,
                Protocol::Icmpv6,
            ]
            .into_iter()
            .collect(),
            drop_non_ip: true,
            zero_ip_addresses: true,
            include_transport_header: true,
            keep_zero_payload: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Protocol(Protocol),
    NonIp,
    Malformed,
    UnsupportedLink,
    ZeroPayload,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::Protocol(p) => f.write_str(p.name()),
            DropReason::NonIp => f.write_str("non_ip"),
            DropReason::Malformed => f.write_str("malformed"),
            DropReason::UnsupportedLink => f.write_str("unsupported_link"),
            DropReason::ZeroPayload => f.write_str("zero_payload"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Keep,
    Drop(DropReason),
}

impl Decision {
    pub fn is_keep(self) -> bool {
        matches!(self, Decision::Keep)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Network {
    Ipv4,
    Ipv6,
    Arp,
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Transport {
    pub start: usize,
    pub header_len: usize,
    pub payload_len: usize,
}

/// Byte offsets of the layers found in one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layers {
    pub network: Network,
    /// Network-layer datagram is `bytes[net_start..net_end]`.
    pub net_start: usize,
    pub net_end: usize,
    pub transport: Option<Transport>,
    pub protocol: Option<Protocol>,
}

fn be16(b: &[u8], at: usize) -> Option<u16> {
    Some(u16::from_be_bytes([*b.get(at)?, *b.get(at + 1)?]))
}

pub(crate) fn parse_layers(pkt: &RawPacket) -> Result<Layers, DropReason> {
    let b = pkt.bytes.as_slice();
    let (network, net_start) = match pkt.link_type {
        LINKTYPE_ETHERNET => {
            let mut at = 12;
            let mut ethertype = be16(b, at).ok_or(DropReason::Malformed)?;
            while ethertype == ETHERTYPE_VLAN || ethertype == ETHERTYPE_QINQ {
                at += 4;
                ethertype = be16(b, at).ok_or(DropReason::Malformed)?;
            }
            let network = match ethertype {
                ETHERTYPE_IPV4 => Network::Ipv4,
                ETHERTYPE_IPV6 => Network::Ipv6,
                ETHERTYPE_ARP => Network::Arp,
                _ => Network::Other,
            };
            (network, at + 2)
        }
        LINKTYPE_RAW => match b.first().map(|v| v >> 4) {
            Some(4) => (Network::Ipv4, 0),
            Some(6) => (Network::Ipv6, 0),
            _ => return Err(DropReason::Malformed),
        },
        _ => return Err(DropReason::UnsupportedLink),
    };
    match network {
        Network::Ipv4 => parse_ipv4(b, net_start),
        Network::Ipv6 => parse_ipv6(b, net_start),
        Network::Arp => Ok(Layers {
            network,
            net_start,
            net_end: b.len(),
            transport: None,
            protocol: Some(Protocol::Arp),
        }),
        Network::Other => Ok(Layers {
            network,
            net_start,
            net_end: b.len(),
            transport: None,
            protocol: None,
        }),
    }
}

fn parse_ipv4(b: &[u8], start: usize) -> Result<Layers, DropReason> {
    let ip = b.get(start..).ok_or(DropReason::Malformed)?;
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return Err(DropReason::Malformed);
    }
    let ihl = usize::from(ip[0] & 0x0F) * 4;
    let total = usize::from(u16::from_be_bytes([ip[2], ip[3]]));
    if ihl < 20 || ihl > ip.len() || total < ihl {
        return Err(DropReason::Malformed);
    }
    // Ethernet pads short frames; snap length may cut long ones.
    let end = total.min(ip.len());
    let proto = ip[9];
    let frag_offset = u16::from_be_bytes([ip[6], ip[7]]) & 0x1FFF;
    let mut layers = Layers {
        network: Network::Ipv4,
        net_start: start,
        net_end: start + end,
        transport: None,
        protocol: None,
    };
    if proto == IPPROTO_ICMP {
        layers.protocol = Some(Protocol::Icmpv4);
        return Ok(layers);
    }
    if frag_offset == 0 {
        let (transport, ports) = parse_transport(proto, &ip[ihl..end], start + ihl)?;
        layers.transport = transport;
        if proto == IPPROTO_UDP {
            if let Some((src, dst)) = ports {
                if matches!(src, 67 | 68) || matches!(dst, 67 | 68) {
                    layers.protocol = Some(Protocol::Dhcpv4);
                }
            }
        }
    }
    Ok(layers)
}

fn parse_ipv6(b: &[u8], start: usize) -> Result<Layers, DropReason> {
    let ip = b.get(start..).ok_or(DropReason::Malformed)?;
    if ip.len() < 40 || ip[0] >> 4 != 6 {
        return Err(DropReason::Malformed);
    }
    let payload_len = usize::from(u16::from_be_bytes([ip[4], ip[5]]));
    let end = (40 + payload_len).min(ip.len());
    let mut next = ip[6];
    let mut at = 40;
    let mut fragmented_tail = false;
    // Walk extension headers up to the upper-layer protocol.
    loop {
        match next {
            0 | 43 | 60 => {
                let h = ip.get(at..at + 2).ok_or(DropReason::Malformed)?;
                next = h[0];
                at += (usize::from(h[1]) + 1) * 8;
            }
            44 => {
                let h = ip.get(at..at + 8).ok_or(DropReason::Malformed)?;
                next = h[0];
                fragmented_tail = u16::from_be_bytes([h[2], h[3]]) >> 3 != 0;
                at += 8;
            }
            51 => {
                let h = ip.get(at..at + 2).ok_or(DropReason::Malformed)?;
                next = h[0];
                at += (usize::from(h[1]) + 2) * 4;
            }
            _ => break,
        }
        if at > end {
            return Err(DropReason::Malformed);
        }
    }
    let mut layers = Layers {
        network: Network::Ipv6,
        net_start: start,
        net_end: start + end,
        transport: None,
        protocol: None,
    };
    if next == IPPROTO_ICMPV6 {
        layers.protocol = Some(Protocol::Icmpv6);
        return Ok(layers);
    }
    if !fragmented_tail {
        let (transport, ports) = parse_transport(next, &ip[at..end], start + at)?;
        layers.transport = transport;
        if next == IPPROTO_UDP {
            if let Some((src, dst)) = ports {
                if matches!(src, 546 | 547) || matches!(dst, 546 | 547) {
                    layers.protocol = Some(Protocol::Dhcpv6);
                }
            }
        }
    }
    Ok(layers)
}

type Ports = Option<(u16, u16)>;

fn parse_transport(proto: u8, seg: &[u8], start: usize) -> Result<(Option<Transport>, Ports), DropReason> {
    match proto {
        IPPROTO_TCP => {
            if seg.len() < 20 {
                return Err(DropReason::Malformed);
            }
            let hl = usize::from(seg[12] >> 4) * 4;
            if hl < 20 || hl > seg.len() {
                return Err(DropReason::Malformed);
            }
            let ports = (u16::from_be_bytes([seg[0], seg[1]]), u16::from_be_bytes([seg[2], seg[3]]));
            Ok((
                Some(Transport {
                    start,
                    header_len: hl,
                    payload_len: seg.len() - hl,
                }),
                Some(ports),
            ))
        }
        IPPROTO_UDP => {
            if seg.len() < 8 {
                return Err(DropReason::Malformed);
            }
            let ports = (u16::from_be_bytes([seg[0], seg[1]]), u16::from_be_bytes([seg[2], seg[3]]));
            Ok((
                Some(Transport {
                    start,
                    header_len: 8,
                    payload_len: seg.len() - 8,
                }),
                Some(ports),
            ))
        }
        _ => Ok((None, None)),
    }
}

/// Decides whether a packet enters the dataset. Total over arbitrary bytes.
pub fn filter_packet(pkt: &RawPacket, policy: &FilterPolicy) -> Decision {
    match parse_layers(pkt) {
        Ok(layers) => decide(&layers, policy),
        Err(reason) => Decision::Drop(reason),
    }
}

pub(crate) fn decide(layers: &Layers, policy: &FilterPolicy) -> Decision {
    if let Some(p) = layers.protocol {
        if policy.dropped_protocols.contains(&p) {
            return Decision::Drop(DropReason::Protocol(p));
        }
    }
    let is_ip = matches!(layers.network, Network::Ipv4 | Network::Ipv6);
    if !is_ip && policy.drop_non_ip {
        return Decision::Drop(DropReason::NonIp);
    }
    if !policy.keep_zero_payload {
        if let Some(t) = layers.transport {
            if t.payload_len == 0 {
                return Decision::Drop(DropReason::ZeroPayload);
            }
        }
    }
    Decision::Keep
}
