//! Builds tagged Ethernet/IPv4/UDP test and traffic frames.

use crate::types::{VlanTag, TPID_8021Q};

/// Bytes before the payload: Ethernet 14, 802.1Q 4, IPv4 20, UDP 8.
pub const HEADER_BYTES: usize = 46;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameTemplate {
    pub dst_mac: [u8; 6],
    pub src_mac: [u8; 6],
    pub vlan: VlanTag,
    pub src_ip: u32,
    pub dst_ip: u32,
    pub sport: u16,
    pub dport: u16,
    pub ttl: u8,
}

impl FrameTemplate {
    pub fn new(vid: u16) -> Self {
        Self {
            dst_mac: [0x02, 0, 0, 0, 0, 0x02],
            src_mac: [0x02, 0, 0, 0, 0, 0x01],
            vlan: VlanTag::new(vid),
            src_ip: 0x0a00_0001,
            dst_ip: 0x0a00_0002,
            sport: 4000,
            dport: 5000,
            ttl: 64,
        }
    }

    /// Frame of exactly `len` bytes (clamped to the header size). Payload
    /// bytes follow a pattern keyed by `salt`.
    pub fn build(&self, len: usize, salt: u64) -> Vec<u8> {
        let len = len.max(HEADER_BYTES);
        let mut f = Vec::with_capacity(len);
        f.extend_from_slice(&self.dst_mac);
        f.extend_from_slice(&self.src_mac);
        f.extend_from_slice(&TPID_8021Q.to_be_bytes());
        f.extend_from_slice(&self.vlan.tci().to_be_bytes());
        f.extend_from_slice(&0x0800u16.to_be_bytes());
        let ip_len = (len - 18) as u16;
        f.extend_from_slice(&[0x45, 0]);
        f.extend_from_slice(&ip_len.to_be_bytes());
        f.extend_from_slice(&[0, 0, 0, 0, self.ttl, 17, 0, 0]);
        f.extend_from_slice(&self.src_ip.to_be_bytes());
        f.extend_from_slice(&self.dst_ip.to_be_bytes());
        f.extend_from_slice(&self.sport.to_be_bytes());
        f.extend_from_slice(&self.dport.to_be_bytes());
        f.extend_from_slice(&((len - 38) as u16).to_be_bytes());
        f.extend_from_slice(&[0, 0]);
        let mut x = salt.wrapping_mul(0x9e37_79b9_7f4a_7c15) | 1;
        f.extend((HEADER_BYTES..len).map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            x as u8
        }));
        f
    }
}

pub fn mac_from_u64(v: u64) -> [u8; 6] {
    let b = v.to_be_bytes();
    [b[2], b[3], b[4], b[5], b[6], b[7]]
}

pub fn mac_to_u64(m: &[u8; 6]) -> u64 {
    m.iter().fold(0, |a, b| (a << 8) | *b as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::parse_vlan;

    #[test]
    fn layout() {
        let f = FrameTemplate::new(42).build(64, 7);
        assert_eq!(f.len(), 64);
        assert_eq!(parse_vlan(&f).unwrap().vid, 42);
        assert_eq!(&f[16..18], &[0x08, 0x00]);
        assert_eq!(u16::from_be_bytes([f[20], f[21]]), 46);
        assert_eq!(u16::from_be_bytes([f[42], f[43]]), 26);
        assert_eq!(f, FrameTemplate::new(42).build(64, 7));
    }
}
