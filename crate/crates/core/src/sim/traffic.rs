//! Seeded packet generators, one per traffic profile.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::frame::FrameTemplate;
use crate::types::{wire_bits, LaneId, Packet, Picos, Rate, MAX_FRAME, MIN_FRAME};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeDist {
    Fixed(usize),
    /// Inclusive bounds.
    Uniform(usize, usize),
    /// 7:4:1 mix of 64, 594 and 1518 bytes.
    Imix,
}

impl Default for SizeDist {
    fn default() -> Self {
        SizeDist::Fixed(1518)
    }
}

impl SizeDist {
    pub fn bounds(&self) -> (usize, usize) {
        match *self {
            SizeDist::Fixed(n) => (n, n),
            SizeDist::Uniform(a, b) => (a, b),
            SizeDist::Imix => (64, 1518),
        }
    }

    pub fn is_valid(&self) -> bool {
        let (a, b) = self.bounds();
        a <= b && a >= MIN_FRAME && b <= MAX_FRAME
    }

    /// Mean wire bits per packet.
    pub fn mean_wire_bits(&self) -> f64 {
        match *self {
            SizeDist::Fixed(n) => wire_bits(n) as f64,
            SizeDist::Uniform(a, b) => (wire_bits(a) + wire_bits(b)) as f64 / 2.0,
            SizeDist::Imix => (7 * wire_bits(64) + 4 * wire_bits(594) + wire_bits(1518)) as f64 / 12.0,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        match *self {
            SizeDist::Fixed(n) => n,
            SizeDist::Uniform(a, b) => rng.gen_range(a..=b),
            SizeDist::Imix => match rng.gen_range(0..12) {
                0..=6 => 64,
                7..=10 => 594,
                _ => 1518,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arrivals {
    /// Back-to-back at the offered rate.
    #[default]
    Constant,
    /// Exponential gaps with the offered rate as mean.
    Poisson,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    #[default]
    RoundRobin,
    Random,
}

/// Offered load on one lane, spread over one frame template per VID.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficProfile {
    pub lane: u8,
    pub flows: Vec<FrameTemplate>,
    pub rate_gbps: f64,
    pub size: SizeDist,
    pub arrivals: Arrivals,
    pub selection: Selection,
    pub start: Picos,
}

impl TrafficProfile {
    pub fn new(lane: u8, vids: &[u16], rate_gbps: f64) -> Self {
        Self {
            lane,
            flows: vids.iter().map(|v| FrameTemplate::new(*v)).collect(),
            rate_gbps,
            size: SizeDist::default(),
            arrivals: Arrivals::default(),
            selection: Selection::default(),
            start: 0,
        }
    }

    pub fn vids(&self) -> impl Iterator<Item = u16> + '_ {
        self.flows.iter().map(|f| f.vlan.vid)
    }
}

#[derive(Debug, Clone)]
pub struct Generator {
    rng: ChaCha8Rng,
    rate: Rate,
    next_flow: usize,
}

impl Generator {
    /// Streams are independent per profile index under one scenario seed.
    pub fn new(seed: u64, index: usize, profile: &TrafficProfile) -> Self {
        let stream = seed ^ (index as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
        Self { rng: ChaCha8Rng::seed_from_u64(stream), rate: Rate::from_gbps(profile.rate_gbps), next_flow: 0 }
    }

    /// Builds the next packet and the gap until the one after it.
    pub fn next(&mut self, p: &TrafficProfile, id: u64, now: Picos) -> (Packet, Picos) {
        let flow = match p.selection {
            Selection::RoundRobin => {
                let f = self.next_flow;
                self.next_flow = (f + 1) % p.flows.len();
                f
            }
            Selection::Random => self.rng.gen_range(0..p.flows.len()),
        };
        let len = p.size.sample(&mut self.rng);
        let t = &p.flows[flow];
        let mut pkt = Packet::new(id, t.build(len, id), LaneId(p.lane), now);
        pkt.origin = (LaneId(p.lane), Some(t.vlan.vid));
        let mean = self.rate.serialization(wire_bits(len));
        let gap = match p.arrivals {
            Arrivals::Constant => mean,
            Arrivals::Poisson => {
                let u: f64 = 1.0 - self.rng.gen::<f64>();
                ((-u.ln()) * mean as f64).round().max(1.0) as Picos
            }
        };
        (pkt, gap)
    }
}
