use crate::types::ClockDomain;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Storage {
    Sram,
    Flipflop,
}

impl Storage {
    pub fn as_str(self) -> &'static str {
        match self {
            Storage::Sram => "sram",
            Storage::Flipflop => "flipflop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FifoSpec {
    pub fifo_id: String,
    pub depth: u32,
    pub width: u32,
    pub write_domain: ClockDomain,
    pub read_domain: ClockDomain,
    pub storage: Storage,
}

impl FifoSpec {
    pub fn capacity_bits(&self) -> u64 {
        self.depth as u64 * self.width as u64
    }

    /// Words a packet of `bits` occupies.
    pub fn words_for(&self, bits: u64) -> u32 {
        bits.div_ceil(self.width as u64).min(u32::MAX as u64) as u32
    }
}

/// Occupancy of one FIFO as seen by its writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FifoState {
    depth: u32,
    occupied_words: u32,
    pub drops: u64,
    pub peak_occupancy: u32,
    pub accepted_words: u64,
    pub released_words: u64,
}

impl FifoState {
    pub fn new(depth: u32) -> Self {
        assert!(depth >= 1, "fifo depth must be positive");
        Self { depth, occupied_words: 0, drops: 0, peak_occupancy: 0, accepted_words: 0, released_words: 0 }
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn occupied_words(&self) -> u32 {
        self.occupied_words
    }

    pub fn free_words(&self) -> u32 {
        self.depth - self.occupied_words
    }

    pub fn full(&self) -> bool {
        self.occupied_words == self.depth
    }

    pub fn empty(&self) -> bool {
        self.occupied_words == 0
    }

    pub fn can_accept(&self, words: u32) -> bool {
        words <= self.free_words()
    }

    /// All-or-nothing. A rejection leaves the state unchanged; the caller
    /// owns drop accounting.
    pub fn enqueue(&mut self, words: u32) -> bool {
        debug_assert!(words >= 1);
        if !self.can_accept(words) {
            return false;
        }
        self.occupied_words += words;
        self.accepted_words += words as u64;
        self.peak_occupancy = self.peak_occupancy.max(self.occupied_words);
        true
    }

    pub fn dequeue(&mut self, words: u32) -> u32 {
        let granted = words.min(self.occupied_words);
        self.occupied_words -= granted;
        self.released_words += granted as u64;
        granted
    }

    pub fn record_drop(&mut self) {
        self.drops += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn boundaries() {
        let mut f = FifoState::new(52);
        assert!(f.empty() && !f.full());
        assert!(f.enqueue(52));
        assert!(f.full());
        assert!(!f.enqueue(1));
        assert_eq!(f.occupied_words(), 52);
        assert_eq!(f.dequeue(49), 49);
        assert_eq!(f.dequeue(10), 3);
        assert!(f.empty());
        assert_eq!(f.peak_occupancy, 52);
    }

    proptest! {
        #[test]
        fn word_conservation(ops in prop::collection::vec((any::<bool>(), 1u32..80), 0..200)) {
            let mut f = FifoState::new(66);
            for (enq, w) in ops {
                if enq { f.enqueue(w); } else { f.dequeue(w); }
                prop_assert_eq!(f.accepted_words - f.released_words, f.occupied_words() as u64);
                prop_assert!(f.occupied_words() <= f.depth());
                prop_assert_eq!(f.full(), f.occupied_words() == f.depth());
                prop_assert_eq!(f.empty(), f.occupied_words() == 0);
            }
        }
    }
}
