//! Match tables: exact, longest-prefix and ternary lookup over keys of up to
//! 128 bits.

use std::collections::BTreeMap;

use thiserror::Error;

use super::spec::MatchKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MatchKey {
    Exact(u128),
    Lpm { value: u128, prefix_len: u8 },
    Ternary { value: u128, mask: u128, priority: u32 },
}

impl MatchKey {
    pub fn kind(&self) -> MatchKind {
        match self {
            MatchKey::Exact(_) => MatchKind::Exact,
            MatchKey::Lpm { .. } => MatchKind::Lpm,
            MatchKey::Ternary { .. } => MatchKind::Ternary,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TableError {
    #[error("no table with id {0}")]
    UnknownTable(u8),
    #[error("table expects {expected:?} keys, got {got:?}")]
    KindMismatch { expected: MatchKind, got: MatchKind },
    #[error("key does not fit in {0} bits")]
    KeyTooWide(u32),
    #[error("prefix length {0} exceeds key width {1}")]
    PrefixTooLong(u8, u32),
    #[error("table full ({0} entries)")]
    TableFull(usize),
    #[error("ternary priority {0} already in use")]
    DuplicatePriority(u32),
    #[error("action '{0}' not permitted in this table")]
    ActionNotAllowed(&'static str),
}

fn width_mask(width: u32) -> u128 {
    if width >= 128 {
        u128::MAX
    } else {
        (1u128 << width) - 1
    }
}

/// Mask selecting the top `len` bits of a `width`-bit key.
pub fn prefix_mask(len: u8, width: u32) -> u128 {
    if len == 0 {
        0
    } else {
        width_mask(width) & !width_mask(width - len as u32)
    }
}

#[derive(Debug, Clone)]
struct TernaryEntry<V> {
    value: u128,
    mask: u128,
    priority: u32,
    action: V,
}

#[derive(Debug, Clone)]
enum Storage<V> {
    Exact(BTreeMap<u128, V>),
    /// Indexed by prefix length; keys stored pre-masked.
    Lpm(Vec<BTreeMap<u128, V>>),
    /// Kept sorted by descending priority.
    Ternary(Vec<TernaryEntry<V>>),
}

/// A bounded match table. Writes never partially apply: a rejected write
/// leaves the table unchanged.
#[derive(Debug, Clone)]
pub struct MatchTable<V> {
    kind: MatchKind,
    key_width: u32,
    capacity: usize,
    len: usize,
    storage: Storage<V>,
}

impl<V: Clone> MatchTable<V> {
    pub fn new(kind: MatchKind, key_width: u32, capacity: usize) -> Self {
        let storage = match kind {
            MatchKind::Exact => Storage::Exact(BTreeMap::new()),
            MatchKind::Lpm => Storage::Lpm(vec![BTreeMap::new(); key_width as usize + 1]),
            MatchKind::Ternary => Storage::Ternary(Vec::new()),
        };
        Self { kind, key_width, capacity, len: 0, storage }
    }

    pub fn kind(&self) -> MatchKind {
        self.kind
    }

    pub fn key_width(&self) -> u32 {
        self.key_width
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn clear(&mut self) {
        *self = Self::new(self.kind, self.key_width, self.capacity);
    }

    fn check_key(&self, key: &MatchKey) -> Result<(), TableError> {
        if key.kind() != self.kind {
            return Err(TableError::KindMismatch { expected: self.kind, got: key.kind() });
        }
        let limit = width_mask(self.key_width);
        match *key {
            MatchKey::Exact(v) if v & !limit != 0 => Err(TableError::KeyTooWide(self.key_width)),
            MatchKey::Lpm { value, prefix_len } => {
                if prefix_len as u32 > self.key_width {
                    Err(TableError::PrefixTooLong(prefix_len, self.key_width))
                } else if value & !limit != 0 {
                    Err(TableError::KeyTooWide(self.key_width))
                } else {
                    Ok(())
                }
            }
            MatchKey::Ternary { value, mask, .. } if (value | mask) & !limit != 0 => {
                Err(TableError::KeyTooWide(self.key_width))
            }
            _ => Ok(()),
        }
    }

    /// Inserts or overwrites the entry stored under `key`.
    pub fn insert(&mut self, key: MatchKey, action: V) -> Result<(), TableError> {
        self.check_key(&key)?;
        let full = self.len >= self.capacity;
        let width = self.key_width;
        match (&mut self.storage, key) {
            (Storage::Exact(map), MatchKey::Exact(k)) => {
                if let Some(slot) = map.get_mut(&k) {
                    *slot = action;
                    return Ok(());
                }
                if full {
                    return Err(TableError::TableFull(self.capacity));
                }
                map.insert(k, action);
            }
            (Storage::Lpm(by_len), MatchKey::Lpm { value, prefix_len }) => {
                let k = value & prefix_mask(prefix_len, width);
                let map = &mut by_len[prefix_len as usize];
                if let Some(slot) = map.get_mut(&k) {
                    *slot = action;
                    return Ok(());
                }
                if full {
                    return Err(TableError::TableFull(self.capacity));
                }
                map.insert(k, action);
            }
            (Storage::Ternary(entries), MatchKey::Ternary { value, mask, priority }) => {
                let value = value & mask;
                let existing = entries.iter().position(|e| e.value == value && e.mask == mask);
                if entries.iter().enumerate().any(|(i, e)| e.priority == priority && Some(i) != existing) {
                    return Err(TableError::DuplicatePriority(priority));
                }
                if let Some(i) = existing {
                    entries.remove(i);
                    let pos = entries.partition_point(|e| e.priority > priority);
                    entries.insert(pos, TernaryEntry { value, mask, priority, action });
                    return Ok(());
                }
                if full {
                    return Err(TableError::TableFull(self.capacity));
                }
                let pos = entries.partition_point(|e| e.priority > priority);
                entries.insert(pos, TernaryEntry { value, mask, priority, action });
            }
            _ => unreachable!("kind checked above"),
        }
        self.len += 1;
        Ok(())
    }

    /// Removes the entry stored under `key`, returning it.
    pub fn remove(&mut self, key: &MatchKey) -> Result<Option<V>, TableError> {
        self.check_key(key)?;
        let width = self.key_width;
        let removed = match (&mut self.storage, *key) {
            (Storage::Exact(map), MatchKey::Exact(k)) => map.remove(&k),
            (Storage::Lpm(by_len), MatchKey::Lpm { value, prefix_len }) => {
                by_len[prefix_len as usize].remove(&(value & prefix_mask(prefix_len, width)))
            }
            (Storage::Ternary(entries), MatchKey::Ternary { value, mask, .. }) => {
                entries.iter().position(|e| e.value == value & mask && e.mask == mask).map(|i| entries.remove(i).action)
            }
            _ => unreachable!(),
        };
        if removed.is_some() {
            self.len -= 1;
        }
        Ok(removed)
    }

    /// The entry stored under exactly `key` (not a lookup).
    pub fn get(&self, key: &MatchKey) -> Result<Option<&V>, TableError> {
        self.check_key(key)?;
        Ok(match (&self.storage, *key) {
            (Storage::Exact(map), MatchKey::Exact(k)) => map.get(&k),
            (Storage::Lpm(by_len), MatchKey::Lpm { value, prefix_len }) => {
                by_len[prefix_len as usize].get(&(value & prefix_mask(prefix_len, self.key_width)))
            }
            (Storage::Ternary(entries), MatchKey::Ternary { value, mask, .. }) => {
                entries.iter().find(|e| e.value == value & mask && e.mask == mask).map(|e| &e.action)
            }
            _ => unreachable!(),
        })
    }

    /// Packet-time lookup of a concrete key value.
    pub fn lookup(&self, key: u128) -> Option<&V> {
        match &self.storage {
            Storage::Exact(map) => map.get(&key),
            Storage::Lpm(by_len) => by_len.iter().enumerate().rev().find_map(|(len, map)| {
                if map.is_empty() {
                    None
                } else {
                    map.get(&(key & prefix_mask(len as u8, self.key_width)))
                }
            }),
            Storage::Ternary(entries) => entries.iter().find(|e| key & e.mask == e.value).map(|e| &e.action),
        }
    }

    /// All entries in a deterministic order.
    pub fn entries(&self) -> Vec<(MatchKey, &V)> {
        match &self.storage {
            Storage::Exact(map) => map.iter().map(|(k, v)| (MatchKey::Exact(*k), v)).collect(),
            Storage::Lpm(by_len) => by_len
                .iter()
                .enumerate()
                .flat_map(|(len, map)| {
                    map.iter().map(move |(k, v)| (MatchKey::Lpm { value: *k, prefix_len: len as u8 }, v))
                })
                .collect(),
            Storage::Ternary(entries) => entries
                .iter()
                .map(|e| (MatchKey::Ternary { value: e.value, mask: e.mask, priority: e.priority }, &e.action))
                .collect(),
        }
    }
}
