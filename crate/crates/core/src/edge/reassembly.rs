use std::collections::HashMap;

use super::Cell;
use crate::error::SimError;

#[derive(Debug, Clone)]
struct Entry {
    bits: Vec<u64>,
    received: u16,
    total: u16,
    first_at: u64,
}

/// A message whose last cell just arrived.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Reassembled {
    pub src_core: u32,
    pub msg_id: u64,
    pub completed_at: u64,
    /// Cycles between the first and the last cell's delivery.
    pub reassembly_delay: u64,
}

/// Per-core reassembly state, keyed by (source core, message id). Unbounded.
#[derive(Debug, Clone, Default)]
pub struct ReassemblyTable {
    core: u32,
    entries: HashMap<(u32, u64), Entry>,
}

impl ReassemblyTable {
    pub fn new(core: u32) -> Self {
        ReassemblyTable {
            core,
            entries: HashMap::new(),
        }
    }

    pub fn accept(&mut self, cell: &Cell, now: u64) -> Result<Option<Reassembled>, SimError> {
        if cell.dst_core != self.core {
            return Err(SimError::Routing(format!(
                "cell for core {} handed to core {}",
                cell.dst_core, self.core
            )));
        }
        if cell.seq >= cell.total {
            return Err(SimError::Invariant(format!(
                "cell seq {} outside message of {} cells",
                cell.seq, cell.total
            )));
        }
        let key = (cell.src_core, cell.msg_id);
        let entry = self.entries.entry(key).or_insert_with(|| Entry {
            bits: vec![0; (cell.total as usize).div_ceil(64)],
            received: 0,
            total: cell.total,
            first_at: now,
        });
        if entry.total != cell.total {
            return Err(SimError::Invariant(format!(
                "cells of message {} disagree on length",
                cell.msg_id
            )));
        }
        let (word, bit) = (cell.seq as usize / 64, cell.seq as usize % 64);
        if entry.bits[word] & (1 << bit) != 0 {
            return Err(SimError::DuplicateCell {
                src_core: cell.src_core,
                msg_id: cell.msg_id,
                seq: cell.seq,
            });
        }
        entry.bits[word] |= 1 << bit;
        entry.received += 1;
        if entry.received < entry.total {
            return Ok(None);
        }
        let entry = self.entries.remove(&key).expect("entry exists");
        Ok(Some(Reassembled {
            src_core: cell.src_core,
            msg_id: cell.msg_id,
            completed_at: now,
            reassembly_delay: now - entry.first_at,
        }))
    }

    /// Messages with some but not all cells delivered.
    pub fn pending(&self) -> usize {
        self.entries.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::segment;
    use crate::workload::{Message, MessageClass};
    use proptest::prelude::*;

    fn cells(id: u64, src: u32, size: u32, width: u32) -> Vec<Cell> {
        let msg = Message {
            id,
            src_core: src,
            dst_core: 3,
            class: MessageClass::Response,
            size_bytes: size,
            vnet: 0,
            created_at: 0,
            txn: None,
        };
        segment(&msg, width, 0, 0)
    }

    #[test]
    fn single_cell_completes_immediately() {
        let mut t = ReassemblyTable::new(3);
        let done = t.accept(&cells(1, 0, 8, 64)[0], 10).unwrap().unwrap();
        assert_eq!(done.reassembly_delay, 0);
        assert_eq!(t.pending(), 0);
    }

    #[test]
    fn in_order_train_completes_on_last_cell() {
        let mut t = ReassemblyTable::new(3);
        let train = cells(1, 0, 72, 4);
        assert_eq!(train.len(), 18);
        for (i, c) in train.iter().enumerate() {
            let r = t.accept(c, 100 + i as u64).unwrap();
            if i < 17 {
                assert!(r.is_none());
            } else {
                assert_eq!(r.unwrap().reassembly_delay, 17);
            }
        }
    }

    #[test]
    fn duplicate_cell_is_fatal() {
        let mut t = ReassemblyTable::new(3);
        let train = cells(1, 0, 72, 16);
        t.accept(&train[0], 0).unwrap();
        let err = t.accept(&train[0], 1).unwrap_err();
        assert!(matches!(err, SimError::DuplicateCell { seq: 0, .. }));
    }

    #[test]
    fn wrong_core_is_a_routing_error() {
        let mut t = ReassemblyTable::new(4);
        assert!(matches!(t.accept(&cells(1, 0, 8, 64)[0], 0), Err(SimError::Routing(_))));
    }

    #[test]
    fn long_messages_beyond_one_bitmap_word() {
        let mut t = ReassemblyTable::new(3);
        let train = cells(5, 1, 200, 1);
        let mut done = 0;
        for c in train.iter().rev() {
            if t.accept(c, 0).unwrap().is_some() {
                done += 1;
            }
        }
        assert_eq!(done, 1);
    }

    proptest! {
        // Interleaved cells of several messages: each completes exactly once,
        // and the completed multiset equals the injected one.
        #[test]
        fn interleaved_messages_complete_exactly_once(
            sizes in prop::collection::vec(1u32..100, 1..8),
            seed in any::<u64>(),
        ) {
            let mut all = Vec::new();
            for (i, &size) in sizes.iter().enumerate() {
                all.extend(cells(i as u64, (i % 3) as u32, size, 8));
            }
            // deterministic shuffle from the seed
            let mut state = seed | 1;
            for i in (1..all.len()).rev() {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                all.swap(i, (state % (i as u64 + 1)) as usize);
            }
            let mut t = ReassemblyTable::new(3);
            let mut completed = Vec::new();
            for (now, c) in all.iter().enumerate() {
                if let Some(r) = t.accept(c, now as u64).unwrap() {
                    completed.push((r.src_core, r.msg_id));
                }
            }
            completed.sort();
            let mut expected: Vec<_> = (0..sizes.len()).map(|i| ((i % 3) as u32, i as u64)).collect();
            expected.sort();
            prop_assert_eq!(completed, expected);
            prop_assert_eq!(t.pending(), 0);
        }
    }
}
