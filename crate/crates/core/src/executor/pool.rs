//! Arena memory pool for device-resident buffers.
//!
//! Blocks are offsets into large chunks reserved once; released blocks go
//! to per-size-class free lists and are handed out again without touching
//! the system allocator. Only address bookkeeping is modelled, no bytes are
//! backed.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use serde::Serialize;

use crate::error::{AmrError, Result};

const MIN_CLASS: usize = 256;

/// A live allocation. `offset` is global across chunks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockHandle {
    pub offset: usize,
    /// Usable size, the size class of the request.
    pub size: usize,
}

impl BlockHandle {
    pub fn end(&self) -> usize {
        self.offset + self.size
    }

    pub fn overlaps(&self, other: &BlockHandle) -> bool {
        self.offset < other.end() && other.offset < self.end()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct PoolCounters {
    pub system_reservations: usize,
    pub acquires: usize,
    pub releases: usize,
    pub live_bytes: usize,
    pub high_water_bytes: usize,
}

#[derive(Debug, Default)]
struct Inner {
    chunks: usize,
    /// Bump pointer inside the newest chunk.
    used: usize,
    free: BTreeMap<usize, Vec<usize>>,
    live: HashMap<usize, usize>,
    counters: PoolCounters,
}

#[derive(Debug)]
pub struct MemoryPool {
    chunk_bytes: usize,
    inner: Mutex<Inner>,
}

pub fn size_class(bytes: usize) -> usize {
    bytes.max(MIN_CLASS).next_power_of_two()
}

impl MemoryPool {
    pub fn new(chunk_bytes: usize) -> Self {
        MemoryPool { chunk_bytes, inner: Mutex::new(Inner::default()) }
    }

    pub fn chunk_bytes(&self) -> usize {
        self.chunk_bytes
    }

    pub fn acquire(&self, bytes: usize) -> Result<BlockHandle> {
        if bytes == 0 {
            return Err(AmrError::PoolMisuse("zero-byte acquire".into()));
        }
        let class = size_class(bytes);
        if class > self.chunk_bytes {
            return Err(AmrError::Oversize { requested: bytes, chunk: self.chunk_bytes });
        }
        let mut g = self.inner.lock().expect("pool lock poisoned");
        let offset = match g.free.get_mut(&class).and_then(Vec::pop) {
            Some(o) => o,
            None => {
                if g.chunks == 0 || g.used + class > self.chunk_bytes {
                    g.chunks += 1;
                    g.used = 0;
                    g.counters.system_reservations += 1;
                }
                let o = (g.chunks - 1) * self.chunk_bytes + g.used;
                g.used += class;
                o
            }
        };
        g.live.insert(offset, class);
        let c = &mut g.counters;
        c.acquires += 1;
        c.live_bytes += class;
        c.high_water_bytes = c.high_water_bytes.max(c.live_bytes);
        Ok(BlockHandle { offset, size: class })
    }

    pub fn release(&self, h: BlockHandle) -> Result<()> {
        let mut g = self.inner.lock().expect("pool lock poisoned");
        match g.live.remove(&h.offset) {
            Some(class) if class == h.size => {
                g.free.entry(class).or_default().push(h.offset);
                g.counters.releases += 1;
                g.counters.live_bytes -= class;
                Ok(())
            }
            Some(class) => {
                g.live.insert(h.offset, class);
                Err(AmrError::PoolMisuse(format!("block at {} released with wrong size", h.offset)))
            }
            None => Err(AmrError::PoolMisuse(format!("block at {} is not live", h.offset))),
        }
    }

    pub fn counters(&self) -> PoolCounters {
        self.inner.lock().expect("pool lock poisoned").counters
    }
}
