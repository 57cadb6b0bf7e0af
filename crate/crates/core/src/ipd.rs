//! Bit-per-address IP membership store.
//!
//! A marked bit means "old user". In direct mode every IPv4 address owns one
//! bit of a 2^32-bit (512 MiB) array; the backing allocation is zeroed lazily
//! by the allocator. A hashed mode with 2^b bits (b <= 32) folds the 32-bit
//! key down for memory-constrained runs and for IPv6 (whose addresses are
//! first digested to 32 bits).
//!
//! Bit order within a byte counts from the least-significant bit, so address
//! `a` lives at byte `a / 8`, bit `a % 8`.

use std::io::{Read, Write};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"IPD1";

/// Split an address into its (byte, bit) offset in the bit array.
pub fn byte_bit_offset(ip: u32) -> (u32, u8) {
    (ip / 8, (ip % 8) as u8)
}

/// Stable 32-bit FNV-1a digest of the 16 IPv6 address bytes.
///
/// Not cryptographic; chosen for determinism across runs and platforms.
pub fn map_ipv6(octets: &[u8; 16]) -> u32 {
    let mut hash: u32 = 0x811c_9dc5;
    for &b in octets {
        hash ^= b as u32;
        hash = hash.wrapping_mul(0x0100_0193);
    }
    hash
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BitmapMode {
    /// One bit per IPv4 address, b = 32.
    Ipv4Direct,
    /// 32-bit keys folded to b bits by Fibonacci hashing.
    Hashed,
}

#[derive(Clone)]
pub struct IpBitmap {
    bits: Vec<u8>,
    bit_width: u32,
    marked_count: u64,
    mode: BitmapMode,
}

impl IpBitmap {
    /// Direct-mapped bitmap over the full IPv4 space (512 MiB backing).
    pub fn new_direct() -> Self {
        Self {
            bits: vec![0u8; 1 << 29],
            bit_width: 32,
            marked_count: 0,
            mode: BitmapMode::Ipv4Direct,
        }
    }

    /// Hashed bitmap with 2^b bits, 1 <= b <= 32.
    pub fn new_hashed(bit_width: u32) -> Result<Self> {
        if bit_width == 0 || bit_width > 32 {
            return Err(Error::Config(format!(
                "bitmap bit width must be in 1..=32, got {bit_width}"
            )));
        }
        let bytes = if bit_width < 3 { 1 } else { 1usize << (bit_width - 3) };
        Ok(Self {
            bits: vec![0u8; bytes],
            bit_width,
            marked_count: 0,
            mode: BitmapMode::Hashed,
        })
    }

    pub fn with_bits(bit_width: u32) -> Result<Self> {
        if bit_width == 32 {
            Ok(Self::new_direct())
        } else {
            Self::new_hashed(bit_width)
        }
    }

    pub fn mode(&self) -> BitmapMode {
        self.mode
    }

    pub fn bit_width(&self) -> u32 {
        self.bit_width
    }

    fn slot(&self, ip: u32) -> u32 {
        match self.mode {
            BitmapMode::Ipv4Direct => ip,
            // Fibonacci multiplicative fold of the 32-bit key to b bits.
            BitmapMode::Hashed => ip.wrapping_mul(2654435761) >> (32 - self.bit_width),
        }
    }

    pub fn mark(&mut self, ip: u32) {
        let (byte, bit) = byte_bit_offset(self.slot(ip));
        let mask = 1u8 << bit;
        let cell = &mut self.bits[byte as usize];
        if *cell & mask == 0 {
            *cell |= mask;
            self.marked_count += 1;
        }
    }

    pub fn unmark(&mut self, ip: u32) {
        let (byte, bit) = byte_bit_offset(self.slot(ip));
        let mask = 1u8 << bit;
        let cell = &mut self.bits[byte as usize];
        if *cell & mask != 0 {
            *cell &= !mask;
            self.marked_count -= 1;
        }
    }

    pub fn is_marked(&self, ip: u32) -> bool {
        let (byte, bit) = byte_bit_offset(self.slot(ip));
        self.bits[byte as usize] & (1u8 << bit) != 0
    }

    /// Number of marked addresses, O(1).
    pub fn count_marked(&self) -> u64 {
        self.marked_count
    }

    /// Full-scan population count; test support for the marked_count invariant.
    pub fn popcount_scan(&self) -> u64 {
        self.bits.iter().map(|b| b.count_ones() as u64).sum()
    }

    /// Snapshot: 4-byte magic `IPD1`, b as u32 little-endian, then the raw
    /// bit array.
    pub fn save<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&self.bit_width.to_le_bytes())?;
        w.write_all(&self.bits)?;
        Ok(())
    }

    pub fn load<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 8];
        r.read_exact(&mut header)
            .map_err(|_| Error::CorruptFile("bitmap snapshot shorter than header".into()))?;
        if &header[0..4] != MAGIC {
            return Err(Error::VersionMismatch(format!(
                "bad bitmap magic {:?}, expected {:?}",
                &header[0..4],
                MAGIC
            )));
        }
        let bit_width = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if bit_width == 0 || bit_width > 32 {
            return Err(Error::CorruptFile(format!(
                "bitmap bit width {bit_width} out of range"
            )));
        }
        let bytes = if bit_width < 3 { 1 } else { 1usize << (bit_width - 3) };
        let mut bits = vec![0u8; bytes];
        r.read_exact(&mut bits)
            .map_err(|_| Error::CorruptFile("bitmap snapshot truncated".into()))?;
        let marked_count = bits.iter().map(|b| b.count_ones() as u64).sum();
        let mode = if bit_width == 32 {
            BitmapMode::Ipv4Direct
        } else {
            BitmapMode::Hashed
        };
        Ok(Self {
            bits,
            bit_width,
            marked_count,
            mode,
        })
    }
}

impl std::fmt::Debug for IpBitmap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IpBitmap")
            .field("bit_width", &self.bit_width)
            .field("marked_count", &self.marked_count)
            .field("mode", &self.mode)
            .finish()
    }
}
