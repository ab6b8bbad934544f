//! FNV-1a 64-bit checksums for freeze ledgers and checkpoint integrity.

const OFFSET: u64 = 0xcbf29ce484222325;
const PRIME: u64 = 0x100000001b3;

#[derive(Debug, Clone)]
pub struct Fnv64 {
    state: u64,
}

impl Fnv64 {
    pub fn new() -> Self {
        Self { state: OFFSET }
    }

    pub fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.state ^= b as u64;
            self.state = self.state.wrapping_mul(PRIME);
        }
    }

    pub fn write_f64(&mut self, x: f64) {
        self.write(&x.to_le_bytes());
    }

    pub fn finish(&self) -> u64 {
        self.state
    }
}

impl Default for Fnv64 {
    fn default() -> Self {
        Self::new()
    }
}

/// Checksum of a matrix in row-major order.
pub fn matrix_checksum(m: &ndarray::Array2<f64>) -> u64 {
    let mut h = Fnv64::new();
    for &x in m.iter() {
        h.write_f64(x);
    }
    h.finish()
}

pub fn bytes_checksum(bytes: &[u8]) -> u64 {
    let mut h = Fnv64::new();
    h.write(bytes);
    h.finish()
}
