use crate::metrics::fnv1a64;
use crate::vector::{VectorFault, VectorMemory};

/// Word-interleaved banked scratchpad shared by cores and vector units.
///
/// `bank(addr) = (addr / 4) % n_banks`. Each bank grants at most one access
/// per cycle, chosen round-robin among requesters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scratchpad {
    words: Vec<u32>,
    n_banks: usize,
    rr: Vec<usize>,
}

/// One bank access attempted in the current cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankRequest {
    /// Stable requester id; lower ids do not have fixed priority.
    pub requester: usize,
    pub addr: u32,
}

impl Scratchpad {
    pub fn new(size_bytes: u32, n_banks: usize) -> Self {
        Scratchpad { words: vec![0; size_bytes as usize / 4], n_banks, rr: vec![0; n_banks] }
    }

    pub fn size_bytes(&self) -> u32 {
        (self.words.len() * 4) as u32
    }

    pub fn n_banks(&self) -> usize {
        self.n_banks
    }

    pub fn bank(&self, addr: u32) -> usize {
        (addr as usize / 4) % self.n_banks
    }

    /// Validates a word access and returns its word index.
    pub fn check(&self, addr: i64) -> Result<usize, VectorFault> {
        if addr < 0 || addr >= i64::from(self.size_bytes()) {
            return Err(VectorFault::OutOfRange { addr });
        }
        if addr % 4 != 0 {
            return Err(VectorFault::Misaligned { addr });
        }
        Ok(addr as usize / 4)
    }

    pub fn read(&self, addr: u32) -> Option<u32> {
        self.check(i64::from(addr)).ok().map(|i| self.words[i])
    }

    pub fn write(&mut self, addr: u32, value: u32) -> bool {
        match self.check(i64::from(addr)) {
            Ok(i) => {
                self.words[i] = value;
                true
            }
            Err(_) => false,
        }
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    /// Copies `data` starting at byte address `addr`.
    pub fn load_image(&mut self, addr: u32, data: &[u32]) -> Result<(), VectorFault> {
        let start = self.check(i64::from(addr))?;
        if start + data.len() > self.words.len() {
            return Err(VectorFault::OutOfRange { addr: i64::from(addr) + 4 * data.len() as i64 });
        }
        self.words[start..start + data.len()].copy_from_slice(data);
        Ok(())
    }

    /// Little-endian bytes of `[addr, addr + len)`.
    pub fn bytes(&self, addr: u32, len: u32) -> Vec<u8> {
        let start = addr as usize / 4;
        let end = ((addr + len) as usize).div_ceil(4).min(self.words.len());
        self.words[start.min(end)..end].iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    /// FNV-1a 64 over the little-endian bytes of `[addr, addr + len)`.
    pub fn checksum(&self, addr: u32, len: u32) -> u64 {
        fnv1a64(&self.bytes(addr, len))
    }

    /// Resolves one cycle of bank arbitration. `n_requesters` is the size
    /// of the requester id space used by the round-robin pointers.
    pub fn arbitrate(&mut self, reqs: &[BankRequest], n_requesters: usize) -> Vec<bool> {
        let mut grants = vec![false; reqs.len()];
        let mut winner: Vec<Option<(usize, usize)>> = vec![None; self.n_banks];
        for (i, r) in reqs.iter().enumerate() {
            let bank = self.bank(r.addr);
            let dist = (r.requester + n_requesters - self.rr[bank]) % n_requesters;
            match winner[bank] {
                Some((_, best)) if best <= dist => {}
                _ => winner[bank] = Some((i, dist)),
            }
        }
        for (bank, w) in winner.iter().enumerate() {
            if let Some((i, _)) = *w {
                grants[i] = true;
                self.rr[bank] = (reqs[i].requester + 1) % n_requesters;
            }
        }
        grants
    }
}

impl VectorMemory for Scratchpad {
    fn load(&self, addr: i64) -> Result<u32, VectorFault> {
        let i = self.check(addr)?;
        Ok(self.words[i])
    }

    fn store(&mut self, addr: i64, value: u32) -> Result<(), VectorFault> {
        let i = self.check(addr)?;
        self.words[i] = value;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_grant_per_bank_round_robin() {
        let mut m = Scratchpad::new(1024, 8);
        let reqs = [BankRequest { requester: 0, addr: 0 }, BankRequest { requester: 1, addr: 32 }];
        assert_eq!(m.bank(0), m.bank(32));
        assert_eq!(m.arbitrate(&reqs, 4), vec![true, false]);
        // Pointer moved past requester 0.
        assert_eq!(m.arbitrate(&reqs, 4), vec![false, true]);
        assert_eq!(m.arbitrate(&reqs, 4), vec![true, false]);
    }

    #[test]
    fn distinct_banks_all_granted() {
        let mut m = Scratchpad::new(1024, 8);
        let reqs: Vec<_> = (0..8).map(|i| BankRequest { requester: i, addr: 4 * i as u32 }).collect();
        assert!(m.arbitrate(&reqs, 8).iter().all(|&g| g));
    }

    #[test]
    fn bounds() {
        let m = Scratchpad::new(64, 4);
        assert_eq!(m.check(64), Err(VectorFault::OutOfRange { addr: 64 }));
        assert_eq!(m.check(-4), Err(VectorFault::OutOfRange { addr: -4 }));
        assert_eq!(m.check(6), Err(VectorFault::Misaligned { addr: 6 }));
        assert_eq!(m.check(60), Ok(15));
    }
}
