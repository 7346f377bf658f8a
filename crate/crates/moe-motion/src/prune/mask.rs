use crate::network::{ParamSet, TensorKey};
use crate::numeric::Scalar;

/// Keep/mask bitmap over one tensor's flattened entries. Bit = 1 means the
/// parameter is kept; 0 means it is nullified by pruning.
#[derive(Debug, Clone, PartialEq)]
pub struct Bitmask {
    len: usize,
    words: Vec<u64>,
}

impl Bitmask {
    pub fn all_kept(len: usize) -> Self {
        let mut words = vec![u64::MAX; len.div_ceil(64)];
        if let Some(last) = words.last_mut() {
            let tail = len % 64;
            if tail != 0 {
                *last = (1u64 << tail) - 1;
            }
            if len == 0 {
                *last = 0;
            }
        }
        Bitmask { len, words }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn is_kept(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn mask(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / 64] &= !(1u64 << (i % 64));
    }

    pub fn masked_count(&self) -> usize {
        self.len - self.kept_count()
    }

    pub fn kept_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Masked set becomes the union of both masked sets.
    pub fn union_masked(&mut self, other: &Bitmask) {
        debug_assert_eq!(self.len, other.len);
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= *b;
        }
    }

    /// True if every entry masked in `other` is masked here too.
    pub fn masked_superset_of(&self, other: &Bitmask) -> bool {
        debug_assert_eq!(self.len, other.len);
        // kept ⊆ other.kept  ⇔  masked ⊇ other.masked
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    /// Zeroes masked entries of `data` in place.
    pub fn apply<T: Scalar>(&self, data: &mut [T]) {
        debug_assert_eq!(data.len(), self.len);
        for (i, v) in data.iter_mut().enumerate() {
            if !self.is_kept(i) {
                *v = T::zero();
            }
        }
    }

    /// LSB-first byte serialization; bit j of byte i is entry 8 i + j.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len.div_ceil(8));
        for chunk_start in (0..self.len).step_by(8) {
            let mut byte = 0u8;
            for j in 0..8 {
                let i = chunk_start + j;
                if i < self.len && self.is_kept(i) {
                    byte |= 1 << j;
                }
            }
            out.push(byte);
        }
        out
    }

    pub fn from_bytes(len: usize, bytes: &[u8]) -> Option<Self> {
        if bytes.len() != len.div_ceil(8) {
            return None;
        }
        let mut mask = Bitmask::all_kept(len);
        for i in 0..len {
            if bytes[i / 8] >> (i % 8) & 1 == 0 {
                mask.mask(i);
            }
        }
        Some(mask)
    }
}

/// Bitmasks for every prunable tensor, in canonical tensor order.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub entries: Vec<(TensorKey, Bitmask)>,
}

impl MaskSet {
    pub fn get(&self, key: TensorKey) -> Option<&Bitmask> {
        self.entries.iter().find(|(k, _)| *k == key).map(|(_, m)| m)
    }

    pub fn total_entries(&self) -> usize {
        self.entries.iter().map(|(_, m)| m.len()).sum()
    }

    pub fn masked_count(&self) -> usize {
        self.entries.iter().map(|(_, m)| m.masked_count()).sum()
    }

    /// Masked fraction over the prunable parameters this set covers.
    pub fn sparsity(&self) -> f64 {
        let total = self.total_entries();
        if total == 0 {
            0.0
        } else {
            self.masked_count() as f64 / total as f64
        }
    }

    /// Union of masked sets, tensor by tensor. Both sets must cover the same
    /// tensors.
    pub fn union_masked(&mut self, other: &MaskSet) {
        debug_assert_eq!(self.entries.len(), other.entries.len());
        for ((ka, ma), (kb, mb)) in self.entries.iter_mut().zip(&other.entries) {
            debug_assert_eq!(ka, kb);
            ma.union_masked(mb);
        }
    }

    pub fn masked_superset_of(&self, other: &MaskSet) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((ka, ma), (kb, mb))| ka == kb && ma.masked_superset_of(mb))
    }

    /// Nullifies masked parameters. Idempotent.
    pub fn apply<T: Scalar>(&self, params: &mut ParamSet<T>) {
        for (key, mask) in &self.entries {
            mask.apply(params.tensor_mut(*key));
        }
    }

    /// Zeroes gradient (or moment) entries at masked positions so masked
    /// parameters receive no further updates.
    pub fn suppress<T: Scalar>(&self, grads: &mut ParamSet<T>) {
        self.apply(grads);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_kept_then_mask() {
        let mut m = Bitmask::all_kept(70);
        assert_eq!(m.kept_count(), 70);
        m.mask(0);
        m.mask(69);
        m.mask(64);
        assert_eq!(m.masked_count(), 3);
        assert!(!m.is_kept(0));
        assert!(m.is_kept(1));
        assert!(!m.is_kept(69));
    }

    #[test]
    fn byte_roundtrip() {
        let mut m = Bitmask::all_kept(13);
        m.mask(2);
        m.mask(8);
        m.mask(12);
        let bytes = m.to_bytes();
        assert_eq!(bytes.len(), 2);
        assert_eq!(Bitmask::from_bytes(13, &bytes).unwrap(), m);
        // first byte: bits 0..8 kept except bit 2 -> 0b1111_1011
        assert_eq!(bytes[0], 0b1111_1011);
    }

    #[test]
    fn union_and_superset() {
        let mut a = Bitmask::all_kept(10);
        let mut b = Bitmask::all_kept(10);
        a.mask(1);
        b.mask(7);
        assert!(!a.masked_superset_of(&b));
        a.union_masked(&b);
        assert!(a.masked_superset_of(&b));
        assert_eq!(a.masked_count(), 2);
    }

    #[test]
    fn apply_zeroes_only_masked() {
        let mut m = Bitmask::all_kept(4);
        m.mask(2);
        let mut data = [1.0f32, 2.0, 3.0, 4.0];
        m.apply(&mut data);
        assert_eq!(data, [1.0, 2.0, 0.0, 4.0]);
    }
}
