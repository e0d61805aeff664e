//! Uniform access to trainable parameters as named flat blocks.
//!
//! The same types double as gradient containers, so updates, gradient
//! checks and serialization all walk the blocks in one fixed order.

pub trait ParamSet {
    /// Named blocks in canonical order.
    fn blocks(&self) -> Vec<(String, &[f64])>;

    /// Mutable blocks, same names and order as [`ParamSet::blocks`].
    fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])>;

    fn num_params(&self) -> usize {
        self.blocks().iter().map(|(_, b)| b.len()).sum()
    }

    /// `self += factor · other`. Both sides must share a layout.
    fn add_scaled(&mut self, other: &Self, factor: f64) {
        for ((_, dst), (_, src)) in self.blocks_mut().into_iter().zip(other.blocks()) {
            debug_assert_eq!(dst.len(), src.len());
            for (d, s) in dst.iter_mut().zip(src) {
                *d += factor * s;
            }
        }
    }

    fn scale(&mut self, factor: f64) {
        for (_, dst) in self.blocks_mut() {
            for d in dst.iter_mut() {
                *d *= factor;
            }
        }
    }

    fn fill_zero(&mut self) {
        for (_, dst) in self.blocks_mut() {
            dst.fill(0.0);
        }
    }

    fn is_finite(&self) -> bool {
        self.blocks()
            .iter()
            .all(|(_, b)| b.iter().all(|v| v.is_finite()))
    }

    /// Bit-level equality of every entry.
    fn bit_eq(&self, other: &Self) -> bool {
        let a = self.blocks();
        let b = other.blocks();
        a.len() == b.len()
            && a.iter().zip(&b).all(|((na, va), (nb, vb))| {
                na == nb
                    && va.len() == vb.len()
                    && va
                        .iter()
                        .zip(vb.iter())
                        .all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}
