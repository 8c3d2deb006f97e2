use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};

use crate::cot::RecCot;
use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Frozen tag embedding table, `num_tags x dim`, mean-pooled over a cot.
#[derive(Debug, Clone, PartialEq)]
pub struct TagEncoder {
    num_tags: usize,
    dim: usize,
    table: Vec<f64>,
}

impl TagEncoder {
    pub const DEFAULT_DIM: usize = 32;

    /// Entries drawn from `N(0, 1/dim)`.
    pub fn seeded(num_tags: usize, dim: usize, stream: &SeedStream) -> Self {
        let mut rng = stream.rng();
        let normal = Normal::new(0.0, 1.0 / libm::sqrt(dim as f64)).expect("positive std");
        let table = (0..num_tags * dim).map(|_| normal.sample(&mut rng)).collect();
        TagEncoder { num_tags, dim, table }
    }

    pub fn from_table(num_tags: usize, dim: usize, table: Vec<f64>) -> Result<Self> {
        if table.len() != num_tags * dim {
            return Err(Error::InvalidInput(format!("encoder table must have {} entries", num_tags * dim)));
        }
        Ok(TagEncoder { num_tags, dim, table })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, tag: usize) -> &[f64] {
        &self.table[tag * self.dim..(tag + 1) * self.dim]
    }

    pub fn encode(&self, cot: &RecCot) -> Result<Vec<f64>> {
        cot.check(self.num_tags, None)?;
        let mut out = vec![0.0; self.dim];
        if cot.is_empty() {
            return Ok(out);
        }
        for &t in cot.tags() {
            for (o, e) in out.iter_mut().zip(self.row(t)) {
                *o += e;
            }
        }
        let n = cot.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        Ok(out)
    }
}
