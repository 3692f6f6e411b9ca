use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One unit's vector of intermediate outcomes, of which only a prefix may be
/// observed.
///
/// Consumers only ever see `values[..observed_len]` through [`Trace::observed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    values: Vec<f64>,
    observed_len: usize,
    origin_round: u32,
}

impl Trace {
    pub fn new(values: Vec<f64>, observed_len: usize, origin_round: u32) -> Result<Self> {
        if observed_len > values.len() {
            return Err(Error::InvalidTrace(format!(
                "observed_len {observed_len} exceeds trace length {}",
                values.len()
            )));
        }
        Ok(Self {
            values,
            observed_len,
            origin_round,
        })
    }

    /// A fully observed trace, as found in historical data.
    pub fn full(values: Vec<f64>) -> Self {
        let observed_len = values.len();
        Self {
            values,
            observed_len,
            origin_round: 1,
        }
    }

    /// Trace length K.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn observed_len(&self) -> usize {
        self.observed_len
    }

    pub fn origin_round(&self) -> u32 {
        self.origin_round
    }

    /// The revealed prefix `values[..observed_len]`.
    pub fn observed(&self) -> &[f64] {
        &self.values[..self.observed_len]
    }

    pub fn is_fully_observed(&self) -> bool {
        self.observed_len == self.values.len()
    }

    /// Copy of this trace with at most `len` elements revealed.
    pub fn truncated(&self, len: usize) -> Self {
        Self {
            values: self.values.clone(),
            observed_len: self.observed_len.min(len),
            origin_round: self.origin_round,
        }
    }

    /// Reveals elements up to `observed_len` and returns the newly revealed
    /// slice. Never hides already revealed elements.
    pub(crate) fn reveal_to(&mut self, observed_len: usize) -> &[f64] {
        let target = observed_len.min(self.values.len());
        let old = self.observed_len;
        if target <= old {
            return &[];
        }
        self.observed_len = target;
        &self.values[old..target]
    }
}
