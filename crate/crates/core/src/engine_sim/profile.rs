//! Kernel step-time profile with bilinear interpolation.
//!
//! Prefill is indexed by (tokens computed, context length); decode by
//! (batch size, mean context length per sequence). Queries outside the knot
//! hull are clamped to the edge and flagged.

use super::SimError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{Read, Write};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Prefill,
    Decode,
}

/// Values on a rectangular knot grid, row-major over `a` then `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotGrid {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub seconds: Vec<f64>,
}

impl KnotGrid {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.seconds[i * self.b.len() + j]
    }

    fn validate(&self, phase: Phase) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Profile(format!("{phase:?}: {m}")));
        if self.a.is_empty() || self.b.is_empty() {
            return err("empty grid".into());
        }
        if self.seconds.len() != self.a.len() * self.b.len() {
            return err(format!(
                "expected {} values, found {}",
                self.a.len() * self.b.len(),
                self.seconds.len()
            ));
        }
        for axis in [&self.a, &self.b] {
            if axis.windows(2).any(|w| !(w[0] < w[1])) {
                return err("axes must be strictly increasing".into());
            }
        }
        if self.seconds.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return err("step times must be positive".into());
        }
        for i in 0..self.a.len() {
            for j in 0..self.b.len() {
                let v = self.at(i, j);
                if (i + 1 < self.a.len() && self.at(i + 1, j) < v)
                    || (j + 1 < self.b.len() && self.at(i, j + 1) < v)
                {
                    return err(format!("times decrease after knot ({}, {})", self.a[i], self.b[j]));
                }
            }
        }
        Ok(())
    }

    /// Index of the cell containing `x` (clamped) and the fractional offset.
    fn locate(axis: &[f64], x: f64) -> (usize, f64, bool) {
        let n = axis.len();
        if n == 1 {
            return (0, 0.0, x != axis[0]);
        }
        if x <= axis[0] {
            return (0, 0.0, x < axis[0]);
        }
        if x >= axis[n - 1] {
            return (n - 2, 1.0, x > axis[n - 1]);
        }
        let hi = axis.partition_point(|&k| k <= x).min(n - 1);
        let lo = hi - 1;
        (lo, (x - axis[lo]) / (axis[hi] - axis[lo]), false)
    }

    fn interpolate(&self, a: f64, b: f64) -> (f64, bool) {
        let (i, fa, ca) = Self::locate(&self.a, a);
        let (j, fb, cb) = Self::locate(&self.b, b);
        let i1 = (i + 1).min(self.a.len() - 1);
        let j1 = (j + 1).min(self.b.len() - 1);
        let v = self.at(i, j) * (1.0 - fa) * (1.0 - fb)
            + self.at(i1, j) * fa * (1.0 - fb)
            + self.at(i, j1) * (1.0 - fa) * fb
            + self.at(i1, j1) * fa * fb;
        (v, ca || cb)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelProfile {
    pub prefill: KnotGrid,
    pub decode: KnotGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelTime {
    pub seconds: f64,
    /// The query lay outside the knot hull and was clamped.
    pub clamped: bool,
}

/// Step time for `phase` at `(a, b)`.
pub fn kernel_time(profile: &KernelProfile, phase: Phase, a: f64, b: f64) -> Result<KernelTime, SimError> {
    let grid = match phase {
        Phase::Prefill => &profile.prefill,
        Phase::Decode => &profile.decode,
    };
    if grid.a.is_empty() || grid.b.is_empty() || grid.seconds.is_empty() {
        return Err(SimError::Profile(format!("{phase:?} profile is empty")));
    }
    let (seconds, clamped) = grid.interpolate(a, b);
    Ok(KernelTime { seconds, clamped })
}

/// Coefficients of the built-in synthetic profile.
///
/// prefill(a, b) = base + per_token·a + attention·a·b  (quadratic in context
/// for a full prefill where a = b); decode(n, c) = base + per_seq·n + per_ctx·n·c.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticProfile {
    pub prefill_base_s: f64,
    pub prefill_per_token_s: f64,
    pub prefill_attention_s: f64,
    pub decode_base_s: f64,
    pub decode_per_seq_s: f64,
    pub decode_per_ctx_token_s: f64,
    pub token_knots: Vec<f64>,
    pub batch_knots: Vec<f64>,
}

impl Default for SyntheticProfile {
    fn default() -> Self {
        Self {
            prefill_base_s: 0.004,
            prefill_per_token_s: 4.0e-5,
            prefill_attention_s: 2.0e-10,
            decode_base_s: 0.012,
            decode_per_seq_s: 2.0e-4,
            decode_per_ctx_token_s: 4.0e-9,
            token_knots: vec![
                1.0, 16.0, 64.0, 256.0, 1024.0, 4096.0, 16384.0, 65536.0, 131072.0,
            ],
            batch_knots: vec![1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0],
        }
    }
}

impl KernelProfile {
    pub fn synthetic(p: &SyntheticProfile) -> Result<Self, SimError> {
        let prefill = KnotGrid {
            a: p.token_knots.clone(),
            b: p.token_knots.clone(),
            seconds: p
                .token_knots
                .iter()
                .flat_map(|&a| {
                    p.token_knots.iter().map(move |&b| {
                        p.prefill_base_s + p.prefill_per_token_s * a + p.prefill_attention_s * a * b
                    })
                })
                .collect(),
        };
        let decode = KnotGrid {
            a: p.batch_knots.clone(),
            b: p.token_knots.clone(),
            seconds: p
                .batch_knots
                .iter()
                .flat_map(|&n| {
                    p.token_knots.iter().map(move |&c| {
                        p.decode_base_s + p.decode_per_seq_s * n + p.decode_per_ctx_token_s * n * c
                    })
                })
                .collect(),
        };
        let profile = Self { prefill, decode };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        self.prefill.validate(Phase::Prefill)?;
        self.decode.validate(Phase::Decode)
    }

    /// Reads `phase,a,b,seconds` rows. Every (a, b) pair of the grid spanned
    /// by the distinct axis values must be present.
    pub fn from_csv<R: Read>(r: R) -> Result<Self, SimError> {
        #[derive(Deserialize)]
        struct Row {
            phase: Phase,
            a: f64,
            b: f64,
            seconds: f64,
        }
        let mut cells: [BTreeMap<(u64, u64), f64>; 2] = [BTreeMap::new(), BTreeMap::new()];
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        for (i, row) in rdr.deserialize::<Row>().enumerate() {
            let row = row.map_err(|e| SimError::Profile(format!("row {}: {e}", i + 2)))?;
            let slot = match row.phase {
                Phase::Prefill => 0,
                Phase::Decode => 1,
            };
            if cells[slot]
                .insert((row.a.to_bits(), row.b.to_bits()), row.seconds)
                .is_some()
            {
                return Err(SimError::Profile(format!(
                    "duplicate knot ({}, {}) for {:?}",
                    row.a, row.b, row.phase
                )));
            }
        }
        let build = |m: &BTreeMap<(u64, u64), f64>, phase: Phase| -> Result<KnotGrid, SimError> {
            let mut a: Vec<f64> = m.keys().map(|k| f64::from_bits(k.0)).collect();
            let mut b: Vec<f64> = m.keys().map(|k| f64::from_bits(k.1)).collect();
            for v in [&mut a, &mut b] {
                v.sort_by(f64::total_cmp);
                v.dedup();
            }
            let mut seconds = Vec::with_capacity(a.len() * b.len());
            for &x in &a {
                for &y in &b {
                    let v = m.get(&(x.to_bits(), y.to_bits())).ok_or_else(|| {
                        SimError::Profile(format!("{phase:?} grid is missing knot ({x}, {y})"))
                    })?;
                    seconds.push(*v);
                }
            }
            Ok(KnotGrid { a, b, seconds })
        };
        let profile = Self {
            prefill: build(&cells[0], Phase::Prefill)?,
            decode: build(&cells[1], Phase::Decode)?,
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["phase", "a", "b", "seconds"])?;
        for (name, g) in [("prefill", &self.prefill), ("decode", &self.decode)] {
            for (i, a) in g.a.iter().enumerate() {
                for (j, b) in g.b.iter().enumerate() {
                    wr.write_record([
                        name.to_string(),
                        a.to_string(),
                        b.to_string(),
                        g.at(i, j).to_string(),
                    ])?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }
}
