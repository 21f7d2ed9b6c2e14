use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ROW_TOL: f64 = 1e-12;

/// Default base of the off-diagonal decay in [`make_exponential_noise`].
pub const DEFAULT_DECAY: f64 = 10.0;

fn default_decay() -> f64 {
    DEFAULT_DECAY
}

/// Serialized description of the per-sensor channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// `P(Y ≠ X) = p`, with error mass decaying in the rank distance.
    Exponential {
        p: f64,
        #[serde(default = "default_decay")]
        decay: f64,
    },
    /// Explicit row-stochastic matrix `rows[x][y]`.
    Matrix { rows: Vec<Vec<f64>> },
}

/// Row-stochastic channel `W(y|x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseChannel {
    rows: Vec<Vec<f64>>,
}

impl NoiseChannel {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || width == 0 {
            return Err(Error::model("noise.rows", "channel matrix is empty"));
        }
        for (x, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::model(
                    "noise.rows",
                    format!("row {x} has {} entries, expected {width}", row.len()),
                ));
            }
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::model(
                    "noise.rows",
                    format!("row {x} has a negative or non-finite entry"),
                ));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_TOL {
                return Err(Error::model("noise.rows", format!("row {x} sums to {s}")));
            }
        }
        Ok(NoiseChannel { rows })
    }

    pub fn identity(size: usize) -> Self {
        let rows = (0..size)
            .map(|x| (0..size).map(|y| if x == y { 1.0 } else { 0.0 }).collect())
            .collect();
        NoiseChannel { rows }
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn inputs(&self) -> usize {
        self.rows.len()
    }

    pub fn outputs(&self) -> usize {
        self.rows[0].len()
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.rows[x][y]
    }
}

/// Channel over `size` ordered symbols with `W(x|x) = 1 − p` and the error
/// mass `p` spread over `y ≠ x` proportionally to `decay^{−|y−x|}`.
pub fn make_exponential_noise(p: f64, size: usize, decay: f64) -> Result<NoiseChannel> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidProbability(p));
    }
    if !decay.is_finite() || decay <= 0.0 {
        return Err(Error::model("noise.decay", "decay base must be positive"));
    }
    if size == 0 {
        return Err(Error::model("noise", "output alphabet is empty"));
    }
    if size == 1 {
        if p > 0.0 {
            return Err(Error::model(
                "noise.p",
                "a single-output sensor cannot make errors",
            ));
        }
        return Ok(NoiseChannel::identity(1));
    }
    let rows = (0..size)
        .map(|x| {
            let w = |y: usize| decay.powi(-((x.abs_diff(y)) as i32));
            let z: f64 = (0..size).filter(|&y| y != x).map(w).sum();
            (0..size)
                .map(|y| if y == x { 1.0 - p } else { p * w(y) / z })
                .collect()
        })
        .collect();
    Ok(NoiseChannel { rows })
}
