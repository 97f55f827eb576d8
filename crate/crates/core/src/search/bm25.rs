use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 0.9, b: 0.4 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self> {
        let params = Bm25Params { k1, b };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.k1.is_finite() || self.k1 < 0.0 {
            return Err(Error::Parameter(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::Parameter(format!("b must be in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

/// `ln(1 + (N - df + 0.5) / (df + 0.5))`, always positive.
pub fn idf(df: u32, num_docs: u64) -> f64 {
    let df = f64::from(df);
    (1.0 + (num_docs as f64 - df + 0.5) / (df + 0.5)).ln()
}

/// Per-term contribution with a precomputed idf. No domain checks.
#[inline]
pub(crate) fn term_score(tf: u32, idf: f64, dl: u32, avgdl: f64, params: Bm25Params) -> f64 {
    let tf = f64::from(tf);
    let norm = 1.0 - params.b + params.b * f64::from(dl) / avgdl;
    idf * (tf * (params.k1 + 1.0)) / (tf + params.k1 * norm)
}

/// BM25 contribution of one term to one document.
///
/// A term absent from the document (`tf == 0`) contributes 0.
pub fn score_bm25(
    tf: u32,
    df: u32,
    dl: u32,
    num_docs: u64,
    avgdl: f64,
    params: Bm25Params,
) -> Result<f64> {
    params.validate()?;
    if num_docs == 0 {
        return Err(Error::Parameter("N must be positive".to_string()));
    }
    if df == 0 || u64::from(df) > num_docs {
        return Err(Error::Parameter(format!(
            "df must be in 1..={num_docs}, got {df}"
        )));
    }
    if !avgdl.is_finite() || avgdl <= 0.0 {
        return Err(Error::Parameter(format!("avgdl must be positive, got {avgdl}")));
    }
    if tf == 0 {
        return Ok(0.0);
    }
    Ok(term_score(tf, idf(df, num_docs), dl, avgdl, params))
}
