//! lp moduli, disjoint block partitions and order statistics of block norms.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Exponent of the p-modulus: a positive real or infinity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PExponent {
    Finite(f64),
    Infinity,
}

impl PExponent {
    pub fn finite(p: f64) -> Result<Self> {
        if p.is_finite() && p > 0.0 {
            Ok(PExponent::Finite(p))
        } else if p == f64::INFINITY {
            Ok(PExponent::Infinity)
        } else {
            Err(Error::param("p", format!("must be > 0, got {p}")))
        }
    }

    pub fn value(self) -> f64 {
        match self {
            PExponent::Finite(p) => p,
            PExponent::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for PExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PExponent::Finite(p) => write!(f, "{p}"),
            PExponent::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for PExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "Inf" => Ok(PExponent::Infinity),
            other => {
                let p: f64 = other
                    .parse()
                    .map_err(|_| Error::param("p", format!("cannot parse `{other}`")))?;
                PExponent::finite(p)
            }
        }
    }
}

impl Serialize for PExponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PExponent::Finite(p) => s.serialize_f64(*p),
            PExponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for PExponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(p) => PExponent::finite(p),
            Raw::Text(t) => t.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

// Beyond this |p * ln(max)| the direct powers risk overflow or underflow.
const LOG_SAFE: f64 = 600.0;

/// `(sum |x_t|^p)^(1/p)`, or `max |x_t|` for `p = inf`; 0 for empty input.
pub fn lp_modulus(x: &[f64], p: PExponent) -> f64 {
    let max = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let p = match p {
        PExponent::Infinity => return max,
        PExponent::Finite(p) => p,
    };
    if max == 0.0 {
        return 0.0;
    }
    if p == 1.0 {
        return x.iter().map(|v| v.abs()).sum();
    }
    if (p * max.ln()).abs() < LOG_SAFE {
        let s: f64 = x.iter().map(|v| v.abs().powf(p)).sum();
        s.powf(p.recip())
    } else {
        // Factor out the maximum so every term lies in [0, 1].
        let s: f64 = x.iter().map(|v| (v.abs() / max).powf(p)).sum();
        max * s.powf(p.recip())
    }
}

/// `m = floor(n / b)` disjoint blocks of length `b`; the trailing
/// `n - m b` observations are dropped.
#[derive(Debug, Clone, Copy)]
pub struct BlockPartition<'a> {
    data: &'a [f64],
    b: usize,
    m: usize,
}

impl<'a> BlockPartition<'a> {
    pub fn block_len(&self) -> usize {
        self.b
    }

    pub fn block_count(&self) -> usize {
        self.m
    }

    pub fn block(&self, t: usize) -> &'a [f64] {
        &self.data[t * self.b..(t + 1) * self.b]
    }

    pub fn blocks(&self) -> impl ExactSizeIterator<Item = &'a [f64]> + 'a {
        self.data[..self.m * self.b].chunks_exact(self.b)
    }

    /// Index ranges of the blocks, 0-based and half-open.
    pub fn ranges(&self) -> impl Iterator<Item = std::ops::Range<usize>> {
        let b = self.b;
        (0..self.m).map(move |t| t * b..(t + 1) * b)
    }
}

pub fn partition(series: &[f64], b: usize) -> Result<BlockPartition<'_>> {
    if b == 0 {
        return Err(Error::param("b", "block length must be >= 1"));
    }
    let n = series.len();
    if b > n {
        return Err(Error::BlockLongerThanSample { b, n });
    }
    Ok(BlockPartition {
        data: series,
        b,
        m: n / b,
    })
}

/// Block p-moduli and their descending order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct NormOrderStats {
    pub norms: Vec<f64>,
    /// `(block index, norm)` sorted by norm descending; ties keep block order.
    pub sorted_desc: Vec<(usize, f64)>,
    pub p: PExponent,
}

impl NormOrderStats {
    /// The `(k + 1)`-th largest norm, i.e. the threshold for `k` extremal blocks.
    pub fn kth_threshold(&self, k: usize) -> Option<f64> {
        self.sorted_desc.get(k).map(|&(_, v)| v)
    }
}

pub fn order_stats(partition: &BlockPartition<'_>, p: PExponent) -> NormOrderStats {
    let norms: Vec<f64> = partition.blocks().map(|blk| lp_modulus(blk, p)).collect();
    let mut sorted_desc: Vec<(usize, f64)> = norms.iter().copied().enumerate().collect();
    sorted_desc.sort_by(|a, b| b.1.total_cmp(&a.1));
    NormOrderStats {
        norms,
        sorted_desc,
        p,
    }
}
