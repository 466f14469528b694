use serde::{Deserialize, Serialize};

use super::similarity::Similarity;

/// Summary of one similarity function's scores over a postings list.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub max: f64,
    pub mean: f64,
    pub geo_mean: f64,
    pub harmonic_mean: f64,
    pub median: f64,
    pub variance: f64,
}

/// Per-list statistics, in [`ScoreSummary::STATS`] order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Stat {
    Max,
    Mean,
    GeoMean,
    HarmonicMean,
    Median,
    Variance,
}

impl ScoreSummary {
    pub const STATS: [Stat; 6] = [
        Stat::Max,
        Stat::Mean,
        Stat::GeoMean,
        Stat::HarmonicMean,
        Stat::Median,
        Stat::Variance,
    ];

    pub fn get(&self, stat: Stat) -> f64 {
        match stat {
            Stat::Max => self.max,
            Stat::Mean => self.mean,
            Stat::GeoMean => self.geo_mean,
            Stat::HarmonicMean => self.harmonic_mean,
            Stat::Median => self.median,
            Stat::Variance => self.variance,
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        Self::STATS.map(|s| self.get(s))
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        ScoreSummary {
            max: a[0],
            mean: a[1],
            geo_mean: a[2],
            harmonic_mean: a[3],
            median: a[4],
            variance: a[5],
        }
    }

    /// Summarize non-negative scores. Any zero collapses geometric and
    /// harmonic means to 0. Population variance.
    pub fn from_scores(scores: &[f64]) -> Self {
        if scores.is_empty() {
            return Self::default();
        }
        let n = scores.len() as f64;
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let max = *sorted.last().unwrap();
        let mean = sorted.iter().sum::<f64>() / n;
        let mid = sorted.len() / 2;
        let median = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            0.5 * (sorted[mid - 1] + sorted[mid])
        };
        let variance = sorted.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
        let has_zero = sorted[0] <= 0.0;
        let geo_mean = if has_zero {
            0.0
        } else {
            (sorted.iter().map(|s| s.ln()).sum::<f64>() / n).exp()
        };
        let harmonic_mean = if has_zero {
            0.0
        } else {
            n / sorted.iter().map(|s| 1.0 / s).sum::<f64>()
        };
        // rounding can push the means a few ulps out of order
        let mean = mean.min(max);
        let geo_mean = geo_mean.min(mean);
        let harmonic_mean = harmonic_mean.min(geo_mean);
        ScoreSummary {
            max,
            mean,
            geo_mean,
            harmonic_mean,
            median,
            variance,
        }
    }
}

/// Precomputed statistics of one term's postings list.
#[derive(Clone, Debug, PartialEq)]
pub struct TermStats {
    pub doc_freq: u32,
    pub coll_freq: u64,
    /// Indexed in [`Similarity::ALL`] order.
    pub summaries: [ScoreSummary; 6],
}

impl TermStats {
    pub fn summary(&self, sim: Similarity) -> &ScoreSummary {
        let i = Similarity::ALL.iter().position(|s| *s == sim).unwrap();
        &self.summaries[i]
    }
}
