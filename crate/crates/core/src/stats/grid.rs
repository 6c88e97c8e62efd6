//! Binned symptom trajectories for the selected cluster versus everyone else.

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::cohort::{Cohort, MAX_RATING};
use crate::error::{Error, Result};

/// Rating bins given by their lower edges; the last bin runs to 10.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingBins {
    pub lower_edges: Vec<u8>,
}

impl Default for RatingBins {
    /// {0-1}, {2-3}, {4-5}, {6-7}, {8-10}.
    fn default() -> Self {
        RatingBins {
            lower_edges: vec![0, 2, 4, 6, 8],
        }
    }
}

impl RatingBins {
    pub fn validate(&self) -> Result<()> {
        let e = &self.lower_edges;
        if e.first() != Some(&0) {
            return Err(Error::invalid("rating_bins", "first edge must be 0"));
        }
        if e.windows(2).any(|w| w[0] >= w[1]) || e.last().is_some_and(|&v| v > MAX_RATING) {
            return Err(Error::invalid(
                "rating_bins",
                "edges must increase strictly and stay within 0..=10",
            ));
        }
        Ok(())
    }

    pub fn bin_of(&self, rating: u8) -> usize {
        self.lower_edges.iter().rposition(|&lo| lo <= rating).unwrap_or(0)
    }

    /// Inclusive `[lo, hi]` per bin.
    pub fn ranges(&self) -> Vec<[u8; 2]> {
        let e = &self.lower_edges;
        (0..e.len())
            .map(|i| [e[i], e.get(i + 1).map_or(MAX_RATING, |n| n - 1)])
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DateBin {
    pub label: String,
    pub time_points: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeGrid {
    pub symptom: String,
    pub selected_cluster: usize,
    pub date_bins: Vec<DateBin>,
    pub rating_bins: Vec<[u8; 2]>,
    /// `in_cluster[date][rating]`: share of selected-cluster patients whose highest
    /// rating within the date bin falls in the rating bin.
    pub in_cluster: Vec<Vec<f64>>,
    pub out_cluster: Vec<Vec<f64>>,
    /// Patients with at least one rating in each date bin.
    pub in_counts: Vec<usize>,
    pub out_counts: Vec<usize>,
    /// `mean_series[rank][date]`: average of the per-patient highest rating.
    pub mean_series: Vec<Vec<Option<f64>>>,
}

/// Splits `len` items into `bins` contiguous runs whose sizes differ by at most one.
fn partition(len: usize, bins: usize) -> Vec<std::ops::Range<usize>> {
    (0..bins)
        .map(|b| b * len / bins..(b + 1) * len / bins)
        .collect()
}

pub fn outcome_grid(
    cohort: &Cohort,
    model: &ClusterModel,
    selected_cluster: usize,
    symptom: &str,
    n_date_bins: usize,
    rating_bins: &RatingBins,
) -> Result<OutcomeGrid> {
    let k = model.k();
    if selected_cluster >= k {
        return Err(Error::invalid(
            "selected_cluster",
            format!("cluster rank {selected_cluster} out of range (k = {k})"),
        ));
    }
    rating_bins.validate()?;
    let t_len = cohort.time_points().len();
    if n_date_bins == 0 || n_date_bins > t_len {
        return Err(Error::invalid(
            "date_bins",
            format!("need between 1 and {t_len} date bins (got {n_date_bins})"),
        ));
    }
    let s = cohort.symptom_index(symptom)?;
    let runs = partition(t_len, n_date_bins);
    let date_bins = runs
        .iter()
        .map(|r| {
            let tps: Vec<String> = cohort.time_points()[r.clone()].to_vec();
            let label = if tps.len() == 1 {
                tps[0].clone()
            } else {
                format!("{}..{}", tps[0], tps[tps.len() - 1])
            };
            DateBin {
                label,
                time_points: tps,
            }
        })
        .collect();
    let nr = rating_bins.lower_edges.len();
    let mut in_hits = vec![vec![0usize; nr]; n_date_bins];
    let mut out_hits = vec![vec![0usize; nr]; n_date_bins];
    let mut in_counts = vec![0usize; n_date_bins];
    let mut out_counts = vec![0usize; n_date_bins];
    let mut sums = vec![vec![(0u64, 0usize); n_date_bins]; k];
    for (&pid, rank) in model.row_ids.iter().zip(model.ranked_assignments()) {
        let p = &cohort.patients()[pid];
        for (b, run) in runs.iter().enumerate() {
            let Some(peak) = run.clone().filter_map(|t| p.rating(s, t)).max() else {
                continue;
            };
            let rb = rating_bins.bin_of(peak);
            if rank == selected_cluster {
                in_hits[b][rb] += 1;
                in_counts[b] += 1;
            } else {
                out_hits[b][rb] += 1;
                out_counts[b] += 1;
            }
            sums[rank][b].0 += u64::from(peak);
            sums[rank][b].1 += 1;
        }
    }
    let fractions = |hits: &[Vec<usize>], counts: &[usize]| -> Vec<Vec<f64>> {
        hits.iter()
            .zip(counts)
            .map(|(row, &c)| {
                row.iter()
                    .map(|&h| if c > 0 { h as f64 / c as f64 } else { 0.0 })
                    .collect()
            })
            .collect()
    };
    Ok(OutcomeGrid {
        symptom: symptom.to_string(),
        selected_cluster,
        date_bins,
        rating_bins: rating_bins.ranges(),
        in_cluster: fractions(&in_hits, &in_counts),
        out_cluster: fractions(&out_hits, &out_counts),
        in_counts,
        out_counts,
        mean_series: sums
            .iter()
            .map(|row| {
                row.iter()
                    .map(|&(s, c)| (c > 0).then(|| s as f64 / c as f64))
                    .collect()
            })
            .collect(),
    })
}
