//! Clustering feature spaces: which organs and which DVH window, the realized
//! patient-by-feature matrix, and the PCA projection used for scatterplots.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, FeatureKey};
use crate::error::{Error, Result};

/// A contiguous VX range, both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Window {
    pub lo: u8,
    pub hi: u8,
}

impl Window {
    pub fn new(lo: u8, hi: u8) -> Result<Self> {
        let w = Window { lo, hi };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("window.lo", self.lo), ("window.hi", self.hi)] {
            if v % 5 != 0 || !(5..=95).contains(&v) {
                return Err(Error::invalid(
                    name,
                    format!("must be one of 5, 10, ..., 95 (got {v})"),
                ));
            }
        }
        if self.lo > self.hi {
            return Err(Error::invalid(
                "window",
                format!("lo ({}) exceeds hi ({})", self.lo, self.hi),
            ));
        }
        Ok(())
    }

    /// Number of VX levels covered.
    pub fn len(&self) -> usize {
        usize::from((self.hi - self.lo) / 5 + 1)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn keys(&self) -> impl Iterator<Item = FeatureKey> {
        (self.lo..=self.hi).step_by(5).map(FeatureKey::V)
    }
}

fn default_window() -> Window {
    Window { lo: 40, hi: 55 }
}

impl Default for Window {
    fn default() -> Self {
        default_window()
    }
}

/// The organ set and DVH window defining a clustering space.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSpec {
    pub organs: Vec<String>,
    #[serde(default = "default_window")]
    pub window: Window,
    #[serde(default)]
    pub include_mean: bool,
    #[serde(default)]
    pub include_max: bool,
}

impl FeatureSpec {
    pub fn new(organs: Vec<String>, window: Window) -> Self {
        FeatureSpec {
            organs,
            window,
            include_mean: false,
            include_max: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.organs.is_empty() {
            return Err(Error::invalid("organs", "feature spec needs at least one organ"));
        }
        for (i, o) in self.organs.iter().enumerate() {
            if self.organs[..i].contains(o) {
                return Err(Error::invalid("organs", format!("organ {o:?} listed twice")));
            }
        }
        self.window.validate()
    }

    /// Features per organ.
    pub fn window_size(&self) -> usize {
        self.window.len() + usize::from(self.include_mean) + usize::from(self.include_max)
    }

    /// Column count of the matrix this spec produces.
    pub fn dimension(&self) -> usize {
        self.organs.len() * self.window_size()
    }

    /// Per-organ feature keys in canonical order.
    pub fn keys(&self) -> Vec<FeatureKey> {
        let mut keys: Vec<FeatureKey> = self.window.keys().collect();
        if self.include_mean {
            keys.push(FeatureKey::Mean);
        }
        if self.include_max {
            keys.push(FeatureKey::Max);
        }
        keys
    }

    /// Reorders `organs` to follow `organ_order`; unknown names go last, in their
    /// original order.
    pub fn canonicalize(&mut self, organ_order: &[&str]) {
        let pos = |o: &String| {
            organ_order
                .iter()
                .position(|n| n == o)
                .unwrap_or(usize::MAX)
        };
        self.organs.sort_by_key(pos);
    }

    pub fn check_against(&self, cohort: &Cohort) -> Result<Vec<usize>> {
        self.validate()?;
        self.organs.iter().map(|o| cohort.organ_index(o)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnLabel {
    pub organ: String,
    pub feature: FeatureKey,
}

/// An n-by-d row-major matrix of features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub n: usize,
    pub d: usize,
    pub values: Vec<f64>,
    /// Cohort patient index of each row.
    pub row_ids: Vec<usize>,
    pub column_labels: Vec<ColumnLabel>,
    pub standardized: bool,
    /// Raw column means and population standard deviations, when standardized.
    pub column_means: Option<Vec<f64>>,
    pub column_stds: Option<Vec<f64>>,
}

impl FeatureMatrix {
    /// Builds an unstandardized matrix from rows; used by tests and the scatter endpoint.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("rows", "rows have different lengths"));
        }
        Ok(FeatureMatrix {
            n,
            d,
            values: rows.concat(),
            row_ids: (0..n).collect(),
            column_labels: (0..d)
                .map(|j| ColumnLabel {
                    organ: format!("c{j}"),
                    feature: FeatureKey::Mean,
                })
                .collect(),
            standardized: false,
            column_means: None,
            column_stds: None,
        })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.d.max(1)).take(self.n)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.d + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("row");
        for l in &self.column_labels {
            out.push_str(&format!(",{}__{}", l.organ, l.feature));
        }
        out.push('\n');
        for (r, row) in self.rows().enumerate() {
            out.push_str(&self.row_ids[r].to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    fn standardize(&mut self) {
        let (n, d) = (self.n, self.d);
        let mut means = vec![0.0; d];
        let mut stds = vec![0.0; d];
        for j in 0..d {
            let col = self.column(j);
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let std = var.sqrt();
            // Relative test: a column of identical values can carry rounding noise.
            let constant = std <= 1e-12 * mean.abs().max(1.0);
            for i in 0..n {
                let v = &mut self.values[i * d + j];
                *v = if constant { 0.0 } else { (*v - mean) / std };
            }
            means[j] = mean;
            stds[j] = if constant { 0.0 } else { std };
        }
        self.standardized = true;
        self.column_means = Some(means);
        self.column_stds = Some(stds);
    }
}

/// Realizes `spec` on `cohort`. Patients missing dose data for any spec organ are
/// skipped; `row_ids` records which patients were kept.
pub fn extract_feature_matrix(
    cohort: &Cohort,
    spec: &FeatureSpec,
    standardize: bool,
) -> Result<FeatureMatrix> {
    let organ_idx = spec.check_against(cohort)?;
    let keys = spec.keys();
    let d = spec.dimension();
    let mut values = Vec::with_capacity(cohort.len() * d);
    let mut row_ids = Vec::with_capacity(cohort.len());
    'patients: for (pi, p) in cohort.patients().iter().enumerate() {
        let start = values.len();
        for &o in &organ_idx {
            let Some(dvh) = &p.dvh[o] else {
                values.truncate(start);
                continue 'patients;
            };
            values.extend(keys.iter().map(|&k| dvh.get(k)));
        }
        row_ids.push(pi);
    }
    let column_labels = spec
        .organs
        .iter()
        .flat_map(|o| {
            keys.iter().map(move |&k| ColumnLabel {
                organ: o.clone(),
                feature: k,
            })
        })
        .collect();
    let mut m = FeatureMatrix {
        n: row_ids.len(),
        d,
        values,
        row_ids,
        column_labels,
        standardized: false,
        column_means: None,
        column_stds: None,
    };
    if m.n == 0 {
        return Err(Error::invalid(
            "organs",
            "no patient has dose data for every organ in the feature spec",
        ));
    }
    if standardize {
        m.standardize();
    }
    Ok(m)
}

/// Principal components of a matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pca {
    /// Eigenvalues of the covariance, descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalue shares of the total variance; all zero for a constant matrix.
    pub explained: Vec<f64>,
    /// Unit loadings, one vector per component; the largest-magnitude entry is positive.
    pub loadings: Vec<Vec<f64>>,
    pub column_means: Vec<f64>,
    /// Components available for projection: min(n - 1, d).
    pub rank: usize,
}

impl Pca {
    pub fn fit(m: &FeatureMatrix) -> Result<Pca> {
        let (n, d) = (m.n, m.d);
        if n < 2 {
            return Err(Error::invalid("rows", "PCA needs at least two rows"));
        }
        if d == 0 {
            return Err(Error::invalid("columns", "PCA needs at least one column"));
        }
        if m.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let means: Vec<f64> = (0..d)
            .map(|j| (0..n).map(|i| m.get(i, j)).sum::<f64>() / n as f64)
            .collect();
        let centered = DMatrix::from_fn(n, d, |i, j| m.get(i, j) - means[j]);
        let cov = (centered.transpose() * &centered) / (n as f64 - 1.0);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let total: f64 = eigenvalues.iter().sum();
        let explained = eigenvalues
            .iter()
            .map(|&l| if total > 0.0 { l / total } else { 0.0 })
            .collect();
        let loadings = order
            .iter()
            .map(|&i| {
                let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
                let big = v
                    .iter()
                    .copied()
                    .fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
                if big < 0.0 {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
                v
            })
            .collect();
        Ok(Pca {
            eigenvalues,
            explained,
            loadings,
            column_means: means,
            rank: (n - 1).min(d),
        })
    }

    pub fn project(&self, m: &FeatureMatrix, component: usize) -> Result<Vec<f64>> {
        if component >= self.rank {
            return Err(Error::invalid(
                "components",
                format!("component {component} out of range (rank {})", self.rank),
            ));
        }
        let w = &self.loadings[component];
        Ok(m
            .rows()
            .map(|r| {
                r.iter()
                    .zip(&self.column_means)
                    .zip(w)
                    .map(|((x, mu), l)| (x - mu) * l)
                    .sum()
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Projection {
    /// One `[x, y]` pair per matrix row.
    pub coordinates: Vec<[f64; 2]>,
    /// Explained-variance fractions of the two requested components.
    pub explained: [f64; 2],
}

/// Projects onto principal components `components.0` and `components.1` (0-based).
pub fn project_pca(m: &FeatureMatrix, components: (usize, usize)) -> Result<Projection> {
    let pca = Pca::fit(m)?;
    let xs = pca.project(m, components.0)?;
    let ys = pca.project(m, components.1)?;
    Ok(Projection {
        coordinates: xs.into_iter().zip(ys).map(|(x, y)| [x, y]).collect(),
        explained: [pca.explained[components.0], pca.explained[components.1]],
    })
}
