//! Ingestion and validation of source experimental data and target
//! covariate data from CSV files (RFC-4180 style, mandatory header).
//!
//! Treatment labels in the source file may be arbitrary strings; they are
//! re-indexed to `1..=d` in first-appearance order and the mapping is kept
//! on the dataset. All numeric cells must parse to finite values.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;

/// Column names for a source CSV: outcome, treatment, covariates.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct SourceSchema {
    pub outcome: String,
    pub treatment: String,
    pub covariates: Vec<String>,
}

impl SourceSchema {
    /// Default layout `y`, `a`, `x1..xk`.
    pub fn default_with_k(k: usize) -> Self {
        SourceSchema {
            outcome: "y".into(),
            treatment: "a".into(),
            covariates: (1..=k).map(|i| format!("x{i}")).collect(),
        }
    }
}

/// Validated draws `(Y_i, A_i, X_i)` from the source experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDataset {
    outcomes: Vec<f64>,
    treatments: Vec<usize>,
    covariates: Mat,
    treatment_labels: Vec<String>,
}

impl SourceDataset {
    /// Build from columns, re-indexing labels to `1..=d` in first-appearance
    /// order. Rejects empty data, non-finite values, and single-arm data.
    pub fn from_labeled(
        outcomes: Vec<f64>,
        treatment_labels_per_row: &[String],
        covariates: Mat,
    ) -> Result<Self> {
        let n = outcomes.len();
        if n == 0 {
            return Err(Error::Schema("source data has no rows".into()));
        }
        if treatment_labels_per_row.len() != n || covariates.rows() != n {
            return Err(Error::Dimension(
                "outcome, treatment, and covariate row counts differ".into(),
            ));
        }
        for (i, y) in outcomes.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::Parse { row: i + 1, message: "non-finite outcome".into() });
            }
        }
        if !covariates.is_finite() {
            return Err(Error::Domain("covariates contain non-finite values".into()));
        }

        let mut labels: Vec<String> = Vec::new();
        let mut treatments = Vec::with_capacity(n);
        for label in treatment_labels_per_row {
            let idx = match labels.iter().position(|l| l == label) {
                Some(p) => p + 1,
                None => {
                    labels.push(label.clone());
                    labels.len()
                }
            };
            treatments.push(idx);
        }
        if labels.len() < 2 {
            return Err(Error::Overlap(format!(
                "treatment column contains a single label {:?}; need at least two arms",
                labels.first().cloned().unwrap_or_default()
            )));
        }
        Ok(SourceDataset { outcomes, treatments, covariates, treatment_labels: labels })
    }

    /// Build from already-indexed treatments; every arm in `1..=d` must
    /// appear at least once, where `d` is the largest index used.
    pub fn from_indexed(
        outcomes: Vec<f64>,
        treatments: Vec<usize>,
        covariates: Mat,
    ) -> Result<Self> {
        let n = outcomes.len();
        if n == 0 {
            return Err(Error::Schema("source data has no rows".into()));
        }
        if treatments.len() != n || covariates.rows() != n {
            return Err(Error::Dimension(
                "outcome, treatment, and covariate row counts differ".into(),
            ));
        }
        for (i, y) in outcomes.iter().enumerate() {
            if !y.is_finite() {
                return Err(Error::Parse { row: i + 1, message: "non-finite outcome".into() });
            }
        }
        if !covariates.is_finite() {
            return Err(Error::Domain("covariates contain non-finite values".into()));
        }
        let d = treatments.iter().copied().max().unwrap_or(0);
        if d < 2 {
            return Err(Error::Overlap("need at least two treatment arms".into()));
        }
        let mut counts = vec![0usize; d];
        for &a in &treatments {
            if a == 0 {
                return Err(Error::Domain("treatment indices are 1-based".into()));
            }
            counts[a - 1] += 1;
        }
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Overlap(format!("arm {} has no observations", missing + 1)));
        }
        let treatment_labels = (1..=d).map(|a| a.to_string()).collect();
        Ok(SourceDataset { outcomes, treatments, covariates, treatment_labels })
    }

    pub fn n(&self) -> usize {
        self.outcomes.len()
    }

    /// Number of treatment arms.
    pub fn d(&self) -> usize {
        self.treatment_labels.len()
    }

    /// Number of covariates.
    pub fn k(&self) -> usize {
        self.covariates.cols()
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn treatments(&self) -> &[usize] {
        &self.treatments
    }

    pub fn covariates(&self) -> &Mat {
        &self.covariates
    }

    /// Original label of arm `a` (1-based).
    pub fn label(&self, a: usize) -> &str {
        &self.treatment_labels[a - 1]
    }

    pub fn labels(&self) -> &[String] {
        &self.treatment_labels
    }

    /// Row indices assigned to arm `a` (1-based).
    pub fn arm_rows(&self, a: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.treatments[i] == a).collect()
    }
}

/// Covariate rows from the target population.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetCovariates {
    covariates: Mat,
}

impl TargetCovariates {
    pub fn new(covariates: Mat) -> Result<Self> {
        if covariates.rows() == 0 {
            return Err(Error::Schema("target data has no rows".into()));
        }
        if !covariates.is_finite() {
            return Err(Error::Domain("target covariates contain non-finite values".into()));
        }
        Ok(TargetCovariates { covariates })
    }

    pub fn n(&self) -> usize {
        self.covariates.rows()
    }

    pub fn k(&self) -> usize {
        self.covariates.cols()
    }

    pub fn covariates(&self) -> &Mat {
        &self.covariates
    }

    pub fn row(&self, j: usize) -> &[f64] {
        self.covariates.row(j)
    }
}

/// Closed interval of admissible outcomes; the endpoints may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpace {
    pub lower: f64,
    pub upper: f64,
}

impl OutcomeSpace {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower < upper) || lower.is_nan() || upper.is_nan() {
            return Err(Error::Domain(format!(
                "outcome space requires lower < upper, got [{lower}, {upper}]"
            )));
        }
        Ok(OutcomeSpace { lower, upper })
    }

    pub fn unbounded() -> Self {
        OutcomeSpace { lower: f64::NEG_INFINITY, upper: f64::INFINITY }
    }

    pub fn nonnegative() -> Self {
        OutcomeSpace { lower: 0.0, upper: f64::INFINITY }
    }

    /// `[0, +inf)` when all outcomes are non-negative, else the whole line.
    pub fn infer(outcomes: &[f64]) -> Self {
        if outcomes.iter().all(|&y| y >= 0.0) {
            Self::nonnegative()
        } else {
            Self::unbounded()
        }
    }

    pub fn contains(&self, y: f64) -> bool {
        y >= self.lower && y <= self.upper
    }

    pub fn validate_outcomes(&self, outcomes: &[f64]) -> Result<()> {
        for (i, &y) in outcomes.iter().enumerate() {
            if !self.contains(y) {
                return Err(Error::Domain(format!(
                    "outcome {y} at row {} lies outside [{}, {}]",
                    i + 1,
                    self.lower,
                    self.upper
                )));
            }
        }
        Ok(())
    }
}

/// Per-arm observation counts and shares.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OverlapReport {
    pub labels: Vec<String>,
    pub counts: Vec<usize>,
    pub proportions: Vec<f64>,
}

pub fn overlap_report(ds: &SourceDataset) -> OverlapReport {
    let d = ds.d();
    let mut counts = vec![0usize; d];
    for &a in ds.treatments() {
        counts[a - 1] += 1;
    }
    let n = ds.n() as f64;
    let proportions = counts.iter().map(|&c| c as f64 / n).collect();
    OverlapReport { labels: ds.labels().to_vec(), counts, proportions }
}

/// Per-feature range comparison between source and target covariates.
///
/// Range containment is only a diagnostic for the support condition on the
/// covariate distributions; it is reported, never enforced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FeatureRange {
    pub feature: usize,
    pub source_min: f64,
    pub source_max: f64,
    pub target_min: f64,
    pub target_max: f64,
    pub contained: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub features: Vec<FeatureRange>,
    pub all_contained: bool,
}

pub fn range_containment(source: &Mat, target: &Mat) -> Result<ContainmentReport> {
    if source.cols() != target.cols() {
        return Err(Error::Dimension("source and target covariate counts differ".into()));
    }
    let mut features = Vec::with_capacity(source.cols());
    for c in 0..source.cols() {
        let (smin, smax) = col_range(source, c);
        let (tmin, tmax) = col_range(target, c);
        let contained = tmin >= smin && tmax <= smax;
        features.push(FeatureRange {
            feature: c + 1,
            source_min: smin,
            source_max: smax,
            target_min: tmin,
            target_max: tmax,
            contained,
        });
    }
    let all_contained = features.iter().all(|f| f.contained);
    Ok(ContainmentReport { features, all_contained })
}

fn col_range(m: &Mat, c: usize) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for r in 0..m.rows() {
        lo = lo.min(m.get(r, c));
        hi = hi.max(m.get(r, c));
    }
    (lo, hi)
}

/// Load and validate a source CSV against `schema`.
pub fn load_source(path: &Path, schema: &SourceSchema) -> Result<SourceDataset> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Schema(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("missing header row: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
    };
    let y_col = col(&schema.outcome)?;
    let a_col = col(&schema.treatment)?;
    let x_cols: Vec<usize> = schema.covariates.iter().map(|c| col(c)).collect::<Result<_>>()?;

    let mut outcomes = Vec::new();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record
            .map_err(|e| Error::Parse { row: row_no, message: format!("bad CSV record: {e}") })?;
        outcomes.push(parse_finite(record.get(y_col), row_no, &schema.outcome)?);
        labels.push(
            record
                .get(a_col)
                .ok_or_else(|| Error::Parse { row: row_no, message: "short record".into() })?
                .to_string(),
        );
        let mut xs = Vec::with_capacity(x_cols.len());
        for (&c, name) in x_cols.iter().zip(&schema.covariates) {
            xs.push(parse_finite(record.get(c), row_no, name)?);
        }
        rows.push(xs);
    }
    SourceDataset::from_labeled(outcomes, &labels, Mat::from_rows(&rows)?)
}

/// Load and validate a target covariate CSV with the given column names
/// (normally the source schema's covariate block).
pub fn load_target(path: &Path, covariate_names: &[String]) -> Result<TargetCovariates> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Schema(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("missing header row: {e}")))?
        .clone();
    let mut cols = Vec::with_capacity(covariate_names.len());
    for name in covariate_names {
        cols.push(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))?,
        );
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row_no = i + 1;
        let record = record
            .map_err(|e| Error::Parse { row: row_no, message: format!("bad CSV record: {e}") })?;
        let mut xs = Vec::with_capacity(cols.len());
        for (&c, name) in cols.iter().zip(covariate_names) {
            xs.push(parse_finite(record.get(c), row_no, name)?);
        }
        rows.push(xs);
    }
    TargetCovariates::new(Mat::from_rows(&rows)?)
}

/// Write a source dataset back to CSV. Values use the shortest
/// round-trippable decimal form, so re-loading reproduces them bit for bit.
pub fn write_source(ds: &SourceDataset, path: &Path, schema: &SourceSchema) -> Result<()> {
    if schema.covariates.len() != ds.k() {
        return Err(Error::Schema("schema covariate count does not match dataset".into()));
    }
    let mut writer = csv::Writer::from_path(path).map_err(csv_io)?;
    let mut header = vec![schema.outcome.clone(), schema.treatment.clone()];
    header.extend(schema.covariates.iter().cloned());
    writer.write_record(&header).map_err(csv_io)?;
    for i in 0..ds.n() {
        let mut record = vec![ds.outcomes[i].to_string(), ds.label(ds.treatments[i]).to_string()];
        record.extend(ds.covariates.row(i).iter().map(|v| v.to_string()));
        writer.write_record(&record).map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

/// Write target covariates to CSV.
pub fn write_target(tc: &TargetCovariates, path: &Path, covariate_names: &[String]) -> Result<()> {
    if covariate_names.len() != tc.k() {
        return Err(Error::Schema("covariate name count does not match data".into()));
    }
    let mut writer = csv::Writer::from_path(path).map_err(csv_io)?;
    writer.write_record(covariate_names).map_err(csv_io)?;
    for j in 0..tc.n() {
        let record: Vec<String> = tc.row(j).iter().map(|v| v.to_string()).collect();
        writer.write_record(&record).map_err(csv_io)?;
    }
    writer.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Internal(format!("csv write failed: {e}"))
}

fn parse_finite(cell: Option<&str>, row: usize, col: &str) -> Result<f64> {
    let raw = cell
        .ok_or_else(|| Error::Parse { row, message: format!("missing value in column {col:?}") })?
        .trim();
    let value: f64 = raw.parse().map_err(|_| Error::Parse {
        row,
        message: format!("cannot parse {raw:?} in column {col:?} as a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            row,
            message: format!("non-finite value {raw:?} in column {col:?}"),
        });
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn schema2() -> SourceSchema {
        SourceSchema::default_with_k(2)
    }

    #[test]
    fn four_row_two_arm_file() {
        let f =
            write_temp("y,a,x1,x2\n1.0,A,0.1,0.2\n2.0,B,0.3,0.4\n3.0,A,0.5,0.6\n4.0,B,0.7,0.8\n");
        let ds = load_source(f.path(), &schema2()).unwrap();
        assert_eq!(ds.n(), 4);
        assert_eq!(ds.d(), 2);
        assert_eq!(ds.treatments(), &[1, 2, 1, 2]);
        assert_eq!(ds.label(1), "A");
        assert_eq!(ds.label(2), "B");
    }

    #[test]
    fn single_label_is_overlap_error() {
        let f = write_temp("y,a,x1,x2\n1.0,A,0.1,0.2\n2.0,A,0.3,0.4\n");
        match load_source(f.path(), &schema2()) {
            Err(Error::Overlap(_)) => {}
            other => panic!("expected overlap error, got {other:?}"),
        }
    }

    #[test]
    fn nan_outcome_is_parse_error_with_row() {
        let f = write_temp("y,a,x1,x2\n1.0,A,0.1,0.2\nNaN,B,0.3,0.4\n");
        match load_source(f.path(), &schema2()) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_schema_error() {
        let f = write_temp("y,x1,x2\n1.0,0.1,0.2\n");
        match load_source(f.path(), &schema2()) {
            Err(Error::Schema(msg)) => assert!(msg.contains("\"a\"")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn target_basic_and_errors() {
        let names = vec!["x1".to_string(), "x2".to_string()];
        let f = write_temp("x1,x2\n0.1,0.2\n0.3,0.4\n0.5,0.6\n");
        let tc = load_target(f.path(), &names).unwrap();
        assert_eq!((tc.n(), tc.k()), (3, 2));

        let missing = write_temp("x1\n0.1\n");
        assert!(matches!(load_target(missing.path(), &names), Err(Error::Schema(_))));

        let empty = write_temp("x1,x2\n");
        assert!(matches!(load_target(empty.path(), &names), Err(Error::Schema(_))));
    }

    #[test]
    fn overlap_counts_and_proportions() {
        let ds = SourceDataset::from_indexed(
            vec![1.0, 2.0, 3.0],
            vec![1, 1, 2],
            Mat::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap(),
        )
        .unwrap();
        let rep = overlap_report(&ds);
        assert_eq!(rep.counts, vec![2, 1]);
        assert_eq!(rep.counts.iter().sum::<usize>(), ds.n());

        let ds = SourceDataset::from_indexed(vec![1.0; 4], vec![1, 2, 1, 2], Mat::zeros(4, 1))
            .unwrap();
        let rep = overlap_report(&ds);
        assert_eq!(rep.proportions, vec![0.5, 0.5]);
    }

    #[test]
    fn uniform_assignment_proportions_within_binomial_band() {
        // With n = 1000 and p = 1/2, the Hoeffding tail gives
        // P(|p_hat - 0.5| > 0.05) <= 2 exp(-2 * 1000 * 0.05^2) ~ 1.3%;
        // the seeded draw below is a fixed representative sample.
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20240701);
        let n = 1000;
        let treatments: Vec<usize> = (0..n).map(|_| rng.random_range(1..=2)).collect();
        let ds = SourceDataset::from_labeled(
            vec![1.0; n],
            &treatments.iter().map(|a| format!("arm{a}")).collect::<Vec<_>>(),
            Mat::zeros(n, 1),
        )
        .unwrap();
        let rep = overlap_report(&ds);
        for p in rep.proportions {
            assert!((p - 0.5).abs() <= 0.05, "proportion {p} outside band");
        }
    }

    #[test]
    fn reindexing_is_a_bijection() {
        let labels: Vec<String> = ["B", "A", "B", "C", "A"].iter().map(|s| s.to_string()).collect();
        let ds = SourceDataset::from_labeled(vec![0.0; 5], &labels, Mat::zeros(5, 1)).unwrap();
        assert_eq!(ds.labels(), &["B".to_string(), "A".to_string(), "C".to_string()]);
        assert_eq!(ds.treatments(), &[1, 2, 1, 3, 2]);
        let mut seen = vec![false; ds.d()];
        for &a in ds.treatments() {
            seen[a - 1] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn outcome_space_inference_and_bounds() {
        assert_eq!(OutcomeSpace::infer(&[0.0, 1.0, 2.0]), OutcomeSpace::nonnegative());
        assert_eq!(OutcomeSpace::infer(&[-0.1, 1.0]), OutcomeSpace::unbounded());
        assert!(OutcomeSpace::new(1.0, 1.0).is_err());
        let ys = OutcomeSpace::new(0.0, 10.0).unwrap();
        assert!(ys.validate_outcomes(&[0.0, 10.0]).is_ok());
        assert!(ys.validate_outcomes(&[-0.5]).is_err());
    }

    #[test]
    fn containment_diagnostic() {
        let source = Mat::from_rows(&[vec![0.0, 0.0], vec![1.0, 2.0]]).unwrap();
        let inside = Mat::from_rows(&[vec![0.5, 1.0]]).unwrap();
        let outside = Mat::from_rows(&[vec![0.5, 3.0]]).unwrap();
        assert!(range_containment(&source, &inside).unwrap().all_contained);
        let rep = range_containment(&source, &outside).unwrap();
        assert!(!rep.all_contained);
        assert!(rep.features[0].contained);
        assert!(!rep.features[1].contained);
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let ds = SourceDataset::from_labeled(
            vec![1.5, -2.25, 0.1, 3.0e-7],
            &["A", "B", "A", "B"].iter().map(|s| s.to_string()).collect::<Vec<_>>(),
            Mat::from_rows(&[
                vec![0.1, 0.2],
                vec![0.30000000000000004, -1.0],
                vec![1e-300, 2.5],
                vec![7.0, 8.0],
            ])
            .unwrap(),
        )
        .unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_source(&ds, f.path(), &schema2()).unwrap();
        let back = load_source(f.path(), &schema2()).unwrap();
        assert_eq!(ds, back);
    }

    proptest::proptest! {
        // Shortest-repr decimal serialization must round-trip any finite f64.
        #[test]
        fn round_trip_random_values(
            ys in proptest::collection::vec(-1e12f64..1e12, 2..20),
            xs in proptest::collection::vec(-1e6f64..1e6, 2..20),
        ) {
            let n = ys.len().min(xs.len());
            let rows: Vec<Vec<f64>> = xs[..n].iter().map(|&x| vec![x]).collect();
            let labels: Vec<String> =
                (0..n).map(|i| if i % 2 == 0 { "A".into() } else { "B".into() }).collect();
            let ds = SourceDataset::from_labeled(
                ys[..n].to_vec(),
                &labels,
                Mat::from_rows(&rows).unwrap(),
            )
            .unwrap();
            let f = tempfile::NamedTempFile::new().unwrap();
            let schema = SourceSchema::default_with_k(1);
            write_source(&ds, f.path(), &schema).unwrap();
            let back = load_source(f.path(), &schema).unwrap();
            proptest::prop_assert_eq!(ds, back);
        }
    }
}
