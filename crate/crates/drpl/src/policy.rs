//! Depth-limited axis-aligned tree policies and exact empirical-welfare
//! search over them.
//!
//! A policy maps a covariate vector to an arm in `1..=d` by descending
//! `feature <= threshold` splits (ties go left). The searcher maximizes the
//! sample total of per-action scores over every canonical tree of depth at
//! most `D <= 2`; candidate thresholds are midpoints of adjacent observed
//! feature values, which makes the enumeration finite and exact.

use serde::{Deserialize, Serialize};

use crate::data::TargetCovariates;
use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::robust::RobustScoreMatrix;

/// Maximum depth the exact searcher accepts. Larger depths would need a
/// different algorithm to stay exact, so they are rejected outright.
pub const MAX_SEARCH_DEPTH: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        action: usize,
    },
    Split {
        /// 1-based feature index.
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn predict(&self, x: &[f64]) -> Result<usize> {
        match self {
            TreeNode::Leaf { action } => Ok(*action),
            TreeNode::Split { feature, threshold, left, right } => {
                let idx = feature
                    .checked_sub(1)
                    .filter(|&i| i < x.len())
                    .ok_or_else(|| {
                        Error::Dimension(format!(
                            "split on feature {feature} but input has {} coordinates",
                            x.len()
                        ))
                    })?;
                if x[idx] <= *threshold {
                    left.predict(x)
                } else {
                    right.predict(x)
                }
            }
        }
    }

    fn write_text(&self, out: &mut String, indent: usize) {
        for _ in 0..indent {
            out.push_str("  ");
        }
        match self {
            TreeNode::Leaf { action } => {
                out.push_str(&format!("leaf {action}\n"));
            }
            TreeNode::Split { feature, threshold, left, right } => {
                out.push_str(&format!("split x{feature} <= {threshold}\n"));
                left.write_text(out, indent + 1);
                right.write_text(out, indent + 1);
            }
        }
    }
}

/// A depth-limited decision-tree treatment rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePolicy {
    root: TreeNode,
}

impl TreePolicy {
    pub fn leaf(action: usize) -> Self {
        TreePolicy { root: TreeNode::Leaf { action } }
    }

    pub fn split(feature: usize, threshold: f64, left: TreePolicy, right: TreePolicy) -> Self {
        TreePolicy {
            root: TreeNode::Split {
                feature,
                threshold,
                left: Box::new(left.root),
                right: Box::new(right.root),
            },
        }
    }

    pub fn root(&self) -> &TreeNode {
        &self.root
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Arm assigned to covariate vector `x` (`<=` descends left).
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        self.root.predict(x)
    }

    /// Assignments for every row of a covariate matrix.
    pub fn assignments(&self, xs: &Mat) -> Result<Vec<usize>> {
        (0..xs.rows()).map(|r| self.predict(xs.row(r))).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Schema(format!("invalid policy JSON: {e}")))
    }

    /// Human-readable nested form, two spaces per level:
    ///
    /// ```text
    /// split x1 <= 0.5
    ///   leaf 1
    ///   leaf 2
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        self.root.write_text(&mut out, 0);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
        let mut pos = 0usize;
        let root = parse_node(&lines, &mut pos, 0)?;
        if pos != lines.len() {
            return Err(Error::Schema("trailing lines after policy tree".into()));
        }
        Ok(TreePolicy { root })
    }
}

impl std::fmt::Display for TreePolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn parse_node(lines: &[&str], pos: &mut usize, indent: usize) -> Result<TreeNode> {
    let line = lines
        .get(*pos)
        .ok_or_else(|| Error::Schema("unexpected end of policy text".into()))?;
    let level = (line.len() - line.trim_start().len()) / 2;
    if level != indent {
        return Err(Error::Schema(format!(
            "bad indentation at line {}: expected level {indent}",
            *pos + 1
        )));
    }
    let body = line.trim();
    *pos += 1;
    if let Some(rest) = body.strip_prefix("leaf ") {
        let action: usize = rest
            .trim()
            .parse()
            .map_err(|_| Error::Schema(format!("bad leaf action {rest:?}")))?;
        return Ok(TreeNode::Leaf { action });
    }
    if let Some(rest) = body.strip_prefix("split x") {
        let (feat, thresh) = rest
            .split_once("<=")
            .ok_or_else(|| Error::Schema(format!("bad split line {body:?}")))?;
        let feature: usize = feat
            .trim()
            .parse()
            .map_err(|_| Error::Schema(format!("bad feature index {feat:?}")))?;
        let threshold: f64 = thresh
            .trim()
            .parse()
            .map_err(|_| Error::Schema(format!("bad threshold {thresh:?}")))?;
        let left = parse_node(lines, pos, indent + 1)?;
        let right = parse_node(lines, pos, indent + 1)?;
        return Ok(TreeNode::Split {
            feature,
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        });
    }
    Err(Error::Schema(format!("unrecognized policy line {body:?}")))
}

/// Result of an exact policy search.
#[derive(Debug, Clone)]
pub struct SearchResult {
    pub policy: TreePolicy,
    /// Maximum of the empirical objective `(1/n) sum_j scores[j][g(X_j)]`.
    pub value: f64,
}

struct Searcher<'a> {
    scores: &'a Mat,
    xs: &'a Mat,
    features: Vec<usize>, // 0-based usable feature indices
}

struct Candidate {
    total: f64,
    node: TreeNode,
}

impl<'a> Searcher<'a> {
    /// Best leaf on a row subset: argmax of column sums, lowest arm on ties.
    fn best_leaf(&self, rows: &[usize]) -> Candidate {
        let d = self.scores.cols();
        let mut best_a = 0usize;
        let mut best = f64::NEG_INFINITY;
        for a in 0..d {
            let total: f64 = rows.iter().map(|&r| self.scores.get(r, a)).sum();
            if total > best {
                best = total;
                best_a = a;
            }
        }
        Candidate { total: best, node: TreeNode::Leaf { action: best_a + 1 } }
    }

    /// Best tree of depth <= 1 on a row subset. Candidates are scanned in
    /// tie order (leaf first, then splits by feature, then threshold, with
    /// lowest-arm leaves), and only strict improvements replace the
    /// incumbent, so ties resolve deterministically.
    fn best_depth1(&self, rows: &[usize]) -> Candidate {
        let d = self.scores.cols();
        let mut best = self.best_leaf(rows);
        for &f in &self.features {
            let mut order: Vec<usize> = rows.to_vec();
            order.sort_by(|&a, &b| self.xs.get(a, f).total_cmp(&self.xs.get(b, f)));
            let mut total_sum = vec![0.0f64; d];
            for &r in &order {
                for a in 0..d {
                    total_sum[a] += self.scores.get(r, a);
                }
            }
            let mut left_sum = vec![0.0f64; d];
            for i in 0..order.len().saturating_sub(1) {
                for a in 0..d {
                    left_sum[a] += self.scores.get(order[i], a);
                }
                let v0 = self.xs.get(order[i], f);
                let v1 = self.xs.get(order[i + 1], f);
                if v0 < v1 {
                    let threshold = 0.5 * (v0 + v1);
                    let (la, lbest) = argmax_lowest(&left_sum);
                    let rights: Vec<f64> =
                        (0..d).map(|a| total_sum[a] - left_sum[a]).collect();
                    let (ra, rbest) = argmax_lowest(&rights);
                    let total = lbest + rbest;
                    if total > best.total {
                        best = Candidate {
                            total,
                            node: TreeNode::Split {
                                feature: f + 1,
                                threshold,
                                left: Box::new(TreeNode::Leaf { action: la + 1 }),
                                right: Box::new(TreeNode::Leaf { action: ra + 1 }),
                            },
                        };
                    }
                }
            }
        }
        best
    }

    fn best_depth2(&self, rows: &[usize]) -> Candidate {
        // The depth <= 1 pass runs first, so any optimum realizable at
        // smaller depth is already the incumbent and later ties lose.
        let mut best = self.best_depth1(rows);
        for &f in &self.features {
            let mut order: Vec<usize> = rows.to_vec();
            order.sort_by(|&a, &b| self.xs.get(a, f).total_cmp(&self.xs.get(b, f)));
            for i in 0..order.len().saturating_sub(1) {
                let v0 = self.xs.get(order[i], f);
                let v1 = self.xs.get(order[i + 1], f);
                if v0 < v1 {
                    let threshold = 0.5 * (v0 + v1);
                    let left_rows = &order[..=i];
                    let right_rows = &order[i + 1..];
                    let left = self.best_depth1(left_rows);
                    let right = self.best_depth1(right_rows);
                    let total = left.total + right.total;
                    if total > best.total {
                        best = Candidate {
                            total,
                            node: TreeNode::Split {
                                feature: f + 1,
                                threshold,
                                left: Box::new(left.node),
                                right: Box::new(right.node),
                            },
                        };
                    }
                }
            }
        }
        best
    }
}

fn argmax_lowest(values: &[f64]) -> (usize, f64) {
    let mut best = 0usize;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    (best, values[best])
}

fn usable_features(k: usize, excluded: &[usize]) -> Result<Vec<usize>> {
    for &f in excluded {
        if f == 0 || f > k {
            return Err(Error::Config(format!("masked feature {f} outside 1..={k}")));
        }
    }
    let features: Vec<usize> =
        (0..k).filter(|i| !excluded.contains(&(i + 1))).collect();
    if features.is_empty() {
        return Err(Error::Config("every feature is masked".into()));
    }
    Ok(features)
}

/// Exact maximizer of `(1/n_t) sum_j scores[j][g(X_j)]` over canonical
/// trees of depth at most `depth` (0, 1, or 2) that avoid the 1-based
/// features listed in `excluded_features`.
pub fn exact_tree_search(
    gamma: &RobustScoreMatrix,
    tc: &TargetCovariates,
    depth: usize,
    excluded_features: &[usize],
) -> Result<SearchResult> {
    if depth > MAX_SEARCH_DEPTH {
        return Err(Error::Config(format!(
            "exact search supports depth <= {MAX_SEARCH_DEPTH}, got {depth}"
        )));
    }
    if gamma.n() != tc.n() {
        return Err(Error::Dimension("score matrix and target sample sizes differ".into()));
    }
    let searcher = Searcher {
        scores: gamma.scores(),
        xs: tc.covariates(),
        features: usable_features(tc.k(), excluded_features)?,
    };
    let rows: Vec<usize> = (0..tc.n()).collect();
    let candidate = match depth {
        0 => searcher.best_leaf(&rows),
        1 => searcher.best_depth1(&rows),
        _ => searcher.best_depth2(&rows),
    };
    let policy = TreePolicy { root: candidate.node };
    // Recompute the value by direct summation in row order so callers can
    // compare it against independently computed objectives.
    let mut total = 0.0;
    for j in 0..tc.n() {
        total += gamma.get(j, policy.predict(tc.row(j))?);
    }
    Ok(SearchResult { policy, value: total / tc.n() as f64 })
}

/// Plug-in policy: exact search on the delta = 0 score matrix.
pub fn naive_policy(
    model: &crate::cmr::CmrModel,
    tc: &TargetCovariates,
    depth: usize,
    excluded_features: &[usize],
    ys: crate::data::OutcomeSpace,
) -> Result<SearchResult> {
    let pred = model.predict_matrix(tc)?;
    let gamma = RobustScoreMatrix::from_predictions(&pred, 0.0, ys)?;
    exact_tree_search(&gamma, tc, depth, excluded_features)
}

/// Pointwise argmax of the estimated CMR, lowest arm on ties.
pub fn first_best(model: &crate::cmr::CmrModel, x: &[f64]) -> Result<usize> {
    let mut best = 1usize;
    let mut best_value = model.predict(x, 1)?;
    for a in 2..=model.d() {
        let v = model.predict(x, a)?;
        if v > best_value {
            best_value = v;
            best = a;
        }
    }
    Ok(best)
}

/// Every canonical tree of depth <= `depth` over the observed sample:
/// leaves for each arm, and splits at midpoints of adjacent distinct
/// observed feature values. Intended for small enumeration oracles; the
/// list grows quickly with the sample.
pub fn enumerate_canonical_trees(
    xs: &Mat,
    d: usize,
    depth: usize,
    excluded_features: &[usize],
) -> Result<Vec<TreePolicy>> {
    if depth > MAX_SEARCH_DEPTH {
        return Err(Error::Config(format!(
            "enumeration supports depth <= {MAX_SEARCH_DEPTH}, got {depth}"
        )));
    }
    let features = usable_features(xs.cols(), excluded_features)?;
    let mut thresholds: Vec<(usize, f64)> = Vec::new();
    for &f in &features {
        let mut values: Vec<f64> = (0..xs.rows()).map(|r| xs.get(r, f)).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            thresholds.push((f + 1, 0.5 * (w[0] + w[1])));
        }
    }

    let mut level: Vec<Vec<TreeNode>> = Vec::with_capacity(depth + 1);
    level.push((1..=d).map(|a| TreeNode::Leaf { action: a }).collect());
    for current in 1..=depth {
        let prev: Vec<TreeNode> = level[..current].iter().flatten().cloned().collect();
        let mut nodes = Vec::new();
        for &(feature, threshold) in &thresholds {
            for left in &prev {
                for right in &prev {
                    nodes.push(TreeNode::Split {
                        feature,
                        threshold,
                        left: Box::new(left.clone()),
                        right: Box::new(right.clone()),
                    });
                }
            }
        }
        level.push(nodes);
    }
    Ok(level.into_iter().flatten().map(|root| TreePolicy { root }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::OutcomeSpace;

    fn target(rows: &[Vec<f64>]) -> TargetCovariates {
        TargetCovariates::new(Mat::from_rows(rows).unwrap()).unwrap()
    }

    fn gamma_from(rows: &[Vec<f64>]) -> RobustScoreMatrix {
        RobustScoreMatrix::from_scores(
            Mat::from_rows(rows).unwrap(),
            0.0,
            OutcomeSpace::unbounded(),
        )
    }

    #[test]
    fn leaf_predicts_constant() {
        let g = TreePolicy::leaf(2);
        assert_eq!(g.predict(&[0.0, 5.0]).unwrap(), 2);
        assert_eq!(g.predict(&[9.9]).unwrap(), 2);
    }

    #[test]
    fn boundary_goes_left() {
        let g = TreePolicy::split(1, 0.5, TreePolicy::leaf(1), TreePolicy::leaf(2));
        assert_eq!(g.predict(&[0.5, 7.0]).unwrap(), 1);
        assert_eq!(g.predict(&[0.5000001]).unwrap(), 2);
    }

    #[test]
    fn depth2_matches_truth_table() {
        // Evaluate a depth-2 tree pointwise on a 2x2 grid and compare with
        // the directly written-out action table.
        let g = TreePolicy::split(
            1,
            0.5,
            TreePolicy::split(2, 0.5, TreePolicy::leaf(1), TreePolicy::leaf(2)),
            TreePolicy::split(2, 0.5, TreePolicy::leaf(3), TreePolicy::leaf(1)),
        );
        let expect = [((0.0, 0.0), 1), ((0.0, 1.0), 2), ((1.0, 0.0), 3), ((1.0, 1.0), 1)];
        for ((x1, x2), want) in expect {
            assert_eq!(g.predict(&[x1, x2]).unwrap(), want);
        }
        assert_eq!(g.depth(), 2);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let g = TreePolicy::split(3, 0.5, TreePolicy::leaf(1), TreePolicy::leaf(2));
        assert!(g.predict(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn depth0_picks_best_column_with_tie_rule() {
        let tc = target(&[vec![0.0], vec![1.0]]);
        let gamma = gamma_from(&[vec![1.0, 1.0], vec![0.0, 0.0]]);
        let res = exact_tree_search(&gamma, &tc, 0, &[]).unwrap();
        assert_eq!(res.policy, TreePolicy::leaf(1));
        assert!((res.value - 0.5).abs() < 1e-15);
    }

    #[test]
    fn depth1_finds_perfect_split() {
        let tc = target(&[vec![0.0], vec![1.0]]);
        let gamma = gamma_from(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let res = exact_tree_search(&gamma, &tc, 1, &[]).unwrap();
        assert_eq!(
            res.policy,
            TreePolicy::split(1, 0.5, TreePolicy::leaf(1), TreePolicy::leaf(2))
        );
        assert!((res.value - 1.0).abs() < 1e-15);
    }

    #[test]
    fn depth_cap_enforced() {
        let tc = target(&[vec![0.0]]);
        let gamma = gamma_from(&[vec![1.0, 0.0]]);
        assert!(matches!(
            exact_tree_search(&gamma, &tc, 3, &[]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn feature_mask_respected() {
        // Feature 1 separates the scores perfectly, feature 2 is useless;
        // masking feature 1 forces a constant policy.
        let tc = target(&[vec![0.0, 0.3], vec![1.0, 0.3]]);
        let gamma = gamma_from(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let masked = exact_tree_search(&gamma, &tc, 1, &[1]).unwrap();
        assert_eq!(masked.policy.depth(), 0);
        assert!((masked.value - 0.5).abs() < 1e-15);
        assert!(exact_tree_search(&gamma, &tc, 1, &[1, 2]).is_err());
        assert!(exact_tree_search(&gamma, &tc, 1, &[3]).is_err());
    }

    #[test]
    fn scale_shift_keeps_assignments() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let n = rng.random_range(3..12);
            let rows: Vec<Vec<f64>> =
                (0..n).map(|_| vec![rng.random_range(-1.0..1.0)]).collect();
            let scores: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let tc = target(&rows);
            let base = exact_tree_search(&gamma_from(&scores), &tc, 1, &[]).unwrap();
            let shifted: Vec<Vec<f64>> = scores
                .iter()
                .map(|r| r.iter().map(|v| v + 3.7).collect())
                .collect();
            let moved = exact_tree_search(&gamma_from(&shifted), &tc, 1, &[]).unwrap();
            let xs = tc.covariates();
            assert_eq!(
                base.policy.assignments(xs).unwrap(),
                moved.policy.assignments(xs).unwrap()
            );
            assert!((moved.value - base.value - 3.7).abs() < 1e-9);
        }
    }

    #[test]
    fn first_ties_prefer_shallower_and_lexicographic() {
        // Both columns identical: every tree ties, so the depth-0 leaf with
        // arm 1 must win.
        let tc = target(&[vec![0.0], vec![1.0], vec![2.0]]);
        let gamma = gamma_from(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![0.5, 0.5]]);
        let res = exact_tree_search(&gamma, &tc, 2, &[]).unwrap();
        assert_eq!(res.policy, TreePolicy::leaf(1));
    }

    #[test]
    fn text_and_json_round_trip() {
        let g = TreePolicy::split(
            2,
            -0.125,
            TreePolicy::leaf(3),
            TreePolicy::split(1, 7.5, TreePolicy::leaf(1), TreePolicy::leaf(2)),
        );
        assert_eq!(TreePolicy::from_text(&g.to_text()).unwrap(), g);
        assert_eq!(TreePolicy::from_json(&g.to_json()).unwrap(), g);
        let leaf = TreePolicy::leaf(1);
        assert_eq!(TreePolicy::from_text(&leaf.to_text()).unwrap(), leaf);
    }

    #[test]
    fn enumeration_counts_small_instance() {
        // Two distinct values on one feature: 1 threshold; depth <= 1 with
        // d = 2 gives 2 leaves + 1 * 2 * 2 splits.
        let xs = Mat::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let trees = enumerate_canonical_trees(&xs, 2, 1, &[]).unwrap();
        assert_eq!(trees.len(), 2 + 4);
    }

    proptest::proptest! {
        #[test]
        fn text_round_trip_random_trees(
            f1 in 1usize..4, f2 in 1usize..4,
            t1 in -10.0f64..10.0, t2 in -10.0f64..10.0,
            a in 1usize..4, b in 1usize..4, c in 1usize..4,
        ) {
            let g = TreePolicy::split(
                f1,
                t1,
                TreePolicy::split(f2, t2, TreePolicy::leaf(a), TreePolicy::leaf(b)),
                TreePolicy::leaf(c),
            );
            proptest::prop_assert_eq!(TreePolicy::from_text(&g.to_text()).unwrap(), g.clone());
            proptest::prop_assert_eq!(TreePolicy::from_json(&g.to_json()).unwrap(), g);
        }
    }
}
