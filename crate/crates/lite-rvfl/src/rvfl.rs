//! Random-feature expansion, label encoding, weighted batch ridge training,
//! and prediction.
//!
//! The classifier is linear in an extended feature vector: the raw input
//! followed by fixed random "enhancement" features. Output weights are the
//! solution of a per-sample-weighted ridge problem; [`train_batch`] is the
//! closed-form reference that every incremental path is checked against.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::weighting::WeightScheme;

/// Activation applied to the random projections.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, u: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-u).exp()),
        }
    }
}

/// Fixed random projection lifting raw inputs to extended features.
///
/// The projection and bias are drawn once from the seed and never mutated;
/// the extended dimension is `D = d + n1 * n2`.
#[derive(Clone, Debug)]
pub struct EnhancementMap {
    input_dim: usize,
    groups: usize,
    nodes_per_group: usize,
    /// d x (n1*n2); columns are grouped in blocks of `nodes_per_group`.
    projection: DMatrix<f64>,
    /// length n1*n2
    bias: DVector<f64>,
    activation: Activation,
    seed: u64,
}

impl EnhancementMap {
    /// Draws a new map with all projection and bias entries independent
    /// uniform on [-1, 1] from a deterministic generator. Equal arguments
    /// produce bit-identical maps.
    pub fn init(input_dim: usize, groups: usize, nodes_per_group: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || groups == 0 || nodes_per_group == 0 {
            return Err(Error::invalid(
                "enhancement map dimensions must all be >= 1",
            ));
        }
        let total = groups * nodes_per_group;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut projection = DMatrix::zeros(input_dim, total);
        // generation order: group by group, node by node, then input row
        for g in 0..groups {
            for node in 0..nodes_per_group {
                let col = g * nodes_per_group + node;
                for row in 0..input_dim {
                    projection[(row, col)] = rng.random_range(-1.0..=1.0);
                }
            }
        }
        let mut bias = DVector::zeros(total);
        for g in 0..groups {
            for node in 0..nodes_per_group {
                bias[g * nodes_per_group + node] = rng.random_range(-1.0..=1.0);
            }
        }
        Ok(EnhancementMap {
            input_dim,
            groups,
            nodes_per_group,
            projection,
            bias,
            activation: Activation::Sigmoid,
            seed,
        })
    }

    /// Builds a map from explicit parts. Intended for fixtures and tooling;
    /// [`EnhancementMap::init`] is the normal constructor.
    pub fn from_parts(
        projection: DMatrix<f64>,
        bias: DVector<f64>,
        groups: usize,
        nodes_per_group: usize,
        activation: Activation,
    ) -> Result<Self> {
        let input_dim = projection.nrows();
        if input_dim == 0 || groups == 0 || nodes_per_group == 0 {
            return Err(Error::invalid("enhancement map dimensions must all be >= 1"));
        }
        if projection.ncols() != groups * nodes_per_group || bias.len() != groups * nodes_per_group
        {
            return Err(Error::invalid("projection/bias shape mismatch"));
        }
        Ok(EnhancementMap {
            input_dim,
            groups,
            nodes_per_group,
            projection,
            bias,
            activation,
            seed: 0,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn nodes_per_group(&self) -> usize {
        self.nodes_per_group
    }

    /// Extended dimension `D = d + n1 * n2`.
    pub fn extended_dim(&self) -> usize {
        self.input_dim + self.groups * self.nodes_per_group
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Lifts a raw input to its extended feature: the raw entries followed
    /// by the activated random projections.
    pub fn extend(&self, x: &[f64]) -> Result<ExtendedFeature> {
        if x.len() != self.input_dim {
            return Err(Error::invalid(format!(
                "expected {} features, got {}",
                self.input_dim,
                x.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite input feature"));
        }
        let total = self.groups * self.nodes_per_group;
        let mut values = DVector::zeros(self.input_dim + total);
        values.rows_mut(0, self.input_dim).copy_from_slice(x);
        for col in 0..total {
            let mut u = self.bias[col];
            for row in 0..self.input_dim {
                u += x[row] * self.projection[(row, col)];
            }
            values[self.input_dim + col] = self.activation.apply(u);
        }
        Ok(ExtendedFeature { values })
    }
}

/// Raw features followed by enhancement outputs; length `D`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExtendedFeature {
    pub values: DVector<f64>,
}

/// One-hot encoding of a class label in `1..=m`.
#[derive(Clone, Debug, PartialEq)]
pub struct OneHotLabel {
    /// 1-based class index.
    pub class_index: usize,
    /// Length-m vector with a single 1 at position `class_index - 1`.
    pub vector: DVector<f64>,
}

/// Encodes class `s` out of `m` as a one-hot vector.
pub fn encode_label(s: usize, m: usize) -> Result<OneHotLabel> {
    if m == 0 || s == 0 || s > m {
        return Err(Error::invalid(format!(
            "class index {s} outside 1..={m}"
        )));
    }
    let mut vector = DVector::zeros(m);
    vector[s - 1] = 1.0;
    Ok(OneHotLabel {
        class_index: s,
        vector,
    })
}

/// Row-stacked extended features and one-hot labels in arrival order.
#[derive(Clone, Debug)]
pub struct DesignMatrices {
    /// n x D
    features: DMatrix<f64>,
    /// n x m
    targets: DMatrix<f64>,
}

impl DesignMatrices {
    pub fn new(features: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if features.nrows() != targets.nrows() {
            return Err(Error::invalid("feature and target row counts differ"));
        }
        for r in 0..targets.nrows() {
            let row = targets.row(r);
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            let zeros = row.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || ones + zeros != row.len() {
                return Err(Error::invalid(format!("target row {r} is not one-hot")));
            }
        }
        Ok(DesignMatrices { features, targets })
    }

    /// Builds design matrices by extending each raw sample through `map`.
    pub fn from_samples<'a, I>(map: &EnhancementMap, class_count: usize, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a [f64], usize)>,
    {
        let mut rows: Vec<ExtendedFeature> = Vec::new();
        let mut labels: Vec<OneHotLabel> = Vec::new();
        for (x, s) in samples {
            rows.push(map.extend(x)?);
            labels.push(encode_label(s, class_count)?);
        }
        if rows.is_empty() {
            return Err(Error::invalid("design matrices need at least one sample"));
        }
        let d = map.extended_dim();
        let mut features = DMatrix::zeros(rows.len(), d);
        let mut targets = DMatrix::zeros(rows.len(), class_count);
        for (r, (xt, lbl)) in rows.iter().zip(labels.iter()).enumerate() {
            features.row_mut(r).tr_copy_from(&xt.values);
            targets.row_mut(r).tr_copy_from(&lbl.vector);
        }
        DesignMatrices::new(features, targets)
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn extended_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn class_count(&self) -> usize {
        self.targets.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    /// Returns the first `n` rows as a new design block.
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.n_rows() {
            return Err(Error::invalid("prefix length out of range"));
        }
        Ok(DesignMatrices {
            features: self.features.rows(0, n).into_owned(),
            targets: self.targets.rows(0, n).into_owned(),
        })
    }
}

/// Ridge coefficient and enhancement-map shape used by a model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lambda: f64,
    pub groups: usize,
    pub nodes_per_group: usize,
    pub seed: u64,
}

impl HyperParams {
    pub fn new(lambda: f64, groups: usize, nodes_per_group: usize, seed: u64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::invalid(format!("lambda must be > 0, got {lambda}")));
        }
        if groups == 0 || nodes_per_group == 0 {
            return Err(Error::invalid("groups and nodes_per_group must be >= 1"));
        }
        Ok(HyperParams {
            lambda,
            groups,
            nodes_per_group,
            seed,
        })
    }
}

/// Trained output weights, `D x m`.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputWeights {
    pub matrix: DMatrix<f64>,
}

/// Assembles the weighted normal equations of the ridge problem:
/// `G = lambda*I + A^T T^T T A` and `rhs = A^T T^T T S`, where `T` is the
/// diagonal weight matrix of `scheme` over rows 1..n.
pub(crate) fn weighted_normal_equations(
    design: &DesignMatrices,
    scheme: WeightScheme,
    lambda: f64,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    scheme.validate()?;
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::invalid(format!("lambda must be > 0, got {lambda}")));
    }
    let n = design.n_rows();
    // scale rows by their weights: G = (TA)^T (TA), rhs = (TA)^T (TS)
    let mut ta = design.features().clone();
    let mut ts = design.targets().clone();
    for r in 0..n {
        let w = scheme.weight_at(r + 1)?;
        ta.row_mut(r).scale_mut(w);
        ts.row_mut(r).scale_mut(w);
    }
    let mut gram = ta.tr_mul(&ta);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lambda;
    }
    let rhs = ta.tr_mul(&ts);
    if gram.iter().any(|v| !v.is_finite()) || rhs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            rows: n,
            msg: "non-finite accumulation in weighted normal equations".into(),
        });
    }
    Ok((gram, rhs))
}

/// Solves the weighted ridge problem
/// `min_W lambda*||W||^2 + ||T (A W - S)||^2` in closed form through a
/// symmetric-positive-definite factorization (no explicit inverse).
pub fn train_batch(
    design: &DesignMatrices,
    scheme: WeightScheme,
    lambda: f64,
) -> Result<OutputWeights> {
    let n = design.n_rows();
    let (gram, rhs) = weighted_normal_equations(design, scheme, lambda)?;
    let chol = Cholesky::new(gram).ok_or_else(|| Error::Numerical {
        rows: n,
        msg: "Cholesky factorization failed".into(),
    })?;
    let matrix = chol.solve(&rhs);
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            rows: n,
            msg: "non-finite output weights".into(),
        });
    }
    Ok(OutputWeights { matrix })
}

/// Scores an extended feature and picks the 1-based argmax label;
/// ties break toward the lowest class index.
pub fn predict_extended(xt: &ExtendedFeature, weights: &OutputWeights) -> Result<(DVector<f64>, usize)> {
    if xt.values.len() != weights.matrix.nrows() {
        return Err(Error::invalid(format!(
            "extended feature length {} does not match weight rows {}",
            xt.values.len(),
            weights.matrix.nrows()
        )));
    }
    let scores = weights.matrix.tr_mul(&xt.values);
    let label = argmax_label(&scores);
    Ok((scores, label))
}

/// Extends a raw input and scores it.
pub fn predict(
    x: &[f64],
    map: &EnhancementMap,
    weights: &OutputWeights,
) -> Result<(DVector<f64>, usize)> {
    let xt = map.extend(x)?;
    predict_extended(&xt, weights)
}

/// 1-based index of the strictly largest score; earlier index wins ties.
pub(crate) fn argmax_label(scores: &DVector<f64>) -> usize {
    let mut best = 0usize;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    best + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_design(
        rng: &mut ChaCha8Rng,
        n: usize,
        d: usize,
        m: usize,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let features = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let mut targets = DMatrix::zeros(n, m);
        for r in 0..n {
            targets[(r, rng.random_range(0..m))] = 1.0;
        }
        (features, targets)
    }

    /// Independent reference: builds the full diagonal weight matrix and
    /// solves the normal equations by LU. Deliberately a different assembly
    /// and factorization path from `train_batch`.
    fn normal_equations_reference(
        design: &DesignMatrices,
        scheme: WeightScheme,
        lambda: f64,
    ) -> DMatrix<f64> {
        let n = design.n_rows();
        let mut t = DMatrix::zeros(n, n);
        for i in 0..n {
            t[(i, i)] = scheme.weight_at(i + 1).unwrap();
        }
        let a = design.features();
        let s = design.targets();
        let tt = &t.transpose() * &t;
        let gram = a.transpose() * &tt * a + DMatrix::identity(a.ncols(), a.ncols()) * lambda;
        let rhs = a.transpose() * &tt * s;
        gram.lu().solve(&rhs).expect("reference solve")
    }

    #[test]
    fn init_produces_expected_extended_dim() {
        let map = EnhancementMap::init(24, 10, 10, 42).unwrap();
        assert_eq!(map.extended_dim(), 124);
        let tiny = EnhancementMap::init(1, 1, 1, 0).unwrap();
        assert_eq!(tiny.extended_dim(), 2);
    }

    #[test]
    fn init_is_deterministic() {
        let a = EnhancementMap::init(7, 3, 4, 99).unwrap();
        let b = EnhancementMap::init(7, 3, 4, 99).unwrap();
        assert_eq!(a.projection, b.projection);
        assert_eq!(a.bias, b.bias);
        let c = EnhancementMap::init(7, 3, 4, 100).unwrap();
        assert_ne!(a.projection, c.projection);
    }

    #[test]
    fn init_rejects_zero_dims() {
        assert!(EnhancementMap::init(0, 1, 1, 0).is_err());
        assert!(EnhancementMap::init(1, 0, 1, 0).is_err());
        assert!(EnhancementMap::init(1, 1, 0, 0).is_err());
    }

    #[test]
    fn init_draws_inside_unit_interval() {
        let map = EnhancementMap::init(5, 4, 3, 1).unwrap();
        assert!(map.projection.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(map.bias.iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn extend_zero_input_zero_bias_gives_half() {
        let map = EnhancementMap::from_parts(
            DMatrix::from_fn(3, 4, |_, _| 0.7),
            DVector::zeros(4),
            2,
            2,
            Activation::Sigmoid,
        )
        .unwrap();
        let xt = map.extend(&[0.0, 0.0, 0.0]).unwrap();
        for i in 3..7 {
            assert_eq!(xt.values[i], 0.5);
        }
    }

    #[test]
    fn extend_symmetric_cancellation() {
        let map = EnhancementMap::from_parts(
            DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
            DVector::zeros(1),
            1,
            1,
            Activation::Sigmoid,
        )
        .unwrap();
        let xt = map.extend(&[3.0, -3.0]).unwrap();
        assert_eq!(xt.values.as_slice(), &[3.0, -3.0, 0.5]);
    }

    #[test]
    fn extend_keeps_enhancements_in_open_unit_interval() {
        let map = EnhancementMap::init(6, 5, 5, 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(-4.0..4.0)).collect();
            let xt = map.extend(&x).unwrap();
            for i in 6..map.extended_dim() {
                assert!(xt.values[i] > 0.0 && xt.values[i] < 1.0);
            }
        }
    }

    #[test]
    fn extend_rejects_bad_inputs() {
        let map = EnhancementMap::init(3, 2, 2, 0).unwrap();
        assert!(map.extend(&[1.0, 2.0]).is_err());
        assert!(map.extend(&[1.0, f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn encode_label_examples() {
        assert_eq!(encode_label(2, 3).unwrap().vector.as_slice(), &[0.0, 1.0, 0.0]);
        assert_eq!(encode_label(1, 1).unwrap().vector.as_slice(), &[1.0]);
        assert_eq!(encode_label(3, 3).unwrap().vector.as_slice(), &[0.0, 0.0, 1.0]);
        assert!(encode_label(0, 3).is_err());
        assert!(encode_label(4, 3).is_err());
    }

    #[test]
    fn train_batch_scalar_case() {
        let design = DesignMatrices::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let w = train_batch(&design, WeightScheme::Uniform, 1.0).unwrap();
        assert_relative_eq!(w.matrix[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn exponential_theta_one_is_bitwise_uniform() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (f, t) = random_design(&mut rng, 40, 12, 3);
        let design = DesignMatrices::new(f, t).unwrap();
        let uniform = train_batch(&design, WeightScheme::Uniform, 0.1).unwrap();
        let theta_one = train_batch(&design, WeightScheme::Exponential { theta: 1.0 }, 0.1).unwrap();
        assert_eq!(uniform.matrix, theta_one.matrix);
    }

    #[test]
    fn train_batch_matches_independent_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (scheme, lambda) in [
            (WeightScheme::exponential(1.003).unwrap(), 0.1),
            (WeightScheme::Uniform, 1.0),
            (WeightScheme::polynomial(2).unwrap(), 0.5),
        ] {
            let (f, t) = random_design(&mut rng, 50, 14, 3);
            let design = DesignMatrices::new(f, t).unwrap();
            let fast = train_batch(&design, scheme, lambda).unwrap();
            let reference = normal_equations_reference(&design, scheme, lambda);
            let rel = (&fast.matrix - &reference).norm() / reference.norm();
            assert!(rel <= 1e-10, "relative error {rel} for {scheme:?}");
        }
    }

    #[test]
    fn oracle_agreement_randomized_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..10 {
            let n = rng.random_range(5..=200usize);
            let d = rng.random_range(2..=50usize);
            let (f, t) = random_design(&mut rng, n, d, 3);
            let design = DesignMatrices::new(f, t).unwrap();
            let scheme = WeightScheme::exponential(1.003).unwrap();
            let fast = train_batch(&design, scheme, 0.1).unwrap();
            let reference = normal_equations_reference(&design, scheme, 0.1);
            let rel = (&fast.matrix - &reference).norm() / reference.norm();
            assert!(rel <= 1e-10, "n={n} d={d} rel={rel}");
        }
    }

    #[test]
    fn train_batch_is_deterministic_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let (f, t) = random_design(&mut rng, 30, 10, 3);
        let design = DesignMatrices::new(f, t).unwrap();
        let scheme = WeightScheme::exponential(1.003).unwrap();
        let a = train_batch(&design, scheme, 0.1).unwrap();
        let b = train_batch(&design, scheme, 0.1).unwrap();
        assert!(a
            .matrix
            .iter()
            .zip(b.matrix.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn train_batch_rejects_bad_lambda() {
        let design = DesignMatrices::new(
            DMatrix::from_element(1, 1, 1.0),
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        assert!(train_batch(&design, WeightScheme::Uniform, 0.0).is_err());
        assert!(train_batch(&design, WeightScheme::Uniform, -1.0).is_err());
    }

    #[test]
    fn design_matrices_reject_non_one_hot_targets() {
        let f = DMatrix::from_element(2, 3, 1.0);
        let mut t = DMatrix::zeros(2, 2);
        t[(0, 0)] = 1.0;
        t[(1, 0)] = 0.5;
        t[(1, 1)] = 0.5;
        assert!(DesignMatrices::new(f, t).is_err());
    }

    #[test]
    fn predict_zero_weights_tie_breaks_low() {
        let map = EnhancementMap::init(4, 2, 2, 0).unwrap();
        let w = OutputWeights {
            matrix: DMatrix::zeros(map.extended_dim(), 3),
        };
        let (scores, label) = predict(&[0.1, 0.2, 0.3, 0.4], &map, &w).unwrap();
        assert!(scores.iter().all(|&v| v == 0.0));
        assert_eq!(label, 1);
    }

    #[test]
    fn predict_strict_argmax() {
        let xt = ExtendedFeature {
            values: DVector::from_element(1, 1.0),
        };
        let w = OutputWeights {
            matrix: DMatrix::from_row_slice(1, 2, &[0.1, 0.9]),
        };
        let (_, label) = predict_extended(&xt, &w).unwrap();
        assert_eq!(label, 2);
    }

    #[test]
    fn predict_single_sample_self_consistency() {
        let map = EnhancementMap::init(3, 2, 3, 77).unwrap();
        let x = [0.4, -0.2, 0.9];
        let design =
            DesignMatrices::from_samples(&map, 3, [(x.as_slice(), 2usize)]).unwrap();
        let w = train_batch(&design, WeightScheme::Uniform, 1e-6).unwrap();
        let (_, label) = predict(&x, &map, &w).unwrap();
        assert_eq!(label, 2);
    }

    #[test]
    fn argmax_invariant_under_positive_scaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let map = EnhancementMap::init(5, 3, 3, 1).unwrap();
        let w = OutputWeights {
            matrix: DMatrix::from_fn(map.extended_dim(), 4, |_, _| rng.random_range(-1.0..1.0)),
        };
        for _ in 0..25 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (_, label) = predict(&x, &map, &w).unwrap();
            for scale in [0.5, 3.0, 1e6] {
                let scaled = OutputWeights {
                    matrix: &w.matrix * scale,
                };
                let (_, l2) = predict(&x, &map, &scaled).unwrap();
                assert_eq!(label, l2);
            }
        }
    }

    #[test]
    fn predict_dimension_mismatch() {
        let map = EnhancementMap::init(4, 2, 2, 0).unwrap();
        let w = OutputWeights {
            matrix: DMatrix::zeros(3, 2),
        };
        let xt = map.extend(&[0.0; 4]).unwrap();
        assert!(predict_extended(&xt, &w).is_err());
    }
}
