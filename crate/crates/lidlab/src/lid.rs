//! Local intrinsic dimensionality (LID) estimation and per-layer feature
//! extraction.
//!
//! The maximum-likelihood estimator over a k-nearest-neighbor neighborhood is
//!
//! ```text
//! LID(x) = - ( (1/k) * sum_{i=1..k} ln(r_i / r_k) )^(-1)
//! ```
//!
//! where `r_1 <= ... <= r_k` are the Euclidean distances from `x` to its k
//! nearest reference points. Low values mean the point sits on a locally
//! low-dimensional structure; adversarial examples tend to land in regions
//! of *higher* LID than clean or noisy data, which is what the detector
//! exploits.
//!
//! A LID feature vector has one estimate per network layer, computed on the
//! layer's activations of the query against the activations of a reference
//! minibatch.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::tensor::{Interval, Tensor};

/// Neighborhood size and reference minibatch size for LID estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LidConfig {
    pub k: usize,
    pub batch_size: usize,
}

impl Default for LidConfig {
    fn default() -> Self {
        LidConfig {
            k: 20,
            batch_size: 100,
        }
    }
}

impl LidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!(
                "LID estimation needs k >= 2 neighbors, got {}",
                self.k
            )));
        }
        if self.batch_size < self.k + 1 {
            return Err(Error::Config(format!(
                "LID batch_size must exceed k (got batch_size {} for k {})",
                self.batch_size, self.k
            )));
        }
        Ok(())
    }
}

/// Distances from a query to its k nearest references, ascending. The
/// constructor sorts and validates finiteness/non-negativity; zero distances
/// are admitted here and rejected by [`lid_mle`], which owns the
/// duplicate-point error.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodDistances {
    sorted: Vec<f64>,
}

impl NeighborhoodDistances {
    pub fn new(mut distances: Vec<f64>) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::EmptyInput("neighborhood distances"));
        }
        if !distances.iter().all(|d| d.is_finite() && *d >= 0.0) {
            return Err(Error::NonFinite {
                context: "NeighborhoodDistances::new",
            });
        }
        distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(NeighborhoodDistances { sorted: distances })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.sorted
    }

    pub fn k(&self) -> usize {
        self.sorted.len()
    }
}

/// Maximum-likelihood LID estimate over one neighborhood.
///
/// The i = k term contributes `ln(r_k / r_k) = 0` but still counts toward
/// the k-term mean. Zero distances are duplicate points
/// ([`Error::DuplicatePoint`]); all-equal distances make the denominator
/// vanish ([`Error::DegenerateNeighborhood`]). The estimate is invariant
/// under rescaling all distances by a positive constant.
pub fn lid_mle(neighborhood: &NeighborhoodDistances) -> Result<f64> {
    let d = neighborhood.as_slice();
    let k = d.len();
    if d[0] == 0.0 {
        return Err(Error::DuplicatePoint);
    }
    let r_k = d[k - 1];
    if d[0] == r_k {
        return Err(Error::DegenerateNeighborhood { k });
    }
    let mean_log: f64 = d.iter().map(|&r| (r / r_k).ln()).sum::<f64>() / k as f64;
    let lid = -1.0 / mean_log;
    if !lid.is_finite() || lid <= 0.0 {
        return Err(Error::NonFinite { context: "lid_mle" });
    }
    Ok(lid)
}

/// Euclidean distances from `query` to its `k` nearest points among
/// `references`, optionally excluding one index (the query's own counterpart
/// when it is a member of the reference batch).
pub fn knn_distances(
    query: &Tensor,
    references: &[Tensor],
    k: usize,
    exclude: Option<usize>,
) -> Result<NeighborhoodDistances> {
    if k == 0 {
        return Err(Error::EmptyInput("neighborhood size k"));
    }
    if let Some(idx) = exclude {
        if idx >= references.len() {
            return Err(Error::ShapeMismatch(format!(
                "exclusion index {idx} out of range for {} references",
                references.len()
            )));
        }
    }
    let available = references.len() - usize::from(exclude.is_some());
    if available < k {
        return Err(Error::TooFewReferences {
            needed: k,
            have: available,
        });
    }
    let mut distances = Vec::with_capacity(available);
    for (i, r) in references.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        distances.push(query.euclidean_distance(r)?);
    }
    distances.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distances.truncate(k);
    NeighborhoodDistances::new(distances)
}

/// What kind of example a feature vector describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExampleKind {
    Clean,
    Noisy,
    Adversarial,
}

impl ExampleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExampleKind::Clean => "clean",
            ExampleKind::Noisy => "noisy",
            ExampleKind::Adversarial => "adversarial",
        }
    }
}

impl std::str::FromStr for ExampleKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clean" => Ok(ExampleKind::Clean),
            "noisy" => Ok(ExampleKind::Noisy),
            "adversarial" => Ok(ExampleKind::Adversarial),
            other => Err(Error::Config(format!("unknown example kind {other:?}"))),
        }
    }
}

/// One point to featurize. `counterpart` is the index of this query's own
/// clean version inside the reference batch, to be excluded from its
/// neighborhoods; `None` when the references are drawn elsewhere (the
/// default train-split mode).
#[derive(Debug, Clone)]
pub struct LidQuery {
    pub x: Tensor,
    pub kind: ExampleKind,
    pub counterpart: Option<usize>,
}

/// Per-layer LID estimates for one example.
#[derive(Debug, Clone, PartialEq)]
pub struct LidFeatureVector {
    pub values: Vec<f64>,
    pub kind: ExampleKind,
}

/// Output of [`extract_features`]: one slot per query, in query order.
/// Queries whose neighborhood was degenerate at any layer are dropped
/// (`None`) and counted.
#[derive(Debug, Clone)]
pub struct FeatureExtraction {
    pub features: Vec<Option<LidFeatureVector>>,
    pub dropped: usize,
}

/// Compute per-layer LID feature vectors for `queries` against one reference
/// minibatch. The reference batch must have exactly `cfg.batch_size` points.
/// Degenerate neighborhoods (duplicate points, all-equal distances) drop the
/// affected query without aborting the batch; structural errors (shape
/// mismatches, bad configs) abort.
pub fn extract_features(
    net: &Network,
    reference_batch: &[Tensor],
    queries: &[LidQuery],
    cfg: &LidConfig,
) -> Result<FeatureExtraction> {
    cfg.validate()?;
    if reference_batch.len() != cfg.batch_size {
        return Err(Error::ShapeMismatch(format!(
            "reference batch of {} points, config batch_size {}",
            reference_batch.len(),
            cfg.batch_size
        )));
    }
    for q in queries {
        if let Some(idx) = q.counterpart {
            if idx >= reference_batch.len() {
                return Err(Error::ShapeMismatch(format!(
                    "counterpart index {idx} out of range for batch of {}",
                    reference_batch.len()
                )));
            }
        }
    }

    // Per-layer activation sets of the reference batch, computed once.
    let num_layers = net.num_layers();
    let mut ref_acts: Vec<Vec<Tensor>> = (0..num_layers).map(|_| Vec::new()).collect();
    for r in reference_batch {
        let trace = net.forward(r)?;
        for (layer, act) in trace.per_layer.into_iter().enumerate() {
            ref_acts[layer].push(act);
        }
    }

    let per_query: Vec<Result<Option<LidFeatureVector>>> = queries
        .par_iter()
        .map(|q| {
            let trace = net.forward(&q.x)?;
            let mut values = Vec::with_capacity(num_layers);
            for (layer, act) in trace.per_layer.iter().enumerate() {
                let neighborhood = knn_distances(act, &ref_acts[layer], cfg.k, q.counterpart)?;
                match lid_mle(&neighborhood) {
                    Ok(lid) => values.push(lid),
                    Err(Error::DuplicatePoint) | Err(Error::DegenerateNeighborhood { .. }) => {
                        return Ok(None);
                    }
                    Err(e) => return Err(e),
                }
            }
            Ok(Some(LidFeatureVector {
                values,
                kind: q.kind,
            }))
        })
        .collect();

    let mut features = Vec::with_capacity(queries.len());
    let mut dropped = 0usize;
    for item in per_query {
        let item = item?;
        if item.is_none() {
            dropped += 1;
        }
        features.push(item);
    }
    Ok(FeatureExtraction { features, dropped })
}

/// Gaussian noise rescaled to exactly `target_l2` (before clamping), added
/// to `x` and clamped to the box. Clamping may shrink the realized norm; it
/// is deliberately not re-inflated, so noisy examples never leave the box.
pub fn make_noisy(x: &Tensor, target_l2: f64, box_constraint: Interval, seed: u64) -> Tensor {
    assert!(
        target_l2 > 0.0 && target_l2.is_finite(),
        "make_noisy requires a positive finite target norm, got {target_l2}"
    );
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noise: Vec<f64> = (0..x.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let norm = noise.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        // Probability zero for any real dimension; keep the point unchanged.
        return x.clamp(box_constraint);
    }
    let scale = target_l2 / norm;
    let data = x
        .data
        .iter()
        .zip(&noise)
        .map(|(&xi, &ni)| box_constraint.clamp(xi + scale * ni))
        .collect();
    Tensor {
        shape: x.shape.clone(),
        data,
    }
}

/// Draw `n` points uniformly from the unit d-ball (Gaussian direction,
/// radius `U^(1/d)`). The ball has intrinsic dimension exactly `d`, which
/// makes it the natural ground-truth fixture for the LID estimator.
pub fn sample_uniform_ball(n: usize, dim: usize, seed: u64) -> Vec<Tensor> {
    assert!(n > 0 && dim > 0);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let unit = Uniform::new(0.0f64, 1.0);
    (0..n)
        .map(|_| {
            let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
            let radius: f64 = unit.sample(&mut rng).powf(1.0 / dim as f64);
            let data = dir.iter().map(|&v| v / norm * radius).collect();
            Tensor {
                shape: vec![dim],
                data,
            }
        })
        .collect()
}

/// Write feature vectors as CSV: `sample_id,label,lid_layer_0,...`.
/// The label column holds the example kind (clean/noisy/adversarial).
pub fn write_features_csv(
    path: &Path,
    rows: &[(usize, &LidFeatureVector)],
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let layers = rows.first().map_or(0, |(_, f)| f.values.len());
    let header: Vec<String> = std::iter::once("sample_id".to_string())
        .chain(std::iter::once("label".to_string()))
        .chain((0..layers).map(|l| format!("lid_layer_{l}")))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    for (id, f) in rows {
        if f.values.len() != layers {
            return Err(Error::ShapeMismatch(format!(
                "feature vector with {} layers in a file of {}-layer rows",
                f.values.len(),
                layers
            )));
        }
        let mut line = format!("{},{}", id, f.kind.as_str());
        for v in &f.values {
            line.push_str(&format!(",{v:.6}"));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Read a features CSV written by [`write_features_csv`] back into
/// `(sample_id, feature)` rows.
pub fn read_features_csv(path: &Path) -> Result<Vec<(usize, LidFeatureVector)>> {
    let bad = |reason: String| Error::MalformedFile {
        path: path.display().to_string(),
        reason,
    };
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| bad("empty features file".into()))?;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.len() < 3 || columns[0] != "sample_id" || columns[1] != "label" {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    for (i, c) in columns[2..].iter().enumerate() {
        if *c != format!("lid_layer_{i}") {
            return Err(bad(format!("unexpected feature column {c:?}")));
        }
    }
    let layers = columns.len() - 2;
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns.len() {
            return Err(bad(format!(
                "expected {} fields, got {} in {line:?}",
                columns.len(),
                fields.len()
            )));
        }
        let id: usize = fields[0]
            .parse()
            .map_err(|_| bad(format!("sample_id: cannot parse {:?}", fields[0])))?;
        let kind: ExampleKind = fields[1].parse()?;
        let mut values = Vec::with_capacity(layers);
        for f in &fields[2..] {
            let v: f64 = f
                .parse()
                .map_err(|_| bad(format!("feature value: cannot parse {f:?}")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite feature value {f:?}")));
            }
            values.push(v);
        }
        rows.push((id, LidFeatureVector { values, kind }));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{self, Split};
    use crate::nn::{train, Activation, LayerSpec, TrainConfig};
    use proptest::prelude::*;

    #[test]
    fn lid_mle_hand_values() {
        // d = [1, e]: mean log = (ln(1/e) + ln(1)) / 2 = -1/2, LID = 2.
        let n = NeighborhoodDistances::new(vec![1.0, std::f64::consts::E]).unwrap();
        assert!((lid_mle(&n).unwrap() - 2.0).abs() < 1e-12);
        // d = [e^-1, e^-1, 1]: mean log = (-1 - 1 + 0)/3, LID = 1.5.
        let r = (-1.0f64).exp();
        let n = NeighborhoodDistances::new(vec![r, r, 1.0]).unwrap();
        assert!((lid_mle(&n).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn lid_mle_is_scale_invariant() {
        let base = vec![0.11, 0.35, 0.4, 0.92, 1.7];
        let reference = lid_mle(&NeighborhoodDistances::new(base.clone()).unwrap()).unwrap();
        for scale in [1e-6, 0.25, 3.0, 8.0, 1e9] {
            let scaled: Vec<f64> = base.iter().map(|d| d * scale).collect();
            let lid = lid_mle(&NeighborhoodDistances::new(scaled).unwrap()).unwrap();
            assert!(
                (lid - reference).abs() <= 1e-12 * reference,
                "scale {scale}: {lid} vs {reference}"
            );
        }
        // Power-of-two scaling is exact in binary floating point.
        let doubled: Vec<f64> = base.iter().map(|d| d * 4.0).collect();
        assert_eq!(
            lid_mle(&NeighborhoodDistances::new(doubled).unwrap()).unwrap(),
            reference
        );
    }

    #[test]
    fn lid_mle_rejects_degenerate_neighborhoods() {
        let all_equal = NeighborhoodDistances::new(vec![0.5; 8]).unwrap();
        assert!(matches!(
            lid_mle(&all_equal),
            Err(Error::DegenerateNeighborhood { k: 8 })
        ));
        let with_zero = NeighborhoodDistances::new(vec![0.0, 0.1, 0.2]).unwrap();
        assert!(matches!(lid_mle(&with_zero), Err(Error::DuplicatePoint)));
        // A single distance is always degenerate.
        let single = NeighborhoodDistances::new(vec![0.7]).unwrap();
        assert!(matches!(
            lid_mle(&single),
            Err(Error::DegenerateNeighborhood { k: 1 })
        ));
    }

    #[test]
    fn neighborhood_constructor_sorts_and_validates() {
        let n = NeighborhoodDistances::new(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(n.as_slice(), &[1.0, 2.0, 3.0]);
        assert!(NeighborhoodDistances::new(vec![]).is_err());
        assert!(NeighborhoodDistances::new(vec![1.0, -0.1]).is_err());
        assert!(NeighborhoodDistances::new(vec![f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn lid_estimates_are_positive_and_finite(
            mut d in proptest::collection::vec(1e-3..1e3f64, 2..40)
        ) {
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assume!(d[0] < d[d.len() - 1]);
            let lid = lid_mle(&NeighborhoodDistances::new(d).unwrap()).unwrap();
            prop_assert!(lid.is_finite() && lid > 0.0);
        }

        #[test]
        fn lid_scale_invariance_property(
            mut d in proptest::collection::vec(1e-3..1e3f64, 5..20),
            scale in 1e-3..1e3f64,
        ) {
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assume!(d[0] < d[d.len() - 1]);
            let a = lid_mle(&NeighborhoodDistances::new(d.clone()).unwrap()).unwrap();
            let scaled: Vec<f64> = d.iter().map(|x| x * scale).collect();
            let b = lid_mle(&NeighborhoodDistances::new(scaled).unwrap()).unwrap();
            prop_assert!((a - b).abs() <= 1e-9 * a.max(b));
        }
    }

    #[test]
    fn knn_distances_hand_case() {
        let refs: Vec<Tensor> = [0.0, 1.0, 3.0, 7.0]
            .iter()
            .map(|&v| Tensor::vector(vec![v]).unwrap())
            .collect();
        let query = Tensor::vector(vec![0.0]).unwrap();
        let n = knn_distances(&query, &refs, 2, Some(0)).unwrap();
        assert_eq!(n.as_slice(), &[1.0, 3.0]);
        // Without exclusion the zero self-distance comes first.
        let n = knn_distances(&query, &refs, 2, None).unwrap();
        assert_eq!(n.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn knn_distances_validates() {
        let refs: Vec<Tensor> = (0..5)
            .map(|v| Tensor::vector(vec![v as f64]).unwrap())
            .collect();
        let query = Tensor::vector(vec![0.5]).unwrap();
        assert!(matches!(
            knn_distances(&query, &refs, 5, Some(1)),
            Err(Error::TooFewReferences { needed: 5, have: 4 })
        ));
        assert!(knn_distances(&query, &refs, 9, None).is_err());
        assert!(knn_distances(&query, &refs, 2, Some(10)).is_err());
        assert!(knn_distances(&query, &refs, 0, None).is_err());
    }

    #[test]
    fn ball_sampler_recovers_intrinsic_dimension() {
        // Desk-scale version of the uniform-ball oracle; the acceptance
        // suite runs the full-size one.
        for dim in [1usize, 2, 5] {
            let points = sample_uniform_ball(2000, dim, 33 + dim as u64);
            let mut estimates = Vec::new();
            for i in 0..50 {
                let n = knn_distances(&points[i], &points, 50, Some(i)).unwrap();
                estimates.push(lid_mle(&n).unwrap());
            }
            estimates.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = estimates[estimates.len() / 2];
            let rel = (median - dim as f64).abs() / dim as f64;
            assert!(
                rel < 0.3,
                "dim {dim}: median LID {median} off by {rel}"
            );
        }
    }

    #[test]
    fn make_noisy_hits_target_l2_away_from_box_edges() {
        let x = Tensor::vector(vec![0.5; 64]).unwrap();
        let noisy = make_noisy(&x, 0.01, Interval::UNIT, 7);
        let l2 = noisy.euclidean_distance(&x).unwrap();
        assert!((l2 - 0.01).abs() < 1e-12, "realized norm {l2}");
        // Determinism.
        let again = make_noisy(&x, 0.01, Interval::UNIT, 7);
        assert_eq!(noisy.data, again.data);
        let other = make_noisy(&x, 0.01, Interval::UNIT, 8);
        assert_ne!(noisy.data, other.data);
    }

    #[test]
    fn make_noisy_clamps_without_reinflating() {
        let x = Tensor::vector(vec![0.0; 32]).unwrap(); // corner of the box
        let noisy = make_noisy(&x, 5.0, Interval::UNIT, 3);
        assert!(noisy.data.iter().all(|v| Interval::UNIT.contains(*v)));
        let l2 = noisy.euclidean_distance(&x).unwrap();
        assert!(l2 < 5.0, "clamping must only shrink the norm, got {l2}");
        assert!(l2 > 0.0);
    }

    // Lightly trained on spread-out blobs: heavy training on tight 2-class
    // blobs drives whole ReLU layers dead, collapsing distinct inputs onto
    // identical activations and making every neighborhood degenerate.
    fn small_net_and_data() -> (Network, data::LabeledDataset) {
        let data = data::synthetic_blobs(160, 3, 6, 0.15, 51, Split::Train);
        let specs = [
            LayerSpec {
                in_dim: 6,
                out_dim: 16,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 16,
                out_dim: 3,
                activation: Activation::Identity,
            },
        ];
        let net = train(
            Network::new(&specs, 1).unwrap(),
            &data,
            &TrainConfig {
                learning_rate: 0.05,
                epochs: 8,
                batch_size: 20,
                seed: 2,
            },
        )
        .unwrap();
        (net, data)
    }

    #[test]
    fn extract_features_produces_one_value_per_layer() {
        let (net, data) = small_net_and_data();
        let cfg = LidConfig { k: 10, batch_size: 40 };
        let refs: Vec<Tensor> = data.samples[..40].to_vec();
        let queries: Vec<LidQuery> = data.samples[40..48]
            .iter()
            .map(|x| LidQuery {
                x: x.clone(),
                kind: ExampleKind::Clean,
                counterpart: None,
            })
            .collect();
        let out = extract_features(&net, &refs, &queries, &cfg).unwrap();
        assert_eq!(out.features.len(), 8);
        assert_eq!(out.dropped, 0);
        for f in out.features.iter().flatten() {
            assert_eq!(f.values.len(), net.num_layers());
            assert!(f.values.iter().all(|v| v.is_finite() && *v > 0.0));
            assert_eq!(f.kind, ExampleKind::Clean);
        }
    }

    #[test]
    fn duplicate_query_is_dropped_unless_excluded() {
        let (net, data) = small_net_and_data();
        let cfg = LidConfig { k: 10, batch_size: 40 };
        let refs: Vec<Tensor> = data.samples[..40].to_vec();
        // The query *is* reference point 3.
        let dup = LidQuery {
            x: refs[3].clone(),
            kind: ExampleKind::Clean,
            counterpart: None,
        };
        let out = extract_features(&net, &refs, std::slice::from_ref(&dup), &cfg).unwrap();
        assert_eq!(out.dropped, 1);
        assert!(out.features[0].is_none());

        // Excluding its own index restores a valid neighborhood.
        let excluded = LidQuery {
            counterpart: Some(3),
            ..dup
        };
        let out = extract_features(&net, &refs, std::slice::from_ref(&excluded), &cfg).unwrap();
        assert_eq!(out.dropped, 0);
        assert!(out.features[0].is_some());
    }

    #[test]
    fn extract_features_validates_batch_and_counterpart() {
        let (net, data) = small_net_and_data();
        let cfg = LidConfig { k: 10, batch_size: 40 };
        let refs: Vec<Tensor> = data.samples[..39].to_vec(); // one short
        let q = LidQuery {
            x: data.samples[50].clone(),
            kind: ExampleKind::Noisy,
            counterpart: None,
        };
        assert!(extract_features(&net, &refs, std::slice::from_ref(&q), &cfg).is_err());

        let refs: Vec<Tensor> = data.samples[..40].to_vec();
        let bad = LidQuery {
            counterpart: Some(40),
            ..q
        };
        assert!(extract_features(&net, &refs, std::slice::from_ref(&bad), &cfg).is_err());
        assert!(LidConfig { k: 1, batch_size: 40 }.validate().is_err());
        assert!(LidConfig { k: 10, batch_size: 10 }.validate().is_err());
    }

    #[test]
    fn features_csv_layout() {
        let f1 = LidFeatureVector {
            values: vec![1.25, 3.5],
            kind: ExampleKind::Adversarial,
        };
        let f2 = LidFeatureVector {
            values: vec![0.75, 2.0],
            kind: ExampleKind::Clean,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("features.csv");
        write_features_csv(&path, &[(4, &f1), (9, &f2)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "sample_id,label,lid_layer_0,lid_layer_1");
        assert_eq!(lines[1], "4,adversarial,1.250000,3.500000");
        assert_eq!(lines[2], "9,clean,0.750000,2.000000");

        let parsed = read_features_csv(&path).unwrap();
        assert_eq!(parsed.len(), 2);
        assert_eq!(parsed[0].0, 4);
        assert_eq!(parsed[0].1, f1);
        assert_eq!(parsed[1].0, 9);
        assert_eq!(parsed[1].1, f2);
    }

    #[test]
    fn features_csv_reader_rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "wrong,header,here\n").unwrap();
        assert!(matches!(
            read_features_csv(&path),
            Err(Error::MalformedFile { .. })
        ));
        std::fs::write(&path, "sample_id,label,lid_layer_0\n1,clean\n").unwrap();
        assert!(matches!(
            read_features_csv(&path),
            Err(Error::MalformedFile { .. })
        ));
        std::fs::write(&path, "sample_id,label,lid_layer_0\n1,clean,nan\n").unwrap();
        assert!(read_features_csv(&path).is_err());
    }
}
