//! Secondary reliability model: features, meta-labels, a logistic scorer
//! trained by full-batch gradient descent, and the execute/abstain gate that
//! combines the score with rule verdicts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::{direction_of, Forecast, Side};
use crate::indicators::{fit_resistance_line, fit_support_line, realized_volatility};
use crate::market_data::{Series, Window};
use crate::numfmt::trim_fixed;
use crate::rules::RuleVerdict;

/// Serialization format version of [`GateModel`].
pub const MODEL_FORMAT: u32 = 1;

/// Names of the market features, in vector order. Rule bits and the bias
/// term follow.
pub const MARKET_FEATURES: [&str; 6] = [
    "predicted_move",
    "realized_volatility",
    "support_slope",
    "resistance_slope",
    "support_distance",
    "resistance_distance",
];

pub const BIAS_FEATURE: &str = "bias";

/// Full feature name list for a rule configuration.
pub fn feature_names<S: AsRef<str>>(rule_names: &[S]) -> Vec<String> {
    MARKET_FEATURES
        .iter()
        .map(|s| s.to_string())
        .chain(rule_names.iter().map(|r| format!("rule:{}", r.as_ref())))
        .chain(std::iter::once(BIAS_FEATURE.to_string()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Builds the feature vector for the forecast made at the window's last
/// candle. Trend lines are fitted on the same window.
pub fn extract_features(w: &Window<'_>, f: &Forecast, verdicts: &[RuleVerdict]) -> Result<FeatureVector> {
    if f.origin_index != w.last_index() {
        return Err(Error::InvalidParameter(format!(
            "forecast origin {} does not match window end {}",
            f.origin_index,
            w.last_index()
        )));
    }
    let last = w.last().close;
    let support = fit_support_line(w)?;
    let resistance = fit_resistance_line(w)?;
    let end_step = (w.len() - 1) as f64;

    let mut values = vec![
        f.final_value() / last - 1.0,
        realized_volatility(w)?,
        support.slope / last,
        resistance.slope / last,
        (last - support.value_at(end_step)) / last,
        (resistance.value_at(end_step) - last) / last,
    ];
    values.extend(verdicts.iter().map(|v| if v.passed { 1.0 } else { 0.0 }));
    values.push(1.0);

    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        let names = feature_names(&verdicts.iter().map(|v| v.rule.as_str()).collect::<Vec<_>>());
        return Err(Error::NonFiniteFeature(names[i].clone()));
    }
    Ok(FeatureVector(values))
}

/// Realized side over `horizon` steps after `origin`, ties counting as Down.
pub fn realized_side(series: &Series, origin: usize, horizon: usize) -> Result<Side> {
    let end = origin + horizon;
    if end >= series.len() {
        return Err(Error::InsufficientHistory {
            required: end + 1,
            actual: series.len(),
        });
    }
    Ok(Side::of_move(series.close(origin)?, series.close(end)?))
}

/// 1 when the forecast's direction matches what the series did over the
/// same span, else 0.
pub fn meta_label(f: &Forecast, realized: &Series) -> Result<u8> {
    let actual = realized_side(realized, f.origin_index, f.horizon())?;
    let called = direction_of(f, realized.close(f.origin_index)?);
    Ok(u8::from(called == actual))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Weights start at zero, so the seed does not influence training.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 0.1,
            seed: 0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean logistic log-loss of `weights` on `(x, y)` pairs.
pub fn log_loss(weights: &[f64], data: &[(Vec<f64>, u8)]) -> f64 {
    let total: f64 = data
        .iter()
        .map(|(x, y)| {
            let z = dot(weights, x);
            softplus(z) - f64::from(*y) * z
        })
        .sum();
    total / data.len() as f64
}

/// Analytic gradient of [`log_loss`].
pub fn log_loss_gradient(weights: &[f64], data: &[(Vec<f64>, u8)]) -> Vec<f64> {
    let mut grad = vec![0.0; weights.len()];
    for (x, y) in data {
        let err = sigmoid(dot(weights, x)) - f64::from(*y);
        for (g, xi) in grad.iter_mut().zip(x) {
            *g += err * xi;
        }
    }
    let n = data.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    grad
}

/// Gradient descent from zero weights. Returns the weights and the loss
/// before each epoch plus the final loss (`epochs + 1` entries).
pub fn fit_logistic(data: &[(Vec<f64>, u8)], epochs: usize, learning_rate: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let dim = data.first().map(|(x, _)| x.len()).ok_or(Error::EmptyInput)?;
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!("learning rate {learning_rate}")));
    }
    let mut weights = vec![0.0; dim];
    let mut losses = Vec::with_capacity(epochs + 1);
    for epoch in 0..=epochs {
        let loss = log_loss(&weights, data);
        if !loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        losses.push(loss);
        if epoch == epochs {
            break;
        }
        let grad = log_loss_gradient(&weights, data);
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= learning_rate * g;
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::Diverged { epoch });
        }
    }
    Ok((weights, losses))
}

/// Trained reliability model. Features are standardized with the stored
/// mean and standard deviation before the dot product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateModel {
    pub format: u32,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub threshold: f64,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub config: TrainConfig,
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside [0, 1]")));
    }
    Ok(())
}

impl GateModel {
    /// Zero weights with identity standardization: scores 0.5 everywhere.
    pub fn untrained(feature_names: Vec<String>, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        let d = feature_names.len();
        Ok(Self {
            format: MODEL_FORMAT,
            feature_names,
            weights: vec![0.0; d],
            threshold,
            feature_mean: vec![0.0; d],
            feature_std: vec![1.0; d],
            config: TrainConfig::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        check_threshold(threshold)?;
        self.threshold = threshold;
        Ok(self)
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: GateModel = serde_json::from_str(text)?;
        if m.format != MODEL_FORMAT {
            return Err(Error::Serde(format!("unsupported model format {}", m.format)));
        }
        let d = m.weights.len();
        if m.feature_mean.len() != d || m.feature_std.len() != d || m.feature_names.len() != d {
            return Err(Error::Serde("model vectors have inconsistent lengths".into()));
        }
        if m.weights.iter().any(|w| !w.is_finite()) || m.feature_std.iter().any(|s| s.is_nan() || *s <= 0.0) {
            return Err(Error::Serde("model has non-finite weights or bad scales".into()));
        }
        check_threshold(m.threshold)?;
        Ok(m)
    }
}

/// Fits standardization on `dataset`, then the logistic weights. The last
/// component of every vector is the bias and is left unscaled.
pub fn train(
    dataset: &[(FeatureVector, u8)],
    feature_names: Vec<String>,
    threshold: f64,
    config: TrainConfig,
) -> Result<GateModel> {
    let first = dataset.first().ok_or(Error::EmptyInput)?;
    let d = first.0.len();
    if feature_names.len() != d {
        return Err(Error::DimensionMismatch {
            expected: feature_names.len(),
            actual: d,
        });
    }
    if let Some((x, _)) = dataset.iter().find(|(x, _)| x.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: x.len(),
        });
    }
    let positives = dataset.iter().filter(|(_, y)| *y == 1).count();
    if positives == 0 || positives == dataset.len() {
        return Err(Error::DegenerateClasses(format!(
            "{positives} positive labels out of {}",
            dataset.len()
        )));
    }

    let n = dataset.len() as f64;
    let mut mean = vec![0.0; d];
    let mut std = vec![1.0; d];
    for j in 0..d.saturating_sub(1) {
        let m = dataset.iter().map(|(x, _)| x.0[j]).sum::<f64>() / n;
        let var = dataset.iter().map(|(x, _)| (x.0[j] - m).powi(2)).sum::<f64>() / n;
        mean[j] = m;
        std[j] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }

    let mut model = GateModel {
        format: MODEL_FORMAT,
        feature_names,
        weights: vec![0.0; d],
        threshold,
        feature_mean: mean,
        feature_std: std,
        config,
    };
    check_threshold(threshold)?;
    let scaled: Vec<(Vec<f64>, u8)> = dataset
        .iter()
        .map(|(x, y)| (model.standardize(&x.0), *y))
        .collect();
    let (weights, _) = fit_logistic(&scaled, config.epochs, config.learning_rate)?;
    model.weights = weights;
    Ok(model)
}

/// Probability that the primary call is correct.
pub fn score(m: &GateModel, x: &FeatureVector) -> Result<f64> {
    if x.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            actual: x.len(),
        });
    }
    Ok(sigmoid(dot(&m.weights, &m.standardize(&x.0))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub executed: bool,
    pub score: f64,
    pub threshold: f64,
    pub reasons: Vec<String>,
}

/// Executes only when the score clears the threshold and every required
/// rule passed. Reasons cover the score test and every verdict supplied.
pub fn decide<S: AsRef<str>>(
    score: f64,
    m: &GateModel,
    verdicts: &[RuleVerdict],
    required_rules: &[S],
) -> Result<GateDecision> {
    for name in required_rules {
        if !verdicts.iter().any(|v| v.rule == name.as_ref()) {
            return Err(Error::UnknownRule(name.as_ref().to_string()));
        }
    }
    let confident = score >= m.threshold;
    let mut reasons = vec![if confident {
        format!("score {:.2} ≥ {:.2}", score, m.threshold)
    } else {
        format!("score {:.2} < {:.2}: statistical veto", score, m.threshold)
    }];

    let mut justified = true;
    for v in verdicts {
        let required = required_rules.iter().any(|r| r.as_ref() == v.rule);
        let role = if required { "required" } else { "advisory" };
        if v.passed {
            reasons.push(format!("rule {} ({role}) passed", v.rule));
        } else {
            let failed: Vec<String> = v
                .failed()
                .map(|e| {
                    format!(
                        "{} (measured {} vs threshold {})",
                        e.predicate,
                        trim_fixed(e.measured, 4),
                        trim_fixed(e.threshold, 4)
                    )
                })
                .collect();
            let veto = if required { ": rule veto" } else { "" };
            reasons.push(format!(
                "rule {} ({role}) failed{veto}; failed {}",
                v.rule,
                failed.join(", ")
            ));
            justified &= !required;
        }
    }
    Ok(GateDecision {
        executed: confident && justified,
        score,
        threshold: m.threshold,
        reasons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::{naive_forecast, ONE_SIGMA_COVERAGE};
    use crate::market_data::{Candle, TimestampFormat};
    use crate::rules::TraceEntry;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn closes_series(closes: &[f64]) -> Series {
        let candles = closes
            .iter()
            .enumerate()
            .map(|(i, &c)| Candle::new(i as i64, c, c, c, c, 1.0))
            .collect();
        Series::new("T", candles, TimestampFormat::Epoch)
    }

    fn verdict(rule: &str, passed: bool) -> RuleVerdict {
        RuleVerdict {
            rule: rule.into(),
            passed,
            trace: vec![
                TraceEntry { predicate: "p_ok".into(), measured: 1.0, threshold: 0.5, passed: true },
                TraceEntry { predicate: "p_check".into(), measured: 0.2, threshold: 0.9, passed },
            ],
        }
    }

    #[test]
    fn flat_window_features() {
        let s = closes_series(&[100.0; 20]);
        let w = s.full_window().unwrap();
        let f = naive_forecast(&w, 7, ONE_SIGMA_COVERAGE).unwrap();
        let x = extract_features(&w, &f, &[verdict("a", true), verdict("b", false)]).unwrap();
        assert_eq!(x.len(), 7 + 2);
        assert_eq!(x.values()[0], 0.0);
        assert_eq!(x.values()[1], 0.0);
        assert_eq!(&x.values()[6..], &[1.0, 0.0, 1.0]);
        assert_eq!(feature_names(&["a", "b"]).len(), x.len());
    }

    #[test]
    fn misaligned_forecast_rejected() {
        let s = closes_series(&[100.0; 20]);
        let w = s.window(0, 10).unwrap();
        let f = naive_forecast(&s.full_window().unwrap(), 7, ONE_SIGMA_COVERAGE).unwrap();
        assert!(extract_features(&w, &f, &[]).is_err());
    }

    #[test]
    fn meta_labels() {
        let s = closes_series(&[100.0, 101.0, 102.0, 100.0]);
        let up = Forecast::new(0, vec![105.0, 106.0], None).unwrap();
        assert_eq!(meta_label(&up, &s).unwrap(), 1);
        let up_flat = Forecast::new(1, vec![105.0, 106.0], None).unwrap();
        // close 101 -> 100: realized Down
        assert_eq!(meta_label(&up_flat, &s).unwrap(), 0);
        let flat = closes_series(&[100.0, 100.0, 100.0]);
        let up = Forecast::new(0, vec![101.0, 102.0], None).unwrap();
        assert_eq!(meta_label(&up, &flat).unwrap(), 0);
        let too_long = Forecast::new(2, vec![1.0, 2.0], None).unwrap();
        assert!(meta_label(&too_long, &s).is_err());
    }

    #[test]
    fn meta_labels_match_hand_table() {
        // 20 closes, horizon 3, drift-style forecasts: the table below was
        // worked out by hand from the closes.
        let closes = [
            10.0, 11.0, 12.0, 11.0, 10.0, 10.0, 12.0, 13.0, 12.0, 12.0, 14.0, 15.0, 13.0, 12.0,
            12.0, 11.0, 13.0, 14.0, 14.0, 16.0,
        ];
        let s = closes_series(&closes);
        // forecast Up at even origins, Down at odd
        let expected: [u8; 17] = [1, 1, 0, 0, 1, 0, 0, 0, 1, 0, 0, 1, 0, 0, 1, 0, 1];
        for (o, want) in expected.iter().enumerate() {
            let c = closes[o];
            let path = if o % 2 == 0 { vec![c + 1.0; 3] } else { vec![c - 1.0; 3] };
            let f = Forecast::new(o, path, None).unwrap();
            assert_eq!(meta_label(&f, &s).unwrap(), *want, "origin {o}");
        }
    }

    #[test]
    fn zero_weights_score_half() {
        let m = GateModel::untrained(feature_names::<&str>(&[]), 0.5).unwrap();
        let x = FeatureVector(vec![3.0, -2.0, 0.1, 9.0, 1.0, 4.0, 1.0]);
        assert_eq!(score(&m, &x).unwrap(), 0.5);
        assert!(matches!(
            score(&m, &FeatureVector(vec![1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn strong_weight_on_active_bit() {
        let mut m = GateModel::untrained(feature_names(&["r"]), 0.5).unwrap();
        m.weights[6] = 10.0;
        let mut x = vec![0.0; 8];
        x[6] = 1.0;
        // sigmoid(10) = 0.9999546
        assert!(score(&m, &FeatureVector(x)).unwrap() > 0.999);
    }

    #[test]
    fn separable_toy_set_trains_to_full_accuracy() {
        let mut data = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a: f64 = rng.gen_range(-2.0..2.0);
            let b: f64 = rng.gen_range(-2.0..2.0);
            if (a + b).abs() < 0.2 {
                continue;
            }
            data.push((FeatureVector(vec![a, b, 1.0]), u8::from(a + b > 0.0)));
        }
        let names = vec!["a".into(), "b".into(), "bias".into()];
        let cfg = TrainConfig { epochs: 500, learning_rate: 0.1, seed: 1 };
        let m = train(&data, names, 0.5, cfg).unwrap();
        let correct = data
            .iter()
            .filter(|(x, y)| u8::from(score(&m, x).unwrap() >= 0.5) == *y)
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn training_errors() {
        let names = vec!["a".to_string(), "bias".to_string()];
        let one_class = vec![(FeatureVector(vec![1.0, 1.0]), 1u8), (FeatureVector(vec![2.0, 1.0]), 1)];
        assert!(matches!(
            train(&one_class, names.clone(), 0.5, TrainConfig::default()),
            Err(Error::DegenerateClasses(_))
        ));
        assert_eq!(train(&[], names, 0.5, TrainConfig::default()), Err(Error::EmptyInput));

        let raw = vec![(vec![1e300, 1.0], 1u8), (vec![-1e300, 1.0], 0)];
        assert!(matches!(fit_logistic(&raw, 50, 10.0), Err(Error::Diverged { .. })));
    }

    #[test]
    fn loss_non_increasing_at_small_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<(Vec<f64>, u8)> = (0..200)
            .map(|_| {
                let a: f64 = rng.gen_range(-1.0..1.0);
                let b: f64 = rng.gen_range(-1.0..1.0);
                let noisy = a - 0.5 * b + rng.gen_range(-0.5..0.5);
                (vec![a, b, 1.0], u8::from(noisy > 0.0))
            })
            .collect();
        let (_, losses) = fit_logistic(&data, 300, 0.01).unwrap();
        assert_eq!(losses.len(), 301);
        assert!((losses[0] - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(losses.windows(2).all(|p| p[1] <= p[0] + 1e-15));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let data: Vec<(Vec<f64>, u8)> = (0..30)
            .map(|_| ((0..4).map(|_| rng.gen_range(-2.0..2.0)).collect(), rng.gen_range(0..2)))
            .collect();
        let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let g = log_loss_gradient(&w, &data);
        let h = 1e-5;
        for j in 0..4 {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            let fd = (log_loss(&wp, &data) - log_loss(&wm, &data)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1e-3), "j={j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn decide_cases() {
        let m = GateModel::untrained(feature_names(&["r"]), 0.5).unwrap();
        let d = decide::<&str>(0.8, &m, &[], &[]).unwrap();
        assert!(d.executed);
        assert_eq!(d.reasons, vec!["score 0.80 ≥ 0.50".to_string()]);

        let d = decide(0.8, &m, &[verdict("r", false)], &["r"]).unwrap();
        assert!(!d.executed);
        assert!(d.reasons[1].contains("rule r"));
        assert!(d.reasons[1].contains("p_check"));
        assert!(!d.reasons[1].contains("p_ok"));

        let d = decide(0.4, &m, &[verdict("r", true)], &["r"]).unwrap();
        assert!(!d.executed);
        assert!(d.reasons[0].contains("statistical veto"));

        // advisory failure does not veto
        let d = decide::<&str>(0.8, &m, &[verdict("r", false)], &[]).unwrap();
        assert!(d.executed);

        assert_eq!(
            decide(0.8, &m, &[verdict("r", true)], &["missing"]),
            Err(Error::UnknownRule("missing".into()))
        );
    }

    #[test]
    fn model_json_round_trip() {
        let mut m = GateModel::untrained(feature_names(&["r"]), 0.65).unwrap();
        m.weights[0] = -1.25;
        m.feature_std[1] = 0.5;
        let text = m.to_json();
        assert!(text.contains("\"format\": 1"));
        assert_eq!(GateModel::from_json(&text).unwrap(), m);
        let bad = text.replace("\"format\": 1", "\"format\": 2");
        assert!(GateModel::from_json(&bad).is_err());
    }

    proptest! {
        #[test]
        fn score_monotone_in_positively_weighted_feature(
            w in prop::collection::vec(-3.0f64..3.0, 4),
            x in prop::collection::vec(-3.0f64..3.0, 4),
            j in 0usize..4,
            bump in 0.0f64..5.0,
        ) {
            let mut m = GateModel::untrained(vec!["a".into(), "b".into(), "c".into(), "d".into()], 0.5).unwrap();
            m.weights = w.clone();
            m.weights[j] = w[j].abs();
            let base = score(&m, &FeatureVector(x.clone())).unwrap();
            let mut y = x.clone();
            y[j] += bump;
            prop_assert!(score(&m, &FeatureVector(y)).unwrap() >= base);
        }

        #[test]
        fn decide_is_monotone_in_threshold(s in 0.0f64..1.0, t1 in 0.0f64..1.0, t2 in 0.0f64..1.0, pass in any::<bool>()) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let v = [verdict("r", pass)];
            let m = GateModel::untrained(feature_names(&["r"]), lo).unwrap();
            let a = decide(s, &m, &v, &["r"]).unwrap();
            let b = decide(s, &m.clone().with_threshold(hi).unwrap(), &v, &["r"]).unwrap();
            prop_assert!(!b.executed || a.executed);
            prop_assert!(!a.executed || a.score >= a.threshold);
            prop_assert_eq!(decide(s, &m, &v, &["r"]).unwrap(), a);
        }
    }
}
