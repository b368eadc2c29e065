//! Guided input synthesis.
//!
//! A correctly classified input is perturbed once along the mean input
//! gradient of the selected suspicious neurons' activation values. The
//! perturbation is scaled by `step`, clipped per dimension to at most
//! `max_distance` times the value range, and the result is clamped to the
//! input domain. There is no iteration; one pass produces the new input.

use crate::error::{Error, Result};
use crate::evaluate::{distances, Distances};
use crate::network::{ForwardTrace, LabeledInput, Network, NeuronId};
use crate::suspicious::SuspiciousnessReport;
use crate::spectrum::ClassFilter;
use rayon::prelude::*;

/// Parameters of the synthesis step.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisConfig {
    /// Gradient scale applied before clipping.
    pub step: f64,
    /// Maximum per-dimension change as a fraction of the value range.
    pub max_distance: f64,
    /// Lower domain bound of every input dimension.
    pub domain_min: f64,
    /// Upper domain bound of every input dimension.
    pub domain_max: f64,
    /// Inputs to synthesize per ground-truth class.
    pub per_class_count: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            step: 1.0,
            max_distance: 0.1,
            domain_min: 0.0,
            domain_max: 1.0,
            per_class_count: 10,
        }
    }
}

impl SynthesisConfig {
    fn validate(&self) -> Result<()> {
        if self.step <= 0.0 || self.step.is_nan() {
            return Err(Error::Argument(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if self.max_distance.is_nan() || self.max_distance <= 0.0 || self.max_distance > 1.0 {
            return Err(Error::Argument(format!(
                "max distance must be in (0, 1], got {}",
                self.max_distance
            )));
        }
        if self.domain_min.partial_cmp(&self.domain_max) != Some(std::cmp::Ordering::Less) {
            return Err(Error::Argument(format!(
                "domain bounds must satisfy min < max, got [{}, {}]",
                self.domain_min, self.domain_max
            )));
        }
        Ok(())
    }

    /// Absolute per-dimension perturbation cap.
    pub fn distance_cap(&self) -> f64 {
        self.max_distance * (self.domain_max - self.domain_min)
    }
}

/// A synthesized input next to its original, with traces and distances.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisResult {
    pub original: LabeledInput,
    pub synthesized: Vec<f64>,
    pub original_trace: ForwardTrace,
    pub synthesized_trace: ForwardTrace,
    /// Change of each suspicious neuron's post-activation value.
    pub neuron_deltas: Vec<(NeuronId, f64)>,
    pub distances: Distances,
}

/// Perturbs one correctly classified input along the mean gradient of the
/// suspicious neurons. The mean divides by the number of suspicious neurons,
/// including any with a zero gradient.
pub fn synthesize_one(
    net: &Network,
    input: &LabeledInput,
    suspicious: &[NeuronId],
    cfg: &SynthesisConfig,
) -> Result<SynthesisResult> {
    cfg.validate()?;
    if suspicious.is_empty() {
        return Err(Error::Argument("no suspicious neurons given".into()));
    }
    let original_trace = net.forward(&input.features)?;
    if !original_trace.matches(input.label) {
        return Err(Error::Synthesis(format!(
            "input is misclassified (predicted {}, label {}); synthesis starts from correctly classified inputs",
            original_trace.predicted_class(),
            input.label
        )));
    }

    let dim = input.features.len();
    let mut mean_gradient = vec![0.0; dim];
    for &id in suspicious {
        let g = net.input_gradient(&input.features, id)?;
        for (acc, gi) in mean_gradient.iter_mut().zip(&g) {
            *acc += gi;
        }
    }
    let count = suspicious.len() as f64;
    for g in &mut mean_gradient {
        *g /= count;
    }

    let cap = cfg.distance_cap();
    let synthesized: Vec<f64> = input
        .features
        .iter()
        .zip(&mean_gradient)
        .map(|(&u, &g)| {
            let scaled = cfg.step * g;
            let clipped = scaled.clamp(-cap, cap);
            (u + clipped).clamp(cfg.domain_min, cfg.domain_max)
        })
        .collect();

    let synthesized_trace = net.forward(&synthesized)?;
    let neuron_deltas = suspicious
        .iter()
        .map(|&id| {
            let before = original_trace.neuron_value(id)?;
            let after = synthesized_trace.neuron_value(id)?;
            Ok((id, after - before))
        })
        .collect::<Result<_>>()?;
    let distances = distances(&synthesized, &input.features)?;

    Ok(SynthesisResult {
        original: input.clone(),
        synthesized,
        original_trace,
        synthesized_trace,
        neuron_deltas,
        distances,
    })
}

/// Outcome of a batch run: results in input order plus per-class warnings.
#[derive(Debug, Clone)]
pub struct BatchOutcome {
    pub results: Vec<SynthesisResult>,
    pub warnings: Vec<String>,
}

/// Synthesizes up to `per_class_count` inputs per ground-truth class, taking
/// correctly classified inputs in test-set order. Classes with no candidates
/// are skipped with a warning; classes with fewer candidates than requested
/// synthesize what they have, also with a warning.
pub fn synthesize_batch(
    net: &Network,
    tests: &[LabeledInput],
    report: &SuspiciousnessReport,
    cfg: &SynthesisConfig,
) -> Result<BatchOutcome> {
    cfg.validate()?;
    let selected = report.selected();
    if selected.is_empty() {
        return Err(Error::Argument("report selects no neurons".into()));
    }
    let classes: Vec<usize> = match report.class_filter() {
        ClassFilter::All => (0..net.output_width()).collect(),
        ClassFilter::Class(c) => vec![c],
    };

    let mut warnings = Vec::new();
    let mut candidates: Vec<&LabeledInput> = Vec::new();
    let mut any_candidates = false;
    for &class in &classes {
        let mut found = 0;
        for t in tests.iter().filter(|t| t.label == class) {
            if found == cfg.per_class_count {
                break;
            }
            if net.forward(&t.features)?.matches(t.label) {
                candidates.push(t);
                found += 1;
            }
        }
        if found == 0 {
            warnings.push(format!(
                "class {class}: no correctly classified inputs, skipped"
            ));
        } else {
            any_candidates = true;
            if found < cfg.per_class_count {
                warnings.push(format!(
                    "class {class}: only {found} of {} requested candidates",
                    cfg.per_class_count
                ));
            }
        }
    }
    if !any_candidates {
        return Err(Error::Synthesis(
            "no correctly classified input in any class".into(),
        ));
    }

    // Parallel over inputs; collect preserves input order.
    let results: Result<Vec<SynthesisResult>> = candidates
        .par_iter()
        .map(|input| synthesize_one(net, input, &selected, cfg))
        .collect();

    Ok(BatchOutcome {
        results: results?,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Matrix;
    use crate::spectrum::{analyze, ClassFilter};
    use crate::suspicious::{identify, Measure};

    /// 1-input net: hidden neuron with weight `w`, prediction is class 0 for
    /// positive hidden values.
    fn net_with_weight(w: f64) -> Network {
        let hidden = Matrix::from_rows(vec![vec![w]]).unwrap();
        let out = Matrix::from_rows(vec![vec![1.0], vec![-1.0]]).unwrap();
        Network::new(vec![hidden, out], vec![vec![0.0], vec![0.0; 2]], 0.01).unwrap()
    }

    fn one_neuron() -> Vec<NeuronId> {
        vec![NeuronId::new(2, 1)]
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let net = net_with_weight(0.0);
        // weight 0 -> hidden value 0 -> logits (0,0) -> predicts class 0
        let input = LabeledInput::new(vec![0.5], 0);
        let r = synthesize_one(&net, &input, &one_neuron(), &SynthesisConfig::default()).unwrap();
        assert_eq!(r.synthesized, input.features);
        assert_eq!(r.distances, Distances { l1: 0.0, l2: 0.0, linf: 0.0 });
    }

    #[test]
    fn large_gradient_is_clipped_to_the_distance_cap() {
        let net = net_with_weight(5.0);
        let input = LabeledInput::new(vec![0.5], 0);
        let r = synthesize_one(&net, &input, &one_neuron(), &SynthesisConfig::default()).unwrap();
        // gradient 5, step 1, cap 0.1 -> 0.5 + 0.1
        assert!((r.synthesized[0] - 0.6).abs() < 1e-15);
        assert!((r.distances.linf - 0.1).abs() < 1e-15);
    }

    #[test]
    fn domain_clamp_binds_near_the_boundary() {
        let net = net_with_weight(5.0);
        let input = LabeledInput::new(vec![0.95], 0);
        let r = synthesize_one(&net, &input, &one_neuron(), &SynthesisConfig::default()).unwrap();
        assert_eq!(r.synthesized[0], 1.0);
    }

    #[test]
    fn misclassified_input_is_rejected() {
        let net = net_with_weight(1.0);
        // positive input predicts class 0; label says 1
        let input = LabeledInput::new(vec![0.5], 1);
        assert!(matches!(
            synthesize_one(&net, &input, &one_neuron(), &SynthesisConfig::default()),
            Err(Error::Synthesis(_))
        ));
    }

    #[test]
    fn empty_suspicious_set_is_rejected() {
        let net = net_with_weight(1.0);
        let input = LabeledInput::new(vec![0.5], 0);
        assert!(matches!(
            synthesize_one(&net, &input, &[], &SynthesisConfig::default()),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn mean_divides_by_all_suspicious_neurons() {
        // Two hidden neurons: weights 0.02 and 0 -> mean gradient 0.01.
        let hidden = Matrix::from_rows(vec![vec![0.02], vec![0.0]]).unwrap();
        let out = Matrix::from_rows(vec![vec![1.0, 1.0], vec![-1.0, -1.0]]).unwrap();
        let net =
            Network::new(vec![hidden, out], vec![vec![0.0; 2], vec![0.0; 2]], 0.01).unwrap();
        let input = LabeledInput::new(vec![0.5], 0);
        let sn = vec![NeuronId::new(2, 1), NeuronId::new(2, 2)];
        let r = synthesize_one(&net, &input, &sn, &SynthesisConfig::default()).unwrap();
        assert!((r.synthesized[0] - 0.51).abs() < 1e-15);
        assert_eq!(r.neuron_deltas.len(), 2);
    }

    fn two_class_tests() -> Vec<LabeledInput> {
        vec![
            LabeledInput::new(vec![0.6], 0),
            LabeledInput::new(vec![0.4], 0),
            LabeledInput::new(vec![-0.5], 1),
            LabeledInput::new(vec![-0.7], 1),
        ]
    }

    #[test]
    fn batch_takes_per_class_candidates_in_order() {
        let net = net_with_weight(1.0);
        let tests = two_class_tests();
        let table = analyze(&net, &tests, ClassFilter::All, 0.0).unwrap();
        let report = identify(&net, &table, &Measure::Ochiai, 1).unwrap();
        let cfg = SynthesisConfig {
            per_class_count: 1,
            ..Default::default()
        };
        let outcome = synthesize_batch(&net, &tests, &report, &cfg).unwrap();
        assert_eq!(outcome.results.len(), 2);
        assert_eq!(outcome.results[0].original.features, vec![0.6]);
        assert_eq!(outcome.results[1].original.features, vec![-0.5]);
        assert!(outcome.warnings.is_empty());
    }

    #[test]
    fn batch_warns_about_short_and_empty_classes() {
        let net = net_with_weight(1.0);
        // class 1 has no inputs at all
        let tests = vec![
            LabeledInput::new(vec![0.6], 0),
            LabeledInput::new(vec![0.4], 0),
        ];
        let table = analyze(&net, &tests, ClassFilter::All, 0.0).unwrap();
        let report = identify(&net, &table, &Measure::Ochiai, 1).unwrap();
        let cfg = SynthesisConfig {
            per_class_count: 3,
            ..Default::default()
        };
        let outcome = synthesize_batch(&net, &tests, &report, &cfg).unwrap();
        assert_eq!(outcome.results.len(), 2);
        assert_eq!(outcome.warnings.len(), 2);
        assert!(outcome.warnings[0].contains("class 0"));
        assert!(outcome.warnings[1].contains("class 1"));
    }

    #[test]
    fn batch_with_no_candidates_anywhere_is_an_error() {
        let net = net_with_weight(1.0);
        // every input misclassified: positive -> class 0 predicted, label 1
        let tests = vec![
            LabeledInput::new(vec![0.6], 1),
            LabeledInput::new(vec![-0.5], 0),
        ];
        let table = analyze(&net, &tests, ClassFilter::All, 0.0).unwrap();
        let report = identify(&net, &table, &Measure::Ochiai, 1).unwrap();
        assert!(matches!(
            synthesize_batch(&net, &tests, &report, &SynthesisConfig::default()),
            Err(Error::Synthesis(_))
        ));
    }

    #[test]
    fn batch_is_deterministic() {
        let net = net_with_weight(1.0);
        let tests = two_class_tests();
        let table = analyze(&net, &tests, ClassFilter::All, 0.0).unwrap();
        let report = identify(&net, &table, &Measure::Ochiai, 1).unwrap();
        let cfg = SynthesisConfig::default();
        let a = synthesize_batch(&net, &tests, &report, &cfg).unwrap();
        let b = synthesize_batch(&net, &tests, &report, &cfg).unwrap();
        assert_eq!(a.results, b.results);
    }
}
