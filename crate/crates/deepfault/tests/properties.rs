//! Property tests for the analysis, ranking, synthesis and statistics
//! invariants, including brute-force cross-checks against independent
//! re-implementations.

mod common;

use common::{random_input, random_labeled, random_network};
use deepfault::evaluate::{mann_whitney_u, mann_whitney_u_exact, mann_whitney_u_normal};
use deepfault::suspicious::{identify, score};
use deepfault::{
    model_io, spectrum, synthesis, ClassFilter, HitSpectrum, LabeledInput, Measure, Network,
    NeuronId, SynthesisConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hs(a: u32, b: u32, c: u32, d: u32) -> HitSpectrum {
    HitSpectrum::new(a, b, c, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_output_is_a_distribution(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, &[5, 6, 4, 3], 2.0);
        let input = random_input(&mut rng, 5, -3.0, 3.0);
        let trace = net.forward(&input).unwrap();
        let sum: f64 = trace.probabilities().iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-9);
        prop_assert!(trace.probabilities().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn spectrum_rows_sum_to_test_set_size(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, &[4, 5, 3, 2], 1.0);
        let tests: Vec<LabeledInput> =
            (0..n).map(|_| random_labeled(&mut rng, 4, 2)).collect();
        let table = spectrum::analyze(&net, &tests, ClassFilter::All, 0.0).unwrap();
        prop_assert_eq!(table.len(), net.hidden_neuron_count());
        for (_, s) in table.iter() {
            prop_assert_eq!(s.total(), n as u64);
        }
    }

    #[test]
    fn spectrum_is_order_independent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, &[4, 5, 3, 2], 1.0);
        let mut tests: Vec<LabeledInput> =
            (0..25).map(|_| random_labeled(&mut rng, 4, 2)).collect();
        let before = spectrum::analyze(&net, &tests, ClassFilter::All, 0.1).unwrap();
        tests.reverse();
        tests.rotate_left(7);
        let after = spectrum::analyze(&net, &tests, ClassFilter::All, 0.1).unwrap();
        prop_assert_eq!(before, after);
    }

    /// More failing activity never lowers a score; more passing activity
    /// never raises one.
    #[test]
    fn measure_monotonicity(
        active_success in 0u32..60,
        active_fail in 0u32..60,
        inactive_success in 0u32..60,
        inactive_fail in 0u32..60,
        bump in 1u32..10,
    ) {
        let measures = [Measure::Tarantula, Measure::Ochiai, Measure::dstar_default()];
        let base = hs(active_success, active_fail, inactive_success, inactive_fail);
        let more_fail = hs(active_success, active_fail + bump, inactive_success, inactive_fail);
        let more_pass = hs(active_success + bump, active_fail, inactive_success, inactive_fail);
        for m in &measures {
            let s0 = score(&base, m).unwrap();
            prop_assert!(score(&more_fail, m).unwrap() >= s0, "af monotonicity under {m}");
            prop_assert!(score(&more_pass, m).unwrap() <= s0, "as monotonicity under {m}");
        }
    }

    #[test]
    fn scores_are_nonnegative_and_never_nan(
        a in 0u32..100, b in 0u32..100, c in 0u32..100, d in 0u32..100,
    ) {
        let spectrum = hs(a, b, c, d);
        for m in [Measure::Tarantula, Measure::Ochiai, Measure::dstar_default()] {
            let s = score(&spectrum, &m).unwrap();
            prop_assert!(!s.is_nan());
            prop_assert!(s >= 0.0);
        }
    }

    #[test]
    fn synthesized_inputs_respect_distance_and_domain(
        seed in any::<u64>(),
        step in 0.01f64..2000.0,
        d in 0.01f64..1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, &[6, 8, 5, 3], 1.0);
        let cfg = SynthesisConfig {
            step,
            max_distance: d,
            per_class_count: 4,
            ..Default::default()
        };
        // label every input with its prediction so all are candidates
        let tests: Vec<LabeledInput> = (0..12)
            .map(|_| {
                let features = random_input(&mut rng, 6, 0.0, 1.0);
                let label = net.forward(&features).unwrap().predicted_class();
                LabeledInput::new(features, label)
            })
            .collect();
        let table = spectrum::analyze(&net, &tests, ClassFilter::All, 0.0).unwrap();
        let report = identify(&net, &table, &Measure::dstar_default(), 5).unwrap();
        let outcome = synthesis::synthesize_batch(&net, &tests, &report, &cfg).unwrap();
        let cap = cfg.distance_cap();
        for r in &outcome.results {
            for (orig, synth) in r.original.features.iter().zip(&r.synthesized) {
                prop_assert!((orig - synth).abs() <= cap + 1e-12);
                prop_assert!((0.0..=1.0).contains(synth));
            }
            prop_assert!(r.distances.linf <= cap + 1e-12);
        }
    }

    #[test]
    fn rank_sum_swap_symmetry(
        a in prop::collection::vec(-50.0f64..50.0, 1..12),
        b in prop::collection::vec(-50.0f64..50.0, 1..12),
    ) {
        let (u_ab, p_ab) = mann_whitney_u(&a, &b).unwrap();
        let (u_ba, p_ba) = mann_whitney_u(&b, &a).unwrap();
        prop_assert_eq!(u_ab + u_ba, (a.len() * b.len()) as f64);
        prop_assert_eq!(p_ab, p_ba);
    }

    /// Tie-free samples of sizes 8-12: enumeration and normal approximation
    /// agree to 0.02.
    #[test]
    fn exact_and_normal_p_values_agree(
        seed in any::<u64>(),
        n in 8usize..=12,
        m in 8usize..=12,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift = rng.random::<f64>() * 2.0;
        let mut a: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0).collect();
        let b: Vec<f64> = (0..m).map(|_| rng.random::<f64>() * 4.0 + shift).collect();
        // resample duplicates away (ties have measure zero, but be safe)
        let mut pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
        pooled.sort_by(f64::total_cmp);
        prop_assume!(pooled.windows(2).all(|w| w[0] != w[1]));
        a.rotate_left(n / 2);
        let (u_e, p_e) = mann_whitney_u_exact(&a, &b).unwrap();
        let (u_n, p_n) = mann_whitney_u_normal(&a, &b).unwrap();
        prop_assert_eq!(u_e, u_n);
        prop_assert!((p_e - p_n).abs() <= 0.02, "exact {} vs normal {}", p_e, p_n);
    }

    #[test]
    fn model_round_trip_preserves_bits(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, &[3, 4, 3, 2], 5.0);
        let loaded = model_io::from_json(&model_io::to_json(&net)).unwrap();
        prop_assert!(common::networks_bit_equal(&net, &loaded));
    }
}

/// Independent re-implementation of the three measures and the selection
/// rule, for brute-force equivalence checks on small networks.
mod oracle {
    use super::*;

    pub fn tarantula(s: &HitSpectrum) -> f64 {
        let (a, b, c, d) = counts(s);
        let fail = safe_div(b, b + d);
        let pass = safe_div(a, a + c);
        safe_div(fail, fail + pass)
    }

    pub fn ochiai(s: &HitSpectrum) -> f64 {
        let (a, b, _, d) = counts(s);
        safe_div(b, ((b + d) * (b + a)).sqrt())
    }

    pub fn dstar3(s: &HitSpectrum) -> f64 {
        let (a, b, _, d) = counts(s);
        safe_div(b * b * b, a + d)
    }

    fn counts(s: &HitSpectrum) -> (f64, f64, f64, f64) {
        (
            f64::from(s.active_success),
            f64::from(s.active_fail),
            f64::from(s.inactive_success),
            f64::from(s.inactive_fail),
        )
    }

    fn safe_div(num: f64, den: f64) -> f64 {
        if den == 0.0 {
            if num == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            num / den
        }
    }

    /// Selection by exhaustive scoring and sorting, written independently of
    /// the library's ranking code.
    pub fn select(
        ids: &[NeuronId],
        spectra: &[HitSpectrum],
        measure: &Measure,
        k: usize,
    ) -> Vec<NeuronId> {
        let mut scored: Vec<(f64, NeuronId)> = ids
            .iter()
            .zip(spectra)
            .map(|(&id, s)| {
                let v = match measure {
                    Measure::Tarantula => tarantula(s),
                    Measure::Ochiai => ochiai(s),
                    Measure::DStar { .. } => dstar3(s),
                    Measure::Random { .. } => unreachable!(),
                };
                (v, id)
            })
            .collect();
        scored.sort_by(|(sa, ia), (sb, ib)| {
            sb.partial_cmp(sa)
                .unwrap()
                .then(ib.layer.cmp(&ia.layer))
                .then(ia.neuron.cmp(&ib.neuron))
        });
        scored.into_iter().take(k).map(|(_, id)| id).collect()
    }
}

/// Builds a spectrum table over a shaped network from explicit spectra.
fn table_from(
    net: &Network,
    spectra: &[HitSpectrum],
) -> deepfault::SpectrumTable {
    let mut csv = String::from("layer,neuron,as,af,ns,nf\n");
    for (id, s) in net.hidden_neurons().into_iter().zip(spectra) {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            id.layer, id.neuron, s.active_success, s.active_fail, s.inactive_success, s.inactive_fail
        ));
    }
    deepfault::SpectrumTable::from_csv(&csv, ClassFilter::All, 0.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// On networks with up to 20 hidden neurons the library selection equals
    /// the oracle's exhaustive scoring for every measure.
    #[test]
    fn identification_matches_brute_force(seed in any::<u64>(), k in 1usize..=6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = rng.random_range(2..=8usize);
        let w2 = rng.random_range(2..=8usize);
        let w3 = rng.random_range(1..=4usize);
        let net = random_network(&mut rng, &[3, w1, w2, w3, 2], 1.0);
        let total = rng.random_range(1..=30u32);
        let spectra: Vec<HitSpectrum> = (0..net.hidden_neuron_count())
            .map(|_| {
                let a = rng.random_range(0..=total);
                let b = rng.random_range(0..=(total - a));
                let c = rng.random_range(0..=(total - a - b));
                let d = total - a - b - c;
                hs(a, b, c, d)
            })
            .collect();
        let table = table_from(&net, &spectra);
        let ids = net.hidden_neurons();
        prop_assume!(k <= ids.len());
        for m in [Measure::Tarantula, Measure::Ochiai, Measure::dstar_default()] {
            let report = identify(&net, &table, &m, k).unwrap();
            let expected = oracle::select(&ids, &spectra, &m, k);
            prop_assert_eq!(report.selected(), expected, "measure {}", m);
        }
    }

    /// Selection prefixes are stable in k.
    #[test]
    fn selection_prefix_stability(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, &[3, 5, 5, 2], 1.0);
        let spectra: Vec<HitSpectrum> = (0..10)
            .map(|_| {
                let a = rng.random_range(0..20u32);
                let b = rng.random_range(0..20u32);
                let c = rng.random_range(0..20u32);
                hs(a, b, c, 60 - a - b - c)
            })
            .collect();
        let table = table_from(&net, &spectra);
        let full = identify(&net, &table, &Measure::Ochiai, 10).unwrap();
        for k in 1..10 {
            let partial = identify(&net, &table, &Measure::Ochiai, k).unwrap();
            prop_assert_eq!(partial.selected(), full.selected()[..k].to_vec());
        }
    }
}
