//! Per-neuron hit spectra.
//!
//! For every hidden neuron and every analyzed input, exactly one of four
//! counters is incremented depending on whether the neuron was active
//! (post-activation above the threshold) and whether the network classified
//! the input correctly. Input and output layer neurons are never counted.

use crate::error::{Error, Result};
use crate::network::{LabeledInput, Network, NeuronId};
use rayon::prelude::*;

/// Which inputs to analyze: everything, or only one ground-truth class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassFilter {
    All,
    Class(usize),
}

impl ClassFilter {
    pub fn matches(&self, label: usize) -> bool {
        match self {
            ClassFilter::All => true,
            ClassFilter::Class(c) => *c == label,
        }
    }
}

impl std::fmt::Display for ClassFilter {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassFilter::All => write!(f, "all"),
            ClassFilter::Class(c) => write!(f, "{c}"),
        }
    }
}

/// The four per-neuron counters: (active, inactive) x (success, fail).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HitSpectrum {
    pub active_success: u32,
    pub active_fail: u32,
    pub inactive_success: u32,
    pub inactive_fail: u32,
}

impl HitSpectrum {
    pub fn new(
        active_success: u32,
        active_fail: u32,
        inactive_success: u32,
        inactive_fail: u32,
    ) -> Self {
        Self {
            active_success,
            active_fail,
            inactive_success,
            inactive_fail,
        }
    }

    /// Number of analyzed inputs this spectrum was built from.
    pub fn total(&self) -> u64 {
        u64::from(self.active_success)
            + u64::from(self.active_fail)
            + u64::from(self.inactive_success)
            + u64::from(self.inactive_fail)
    }
}

/// Hit spectra for every hidden neuron of a network, in address order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumTable {
    neurons: Vec<NeuronId>,
    spectra: Vec<HitSpectrum>,
    class_filter: ClassFilter,
    threshold: f64,
    test_set_size: usize,
}

impl SpectrumTable {
    pub fn class_filter(&self) -> ClassFilter {
        self.class_filter
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Number of inputs retained after class filtering.
    pub fn test_set_size(&self) -> usize {
        self.test_set_size
    }

    pub fn len(&self) -> usize {
        self.neurons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neurons.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NeuronId, &HitSpectrum)> {
        self.neurons.iter().copied().zip(self.spectra.iter())
    }

    pub fn get(&self, id: NeuronId) -> Option<&HitSpectrum> {
        self.neurons
            .binary_search(&id)
            .ok()
            .map(|i| &self.spectra[i])
    }

    /// CSV with header `layer,neuron,as,af,ns,nf`, rows in ascending
    /// (layer, neuron) order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,neuron,as,af,ns,nf\n");
        for (id, hs) in self.iter() {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                id.layer,
                id.neuron,
                hs.active_success,
                hs.active_fail,
                hs.inactive_success,
                hs.inactive_fail
            ));
        }
        out
    }

    /// Parses the CSV emitted by [`SpectrumTable::to_csv`]. The class filter
    /// and threshold are not part of the CSV and must be supplied.
    pub fn from_csv(text: &str, class_filter: ClassFilter, threshold: f64) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some("layer,neuron,as,af,ns,nf") => {}
            other => {
                return Err(Error::Argument(format!(
                    "bad spectrum CSV header: {other:?}"
                )))
            }
        }
        let mut neurons = Vec::new();
        let mut spectra = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Argument(format!(
                    "spectrum CSV line {}: expected 6 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let parse = |s: &str| -> Result<u32> {
                s.parse()
                    .map_err(|_| Error::Argument(format!("spectrum CSV line {}: bad count {s:?}", lineno + 2)))
            };
            let layer = parse(fields[0])? as usize;
            let neuron = parse(fields[1])? as usize;
            neurons.push(NeuronId::new(layer, neuron));
            spectra.push(HitSpectrum::new(
                parse(fields[2])?,
                parse(fields[3])?,
                parse(fields[4])?,
                parse(fields[5])?,
            ));
        }
        if neurons.is_empty() {
            return Err(Error::Argument("spectrum CSV has no rows".into()));
        }
        if !neurons.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Argument(
                "spectrum CSV rows must be in ascending (layer, neuron) order".into(),
            ));
        }
        let test_set_size = spectra[0].total() as usize;
        Ok(Self {
            neurons,
            spectra,
            class_filter,
            threshold,
        test_set_size,
        })
    }
}

/// Builds the hit spectrum of every hidden neuron over `tests`, keeping only
/// inputs whose ground-truth label matches `class_filter`. A neuron counts as
/// active on an input when its post-activation value exceeds `threshold`; an
/// input counts as a success when the prediction equals its label.
pub fn analyze(
    net: &Network,
    tests: &[LabeledInput],
    class_filter: ClassFilter,
    threshold: f64,
) -> Result<SpectrumTable> {
    let retained: Vec<&LabeledInput> = tests
        .iter()
        .filter(|t| class_filter.matches(t.label))
        .collect();
    if retained.is_empty() {
        return Err(Error::Analysis(format!(
            "no test inputs with ground-truth class `{class_filter}`"
        )));
    }

    let neurons = net.hidden_neurons();
    let n = neurons.len();

    // Partial counter blocks per shard, merged by addition; the merge is
    // associative and commutative so the result is shard-order independent.
    let partials: Result<Vec<Vec<HitSpectrum>>> = retained
        .par_chunks(256)
        .map(|chunk| {
            let mut counts = vec![HitSpectrum::default(); n];
            for input in chunk {
                let trace = net.forward(&input.features)?;
                let success = trace.matches(input.label);
                for (hs, (_, value)) in counts.iter_mut().zip(trace.hidden_activations()) {
                    let active = value > threshold;
                    match (active, success) {
                        (true, true) => hs.active_success += 1,
                        (true, false) => hs.active_fail += 1,
                        (false, true) => hs.inactive_success += 1,
                        (false, false) => hs.inactive_fail += 1,
                    }
                }
            }
            Ok(counts)
        })
        .collect();

    let mut spectra = vec![HitSpectrum::default(); n];
    for partial in partials? {
        for (acc, p) in spectra.iter_mut().zip(&partial) {
            acc.active_success += p.active_success;
            acc.active_fail += p.active_fail;
            acc.inactive_success += p.inactive_success;
            acc.inactive_fail += p.inactive_fail;
        }
    }

    Ok(SpectrumTable {
        neurons,
        spectra,
        class_filter,
        threshold,
        test_set_size: retained.len(),
    })
}
