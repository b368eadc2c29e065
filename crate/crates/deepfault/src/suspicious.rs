//! Suspiciousness scoring and ranking of hidden neurons.
//!
//! Spectra are scored with Tarantula, Ochiai or D* (exponent configurable,
//! 3 by default), neurons are ranked by decreasing score with ties resolved
//! in favour of deeper layers, and the top k are selected. A seeded random
//! selection (optionally stratified by layer width) serves as a baseline.
//!
//! Division conventions for degenerate counts: a `0/0` term evaluates to 0,
//! and `x/0` with `x > 0` evaluates to `+inf`, which ranks above every finite
//! score. Scores are never negative and never NaN.

use crate::error::{Error, Result};
use crate::network::{Network, NeuronId};
use crate::spectrum::{ClassFilter, HitSpectrum, SpectrumTable};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// A suspiciousness measure, or the random selection baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Measure {
    Tarantula,
    Ochiai,
    DStar { star: f64 },
    Random { seed: u64, stratified: bool },
}

impl Measure {
    /// D* with the customary exponent 3.
    pub fn dstar_default() -> Self {
        Measure::DStar { star: 3.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Measure::Tarantula => "tarantula",
            Measure::Ochiai => "ochiai",
            Measure::DStar { .. } => "dstar",
            Measure::Random { .. } => "random",
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `num / den` with the degenerate-count conventions above.
fn ratio(num: f64, den: f64) -> f64 {
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

/// `base ^ exp`, using exact integer exponentiation when `exp` is integral.
fn power(base: f64, exp: f64) -> f64 {
    if exp.fract() == 0.0 && exp.abs() <= i32::MAX as f64 {
        base.powi(exp as i32)
    } else {
        base.powf(exp)
    }
}

/// Scores one hit spectrum. The random baseline has no per-neuron score.
pub fn score(hs: &HitSpectrum, measure: &Measure) -> Result<f64> {
    let active_success = f64::from(hs.active_success);
    let active_fail = f64::from(hs.active_fail);
    let inactive_success = f64::from(hs.inactive_success);
    let inactive_fail = f64::from(hs.inactive_fail);
    match measure {
        Measure::Tarantula => {
            let fail_rate = ratio(active_fail, active_fail + inactive_fail);
            let success_rate = ratio(active_success, active_success + inactive_success);
            Ok(ratio(fail_rate, fail_rate + success_rate))
        }
        Measure::Ochiai => {
            let den = ((active_fail + inactive_fail) * (active_fail + active_success)).sqrt();
            Ok(ratio(active_fail, den))
        }
        Measure::DStar { star } => {
            if *star <= 0.0 || star.is_nan() {
                return Err(Error::Argument(format!(
                    "dstar exponent must be positive, got {star}"
                )));
            }
            Ok(ratio(power(active_fail, *star), active_success + inactive_fail))
        }
        Measure::Random { .. } => Err(Error::Usage(
            "the random baseline has no per-neuron score".into(),
        )),
    }
}

/// One entry of a ranking: a neuron and its score (absent for the random
/// baseline).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedNeuron {
    pub id: NeuronId,
    pub score: Option<f64>,
}

/// Ranked hidden neurons for one class, with the top-k selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SuspiciousnessReport {
    measure: Measure,
    class_filter: ClassFilter,
    k: usize,
    ranking: Vec<RankedNeuron>,
}

impl SuspiciousnessReport {
    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn class_filter(&self) -> ClassFilter {
        self.class_filter
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Full ranking in decreasing suspiciousness; a permutation of the hidden
    /// neurons.
    pub fn ranking(&self) -> &[RankedNeuron] {
        &self.ranking
    }

    /// The k most suspicious neurons (the head of the ranking).
    pub fn selected(&self) -> Vec<NeuronId> {
        self.ranking[..self.k].iter().map(|r| r.id).collect()
    }

    /// Head of the ranking of arbitrary length, for analyses that look past
    /// the selected set.
    pub fn top(&self, count: usize) -> Vec<NeuronId> {
        self.ranking[..count.min(self.ranking.len())]
            .iter()
            .map(|r| r.id)
            .collect()
    }

    /// JSON document: measure, class, k and the ordered ranking. Infinite
    /// scores are encoded as the string `"Infinity"`, absent scores as null.
    pub fn to_json(&self) -> String {
        let neurons: Vec<Value> = self
            .ranking
            .iter()
            .map(|r| {
                let score = match r.score {
                    None => Value::Null,
                    Some(s) if s.is_infinite() => Value::String("Infinity".into()),
                    Some(s) => json!(s),
                };
                json!({"layer": r.id.layer, "neuron": r.id.neuron, "score": score})
            })
            .collect();
        let class = match self.class_filter {
            ClassFilter::All => Value::String("all".into()),
            ClassFilter::Class(c) => json!(c),
        };
        let mut doc = serde_json::Map::new();
        doc.insert("measure".into(), json!(self.measure.name()));
        match self.measure {
            Measure::DStar { star } => {
                doc.insert("star".into(), json!(star));
            }
            Measure::Random { seed, stratified } => {
                doc.insert("seed".into(), json!(seed));
                doc.insert("stratified".into(), json!(stratified));
            }
            _ => {}
        }
        doc.insert("class".into(), class);
        doc.insert("k".into(), json!(self.k));
        doc.insert("neurons".into(), Value::Array(neurons));
        serde_json::to_string_pretty(&Value::Object(doc))
            .expect("report document is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: Value = serde_json::from_str(text)
            .map_err(|e| Error::Argument(format!("malformed report JSON: {e}")))?;
        let get = |name: &str| -> Result<&Value> {
            doc.get(name)
                .ok_or_else(|| Error::Argument(format!("report JSON: missing field `{name}`")))
        };
        let measure = match get("measure")?.as_str() {
            Some("tarantula") => Measure::Tarantula,
            Some("ochiai") => Measure::Ochiai,
            Some("dstar") => Measure::DStar {
                star: get("star")?
                    .as_f64()
                    .ok_or_else(|| Error::Argument("report JSON: bad `star`".into()))?,
            },
            Some("random") => Measure::Random {
                seed: get("seed")?
                    .as_u64()
                    .ok_or_else(|| Error::Argument("report JSON: bad `seed`".into()))?,
                stratified: get("stratified")?
                    .as_bool()
                    .ok_or_else(|| Error::Argument("report JSON: bad `stratified`".into()))?,
            },
            other => {
                return Err(Error::Argument(format!(
                    "report JSON: unknown measure {other:?}"
                )))
            }
        };
        let class_filter = match get("class")? {
            Value::String(s) if s == "all" => ClassFilter::All,
            v => ClassFilter::Class(v.as_u64().ok_or_else(|| {
                Error::Argument("report JSON: `class` must be \"all\" or an integer".into())
            })? as usize),
        };
        let k = get("k")?
            .as_u64()
            .ok_or_else(|| Error::Argument("report JSON: bad `k`".into()))? as usize;
        let neurons = get("neurons")?
            .as_array()
            .ok_or_else(|| Error::Argument("report JSON: `neurons` must be an array".into()))?;
        let mut ranking = Vec::with_capacity(neurons.len());
        for (i, n) in neurons.iter().enumerate() {
            let field = |name: &str| -> Result<&Value> {
                n.get(name).ok_or_else(|| {
                    Error::Argument(format!("report JSON: neurons[{i}] missing `{name}`"))
                })
            };
            let layer = field("layer")?
                .as_u64()
                .ok_or_else(|| Error::Argument(format!("report JSON: neurons[{i}] bad layer")))?
                as usize;
            let neuron = field("neuron")?
                .as_u64()
                .ok_or_else(|| Error::Argument(format!("report JSON: neurons[{i}] bad neuron")))?
                as usize;
            let score = match field("score")? {
                Value::Null => None,
                Value::String(s) if s == "Infinity" => Some(f64::INFINITY),
                v => Some(v.as_f64().ok_or_else(|| {
                    Error::Argument(format!("report JSON: neurons[{i}] bad score"))
                })?),
            };
            ranking.push(RankedNeuron {
                id: NeuronId::new(layer, neuron),
                score,
            });
        }
        if k == 0 || k > ranking.len() {
            return Err(Error::Argument(format!(
                "report JSON: k = {k} out of range for {} neurons",
                ranking.len()
            )));
        }
        Ok(Self {
            measure,
            class_filter,
            k,
            ranking,
        })
    }
}

/// Scores every hidden neuron of `net` from `table` and selects the k most
/// suspicious. Ties are resolved towards deeper layers, then towards lower
/// neuron indices. For the random baseline the ranking is a seeded draw
/// instead of a scored ordering.
pub fn identify(
    net: &Network,
    table: &SpectrumTable,
    measure: &Measure,
    k: usize,
) -> Result<SuspiciousnessReport> {
    let hidden = net.hidden_neurons();
    if k == 0 || k > hidden.len() {
        return Err(Error::Argument(format!(
            "k = {k} out of range 1..={}",
            hidden.len()
        )));
    }
    let table_ids: Vec<NeuronId> = table.iter().map(|(id, _)| id).collect();
    if table_ids != hidden {
        return Err(Error::Argument(
            "spectrum table does not cover exactly the hidden neurons of the network".into(),
        ));
    }

    let ranking = match measure {
        Measure::Random { seed, stratified } => {
            random_ranking(net, *seed, *stratified, k)
        }
        _ => {
            let mut ranked: Vec<RankedNeuron> = table
                .iter()
                .map(|(id, hs)| {
                    score(hs, measure).map(|s| RankedNeuron {
                        id,
                        score: Some(s),
                    })
                })
                .collect::<Result<_>>()?;
            ranked.sort_by(|a, b| {
                let sa = a.score.expect("scored ranking");
                let sb = b.score.expect("scored ranking");
                sb.partial_cmp(&sa)
                    .expect("scores are never NaN")
                    .then(b.id.layer.cmp(&a.id.layer))
                    .then(a.id.neuron.cmp(&b.id.neuron))
            });
            ranked
        }
    };

    Ok(SuspiciousnessReport {
        measure: *measure,
        class_filter: table.class_filter(),
        k,
        ranking,
    })
}

/// Seeded random ranking. Plain: a uniform permutation of the hidden neurons.
/// Stratified: per-layer slot counts proportional to layer width (largest
/// remainder rounding, remainder ties broken by a seeded shuffle), sampled
/// without replacement within each layer; unsampled neurons follow in address
/// order.
fn random_ranking(net: &Network, seed: u64, stratified: bool, k: usize) -> Vec<RankedNeuron> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hidden = net.hidden_neurons();
    if !stratified {
        let mut ids = hidden;
        ids.shuffle(&mut rng);
        return ids
            .into_iter()
            .map(|id| RankedNeuron { id, score: None })
            .collect();
    }

    let widths = net.layer_widths();
    let hidden_layers = widths.len() - 2;
    let total: usize = net.hidden_neuron_count();

    // Largest-remainder apportionment of k slots over the hidden layers.
    let mut counts = vec![0usize; hidden_layers];
    let mut remainders = Vec::with_capacity(hidden_layers);
    let mut assigned = 0;
    for (i, &w) in widths[1..=hidden_layers].iter().enumerate() {
        counts[i] = k * w / total;
        remainders.push((k * w) % total);
        assigned += counts[i];
    }
    let mut order: Vec<usize> = (0..hidden_layers).collect();
    order.shuffle(&mut rng);
    order.sort_by(|&a, &b| remainders[b].cmp(&remainders[a]));
    for &layer in order.iter().take(k - assigned) {
        counts[layer] += 1;
    }

    let mut selected = Vec::with_capacity(k);
    for (i, &count) in counts.iter().enumerate() {
        let width = widths[i + 1];
        let mut picks = rand::seq::index::sample(&mut rng, width, count).into_vec();
        picks.sort_unstable();
        for j in picks {
            selected.push(NeuronId::new(i + 2, j + 1));
        }
    }

    let mut ranking: Vec<RankedNeuron> = selected
        .iter()
        .map(|&id| RankedNeuron { id, score: None })
        .collect();
    for id in net.hidden_neurons() {
        if !selected.contains(&id) {
            ranking.push(RankedNeuron { id, score: None });
        }
    }
    ranking
}
