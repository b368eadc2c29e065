//! Reading and writing run directories.
//!
//! A synthesis run directory contains `synth.csv` (one row per synthesized
//! input), the raw vectors as little-endian 64-bit floats (`originals.f64`,
//! `synthesized.f64`, row-major, dimensions in `vectors.json`), copies of the
//! consumed ranking reports under `reports/`, a `selection.json` index and
//! the run manifest.

use anyhow::{bail, Context, Result};
use deepfault::evaluate::{self, DistanceStats};
use deepfault::{
    ClassFilter, LabeledInput, Network, SuspiciousnessReport, SynthesisResult,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

/// One synthesized input per row of `synth.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRow {
    pub class: usize,
    pub index: usize,
    pub l1: f64,
    pub l2: f64,
    pub linf: f64,
    pub original_pred: usize,
    pub synth_pred: usize,
    pub original_loss: f64,
    pub synth_loss: f64,
}

const SYNTH_HEADER: &str = "class,index,L1,L2,Linf,original_pred,synth_pred,original_loss,synth_loss";

#[derive(Debug, Serialize, Deserialize)]
struct VectorSidecar {
    count: usize,
    dim: usize,
    byte_order: String,
    layout: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub class: serde_json::Value,
    pub measure: String,
    pub k: usize,
    pub report: String,
    /// Rows of `synth.csv` belonging to this group.
    pub result_count: usize,
}

/// Per-input cross-entropy against the true label.
fn single_loss(probabilities: &[f64], label: usize) -> f64 {
    -probabilities[label].max(1e-12).ln()
}

/// Writes a synthesis run: per-class result groups with the report that
/// guided each group.
pub fn write_synthesis_dir(
    out_dir: &Path,
    groups: &[(SuspiciousnessReport, Vec<SynthesisResult>)],
) -> Result<()> {
    fs::create_dir_all(out_dir.join("reports"))?;
    let dim = groups
        .iter()
        .find_map(|(_, rs)| rs.first().map(|r| r.original.features.len()))
        .unwrap_or(0);

    let mut csv = String::from(SYNTH_HEADER);
    csv.push('\n');
    let mut originals = Vec::new();
    let mut synthesized = Vec::new();
    let mut count = 0usize;
    let mut selection = Vec::new();

    for (report, results) in groups {
        let class_value = match report.class_filter() {
            ClassFilter::All => serde_json::Value::String("all".into()),
            ClassFilter::Class(c) => serde_json::json!(c),
        };
        let report_file = format!("reports/report_class_{}.json", report.class_filter());
        fs::write(out_dir.join(&report_file), report.to_json())?;
        selection.push(SelectionEntry {
            class: class_value,
            measure: report.measure().name().to_string(),
            k: report.k(),
            report: report_file,
            result_count: results.len(),
        });

        let mut per_class_index: BTreeMap<usize, usize> = BTreeMap::new();
        for r in results {
            let idx = per_class_index.entry(r.original.label).or_insert(0);
            csv.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.original.label,
                idx,
                r.distances.l1,
                r.distances.l2,
                r.distances.linf,
                r.original_trace.predicted_class(),
                r.synthesized_trace.predicted_class(),
                single_loss(r.original_trace.probabilities(), r.original.label),
                single_loss(r.synthesized_trace.probabilities(), r.original.label),
            ));
            *idx += 1;
            for &v in &r.original.features {
                originals.extend_from_slice(&v.to_le_bytes());
            }
            for &v in &r.synthesized {
                synthesized.extend_from_slice(&v.to_le_bytes());
            }
            count += 1;
        }
    }

    fs::write(out_dir.join("synth.csv"), csv)?;
    fs::write(out_dir.join("originals.f64"), originals)?;
    fs::write(out_dir.join("synthesized.f64"), synthesized)?;
    let sidecar = VectorSidecar {
        count,
        dim,
        byte_order: "little".into(),
        layout: "row-major".into(),
    };
    fs::write(
        out_dir.join("vectors.json"),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    fs::write(
        out_dir.join("selection.json"),
        serde_json::to_string_pretty(&selection)?,
    )?;
    Ok(())
}

/// A synthesis run read back from disk, with results reconstructed per group.
pub struct LoadedSynthesis {
    pub groups: Vec<(SuspiciousnessReport, Vec<SynthesisResult>)>,
    pub rows: Vec<SynthRow>,
}

fn read_vectors(path: &Path, count: usize, dim: usize) -> Result<Vec<Vec<f64>>> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if bytes.len() != count * dim * 8 {
        bail!(
            "{}: expected {} bytes for {count}x{dim} doubles, got {}",
            path.display(),
            count * dim * 8,
            bytes.len()
        );
    }
    Ok((0..count)
        .map(|i| {
            bytes[i * dim * 8..(i + 1) * dim * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        })
        .collect())
}

pub fn parse_synth_csv(text: &str) -> Result<Vec<SynthRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == SYNTH_HEADER => {}
        other => bail!("bad synth.csv header: {other:?}"),
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            bail!("synth.csv line {}: expected 9 fields", lineno + 2);
        }
        rows.push(SynthRow {
            class: f[0].parse()?,
            index: f[1].parse()?,
            l1: f[2].parse()?,
            l2: f[3].parse()?,
            linf: f[4].parse()?,
            original_pred: f[5].parse()?,
            synth_pred: f[6].parse()?,
            original_loss: f[7].parse()?,
            synth_loss: f[8].parse()?,
        });
    }
    Ok(rows)
}

/// Reads a synthesis run directory back, recomputing traces, distances and
/// neuron deltas from the stored vectors (forward passes are deterministic,
/// so this reproduces the in-memory results exactly).
pub fn read_synthesis_dir(dir: &Path, net: &Network) -> Result<LoadedSynthesis> {
    let rows = parse_synth_csv(
        &fs::read_to_string(dir.join("synth.csv"))
            .with_context(|| format!("reading {}", dir.join("synth.csv").display()))?,
    )?;
    let sidecar: VectorSidecar =
        serde_json::from_str(&fs::read_to_string(dir.join("vectors.json"))?)?;
    if sidecar.byte_order != "little" || sidecar.layout != "row-major" {
        bail!("unsupported vector encoding in vectors.json");
    }
    if sidecar.count != rows.len() {
        bail!(
            "vectors.json count {} does not match synth.csv rows {}",
            sidecar.count,
            rows.len()
        );
    }
    let originals = read_vectors(&dir.join("originals.f64"), sidecar.count, sidecar.dim)?;
    let synthesized = read_vectors(&dir.join("synthesized.f64"), sidecar.count, sidecar.dim)?;

    let selection: Vec<SelectionEntry> =
        serde_json::from_str(&fs::read_to_string(dir.join("selection.json"))?)?;

    let mut cursor = 0usize;
    let mut groups = Vec::new();
    for entry in &selection {
        let report =
            SuspiciousnessReport::from_json(&fs::read_to_string(dir.join(&entry.report))?)?;
        let selected = report.selected();
        let end = cursor + entry.result_count;
        if end > rows.len() {
            bail!("selection.json group sizes exceed synth.csv rows");
        }
        let mut results = Vec::with_capacity(entry.result_count);
        for i in cursor..end {
            let row = &rows[i];
            let original = LabeledInput::new(originals[i].clone(), row.class);
            let synth_features = synthesized[i].clone();
            let original_trace = net.forward(&original.features)?;
            let synthesized_trace = net.forward(&synth_features)?;
            let neuron_deltas = selected
                .iter()
                .map(|&id| {
                    Ok((
                        id,
                        synthesized_trace.neuron_value(id)? - original_trace.neuron_value(id)?,
                    ))
                })
                .collect::<deepfault::Result<Vec<_>>>()?;
            let distances = evaluate::distances(&synth_features, &original.features)?;
            results.push(SynthesisResult {
                original,
                synthesized: synth_features,
                original_trace,
                synthesized_trace,
                neuron_deltas,
                distances,
            });
        }
        cursor = end;
        groups.push((report, results));
    }
    if cursor != rows.len() {
        bail!("synth.csv rows do not line up with selection.json groups");
    }
    Ok(LoadedSynthesis { groups, rows })
}

/// Whole-run evaluation document: pooled metrics plus a per-class breakdown.
#[derive(Debug, Serialize, Deserialize)]
pub struct CombinedEvalSummary {
    pub loss: f64,
    pub accuracy: f64,
    pub distances: DistanceStats,
    pub activation_increase_ratio: f64,
    pub per_layer_counts: BTreeMap<usize, usize>,
    pub runtime_seconds: f64,
    pub per_class: Vec<ClassEval>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ClassEval {
    pub class: String,
    pub count: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub activation_increase_ratio: f64,
}
