//! Model persistence.
//!
//! Networks are stored as JSON (schema version 1) with every weight and bias
//! written as a decimal string in shortest round-trip form, so a save/load
//! cycle reproduces the network bit-exactly. Hex-float strings (`0x1.8p-3`)
//! are accepted on load as an alternative exact encoding.

use crate::error::{Error, Result};
use crate::network::{Matrix, Network};
use serde_json::{json, Value};
use std::fs;
use std::path::Path;

pub const FORMAT_VERSION: u64 = 1;

/// Serializes a network to the schema v1 JSON document.
pub fn to_json(net: &Network) -> String {
    let weights: Vec<Value> = net
        .weights()
        .iter()
        .map(|m| {
            let rows: Vec<Value> = (0..m.rows())
                .map(|r| {
                    Value::Array(
                        m.row(r)
                            .iter()
                            .map(|w| Value::String(format_float(*w)))
                            .collect(),
                    )
                })
                .collect();
            Value::Array(rows)
        })
        .collect();
    let biases: Vec<Value> = net
        .biases()
        .iter()
        .map(|b| {
            Value::Array(
                b.iter()
                    .map(|v| Value::String(format_float(*v)))
                    .collect(),
            )
        })
        .collect();
    let doc = json!({
        "format_version": FORMAT_VERSION,
        "alpha": format_float(net.alpha()),
        "layer_widths": net.layer_widths(),
        "weights": weights,
        "biases": biases,
    });
    serde_json::to_string_pretty(&doc).expect("JSON document is always serializable")
}

/// Parses a schema v1 JSON document into a network.
pub fn from_json(text: &str) -> Result<Network> {
    let doc: Value = serde_json::from_str(text).map_err(|e| Error::ModelFormat {
        path: "$".into(),
        reason: format!("malformed JSON: {e}"),
    })?;
    let version = field(&doc, "format_version")?
        .as_u64()
        .ok_or_else(|| bad("format_version", "expected an unsigned integer"))?;
    if version != FORMAT_VERSION {
        return Err(bad(
            "format_version",
            &format!("unsupported version {version}, expected {FORMAT_VERSION}"),
        ));
    }
    let alpha = parse_float_value(field(&doc, "alpha")?, "alpha")?;

    let widths: Vec<usize> = field(&doc, "layer_widths")?
        .as_array()
        .ok_or_else(|| bad("layer_widths", "expected an array"))?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.as_u64()
                .map(|w| w as usize)
                .ok_or_else(|| bad(&format!("layer_widths[{i}]"), "expected an unsigned integer"))
        })
        .collect::<Result<_>>()?;
    if widths.len() < 3 {
        return Err(bad("layer_widths", "need at least input, hidden and output"));
    }

    let weight_arrays = field(&doc, "weights")?
        .as_array()
        .ok_or_else(|| bad("weights", "expected an array"))?;
    let bias_arrays = field(&doc, "biases")?
        .as_array()
        .ok_or_else(|| bad("biases", "expected an array"))?;
    if weight_arrays.len() != widths.len() - 1 {
        return Err(bad(
            "weights",
            &format!(
                "expected {} layer matrices for {} layers, got {}",
                widths.len() - 1,
                widths.len(),
                weight_arrays.len()
            ),
        ));
    }
    if bias_arrays.len() != widths.len() - 1 {
        return Err(bad(
            "biases",
            &format!("expected {} bias vectors, got {}", widths.len() - 1, bias_arrays.len()),
        ));
    }

    let mut weights = Vec::with_capacity(weight_arrays.len());
    for (li, m) in weight_arrays.iter().enumerate() {
        let rows = m
            .as_array()
            .ok_or_else(|| bad(&format!("weights[{li}]"), "expected an array of rows"))?;
        if rows.len() != widths[li + 1] {
            return Err(bad(
                &format!("weights[{li}]"),
                &format!("expected {} rows, got {}", widths[li + 1], rows.len()),
            ));
        }
        let mut parsed = Vec::with_capacity(rows.len());
        for (ri, row) in rows.iter().enumerate() {
            let cells = row
                .as_array()
                .ok_or_else(|| bad(&format!("weights[{li}][{ri}]"), "expected an array"))?;
            if cells.len() != widths[li] {
                return Err(bad(
                    &format!("weights[{li}][{ri}]"),
                    &format!("expected {} columns, got {}", widths[li], cells.len()),
                ));
            }
            let mut values = Vec::with_capacity(cells.len());
            for (ci, cell) in cells.iter().enumerate() {
                values.push(parse_float_value(
                    cell,
                    &format!("weights[{li}][{ri}][{ci}]"),
                )?);
            }
            parsed.push(values);
        }
        weights.push(Matrix::from_rows(parsed)?);
    }

    let mut biases = Vec::with_capacity(bias_arrays.len());
    for (li, b) in bias_arrays.iter().enumerate() {
        let cells = b
            .as_array()
            .ok_or_else(|| bad(&format!("biases[{li}]"), "expected an array"))?;
        if cells.len() != widths[li + 1] {
            return Err(bad(
                &format!("biases[{li}]"),
                &format!("expected {} entries, got {}", widths[li + 1], cells.len()),
            ));
        }
        let mut values = Vec::with_capacity(cells.len());
        for (ci, cell) in cells.iter().enumerate() {
            values.push(parse_float_value(cell, &format!("biases[{li}][{ci}]"))?);
        }
        biases.push(values);
    }

    Network::new(weights, biases, alpha)
}

/// Writes a network to `path` as schema v1 JSON.
pub fn save_model(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_json(net))?;
    Ok(())
}

/// Reads a schema v1 JSON model from `path`.
pub fn load_model(path: impl AsRef<Path>) -> Result<Network> {
    let text = fs::read_to_string(path)?;
    from_json(&text)
}

fn field<'a>(doc: &'a Value, name: &str) -> Result<&'a Value> {
    doc.get(name).ok_or_else(|| bad(name, "missing field"))
}

fn bad(path: &str, reason: &str) -> Error {
    Error::ModelFormat {
        path: path.to_string(),
        reason: reason.to_string(),
    }
}

/// Shortest decimal string that parses back to the same 64-bit float.
pub fn format_float(v: f64) -> String {
    format!("{v}")
}

fn parse_float_value(v: &Value, path: &str) -> Result<f64> {
    match v {
        Value::String(s) => parse_float(s).ok_or_else(|| bad(path, &format!("not a number: {s:?}"))),
        // Plain JSON numbers are tolerated for hand-written files.
        Value::Number(n) => n
            .as_f64()
            .ok_or_else(|| bad(path, "number not representable as f64")),
        _ => Err(bad(path, "expected a number encoded as a string")),
    }
}

/// Parses a decimal or hex-float (`[+-]0x<hex>[.<hex>]p<dec>`) literal.
pub fn parse_float(s: &str) -> Option<f64> {
    let t = s.trim();
    let (sign, rest) = match t.as_bytes().first()? {
        b'-' => (-1.0, &t[1..]),
        b'+' => (1.0, &t[1..]),
        _ => (1.0, t),
    };
    if rest.len() >= 2 && rest[..2].eq_ignore_ascii_case("0x") {
        return parse_hex_float(&rest[2..]).map(|v| sign * v);
    }
    t.parse::<f64>().ok()
}

fn parse_hex_float(body: &str) -> Option<f64> {
    let (mantissa, exp_str) = body.split_once(['p', 'P'])?;
    let exp: i32 = exp_str.parse().ok()?;
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    let mut digits: u128 = 0;
    for c in int_part.chars().chain(frac_part.chars()) {
        digits = digits.checked_mul(16)?;
        digits = digits.checked_add(c.to_digit(16)? as u128)?;
    }
    let scale = exp - 4 * frac_part.len() as i32;
    Some(ldexp(digits as f64, scale))
}

/// `m * 2^e`, exact as long as the result is a normal float.
fn ldexp(mut m: f64, mut e: i32) -> f64 {
    while e > 1023 {
        m *= 2f64.powi(1023);
        e -= 1023;
    }
    while e < -1022 {
        m *= 2f64.powi(-1022);
        e += 1022;
    }
    m * 2f64.powi(e)
}
