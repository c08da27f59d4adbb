//! Versioned plain-text formats for tables, transcripts, certificates and
//! campaign results.
//!
//! Table format (behaviors, expressions, count tables):
//!
//! ```text
//! dirng-table v1 <behavior|expression|counts>
//! scenario inputs=2,2 outputs=2,2
//! label <text>            (expressions only)
//! n <rounds>              (counts only)
//! pi <w0> <w1> ...        (counts only)
//! <a> <x> <value>         one line per table cell, full decimal precision
//! ```
//!
//! Transcript format:
//!
//! ```text
//! dirng-transcript v1
//! scenario inputs=2,2 outputs=2,2
//! n <rounds> seed <seed>
//! <x> <a>                 one line per round, joint integer labels
//! ```
//!
//! Certificates and campaign tables serialize to JSON and CSV respectively;
//! all floats print in shortest round-trip form.

use crate::bell::{Behavior, BellExpression, FrequencyTable, InputDistribution, Scenario};
use crate::error::Error;
use crate::protocol::{CampaignRow, Certificate};
use crate::quantum::Transcript;
use crate::Result;

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn scenario_line(scenario: &Scenario) -> String {
    let ins: Vec<String> = scenario
        .inputs_per_party()
        .iter()
        .map(|v| v.to_string())
        .collect();
    let outs: Vec<String> = scenario
        .outputs_per_party()
        .iter()
        .map(|v| v.to_string())
        .collect();
    format!("scenario inputs={} outputs={}", ins.join(","), outs.join(","))
}

fn parse_scenario_line(line: &str, lineno: usize) -> Result<Scenario> {
    let mut inputs = None;
    let mut outputs = None;
    for tok in line.split_whitespace().skip(1) {
        let (key, value) = tok
            .split_once('=')
            .ok_or_else(|| parse_err(lineno, format!("bad scenario token {tok}")))?;
        let counts: Vec<usize> = value
            .split(',')
            .map(|v| v.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(lineno, format!("bad count list: {e}")))?;
        match key {
            "inputs" => inputs = Some(counts),
            "outputs" => outputs = Some(counts),
            _ => return Err(parse_err(lineno, format!("unknown scenario key {key}"))),
        }
    }
    match (inputs, outputs) {
        (Some(i), Some(o)) => Scenario::new(i, o),
        _ => Err(parse_err(lineno, "scenario line needs inputs= and outputs=")),
    }
}

fn write_table(kind: &str, scenario: &Scenario, extra: &[String], values: &[f64]) -> String {
    let mut out = format!("dirng-table v1 {kind}\n{}\n", scenario_line(scenario));
    for line in extra {
        out.push_str(line);
        out.push('\n');
    }
    for a in 0..scenario.joint_outputs() {
        for x in 0..scenario.joint_inputs() {
            out.push_str(&format!("{a} {x} {}\n", values[scenario.index(a, x)]));
        }
    }
    out
}

struct TableHeader {
    kind: String,
    scenario: Scenario,
    label: Option<String>,
    n: Option<u64>,
    pi: Option<Vec<f64>>,
    body_start: usize,
}

fn parse_table_header(text: &str) -> Result<TableHeader> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.is_empty() {
        return Err(parse_err(1, "empty table document"));
    }
    let mut head = lines[0].split_whitespace();
    if head.next() != Some("dirng-table") || head.next() != Some("v1") {
        return Err(parse_err(1, "expected header `dirng-table v1 <kind>`"));
    }
    let kind = head
        .next()
        .ok_or_else(|| parse_err(1, "missing table kind"))?
        .to_string();
    if lines.len() < 2 {
        return Err(parse_err(2, "missing scenario line"));
    }
    let scenario = parse_scenario_line(lines[1], 2)?;
    let mut label = None;
    let mut n = None;
    let mut pi = None;
    let mut body_start = 2;
    for (i, line) in lines.iter().enumerate().skip(2) {
        if let Some(rest) = line.strip_prefix("label ") {
            label = Some(rest.to_string());
        } else if let Some(rest) = line.strip_prefix("n ") {
            n = Some(
                rest.trim()
                    .parse::<u64>()
                    .map_err(|e| parse_err(i + 1, format!("bad n: {e}")))?,
            );
        } else if let Some(rest) = line.strip_prefix("pi ") {
            let weights: Vec<f64> = rest
                .split_whitespace()
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| parse_err(i + 1, format!("bad pi: {e}")))?;
            pi = Some(weights);
        } else {
            body_start = i;
            break;
        }
        body_start = i + 1;
    }
    Ok(TableHeader {
        kind,
        scenario,
        label,
        n,
        pi,
        body_start,
    })
}

fn parse_table_body(text: &str, scenario: &Scenario, body_start: usize) -> Result<Vec<f64>> {
    let mut values = vec![f64::NAN; scenario.table_len()];
    for (i, line) in text.lines().enumerate().skip(body_start) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(parse_err(i + 1, "expected `<a> <x> <value>`"));
        }
        let a: usize = parts[0]
            .parse()
            .map_err(|e| parse_err(i + 1, format!("bad output label: {e}")))?;
        let x: usize = parts[1]
            .parse()
            .map_err(|e| parse_err(i + 1, format!("bad input label: {e}")))?;
        if a >= scenario.joint_outputs() || x >= scenario.joint_inputs() {
            return Err(parse_err(i + 1, "table cell out of range"));
        }
        let v: f64 = parts[2]
            .parse()
            .map_err(|e| parse_err(i + 1, format!("bad value: {e}")))?;
        values[scenario.index(a, x)] = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(parse_err(body_start + 1, "table body is incomplete"));
    }
    Ok(values)
}

pub fn write_behavior(p: &Behavior) -> String {
    write_table("behavior", p.scenario(), &[], p.probs())
}

pub fn read_behavior(text: &str) -> Result<Behavior> {
    let header = parse_table_header(text)?;
    if header.kind != "behavior" {
        return Err(parse_err(1, format!("expected behavior, got {}", header.kind)));
    }
    let values = parse_table_body(text, &header.scenario, header.body_start)?;
    Behavior::new(header.scenario, values)
}

pub fn write_expression(f: &BellExpression) -> String {
    write_table(
        "expression",
        f.scenario(),
        &[format!("label {}", f.label())],
        f.coeffs(),
    )
}

pub fn read_expression(text: &str) -> Result<BellExpression> {
    let header = parse_table_header(text)?;
    if header.kind != "expression" {
        return Err(parse_err(
            1,
            format!("expected expression, got {}", header.kind),
        ));
    }
    let values = parse_table_body(text, &header.scenario, header.body_start)?;
    BellExpression::new(
        header.scenario,
        values,
        header.label.unwrap_or_else(|| "expression".into()),
    )
}

pub fn write_counts(t: &FrequencyTable) -> String {
    let weights: Vec<String> = t.pi().weights().iter().map(|w| w.to_string()).collect();
    let extra = vec![format!("n {}", t.n()), format!("pi {}", weights.join(" "))];
    let values: Vec<f64> = t.counts().iter().map(|&c| c as f64).collect();
    write_table("counts", t.scenario(), &extra, &values)
}

pub fn read_counts(text: &str) -> Result<FrequencyTable> {
    let header = parse_table_header(text)?;
    if header.kind != "counts" {
        return Err(parse_err(1, format!("expected counts, got {}", header.kind)));
    }
    let n = header
        .n
        .ok_or_else(|| parse_err(2, "counts table needs an `n` line"))?;
    let weights = header
        .pi
        .ok_or_else(|| parse_err(2, "counts table needs a `pi` line"))?;
    let pi = InputDistribution::new(header.scenario.clone(), weights)?;
    let values = parse_table_body(text, &header.scenario, header.body_start)?;
    let counts: Vec<u64> = values
        .iter()
        .map(|&v| {
            if v < 0.0 || v.fract() != 0.0 {
                Err(parse_err(0, "counts must be nonnegative integers"))
            } else {
                Ok(v as u64)
            }
        })
        .collect::<Result<_>>()?;
    FrequencyTable::new(header.scenario, counts, n, pi)
}

pub fn write_transcript(t: &Transcript) -> String {
    let mut out = format!(
        "dirng-transcript v1\n{}\nn {} seed {}\n",
        scenario_line(t.scenario()),
        t.n(),
        t.seed()
    );
    for (&x, &a) in t.inputs().iter().zip(t.outputs()) {
        out.push_str(&format!("{x} {a}\n"));
    }
    out
}

pub fn read_transcript(text: &str) -> Result<Transcript> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.is_empty() || !lines[0].starts_with("dirng-transcript v1") {
        return Err(parse_err(1, "expected header `dirng-transcript v1`"));
    }
    if lines.len() < 3 {
        return Err(parse_err(2, "truncated transcript"));
    }
    let scenario = parse_scenario_line(lines[1], 2)?;
    let mut meta = lines[2].split_whitespace();
    if meta.next() != Some("n") {
        return Err(parse_err(3, "expected `n <rounds> seed <seed>`"));
    }
    let n: usize = meta
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(3, "bad round count"))?;
    if meta.next() != Some("seed") {
        return Err(parse_err(3, "expected `seed` token"));
    }
    let seed: u64 = meta
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| parse_err(3, "bad seed"))?;
    let mut inputs = Vec::with_capacity(n);
    let mut outputs = Vec::with_capacity(n);
    for (i, line) in lines.iter().enumerate().skip(3) {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let x: u16 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(i + 1, "bad input label"))?;
        let a: u16 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| parse_err(i + 1, "bad output label"))?;
        inputs.push(x);
        outputs.push(a);
    }
    if inputs.len() != n {
        return Err(parse_err(
            lines.len(),
            format!("transcript header says n = {n}, body has {}", inputs.len()),
        ));
    }
    Transcript::new(scenario, inputs, outputs, seed)
}

/// Certificate document (pretty JSON, stable field order).
pub fn write_certificate(cert: &Certificate) -> String {
    let mut s = serde_json::to_string_pretty(cert).expect("certificate serialization");
    s.push('\n');
    s
}

pub fn read_certificate(text: &str) -> Result<Certificate> {
    serde_json::from_str(text).map_err(|e| parse_err(e.line(), e.to_string()))
}

/// Structured log document for one guessing-probability query and its result.
pub fn gp_document(query: &crate::gp::GpQuery, result: &crate::gp::GpResult) -> String {
    #[derive(serde::Serialize)]
    struct ExpressionDoc<'a> {
        label: &'a str,
        coeffs: &'a [f64],
    }
    #[derive(serde::Serialize)]
    struct Doc<'a> {
        expressions: Vec<ExpressionDoc<'a>>,
        region_lower: Vec<Option<f64>>,
        region_upper: Vec<Option<f64>>,
        gen_inputs: &'a [usize],
        level: usize,
        g: f64,
        h: f64,
        status: crate::gp::GpStatus,
        duality_gap: Option<f64>,
        witness: Option<&'a crate::gp::DualCertificate>,
    }
    let doc = Doc {
        expressions: query
            .expressions()
            .iter()
            .map(|f| ExpressionDoc {
                label: f.label(),
                coeffs: f.coeffs(),
            })
            .collect(),
        region_lower: query
            .region()
            .lower()
            .iter()
            .map(|&v| v.is_finite().then_some(v))
            .collect(),
        region_upper: query
            .region()
            .upper()
            .iter()
            .map(|&v| v.is_finite().then_some(v))
            .collect(),
        gen_inputs: query.gen_inputs(),
        level: query.level(),
        g: result.g,
        h: result.h,
        status: result.status,
        duality_gap: result.duality_gap.is_finite().then_some(result.duality_gap),
        witness: result.witness.as_ref(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("gp document serialization");
    s.push('\n');
    s
}

/// Campaign result table as CSV. The estimator vector prints as a
/// semicolon-joined list in the `f_hat` column.
pub fn campaign_csv(rows: &[CampaignRow]) -> String {
    let mut out = String::from("n,set,xr,repetition,f_hat,h_of_v,nu,score,rate,status\n");
    for r in rows {
        let f_hat: Vec<String> = r.f_hat.iter().map(|v| v.to_string()).collect();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.n,
            r.set,
            r.xr,
            r.repetition,
            f_hat.join(";"),
            r.h_of_v,
            r.nu,
            r.score,
            r.rate,
            r.status
        ));
    }
    out
}
