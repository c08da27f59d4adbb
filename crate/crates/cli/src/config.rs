//! Experiment configuration document (JSON).
//!
//! The document mirrors the protocol arguments; unknown fields are rejected
//! and the file validates fully before any computation starts. Parsing then
//! re-serializing is a fixed point.

use serde::{Deserialize, Serialize};

use dirng_core::bell::{
    chsh_expression, expression_set, BellExpression, InputDistribution, Scenario, SetKind,
    tilted_chsh,
};
use dirng_core::estimation::{Side, SplitPolicy};
use dirng_core::gp::EtaMode;
use dirng_core::protocol::{PiRule, ProtocolConfig};
use dirng_core::Error;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioDoc {
    pub inputs_per_party: Vec<usize>,
    pub outputs_per_party: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum PiDoc {
    Uniform,
    Biased {
        x_star: Vec<usize>,
        delta: f64,
        kappa: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum ExpressionDoc {
    Chsh,
    ChshVariant { y1: u8, y2: u8 },
    TiltedChsh { beta: f64 },
    Set { set: String },
    File { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum SplitDoc {
    Even,
    OneSided { sides: Vec<Side> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractorDoc {
    pub eps_ext: f64,
    /// Output length; sized from the certified bound when absent.
    pub m: Option<usize>,
}

/// Top-level experiment document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentDocument {
    pub scenario: ScenarioDoc,
    /// Generating inputs as per-party tuples.
    pub gen_inputs: Vec<Vec<usize>>,
    pub pi: PiDoc,
    pub expressions: Vec<ExpressionDoc>,
    pub gammas: Option<Vec<f64>>,
    pub n: u64,
    pub level: usize,
    pub thresholds: Vec<f64>,
    pub epsilon: f64,
    pub split: SplitDoc,
    pub eps_prime: f64,
    pub eta: EtaMode,
    pub extractor: ExtractorDoc,
    pub master_seed: u64,
}

impl ExperimentDocument {
    pub fn parse(text: &str) -> Result<Self, Error> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serialization");
        s.push('\n');
        s
    }

    pub fn scenario(&self) -> Result<Scenario, Error> {
        Scenario::new(
            self.scenario.inputs_per_party.clone(),
            self.scenario.outputs_per_party.clone(),
        )
    }

    /// Resolve into the runtime protocol configuration.
    pub fn to_protocol_config(&self) -> Result<ProtocolConfig, Error> {
        let scenario = self.scenario()?;
        let gen_inputs = self
            .gen_inputs
            .iter()
            .map(|parts| {
                if parts.len() != scenario.parties()
                    || parts
                        .iter()
                        .zip(scenario.inputs_per_party())
                        .any(|(&v, &c)| v >= c)
                {
                    Err(Error::invalid(format!("bad generating input {parts:?}")))
                } else {
                    Ok(scenario.joint_input_index(parts))
                }
            })
            .collect::<Result<Vec<usize>, Error>>()?;
        let pi_rule = match &self.pi {
            PiDoc::Uniform => PiRule::Uniform,
            PiDoc::Biased {
                x_star,
                delta,
                kappa,
            } => PiRule::Biased {
                x_star: scenario.joint_input_index(x_star),
                delta: *delta,
                kappa: *kappa,
            },
        };
        let pi = pi_rule.resolve(&scenario, self.n)?;
        let expressions = build_expressions(&self.expressions, &pi)?;
        let split = match &self.split {
            SplitDoc::Even => SplitPolicy::Even,
            SplitDoc::OneSided { sides } => SplitPolicy::OneSided(sides.clone()),
        };
        let config = ProtocolConfig {
            scenario,
            gen_inputs,
            pi,
            expressions,
            gammas: self.gammas.clone(),
            n: self.n,
            level: self.level,
            thresholds: self.thresholds.clone(),
            epsilon: self.epsilon,
            split,
            eps_prime: self.eps_prime,
            eta_mode: self.eta,
            ext_eps: self.extractor.eps_ext,
            ext_len: self.extractor.m,
            master_seed: self.master_seed,
        };
        config.validate()?;
        Ok(config)
    }
}

/// Build expression lists from document specs.
pub fn build_expressions(
    docs: &[ExpressionDoc],
    pi: &InputDistribution,
) -> Result<Vec<BellExpression>, Error> {
    let scenario = pi.scenario().clone();
    let mut out = Vec::new();
    for doc in docs {
        match doc {
            ExpressionDoc::Chsh => out.push(chsh_expression(&scenario)?),
            ExpressionDoc::ChshVariant { y1, y2 } => {
                out.push(dirng_core::bell::chsh_variant(&scenario, *y1, *y2)?)
            }
            ExpressionDoc::TiltedChsh { beta } => out.push(tilted_chsh(&scenario, *beta)?),
            ExpressionDoc::Set { set } => {
                let kind = SetKind::parse(set)
                    .ok_or_else(|| Error::invalid(format!("unknown expression set `{set}`")))?;
                out.extend(expression_set(kind, pi)?);
            }
            ExpressionDoc::File { path } => {
                let text = std::fs::read_to_string(path)?;
                out.push(dirng_core::io::read_expression(&text)?);
            }
        }
    }
    if out.is_empty() {
        return Err(Error::invalid("no expressions configured"));
    }
    Ok(out)
}
