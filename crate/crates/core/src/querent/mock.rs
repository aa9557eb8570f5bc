//! Deterministic stand-in model with planted brand priors.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{QueryRequest, Transport, TransportError};
use crate::corpus::{Category, LogoRecord};
use crate::seed::derive_seed;

/// Rates that can be overridden for a single perturbation kind.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockRates {
    #[serde(default)]
    pub hallucination_rate: Option<f64>,
    #[serde(default)]
    pub text_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockConfig {
    #[serde(default)]
    pub seed: u64,
    /// Probability that a planted pure-symbol logo gets its brand name back.
    pub hallucination_rate: f64,
    /// Probability that a text logo's ground truth is read back verbatim.
    #[serde(default = "one")]
    pub text_accuracy: f64,
    /// logo_id → brand string emitted when the model hallucinates.
    #[serde(default)]
    pub planted_priors: BTreeMap<String, String>,
    /// Keyed by perturbation name (`occlusion`, `blur`, ...).
    #[serde(default)]
    pub by_perturbation: BTreeMap<String, MockRates>,
    /// Append a `CONFIDENCE:` line with the emission probability.
    #[serde(default = "yes")]
    pub report_confidence: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

impl MockConfig {
    pub fn new(seed: u64, hallucination_rate: f64) -> Self {
        Self {
            seed,
            hallucination_rate,
            text_accuracy: 1.0,
            planted_priors: BTreeMap::new(),
            by_perturbation: BTreeMap::new(),
            report_confidence: true,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let check = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("mock {name} {v} outside [0, 1]"))
            }
        };
        check("hallucination_rate", self.hallucination_rate)?;
        check("text_accuracy", self.text_accuracy)?;
        for (k, r) in &self.by_perturbation {
            if k.parse::<crate::perturb::PerturbationKind>().is_err() {
                return Err(format!("mock override for unknown perturbation {k:?}"));
            }
            if let Some(v) = r.hallucination_rate {
                check("hallucination_rate", v)?;
            }
            if let Some(v) = r.text_accuracy {
                check("text_accuracy", v)?;
            }
        }
        Ok(())
    }
}

pub struct MockModel {
    config: MockConfig,
    logos: HashMap<String, (Category, Option<String>)>,
}

/// Uniform draw in [0, 1) from a 64-bit seed.
fn unit(seed: u64) -> f64 {
    (seed >> 11) as f64 / (1u64 << 53) as f64
}

impl MockModel {
    pub fn new(config: MockConfig, logos: &[LogoRecord]) -> Self {
        let logos = logos
            .iter()
            .map(|r| (r.id.clone(), (r.category, r.gt_text.clone())))
            .collect();
        Self { config, logos }
    }

    pub fn config(&self) -> &MockConfig {
        &self.config
    }

    fn rates(&self, req: &QueryRequest<'_>) -> (f64, f64) {
        let o = req
            .perturbation
            .and_then(|k| self.config.by_perturbation.get(k.as_str()));
        (
            o.and_then(|o| o.hallucination_rate).unwrap_or(self.config.hallucination_rate),
            o.and_then(|o| o.text_accuracy).unwrap_or(self.config.text_accuracy),
        )
    }

    /// The reply this model gives, without going through a cache.
    pub fn reply(&self, req: &QueryRequest<'_>) -> String {
        let key = format!(
            "{}|{}|{}",
            req.logo_id,
            req.perturbation.map_or("none", |k| k.as_str()),
            req.prompt_id
        );
        let u = unit(derive_seed(self.config.seed, &format!("mock/{}", req.model_id), &key));
        let (hall, acc) = self.rates(req);
        let (text, prob) = match self.logos.get(req.logo_id) {
            Some((Category::PureSymbol, _)) => match self.config.planted_priors.get(req.logo_id) {
                Some(brand) => ((u < hall).then(|| brand.clone()), hall),
                None => (None, 0.0),
            },
            Some((_, Some(gt))) => {
                let t = if u < acc { gt.clone() } else { format!("{gt} Co") };
                (Some(t), 1.0)
            }
            _ => (None, 0.0),
        };
        let mut out = format!("TEXT: {}", text.as_deref().unwrap_or("NONE"));
        if self.config.report_confidence {
            out.push_str(&format!("\nCONFIDENCE: {prob}"));
        }
        out
    }
}

impl Transport for MockModel {
    fn complete(&self, req: &QueryRequest<'_>) -> Result<String, TransportError> {
        Ok(self.reply(req))
    }

    fn is_network(&self) -> bool {
        false
    }
}
