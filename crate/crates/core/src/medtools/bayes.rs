//! Naive-Bayes posterior over diagnoses given observed symptoms.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde_json::{Map, Value};

use super::MedToolsError;
use crate::num::{is_unit_interval as in_unit, parse_decimal, Real, Scalar};

type Result<T> = std::result::Result<T, MedToolsError>;

/// Priors and posteriors must sum to one within this.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Value substituted for small likelihoods when flooring is enabled.
pub const LIKELIHOOD_FLOOR: f64 = 1e-12;

pub type Posterior<S> = BTreeMap<String, S>;

/// Conditional probabilities for one clinical context.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceTable<S = f64> {
    pub context: String,
    priors: BTreeMap<String, S>,
    /// Keyed by (symptom, diagnosis).
    likelihoods: BTreeMap<(String, String), S>,
}

fn sums_to_one<'a, S: Scalar>(values: impl Iterator<Item = &'a S>) -> bool {
    let total = values.fold(S::zero(), |acc, v| acc + v.clone());
    (total.to_f64() - 1.0).abs() <= NORMALIZATION_TOLERANCE
}

fn number<S: Scalar>(value: &Value, what: &str) -> Result<S> {
    let text = match value {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        _ => return Err(MedToolsError::Table(format!("{what} is not a number"))),
    };
    parse_decimal(&text)
        .map(|r| S::from_ratio(&r))
        .or_else(|| text.parse::<f64>().ok().and_then(S::from_f64))
        .ok_or_else(|| MedToolsError::Table(format!("{what}: `{text}` is not a finite number")))
}

impl<S: Scalar> EvidenceTable<S> {
    pub fn new(
        context: impl Into<String>,
        priors: BTreeMap<String, S>,
        likelihoods: BTreeMap<(String, String), S>,
    ) -> Result<Self> {
        if priors.is_empty() {
            return Err(MedToolsError::Table("no diagnoses".into()));
        }
        if let Some((d, p)) = priors.iter().find(|(_, p)| !in_unit(*p)) {
            return Err(MedToolsError::Table(format!("prior for `{d}` is {p:?}")));
        }
        if !sums_to_one(priors.values()) {
            return Err(MedToolsError::Table("priors do not sum to 1".into()));
        }
        for ((s, d), p) in &likelihoods {
            if !priors.contains_key(d) {
                return Err(MedToolsError::Table(format!("likelihood `{s}|{d}` names an unknown diagnosis")));
            }
            if !in_unit(p) {
                return Err(MedToolsError::Table(format!("likelihood `{s}|{d}` is {p:?}")));
            }
        }
        Ok(Self {
            context: context.into(),
            priors,
            likelihoods,
        })
    }

    /// Parses `{"context", "priors": {d: p}, "likelihoods": {"symptom|diagnosis": p}}`.
    ///
    /// Numbers are read through their decimal text, so rational tables are exact.
    /// The key is split at its first `|`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let root: Map<String, Value> =
            serde_json::from_str(text).map_err(|e| MedToolsError::Table(e.to_string()))?;
        let object = |name: &str| -> Result<&Map<String, Value>> {
            root.get(name)
                .and_then(Value::as_object)
                .ok_or_else(|| MedToolsError::Table(format!("`{name}` must be an object")))
        };
        let context = root.get("context").and_then(Value::as_str).unwrap_or_default().to_string();
        let priors = object("priors")?
            .iter()
            .map(|(d, v)| Ok((d.clone(), number(v, &format!("prior `{d}`"))?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let likelihoods = object("likelihoods")?
            .iter()
            .map(|(key, v)| {
                let (s, d) = key
                    .split_once('|')
                    .ok_or_else(|| MedToolsError::Table(format!("likelihood key `{key}` lacks `|`")))?;
                Ok(((s.to_string(), d.to_string()), number(v, &format!("likelihood `{key}`"))?))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        Self::new(context, priors, likelihoods)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Value {
        let priors: Map<String, Value> = self.priors.iter().map(|(d, p)| (d.clone(), p.to_f64().into())).collect();
        let likelihoods: Map<String, Value> = self
            .likelihoods
            .iter()
            .map(|((s, d), p)| (format!("{s}|{d}"), p.to_f64().into()))
            .collect();
        serde_json::json!({ "context": self.context, "priors": priors, "likelihoods": likelihoods })
    }

    pub fn priors(&self) -> &BTreeMap<String, S> {
        &self.priors
    }

    pub fn diagnoses(&self) -> impl Iterator<Item = &str> {
        self.priors.keys().map(String::as_str)
    }

    pub fn symptoms(&self) -> BTreeSet<&str> {
        self.likelihoods.keys().map(|(s, _)| s.as_str()).collect()
    }

    pub fn likelihood(&self, symptom: &str, diagnosis: &str) -> Result<&S> {
        self.likelihoods
            .get(&(symptom.to_string(), diagnosis.to_string()))
            .ok_or_else(|| MedToolsError::MissingLikelihood {
                symptom: symptom.to_string(),
                diagnosis: diagnosis.to_string(),
            })
    }

    fn check_current(&self, current: &Posterior<S>) -> Result<()> {
        if !current.keys().eq(self.priors.keys()) {
            return Err(MedToolsError::Posterior("diagnosis sets differ".into()));
        }
        if !current.values().all(in_unit) || !sums_to_one(current.values()) {
            return Err(MedToolsError::Posterior("values are not a probability distribution".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PosteriorOptions {
    /// When set, likelihoods below this are raised to it. Off by default, so a
    /// zero likelihood rules a diagnosis out.
    pub likelihood_floor: Option<f64>,
}

impl PosteriorOptions {
    pub fn floored() -> Self {
        Self {
            likelihood_floor: Some(LIKELIHOOD_FLOOR),
        }
    }
}

fn log_space<S: Real, Q: AsRef<str>>(
    prior: &Posterior<S>,
    symptoms: &[Q],
    table: &EvidenceTable<S>,
    options: &PosteriorOptions,
) -> Result<Posterior<S>> {
    let floor = options.likelihood_floor.and_then(S::from_f64);
    // None marks exact zero mass
    let mut logs: Vec<(&String, Option<S>)> = Vec::with_capacity(prior.len());
    for (diagnosis, p) in prior {
        let mut acc = (*p > S::zero()).then(|| p.ln());
        for symptom in symptoms {
            let mut lik = *table.likelihood(symptom.as_ref(), diagnosis)?;
            if let Some(f) = floor {
                lik = lik.max(f);
            }
            acc = match acc {
                Some(a) if lik > S::zero() => Some(a + lik.ln()),
                _ => None,
            };
        }
        logs.push((diagnosis, acc));
    }
    let max = logs
        .iter()
        .filter_map(|(_, l)| *l)
        .fold(None, |m: Option<S>, l| Some(m.map_or(l, |m| m.max(l))))
        .ok_or(MedToolsError::DegenerateEvidence)?;
    let weights: Vec<(&String, S)> = logs
        .into_iter()
        .map(|(d, l)| (d, l.map_or(S::zero(), |l| (l - max).exp())))
        .collect();
    let total = weights.iter().fold(S::zero(), |acc, (_, w)| acc + *w);
    Ok(weights.into_iter().map(|(d, w)| (d.clone(), w / total)).collect())
}

fn direct<S: Scalar, Q: AsRef<str>>(prior: &Posterior<S>, symptoms: &[Q], table: &EvidenceTable<S>) -> Result<Posterior<S>> {
    let mut joint = Vec::with_capacity(prior.len());
    for (diagnosis, p) in prior {
        let mut w = p.clone();
        for symptom in symptoms {
            w = w * table.likelihood(symptom.as_ref(), diagnosis)?.clone();
        }
        joint.push((diagnosis, w));
    }
    let total = joint.iter().fold(S::zero(), |acc, (_, w)| acc + w.clone());
    if total == S::zero() {
        return Err(MedToolsError::DegenerateEvidence);
    }
    Ok(joint.into_iter().map(|(d, w)| (d.clone(), w / total.clone())).collect())
}

/// Posterior over the table's diagnoses, accumulated in log space.
///
/// Symptoms are a list: repeating one applies its likelihood again.
pub fn diagnosis_posterior<S: Real, Q: AsRef<str>>(
    symptoms: &[Q],
    table: &EvidenceTable<S>,
    options: &PosteriorOptions,
) -> Result<Posterior<S>> {
    log_space(&table.priors, symptoms, table, options)
}

/// Treats `current` as the prior and conditions on `new_symptoms` only.
pub fn update_posterior<S: Real, Q: AsRef<str>>(
    current: &Posterior<S>,
    new_symptoms: &[Q],
    table: &EvidenceTable<S>,
    options: &PosteriorOptions,
) -> Result<Posterior<S>> {
    table.check_current(current)?;
    if new_symptoms.is_empty() {
        return Ok(current.clone());
    }
    log_space(current, new_symptoms, table, options)
}

/// Plain product form; exact when `S` is a rational type.
pub fn diagnosis_posterior_exact<S: Scalar, Q: AsRef<str>>(symptoms: &[Q], table: &EvidenceTable<S>) -> Result<Posterior<S>> {
    direct(&table.priors, symptoms, table)
}

pub fn update_posterior_exact<S: Scalar, Q: AsRef<str>>(
    current: &Posterior<S>,
    new_symptoms: &[Q],
    table: &EvidenceTable<S>,
) -> Result<Posterior<S>> {
    table.check_current(current)?;
    direct(current, new_symptoms, table)
}
