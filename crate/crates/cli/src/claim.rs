//! Claim documents. A claim is given by exactly one of
//!
//! - `values`: one payoff per atom of `at` (default `leaves`),
//! - `process`: one value per node, read on `at` or used as an American payoff,
//! - `[option]`: a call or put on a named asset.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tcpp_core::tree::{AdaptedProcess, Claim, StoppingTime};

use crate::cut::parse_cut;
use crate::file::{InputError, Market};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub process: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub option: Option<OptionSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSpec {
    pub asset: String,
    pub kind: OptionKind,
    pub strike: f64,
}

impl OptionSpec {
    fn payoff(&self, s: f64) -> f64 {
        match self.kind {
            OptionKind::Call => (s - self.strike).max(0.0),
            OptionKind::Put => (self.strike - s).max(0.0),
        }
    }

    fn asset<'a>(&self, market: &'a Market) -> Result<&'a AdaptedProcess, InputError> {
        market
            .asset_names
            .iter()
            .position(|n| *n == self.asset)
            .map(|i| &market.assets[i])
            .ok_or_else(|| InputError::new("option.asset", format!("no asset named {:?}", self.asset)))
    }
}

impl ClaimFile {
    pub fn parse(text: &str) -> Result<Self, InputError> {
        toml::from_str(text).map_err(|e| InputError::new("claim", e.message()))
    }

    pub fn read(path: &Path) -> Result<Self, InputError> {
        let text = std::fs::read_to_string(path).map_err(|e| InputError::new(path.display().to_string(), e))?;
        Self::parse(&text).map_err(|e| InputError::new(format!("{}:{}", path.display(), e.path), e.message))
    }

    fn sources(&self) -> usize {
        [self.values.is_some(), self.process.is_some(), self.option.is_some()].iter().filter(|&&b| b).count()
    }

    fn cut(&self, market: &Market) -> Result<StoppingTime, InputError> {
        parse_cut(&market.tree, self.at.as_deref().unwrap_or("leaves")).map_err(|m| InputError::new("at", m))
    }

    pub fn claim(&self, market: &Market) -> Result<Claim, InputError> {
        if self.sources() != 1 {
            return Err(InputError::new("claim", "give exactly one of values, process or option"));
        }
        let at = self.cut(market)?;
        if let Some(v) = &self.values {
            return Claim::new(at, v.clone()).map_err(|e| InputError::new("values", e));
        }
        let process = self.process(market)?;
        Ok(process.stopped(&at))
    }

    /// Payoff process on every node, for American exercise.
    pub fn process(&self, market: &Market) -> Result<AdaptedProcess, InputError> {
        let tree = &market.tree;
        if let Some(p) = &self.process {
            return AdaptedProcess::new(tree, p.clone()).map_err(|e| InputError::new("process", e));
        }
        if let Some(o) = &self.option {
            let s = o.asset(market)?;
            let values = (0..tree.len()).map(|v| o.payoff(s.at(v))).collect();
            return AdaptedProcess::new(tree, values).map_err(|e| InputError::new("option", e));
        }
        Err(InputError::new("claim", "a payoff process needs process or option"))
    }

    /// Exercise horizon of an American claim.
    pub fn horizon(&self, market: &Market) -> Result<StoppingTime, InputError> {
        self.cut(market)
    }
}
