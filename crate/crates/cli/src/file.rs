//! The market document: one TOML file carrying the tree, the scenario
//! model, reference assets, quotes, good-deal caps and hedging constraints.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tcpp_core::market::{AssetProcess, ConstraintSet, GoodDealCaps, QuotedOption};
use tcpp_core::scenario::{check_kernel, MenuEntry, ScenarioModel};
use tcpp_core::tree::{AdaptedProcess, Claim, FiltrationTree, NodeSpec};
use tcpp_core::Settings;

use crate::cut::{format_cut, parse_cut};

/// An input problem located by its position in the document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputError {
    pub path: String,
    pub message: String,
}

impl InputError {
    pub fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        InputError { path: path.into(), message: message.to_string() }
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

impl std::error::Error for InputError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<SettingsSection>,
    pub tree: TreeSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assets: Vec<AssetSection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub quotes: Vec<QuoteSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub good_deal: Option<GoodDealSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasibility_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub enumeration_cap: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopping_time_cap: Option<u64>,
}

/// Either an explicit node list or a homogeneous tree given by its
/// horizon and one-step reference probabilities (node ids breadth first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeEntry {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<usize>,
    /// Reference probability; leaves only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
}

/// Menus per node. `default` applies to every internal node without an
/// explicit menu.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Vec<EntrySection>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub menus: Vec<MenuSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MenuSection {
    pub node: usize,
    pub entries: Vec<EntrySection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntrySection {
    pub kernel: Vec<f64>,
    #[serde(default)]
    pub penalty: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSection {
    pub name: String,
    /// One value per node id.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuoteSection {
    pub name: String,
    #[serde(default = "leaves_cut")]
    pub maturity: String,
    /// One value per atom of the maturity cut.
    pub payoff: Vec<f64>,
    pub bid: f64,
    pub ask: f64,
}

fn leaves_cut() -> String {
    "leaves".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoodDealSection {
    pub cap: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeCap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeCap {
    pub node: usize,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    /// Vertices of the hedge constraint polytope, one coordinate per asset.
    pub vertices: Vec<Vec<f64>>,
}

/// A validated market.
#[derive(Debug, Clone)]
pub struct Market {
    pub tree: FiltrationTree,
    pub model: Option<ScenarioModel>,
    pub asset_names: Vec<String>,
    pub assets: Vec<AssetProcess>,
    pub quote_names: Vec<String>,
    pub quotes: Vec<QuotedOption>,
    pub caps: Option<GoodDealCaps>,
    pub constraints: Option<ConstraintSet>,
    pub settings: Settings,
}

impl MarketFile {
    pub fn parse(text: &str) -> Result<Self, InputError> {
        toml::from_str(text).map_err(|e| {
            let at = e.span().map(|s| location(text, s.start)).unwrap_or_else(|| "document".into());
            InputError::new(at, e.message())
        })
    }

    pub fn read(path: &Path) -> Result<Self, InputError> {
        let text = std::fs::read_to_string(path).map_err(|e| InputError::new(path.display().to_string(), e))?;
        Self::parse(&text).map_err(|e| InputError::new(format!("{}:{}", path.display(), e.path), e.message))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("market documents always serialize")
    }

    /// Validate every section and build the engine objects.
    pub fn build(&self) -> Result<Market, InputError> {
        let settings = self.build_settings()?;
        let tree = self.build_tree()?;
        let model = self.model.as_ref().map(|m| build_model(m, &tree)).transpose()?;

        let mut asset_names = Vec::new();
        let mut assets = Vec::new();
        for (i, a) in self.assets.iter().enumerate() {
            let path = format!("assets[{i}]");
            if asset_names.contains(&a.name) {
                return Err(InputError::new(format!("{path}.name"), format!("duplicate asset name {:?}", a.name)));
            }
            finite(&a.values, &format!("{path}.values"))?;
            let p = AdaptedProcess::new(&tree, a.values.clone()).map_err(|e| InputError::new(format!("{path}.values"), e))?;
            asset_names.push(a.name.clone());
            assets.push(p);
        }

        let mut quote_names = Vec::new();
        let mut quotes = Vec::new();
        for (i, q) in self.quotes.iter().enumerate() {
            let path = format!("quotes[{i}]");
            let at = parse_cut(&tree, &q.maturity).map_err(|m| InputError::new(format!("{path}.maturity"), m))?;
            finite(&q.payoff, &format!("{path}.payoff"))?;
            let payoff = Claim::new(at, q.payoff.clone()).map_err(|e| InputError::new(format!("{path}.payoff"), e))?;
            let quote = QuotedOption::new(payoff, q.bid, q.ask).map_err(|e| InputError::new(path, e))?;
            quote_names.push(q.name.clone());
            quotes.push(quote);
        }

        let caps = match &self.good_deal {
            None => None,
            Some(g) => {
                let mut caps = GoodDealCaps::uniform(g.cap);
                for (i, nc) in g.nodes.iter().enumerate() {
                    if nc.node >= tree.len() || tree.is_leaf(nc.node) {
                        return Err(InputError::new(format!("good_deal.nodes[{i}].node"), format!("{} is not an internal node", nc.node)));
                    }
                    caps = caps.with_node(nc.node, nc.cap);
                }
                caps.validate(&tree).map_err(|e| InputError::new("good_deal", e))?;
                Some(caps)
            }
        };

        let constraints = match &self.constraints {
            None => None,
            Some(c) => {
                let h = ConstraintSet::new(c.vertices.clone()).map_err(|e| InputError::new("constraints.vertices", e))?;
                if h.dim() != assets.len() {
                    return Err(InputError::new(
                        "constraints.vertices",
                        format!("vertices have {} coordinates for {} assets", h.dim(), assets.len()),
                    ));
                }
                Some(h)
            }
        };

        Ok(Market { tree, model, asset_names, assets, quote_names, quotes, caps, constraints, settings })
    }

    fn build_settings(&self) -> Result<Settings, InputError> {
        let mut s = Settings::default();
        if let Some(sec) = &self.settings {
            for (name, v, slot) in [
                ("feasibility_tol", sec.feasibility_tol, &mut s.feasibility_tol),
                ("rank_tol", sec.rank_tol, &mut s.rank_tol),
            ] {
                if let Some(v) = v {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(InputError::new(format!("settings.{name}"), format!("{v} is not a positive tolerance")));
                    }
                    *slot = v;
                }
            }
            if let Some(c) = sec.enumeration_cap {
                s.enumeration_cap = c;
            }
            if let Some(c) = sec.stopping_time_cap {
                s.stopping_time_cap = c;
            }
        }
        Ok(s)
    }

    fn build_tree(&self) -> Result<FiltrationTree, InputError> {
        let t = &self.tree;
        let tree = match (&t.step_probs, t.nodes.is_empty()) {
            (Some(_), false) => return Err(InputError::new("tree", "give either step_probs or nodes, not both")),
            (None, true) => return Err(InputError::new("tree", "needs step_probs or a node list")),
            (Some(p), true) => {
                let horizon = t.horizon.ok_or_else(|| InputError::new("tree.horizon", "required with step_probs"))?;
                finite(p, "tree.step_probs")?;
                FiltrationTree::homogeneous(horizon, p).map_err(|e| InputError::new("tree.step_probs", e))?
            }
            (None, false) => {
                let n = t.nodes.len();
                let mut specs: Vec<Option<NodeSpec>> = vec![None; n];
                for (i, node) in t.nodes.iter().enumerate() {
                    let path = format!("tree.nodes[{i}]");
                    if node.id >= n {
                        return Err(InputError::new(format!("{path}.id"), format!("id {} out of range for {n} nodes", node.id)));
                    }
                    if specs[node.id].is_some() {
                        return Err(InputError::new(format!("{path}.id"), format!("duplicate id {}", node.id)));
                    }
                    if let Some(p) = node.parent.filter(|&p| p >= n) {
                        return Err(InputError::new(format!("{path}.parent"), format!("no node {p}")));
                    }
                    specs[node.id] = Some(NodeSpec { parent: node.parent, weight: node.weight });
                }
                let specs: Vec<NodeSpec> = specs.into_iter().map(|s| s.expect("ids are a permutation")).collect();
                FiltrationTree::new(&specs).map_err(|e| InputError::new("tree.nodes", e))?
            }
        };
        if let Some(h) = t.horizon.filter(|&h| h != tree.horizon()) {
            return Err(InputError::new("tree.horizon", format!("{h} but the nodes span {} periods", tree.horizon())));
        }
        Ok(tree)
    }

    /// Document describing `market` with an explicit node list.
    pub fn from_market(market: &Market) -> Self {
        let tree = &market.tree;
        let nodes = (0..tree.len())
            .map(|v| NodeEntry {
                id: v,
                parent: tree.parent(v),
                weight: tree.is_leaf(v).then(|| tree.weight(v)),
            })
            .collect();
        let model = market.model.as_ref().map(|m| ModelSection {
            default: None,
            menus: tree
                .internal_nodes()
                .map(|v| MenuSection {
                    node: v,
                    entries: m.menu(v).iter().map(|e| EntrySection { kernel: e.kernel.clone(), penalty: e.penalty }).collect(),
                })
                .collect(),
        });
        let s = market.settings;
        MarketFile {
            settings: Some(SettingsSection {
                feasibility_tol: Some(s.feasibility_tol),
                rank_tol: Some(s.rank_tol),
                enumeration_cap: Some(s.enumeration_cap),
                stopping_time_cap: Some(s.stopping_time_cap),
            }),
            tree: TreeSection { horizon: Some(tree.horizon()), step_probs: None, nodes },
            model,
            assets: market
                .asset_names
                .iter()
                .zip(&market.assets)
                .map(|(name, a)| AssetSection { name: name.clone(), values: a.values.clone() })
                .collect(),
            quotes: market
                .quote_names
                .iter()
                .zip(&market.quotes)
                .map(|(name, q)| QuoteSection {
                    name: name.clone(),
                    maturity: format_cut(tree, q.payoff.at()),
                    payoff: q.payoff.values().to_vec(),
                    bid: q.bid,
                    ask: q.ask,
                })
                .collect(),
            good_deal: market.caps.as_ref().map(|c| GoodDealSection {
                cap: c.global,
                nodes: c.per_node.iter().map(|&(node, cap)| NodeCap { node, cap }).collect(),
            }),
            constraints: market.constraints.as_ref().map(|h| ConstraintSection { vertices: h.vertices().to_vec() }),
        }
    }
}

fn build_model(sec: &ModelSection, tree: &FiltrationTree) -> Result<ScenarioModel, InputError> {
    let mut menus: Vec<Option<(String, Vec<MenuEntry>)>> = vec![None; tree.len()];
    for (i, m) in sec.menus.iter().enumerate() {
        let path = format!("model.menus[{i}]");
        if m.node >= tree.len() || tree.is_leaf(m.node) {
            return Err(InputError::new(format!("{path}.node"), format!("{} is not an internal node", m.node)));
        }
        if menus[m.node].is_some() {
            return Err(InputError::new(format!("{path}.node"), format!("second menu for node {}", m.node)));
        }
        let entries = build_entries(&m.entries, tree.children(m.node).len(), m.node, &format!("{path}.entries"))?;
        menus[m.node] = Some((path, entries));
    }
    let mut out = vec![Vec::new(); tree.len()];
    for v in tree.internal_nodes() {
        out[v] = match menus[v].take() {
            Some((_, entries)) => entries,
            None => match &sec.default {
                Some(d) => build_entries(d, tree.children(v).len(), v, "model.default")?,
                None => return Err(InputError::new("model.menus", format!("no menu for node {v} and no default"))),
            },
        };
    }
    ScenarioModel::new_unnormalized(tree.clone(), out).map_err(|e| InputError::new("model", e))
}

fn build_entries(entries: &[EntrySection], arity: usize, node: usize, path: &str) -> Result<Vec<MenuEntry>, InputError> {
    if entries.is_empty() {
        return Err(InputError::new(path, format!("empty menu at node {node}")));
    }
    entries
        .iter()
        .enumerate()
        .map(|(j, e)| {
            check_kernel(&e.kernel, arity).map_err(|m| InputError::new(format!("{path}[{j}].kernel"), format!("{m} (node {node})")))?;
            if !e.penalty.is_finite() {
                return Err(InputError::new(format!("{path}[{j}].penalty"), "must be finite"));
            }
            Ok(MenuEntry::new(e.kernel.clone(), e.penalty))
        })
        .collect()
}

fn finite(values: &[f64], path: &str) -> Result<(), InputError> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(InputError::new(format!("{path}[{i}]"), "must be finite")),
        None => Ok(()),
    }
}

/// `line L, column C` of a byte offset.
fn location(text: &str, offset: usize) -> String {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    format!("line {line}, column {col}")
}
