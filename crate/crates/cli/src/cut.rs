//! Stopping times written as text: `root`, `leaves`, `t=K` or
//! `nodes=3,4,9`.

use tcpp_core::tree::{FiltrationTree, StoppingTime};

pub fn parse_cut(tree: &FiltrationTree, text: &str) -> Result<StoppingTime, String> {
    let text = text.trim();
    match text {
        "root" => return Ok(StoppingTime::root(tree)),
        "leaves" => return Ok(StoppingTime::leaves(tree)),
        _ => {}
    }
    let (key, rest) = text
        .split_once('=')
        .ok_or_else(|| format!("unknown stopping time {text:?}; use root, leaves, t=K or nodes=a,b,..."))?;
    match key.trim() {
        "t" => {
            let t: usize = rest.trim().parse().map_err(|_| format!("bad time {rest:?}"))?;
            StoppingTime::at_time(tree, t).map_err(|e| e.to_string())
        }
        "nodes" => {
            let nodes = rest
                .split(',')
                .map(|s| s.trim().parse::<usize>().map_err(|_| format!("bad node id {s:?}")))
                .collect::<Result<Vec<_>, _>>()?;
            StoppingTime::new(tree, nodes).map_err(|e| e.to_string())
        }
        other => Err(format!("unknown stopping time kind {other:?}")),
    }
}

/// Shortest text that [`parse_cut`] maps back to `st`.
pub fn format_cut(tree: &FiltrationTree, st: &StoppingTime) -> String {
    if *st == StoppingTime::root(tree) {
        return "root".into();
    }
    if *st == StoppingTime::leaves(tree) {
        return "leaves".into();
    }
    if let Some(t) = (1..tree.horizon()).find(|&t| StoppingTime::at_time(tree, t).is_ok_and(|c| c == *st)) {
        return format!("t={t}");
    }
    let ids: Vec<String> = st.nodes().iter().map(|v| v.to_string()).collect();
    format!("nodes={}", ids.join(","))
}
