//! Naive FIB matcher shared by the property and acceptance suites.

use icnsim::icn::FibMode;
use icnsim::NodeId;

pub type Entry = (Vec<String>, NodeId, FibMode);

/// Plain restatement of the lookup rule over a list of entries; later
/// duplicates of the same (prefix, face) overwrite earlier ones.
pub fn reference(entries: &[Entry], name: &[String], faces: &[NodeId]) -> Vec<NodeId> {
    let decide = |face: NodeId| -> Option<FibMode> {
        let mut best: Option<(usize, FibMode)> = None;
        for (prefix, f, mode) in entries {
            if *f != face || prefix.len() > name.len() || prefix[..] != name[..prefix.len()] {
                continue;
            }
            match best {
                Some((len, _)) if len > prefix.len() => {}
                _ => best = Some((prefix.len(), *mode)),
            }
        }
        best.map(|(_, m)| m)
    };
    let decided: Vec<(NodeId, Option<FibMode>)> = faces.iter().map(|&f| (f, decide(f))).collect();
    if decided.iter().any(|(_, d)| *d == Some(FibMode::Include)) {
        decided
            .into_iter()
            .filter(|(_, d)| *d == Some(FibMode::Include))
            .map(|(f, _)| f)
            .collect()
    } else {
        decided
            .into_iter()
            .filter(|(_, d)| *d != Some(FibMode::Exclude))
            .map(|(f, _)| f)
            .collect()
    }
}
