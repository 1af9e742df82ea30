use std::fs;
use std::path::Path;

use crate::condense::{distance_matrix, write_graph_dump, NetGraph};
use crate::error::{shape, Result};
use crate::experiments::write_table;
use crate::net::LayeredNet;
use crate::svgd::Ensemble;

#[derive(Clone, Debug, PartialEq)]
pub struct InspectOutcome {
    pub distances: Vec<Vec<f64>>,
    pub layer_widths: Vec<usize>,
}

/// Reads a checkpoint and writes `distances.csv` (pairwise particle
/// distances), `weights.csv` (every weight, long format, for per-layer
/// density plots) and per-particle graph dumps into `out`.
pub fn condense_inspect(checkpoint: &Path, out: &Path) -> Result<InspectOutcome> {
    let (ens, _) = Ensemble::load_checkpoint(checkpoint)?;
    let arch = ens
        .layout
        .arch()
        .ok_or_else(|| shape("checkpoint does not hold a network ensemble"))?
        .clone();
    let nets = ens
        .particles
        .iter()
        .map(|p| LayeredNet::from_params(&arch, p))
        .collect::<Result<Vec<_>>>()?;
    let distances = distance_matrix(&nets)?;
    fs::create_dir_all(out.join("graphs"))?;
    let header: Vec<String> = (0..nets.len()).map(|b| format!("p{b}")).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(
        &out.join("distances.csv"),
        &header,
        distances.iter().map(|r| r.iter().map(f64::to_string).collect()),
    )?;
    let mut rows = Vec::new();
    for (a, net) in nets.iter().enumerate() {
        for (k, w) in net.weights().iter().enumerate() {
            for r in 0..w.rows() {
                for c in 0..w.cols() {
                    rows.push(vec![
                        k.to_string(),
                        a.to_string(),
                        r.to_string(),
                        c.to_string(),
                        w.get(r, c).to_string(),
                    ]);
                }
            }
        }
        let g = NetGraph::from_net(net.clone());
        write_graph_dump(
            &g,
            &out.join("graphs").join(format!("p{a:02}_nodes.csv")),
            &out.join("graphs").join(format!("p{a:02}_edges.csv")),
        )?;
    }
    write_table(&out.join("weights.csv"), &["layer", "particle", "row", "col", "value"], rows)?;
    Ok(InspectOutcome {
        distances,
        layer_widths: arch.layer_widths,
    })
}
