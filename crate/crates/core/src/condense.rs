//! Graph condensation of a network ensemble.
//!
//! Each particle is treated as a layered directed graph. Condensation prunes
//! near-zero edges and disconnected hidden nodes, sorts hidden nodes by
//! importance (summed outgoing weight), and embeds every particle into a
//! common template whose hidden widths are the ensemble-wide maximum active
//! node counts. Input and output layers are never touched.

use std::io::Write;
use std::path::Path;

use crate::error::{domain, shape, Result};
use crate::net::{Architecture, BlockKind, LayeredNet, Matrix};

/// Safety cap on prune/sort/reconcile passes.
const MAX_PASSES: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct NetGraph {
    net: LayeredNet,
    /// Per layer (input through output), whether each node is active.
    active: Vec<Vec<bool>>,
    /// Per layer, the node's index in the graph it was built from (`None`
    /// for padding).
    provenance: Vec<Vec<Option<usize>>>,
}

impl NetGraph {
    pub fn from_net(net: LayeredNet) -> Self {
        let widths = &net.arch().layer_widths;
        let active = widths.iter().map(|&n| vec![true; n]).collect();
        let provenance = widths.iter().map(|&n| (0..n).map(Some).collect()).collect();
        Self {
            net,
            active,
            provenance,
        }
    }

    pub fn net(&self) -> &LayeredNet {
        &self.net
    }

    pub fn into_net(self) -> LayeredNet {
        self.net
    }

    pub fn active(&self) -> &[Vec<bool>] {
        &self.active
    }

    pub fn provenance(&self) -> &[Vec<Option<usize>>] {
        &self.provenance
    }

    pub fn num_layers(&self) -> usize {
        self.active.len()
    }

    pub fn active_widths(&self) -> Vec<usize> {
        self.active.iter().map(|l| l.iter().filter(|a| **a).count()).collect()
    }

    /// Nonzero-weight pattern per matrix.
    pub fn edge_pattern(&self) -> Vec<Vec<bool>> {
        self.net
            .weights()
            .iter()
            .map(|w| w.as_slice().iter().map(|v| *v != 0.0).collect())
            .collect()
    }

    fn is_hidden(&self, layer: usize) -> bool {
        layer > 0 && layer + 1 < self.num_layers()
    }

    fn deactivate(&mut self, layer: usize, j: usize) {
        self.active[layer][j] = false;
        let (weights, biases) = (self.net.weights().len(), self.net.arch().biases);
        // incoming: row j of W_{layer-1}
        let w_in = &mut self.net.weights_mut()[layer - 1];
        let cols = w_in.cols();
        for c in 0..cols {
            w_in.set(j, c, 0.0);
        }
        if biases {
            self.net.biases_mut()[layer - 1][j] = 0.0;
        }
        // outgoing: column j of W_layer
        if layer < weights {
            let w_out = &mut self.net.weights_mut()[layer];
            for r in 0..w_out.rows() {
                w_out.set(r, j, 0.0);
            }
        }
    }
}

/// Zero every edge with `|w| < epsilon`, then repeatedly deactivate hidden
/// nodes lacking a nonzero incoming or outgoing edge.
pub fn prune(graph: &NetGraph, epsilon: f64) -> NetGraph {
    let mut g = graph.clone();
    if epsilon > 0.0 {
        for w in g.net.weights_mut() {
            for v in w.as_mut_slice() {
                if v.abs() < epsilon {
                    *v = 0.0;
                }
            }
        }
    }
    loop {
        let mut changed = false;
        for layer in 1..g.num_layers() - 1 {
            for j in 0..g.active[layer].len() {
                let w_in = &g.net.weights()[layer - 1];
                let w_out = &g.net.weights()[layer];
                let has_in = w_in.row(j).iter().any(|v| *v != 0.0);
                let has_out = (0..w_out.rows()).any(|r| w_out.get(r, j) != 0.0);
                if !(has_in && has_out) {
                    if g.active[layer][j] {
                        changed = true;
                    }
                    g.deactivate(layer, j);
                }
            }
        }
        if !changed {
            break;
        }
    }
    g
}

/// Node importance `s_j = Σᵢ [W_ℓ]ᵢⱼ` for hidden layer `ℓ`. Signed on
/// nonnegative matrices, absolute values on unconstrained ones.
pub fn importance(graph: &NetGraph, layer: usize) -> Result<Vec<f64>> {
    if !graph.is_hidden(layer) {
        return Err(domain(format!("layer {layer} is not a hidden layer")));
    }
    let w = &graph.net.weights()[layer];
    let signed = graph.net.arch().nonneg_mask[layer];
    Ok((0..w.cols())
        .map(|j| {
            (0..w.rows())
                .map(|i| {
                    let v = w.get(i, j);
                    if signed {
                        v
                    } else {
                        v.abs()
                    }
                })
                .sum()
        })
        .collect())
}

/// Reorder hidden nodes: active before inactive, then by descending
/// importance; ties keep their original order.
pub fn sort_nodes(graph: &NetGraph) -> NetGraph {
    let mut g = graph.clone();
    for layer in 1..g.num_layers() - 1 {
        let s = importance(&g, layer).expect("hidden layer");
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| {
            g.active[layer][b]
                .cmp(&g.active[layer][a])
                .then(s[b].total_cmp(&s[a]))
        });
        permute_layer(&mut g, layer, &order);
    }
    g
}

/// Node `k` of the result is node `order[k]` of the input.
fn permute_layer(g: &mut NetGraph, layer: usize, order: &[usize]) {
    if order.iter().enumerate().all(|(k, &o)| k == o) {
        return;
    }
    let biases = g.net.arch().biases;
    let w_in = &g.net.weights()[layer - 1];
    let mut new_in = Matrix::zeros(w_in.rows(), w_in.cols());
    for (k, &o) in order.iter().enumerate() {
        for c in 0..w_in.cols() {
            new_in.set(k, c, w_in.get(o, c));
        }
    }
    let w_out = &g.net.weights()[layer];
    let mut new_out = Matrix::zeros(w_out.rows(), w_out.cols());
    for r in 0..w_out.rows() {
        for (k, &o) in order.iter().enumerate() {
            new_out.set(r, k, w_out.get(r, o));
        }
    }
    g.net.weights_mut()[layer - 1] = new_in;
    g.net.weights_mut()[layer] = new_out;
    if biases {
        let b = &g.net.biases()[layer - 1];
        let nb: Vec<f64> = order.iter().map(|&o| b[o]).collect();
        g.net.biases_mut()[layer - 1] = nb;
    }
    g.active[layer] = order.iter().map(|&o| g.active[layer][o]).collect();
    g.provenance[layer] = order.iter().map(|&o| g.provenance[layer][o]).collect();
}

/// Hidden widths every particle is embedded into.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Template {
    pub layer_widths: Vec<usize>,
}

pub fn common_template(graphs: &[NetGraph]) -> Result<Template> {
    let first = graphs.first().ok_or_else(|| shape("empty ensemble"))?;
    let n = first.num_layers();
    let widths = &first.net.arch().layer_widths;
    let mut out = widths.clone();
    for layer in 1..n - 1 {
        out[layer] = 0;
    }
    for g in graphs {
        let w = &g.net.arch().layer_widths;
        if g.num_layers() != n {
            return Err(shape("ensemble members have different layer counts"));
        }
        if w[0] != widths[0] || w[n - 1] != widths[n - 1] {
            return Err(shape("ensemble members have different input/output widths"));
        }
        let active = g.active_widths();
        for layer in 1..n - 1 {
            out[layer] = out[layer].max(active[layer]);
        }
    }
    Ok(Template { layer_widths: out })
}

/// Embed every graph into the template: active nodes first (in their current
/// order), then zero padding.
pub fn reconcile(graphs: &[NetGraph], template: &Template) -> Result<Vec<NetGraph>> {
    graphs.iter().map(|g| embed(g, template)).collect()
}

fn embed(g: &NetGraph, template: &Template) -> Result<NetGraph> {
    let n = g.num_layers();
    if template.layer_widths.len() != n {
        return Err(shape("template layer count differs from graph"));
    }
    // kept[ℓ]: source node indices placed first in layer ℓ
    let mut kept: Vec<Vec<usize>> = Vec::with_capacity(n);
    for layer in 0..n {
        if layer == 0 || layer == n - 1 {
            kept.push((0..g.active[layer].len()).collect());
            continue;
        }
        let idx: Vec<usize> = (0..g.active[layer].len()).filter(|&j| g.active[layer][j]).collect();
        if idx.len() > template.layer_widths[layer] {
            return Err(shape(format!(
                "layer {layer} has {} active nodes, template allows {}",
                idx.len(),
                template.layer_widths[layer]
            )));
        }
        kept.push(idx);
    }
    let src = g.net.arch();
    let mut arch = src.clone();
    arch.layer_widths = template.layer_widths.clone();
    let mut weights = Vec::with_capacity(n - 1);
    let mut biases = Vec::new();
    for k in 0..n - 1 {
        let (rows, cols) = (arch.layer_widths[k + 1], arch.layer_widths[k]);
        let w = &g.net.weights()[k];
        let mut m = Matrix::zeros(rows, cols);
        for (r, &sr) in kept[k + 1].iter().enumerate() {
            for (c, &sc) in kept[k].iter().enumerate() {
                m.set(r, c, w.get(sr, sc));
            }
        }
        weights.push(m);
        if src.biases {
            let mut b = vec![0.0; rows];
            for (r, &sr) in kept[k + 1].iter().enumerate() {
                b[r] = g.net.biases()[k][sr];
            }
            biases.push(b);
        }
    }
    let mut active = Vec::with_capacity(n);
    let mut provenance = Vec::with_capacity(n);
    for layer in 0..n {
        let width = arch.layer_widths[layer];
        let mut a = vec![false; width];
        let mut p = vec![None; width];
        for (k, &s) in kept[layer].iter().enumerate() {
            a[k] = g.active[layer][s];
            p[k] = g.provenance[layer][s];
        }
        active.push(a);
        provenance.push(p);
    }
    Ok(NetGraph {
        net: LayeredNet::new(arch, weights, biases)?,
        active,
        provenance,
    })
}

/// Remove hidden layers of width zero. Only identity-activated layers can be
/// composed away; a dead softplus layer is an error.
fn collapse_empty_layers(graphs: Vec<NetGraph>, template: &Template) -> Result<(Vec<NetGraph>, Template)> {
    let n = template.layer_widths.len();
    let empty: Vec<usize> = (1..n - 1).filter(|&l| template.layer_widths[l] == 0).collect();
    if empty.is_empty() {
        return Ok((graphs, template.clone()));
    }
    let mut out = Vec::with_capacity(graphs.len());
    let mut new_template = template.clone();
    for g in graphs {
        let mut g = g;
        // collapse from the back so indices stay valid
        for &layer in empty.iter().rev() {
            g = collapse_layer(g, layer)?;
        }
        out.push(g);
    }
    for &layer in empty.iter().rev() {
        new_template.layer_widths.remove(layer);
    }
    Ok((out, new_template))
}

fn collapse_layer(g: NetGraph, layer: usize) -> Result<NetGraph> {
    let NetGraph {
        net,
        mut active,
        mut provenance,
    } = g;
    let (arch, mut weights, mut biases) = net.into_parts();
    let act = arch.activations[layer - 1];
    if act != crate::net::Activation::Identity {
        return Err(domain(format!(
            "every node of hidden layer {layer} was pruned and its {act:?} activation cannot be composed away"
        )));
    }
    // h_{ℓ+1} = σ_ℓ(W_ℓ (W_{ℓ−1} h + b_{ℓ−1}) + b_ℓ) with an empty layer ℓ
    let w_out = weights.remove(layer);
    let w_in = weights.remove(layer - 1);
    let merged = w_out.matmul(&w_in)?;
    weights.insert(layer - 1, merged);
    if arch.biases {
        let b_in = biases.remove(layer - 1);
        let b_out = &mut biases[layer - 1];
        for (r, bo) in b_out.iter_mut().enumerate() {
            *bo += (0..b_in.len()).map(|c| w_out.get(r, c) * b_in[c]).sum::<f64>();
        }
    }
    let mut new_arch = arch.clone();
    new_arch.layer_widths.remove(layer);
    new_arch.activations.remove(layer - 1);
    let nonneg = arch.nonneg_mask[layer - 1] && arch.nonneg_mask[layer];
    new_arch.nonneg_mask.remove(layer);
    new_arch.nonneg_mask[layer - 1] = nonneg;
    active.remove(layer);
    provenance.remove(layer);
    Ok(NetGraph {
        net: LayeredNet::new(new_arch, weights, biases)?,
        active,
        provenance,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CondenseReport {
    pub passes: usize,
    pub widths_before: Vec<usize>,
    pub widths_after: Vec<usize>,
    /// Total nonzero weights across the ensemble.
    pub active_before: usize,
    pub active_after: usize,
}

/// Repeat prune → sort → template → reconcile until the template and every
/// graph's edge pattern stop changing.
pub fn condense_graphs(nets: &[LayeredNet], epsilon: f64) -> Result<(Vec<NetGraph>, CondenseReport)> {
    let first = nets.first().ok_or_else(|| shape("empty ensemble"))?;
    let widths_before = first.arch().layer_widths.clone();
    let active_before = nets.iter().map(|n| n.param_count(0.0)).sum();
    let mut graphs: Vec<NetGraph> = nets.iter().cloned().map(NetGraph::from_net).collect();
    let mut previous: Option<(Template, Vec<Vec<Vec<bool>>>)> = None;
    let mut passes = 0;
    while passes < MAX_PASSES {
        passes += 1;
        let pruned: Vec<NetGraph> = graphs.iter().map(|g| sort_nodes(&prune(g, epsilon))).collect();
        let template = common_template(&pruned)?;
        let placed = reconcile(&pruned, &template)?;
        let (placed, template) = collapse_empty_layers(placed, &template)?;
        let signature = (template, placed.iter().map(NetGraph::edge_pattern).collect::<Vec<_>>());
        graphs = placed;
        if previous.as_ref() == Some(&signature) {
            break;
        }
        previous = Some(signature);
    }
    let report = CondenseReport {
        passes,
        widths_before,
        widths_after: graphs[0].net.arch().layer_widths.clone(),
        active_before,
        active_after: graphs.iter().map(|g| g.net.param_count(0.0)).sum(),
    };
    Ok((graphs, report))
}

pub fn condense_nets(nets: &[LayeredNet], epsilon: f64) -> Result<(Vec<LayeredNet>, CondenseReport)> {
    let (graphs, report) = condense_graphs(nets, epsilon)?;
    Ok((graphs.into_iter().map(NetGraph::into_net).collect(), report))
}

/// For every flat coordinate of `graph`, the coordinate of the `source`
/// layout it was carried from (`None` for padding). `None` overall when the
/// layer structure changed.
pub fn coordinate_origin(source: &Architecture, graph: &NetGraph) -> Option<Vec<Option<usize>>> {
    let arch = graph.net.arch();
    if arch.layer_widths.len() != source.layer_widths.len() || arch.biases != source.biases {
        return None;
    }
    let prov = &graph.provenance;
    let src_blocks = source.blocks();
    let mut out = Vec::with_capacity(arch.num_params());
    for (b, sb) in arch.blocks().iter().zip(&src_blocks) {
        for r in 0..b.rows {
            for c in 0..b.cols {
                let k = match b.kind {
                    BlockKind::Weight(k) | BlockKind::Bias(k) => k,
                };
                let from = match (b.kind, prov[k + 1][r], prov[k][c]) {
                    (BlockKind::Weight(_), Some(sr), Some(sc)) => Some(sb.offset + sr * sb.cols + sc),
                    (BlockKind::Bias(_), Some(sr), _) => Some(sb.offset + sr),
                    _ => None,
                };
                out.push(from);
            }
        }
    }
    Some(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CondensedParticles {
    pub arch: Architecture,
    pub particles: Vec<Vec<f64>>,
    /// Per particle, see [`coordinate_origin`].
    pub origin: Vec<Option<Vec<Option<usize>>>>,
    pub report: CondenseReport,
}

/// Condense flat particles sharing `arch`.
pub fn condense_particles(arch: &Architecture, particles: &[Vec<f64>], epsilon: f64) -> Result<CondensedParticles> {
    let nets = particles
        .iter()
        .map(|p| LayeredNet::from_params(arch, p))
        .collect::<Result<Vec<_>>>()?;
    let (graphs, report) = condense_graphs(&nets, epsilon)?;
    Ok(CondensedParticles {
        arch: graphs[0].net.arch().clone(),
        particles: graphs.iter().map(|g| g.net.flatten().values).collect(),
        origin: graphs.iter().map(|g| coordinate_origin(arch, g)).collect(),
        report,
    })
}

/// `d(a, b) = sqrt(Σ_ℓ ‖W_{ℓ,a} − W_{ℓ,b}‖²_F)`, biases ignored.
pub fn distance_matrix(nets: &[LayeredNet]) -> Result<Vec<Vec<f64>>> {
    let n = nets.len();
    if let Some(first) = nets.first() {
        let widths = &first.arch().layer_widths;
        if nets.iter().any(|m| &m.arch().layer_widths != widths) {
            return Err(shape("distance matrix needs a common layout"));
        }
    }
    let mut d = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let s: f64 = nets[a]
                .weights()
                .iter()
                .zip(nets[b].weights())
                .flat_map(|(x, y)| x.as_slice().iter().zip(y.as_slice()))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            d[a][b] = s.sqrt();
            d[b][a] = d[a][b];
        }
    }
    Ok(d)
}

/// Node list and nonzero-edge list for external plotting.
pub fn write_graph_dump(graph: &NetGraph, nodes: &Path, edges: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(nodes)?);
    writeln!(w, "layer,index,importance,active,original_index")?;
    for layer in 0..graph.num_layers() {
        let imp = importance(graph, layer).ok();
        for j in 0..graph.active[layer].len() {
            let s = imp.as_ref().map_or(String::new(), |v| v[j].to_string());
            let o = graph.provenance[layer][j].map_or(String::new(), |o| o.to_string());
            writeln!(w, "{layer},{j},{s},{},{o}", graph.active[layer][j] as u8)?;
        }
    }
    w.flush()?;
    let mut w = std::io::BufWriter::new(std::fs::File::create(edges)?);
    writeln!(w, "from_layer,from,to_layer,to,weight")?;
    for (k, m) in graph.net.weights().iter().enumerate() {
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                let v = m.get(r, c);
                if v != 0.0 {
                    writeln!(w, "{k},{c},{},{r},{v}", k + 1)?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{Activation, Architecture};

    fn chain(widths: &[usize], values: &[f64]) -> LayeredNet {
        let arch = Architecture::softplus_chain(widths, vec![false; widths.len() - 1], false).unwrap();
        LayeredNet::from_params(&arch, values).unwrap()
    }

    #[test]
    fn zero_epsilon_leaves_dense_graph_alone() {
        let net = chain(&[1, 2, 1], &[0.5, -0.3, 1.0, 2.0]);
        let g = NetGraph::from_net(net);
        assert_eq!(prune(&g, 0.0), g);
    }

    #[test]
    fn small_edge_is_pruned() {
        let net = chain(&[1, 2, 1], &[5e-4, 0.7, 1.0, 2.0]);
        let g = prune(&NetGraph::from_net(net), 1e-3);
        assert_eq!(g.net().weights()[0].as_slice(), &[0.0, 0.7]);
        // node 0 lost its only incoming edge, so its outgoing edge goes too
        assert_eq!(g.active()[1], vec![false, true]);
        assert_eq!(g.net().weights()[1].as_slice(), &[0.0, 2.0]);
    }

    #[test]
    fn orphaned_node_is_removed() {
        // 1-2-1: node 1's only outgoing edge is tiny
        let net = chain(&[1, 2, 1], &[0.5, 0.8, 1.0, 1e-4]);
        let g = prune(&NetGraph::from_net(net), 1e-3);
        assert_eq!(g.active()[1], vec![true, false]);
        assert_eq!(g.net().weights()[0].as_slice(), &[0.5, 0.0]);
        assert_eq!(g.net().weights()[1].as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn importance_is_column_sum() {
        let net = chain(&[1, 2, 2, 1], &[1.0, 1.0, 1.0, 2.0, 3.0, 4.0, 1.0, 1.0]);
        let mut arch = net.arch().clone();
        arch.nonneg_mask = vec![false, true, true];
        let net = LayeredNet::from_params(&arch, &net.flatten().values).unwrap();
        let g = NetGraph::from_net(net);
        assert_eq!(importance(&g, 1).unwrap(), vec![4.0, 6.0]);
        assert!(importance(&g, 0).is_err());
        assert!(importance(&g, 3).is_err());
    }

    #[test]
    fn unconstrained_importance_uses_magnitudes() {
        let net = chain(&[1, 2, 1], &[1.0, 1.0, -3.0, 2.0]);
        let g = NetGraph::from_net(net);
        assert_eq!(importance(&g, 1).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn sort_swaps_and_preserves_output() {
        let net = chain(&[1, 2, 1], &[0.3, -0.6, 1.0, 5.0]);
        let before = net.forward(&[0.7]).unwrap()[0];
        let g = sort_nodes(&NetGraph::from_net(net));
        assert_eq!(g.provenance()[1], vec![Some(1), Some(0)]);
        let after = g.net().forward(&[0.7]).unwrap()[0];
        assert!((before - after).abs() <= 1e-12);
    }

    #[test]
    fn sorted_graph_is_fixed_point_and_ties_are_stable() {
        let net = chain(&[1, 3, 1], &[0.1, 0.2, 0.3, 2.0, 2.0, 1.0]);
        let g = NetGraph::from_net(net);
        let s = sort_nodes(&g);
        assert_eq!(s, g);
    }

    #[test]
    fn template_takes_max_active_width() {
        let mk = |k: usize| {
            let mut vals = vec![0.0; 5 + 5];
            for j in 0..k {
                vals[j] = 1.0;
                vals[5 + j] = 1.0;
            }
            prune(&NetGraph::from_net(chain(&[1, 5, 1], &vals)), 0.0)
        };
        let t = common_template(&[mk(3), mk(5), mk(4)]).unwrap();
        assert_eq!(t.layer_widths, vec![1, 5, 1]);
    }

    #[test]
    fn template_rejects_mismatched_graphs() {
        let a = NetGraph::from_net(chain(&[1, 2, 1], &[1.0; 4]));
        let b = NetGraph::from_net(chain(&[2, 2, 1], &[1.0; 6]));
        assert!(common_template(&[a.clone(), b]).is_err());
        let c = NetGraph::from_net(chain(&[1, 2, 2, 1], &[1.0; 8]));
        assert!(common_template(&[a, c]).is_err());
        assert!(common_template(&[]).is_err());
    }

    #[test]
    fn padding_appends_inert_nodes() {
        let net = chain(&[1, 2, 1], &[0.4, -0.9, 1.5, 0.5]);
        let g = prune(&NetGraph::from_net(net.clone()), 0.0);
        let t = Template {
            layer_widths: vec![1, 3, 1],
        };
        let out = reconcile(&[g.clone()], &t).unwrap();
        let p = &out[0];
        assert_eq!(p.net().arch().layer_widths, vec![1, 3, 1]);
        assert_eq!(p.net().weights()[0].row(2), &[0.0]);
        assert_eq!(p.net().weights()[1].get(0, 2), 0.0);
        assert_eq!(p.provenance()[1][2], None);
        for x in [-2.0, 0.0, 1.3] {
            let a = net.forward(&[x]).unwrap()[0];
            let b = p.net().forward(&[x]).unwrap()[0];
            assert!((a - b).abs() <= 1e-12);
        }
        let same = reconcile(&[g.clone()], &Template { layer_widths: vec![1, 2, 1] }).unwrap();
        assert_eq!(same[0], g);
        assert!(reconcile(&[g], &Template { layer_widths: vec![1, 1, 1] }).is_err());
    }

    #[test]
    fn coordinates_follow_their_nodes() {
        // particle 0 sorts its two hidden nodes, particle 1 loses one and is padded
        let arch = Architecture::softplus_chain(&[1, 2, 1], vec![false, false], true).unwrap();
        let p0 = vec![0.4, -0.9, 0.1, 0.2, 1.0, 3.0, 0.7];
        let p1 = vec![0.4, -0.9, 0.1, 0.2, 1.0, 1e-5, 0.7];
        let out = condense_particles(&arch, &[p0.clone(), p1.clone()], 1e-3).unwrap();
        assert_eq!(out.arch.layer_widths, vec![1, 2, 1]);
        for (p, (new, origin)) in [p0, p1].iter().zip(out.particles.iter().zip(&out.origin)) {
            let origin = origin.as_ref().unwrap();
            for (v, from) in new.iter().zip(origin) {
                match from {
                    Some(j) => assert_eq!(*v, p[*j]),
                    None => assert_eq!(*v, 0.0),
                }
            }
        }
        let o0 = out.origin[0].as_ref().unwrap();
        // layout: W0 (2), b0 (2), W1 (2), b1 (1); node order swapped
        assert_eq!(o0, &[Some(1), Some(0), Some(3), Some(2), Some(5), Some(4), Some(6)]);
        assert_eq!(out.origin[1].as_ref().unwrap()[1], None);
    }

    #[test]
    fn dead_identity_layer_collapses() {
        let arch = Architecture {
            layer_widths: vec![2, 3, 1],
            activations: vec![Activation::Identity, Activation::Identity],
            nonneg_mask: vec![false; 2],
            biases: false,
        };
        let mut vals = vec![0.5; arch.num_params()];
        for v in &mut vals[6..] {
            *v = 0.0;
        }
        let net = LayeredNet::from_params(&arch, &vals).unwrap();
        let (out, rep) = condense_nets(&[net.clone(), net.clone()], 0.0).unwrap();
        assert_eq!(rep.widths_after, vec![2, 1]);
        for x in [[0.3, -1.0], [2.0, 0.5]] {
            assert_eq!(out[0].forward(&x).unwrap(), net.forward(&x).unwrap());
        }
    }

    #[test]
    fn dead_softplus_layer_aborts() {
        let net = chain(&[1, 2, 1], &[0.0, 0.0, 1.0, 1.0]);
        let r = condense_nets(&[net], 0.0);
        assert!(matches!(r, Err(crate::Error::Domain(_))));
    }

    #[test]
    fn distances() {
        let a = chain(&[1, 1], &[1.0]);
        let b = chain(&[1, 1], &[4.0]);
        let d = distance_matrix(&[a.clone(), b]).unwrap();
        assert_eq!(d[0][0], 0.0);
        assert_eq!(d[0][1], 3.0);
        assert_eq!(d[1][0], 3.0);
        let c = chain(&[1, 2, 1], &[1.0; 4]);
        assert!(distance_matrix(&[a, c]).is_err());
    }
}
