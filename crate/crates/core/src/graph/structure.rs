//! Fork/join analysis.
//!
//! Nodes are numbered graph inputs first, then layers in file order, then a
//! virtual exit fed by every graph output. Because file order is
//! topological, immediate post-dominators can be computed in one reverse
//! sweep: a node's post-dominator always has a larger number.
//!
//! Every fork (a node with two or more distinct consumers) opens a region
//! that closes at the fork's immediate post-dominator, the first layer where
//! all of its paths reconverge. Nodes strictly inside the region are either
//! on a brother branch (the join concatenates) or inside a shortcut span
//! (the join adds).

use std::collections::BTreeSet;

use super::{LayerKind, NetworkGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionKind {
    /// Parallel branches merged by concatenation (inception style).
    Branch,
    /// Main path plus bypass merged by addition (residual style).
    Shortcut,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    /// Producer whose output is consumed by several layers.
    pub fork: String,
    pub join: String,
    pub kind: RegionKind,
    /// Layers strictly between fork and join, in layer order.
    pub members: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Structure {
    n_inputs: usize,
    /// Distinct successor nodes per node.
    succs: Vec<Vec<usize>>,
    ipdom: Vec<usize>,
    regions: Vec<Region>,
    in_branch: Vec<bool>,
    in_shortcut: Vec<bool>,
}

impl Structure {
    pub fn analyze(net: &NetworkGraph) -> Structure {
        let n_inputs = net.inputs().len();
        let n_layers = net.layers().len();
        let exit = n_inputs + n_layers;
        let node_of = |name: &str| -> usize {
            match net.layer_index(name) {
                Some(i) => n_inputs + i,
                None => net
                    .inputs()
                    .iter()
                    .position(|i| i.name == name)
                    .expect("validated reference"),
            }
        };

        let mut succs: Vec<Vec<usize>> = vec![Vec::new(); exit + 1];
        for (i, l) in net.layers().iter().enumerate() {
            for inp in &l.inputs {
                let p = node_of(inp);
                let v = n_inputs + i;
                if !succs[p].contains(&v) {
                    succs[p].push(v);
                }
            }
        }
        for o in net.outputs() {
            let p = node_of(o);
            if !succs[p].contains(&exit) {
                succs[p].push(exit);
            }
        }

        // Immediate post-dominators; unreachable-to-exit nodes keep `exit`.
        let mut ipdom = vec![exit; exit + 1];
        for v in (0..exit).rev() {
            let mut it = succs[v].iter().copied();
            let Some(first) = it.next() else { continue };
            let mut acc = first;
            for s in it {
                acc = intersect(&ipdom, acc, s);
            }
            ipdom[v] = acc;
        }

        let name_of = |v: usize| -> String {
            if v < n_inputs {
                net.inputs()[v].name.clone()
            } else {
                net.layers()[v - n_inputs].name.clone()
            }
        };

        let mut regions = Vec::new();
        let mut in_branch = vec![false; n_layers];
        let mut in_shortcut = vec![false; n_layers];
        for f in 0..exit {
            if succs[f].len() < 2 {
                continue;
            }
            let j = ipdom[f];
            if j == exit {
                continue;
            }
            let join_layer = &net.layers()[j - n_inputs];
            let kind = match join_layer.kind {
                LayerKind::EltwiseAdd => RegionKind::Shortcut,
                _ => RegionKind::Branch,
            };
            // Everything reachable from the fork that does not come after the join.
            let mut reach = vec![false; exit + 1];
            let mut stack = vec![f];
            while let Some(v) = stack.pop() {
                for &s in &succs[v] {
                    if s != j && !reach[s] {
                        reach[s] = true;
                        stack.push(s);
                    }
                }
            }
            let members: BTreeSet<usize> = (n_inputs..exit).filter(|&v| reach[v]).collect();
            for &m in &members {
                match kind {
                    RegionKind::Branch => in_branch[m - n_inputs] = true,
                    RegionKind::Shortcut => in_shortcut[m - n_inputs] = true,
                }
            }
            regions.push(Region {
                fork: name_of(f),
                join: join_layer.name.clone(),
                kind,
                members: members.into_iter().map(name_of).collect(),
            });
        }

        Structure {
            n_inputs,
            succs,
            ipdom,
            regions,
            in_branch,
            in_shortcut,
        }
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// True if the layer sits on one of several parallel branches that
    /// leave the same fork and are concatenated at the same join.
    pub fn has_brother_branch(&self, layer_index: usize) -> bool {
        self.in_branch[layer_index]
    }

    /// True if the layer lies strictly between a residual fork and the
    /// addition that closes it.
    pub fn in_shortcut_span(&self, layer_index: usize) -> bool {
        self.in_shortcut[layer_index]
    }

    /// Number of distinct consumers of a layer's output; the graph exit
    /// counts as one consumer for output layers.
    pub fn fan_out(&self, layer_index: usize) -> usize {
        self.succs[self.n_inputs + layer_index].len()
    }

    /// Immediate post-dominator of a layer, as a layer index; `None` when it
    /// is the virtual exit.
    pub fn immediate_post_dominator(&self, layer_index: usize) -> Option<usize> {
        let p = self.ipdom[self.n_inputs + layer_index];
        (p < self.ipdom.len() - 1).then(|| p - self.n_inputs)
    }
}

fn intersect(ipdom: &[usize], mut a: usize, mut b: usize) -> usize {
    while a != b {
        while a < b {
            a = ipdom[a];
        }
        while b < a {
            b = ipdom[b];
        }
    }
    a
}
