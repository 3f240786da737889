//! Tree-cotree gauge and the dual-primal DOF partition.
//!
//! A spanning tree of the glued control graph is grown greedily in four
//! phases: wirebasket edges first, then interface-face edges, then
//! domain-boundary edges, then interior edges. Within a phase the edge
//! id decides, ascending for the forward ordering and descending for
//! the reverse variant used by gauge-invariance checks. The phase order
//! keeps the tree as "coarse" as possible: interface tree edges become
//! primal, insulator interior tree edges are fixed to zero, and the
//! remainder carries the dual coupling.

use crate::error::{Error, Result};
use crate::topology::{DofClass, PatchGrid, Region, Topology};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeOrdering {
    Forward,
    Reverse,
}

/// Spanning tree of the control graph.
#[derive(Debug, Clone)]
pub struct SpanningTree {
    pub in_tree: Vec<bool>,
    pub ordering: TreeOrdering,
    /// Tree edges admitted per phase (wirebasket, face, boundary,
    /// interior).
    pub phase_counts: [usize; 4],
}

impl SpanningTree {
    pub fn n_tree_edges(&self) -> usize {
        self.in_tree.iter().filter(|&&t| t).count()
    }
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

fn phase_of(class: DofClass) -> usize {
    match class {
        DofClass::Wirebasket => 0,
        DofClass::Face(_) => 1,
        DofClass::Dirichlet => 2,
        DofClass::Interior => 3,
    }
}

pub fn build_spanning_tree(topo: &Topology, ordering: TreeOrdering) -> Result<SpanningTree> {
    let n_edges = topo.n_edges();
    let mut by_phase: [Vec<usize>; 4] = Default::default();
    for (e, edge) in topo.edges.iter().enumerate() {
        by_phase[phase_of(edge.class)].push(e);
    }
    if ordering == TreeOrdering::Reverse {
        for list in &mut by_phase {
            list.reverse();
        }
    }
    let mut uf = UnionFind::new(topo.n_vertices());
    let mut in_tree = vec![false; n_edges];
    let mut phase_counts = [0usize; 4];
    let mut admitted = 0usize;
    for (ph, list) in by_phase.iter().enumerate() {
        for &e in list {
            let (a, b) = topo.edge_endpoints(e);
            if uf.union(a, b) {
                in_tree[e] = true;
                phase_counts[ph] += 1;
                admitted += 1;
            }
        }
    }
    if admitted != topo.n_vertices() - 1 {
        return Err(Error::Construction(format!(
            "spanning tree has {admitted} edges for {} vertices; control graph disconnected",
            topo.n_vertices()
        )));
    }
    log::debug!(
        "spanning tree ({ordering:?}): {admitted} edges, phases {phase_counts:?}"
    );
    Ok(SpanningTree { in_tree, ordering, phase_counts })
}

/// Role of one global DOF in the per-step saddle system.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofRole {
    /// Fixed to interpolated boundary data.
    EliminatedData,
    /// Fixed to zero by the gauge (insulator interior tree edge).
    EliminatedGauge,
    /// Coarse DOF, continuous by construction (carries coarse index).
    Primal(usize),
    /// Remainder DOF, coupled weakly across interfaces.
    Remainder,
}

/// Dual-primal partition of the glued DOFs.
#[derive(Debug, Clone)]
pub struct Partition {
    /// Per global edge.
    pub role: Vec<DofRole>,
    /// Coarse index -> global edge, ascending.
    pub primal_edges: Vec<usize>,
    /// Dual constraint rows `(global edge, owner index k >= 1)` pairing
    /// `owners[0]` (+1) with `owners[k]` (-1), ascending.
    pub couplings: Vec<(usize, usize)>,
}

impl Partition {
    pub fn n_primal(&self) -> usize {
        self.primal_edges.len()
    }

    pub fn n_lambda(&self) -> usize {
        self.couplings.len()
    }

    pub fn counts(&self) -> PartitionCounts {
        let mut c = PartitionCounts::default();
        for role in &self.role {
            match role {
                DofRole::EliminatedData => c.eliminated_data += 1,
                DofRole::EliminatedGauge => c.eliminated_gauge += 1,
                DofRole::Primal(_) => c.primal += 1,
                DofRole::Remainder => c.remainder += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PartitionCounts {
    pub eliminated_data: usize,
    pub eliminated_gauge: usize,
    pub primal: usize,
    pub remainder: usize,
}

impl PartitionCounts {
    /// All eliminated DOFs (boundary data plus gauge-fixed).
    pub fn eliminated(&self) -> usize {
        self.eliminated_data + self.eliminated_gauge
    }
}

/// Assign roles from the classification and the spanning tree.
pub fn partition_dofs(
    grid: &PatchGrid,
    topo: &Topology,
    tree: &SpanningTree,
) -> Result<Partition> {
    let mut role = Vec::with_capacity(topo.n_edges());
    let mut primal_edges = Vec::new();
    let mut couplings = Vec::new();
    for (e, edge) in topo.edges.iter().enumerate() {
        let r = match edge.class {
            DofClass::Dirichlet => DofRole::EliminatedData,
            DofClass::Face(_) | DofClass::Wirebasket => {
                if tree.in_tree[e] {
                    let idx = primal_edges.len();
                    primal_edges.push(e);
                    DofRole::Primal(idx)
                } else {
                    for k in 1..edge.owners.len() {
                        couplings.push((e, k));
                    }
                    DofRole::Remainder
                }
            }
            DofClass::Interior => {
                if tree.in_tree[e] && topo.edge_region(grid, e) == Region::Insulator {
                    DofRole::EliminatedGauge
                } else {
                    DofRole::Remainder
                }
            }
        };
        role.push(r);
    }
    let part = Partition { role, primal_edges, couplings };
    let c = part.counts();
    log::debug!(
        "partition: {} data + {} gauge eliminated, {} primal, {} remainder, {} couplings",
        c.eliminated_data,
        c.eliminated_gauge,
        c.primal,
        c.remainder,
        part.n_lambda()
    );
    Ok(part)
}
