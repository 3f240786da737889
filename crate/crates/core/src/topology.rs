//! Patch-grid decomposition of a box domain, DOF classification and the
//! glued control graph.
//!
//! Because every patch is an axis-aligned box with uniform breakpoints
//! and the same degree, the glued control vertices of all patches form a
//! single global tensor lattice. Each vector DOF is in bijection with a
//! lattice edge, interface DOFs are exactly the edges mapped by two or
//! more patches, and connectivity of the control graph is immediate.

use crate::error::{Error, Result};
use crate::spline::{build_curl_space, Box3, CurlSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Conductor,
    Insulator,
}

#[derive(Debug, Clone)]
pub struct Patch {
    pub bbox: Box3,
    pub region: Region,
    pub divisions: [usize; 3],
    /// Position in the patch grid.
    pub cell: [usize; 3],
}

/// Tiling of the domain box into conductor/insulator patches.
#[derive(Debug, Clone)]
pub struct PatchGrid {
    pub domain: Box3,
    pub counts: [usize; 3],
    pub divisions: [usize; 3],
    pub patches: Vec<Patch>,
}

impl PatchGrid {
    pub fn n_patches(&self) -> usize {
        self.patches.len()
    }

    pub fn patch_id(&self, cell: [usize; 3]) -> usize {
        cell[0] + self.counts[0] * (cell[1] + self.counts[1] * cell[2])
    }
}

/// Build the patch tiling. `conductor` is evaluated at patch centers.
pub fn build_patch_grid(
    domain: Box3,
    counts: [usize; 3],
    conductor: impl Fn([f64; 3]) -> bool,
    divisions: [usize; 3],
) -> Result<PatchGrid> {
    for d in 0..3 {
        if counts[d] < 1 {
            return Err(Error::Config("patch counts must be >= 1".into()));
        }
        if divisions[d] < counts[d] || divisions[d] % counts[d] != 0 {
            return Err(Error::Config(format!(
                "divisions {} not divisible by patch count {} in direction {d}",
                divisions[d], counts[d]
            )));
        }
    }
    let mut patches = Vec::new();
    for kz in 0..counts[2] {
        for ky in 0..counts[1] {
            for kx in 0..counts[0] {
                let cell = [kx, ky, kz];
                let mut lo = [0.0; 3];
                let mut hi = [0.0; 3];
                for d in 0..3 {
                    let w = (domain.hi[d] - domain.lo[d]) / counts[d] as f64;
                    lo[d] = domain.lo[d] + w * cell[d] as f64;
                    hi[d] = domain.lo[d] + w * (cell[d] + 1) as f64;
                }
                let bbox = Box3::new(lo, hi);
                let region = if conductor(bbox.center()) {
                    Region::Conductor
                } else {
                    Region::Insulator
                };
                let divs = [
                    divisions[0] / counts[0],
                    divisions[1] / counts[1],
                    divisions[2] / counts[2],
                ];
                patches.push(Patch { bbox, region, divisions: divs, cell });
            }
        }
    }
    let grid = PatchGrid { domain, counts, divisions, patches };
    for region in [Region::Conductor, Region::Insulator] {
        if !region_connected(&grid, region) {
            return Err(Error::Config(format!("{region:?} patches form a disconnected set")));
        }
    }
    Ok(grid)
}

fn region_connected(grid: &PatchGrid, region: Region) -> bool {
    let members: Vec<usize> = (0..grid.n_patches())
        .filter(|&s| grid.patches[s].region == region)
        .collect();
    if members.is_empty() {
        return true;
    }
    let mut seen = vec![false; grid.n_patches()];
    let mut stack = vec![members[0]];
    seen[members[0]] = true;
    while let Some(s) = stack.pop() {
        let cell = grid.patches[s].cell;
        for d in 0..3 {
            for step in [-1isize, 1] {
                let c = cell[d] as isize + step;
                if c < 0 || c as usize >= grid.counts[d] {
                    continue;
                }
                let mut ncell = cell;
                ncell[d] = c as usize;
                let n = grid.patch_id(ncell);
                if !seen[n] && grid.patches[n].region == region {
                    seen[n] = true;
                    stack.push(n);
                }
            }
        }
    }
    members.iter().all(|&s| seen[s])
}

/// Curl-conforming spaces for all patches of a grid.
pub fn build_spaces(grid: &PatchGrid, degree: usize) -> Result<Vec<CurlSpace>> {
    grid.patches
        .iter()
        .map(|p| build_curl_space(degree, p.divisions, p.bbox))
        .collect()
}

/// Classification of one vector DOF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofClass {
    Interior,
    /// Interface DOF within a single interface face (carries face id).
    Face(usize),
    /// Interface DOF on the skeleton shared by several faces/subdomains.
    Wirebasket,
    Dirichlet,
}

/// One glued edge of the control graph: a vector DOF shared by all
/// patches listed in `owners`.
#[derive(Debug, Clone)]
pub struct GlobalEdge {
    pub dir: usize,
    pub base: [usize; 3],
    pub class: DofClass,
    /// `(patch, local dof)` pairs, ascending in patch id.
    pub owners: Vec<(usize, usize)>,
}

/// Interface face between two adjacent patches, in vertex-lattice
/// coordinates.
#[derive(Debug, Clone)]
pub struct InterfaceFace {
    pub normal_dir: usize,
    pub plane: usize,
    /// Closed vertex index range per direction (plane repeated in
    /// `normal_dir`).
    pub lo: [usize; 3],
    pub hi: [usize; 3],
    pub patches: (usize, usize),
}

/// Glued control graph with DOF classification.
#[derive(Debug, Clone)]
pub struct Topology {
    pub vertex_dims: [usize; 3],
    pub edges: Vec<GlobalEdge>,
    pub faces: Vec<InterfaceFace>,
    /// Per patch: local dof -> global edge id.
    pub patch_to_global: Vec<Vec<usize>>,
    /// Per patch: lattice offset of local vertex (0,0,0).
    pub patch_offsets: Vec<[usize; 3]>,
}

impl Topology {
    pub fn n_vertices(&self) -> usize {
        self.vertex_dims.iter().product()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertex_id(&self, v: [usize; 3]) -> usize {
        v[0] + self.vertex_dims[0] * (v[1] + self.vertex_dims[1] * v[2])
    }

    pub fn edge_endpoints(&self, e: usize) -> (usize, usize) {
        let edge = &self.edges[e];
        let mut other = edge.base;
        other[edge.dir] += 1;
        (self.vertex_id(edge.base), self.vertex_id(other))
    }

    pub fn class_of(&self, patch: usize, local: usize) -> DofClass {
        self.edges[self.patch_to_global[patch][local]].class
    }
}

/// Classify all DOFs and build the glued control graph.
pub fn build_topology(grid: &PatchGrid, spaces: &[CurlSpace]) -> Result<Topology> {
    assert_eq!(spaces.len(), grid.n_patches());
    let p = spaces[0].degree();
    if spaces.iter().any(|s| s.degree() != p) {
        return Err(Error::Construction("mixed degrees across patches".into()));
    }

    // Lattice extents: per direction, each patch contributes its scalar
    // dimension minus the shared interface plane.
    let per_patch_scalar = [
        grid.divisions[0] / grid.counts[0] + p,
        grid.divisions[1] / grid.counts[1] + p,
        grid.divisions[2] / grid.counts[2] + p,
    ];
    let vertex_dims = [
        grid.counts[0] * (per_patch_scalar[0] - 1) + 1,
        grid.counts[1] * (per_patch_scalar[1] - 1) + 1,
        grid.counts[2] * (per_patch_scalar[2] - 1) + 1,
    ];
    let patch_offsets: Vec<[usize; 3]> = grid
        .patches
        .iter()
        .map(|patch| {
            [
                patch.cell[0] * (per_patch_scalar[0] - 1),
                patch.cell[1] * (per_patch_scalar[1] - 1),
                patch.cell[2] * (per_patch_scalar[2] - 1),
            ]
        })
        .collect();

    // Canonical edge enumeration: direction-major, base lexicographic
    // with x fastest.
    let edge_dims = |d: usize| {
        let mut dims = vertex_dims;
        dims[d] -= 1;
        dims
    };
    let dir_offset: Vec<usize> = {
        let mut acc = 0;
        let mut offs = Vec::with_capacity(3);
        for d in 0..3 {
            offs.push(acc);
            acc += edge_dims(d).iter().product::<usize>();
        }
        offs.push(acc);
        offs
    };
    let n_edges = dir_offset[3];
    let edge_id = |d: usize, base: [usize; 3]| {
        let dims = edge_dims(d);
        dir_offset[d] + base[0] + dims[0] * (base[1] + dims[1] * base[2])
    };

    // Interface faces, enumerated per normal direction then by cell.
    let mut faces = Vec::new();
    for d in 0..3 {
        for kz in 0..grid.counts[2] {
            for ky in 0..grid.counts[1] {
                for kx in 0..grid.counts[0] {
                    let cell = [kx, ky, kz];
                    if cell[d] + 1 >= grid.counts[d] {
                        continue;
                    }
                    let mut ncell = cell;
                    ncell[d] += 1;
                    let a = grid.patch_id(cell);
                    let b = grid.patch_id(ncell);
                    let oa = patch_offsets[a];
                    let mut lo = [0; 3];
                    let mut hi = [0; 3];
                    for e in 0..3 {
                        lo[e] = oa[e];
                        hi[e] = oa[e] + per_patch_scalar[e] - 1;
                    }
                    let plane = oa[d] + per_patch_scalar[d] - 1;
                    lo[d] = plane;
                    hi[d] = plane;
                    faces.push(InterfaceFace { normal_dir: d, plane, lo, hi, patches: (a, b) });
                }
            }
        }
    }

    // Per-vertex count of interface faces containing it (closure).
    let n_vertices: usize = vertex_dims.iter().product();
    let vid = |v: [usize; 3]| v[0] + vertex_dims[0] * (v[1] + vertex_dims[1] * v[2]);
    let mut vertex_face_count = vec![0u16; n_vertices];
    for face in &faces {
        for z in face.lo[2]..=face.hi[2] {
            for y in face.lo[1]..=face.hi[1] {
                for x in face.lo[0]..=face.hi[0] {
                    vertex_face_count[vid([x, y, z])] += 1;
                }
            }
        }
    }

    // Owners: every patch registers its local DOFs on the lattice edges.
    let mut owners: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n_edges];
    let mut patch_to_global: Vec<Vec<usize>> = Vec::with_capacity(grid.n_patches());
    for (s, space) in spaces.iter().enumerate() {
        let off = patch_offsets[s];
        let mut map = vec![usize::MAX; space.total_dofs()];
        for c in 0..3 {
            let dims = space.comp_dims(c);
            for k in 0..dims[2] {
                for j in 0..dims[1] {
                    for i in 0..dims[0] {
                        let local = space.index(c, [i, j, k]);
                        let base = [off[0] + i, off[1] + j, off[2] + k];
                        let e = edge_id(c, base);
                        owners[e].push((s, local));
                        map[local] = e;
                    }
                }
            }
        }
        if map.iter().any(|&e| e == usize::MAX) {
            return Err(Error::Internal("unmapped local DOF".into()));
        }
        patch_to_global.push(map);
    }

    // Classification with precedence Dirichlet > Wirebasket > Face > Interior.
    let mut edges = Vec::with_capacity(n_edges);
    for d in 0..3 {
        let dims = edge_dims(d);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    let base = [i, j, k];
                    let e = edge_id(d, base);
                    debug_assert_eq!(e, edges.len());
                    let own = std::mem::take(&mut owners[e]);
                    if own.is_empty() {
                        return Err(Error::Internal(format!("lattice edge {e} has no owning patch")));
                    }
                    let on_boundary = (0..3).any(|t| {
                        t != d && (base[t] == 0 || base[t] == vertex_dims[t] - 1)
                    });
                    let class = if on_boundary {
                        DofClass::Dirichlet
                    } else if own.len() >= 2 {
                        let mut tip = base;
                        tip[d] += 1;
                        let c0 = vertex_face_count[vid(base)];
                        let c1 = vertex_face_count[vid(tip)];
                        if own.len() >= 3 || (c0 >= 2 && c1 >= 2) {
                            DofClass::Wirebasket
                        } else {
                            let face = faces
                                .iter()
                                .position(|f| {
                                    f.normal_dir != d
                                        && base[f.normal_dir] == f.plane
                                        && (0..3).all(|t| {
                                            let hi = if t == d { base[t] + 1 } else { base[t] };
                                            base[t] >= f.lo[t] && hi <= f.hi[t]
                                        })
                                })
                                .ok_or_else(|| {
                                    Error::Internal("interface edge without containing face".into())
                                })?;
                            DofClass::Face(face)
                        }
                    } else {
                        DofClass::Interior
                    };
                    edges.push(GlobalEdge { dir: d, base, class, owners: own });
                }
            }
        }
    }

    Ok(Topology { vertex_dims, edges, faces, patch_to_global, patch_offsets })
}

impl Topology {
    /// Region of the patch that owns an edge; for interface edges the
    /// lowest-id owner is reported.
    pub fn edge_region(&self, grid: &PatchGrid, e: usize) -> Region {
        grid.patches[self.edges[e].owners[0].0].region
    }

    /// Breadth-first connectivity check over the control graph.
    pub fn is_connected(&self) -> bool {
        let n = self.n_vertices();
        if n == 0 {
            return true;
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in 0..self.n_edges() {
            let (a, b) = self.edge_endpoints(e);
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    count += 1;
                    stack.push(w);
                }
            }
        }
        count == n
    }
}
