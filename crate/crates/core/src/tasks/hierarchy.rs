//! Concept taxonomies whose leaves carry image embeddings.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Tensor;

pub const EMBEDDINGS_PER_LEAF: usize = 10;
pub const HIERARCHY_FORMAT: &str = "hier-v1";

#[derive(Clone, Debug, PartialEq)]
pub struct HierNode {
    pub name: String,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    pub depth: usize,
}

/// Rooted tree of concepts. Node indices double as one-hot positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Hierarchy {
    nodes: Vec<HierNode>,
    root: usize,
    embedding_dim: usize,
    /// Candidate examples: `(leaf node, image index)`, leaf-major.
    candidates: Vec<(usize, usize)>,
    /// One row per candidate.
    features: Tensor,
}

impl Hierarchy {
    /// Builds a hierarchy from `(name, parent)` pairs and per-leaf embeddings
    /// (`leaf node index -> 10 vectors`). Validates every tree invariant.
    pub fn new(
        nodes: Vec<(String, Option<usize>)>,
        embeddings: &HashMap<usize, Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::invalid("hierarchy has no nodes"));
        }
        let mut children = vec![Vec::new(); n];
        let mut root = None;
        for (i, (name, parent)) in nodes.iter().enumerate() {
            match parent {
                None if root.is_some() => {
                    return Err(Error::invalid(format!("second root `{name}`")))
                }
                None => root = Some(i),
                Some(p) if *p >= n || *p == i => {
                    return Err(Error::invalid(format!("node `{name}` has bad parent {p}")))
                }
                Some(p) => children[*p].push(i),
            }
        }
        let root = root.ok_or_else(|| Error::invalid("hierarchy has no root"))?;

        // depths via BFS; also detects cycles / disconnected nodes
        let mut depth = vec![usize::MAX; n];
        depth[root] = 0;
        let mut queue = vec![root];
        while let Some(v) = queue.pop() {
            for &c in &children[v] {
                depth[c] = depth[v] + 1;
                queue.push(c);
            }
        }
        if let Some(i) = depth.iter().position(|&d| d == usize::MAX) {
            return Err(Error::invalid(format!(
                "node `{}` is not reachable from the root",
                nodes[i].0
            )));
        }
        for (i, ch) in children.iter().enumerate() {
            if ch.len() == 1 {
                return Err(Error::invalid(format!(
                    "interior node `{}` has a single child",
                    nodes[i].0
                )));
            }
        }

        let mut dim = None;
        let mut candidates = Vec::new();
        let mut rows = Vec::new();
        for leaf in (0..n).filter(|&i| children[i].is_empty()) {
            let embs = embeddings.get(&leaf).ok_or_else(|| {
                Error::invalid(format!("leaf `{}` has no embeddings", nodes[leaf].0))
            })?;
            if embs.len() != EMBEDDINGS_PER_LEAF {
                return Err(Error::invalid(format!(
                    "leaf `{}` has {} embeddings, expected {EMBEDDINGS_PER_LEAF}",
                    nodes[leaf].0,
                    embs.len()
                )));
            }
            for (j, e) in embs.iter().enumerate() {
                let d = *dim.get_or_insert(e.len());
                if e.len() != d || d == 0 {
                    return Err(Error::Dimension {
                        what: "embedding",
                        expected: d,
                        actual: e.len(),
                    });
                }
                candidates.push((leaf, j));
                rows.push(e.clone());
            }
        }
        if let Some(extra) = embeddings.keys().find(|&&k| k >= n || !children[k].is_empty()) {
            return Err(Error::invalid(format!(
                "embeddings given for non-leaf node {extra}"
            )));
        }
        let features = Tensor::from_rows(&rows)?;
        let nodes = nodes
            .into_iter()
            .enumerate()
            .map(|(i, (name, parent))| HierNode {
                name,
                parent,
                children: std::mem::take(&mut children[i]),
                depth: depth[i],
            })
            .collect();
        Ok(Hierarchy {
            nodes,
            root,
            embedding_dim: dim.unwrap_or(0),
            candidates,
            features,
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn node(&self, i: usize) -> &HierNode {
        &self.nodes[i]
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedding_dim
    }

    pub fn find(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name == name)
    }

    pub fn is_leaf(&self, i: usize) -> bool {
        self.nodes[i].children.is_empty()
    }

    pub fn leaves(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| self.is_leaf(i)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.is_leaf(i)).collect()
    }

    fn check(&self, i: usize) -> Result<()> {
        if i < self.nodes.len() {
            Ok(())
        } else {
            Err(Error::invalid(format!("unknown node {i}")))
        }
    }

    /// Deepest common ancestor of `a` and `b` (a node is its own ancestor).
    pub fn lca(&self, a: usize, b: usize) -> Result<usize> {
        self.check(a)?;
        self.check(b)?;
        let (mut a, mut b) = (a, b);
        while self.nodes[a].depth > self.nodes[b].depth {
            a = self.nodes[a].parent.expect("non-root");
        }
        while self.nodes[b].depth > self.nodes[a].depth {
            b = self.nodes[b].parent.expect("non-root");
        }
        while a != b {
            a = self.nodes[a].parent.expect("non-root");
            b = self.nodes[b].parent.expect("non-root");
        }
        Ok(a)
    }

    pub fn is_ancestor(&self, ancestor: usize, node: usize) -> bool {
        let mut cur = Some(node);
        while let Some(c) = cur {
            if c == ancestor {
                return true;
            }
            cur = self.nodes[c].parent;
        }
        false
    }

    pub fn descendant_leaves(&self, i: usize) -> Vec<usize> {
        self.leaves()
            .into_iter()
            .filter(|&l| self.is_ancestor(i, l))
            .collect()
    }

    pub fn candidate_count(&self) -> usize {
        self.candidates.len()
    }

    /// `(leaf, image index)` for a candidate example.
    pub fn candidate(&self, idx: usize) -> (usize, usize) {
        self.candidates[idx]
    }

    /// Candidates that are examples of concept `node`.
    pub fn consistent_candidates(&self, node: usize) -> Vec<usize> {
        (0..self.candidates.len())
            .filter(|&c| self.is_ancestor(node, self.candidates[c].0))
            .collect()
    }

    /// `candidate_count x embedding_dim` embedding matrix.
    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn embedding(&self, leaf: usize, image: usize) -> Option<&[f64]> {
        self.candidates
            .iter()
            .position(|&c| c == (leaf, image))
            .map(|i| self.features.row(i))
    }
}

/// Lowest common ancestor.
pub fn lca(h: &Hierarchy, a: usize, b: usize) -> Result<usize> {
    h.lca(a, b)
}

/// Complete tree with `depth` levels (root included) and uniform branching.
pub fn build_synthetic_hierarchy<R: Rng + ?Sized>(
    depth: usize,
    branching: usize,
    embedding_dim: usize,
    rng: &mut R,
) -> Result<Hierarchy> {
    if depth < 2 || branching < 2 {
        return Err(Error::invalid(format!(
            "need depth >= 2 and branching >= 2, got {depth}/{branching}"
        )));
    }
    build_synthetic_hierarchy_levels(&vec![branching; depth - 1], embedding_dim, rng)
}

/// Tree whose level `i` nodes each have `branching[i]` children. Every node
/// gets a latent vector = parent latent + Gaussian step whose scale halves at
/// each level; leaf embeddings are noisy (sigma 0.1) copies of the leaf
/// latent, unit-normalised.
pub fn build_synthetic_hierarchy_levels<R: Rng + ?Sized>(
    branching: &[usize],
    embedding_dim: usize,
    rng: &mut R,
) -> Result<Hierarchy> {
    if branching.is_empty() || branching.iter().any(|&b| b < 2) || embedding_dim == 0 {
        return Err(Error::invalid(format!(
            "bad synthetic hierarchy shape {branching:?} / dim {embedding_dim}"
        )));
    }
    let gauss = |rng: &mut R, sigma: f64| -> Vec<f64> {
        let d = Normal::new(0.0, sigma).expect("positive sigma");
        (0..embedding_dim).map(|_| d.sample(rng)).collect()
    };
    let mut nodes: Vec<(String, Option<usize>)> = vec![("n".to_string(), None)];
    let mut latents = vec![gauss(rng, 1.0)];
    let mut frontier = vec![0usize];
    let mut sigma = 1.0;
    for &b in branching {
        let mut next = Vec::new();
        for &p in &frontier {
            for k in 0..b {
                let step = gauss(rng, sigma);
                let latent: Vec<f64> = latents[p].iter().zip(step).map(|(a, s)| a + s).collect();
                nodes.push((format!("{}.{k}", nodes[p].0), Some(p)));
                latents.push(latent);
                next.push(nodes.len() - 1);
            }
        }
        frontier = next;
        sigma /= 2.0;
    }
    let mut embeddings = HashMap::new();
    for &leaf in &frontier {
        let embs = (0..EMBEDDINGS_PER_LEAF)
            .map(|_| {
                let noise = gauss(rng, 0.1);
                let v: Vec<f64> = latents[leaf].iter().zip(noise).map(|(a, e)| a + e).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x / norm).collect()
            })
            .collect();
        embeddings.insert(leaf, embs);
    }
    Hierarchy::new(nodes, &embeddings)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestNode {
    pub id: u64,
    pub name: String,
    pub parent: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestLeaf {
    pub id: u64,
    pub embedding_file: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HierarchyManifest {
    pub version: String,
    pub nodes: Vec<ManifestNode>,
    pub leaves: Vec<ManifestLeaf>,
}

/// Loads a `hier-v1` manifest. Embedding files are little-endian `f32`
/// arrays of `10 x dim`; relative paths resolve against the manifest's
/// directory.
pub fn load_embedding_hierarchy(manifest_path: &Path) -> Result<Hierarchy> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let manifest: HierarchyManifest = serde_json::from_str(&text)
        .map_err(|e| Error::data(manifest_path, format!("bad manifest: {e}")))?;
    if manifest.version != HIERARCHY_FORMAT {
        return Err(Error::data(
            manifest_path,
            format!("unsupported version `{}`", manifest.version),
        ));
    }
    let index: HashMap<u64, usize> = manifest
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.id, i))
        .collect();
    if index.len() != manifest.nodes.len() {
        return Err(Error::data(manifest_path, "duplicate node ids"));
    }
    let mut nodes = Vec::with_capacity(manifest.nodes.len());
    for n in &manifest.nodes {
        let parent = match n.parent {
            None => None,
            Some(p) => Some(*index.get(&p).ok_or_else(|| {
                Error::data(manifest_path, format!("node {} has unknown parent {p}", n.id))
            })?),
        };
        nodes.push((n.name.clone(), parent));
    }
    let base = manifest_path.parent().unwrap_or_else(|| Path::new(""));
    let mut embeddings = HashMap::new();
    let mut dim: Option<usize> = None;
    for leaf in &manifest.leaves {
        let &node = index.get(&leaf.id).ok_or_else(|| {
            Error::data(manifest_path, format!("leaf entry for unknown node {}", leaf.id))
        })?;
        let path = base.join(&leaf.embedding_file);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() % 4 != 0 {
            return Err(Error::data(&path, format!("{} bytes is not a whole number of f32", bytes.len())));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        let this_dim = match dim {
            Some(d) => d,
            None => {
                if floats.is_empty() || floats.len() % EMBEDDINGS_PER_LEAF != 0 {
                    return Err(Error::data(
                        &path,
                        format!(
                            "expected {EMBEDDINGS_PER_LEAF} embeddings, got {} values",
                            floats.len()
                        ),
                    ));
                }
                *dim.insert(floats.len() / EMBEDDINGS_PER_LEAF)
            }
        };
        if floats.len() != EMBEDDINGS_PER_LEAF * this_dim {
            let actual = floats.len() as f64 / this_dim as f64;
            return Err(Error::data(
                &path,
                format!(
                    "expected {EMBEDDINGS_PER_LEAF} x {this_dim} values, got {} ({actual:.2} embeddings)",
                    floats.len()
                ),
            ));
        }
        embeddings.insert(
            node,
            floats.chunks(this_dim).map(<[f64]>::to_vec).collect::<Vec<_>>(),
        );
    }
    Hierarchy::new(nodes, &embeddings).map_err(|e| Error::data(manifest_path, e.to_string()))
}

/// Writes `hierarchy.json` plus one embedding file per leaf into `dir`.
pub fn export_embedding_hierarchy(h: &Hierarchy, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let nodes = h
        .nodes
        .iter()
        .enumerate()
        .map(|(i, n)| ManifestNode {
            id: i as u64,
            name: n.name.clone(),
            parent: n.parent.map(|p| p as u64),
        })
        .collect();
    let mut leaves = Vec::new();
    for leaf in h.leaves() {
        let file = format!("leaf_{leaf}.f32");
        let mut bytes = Vec::new();
        for img in 0..EMBEDDINGS_PER_LEAF {
            for &v in h.embedding(leaf, img).expect("leaf has embeddings") {
                bytes.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        leaves.push(ManifestLeaf {
            id: leaf as u64,
            embedding_file: file,
        });
    }
    let manifest = HierarchyManifest {
        version: HIERARCHY_FORMAT.to_string(),
        nodes,
        leaves,
    };
    let path = dir.join("hierarchy.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
