//! Neighbour relation between the instances of a scene.
//!
//! Two instances touch when the Chebyshev distance between their pixel sets
//! is at most `touch_radius`, i.e. when one mask dilated by the radius meets
//! the other.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::interchange::{BinaryMask, Scene};

/// Default gap, in pixels, still counted as contact.
pub const DEFAULT_TOUCH_RADIUS: u32 = 2;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("unknown instance id {0}")]
    UnknownInstance(u64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    touch_radius: u32,
    nodes: Vec<u64>,
    /// Unordered pairs stored as (smaller, larger).
    edges: BTreeSet<(u64, u64)>,
    adjacency: BTreeMap<u64, Vec<u64>>,
}

impl AdjacencyGraph {
    /// Builds a graph from explicit nodes and edges. Self-loops are dropped;
    /// edges naming unknown nodes are rejected.
    pub fn from_edges(
        nodes: impl IntoIterator<Item = u64>,
        edges: impl IntoIterator<Item = (u64, u64)>,
        touch_radius: u32,
    ) -> Result<Self, GraphError> {
        let mut adjacency: BTreeMap<u64, Vec<u64>> =
            nodes.into_iter().map(|n| (n, Vec::new())).collect();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            for id in [a, b] {
                if !adjacency.contains_key(&id) {
                    return Err(GraphError::UnknownInstance(id));
                }
            }
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
        for &(a, b) in &set {
            adjacency.get_mut(&a).unwrap().push(b);
            adjacency.get_mut(&b).unwrap().push(a);
        }
        for list in adjacency.values_mut() {
            list.sort_unstable();
        }
        Ok(Self {
            touch_radius,
            nodes: adjacency.keys().copied().collect(),
            edges: set,
            adjacency,
        })
    }

    pub fn touch_radius(&self) -> u32 {
        self.touch_radius
    }

    /// Node ids in ascending order.
    pub fn nodes(&self) -> &[u64] {
        &self.nodes
    }

    pub fn edges(&self) -> &BTreeSet<(u64, u64)> {
        &self.edges
    }

    pub fn contains(&self, id: u64) -> bool {
        self.adjacency.contains_key(&id)
    }

    /// Sorted ids sharing an edge with `id`.
    pub fn neighbors(&self, id: u64) -> Result<&[u64], GraphError> {
        self.adjacency
            .get(&id)
            .map(Vec::as_slice)
            .ok_or(GraphError::UnknownInstance(id))
    }

    pub fn has_edge(&self, a: u64, b: u64) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    /// Edge list as JSON: `{"edges":[[a,b],...],"nodes":[...],"touch_radius":r}`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Dump<'a> {
            edges: Vec<[u64; 2]>,
            nodes: &'a [u64],
            touch_radius: u32,
        }
        let dump = Dump {
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
            nodes: &self.nodes,
            touch_radius: self.touch_radius,
        };
        serde_json::to_string(&dump).expect("graph dump serializes")
    }
}

/// True when some pixel of `b` lies within Chebyshev distance `radius` of a pixel of `a`.
pub fn masks_touch(a: &BinaryMask, b: &BinaryMask, radius: u32) -> bool {
    let reach = a.bbox().expand(radius, a.width(), a.height());
    let Some(window) = reach.intersect(&b.bbox()) else {
        return false;
    };
    let r = radius as i64;
    for y in window.y_min..=window.y_max {
        for x in window.x_min..=window.x_max {
            if !b.get(x, y) {
                continue;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    if a.get_signed(x as i64 + dx, y as i64 + dy) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Connects every pair of instances whose masks touch within `touch_radius`.
pub fn build_adjacency(scene: &Scene, touch_radius: u32) -> AdjacencyGraph {
    let inst = scene.instances();
    let mut edges = Vec::new();
    for (i, a) in inst.iter().enumerate() {
        for b in &inst[i + 1..] {
            if masks_touch(&a.mask, &b.mask, touch_radius) {
                edges.push((a.id, b.id));
            }
        }
    }
    AdjacencyGraph::from_edges(inst.iter().map(|i| i.id), edges, touch_radius)
        .expect("edges come from scene instances")
}
