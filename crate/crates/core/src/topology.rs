//! Network topologies: construction, hop structure, spanning trees, and
//! clique-cell decompositions.
//!
//! Agents carry 1-based ids `1..=m` throughout the public API. Graphs are
//! undirected, connected, and free of self-loops and duplicate edges; every
//! constructor validates this.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::rng::{self, stream};
use crate::{Error, Result};

/// Named graph families the generator understands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    FullyConnected,
    Star,
    Line,
    Cycle,
    Random,
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            TopologyKind::FullyConnected => "fully_connected",
            TopologyKind::Star => "star",
            TopologyKind::Line => "line",
            TopologyKind::Cycle => "cycle",
            TopologyKind::Random => "random",
        };
        f.write_str(name)
    }
}

impl FromStr for TopologyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fully_connected" => Ok(TopologyKind::FullyConnected),
            "star" => Ok(TopologyKind::Star),
            "line" => Ok(TopologyKind::Line),
            "cycle" => Ok(TopologyKind::Cycle),
            "random" => Ok(TopologyKind::Random),
            other => Err(Error::InvalidInput(format!(
                "unknown topology kind '{other}'"
            ))),
        }
    }
}

/// An undirected, connected communication graph over agents `1..=m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkTopology {
    agent_count: usize,
    /// Normalized edge list: each `(i, j)` has `i < j`, sorted ascending.
    edges: Vec<(usize, usize)>,
    /// Adjacency per agent (index `id - 1`), each list ascending.
    neighbours: Vec<Vec<usize>>,
}

#[inline]
fn ix(agent: usize) -> usize {
    agent - 1
}

impl NetworkTopology {
    /// Builds a topology from an explicit edge list over agents `1..=m`,
    /// validating ids, self-loops, duplicates, and connectivity.
    pub fn new(agent_count: usize, raw_edges: &[(usize, usize)]) -> Result<Self> {
        if agent_count == 0 {
            return Err(Error::InvalidSize("a network needs at least one agent".into()));
        }
        let mut edges = BTreeSet::new();
        for &(a, b) in raw_edges {
            if a == 0 || b == 0 || a > agent_count || b > agent_count {
                return Err(Error::InvalidGraph(format!(
                    "edge {a}-{b} refers to an agent outside 1..={agent_count}"
                )));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at agent {a}")));
            }
            let edge = (a.min(b), a.max(b));
            if !edges.insert(edge) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge {}-{}",
                    edge.0, edge.1
                )));
            }
        }
        let edges: Vec<(usize, usize)> = edges.into_iter().collect();
        let mut neighbours = vec![Vec::new(); agent_count];
        for &(a, b) in &edges {
            neighbours[ix(a)].push(b);
            neighbours[ix(b)].push(a);
        }
        for list in &mut neighbours {
            list.sort_unstable();
        }
        let topo = NetworkTopology {
            agent_count,
            edges,
            neighbours,
        };
        if !topo.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(topo)
    }

    /// Number of agents `m`.
    pub fn agent_count(&self) -> usize {
        self.agent_count
    }

    /// Normalized edge list: `(i, j)` with `i < j`, ascending.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Neighbours of `agent`, ascending.
    pub fn neighbours(&self, agent: usize) -> &[usize] {
        &self.neighbours[ix(agent)]
    }

    /// Degree of `agent`.
    pub fn degree(&self, agent: usize) -> usize {
        self.neighbours[ix(agent)].len()
    }

    /// Whether `a` and `b` are joined by an edge.
    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbours[ix(a)].binary_search(&b).is_ok()
    }

    /// Position of `neighbour` within `agent`'s ascending neighbour list.
    /// This ordering fixes every block layout in the exchange protocol.
    pub fn neighbour_position(&self, agent: usize, neighbour: usize) -> Option<usize> {
        self.neighbours[ix(agent)].binary_search(&neighbour).ok()
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.agent_count];
        let mut queue = vec![1usize];
        seen[0] = true;
        let mut reached = 1;
        while let Some(a) = queue.pop() {
            for &b in self.neighbours(a) {
                if !seen[ix(b)] {
                    seen[ix(b)] = true;
                    reached += 1;
                    queue.push(b);
                }
            }
        }
        reached == self.agent_count
    }

    /// True iff the graph has no cycles; with connectivity guaranteed, this
    /// is exactly `|edges| = m - 1`.
    pub fn is_tree(&self) -> bool {
        self.edges.len() == self.agent_count - 1
    }

    /// Shortest-path hop structure from every agent.
    pub fn hop_structure(&self) -> HopStructure {
        let m = self.agent_count;
        let mut distance = vec![vec![usize::MAX; m]; m];
        let mut layers = Vec::with_capacity(m);
        let mut eccentricity = vec![0usize; m];
        for a in 1..=m {
            let dist = &mut distance[ix(a)];
            dist[ix(a)] = 0;
            let mut frontier = vec![a];
            let mut k = 0;
            let mut agent_layers = vec![vec![a]];
            while !frontier.is_empty() {
                k += 1;
                let mut next = Vec::new();
                for &u in &frontier {
                    for &v in self.neighbours(u) {
                        if dist[ix(v)] == usize::MAX {
                            dist[ix(v)] = k;
                            next.push(v);
                        }
                    }
                }
                next.sort_unstable();
                next.dedup();
                if next.is_empty() {
                    break;
                }
                agent_layers.push(next.clone());
                frontier = next;
            }
            eccentricity[ix(a)] = agent_layers.len() - 1;
            layers.push(agent_layers);
        }
        HopStructure {
            distance,
            layers,
            eccentricity,
        }
    }

    /// Deterministic spanning tree: breadth-first search rooted at the
    /// maximum-degree agent (ties broken toward the lowest id), expanding
    /// neighbours in ascending id order and keeping only tree edges.
    pub fn spanning_tree(&self) -> NetworkTopology {
        let root = (1..=self.agent_count)
            .max_by(|&a, &b| {
                self.degree(a)
                    .cmp(&self.degree(b))
                    .then(b.cmp(&a)) // prefer the lower id on equal degree
            })
            .expect("at least one agent");
        let mut seen = vec![false; self.agent_count];
        seen[ix(root)] = true;
        let mut queue = std::collections::VecDeque::from([root]);
        let mut tree_edges = Vec::with_capacity(self.agent_count.saturating_sub(1));
        while let Some(a) = queue.pop_front() {
            for &b in self.neighbours(a) {
                if !seen[ix(b)] {
                    seen[ix(b)] = true;
                    tree_edges.push((a.min(b), a.max(b)));
                    queue.push_back(b);
                }
            }
        }
        NetworkTopology::new(self.agent_count, &tree_edges)
            .expect("BFS tree over a connected graph is valid")
    }

    /// Decomposes the graph into cells: maximal cliques glued tree-fashion at
    /// single shared agents.
    ///
    /// Validity is the junction-tree sense of "the cells form a tree": every
    /// pair of cells shares at most one agent and the agent–cell incidence
    /// graph is acyclic, which together single out graphs whose every
    /// biconnected piece is a clique. Trees (cells = edges) and complete
    /// graphs (one cell) always pass; any chordless cycle of four or more
    /// agents fails.
    pub fn cell_decomposition(&self) -> Result<CellDecomposition> {
        let cells = self.maximal_cliques();
        for cell in &cells {
            if cell.len() < 2 {
                return Err(Error::NotACellTree(format!(
                    "agent {} belongs to no clique of size 2 or more",
                    cell[0]
                )));
            }
        }
        for (a, ca) in cells.iter().enumerate() {
            for cb in cells.iter().skip(a + 1) {
                let shared: Vec<usize> =
                    ca.iter().filter(|x| cb.binary_search(x).is_ok()).copied().collect();
                if shared.len() > 1 {
                    return Err(Error::NotACellTree(format!(
                        "cells {ca:?} and {cb:?} share {} agents",
                        shared.len()
                    )));
                }
            }
        }
        // Incidence count: a connected, loop-free gluing of cells at single
        // agents merges |cell| - 1 agents per cell, so a tree of cells has
        // exactly m - 1 merges in total. More merges means the cells close a
        // chain somewhere (e.g. the four 2-cliques of a 4-cycle).
        let merges: usize = cells.iter().map(|c| c.len() - 1).sum();
        if merges != self.agent_count - 1 {
            return Err(Error::NotACellTree(format!(
                "{} cells over {} agents close a chain: the cell graph is not a tree",
                cells.len(),
                self.agent_count
            )));
        }
        let mut membership = vec![Vec::new(); self.agent_count];
        for (index, cell) in cells.iter().enumerate() {
            for &agent in cell {
                membership[ix(agent)].push(index);
            }
        }
        for (slot, cell_ids) in membership.iter().enumerate() {
            if cell_ids.is_empty() {
                return Err(Error::NotACellTree(format!(
                    "agent {} belongs to no cell",
                    slot + 1
                )));
            }
        }
        Ok(CellDecomposition { cells, membership })
    }

    /// All maximal cliques, each ascending, the list in lexicographic order.
    fn maximal_cliques(&self) -> Vec<Vec<usize>> {
        let mut cliques = Vec::new();
        let all: Vec<usize> = (1..=self.agent_count).collect();
        self.bron_kerbosch(&mut Vec::new(), all, Vec::new(), &mut cliques);
        cliques.sort();
        cliques
    }

    fn bron_kerbosch(
        &self,
        current: &mut Vec<usize>,
        mut candidates: Vec<usize>,
        mut excluded: Vec<usize>,
        out: &mut Vec<Vec<usize>>,
    ) {
        if candidates.is_empty() && excluded.is_empty() {
            out.push(current.clone());
            return;
        }
        while let Some(v) = candidates.first().copied() {
            let next_candidates: Vec<usize> = candidates
                .iter()
                .filter(|&&u| self.has_edge(u, v))
                .copied()
                .collect();
            let next_excluded: Vec<usize> = excluded
                .iter()
                .filter(|&&u| self.has_edge(u, v))
                .copied()
                .collect();
            current.push(v);
            self.bron_kerbosch(current, next_candidates, next_excluded, out);
            current.pop();
            candidates.retain(|&u| u != v);
            excluded.push(v);
        }
    }

    /// Renders the edge list as text, one `i j` pair per line, ascending.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for &(a, b) in &self.edges {
            out.push_str(&format!("{a} {b}\n"));
        }
        out
    }

    /// Parses an edge-list text (one `i j` pair per line; blank lines and
    /// `#` comments ignored). The agent count is the largest id mentioned.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_id = 0usize;
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let a = parts
                .next()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| {
                    Error::MalformedFile(format!("line {}: expected 'i j'", line_no + 1))
                })?;
            let b = parts
                .next()
                .and_then(|t| t.parse::<usize>().ok())
                .ok_or_else(|| {
                    Error::MalformedFile(format!("line {}: expected 'i j'", line_no + 1))
                })?;
            if parts.next().is_some() {
                return Err(Error::MalformedFile(format!(
                    "line {}: trailing tokens after 'i j'",
                    line_no + 1
                )));
            }
            max_id = max_id.max(a).max(b);
            edges.push((a, b));
        }
        if edges.is_empty() {
            return Err(Error::MalformedFile("edge list is empty".into()));
        }
        NetworkTopology::new(max_id, &edges)
    }
}

impl Serialize for NetworkTopology {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            agent_count: usize,
            edges: &'a [(usize, usize)],
        }
        Repr {
            agent_count: self.agent_count,
            edges: &self.edges,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for NetworkTopology {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Repr {
            agent_count: usize,
            edges: Vec<(usize, usize)>,
        }
        let repr = Repr::deserialize(deserializer)?;
        NetworkTopology::new(repr.agent_count, &repr.edges).map_err(serde::de::Error::custom)
    }
}

/// Builds one of the named graph families over `m` agents. A seed is
/// required for (and only used by) the random family.
pub fn make_topology(kind: TopologyKind, m: usize, seed: Option<u64>) -> Result<NetworkTopology> {
    if m < 2 {
        return Err(Error::InvalidSize(format!(
            "{kind} topology needs at least 2 agents, got {m}"
        )));
    }
    match kind {
        TopologyKind::FullyConnected => {
            let mut edges = Vec::new();
            for a in 1..=m {
                for b in (a + 1)..=m {
                    edges.push((a, b));
                }
            }
            NetworkTopology::new(m, &edges)
        }
        TopologyKind::Star => {
            let edges: Vec<(usize, usize)> = (2..=m).map(|b| (1, b)).collect();
            NetworkTopology::new(m, &edges)
        }
        TopologyKind::Line => {
            let edges: Vec<(usize, usize)> = (1..m).map(|a| (a, a + 1)).collect();
            NetworkTopology::new(m, &edges)
        }
        TopologyKind::Cycle => {
            if m < 3 {
                return Err(Error::InvalidSize(format!(
                    "cycle topology needs at least 3 agents, got {m}"
                )));
            }
            let mut edges: Vec<(usize, usize)> = (1..m).map(|a| (a, a + 1)).collect();
            edges.push((1, m));
            NetworkTopology::new(m, &edges)
        }
        TopologyKind::Random => {
            let seed = seed.ok_or_else(|| {
                Error::InvalidInput("random topology requires a seed".into())
            })?;
            random_topology(m, seed)
        }
    }
}

/// Random connected graph: each agent gets a target degree uniform on
/// [2, min(10, m-1)] (clamped for tiny m), realized by a randomized pairing
/// that avoids duplicates and self-loops, then patched with a minimal set of
/// edges to force connectivity.
fn random_topology(m: usize, seed: u64) -> Result<NetworkTopology> {
    use rand::seq::SliceRandom;
    use rand::Rng;

    const ATTEMPTS: u64 = 100;
    let lo = 2.min(m - 1);
    let hi = 10.min(m - 1);
    for attempt in 0..ATTEMPTS {
        let mut rng = rng::substream(seed, &[stream::TOPOLOGY, attempt]);
        let mut capacity: Vec<usize> = (0..m).map(|_| rng.random_range(lo..=hi)).collect();
        let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(m * (m - 1) / 2);
        for a in 1..=m {
            for b in (a + 1)..=m {
                pairs.push((a, b));
            }
        }
        pairs.shuffle(&mut rng);
        let mut edges = Vec::new();
        for (a, b) in pairs {
            if capacity[ix(a)] > 0 && capacity[ix(b)] > 0 {
                capacity[ix(a)] -= 1;
                capacity[ix(b)] -= 1;
                edges.push((a, b));
            }
        }
        // Patch disconnected components together through their lowest ids.
        let mut component = vec![usize::MAX; m];
        let mut adjacency = vec![Vec::new(); m];
        for &(a, b) in &edges {
            adjacency[ix(a)].push(b);
            adjacency[ix(b)].push(a);
        }
        let mut roots = Vec::new();
        for start in 1..=m {
            if component[ix(start)] != usize::MAX {
                continue;
            }
            let label = roots.len();
            roots.push(start);
            let mut stack = vec![start];
            component[ix(start)] = label;
            while let Some(u) = stack.pop() {
                for &v in &adjacency[ix(u)] {
                    if component[ix(v)] == usize::MAX {
                        component[ix(v)] = label;
                        stack.push(v);
                    }
                }
            }
        }
        for window in roots.windows(2) {
            edges.push((window[0].min(window[1]), window[0].max(window[1])));
        }
        match NetworkTopology::new(m, &edges) {
            Ok(topo) => return Ok(topo),
            Err(_) => continue,
        }
    }
    Err(Error::GenerationFailure(format!(
        "no valid random graph over {m} agents after {ATTEMPTS} attempts"
    )))
}

/// Shortest-path distances and exact-k-hop neighbourhoods for every agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopStructure {
    /// `distance[i-1][j-1]` = shortest-path hops between agents i and j.
    distance: Vec<Vec<usize>>,
    /// `layers[i-1][k]` = agents at distance exactly k from agent i
    /// (ascending); layer 0 is `{i}` itself.
    layers: Vec<Vec<Vec<usize>>>,
    eccentricity: Vec<usize>,
}

impl HopStructure {
    pub fn agent_count(&self) -> usize {
        self.distance.len()
    }

    /// Agents at distance exactly `k` from `agent` (ascending); empty beyond
    /// the agent's eccentricity. Layer 0 is the agent itself.
    pub fn layer(&self, agent: usize, k: usize) -> &[usize] {
        self.layers[ix(agent)]
            .get(k)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Largest hop distance from `agent` to anyone.
    pub fn eccentricity(&self, agent: usize) -> usize {
        self.eccentricity[ix(agent)]
    }

    /// Largest eccentricity over all agents (the graph diameter).
    pub fn max_eccentricity(&self) -> usize {
        self.eccentricity.iter().copied().max().unwrap_or(0)
    }

    /// Shortest-path distance between two agents.
    pub fn distance(&self, a: usize, b: usize) -> usize {
        self.distance[ix(a)][ix(b)]
    }
}

/// A valid tree-of-cliques decomposition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellDecomposition {
    /// Each cell as an ascending agent list; cells in lexicographic order.
    cells: Vec<Vec<usize>>,
    /// `membership[i-1]` = indices into `cells` containing agent i.
    membership: Vec<Vec<usize>>,
}

impl CellDecomposition {
    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    /// Cells containing `agent`, as indices into [`Self::cells`].
    pub fn cells_of(&self, agent: usize) -> &[usize] {
        &self.membership[ix(agent)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn topo(kind: TopologyKind, m: usize) -> NetworkTopology {
        make_topology(kind, m, Some(7)).unwrap()
    }

    #[test]
    fn line_four_has_the_path_edges() {
        let t = topo(TopologyKind::Line, 4);
        assert_eq!(t.edges(), &[(1, 2), (2, 3), (3, 4)]);
    }

    #[test]
    fn star_twenty_has_hub_degree_nineteen() {
        let t = topo(TopologyKind::Star, 20);
        assert_eq!(t.degree(1), 19);
        for leaf in 2..=20 {
            assert_eq!(t.degree(leaf), 1, "leaf {leaf} should touch only the hub");
        }
    }

    #[test]
    fn cycle_four_closes_the_ring() {
        let t = topo(TopologyKind::Cycle, 4);
        assert_eq!(t.edges(), &[(1, 2), (1, 4), (2, 3), (3, 4)]);
    }

    #[test]
    fn cycle_needs_three_agents() {
        assert!(matches!(
            make_topology(TopologyKind::Cycle, 2, None),
            Err(Error::InvalidSize(_))
        ));
    }

    #[test]
    fn tiny_sizes_are_rejected() {
        for kind in [
            TopologyKind::FullyConnected,
            TopologyKind::Star,
            TopologyKind::Line,
            TopologyKind::Cycle,
        ] {
            assert!(matches!(
                make_topology(kind, 1, None),
                Err(Error::InvalidSize(_))
            ));
        }
    }

    #[test]
    fn random_without_seed_is_an_error() {
        assert!(make_topology(TopologyKind::Random, 5, None).is_err());
    }

    #[test]
    fn constructor_rejects_bad_edge_lists() {
        assert!(NetworkTopology::new(3, &[(1, 1)]).is_err(), "self-loop");
        assert!(
            NetworkTopology::new(3, &[(1, 2), (2, 1), (2, 3)]).is_err(),
            "duplicate under normalization"
        );
        assert!(NetworkTopology::new(3, &[(1, 4)]).is_err(), "id out of range");
        assert!(
            NetworkTopology::new(4, &[(1, 2), (3, 4)]).is_err(),
            "disconnected"
        );
    }

    #[test]
    fn hop_layers_on_the_line() {
        let h = topo(TopologyKind::Line, 4).hop_structure();
        assert_eq!(h.layer(1, 1), &[2]);
        assert_eq!(h.layer(1, 2), &[3]);
        assert_eq!(h.layer(1, 3), &[4]);
        assert_eq!(h.eccentricity(1), 3);
    }

    #[test]
    fn hop_layers_on_the_star() {
        let h = topo(TopologyKind::Star, 20).hop_structure();
        let expected: Vec<usize> = (2..=20).collect();
        assert_eq!(h.layer(1, 1), expected.as_slice());
        assert_eq!(h.eccentricity(1), 1);
        assert_eq!(h.eccentricity(2), 2);
    }

    #[test]
    fn hop_layers_on_the_cycle() {
        let h = topo(TopologyKind::Cycle, 4).hop_structure();
        assert_eq!(h.layer(1, 1), &[2, 4]);
        assert_eq!(h.layer(1, 2), &[3]);
        assert_eq!(h.eccentricity(1), 2);
    }

    #[test]
    fn tree_recognition() {
        assert!(topo(TopologyKind::Line, 4).is_tree());
        assert!(topo(TopologyKind::Star, 20).is_tree());
        assert!(!topo(TopologyKind::Cycle, 4).is_tree());
        assert!(!topo(TopologyKind::FullyConnected, 4).is_tree());
    }

    #[test]
    fn spanning_tree_fixes_trees() {
        let t = topo(TopologyKind::Line, 5);
        assert_eq!(t.spanning_tree(), t);
    }

    #[test]
    fn spanning_tree_of_the_cycle_is_the_documented_bfs_tree() {
        let spt = topo(TopologyKind::Cycle, 4).spanning_tree();
        assert_eq!(spt.edges(), &[(1, 2), (1, 4), (2, 3)]);
    }

    #[test]
    fn spanning_tree_of_the_triangle_roots_at_agent_one() {
        let spt = topo(TopologyKind::FullyConnected, 3).spanning_tree();
        assert_eq!(spt.edges(), &[(1, 2), (1, 3)]);
    }

    #[test]
    fn cells_of_a_complete_graph_form_one_clique() {
        let cells = topo(TopologyKind::FullyConnected, 3).cell_decomposition().unwrap();
        assert_eq!(cells.cells(), &[vec![1, 2, 3]]);
        assert_eq!(cells.cells_of(2), &[0]);
    }

    #[test]
    fn cells_of_a_tree_are_its_edges() {
        let t = topo(TopologyKind::Line, 4);
        let cells = t.cell_decomposition().unwrap();
        assert_eq!(cells.cells(), &[vec![1, 2], vec![2, 3], vec![3, 4]]);
    }

    #[test]
    fn star_hub_may_sit_in_many_cells() {
        let cells = topo(TopologyKind::Star, 5).cell_decomposition().unwrap();
        assert_eq!(cells.cells().len(), 4);
        assert_eq!(cells.cells_of(1).len(), 4);
    }

    #[test]
    fn cycle_of_cells_is_rejected() {
        let err = topo(TopologyKind::Cycle, 4).cell_decomposition().unwrap_err();
        assert!(matches!(err, Error::NotACellTree(_)));
    }

    #[test]
    fn cells_sharing_two_agents_are_rejected() {
        // Two triangles glued along an edge.
        let t = NetworkTopology::new(4, &[(1, 2), (1, 3), (2, 3), (2, 4), (3, 4)]).unwrap();
        assert!(matches!(
            t.cell_decomposition(),
            Err(Error::NotACellTree(_))
        ));
    }

    #[test]
    fn chain_of_triangles_glued_at_single_agents_is_accepted() {
        let t = NetworkTopology::new(5, &[(1, 2), (1, 3), (2, 3), (3, 4), (3, 5), (4, 5)]).unwrap();
        let cells = t.cell_decomposition().unwrap();
        assert_eq!(cells.cells(), &[vec![1, 2, 3], vec![3, 4, 5]]);
    }

    #[test]
    fn edge_list_round_trip() {
        let t = topo(TopologyKind::Cycle, 5);
        let text = t.to_edge_list();
        let back = NetworkTopology::from_edge_list(&text).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn edge_list_parser_rejects_garbage() {
        assert!(NetworkTopology::from_edge_list("").is_err());
        assert!(NetworkTopology::from_edge_list("1 two\n").is_err());
        assert!(NetworkTopology::from_edge_list("1 2 3\n").is_err());
    }

    #[test]
    fn random_topologies_are_reproducible_and_seed_sensitive() {
        let a = make_topology(TopologyKind::Random, 12, Some(3)).unwrap();
        let b = make_topology(TopologyKind::Random, 12, Some(3)).unwrap();
        let c = make_topology(TopologyKind::Random, 12, Some(4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c, "different seeds should wire differently");
    }

    #[test]
    fn random_topology_respects_the_degree_band() {
        let t = make_topology(TopologyKind::Random, 20, Some(11)).unwrap();
        for agent in 1..=20 {
            assert!(t.degree(agent) >= 1);
            // Connectivity patching may push a degree past the target band,
            // but only by a whisker.
            assert!(t.degree(agent) <= 12, "agent {agent} degree {}", t.degree(agent));
        }
    }

    proptest! {
        #[test]
        fn hop_layers_partition_all_agents(m in 2usize..14, seed in 0u64..500) {
            let t = make_topology(TopologyKind::Random, m, Some(seed)).unwrap();
            let h = t.hop_structure();
            for a in 1..=m {
                let total: usize = (0..=h.eccentricity(a)).map(|k| h.layer(a, k).len()).sum();
                prop_assert_eq!(total, m);
            }
        }

        #[test]
        fn hop_distance_is_symmetric(m in 2usize..14, seed in 0u64..500) {
            let t = make_topology(TopologyKind::Random, m, Some(seed)).unwrap();
            let h = t.hop_structure();
            for a in 1..=m {
                for b in 1..=m {
                    prop_assert_eq!(h.distance(a, b), h.distance(b, a));
                }
            }
        }

        #[test]
        fn spanning_trees_are_subgraph_trees(m in 2usize..14, seed in 0u64..500) {
            let t = make_topology(TopologyKind::Random, m, Some(seed)).unwrap();
            let spt = t.spanning_tree();
            prop_assert!(spt.is_tree());
            for &(a, b) in spt.edges() {
                prop_assert!(t.has_edge(a, b), "edge {}-{} not in the original", a, b);
            }
        }

        #[test]
        fn tree_hop_layers_split_across_neighbours(m in 2usize..14, seed in 0u64..500) {
            // On a tree, the k-hop set of i partitions into pieces reached
            // through each neighbour, each piece sitting at k-1 hops from
            // that neighbour.
            let tree = make_topology(TopologyKind::Random, m, Some(seed)).unwrap().spanning_tree();
            let h = tree.hop_structure();
            for i in 1..=m {
                for k in 1..=h.eccentricity(i) {
                    let mut reached: Vec<usize> = Vec::new();
                    for &j in tree.neighbours(i) {
                        let piece: Vec<usize> = h
                            .layer(i, k)
                            .iter()
                            .filter(|&&v| h.distance(j, v) == k - 1)
                            .copied()
                            .collect();
                        for &v in &piece {
                            prop_assert!(!reached.contains(&v), "pieces must be disjoint");
                        }
                        reached.extend(piece);
                    }
                    let mut expected: Vec<usize> = h.layer(i, k).to_vec();
                    reached.sort_unstable();
                    expected.sort_unstable();
                    prop_assert_eq!(reached, expected);
                }
            }
        }

        #[test]
        fn every_tree_decomposes_into_edge_cells(m in 2usize..14, seed in 0u64..500) {
            let tree = make_topology(TopologyKind::Random, m, Some(seed)).unwrap().spanning_tree();
            let cells = tree.cell_decomposition().unwrap();
            prop_assert_eq!(cells.cells().len(), m - 1);
            for cell in cells.cells() {
                prop_assert_eq!(cell.len(), 2);
            }
        }
    }
}
