//! Ancestry forest of a constant-size population.
//!
//! Each node is one particle's lifetime. A branch event creates a child node
//! whose birth position is the parent's position at that instant, so a
//! node's branch positions are read off its retained children. With pruning
//! on, a node is dropped as soon as it is dead and has no retained children,
//! which keeps exactly the ancestor chains of the living particles.

use rustc_hash::{FxHashMap as HashMap, FxHashSet as HashSet};
use std::fmt::Write as _;

use crate::error::{arg, Error, Result};
use crate::model::ParticleId;

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: ParticleId,
    pub parent: Option<ParticleId>,
    pub birth_time: f64,
    pub death_time: Option<f64>,
    pub birth_position: Vec<f64>,
    pub death_position: Option<Vec<f64>>,
    /// Children in birth order.
    pub children: Vec<ParticleId>,
}

impl Node {
    pub fn alive(&self) -> bool {
        self.death_time.is_none()
    }
}

#[derive(Clone, Debug)]
pub struct GenealogyForest {
    nodes: HashMap<ParticleId, Node>,
    alive: HashSet<ParticleId>,
    next_id: ParticleId,
    prune: bool,
}

/// Ancestral point shared by every living particle.
#[derive(Clone, Debug, PartialEq)]
pub struct Mrca {
    /// Node on whose lifetime the point lies.
    pub node: ParticleId,
    /// Time of the point.
    pub time: f64,
}

impl GenealogyForest {
    /// Forest of independent roots alive at `time`.
    pub fn with_roots(
        time: f64,
        ids: &[ParticleId],
        d: usize,
        coords: &[f64],
        prune: bool,
    ) -> Result<Self> {
        if coords.len() != ids.len() * d {
            return arg("root coordinates do not match the id count");
        }
        let mut nodes = HashMap::with_capacity_and_hasher(ids.len() * 2, Default::default());
        let mut alive = HashSet::with_capacity_and_hasher(ids.len() * 2, Default::default());
        for (i, &id) in ids.iter().enumerate() {
            let node = Node {
                id,
                parent: None,
                birth_time: time,
                death_time: None,
                birth_position: coords[i * d..(i + 1) * d].to_vec(),
                death_position: None,
                children: Vec::new(),
            };
            if nodes.insert(id, node).is_some() {
                return Err(Error::Data(format!("duplicate root id {id}")));
            }
            alive.insert(id);
        }
        let next_id = ids.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            nodes,
            alive,
            next_id,
            prune,
        })
    }

    pub fn pruning(&self) -> bool {
        self.prune
    }

    pub fn node(&self, id: ParticleId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn alive_count(&self) -> usize {
        self.alive.len()
    }

    pub fn alive_ids(&self) -> impl Iterator<Item = ParticleId> + '_ {
        self.alive.iter().copied()
    }

    pub fn is_alive(&self, id: ParticleId) -> bool {
        self.alive.contains(&id)
    }

    /// Next id that a branch event will hand out.
    pub fn next_id(&self) -> ParticleId {
        self.next_id
    }

    /// Records a branch of `parent_id` at `time`; returns the child's id.
    pub fn record_branch(
        &mut self,
        parent_id: ParticleId,
        time: f64,
        parent_position: &[f64],
    ) -> Result<ParticleId> {
        let child = self.next_id;
        match self.nodes.get_mut(&parent_id) {
            Some(p) if p.alive() => {
                if time < p.birth_time {
                    return Err(Error::Consistency(format!(
                        "branch at {time} precedes the birth of {parent_id}"
                    )));
                }
                p.children.push(child);
            }
            _ => return arg(format!("branching parent {parent_id} is not alive")),
        }
        self.next_id += 1;
        self.nodes.insert(
            child,
            Node {
                id: child,
                parent: Some(parent_id),
                birth_time: time,
                death_time: None,
                birth_position: parent_position.to_vec(),
                death_position: None,
                children: Vec::new(),
            },
        );
        self.alive.insert(child);
        Ok(child)
    }

    /// Marks `id` dead at `time` and prunes dead ends above it.
    pub fn record_death(&mut self, id: ParticleId, time: f64, position: &[f64]) -> Result<()> {
        if !self.alive.remove(&id) {
            return arg(format!("particle {id} is not alive"));
        }
        let node = self.nodes.get_mut(&id).expect("alive nodes are retained");
        node.death_time = Some(time);
        node.death_position = Some(position.to_vec());
        if self.prune {
            self.prune_from(id);
        }
        Ok(())
    }

    fn prune_from(&mut self, mut id: ParticleId) {
        loop {
            let node = &self.nodes[&id];
            if node.alive() || !node.children.is_empty() {
                return;
            }
            let parent = node.parent;
            self.nodes.remove(&id);
            match parent {
                Some(p) => {
                    let pn = self.nodes.get_mut(&p).expect("parents outlive pruned children");
                    if let Some(k) = pn.children.iter().rposition(|&c| c == id) {
                        pn.children.remove(k);
                    }
                    id = p;
                }
                None => return,
            }
        }
    }

    /// Nodes that are ancestors of (or equal to) a living particle.
    fn live_set(&self) -> Option<HashSet<ParticleId>> {
        if self.prune {
            return None;
        }
        let mut live = HashSet::default();
        for &a in &self.alive {
            let mut cur = Some(a);
            while let Some(c) = cur {
                if !live.insert(c) {
                    break;
                }
                cur = self.nodes[&c].parent;
            }
        }
        Some(live)
    }

    fn live_children<'a>(
        &'a self,
        node: &'a Node,
        live: &'a Option<HashSet<ParticleId>>,
    ) -> impl Iterator<Item = ParticleId> + 'a {
        node.children
            .iter()
            .copied()
            .filter(move |c| live.as_ref().is_none_or(|l| l.contains(c)))
    }

    /// Most recent point on the genealogy shared by every living particle.
    ///
    /// It is the first split among the living lineages on their deepest
    /// common node; with a single living lineage it is that lineage's birth.
    pub fn mrca(&self) -> Option<Mrca> {
        let live = self.live_set();
        let is_live = |id: &ParticleId| live.as_ref().is_none_or(|l| l.contains(id));
        let mut roots = self
            .nodes
            .values()
            .filter(|n| n.parent.is_none() && is_live(&n.id));
        let root = roots.next()?;
        if roots.next().is_some() {
            return None;
        }
        let mut cur = root;
        loop {
            let mut kids = self.live_children(cur, &live);
            let first = kids.next();
            let more = kids.next().is_some();
            match (cur.alive(), first, more) {
                (false, Some(only), false) => cur = &self.nodes[&only],
                (_, Some(first), _) => {
                    return Some(Mrca {
                        node: cur.id,
                        time: self.nodes[&first].birth_time,
                    })
                }
                (true, None, _) => {
                    return Some(Mrca {
                        node: cur.id,
                        time: cur.birth_time,
                    })
                }
                (false, None, _) => unreachable!("dead leaf in the live set"),
            }
        }
    }

    /// Age of the most recent common ancestor at time `t`; `None` when the
    /// living particles descend from distinct roots.
    pub fn mrca_age(&self, t: f64) -> Option<f64> {
        self.mrca().map(|m| t - m.time)
    }

    /// Whether some living particle descends from `id` (or is `id`).
    pub fn has_living_descendant(&self, id: ParticleId) -> Result<bool> {
        if id >= self.next_id {
            return arg(format!("unknown particle id {id}"));
        }
        if self.prune {
            return Ok(self.nodes.contains_key(&id));
        }
        for &a in &self.alive {
            let mut cur = Some(a);
            while let Some(c) = cur {
                if c == id {
                    return Ok(true);
                }
                cur = self.nodes[&c].parent;
            }
        }
        Ok(false)
    }

    /// Ancestor chain of `id` from its root, as node ids.
    pub fn lineage(&self, id: ParticleId) -> Result<Vec<ParticleId>> {
        let mut chain = Vec::new();
        let mut cur = Some(id);
        while let Some(c) = cur {
            let node = self
                .nodes
                .get(&c)
                .ok_or_else(|| Error::Query(format!("node {c} is not retained")))?;
            chain.push(c);
            cur = node.parent;
        }
        chain.reverse();
        Ok(chain)
    }

    /// Skeleton of the immortal lineage: the MRCA's ancestor chain from its
    /// root, sampled at each lineage jump and ending at the MRCA point.
    pub fn spine_path(&self) -> Result<Vec<(f64, Vec<f64>)>> {
        let m = self
            .mrca()
            .ok_or_else(|| Error::Query("no common ancestor among the living particles".into()))?;
        let chain = self.lineage(m.node)?;
        let mut path: Vec<(f64, Vec<f64>)> = chain
            .iter()
            .map(|id| {
                let n = &self.nodes[id];
                (n.birth_time, n.birth_position.clone())
            })
            .collect();
        let node = &self.nodes[&m.node];
        if m.time > node.birth_time {
            let live = self.live_set();
            let first = self
                .live_children(node, &live)
                .next()
                .expect("split point has a child");
            path.push((m.time, self.nodes[&first].birth_position.clone()));
        }
        Ok(path)
    }

    /// Newick rendering of the living genealogy at time `t`, one tree per
    /// root, leaves labelled `p<id>`.
    pub fn to_newick(&self, t: f64) -> String {
        let live = self.live_set();
        let mut roots: Vec<&Node> = self
            .nodes
            .values()
            .filter(|n| n.parent.is_none() && live.as_ref().is_none_or(|l| l.contains(&n.id)))
            .collect();
        roots.sort_by_key(|n| n.id);
        let mut out = String::new();
        for root in roots {
            if let Some((body, len)) = self.newick_lineage(root, root.birth_time, t, &live) {
                let _ = writeln!(out, "{body}:{len};");
            }
        }
        out
    }

    // Subtree carried by `node`'s lineage from `from` on, with its stem length.
    fn newick_lineage(
        &self,
        node: &Node,
        from: f64,
        t: f64,
        live: &Option<HashSet<ParticleId>>,
    ) -> Option<(String, f64)> {
        let kids: Vec<ParticleId> = self
            .live_children(node, live)
            .filter(|c| self.nodes[c].birth_time > from)
            .collect();
        let Some(&first) = kids.first() else {
            return node.alive().then(|| (format!("p{}", node.id), t - from));
        };
        let split = self.nodes[&first].birth_time;
        let left = self.newick_lineage(node, split, t, live);
        let right = self.newick_lineage(&self.nodes[&first], split, t, live);
        let stem = split - from;
        match (left, right) {
            (Some((l, ll)), Some((r, rl))) => Some((format!("({l}:{ll},{r}:{rl})"), stem)),
            (Some((s, len)), None) | (None, Some((s, len))) => Some((s, stem + len)),
            (None, None) => None,
        }
    }
}
