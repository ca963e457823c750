//! Threshold range queries over sentence vectors via a spill tree.
//!
//! For unit vectors, `dot(q, x) >= theta` is the Euclidean ball
//! `||q - x|| <= sqrt(2 - 2*theta)`, so each node keeps the projection range
//! of both children and prunes subtrees provably outside the ball. Exact mode
//! backtracks into every child the ball can reach and reproduces the
//! brute-force oracle; approximate mode descends a single path and relies on
//! boundary spill for recall.

use crate::embedding::{dot, SentenceKey, SentenceVector, VectorStore};
use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMode {
    /// Ball-pruned backtracking; result equals the brute-force oracle.
    Exact,
    /// Defeatist single-path descent, no backtracking.
    Approximate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf {
        items: Vec<(SentenceKey, SentenceVector)>,
    },
    Split {
        direction: Vec<f64>,
        offset: f64,
        left_range: (f64, f64),
        right_range: (f64, f64),
        left: Box<Node>,
        right: Box<Node>,
    },
}

/// Space-partitioning tree over all vectors of one store. Immutable after
/// build; queries never mutate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    dimension: usize,
    leaf_capacity: usize,
    spill_fraction: f64,
    seed: u64,
    count: usize,
    root: Node,
}

/// Builds a spill tree with seeded random-projection splits: direction drawn
/// from the seeded stream, offset at the median projection, `spill_fraction`
/// of each side's boundary points duplicated into the sibling. Deterministic
/// given the seed.
pub fn build_index(
    store: &VectorStore,
    leaf_capacity: usize,
    spill_fraction: f64,
    seed: u64,
) -> Result<Index> {
    if leaf_capacity < 1 {
        return Err(Error::InvalidConfig {
            field: "leaf_capacity".into(),
            reason: "must be >= 1".into(),
        });
    }
    if !(0.0..0.5).contains(&spill_fraction) {
        return Err(Error::InvalidConfig {
            field: "spill_fraction".into(),
            reason: format!("must be in [0, 0.5), got {spill_fraction}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items: Vec<(SentenceKey, SentenceVector)> = store
        .iter()
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let count = items.len();
    let root = build_node(items, store.dimension(), leaf_capacity, spill_fraction, &mut rng);
    Ok(Index {
        dimension: store.dimension(),
        leaf_capacity,
        spill_fraction,
        seed,
        count,
        root,
    })
}

fn build_node(
    items: Vec<(SentenceKey, SentenceVector)>,
    dimension: usize,
    leaf_capacity: usize,
    spill_fraction: f64,
    rng: &mut ChaCha8Rng,
) -> Node {
    if items.len() <= leaf_capacity {
        return Node::Leaf { items };
    }
    let direction = random_unit_direction(dimension, rng);
    let mut projected: Vec<(f64, SentenceKey, SentenceVector)> = items
        .into_iter()
        .map(|(k, v)| (dot(&direction, v.values()), k, v))
        .collect();
    projected.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then_with(|| a.1.cmp(&b.1)));

    let n = projected.len();
    let half = n / 2;
    // Keep both children strictly smaller than the parent.
    let spill = ((spill_fraction * n as f64).floor() as usize)
        .min(half.saturating_sub(1))
        .min((n - half).saturating_sub(1));
    let offset = (projected[half - 1].0 + projected[half].0) / 2.0;

    let left_slice = &projected[..half + spill];
    let right_slice = &projected[half - spill..];
    let left_range = (left_slice[0].0, left_slice[left_slice.len() - 1].0);
    let right_range = (right_slice[0].0, right_slice[right_slice.len() - 1].0);
    let left_items: Vec<_> = left_slice.iter().map(|(_, k, v)| (k.clone(), v.clone())).collect();
    let right_items: Vec<_> = right_slice.iter().map(|(_, k, v)| (k.clone(), v.clone())).collect();
    drop(projected);

    let left = build_node(left_items, dimension, leaf_capacity, spill_fraction, rng);
    let right = build_node(right_items, dimension, leaf_capacity, spill_fraction, rng);
    Node::Split {
        direction,
        offset,
        left_range,
        right_range,
        left: Box::new(left),
        right: Box::new(right),
    }
}

fn random_unit_direction(dimension: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dimension).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-9 {
            return v.iter().map(|x| x / norm).collect();
        }
    }
}

impl Index {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn spill_fraction(&self) -> f64 {
        self.spill_fraction
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Tree depth; diagnostic only (roughly log2(N / leaf_capacity) under
    /// balanced splits).
    pub fn depth(&self) -> usize {
        fn walk(node: &Node) -> usize {
            match node {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(left).max(walk(right)),
            }
        }
        walk(&self.root)
    }

    /// Every key stored in leaves, duplicates included (spill copies show up
    /// once per leaf that holds them).
    pub fn leaf_keys(&self) -> Vec<SentenceKey> {
        fn walk(node: &Node, out: &mut Vec<SentenceKey>) {
            match node {
                Node::Leaf { items } => out.extend(items.iter().map(|(k, _)| k.clone())),
                Node::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// All keys with `dot(q, x) >= theta_lower`, score descending, ties by
    /// key ascending. Exact mode matches [`brute_force_query`]
    /// element-for-element.
    pub fn query_threshold(
        &self,
        q: &SentenceVector,
        theta_lower: f64,
        mode: SearchMode,
    ) -> Result<Vec<(SentenceKey, f64)>> {
        validate_query(q, self.dimension, theta_lower)?;
        let radius = (2.0 - 2.0 * theta_lower).max(0.0).sqrt();
        let mut hits = Vec::new();
        match mode {
            SearchMode::Exact => {
                collect_exact(&self.root, q, theta_lower, radius, &mut hits);
            }
            SearchMode::Approximate => {
                collect_defeatist(&self.root, q, theta_lower, &mut hits);
            }
        }
        // Spilled points can be scored in several leaves; keep one copy.
        hits.sort_by(|a, b| a.0.cmp(&b.0));
        hits.dedup_by(|a, b| a.0 == b.0);
        sort_hits(&mut hits);
        Ok(hits)
    }
}

fn collect_exact(
    node: &Node,
    q: &SentenceVector,
    theta: f64,
    radius: f64,
    out: &mut Vec<(SentenceKey, f64)>,
) {
    match node {
        Node::Leaf { items } => scan_leaf(items, q, theta, out),
        Node::Split {
            direction,
            left_range,
            right_range,
            left,
            right,
            ..
        } => {
            let pq = dot(direction, q.values());
            // A ball point x satisfies |proj(x) - proj(q)| <= radius, so a
            // child whose projection range misses that window holds none.
            if pq - radius <= left_range.1 && pq + radius >= left_range.0 {
                collect_exact(left, q, theta, radius, out);
            }
            if pq - radius <= right_range.1 && pq + radius >= right_range.0 {
                collect_exact(right, q, theta, radius, out);
            }
        }
    }
}

fn collect_defeatist(
    node: &Node,
    q: &SentenceVector,
    theta: f64,
    out: &mut Vec<(SentenceKey, f64)>,
) {
    match node {
        Node::Leaf { items } => scan_leaf(items, q, theta, out),
        Node::Split {
            direction,
            offset,
            left,
            right,
            ..
        } => {
            let pq = dot(direction, q.values());
            if pq < *offset {
                collect_defeatist(left, q, theta, out);
            } else {
                collect_defeatist(right, q, theta, out);
            }
        }
    }
}

fn scan_leaf(
    items: &[(SentenceKey, SentenceVector)],
    q: &SentenceVector,
    theta: f64,
    out: &mut Vec<(SentenceKey, f64)>,
) {
    for (key, vector) in items {
        let score = dot(q.values(), vector.values());
        if score >= theta {
            out.push((key.clone(), score));
        }
    }
}

/// Exhaustive scan with the same contract as [`Index::query_threshold`];
/// exact by construction and used as the verification oracle.
pub fn brute_force_query(
    store: &VectorStore,
    q: &SentenceVector,
    theta_lower: f64,
) -> Result<Vec<(SentenceKey, f64)>> {
    validate_query(q, store.dimension(), theta_lower)?;
    let mut hits = Vec::new();
    for (key, vector) in store.iter() {
        let score = dot(q.values(), vector.values());
        if score >= theta_lower {
            hits.push((key.clone(), score));
        }
    }
    sort_hits(&mut hits);
    Ok(hits)
}

fn sort_hits(hits: &mut [(SentenceKey, f64)]) {
    hits.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then_with(|| a.0.cmp(&b.0))
    });
}

fn validate_query(q: &SentenceVector, dimension: usize, theta: f64) -> Result<()> {
    if q.dimension() != dimension {
        return Err(Error::DimensionMismatch {
            key: String::from("<query>"),
            expected: dimension,
            found: q.dimension(),
        });
    }
    if !q.is_unit() {
        return Err(Error::NonUnitQuery { norm: q.norm() });
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::BadThreshold { value: theta });
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct IndexHeader {
    dimension: usize,
    leaf_capacity: usize,
    spill_fraction: f64,
    seed: u64,
    count: usize,
}

/// Persists the index: a one-line header record followed by the node tree.
pub fn save_index(index: &Index, path: &Path) -> Result<()> {
    let mut w = crate::corpus::writer(path)?;
    let header = IndexHeader {
        dimension: index.dimension,
        leaf_capacity: index.leaf_capacity,
        spill_fraction: index.spill_fraction,
        seed: index.seed,
        count: index.count,
    };
    crate::corpus::write_json_line(&mut w, &header, path)?;
    crate::corpus::write_json_line(&mut w, &index.root, path)?;
    use std::io::Write;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a persisted index; queries on the result are identical to queries
/// on the original.
pub fn load_index(path: &Path) -> Result<Index> {
    let lines = crate::corpus::read_lines(path)?;
    if lines.len() != 2 {
        return Err(Error::MalformedLine {
            path: path.to_path_buf(),
            line: lines.len(),
            reason: format!("expected header plus tree, found {} lines", lines.len()),
        });
    }
    let header: IndexHeader =
        serde_json::from_str(&lines[0].1).map_err(|e| Error::MalformedLine {
            path: path.to_path_buf(),
            line: 1,
            reason: e.to_string(),
        })?;
    let root: Node = serde_json::from_str(&lines[1].1).map_err(|e| Error::MalformedLine {
        path: path.to_path_buf(),
        line: 2,
        reason: e.to_string(),
    })?;
    Ok(Index {
        dimension: header.dimension,
        leaf_capacity: header.leaf_capacity,
        spill_fraction: header.spill_fraction,
        seed: header.seed,
        count: header.count,
        root,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::VectorStore;

    fn key(id: &str) -> SentenceKey {
        SentenceKey::new(id, 0)
    }

    fn unit(values: Vec<f64>, id: &str) -> SentenceVector {
        SentenceVector::new(values, &key(id)).unwrap()
    }

    fn random_store(n: usize, dim: usize, seed: u64) -> VectorStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = VectorStore::new(dim);
        for i in 0..n {
            let values: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let k = SentenceKey::new(format!("v{i:04}"), 0);
            store.insert(k.clone(), SentenceVector::new(values, &k).unwrap()).unwrap();
        }
        store
    }

    #[test]
    fn under_capacity_store_is_a_single_leaf() {
        let store = random_store(10, 8, 1);
        let index = build_index(&store, 16, 0.0, 0).unwrap();
        assert_eq!(index.depth(), 0);
        assert_eq!(index.leaf_keys().len(), 10);
    }

    #[test]
    fn same_seed_gives_identical_structure() {
        let store = random_store(200, 8, 2);
        let a = build_index(&store, 16, 0.1, 7).unwrap();
        let b = build_index(&store, 16, 0.1, 7).unwrap();
        assert_eq!(a, b);
        let c = build_index(&store, 16, 0.1, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_spill_stores_every_key_exactly_once() {
        let store = random_store(1000, 8, 3);
        let index = build_index(&store, 32, 0.0, 0).unwrap();
        let mut keys = index.leaf_keys();
        assert_eq!(keys.len(), 1000);
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 1000, "a key appears in more than one leaf");
    }

    #[test]
    fn spill_duplicates_but_never_drops_keys() {
        let store = random_store(500, 8, 4);
        let index = build_index(&store, 32, 0.1, 0).unwrap();
        let mut keys = index.leaf_keys();
        assert!(keys.len() > 500);
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 500);
    }

    #[test]
    fn self_match_ranks_first() {
        let store = random_store(300, 8, 5);
        let index = build_index(&store, 16, 0.0, 0).unwrap();
        let target = store.get(&SentenceKey::new("v0042", 0)).unwrap().clone();
        let hits = index.query_threshold(&target, 0.8, SearchMode::Exact).unwrap();
        assert!(!hits.is_empty());
        assert_eq!(hits[0].0, SentenceKey::new("v0042", 0));
        assert!((hits[0].1 - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn vacuous_threshold_returns_nothing() {
        let store = random_store(300, 8, 6);
        let index = build_index(&store, 16, 0.0, 0).unwrap();
        let mut q_values = vec![0.0; 8];
        q_values[0] = 0.7;
        q_values[1] = -0.714142842854285;
        let q = SentenceVector::new(q_values, &key("q")).unwrap();
        let hits = index.query_threshold(&q, 0.999999, SearchMode::Exact).unwrap();
        assert!(hits.is_empty());
    }

    #[test]
    fn brute_force_hand_case() {
        let mut store = VectorStore::new(2);
        store.insert(key("a"), unit(vec![1.0, 0.0], "a")).unwrap();
        store.insert(key("b"), unit(vec![0.6, 0.8], "b")).unwrap();
        store.insert(key("c"), unit(vec![0.0, 1.0], "c")).unwrap();
        let q = unit(vec![1.0, 0.0], "q");
        let hits = brute_force_query(&store, &q, 0.5).unwrap();
        assert_eq!(hits.len(), 2);
        assert_eq!(hits[0].0, key("a"));
        assert!((hits[0].1 - 1.0).abs() < 1e-12);
        assert_eq!(hits[1].0, key("b"));
        assert!((hits[1].1 - 0.6).abs() < 1e-12);
    }

    #[test]
    fn brute_force_empty_and_singleton() {
        let store = VectorStore::new(4);
        let q = unit(vec![1.0, 0.0, 0.0, 0.0], "q");
        assert!(brute_force_query(&store, &q, 0.5).unwrap().is_empty());

        let mut store = VectorStore::new(4);
        store.insert(key("a"), q.clone()).unwrap();
        let hits = brute_force_query(&store, &q, 0.5).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].0, key("a"));
        assert!((hits[0].1 - 1.0).abs() <= 1e-6);
    }

    #[test]
    fn exact_mode_equals_brute_force_on_random_data() {
        for (n, dim, theta, spill) in [
            (400, 8, 0.5, 0.0),
            (400, 8, 0.5, 0.1),
            (600, 8, 0.8, 0.05),
            (300, 64, 0.5, 0.1),
        ] {
            let store = random_store(n, dim, n as u64);
            let index = build_index(&store, 16, spill, 9).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            for _ in 0..30 {
                let values: Vec<f64> =
                    (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                let q = SentenceVector::new(values, &key("q")).unwrap();
                let expected = brute_force_query(&store, &q, theta).unwrap();
                let actual = index.query_threshold(&q, theta, SearchMode::Exact).unwrap();
                assert_eq!(actual, expected);
            }
        }
    }

    #[test]
    fn non_unit_query_rejected() {
        let store = random_store(10, 8, 11);
        let index = build_index(&store, 16, 0.0, 0).unwrap();
        let mut bad = unit(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], "q");
        // Scale it out of unit norm through the serde back door.
        let json = serde_json::to_string(&bad).unwrap();
        let scaled = json.replace("1.0", "0.5");
        bad = serde_json::from_str(&scaled).unwrap();
        assert!(matches!(
            index.query_threshold(&bad, 0.8, SearchMode::Exact),
            Err(Error::NonUnitQuery { .. })
        ));
    }

    #[test]
    fn bad_threshold_rejected() {
        let store = random_store(10, 8, 12);
        let index = build_index(&store, 16, 0.0, 0).unwrap();
        let q = store.get(&SentenceKey::new("v0001", 0)).unwrap().clone();
        assert!(index.query_threshold(&q, 0.0, SearchMode::Exact).is_err());
        assert!(index.query_threshold(&q, 1.0, SearchMode::Exact).is_err());
    }

    #[test]
    fn empty_store_builds_valid_empty_index() {
        let store = VectorStore::new(8);
        let index = build_index(&store, 16, 0.1, 0).unwrap();
        assert!(index.is_empty());
        let q = unit(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], "q");
        assert!(index.query_threshold(&q, 0.5, SearchMode::Exact).unwrap().is_empty());
    }

    #[test]
    fn persistence_round_trip_reproduces_queries() {
        let store = random_store(500, 8, 13);
        let index = build_index(&store, 32, 0.1, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("shard.idx");
        save_index(&index, &path).unwrap();
        let loaded = load_index(&path).unwrap();
        assert_eq!(loaded, index);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let values: Vec<f64> = (0..8).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let q = SentenceVector::new(values, &key("q")).unwrap();
            assert_eq!(
                index.query_threshold(&q, 0.6, SearchMode::Exact).unwrap(),
                loaded.query_threshold(&q, 0.6, SearchMode::Exact).unwrap()
            );
        }
    }

    #[test]
    fn threshold_monotonicity() {
        let store = random_store(500, 8, 14);
        let index = build_index(&store, 32, 0.0, 0).unwrap();
        let q = store.get(&SentenceKey::new("v0100", 0)).unwrap().clone();
        let loose = index.query_threshold(&q, 0.5, SearchMode::Exact).unwrap();
        let tight = index.query_threshold(&q, 0.8, SearchMode::Exact).unwrap();
        let loose_keys: std::collections::HashSet<_> =
            loose.iter().map(|(k, _)| k.clone()).collect();
        assert!(tight.iter().all(|(k, _)| loose_keys.contains(k)));
        assert!(tight.iter().all(|(_, s)| *s >= 0.8 && *s <= 1.0 + 1e-6));
    }
}
