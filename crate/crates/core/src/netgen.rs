//! Follower networks: edge-list I/O, k-core reduction, density-matched edge
//! thinning, directed random-walk growth and heavy-tailed random graphs.
//!
//! An edge `u → v` means "u follows v"; content flows from `v` to `u`.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::{Error, Result};

/// Directed follower graph without self-loops or duplicate edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FollowerNetwork {
    /// `following[u]` is the sorted list of accounts `u` follows.
    following: Vec<Vec<u32>>,
}

impl FollowerNetwork {
    /// Graph on `n_nodes` nodes. Self-loops and repeated edges are dropped;
    /// endpoints outside `[0, n_nodes)` are an error.
    pub fn from_edges<I>(n_nodes: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, u32)>,
    {
        let mut following = vec![Vec::new(); n_nodes];
        for (u, v) in edges {
            if u as usize >= n_nodes || v as usize >= n_nodes {
                return Err(Error::param(format!(
                    "edge ({u}, {v}) outside node range [0, {n_nodes})"
                )));
            }
            if u != v {
                following[u as usize].push(v);
            }
        }
        Ok(Self::from_adjacency(following))
    }

    fn from_adjacency(mut following: Vec<Vec<u32>>) -> Self {
        for list in &mut following {
            list.sort_unstable();
            list.dedup();
        }
        FollowerNetwork { following }
    }

    pub fn n_nodes(&self) -> usize {
        self.following.len()
    }

    pub fn n_edges(&self) -> usize {
        self.following.iter().map(Vec::len).sum()
    }

    /// Accounts that `u` follows (its friends).
    pub fn followees(&self, u: usize) -> &[u32] {
        &self.following[u]
    }

    pub fn out_degree(&self, u: usize) -> usize {
        self.following[u].len()
    }

    /// `followers()[v]` lists the accounts following `v`, ascending.
    pub fn followers(&self) -> Vec<Vec<u32>> {
        let mut followers = vec![Vec::new(); self.n_nodes()];
        for (u, list) in self.following.iter().enumerate() {
            for &v in list {
                followers[v as usize].push(u as u32);
            }
        }
        followers
    }

    pub fn in_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.n_nodes()];
        for list in &self.following {
            for &v in list {
                deg[v as usize] += 1;
            }
        }
        deg
    }

    pub fn has_edge(&self, u: u32, v: u32) -> bool {
        self.following
            .get(u as usize)
            .is_some_and(|l| l.binary_search(&v).is_ok())
    }

    /// Edges as `(follower, followee)` in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.following
            .iter()
            .enumerate()
            .flat_map(|(u, l)| l.iter().map(move |&v| (u as u32, v)))
    }

    /// Subgraph induced by `keep` (ascending original ids), relabelled to
    /// `0..keep.len()` in that order.
    pub fn induced(&self, keep: &[u32]) -> FollowerNetwork {
        let mut index = vec![u32::MAX; self.n_nodes()];
        for (new, &old) in keep.iter().enumerate() {
            index[old as usize] = new as u32;
        }
        let following = keep
            .iter()
            .map(|&old| {
                self.following[old as usize]
                    .iter()
                    .filter_map(|&v| match index[v as usize] {
                        u32::MAX => None,
                        w => Some(w),
                    })
                    .collect()
            })
            .collect();
        Self::from_adjacency(following)
    }

    pub fn summary(&self) -> String {
        format!("N={} E={}", self.n_nodes(), self.n_edges())
    }
}

/// Read an edge list: one `follower<sep>followee` pair per line, with `,` or
/// tab as separator. An optional non-numeric header line is skipped, lines
/// starting with `#` are comments, and a `# nodes=<n>` comment fixes the node
/// count so isolated nodes survive a round trip. Self-loops are skipped with
/// a warning.
pub fn load_edge_list(path: impl AsRef<Path>) -> Result<FollowerNetwork> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_edge_list(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_edge_list<R: BufRead>(reader: R) -> Result<FollowerNetwork> {
    let mut declared_nodes = 0usize;
    let mut edges = Vec::new();
    let mut seen_data = false;
    let mut self_loops = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx as u64 + 1;
        let line = line.map_err(|e| Error::io(PathBuf::new(), e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(n) = parse_node_count(comment) {
                declared_nodes = declared_nodes.max(n);
            }
            continue;
        }
        let fields: Vec<&str> = line
            .split([',', '\t'])
            .map(str::trim)
            .filter(|f| !f.is_empty())
            .collect();
        let parsed = match fields.as_slice() {
            [a, b] => a.parse::<u32>().ok().zip(b.parse::<u32>().ok()),
            _ => None,
        };
        let (u, v) = match parsed {
            Some(pair) => pair,
            None if !seen_data && fields.len() == 2 => {
                // header row
                seen_data = true;
                continue;
            }
            None => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected `follower,followee` unsigned ids, got `{line}`"),
                })
            }
        };
        seen_data = true;
        if u == v {
            self_loops += 1;
            warn!("line {lineno}: skipping self-loop {u} -> {v}");
            continue;
        }
        edges.push((u, v));
    }
    if self_loops > 0 {
        warn!("skipped {self_loops} self-loop(s)");
    }
    let max_id = edges
        .iter()
        .map(|&(u, v)| u.max(v) as usize + 1)
        .max()
        .unwrap_or(0);
    let n = declared_nodes.max(max_id);
    if n == 0 {
        return Err(Error::Empty("edge list has no nodes".into()));
    }
    FollowerNetwork::from_edges(n, edges)
}

fn parse_node_count(comment: &str) -> Option<usize> {
    comment
        .split_whitespace()
        .find_map(|tok| {
            tok.strip_prefix("nodes=")
                .or_else(|| tok.strip_prefix("N="))
        })
        .and_then(|n| n.parse().ok())
}

pub fn write_edge_list<W: Write>(net: &FollowerNetwork, mut w: W) -> std::io::Result<()> {
    writeln!(w, "# nodes={} edges={}", net.n_nodes(), net.n_edges())?;
    writeln!(w, "follower,followee")?;
    for (u, v) in net.edges() {
        writeln!(w, "{u},{v}")?;
    }
    w.flush()
}

pub fn save_edge_list(net: &FollowerNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_edge_list(net, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

/// Which degree the k-core peeling uses on the directed graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DegreeMode {
    #[default]
    Total,
    In,
    Out,
}

impl std::str::FromStr for DegreeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "total" => Ok(DegreeMode::Total),
            "in" => Ok(DegreeMode::In),
            "out" => Ok(DegreeMode::Out),
            other => Err(Error::param(format!("unknown degree mode `{other}`"))),
        }
    }
}

/// Result of a node-removing reduction: the relabelled graph and, for each
/// new id, the id it had in the input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Subgraph {
    pub network: FollowerNetwork,
    pub original_ids: Vec<u32>,
}

/// Maximal induced subgraph in which every node has degree ≥ `k`, by
/// iterative peeling. The result does not depend on peel order.
pub fn k_core(net: &FollowerNetwork, k: u32, mode: DegreeMode) -> Result<Subgraph> {
    if k == 0 {
        return Err(Error::param("k-core order must be at least 1"));
    }
    let n = net.n_nodes();
    let followers = net.followers();
    let in_deg = net.in_degrees();
    let mut degree: Vec<usize> = (0..n)
        .map(|u| match mode {
            DegreeMode::Total => net.out_degree(u) + in_deg[u],
            DegreeMode::In => in_deg[u],
            DegreeMode::Out => net.out_degree(u),
        })
        .collect();
    let k = k as usize;
    let mut removed = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&u| degree[u] < k).collect();
    for &u in &queue {
        removed[u] = true;
    }
    while let Some(u) = queue.pop_front() {
        // followees lose an in-edge, followers lose an out-edge
        let touched_followees = matches!(mode, DegreeMode::Total | DegreeMode::In);
        let touched_followers = matches!(mode, DegreeMode::Total | DegreeMode::Out);
        let mut lose_edge = |w: usize, degree: &mut Vec<usize>, queue: &mut VecDeque<usize>| {
            if !removed[w] {
                degree[w] -= 1;
                if degree[w] < k {
                    removed[w] = true;
                    queue.push_back(w);
                }
            }
        };
        if touched_followees {
            for &v in net.followees(u) {
                lose_edge(v as usize, &mut degree, &mut queue);
            }
        }
        if touched_followers {
            for &f in &followers[u] {
                lose_edge(f as usize, &mut degree, &mut queue);
            }
        }
    }
    let keep: Vec<u32> = (0..n as u32).filter(|&u| !removed[u as usize]).collect();
    Ok(Subgraph {
        network: net.induced(&keep),
        original_ids: keep,
    })
}

/// Uniformly random subset of exactly `target_edges` edges; nodes unchanged.
pub fn thin_to_density<R: Rng + ?Sized>(
    net: &FollowerNetwork,
    target_edges: usize,
    rng: &mut R,
) -> Result<FollowerNetwork> {
    let edges: Vec<(u32, u32)> = net.edges().collect();
    if target_edges > edges.len() {
        return Err(Error::param(format!(
            "target of {target_edges} edges exceeds the {} available",
            edges.len()
        )));
    }
    let mut picked = rand::seq::index::sample(rng, edges.len(), target_edges).into_vec();
    picked.sort_unstable();
    FollowerNetwork::from_edges(net.n_nodes(), picked.into_iter().map(|i| edges[i]))
}

/// Edge count that keeps the average degree `E/N` of `reference` on a graph
/// with `n_nodes` nodes.
pub fn density_matched_edges(reference: &FollowerNetwork, n_nodes: usize) -> usize {
    if reference.n_nodes() == 0 {
        return 0;
    }
    let avg = reference.n_edges() as f64 / reference.n_nodes() as f64;
    (avg * n_nodes as f64).round() as usize
}

#[derive(Clone, Debug, PartialEq)]
pub struct RwgParams {
    pub n_final: usize,
    pub n_init: usize,
    pub k_out: usize,
    pub p_friend: f64,
}

/// Directed random-walk growth. A fully connected seed of `n_init` nodes is
/// grown one node at a time; each newcomer follows one uniformly chosen
/// node, then adds `k_out − 1` further followees, each a random friend of
/// that first node with probability `p_friend` and otherwise a uniformly
/// random existing node. Repeats are redrawn, so every newcomer ends with
/// `min(k_out, existing nodes)` distinct followees.
pub fn random_walk_growth<R: Rng + ?Sized>(
    params: &RwgParams,
    rng: &mut R,
) -> Result<FollowerNetwork> {
    let &RwgParams {
        n_final,
        n_init,
        k_out,
        p_friend,
    } = params;
    if n_init < 2 {
        return Err(Error::param("random-walk growth needs n_init >= 2"));
    }
    if n_final < n_init {
        return Err(Error::param(format!(
            "n_final {n_final} is below n_init {n_init}"
        )));
    }
    if k_out == 0 {
        return Err(Error::param("k_out must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p_friend) {
        return Err(Error::param(format!(
            "p_friend must lie in [0,1], got {p_friend}"
        )));
    }
    if n_final > u32::MAX as usize {
        return Err(Error::param("node count exceeds u32 ids"));
    }

    let mut following: Vec<Vec<u32>> = Vec::with_capacity(n_final);
    for u in 0..n_init as u32 {
        following.push((0..n_init as u32).filter(|&v| v != u).collect());
    }
    // generation-stamped markers avoid clearing per newcomer
    let mut chosen_mark = vec![usize::MAX; n_final];
    let mut friend_mark = vec![usize::MAX; n_final];
    for v in n_init..n_final {
        let want = k_out.min(v);
        let first = rng.random_range(0..v);
        let friends = &following[first];
        for &f in friends {
            friend_mark[f as usize] = v;
        }
        let mut picks = Vec::with_capacity(want);
        picks.push(first as u32);
        chosen_mark[first] = v;
        let mut friends_taken = usize::from(friend_mark[first] == v);
        while picks.len() < want {
            let via_friend = friends_taken < friends.len() && rng.random::<f64>() < p_friend;
            let cand = if via_friend {
                friends[rng.random_range(0..friends.len())] as usize
            } else {
                rng.random_range(0..v)
            };
            if chosen_mark[cand] == v {
                continue;
            }
            chosen_mark[cand] = v;
            if friend_mark[cand] == v {
                friends_taken += 1;
            }
            picks.push(cand as u32);
        }
        following.push(picks);
    }
    Ok(FollowerNetwork::from_adjacency(following))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChungLuParams {
    pub n_nodes: usize,
    pub avg_degree: f64,
    /// Tail exponent of the expected in- and out-degree sequences.
    pub exponent: f64,
}

/// Directed Chung-Lu graph: expected out- and in-degrees follow independent
/// Zipf-like weight sequences with the given tail exponent. Endpoint pairs
/// are drawn proportionally to the weights until `n · avg_degree` distinct
/// edges exist.
pub fn chung_lu<R: Rng + ?Sized>(params: &ChungLuParams, rng: &mut R) -> Result<FollowerNetwork> {
    let &ChungLuParams {
        n_nodes: n,
        avg_degree,
        exponent,
    } = params;
    if n < 2 {
        return Err(Error::param("Chung-Lu graph needs at least 2 nodes"));
    }
    if !(exponent > 2.0) {
        return Err(Error::param(format!(
            "degree exponent must exceed 2, got {exponent}"
        )));
    }
    let target = (n as f64 * avg_degree).round() as usize;
    if !(avg_degree >= 0.0) || target > n * (n - 1) / 2 {
        return Err(Error::param(format!(
            "average degree {avg_degree} too large for {n} nodes"
        )));
    }
    let base: Vec<f64> = (0..n)
        .map(|i| ((i + 1) as f64).powf(-1.0 / (exponent - 1.0)))
        .collect();
    let weights = |rng: &mut R| {
        let mut w = base.clone();
        for i in (1..n).rev() {
            w.swap(i, rng.random_range(0..=i));
        }
        WeightedIndex::new(w).expect("positive weights")
    };
    let out_w = weights(rng);
    let in_w = weights(rng);
    let mut seen = std::collections::HashSet::with_capacity(target);
    let mut edges = Vec::with_capacity(target);
    let mut attempts = 0usize;
    while edges.len() < target {
        attempts += 1;
        if attempts > 100 * target + 1000 {
            return Err(Error::param(
                "Chung-Lu sampling saturated; lower the average degree",
            ));
        }
        let (u, v) = (out_w.sample(rng) as u32, in_w.sample(rng) as u32);
        if u != v && seen.insert((u, v)) {
            edges.push((u, v));
        }
    }
    FollowerNetwork::from_edges(n, edges)
}

/// Where a reduced network starts from.
#[derive(Clone, Debug, PartialEq)]
pub enum BaseNetwork {
    File(PathBuf),
    Rwg(RwgParams),
    ChungLu(ChungLuParams),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ThinTarget {
    Edges(usize),
    /// Keep the base network's average degree.
    MatchDensity,
}

#[derive(Clone, Debug, PartialEq)]
pub enum NetSpec {
    /// k-core of the base network, optionally thinned afterwards.
    EmpiricalKcore {
        base: BaseNetwork,
        k: u32,
        degree: DegreeMode,
        thin: Option<ThinTarget>,
    },
    /// Base network with a random subset of edges removed.
    EmpiricalThin {
        base: BaseNetwork,
        target_edges: usize,
    },
    SyntheticRwg(RwgParams),
}

impl NetSpec {
    /// Synthetic desk-scale network: N = 1,000, k_out = 20.
    pub fn desk() -> Self {
        NetSpec::SyntheticRwg(RwgParams {
            n_final: 1_000,
            n_init: 21,
            k_out: 20,
            p_friend: 0.5,
        })
    }

    /// Synthetic network of the main-experiment size (N = 10,006, ~1.8M edges).
    pub fn paper() -> Self {
        NetSpec::SyntheticRwg(RwgParams {
            n_final: 10_006,
            n_init: 181,
            k_out: 180,
            p_friend: 0.5,
        })
    }

    /// Synthetic network of the robustness-study size (N = 58,296, average
    /// degree 18).
    pub fn paper_wide() -> Self {
        NetSpec::SyntheticRwg(RwgParams {
            n_final: 58_296,
            n_init: 19,
            k_out: 18,
            p_friend: 0.5,
        })
    }

    /// k = 94 core of an empirical edge list, thinned to its average degree.
    pub fn paper_empirical(path: impl Into<PathBuf>) -> Self {
        NetSpec::EmpiricalKcore {
            base: BaseNetwork::File(path.into()),
            k: 94,
            degree: DegreeMode::Total,
            thin: Some(ThinTarget::MatchDensity),
        }
    }

    /// Empirical edge list thinned to average degree 18.
    pub fn paper_wide_empirical(path: impl Into<PathBuf>, n_nodes: usize) -> Self {
        NetSpec::EmpiricalThin {
            base: BaseNetwork::File(path.into()),
            target_edges: n_nodes * 18,
        }
    }

    /// Desk-scale stand-in for the empirical pipeline: the k = 22 core of a
    /// heavy-tailed 2,000-node graph, thinned back to the base average degree.
    pub fn desk_empirical_style() -> Self {
        NetSpec::EmpiricalKcore {
            base: BaseNetwork::ChungLu(ChungLuParams {
                n_nodes: 2_000,
                avg_degree: 20.0,
                exponent: 2.5,
            }),
            k: 22,
            degree: DegreeMode::Total,
            thin: Some(ThinTarget::MatchDensity),
        }
    }
}

fn build_base<R: Rng + ?Sized>(base: &BaseNetwork, rng: &mut R) -> Result<FollowerNetwork> {
    match base {
        BaseNetwork::File(path) => load_edge_list(path),
        BaseNetwork::Rwg(p) => random_walk_growth(p, rng),
        BaseNetwork::ChungLu(p) => chung_lu(p, rng),
    }
}

pub fn build_network<R: Rng + ?Sized>(spec: &NetSpec, rng: &mut R) -> Result<FollowerNetwork> {
    match spec {
        NetSpec::SyntheticRwg(p) => random_walk_growth(p, rng),
        NetSpec::EmpiricalThin { base, target_edges } => {
            let net = build_base(base, rng)?;
            thin_to_density(&net, *target_edges, rng)
        }
        NetSpec::EmpiricalKcore {
            base,
            k,
            degree,
            thin,
        } => {
            let net = build_base(base, rng)?;
            let core = k_core(&net, *k, *degree)?.network;
            match thin {
                None => Ok(core),
                Some(ThinTarget::Edges(e)) => thin_to_density(&core, *e, rng),
                Some(ThinTarget::MatchDensity) => {
                    let target = density_matched_edges(&net, core.n_nodes()).min(core.n_edges());
                    thin_to_density(&core, target, rng)
                }
            }
        }
    }
}
