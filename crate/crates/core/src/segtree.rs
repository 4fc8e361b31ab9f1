//! Tree-of-captions construction.
//!
//! A feature stream (one vector per time span) is segmented bottom-up by
//! repeatedly merging the temporally adjacent pair of segments whose merge
//! raises the total within-segment sum of squared deviations the least
//! (Ward's criterion restricted to neighbours). The full merge trace forms a
//! binary tree whose nodes are the video segments later captioned and fed to
//! a language model as a DFS-ordered markdown outline.

use std::collections::{HashMap, VecDeque};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum segment length (seconds) worth captioning.
pub const DEFAULT_MIN_CAPTION_SECONDS: f64 = 5.0;
/// Number of extraction windows sampled per video.
pub const DEFAULT_WINDOWS: usize = 5;

const DURATION_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SegError {
    #[error("bad feature-stream header: {0}")]
    BadHeader(String),
    #[error("line {line}: vector has length {got}, expected {expected}")]
    DimMismatch {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: frame times are not strictly increasing and non-overlapping")]
    NonMonotonic { line: usize },
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("feature stream has no frames")]
    EmptyStream,
    #[error("invalid caption tree: {0}")]
    InvalidTree(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub t0: f64,
    pub t1: f64,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStream {
    dim: usize,
    frames: Vec<Frame>,
}

#[derive(Serialize, Deserialize)]
struct StreamHeader {
    dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
}

impl FeatureStream {
    /// Validates frames against `dim` and the ordering invariants.
    pub fn new(dim: usize, frames: Vec<Frame>) -> Result<Self, SegError> {
        if dim == 0 {
            return Err(SegError::BadHeader("dim must be positive".into()));
        }
        let mut prev_end = f64::NEG_INFINITY;
        for (i, f) in frames.iter().enumerate() {
            // line numbers are 1-based and the header is line 1
            let line = i + 2;
            if f.v.len() != dim {
                return Err(SegError::DimMismatch {
                    line,
                    expected: dim,
                    got: f.v.len(),
                });
            }
            if !(f.t0.is_finite() && f.t1.is_finite()) || f.v.iter().any(|x| !x.is_finite()) {
                return Err(SegError::Malformed {
                    line,
                    msg: "non-finite value".into(),
                });
            }
            if !(f.t0 < f.t1) || f.t0 < prev_end {
                return Err(SegError::NonMonotonic { line });
            }
            prev_end = f.t1;
        }
        Ok(Self { dim, frames })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Serializes to the JSON Lines format read by [`load_feature_stream`].
    pub fn to_jsonl(&self) -> String {
        let header = StreamHeader {
            dim: self.dim,
            unit: Some("seconds".into()),
        };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for f in &self.frames {
            out.push_str(&serde_json::to_string(f).expect("frame serializes"));
            out.push('\n');
        }
        out
    }
}

/// Reads a feature stream: a `{"dim": d, "unit": "seconds"}` header line
/// followed by one `{"t0", "t1", "v"}` object per line. Blank lines are
/// ignored.
pub fn load_feature_stream<R: BufRead>(source: R) -> Result<FeatureStream, SegError> {
    let mut lines = source.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
            None => return Err(SegError::BadHeader("missing header line".into())),
        }
    };
    let header: StreamHeader =
        serde_json::from_str(&header).map_err(|e| SegError::BadHeader(e.to_string()))?;
    match header.unit.as_deref() {
        None | Some("seconds") => {}
        Some(other) => return Err(SegError::BadHeader(format!("unsupported unit {other:?}"))),
    }
    if header.dim == 0 {
        return Err(SegError::BadHeader("dim must be positive".into()));
    }

    let mut frames = Vec::new();
    let mut prev_end = f64::NEG_INFINITY;
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let frame: Frame = serde_json::from_str(&line).map_err(|e| SegError::Malformed {
            line: line_no,
            msg: e.to_string(),
        })?;
        if frame.v.len() != header.dim {
            return Err(SegError::DimMismatch {
                line: line_no,
                expected: header.dim,
                got: frame.v.len(),
            });
        }
        if !(frame.t0 < frame.t1) || frame.t0 < prev_end {
            return Err(SegError::NonMonotonic { line: line_no });
        }
        prev_end = frame.t1;
        frames.push(frame);
    }
    FeatureStream::new(header.dim, frames)
}

/// Sufficient statistics of a contiguous run of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SegStat {
    pub n: usize,
    pub sum: Vec<f64>,
    /// Sum of squared norms of the member vectors.
    pub sumsq: f64,
    pub start: f64,
    pub end: f64,
}

impl SegStat {
    pub fn from_frame(f: &Frame) -> Self {
        Self {
            n: 1,
            sum: f.v.clone(),
            sumsq: f.v.iter().map(|x| x * x).sum(),
            start: f.t0,
            end: f.t1,
        }
    }

    /// Statistics of `self` followed by the adjacent segment `next`.
    pub fn merge(&self, next: &SegStat) -> SegStat {
        SegStat {
            n: self.n + next.n,
            sum: self.sum.iter().zip(&next.sum).map(|(a, b)| a + b).collect(),
            sumsq: self.sumsq + next.sumsq,
            start: self.start,
            end: next.end,
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Within-segment sum of squared deviations from the mean.
    pub fn sse(&self) -> f64 {
        let norm2: f64 = self.sum.iter().map(|s| s * s).sum();
        (self.sumsq - norm2 / self.n as f64).max(0.0)
    }
}

/// Increase in total within-segment SSE caused by merging `a` and `b`:
/// `n_a n_b / (n_a + n_b) * |mean_a - mean_b|^2`.
///
/// Evaluated as `|n_b S_a - n_a S_b|^2 / (n_a n_b (n_a + n_b))` from the
/// segment sums, which avoids rounding the means and keeps equal costs
/// bit-equal on integer-valued features.
pub fn ward_delta(a: &SegStat, b: &SegStat) -> f64 {
    let (na, nb) = (a.n as f64, b.n as f64);
    let num: f64 = a
        .sum
        .iter()
        .zip(&b.sum)
        .map(|(sa, sb)| {
            let d = nb * sa - na * sb;
            d * d
        })
        .sum();
    num / (na * nb * (na + nb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub start: f64,
    pub end: f64,
    #[serde(default)]
    pub children: Vec<usize>,
    #[serde(default)]
    pub caption: Option<String>,
}

impl Node {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

/// Binary segment hierarchy. Node ids equal their index in `nodes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTree", into = "RawTree")]
pub struct CaptionTree {
    root: usize,
    nodes: Vec<Node>,
    parents: Vec<Option<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawTree {
    root: usize,
    nodes: Vec<Node>,
}

impl TryFrom<RawTree> for CaptionTree {
    type Error = SegError;
    fn try_from(raw: RawTree) -> Result<Self, SegError> {
        CaptionTree::from_parts(raw.nodes, raw.root)
    }
}

impl From<CaptionTree> for RawTree {
    fn from(t: CaptionTree) -> Self {
        RawTree {
            root: t.root,
            nodes: t.nodes,
        }
    }
}

/// One agglomeration step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub parent: usize,
    pub delta: f64,
}

impl CaptionTree {
    pub fn from_parts(nodes: Vec<Node>, root: usize) -> Result<Self, SegError> {
        let bad = |m: String| SegError::InvalidTree(m);
        if nodes.is_empty() {
            return Err(bad("no nodes".into()));
        }
        if root >= nodes.len() {
            return Err(bad(format!("root {root} out of range")));
        }
        let mut parents = vec![None; nodes.len()];
        for (i, node) in nodes.iter().enumerate() {
            if node.id != i {
                return Err(bad(format!("node at index {i} has id {}", node.id)));
            }
            if !(node.start < node.end) {
                return Err(bad(format!("node {i} has an empty span")));
            }
            match node.children.as_slice() {
                [] => {}
                &[l, r] => {
                    for c in [l, r] {
                        if c >= nodes.len() || c == i {
                            return Err(bad(format!("node {i} has invalid child {c}")));
                        }
                        if parents[c].replace(i).is_some() {
                            return Err(bad(format!("node {c} has two parents")));
                        }
                    }
                    let (ln, rn) = (&nodes[l], &nodes[r]);
                    if ln.start != node.start || rn.end != node.end || ln.end > rn.start {
                        return Err(bad(format!(
                            "children of node {i} do not partition its span"
                        )));
                    }
                }
                other => {
                    return Err(bad(format!("node {i} has {} children", other.len())));
                }
            }
        }
        if parents[root].is_some() {
            return Err(bad("root has a parent".into()));
        }
        let orphans = parents
            .iter()
            .enumerate()
            .filter(|&(i, p)| i != root && p.is_none())
            .count();
        if orphans > 0 {
            return Err(bad(format!(
                "{orphans} nodes besides the root have no parent"
            )));
        }
        let tree = Self {
            root,
            nodes,
            parents,
        };
        // parent links alone admit cycles detached from the root
        if tree.bfs_order().len() != tree.nodes.len() {
            return Err(bad("nodes unreachable from root".into()));
        }
        Ok(tree)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &Node {
        &self.nodes[id]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn parent(&self, id: usize) -> Option<usize> {
        self.parents[id]
    }

    pub fn depth(&self, mut id: usize) -> usize {
        let mut d = 0;
        while let Some(p) = self.parents[id] {
            d += 1;
            id = p;
        }
        d
    }

    pub fn set_caption(&mut self, id: usize, caption: impl Into<String>) {
        self.nodes[id].caption = Some(caption.into());
    }

    /// Node ids in breadth-first order from the root, earlier child first.
    pub fn bfs_order(&self) -> Vec<usize> {
        self.bfs_from(self.root)
    }

    pub fn bfs_from(&self, start: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([start]);
        while let Some(id) = queue.pop_front() {
            if std::mem::replace(&mut seen[id], true) {
                continue;
            }
            out.push(id);
            queue.extend(self.nodes[id].children.iter().copied());
        }
        out
    }

    /// Leaf ids of the subtree rooted at `id`, in temporal order.
    pub fn leaves_under(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n];
            if node.is_leaf() {
                out.push(n);
            } else {
                stack.extend(node.children.iter().rev().copied());
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SegError> {
        serde_json::from_str(text).map_err(|e| SegError::InvalidTree(e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    /// Frames pre-pooled into each leaf; 1 keeps one leaf per frame.
    pub leaf_frames: usize,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { leaf_frames: 1 }
    }
}

pub fn build_tree(stream: &FeatureStream) -> Result<CaptionTree, SegError> {
    build_tree_traced(stream, BuildOptions::default()).map(|(t, _)| t)
}

/// Builds the tree and returns the merge trace in the order merges happened.
///
/// Leaves occupy ids `0..L`; the i-th merge creates node `L + i`.
pub fn build_tree_traced(
    stream: &FeatureStream,
    opts: BuildOptions,
) -> Result<(CaptionTree, Vec<Merge>), SegError> {
    if stream.is_empty() {
        return Err(SegError::EmptyStream);
    }
    let per_leaf = opts.leaf_frames.max(1);
    let mut nodes = Vec::new();
    let mut active: Vec<(usize, SegStat)> = Vec::new();
    for chunk in stream.frames().chunks(per_leaf) {
        let stat = chunk[1..]
            .iter()
            .fold(SegStat::from_frame(&chunk[0]), |acc, f| {
                acc.merge(&SegStat::from_frame(f))
            });
        let id = nodes.len();
        nodes.push(Node {
            id,
            start: stat.start,
            end: stat.end,
            children: Vec::new(),
            caption: None,
        });
        active.push((id, stat));
    }

    // deltas[i] is the cost of merging active[i] with active[i + 1]
    let mut deltas: Vec<f64> = active
        .windows(2)
        .map(|w| ward_delta(&w[0].1, &w[1].1))
        .collect();
    let mut merges = Vec::with_capacity(active.len().saturating_sub(1));

    while active.len() > 1 {
        let mut best = 0;
        for (i, &d) in deltas.iter().enumerate().skip(1) {
            if d < deltas[best] {
                best = i;
            }
        }
        let delta = deltas[best];
        let (right_id, right_stat) = active.remove(best + 1);
        let (left_id, left_stat) = &active[best];
        let merged = left_stat.merge(&right_stat);
        let parent = nodes.len();
        nodes.push(Node {
            id: parent,
            start: merged.start,
            end: merged.end,
            children: vec![*left_id, right_id],
            caption: None,
        });
        merges.push(Merge {
            left: *left_id,
            right: right_id,
            parent,
            delta,
        });
        active[best] = (parent, merged);
        deltas.remove(best);
        if best > 0 {
            deltas[best - 1] = ward_delta(&active[best - 1].1, &active[best].1);
        }
        if best < deltas.len() {
            deltas[best] = ward_delta(&active[best].1, &active[best + 1].1);
        }
    }

    let root = active[0].0;
    let tree = CaptionTree::from_parts(nodes, root)?;
    Ok((tree, merges))
}

/// Ids of nodes lasting at least `min_duration` seconds, in BFS order.
pub fn filter_captionable(tree: &CaptionTree, min_duration: f64) -> Vec<usize> {
    tree.bfs_order()
        .into_iter()
        .filter(|&id| tree.node(id).duration() >= min_duration - DURATION_EPS)
        .collect()
}

/// The first `k` nodes of a breadth-first traversal.
pub fn bfs_windows(tree: &CaptionTree, k: usize) -> Vec<usize> {
    let mut order = tree.bfs_order();
    order.truncate(k.max(1));
    order
}

/// How extraction windows are drawn from a tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub count: usize,
    /// Nodes shorter than this are dropped before taking the first `count`.
    pub min_duration: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            count: DEFAULT_WINDOWS,
            min_duration: DEFAULT_MIN_CAPTION_SECONDS,
        }
    }
}

/// BFS window sampling over captionable nodes only.
pub fn sample_windows(tree: &CaptionTree, cfg: WindowConfig) -> Vec<usize> {
    let mut ids = filter_captionable(tree, cfg.min_duration);
    ids.truncate(cfg.count.max(1));
    ids
}

#[derive(Debug, Clone, Default)]
pub struct DfsOptions<'a> {
    /// Subtree to render; defaults to the tree root.
    pub root: Option<usize>,
    /// Children shorter than this are not shown.
    pub min_duration: f64,
    /// Captions overriding the ones stored in the tree.
    pub labels: Option<&'a HashMap<usize, String>>,
}

fn span_text(node: &Node) -> String {
    format!(
        "{:.2}s -> {:.2}s (duration: {:.1}s)",
        node.start,
        node.end,
        node.duration()
    )
}

/// Markdown outline of the whole tree in DFS order.
pub fn dfs_render(tree: &CaptionTree, labels: Option<&HashMap<usize, String>>) -> String {
    dfs_render_with(
        tree,
        &DfsOptions {
            labels,
            ..DfsOptions::default()
        },
    )
}

/// Markdown outline in DFS order.
///
/// The rendered root is a `#` header, internal descendants are
/// `## Segment 1`, `### Segment 1.1` ... headers, and nodes without shown
/// children become bold span lines followed by their caption.
pub fn dfs_render_with(tree: &CaptionTree, opts: &DfsOptions<'_>) -> String {
    let root = opts.root.unwrap_or(tree.root());
    let caption_of = |id: usize| -> Option<&str> {
        opts.labels
            .and_then(|l| l.get(&id))
            .map(String::as_str)
            .or(tree.node(id).caption.as_deref())
            .filter(|c| !c.trim().is_empty())
    };
    let shown_children = |id: usize| -> Vec<usize> {
        tree.node(id)
            .children
            .iter()
            .copied()
            .filter(|&c| tree.node(c).duration() >= opts.min_duration - DURATION_EPS)
            .collect()
    };

    let mut entries: Vec<String> = Vec::new();
    // (node, depth, dotted index)
    let mut stack: Vec<(usize, usize, Vec<usize>)> = vec![(root, 0, Vec::new())];
    while let Some((id, depth, path)) = stack.pop() {
        let node = tree.node(id);
        let children = shown_children(id);
        let caption = caption_of(id);
        if depth == 0 || !children.is_empty() {
            let header = if depth == 0 {
                format!("# {}", span_text(node))
            } else {
                let dotted: Vec<String> = path.iter().map(|p| p.to_string()).collect();
                format!(
                    "{} Segment {} - {}",
                    "#".repeat(depth + 1),
                    dotted.join("."),
                    span_text(node)
                )
            };
            entries.push(header);
            if let Some(c) = caption {
                entries.push(c.to_string());
            }
        } else {
            let mut line = format!("**{}**:", span_text(node));
            if let Some(c) = caption {
                line.push(' ');
                line.push_str(c);
            }
            entries.push(line);
        }
        for (pos, &child) in children.iter().enumerate().rev() {
            let mut child_path = path.clone();
            child_path.push(pos + 1);
            stack.push((child, depth + 1, child_path));
        }
    }
    let mut out = entries.join("\n\n");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stat(values: &[f64]) -> SegStat {
        let frames: Vec<Frame> = values
            .iter()
            .enumerate()
            .map(|(i, &x)| Frame {
                t0: i as f64,
                t1: i as f64 + 1.0,
                v: vec![x],
            })
            .collect();
        frames[1..]
            .iter()
            .fold(SegStat::from_frame(&frames[0]), |acc, f| {
                acc.merge(&SegStat::from_frame(f))
            })
    }

    fn stream_1d(values: &[f64]) -> FeatureStream {
        FeatureStream::new(
            1,
            values
                .iter()
                .enumerate()
                .map(|(i, &x)| Frame {
                    t0: i as f64,
                    t1: i as f64 + 1.0,
                    v: vec![x],
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn ward_spot_values() {
        assert_eq!(ward_delta(&stat(&[3.0]), &stat(&[3.0])), 0.0);
        assert_eq!(ward_delta(&stat(&[0.0]), &stat(&[2.0])), 2.0);
        assert_eq!(ward_delta(&stat(&[0.0, 0.0]), &stat(&[10.0, 10.0])), 100.0);
        let (a, b) = (stat(&[1.0, 4.0]), stat(&[-2.0]));
        assert_eq!(ward_delta(&a, &b), ward_delta(&b, &a));
    }

    #[test]
    fn build_pairs_before_joining_plateaus() {
        let (tree, merges) =
            build_tree_traced(&stream_1d(&[0.0, 0.0, 10.0, 10.0]), BuildOptions::default())
                .unwrap();
        assert_eq!(merges.len(), 3);
        assert_eq!(
            (merges[0].left, merges[0].right, merges[0].delta),
            (0, 1, 0.0)
        );
        assert_eq!(
            (merges[1].left, merges[1].right, merges[1].delta),
            (2, 3, 0.0)
        );
        assert_eq!((merges[2].left, merges[2].right), (4, 5));
        assert_eq!(merges[2].delta, 100.0);
        assert_eq!(tree.root(), 6);
        assert_eq!((tree.node(6).start, tree.node(6).end), (0.0, 4.0));
    }

    #[test]
    fn single_frame_is_root_leaf() {
        let tree = build_tree(&stream_1d(&[1.0])).unwrap();
        assert_eq!(tree.len(), 1);
        assert!(tree.node(tree.root()).is_leaf());
        assert_eq!(
            dfs_render(&tree, None),
            "# 0.00s -> 1.00s (duration: 1.0s)\n"
        );
    }

    #[test]
    fn empty_stream_errors() {
        let s = FeatureStream::new(2, vec![]).unwrap();
        assert!(matches!(build_tree(&s), Err(SegError::EmptyStream)));
    }

    #[test]
    fn pooled_leaves() {
        let s = stream_1d(&[0.0, 0.0, 5.0, 5.0, 9.0]);
        let (tree, merges) = build_tree_traced(&s, BuildOptions { leaf_frames: 2 }).unwrap();
        assert_eq!(merges.len(), 2);
        assert_eq!(tree.len(), 5);
        assert_eq!(tree.node(2).start, 4.0);
    }

    #[test]
    fn load_stream_ok_and_errors() {
        let ok = "{\"dim\": 2, \"unit\": \"seconds\"}\n{\"t0\":0,\"t1\":1,\"v\":[1,2]}\n{\"t0\":1,\"t1\":2,\"v\":[1,2]}\n{\"t0\":2,\"t1\":3.5,\"v\":[0.5,-2]}\n";
        let s = load_feature_stream(ok.as_bytes()).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(load_feature_stream(s.to_jsonl().as_bytes()).unwrap(), s);

        let bad_dim = "{\"dim\": 2}\n{\"t0\":0,\"t1\":1,\"v\":[1,2,3]}\n";
        assert!(matches!(
            load_feature_stream(bad_dim.as_bytes()),
            Err(SegError::DimMismatch {
                line: 2,
                expected: 2,
                got: 3
            })
        ));
        let desc = "{\"dim\": 1}\n{\"t0\":5,\"t1\":6,\"v\":[1]}\n{\"t0\":1,\"t1\":2,\"v\":[1]}\n";
        assert!(matches!(
            load_feature_stream(desc.as_bytes()),
            Err(SegError::NonMonotonic { line: 3 })
        ));
        assert!(matches!(
            load_feature_stream("{\"dims\": 2}\n".as_bytes()),
            Err(SegError::BadHeader(_))
        ));
        assert!(matches!(
            load_feature_stream("{\"dim\": 0}\n".as_bytes()),
            Err(SegError::BadHeader(_))
        ));
        assert!(matches!(
            load_feature_stream("{\"dim\": 1, \"unit\": \"frames\"}\n".as_bytes()),
            Err(SegError::BadHeader(_))
        ));
        assert!(matches!(
            load_feature_stream("".as_bytes()),
            Err(SegError::BadHeader(_))
        ));
    }

    fn perfect_seven() -> CaptionTree {
        // leaves 0..4 of 10s each, internal 4, 5, root 6
        let leaf = |id: usize| Node {
            id,
            start: id as f64 * 10.0,
            end: id as f64 * 10.0 + 10.0,
            children: vec![],
            caption: None,
        };
        let mut nodes: Vec<Node> = (0..4).map(leaf).collect();
        nodes.push(Node {
            id: 4,
            start: 0.0,
            end: 20.0,
            children: vec![0, 1],
            caption: None,
        });
        nodes.push(Node {
            id: 5,
            start: 20.0,
            end: 40.0,
            children: vec![2, 3],
            caption: None,
        });
        nodes.push(Node {
            id: 6,
            start: 0.0,
            end: 40.0,
            children: vec![4, 5],
            caption: None,
        });
        CaptionTree::from_parts(nodes, 6).unwrap()
    }

    #[test]
    fn bfs_window_selection() {
        let t = perfect_seven();
        assert_eq!(bfs_windows(&t, 5), vec![6, 4, 5, 0, 1]);
        assert_eq!(bfs_windows(&t, 1), vec![6]);
        assert_eq!(bfs_windows(&t, 100).len(), 7);
        let single = build_tree(&stream_1d(&[0.0])).unwrap();
        assert_eq!(bfs_windows(&single, 5), vec![single.root()]);
    }

    #[test]
    fn captionable_filter() {
        let t = perfect_seven();
        assert_eq!(filter_captionable(&t, 0.0).len(), 7);
        assert_eq!(filter_captionable(&t, 15.0), vec![6, 4, 5]);
        assert!(filter_captionable(&t, 50.0).is_empty());
        let short = build_tree(&stream_1d(&[0.0, 1.0, 2.0])).unwrap();
        assert!(filter_captionable(&short, 5.0).is_empty());
        assert_eq!(
            sample_windows(
                &t,
                WindowConfig {
                    count: 2,
                    min_duration: 15.0
                }
            ),
            vec![6, 4]
        );
    }

    #[test]
    fn dfs_parent_precedes_descendants() {
        let mut t = perfect_seven();
        t.set_caption(6, "whole");
        t.set_caption(0, "first");
        let text = dfs_render(&t, None);
        let lines: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
        assert_eq!(
            lines,
            vec![
                "# 0.00s -> 40.00s (duration: 40.0s)",
                "whole",
                "## Segment 1 - 0.00s -> 20.00s (duration: 20.0s)",
                "**0.00s -> 10.00s (duration: 10.0s)**: first",
                "**10.00s -> 20.00s (duration: 10.0s)**:",
                "## Segment 2 - 20.00s -> 40.00s (duration: 20.0s)",
                "**20.00s -> 30.00s (duration: 10.0s)**:",
                "**30.00s -> 40.00s (duration: 10.0s)**:",
            ]
        );
        let labels = HashMap::from([(5usize, "override".to_string())]);
        assert!(dfs_render(&t, Some(&labels)).contains("(duration: 20.0s)\n\noverride\n"));
    }

    #[test]
    fn invalid_trees_rejected() {
        let mut nodes = perfect_seven().nodes().to_vec();
        nodes[4].children = vec![0, 2];
        assert!(CaptionTree::from_parts(nodes, 6).is_err());
        let mut nodes = perfect_seven().nodes().to_vec();
        nodes[6].children = vec![4];
        assert!(CaptionTree::from_parts(nodes, 6).is_err());
        assert!(CaptionTree::from_parts(perfect_seven().nodes().to_vec(), 4).is_err());
    }

    #[test]
    fn json_round_trip() {
        let mut t = perfect_seven();
        t.set_caption(3, "a caption");
        let back = CaptionTree::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v["root"], 6);
        assert_eq!(v["nodes"][3]["caption"], "a caption");
    }
}
