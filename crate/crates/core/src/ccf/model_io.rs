//! Text model format (`.ccf`).
//!
//! ```text
//! ccfmap-forest
//! format_version 1
//! n_features 13
//! classes environment metal shingles thatch
//! n_trees 10
//! feature_subsample 4
//! min_node_size 2
//! max_depth none
//! impurity gini
//! mode ccf
//! gamma 1e-6
//! seed 0
//! tree 0 nodes=3
//! 0 split left=1 right=2 threshold=0.25 features=0,3 projection=0.6,0.8
//! 1 leaf 1,0,0,0
//! 2 leaf 0,0.5,0.5,0
//! end
//! ```
//!
//! Reals are written in shortest round-trip form, so a parsed model
//! predicts bit-identically to the one that was written.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use super::{Forest, ForestParams, Impurity, Node, SplitMode, Tree};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "ccfmap-forest";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("unsupported model format_version {0} (this build reads {FORMAT_VERSION})")]
    UnsupportedVersion(u32),
    #[error("unexpected end of model document after line {0}")]
    Truncated(usize),
}

pub fn serialize(forest: &Forest) -> String {
    let p = &forest.params;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "format_version {}", forest.format_version);
    let _ = writeln!(out, "n_features {}", forest.n_features);
    let _ = writeln!(out, "classes {}", forest.class_names.join(" "));
    let _ = writeln!(out, "n_trees {}", p.n_trees);
    let _ = writeln!(
        out,
        "feature_subsample {}",
        p.resolved_subsample(forest.n_features)
    );
    let _ = writeln!(out, "min_node_size {}", p.min_node_size);
    match p.max_depth {
        Some(d) => {
            let _ = writeln!(out, "max_depth {d}");
        }
        None => {
            let _ = writeln!(out, "max_depth none");
        }
    }
    let _ = writeln!(out, "impurity {}", p.impurity);
    let _ = writeln!(out, "mode {}", p.mode);
    let _ = writeln!(out, "gamma {:?}", p.gamma);
    let _ = writeln!(out, "seed {}", p.seed);
    for (t, tree) in forest.trees.iter().enumerate() {
        let _ = writeln!(out, "tree {t} nodes={}", tree.nodes.len());
        for (i, node) in tree.nodes.iter().enumerate() {
            match node {
                Node::Split {
                    features,
                    projection,
                    threshold,
                    left,
                    right,
                } => {
                    let _ = writeln!(
                        out,
                        "{i} split left={left} right={right} threshold={threshold:?} features={} projection={}",
                        join(features.iter().map(|f| f.to_string())),
                        join(projection.iter().map(|v| format!("{v:?}"))),
                    );
                }
                Node::Leaf { distribution } => {
                    let _ = writeln!(
                        out,
                        "{i} leaf {}",
                        join(distribution.iter().map(|v| format!("{v:?}")))
                    );
                }
            }
        }
    }
    out.push_str("end\n");
    out
}

fn join(items: impl Iterator<Item = String>) -> String {
    items.collect::<Vec<_>>().join(",")
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), ModelParseError> {
        match self.inner.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l.trim_end_matches('\r')))
            }
            None => Err(ModelParseError::Truncated(self.last)),
        }
    }

    /// Next line of the form `key value`, returning `value`.
    fn field(&mut self, key: &str) -> Result<(usize, &'a str), ModelParseError> {
        let (n, line) = self.next()?;
        match line.split_once(' ') {
            Some((k, v)) if k == key => Ok((n, v)),
            _ => Err(syntax(n, format!("expected field `{key}`, found {line:?}"))),
        }
    }
}

fn syntax(line: usize, message: impl Into<String>) -> ModelParseError {
    ModelParseError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse<T: FromStr>(line: usize, field: &str, raw: &str) -> Result<T, ModelParseError> {
    raw.parse()
        .map_err(|_| syntax(line, format!("field `{field}`: cannot parse {raw:?}")))
}

fn parse_list<T: FromStr>(line: usize, field: &str, raw: &str) -> Result<Vec<T>, ModelParseError> {
    raw.split(',').map(|v| parse(line, field, v)).collect()
}

fn finite(line: usize, field: &str, v: f64) -> Result<f64, ModelParseError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(syntax(line, format!("field `{field}` must be finite")))
    }
}

pub fn deserialize(text: &str) -> Result<Forest, ModelParseError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };

    let (n, magic) = lines.next()?;
    if magic != MAGIC {
        return Err(syntax(
            n,
            format!("expected header `{MAGIC}`, found {magic:?}"),
        ));
    }
    let (n, v) = lines.field("format_version")?;
    let version: u32 = parse(n, "format_version", v)?;
    if version != FORMAT_VERSION {
        return Err(ModelParseError::UnsupportedVersion(version));
    }

    let (n, v) = lines.field("n_features")?;
    let n_features: usize = parse(n, "n_features", v)?;
    if n_features == 0 {
        return Err(syntax(n, "n_features must be >= 1"));
    }
    let (n, v) = lines.field("classes")?;
    let class_names: Vec<String> = v.split(' ').map(str::to_owned).collect();
    if class_names.len() < 2 || class_names.iter().any(String::is_empty) {
        return Err(syntax(n, "`classes` needs at least two non-empty names"));
    }
    let n_classes = class_names.len();

    let (n, v) = lines.field("n_trees")?;
    let n_trees: usize = parse(n, "n_trees", v)?;
    if n_trees == 0 {
        return Err(syntax(n, "n_trees must be >= 1"));
    }
    let (n, v) = lines.field("feature_subsample")?;
    let lambda: usize = parse(n, "feature_subsample", v)?;
    if lambda == 0 || lambda > n_features {
        return Err(syntax(
            n,
            format!("feature_subsample {lambda} outside 1..={n_features}"),
        ));
    }
    let (n, v) = lines.field("min_node_size")?;
    let min_node_size: usize = parse(n, "min_node_size", v)?;
    let (n, v) = lines.field("max_depth")?;
    let max_depth = match v {
        "none" => None,
        d => Some(parse(n, "max_depth", d)?),
    };
    let (n, v) = lines.field("impurity")?;
    let impurity: Impurity = v.parse().map_err(|e: String| syntax(n, e))?;
    let (n, v) = lines.field("mode")?;
    let mode: SplitMode = v.parse().map_err(|e: String| syntax(n, e))?;
    let (n, v) = lines.field("gamma")?;
    let gamma = finite(n, "gamma", parse(n, "gamma", v)?)?;
    let (n, v) = lines.field("seed")?;
    let seed: u64 = parse(n, "seed", v)?;

    let mut trees = Vec::with_capacity(n_trees);
    for t in 0..n_trees {
        let (n, v) = lines.field("tree")?;
        let (index, count) = v
            .split_once(' ')
            .ok_or_else(|| syntax(n, "expected `tree <index> nodes=<count>`"))?;
        if parse::<usize>(n, "tree", index)? != t {
            return Err(syntax(n, format!("expected tree {t}, found {index}")));
        }
        let count = count
            .strip_prefix("nodes=")
            .ok_or_else(|| syntax(n, "expected `nodes=<count>`"))?;
        let count: usize = parse(n, "nodes", count)?;
        if count == 0 {
            return Err(syntax(n, "a tree needs at least one node"));
        }
        let mut nodes = Vec::with_capacity(count);
        let mut referenced = vec![false; count];
        referenced[0] = true;
        for i in 0..count {
            let (n, line) = lines.next()?;
            let node = parse_node(n, line, i, count, n_features, n_classes)?;
            if let Node::Split { left, right, .. } = &node {
                for &c in [left, right] {
                    if referenced[c] {
                        return Err(syntax(n, format!("node {c} has more than one parent")));
                    }
                    referenced[c] = true;
                }
            }
            nodes.push(node);
        }
        if let Some(orphan) = referenced.iter().position(|r| !r) {
            return Err(syntax(n, format!("tree {t}: node {orphan} is unreachable")));
        }
        trees.push(Tree { nodes });
    }
    let (n, end) = lines.next()?;
    if end != "end" {
        return Err(syntax(n, format!("expected `end`, found {end:?}")));
    }

    Ok(Forest {
        params: ForestParams {
            n_trees,
            n_classes,
            feature_subsample: Some(lambda),
            min_node_size,
            max_depth,
            impurity,
            mode,
            gamma,
            seed,
        },
        trees,
        n_features,
        class_names,
        format_version: version,
    })
}

fn parse_node(
    n: usize,
    line: &str,
    index: usize,
    count: usize,
    n_features: usize,
    n_classes: usize,
) -> Result<Node, ModelParseError> {
    let mut tokens = line.split(' ');
    let id = tokens.next().unwrap_or_default();
    if parse::<usize>(n, "node index", id)? != index {
        return Err(syntax(n, format!("expected node {index}, found {id}")));
    }
    match tokens.next() {
        Some("leaf") => {
            let raw = tokens
                .next()
                .ok_or_else(|| syntax(n, "leaf without distribution"))?;
            let distribution: Vec<f64> = parse_list(n, "leaf", raw)?;
            if distribution.len() != n_classes {
                return Err(syntax(
                    n,
                    format!(
                        "leaf has {} entries, expected {n_classes}",
                        distribution.len()
                    ),
                ));
            }
            if distribution.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(syntax(n, "leaf entries must be finite and >= 0"));
            }
            let sum: f64 = distribution.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(syntax(n, format!("leaf distribution sums to {sum}")));
            }
            if tokens.next().is_some() {
                return Err(syntax(n, "trailing tokens after leaf"));
            }
            Ok(Node::Leaf { distribution })
        }
        Some("split") => {
            let mut left = None;
            let mut right = None;
            let mut threshold = None;
            let mut features: Option<Vec<usize>> = None;
            let mut projection: Option<Vec<f64>> = None;
            for tok in tokens {
                let (k, v) = tok
                    .split_once('=')
                    .ok_or_else(|| syntax(n, format!("expected key=value, found {tok:?}")))?;
                match k {
                    "left" => left = Some(parse::<usize>(n, k, v)?),
                    "right" => right = Some(parse::<usize>(n, k, v)?),
                    "threshold" => threshold = Some(finite(n, k, parse(n, k, v)?)?),
                    "features" => features = Some(parse_list(n, k, v)?),
                    "projection" => projection = Some(parse_list(n, k, v)?),
                    other => return Err(syntax(n, format!("unknown split field `{other}`"))),
                }
            }
            let missing = |f: &str| syntax(n, format!("split is missing `{f}`"));
            let left = left.ok_or_else(|| missing("left"))?;
            let right = right.ok_or_else(|| missing("right"))?;
            let threshold = threshold.ok_or_else(|| missing("threshold"))?;
            let features = features.ok_or_else(|| missing("features"))?;
            let projection = projection.ok_or_else(|| missing("projection"))?;
            for c in [left, right] {
                if c <= index || c >= count {
                    return Err(syntax(
                        n,
                        format!("child {c} out of range for node {index}"),
                    ));
                }
            }
            if left == right {
                return Err(syntax(n, "left and right children coincide"));
            }
            if features.len() != projection.len() {
                return Err(syntax(n, "features and projection lengths differ"));
            }
            if let Some(f) = features.iter().find(|&&f| f >= n_features) {
                return Err(syntax(
                    n,
                    format!("feature index {f} >= n_features {n_features}"),
                ));
            }
            if projection.iter().any(|v| !v.is_finite()) || projection.iter().all(|&v| v == 0.0) {
                return Err(syntax(n, "projection must be finite with a nonzero entry"));
            }
            Ok(Node::Split {
                features,
                projection,
                threshold,
                left,
                right,
            })
        }
        other => Err(syntax(
            n,
            format!("expected `leaf` or `split`, found {other:?}"),
        )),
    }
}
