//! Two-level label hierarchies: the fine→coarse mapping, probability
//! aggregation, and a confusion-driven agglomerative builder.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::Matrix;
use crate::scalar::Scalar;

/// ANIMAL-10N class order used by [`Builtin::Animal10n`].
pub const ANIMAL10N_CLASSES: [&str; 10] = [
    "cat",
    "lynx",
    "jaguar",
    "cheetah",
    "wolf",
    "coyote",
    "chimpanzee",
    "orangutan",
    "hamster",
    "guinea pig",
];

/// Surjective assignment of `num_fine` classes to `num_coarse` groups.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawHierarchy")]
pub struct Hierarchy {
    num_coarse: usize,
    fine_to_coarse: Vec<usize>,
}

#[derive(Deserialize)]
struct RawHierarchy {
    num_coarse: usize,
    fine_to_coarse: Vec<usize>,
}

impl TryFrom<RawHierarchy> for Hierarchy {
    type Error = Error;

    fn try_from(raw: RawHierarchy) -> Result<Self> {
        Hierarchy::new(raw.fine_to_coarse, raw.num_coarse)
    }
}

impl Hierarchy {
    pub fn new(fine_to_coarse: Vec<usize>, num_coarse: usize) -> Result<Self> {
        if fine_to_coarse.is_empty() {
            return Err(Error::invalid("hierarchy has no fine classes"));
        }
        if num_coarse == 0 || num_coarse > fine_to_coarse.len() {
            return Err(Error::invalid(format!(
                "{num_coarse} coarse groups for {} fine classes",
                fine_to_coarse.len()
            )));
        }
        let mut hit = vec![false; num_coarse];
        for (fine, &c) in fine_to_coarse.iter().enumerate() {
            if c >= num_coarse {
                return Err(Error::invalid(format!(
                    "fine class {fine} maps to group {c}, but only {num_coarse} groups exist"
                )));
            }
            hit[c] = true;
        }
        if let Some(empty) = hit.iter().position(|&h| !h) {
            return Err(Error::invalid(format!("coarse group {empty} has no fine class")));
        }
        Ok(Hierarchy {
            num_coarse,
            fine_to_coarse,
        })
    }

    pub fn identity(k: usize) -> Result<Self> {
        Hierarchy::new((0..k).collect(), k)
    }

    /// Groups of `per_group` consecutive classes: class `c` goes to `c / per_group`.
    pub fn contiguous(num_groups: usize, per_group: usize) -> Result<Self> {
        if per_group == 0 {
            return Err(Error::invalid("groups need at least one class"));
        }
        Hierarchy::new(
            (0..num_groups * per_group).map(|c| c / per_group).collect(),
            num_groups,
        )
    }

    pub fn num_fine(&self) -> usize {
        self.fine_to_coarse.len()
    }

    pub fn num_coarse(&self) -> usize {
        self.num_coarse
    }

    pub fn fine_to_coarse(&self) -> &[usize] {
        &self.fine_to_coarse
    }

    #[inline]
    pub fn coarse_of(&self, fine: usize) -> usize {
        self.fine_to_coarse[fine]
    }

    /// Members of each coarse group, in increasing fine index.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.num_coarse];
        for (fine, &c) in self.fine_to_coarse.iter().enumerate() {
            groups[c].push(fine);
        }
        groups
    }

    /// True when both hierarchies induce the same partition, whatever the group numbering.
    pub fn same_partition(&self, other: &Hierarchy) -> bool {
        if self.num_fine() != other.num_fine() || self.num_coarse != other.num_coarse {
            return false;
        }
        let mut forward = vec![usize::MAX; self.num_coarse];
        let mut backward = vec![usize::MAX; other.num_coarse];
        for (&a, &b) in self.fine_to_coarse.iter().zip(&other.fine_to_coarse) {
            if forward[a] == usize::MAX && backward[b] == usize::MAX {
                forward[a] = b;
                backward[b] = a;
            } else if forward[a] != b || backward[b] != a {
                return false;
            }
        }
        true
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Hierarchy::from_json(&text)
    }
}

/// Coarse label for each fine label.
pub fn map_labels(h: &Hierarchy, fine_labels: &[usize]) -> Result<Vec<usize>> {
    fine_labels
        .iter()
        .map(|&y| {
            h.fine_to_coarse
                .get(y)
                .copied()
                .ok_or(Error::LabelOutOfRange {
                    label: y,
                    num_classes: h.num_fine(),
                })
        })
        .collect()
}

/// Sums each row's fine probabilities within every coarse group.
pub fn map_probs<T: Scalar>(h: &Hierarchy, fine_probs: &Matrix<T>) -> Result<Matrix<T>> {
    if fine_probs.cols() != h.num_fine() {
        return Err(Error::ShapeMismatch {
            op: "map_probs",
            left: fine_probs.shape(),
            right: (h.num_fine(), h.num_coarse()),
        });
    }
    let mut out = Matrix::zeros(fine_probs.rows(), h.num_coarse());
    for i in 0..fine_probs.rows() {
        let src = fine_probs.row(i);
        let dst = out.row_mut(i);
        for (&p, &c) in src.iter().zip(&h.fine_to_coarse) {
            dst[c] += p;
        }
    }
    Ok(out)
}

/// Builds a `num_coarse`-group hierarchy from a `K×K` confusion matrix.
///
/// Similarity is the symmetrized off-diagonal confusion `(C + Cᵀ)/2`. Clusters
/// are merged by average linkage, most-confused pair first, until `num_coarse`
/// remain. Exact ties go to the pair whose smallest members are lowest. Groups
/// are numbered by their smallest fine class.
pub fn learn_hierarchy(confusion: &Matrix<f64>, num_coarse: usize) -> Result<Hierarchy> {
    let k = confusion.rows();
    if confusion.cols() != k {
        return Err(Error::ShapeMismatch {
            op: "learn_hierarchy",
            left: confusion.shape(),
            right: (k, k),
        });
    }
    if num_coarse < 2 || num_coarse >= k {
        return Err(Error::invalid(format!(
            "need 2 <= num_coarse < {k}, got {num_coarse}"
        )));
    }
    if confusion.data().iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid("confusion entries must be finite and non-negative"));
    }

    let sim = |a: usize, b: usize| 0.5 * (confusion[(a, b)] + confusion[(b, a)]);
    // Clusters kept sorted by smallest member; members sorted ascending.
    let mut clusters: Vec<Vec<usize>> = (0..k).map(|c| vec![c]).collect();
    while clusters.len() > num_coarse {
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..clusters.len() {
            for j in (i + 1)..clusters.len() {
                let mut total = 0.0;
                for &a in &clusters[i] {
                    for &b in &clusters[j] {
                        total += sim(a, b);
                    }
                }
                let avg = total / (clusters[i].len() * clusters[j].len()) as f64;
                // Strict comparison keeps the earliest (lowest-index) pair on ties.
                if best.map_or(true, |(s, _, _)| avg > s) {
                    best = Some((avg, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("at least two clusters");
        let absorbed = clusters.remove(j);
        clusters[i].extend(absorbed);
        clusters[i].sort_unstable();
    }
    clusters.sort_by_key(|c| c[0]);

    let mut fine_to_coarse = vec![0; k];
    for (g, members) in clusters.iter().enumerate() {
        for &m in members {
            fine_to_coarse[m] = g;
        }
    }
    Hierarchy::new(fine_to_coarse, num_coarse)
}

/// Published hierarchies plus the trivial identity one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Builtin {
    /// Digit pairs (0,6) (1,7) (2,8) (3,5) (4,9).
    Mnist,
    /// Animal pairs over [`ANIMAL10N_CLASSES`].
    Animal10n,
    Identity(usize),
}

impl FromStr for Builtin {
    type Err = Error;

    /// Accepts `mnist`, `animal10n` and `identity(K)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s.to_ascii_lowercase().as_str() {
            "mnist" => return Ok(Builtin::Mnist),
            "animal10n" | "animal-10n" => return Ok(Builtin::Animal10n),
            _ => {}
        }
        if let Some(k) = s
            .strip_prefix("identity(")
            .and_then(|rest| rest.strip_suffix(')'))
        {
            let k = k
                .trim()
                .parse()
                .map_err(|_| Error::invalid(format!("bad class count in `{s}`")))?;
            return Ok(Builtin::Identity(k));
        }
        Err(Error::invalid(format!("unknown builtin hierarchy `{s}`")))
    }
}

impl fmt::Display for Builtin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Builtin::Mnist => write!(f, "mnist"),
            Builtin::Animal10n => write!(f, "animal10n"),
            Builtin::Identity(k) => write!(f, "identity({k})"),
        }
    }
}

pub fn builtin_hierarchy(which: Builtin) -> Result<Hierarchy> {
    match which {
        Builtin::Mnist => Hierarchy::new(vec![0, 1, 2, 3, 4, 3, 0, 1, 2, 4], 5),
        Builtin::Animal10n => Hierarchy::contiguous(5, 2),
        Builtin::Identity(k) => Hierarchy::identity(k),
    }
}
