use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng;

/// Unordered index pair, stored as `(min, max)`.
pub type Pair = (usize, usize);

/// Must-link and cannot-link instance pairs. Pairs are kept canonical
/// (`i < j`), deduplicated and sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintSet {
    pub must: Vec<Pair>,
    pub cannot: Vec<Pair>,
}

/// Count and content hash of a constraint set, recorded in model headers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fingerprint {
    pub must: usize,
    pub cannot: usize,
    pub hash: String,
}

fn canonical(pairs: impl IntoIterator<Item = Pair>) -> Result<Vec<Pair>> {
    let mut out = BTreeSet::new();
    for (a, b) in pairs {
        if a == b {
            return Err(Error::InvalidArgument(format!("self pair ({a},{a})")));
        }
        out.insert((a.min(b), a.max(b)));
    }
    Ok(out.into_iter().collect())
}

impl ConstraintSet {
    pub fn new(
        must: impl IntoIterator<Item = Pair>,
        cannot: impl IntoIterator<Item = Pair>,
    ) -> Result<Self> {
        let must = canonical(must)?;
        let cannot = canonical(cannot)?;
        if let Some(p) = must.iter().find(|p| cannot.binary_search(p).is_ok()) {
            return Err(Error::InvalidArgument(format!(
                "pair {p:?} is both must-link and cannot-link"
            )));
        }
        Ok(ConstraintSet { must, cannot })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.must.is_empty() && self.cannot.is_empty()
    }

    pub fn n_must(&self) -> usize {
        self.must.len()
    }

    pub fn n_cannot(&self) -> usize {
        self.cannot.len()
    }

    pub fn pairs(&self) -> impl Iterator<Item = &Pair> {
        self.must.iter().chain(self.cannot.iter())
    }

    pub fn max_index(&self) -> Option<usize> {
        self.pairs().map(|&(_, b)| b).max()
    }

    pub fn check_indices(&self, n: usize) -> Result<()> {
        match self.max_index() {
            Some(index) if index >= n => Err(Error::ConstraintIndex { index, n }),
            _ => Ok(()),
        }
    }

    /// Maps every index through `map` (e.g. fold-local to dataset-global).
    pub fn remap(&self, map: &[usize]) -> Result<ConstraintSet> {
        self.check_indices(map.len())?;
        ConstraintSet::new(
            self.must.iter().map(|&(a, b)| (map[a], map[b])),
            self.cannot.iter().map(|&(a, b)| (map[a], map[b])),
        )
    }

    pub fn is_subset_of(&self, other: &ConstraintSet) -> bool {
        self.must.iter().all(|p| other.must.binary_search(p).is_ok())
            && self.cannot.iter().all(|p| other.cannot.binary_search(p).is_ok())
    }

    /// Closes must-links under transitivity and propagates cannot-links
    /// across must-linked components. Fails if a cannot-link ends up inside
    /// a must-linked component.
    pub fn transitive_closure(&self) -> Result<ConstraintSet> {
        let n = self.max_index().map_or(0, |m| m + 1);
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for &(a, b) in &self.must {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
        let mut components: Vec<Vec<usize>> = vec![Vec::new(); n];
        let touched: BTreeSet<usize> = self.pairs().flat_map(|&(a, b)| [a, b]).collect();
        for &i in &touched {
            let r = find(&mut parent, i);
            components[r].push(i);
        }

        let mut must = Vec::new();
        for comp in components.iter().filter(|c| c.len() > 1) {
            for (x, &a) in comp.iter().enumerate() {
                for &b in &comp[x + 1..] {
                    must.push((a, b));
                }
            }
        }
        let mut cannot = Vec::new();
        for &(a, b) in &self.cannot {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra == rb {
                return Err(Error::Infeasible { instance: b });
            }
            for &x in &components[ra] {
                for &y in &components[rb] {
                    cannot.push((x, y));
                }
            }
        }
        ConstraintSet::new(must, cannot)
    }

    pub fn fingerprint(&self) -> Fingerprint {
        let mut hasher = Sha256::new();
        for (tag, pairs) in [("M", &self.must), ("C", &self.cannot)] {
            for &(a, b) in pairs.iter() {
                hasher.update(format!("{tag}{a},{b};").as_bytes());
            }
        }
        let digest = hasher.finalize();
        let hash = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
        Fingerprint {
            must: self.must.len(),
            cannot: self.cannot.len(),
            hash,
        }
    }
}

fn validate_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "constraint fraction {f} outside (0, 1]"
        )))
    }
}

/// `ceil(fraction * size)`, tolerant of products like `0.07 * 100` that land
/// a hair above an integer.
fn per_class_count(fraction: f64, size: usize) -> usize {
    let raw = fraction * size as f64;
    let count = (raw - 1e-9 * raw.max(1.0)).ceil() as usize;
    count.clamp(usize::from(size > 0), size)
}

fn pairs_from_selection(labels: &[usize], selected: &mut [usize]) -> Result<ConstraintSet> {
    selected.sort_unstable();
    let mut must = Vec::new();
    let mut cannot = Vec::new();
    for (x, &a) in selected.iter().enumerate() {
        for &b in &selected[x + 1..] {
            if labels[a] == labels[b] {
                must.push((a, b));
            } else {
                cannot.push((a, b));
            }
        }
    }
    ConstraintSet::new(must, cannot)
}

/// Selects `ceil(fraction × class size)` instances per class and turns every
/// selected pair into a must-link (same label) or cannot-link (different).
pub fn sample_constraints(labels: &[usize], fraction: f64, seed: u64) -> Result<ConstraintSet> {
    let mut sets = sample_constraints_incremental(labels, &[fraction], seed)?;
    Ok(sets.pop().expect("one fraction yields one set"))
}

/// Nested selections for ascending fractions: each class is shuffled once
/// and every fraction takes a prefix, so each selection contains the
/// previous one.
pub fn sample_constraints_incremental(
    labels: &[usize],
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<ConstraintSet>> {
    if labels.is_empty() {
        return Err(Error::MissingLabels);
    }
    if fractions.is_empty() {
        return Err(Error::InvalidArgument("no constraint fractions".into()));
    }
    for f in fractions {
        validate_fraction(*f)?;
    }
    if fractions.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(format!(
            "fractions must be strictly ascending: {fractions:?}"
        )));
    }

    let num_classes = labels.iter().copied().max().unwrap() + 1;
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members.retain(|m| !m.is_empty());
    if members.len() < 2 {
        return Err(Error::InvalidArgument(
            "constraint sampling needs at least two classes".into(),
        ));
    }
    let mut rng = rng::seeded(seed);
    for m in members.iter_mut() {
        m.shuffle(&mut rng);
    }

    fractions
        .iter()
        .map(|&f| {
            let mut selected: Vec<usize> = members
                .iter()
                .flat_map(|m| m[..per_class_count(f, m.len())].iter().copied())
                .collect();
            pairs_from_selection(labels, &mut selected)
        })
        .collect()
}
