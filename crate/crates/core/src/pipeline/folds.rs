use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{sample_id, PairManifest};
use super::PipelineError;

/// Fold index per manifest record.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of: Vec<usize>,
}

impl FoldAssignment {
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Subject-disjoint folds. Families are shuffled with the seed and each is
/// dealt to the fold holding the fewest pairs so far (lowest index on ties),
/// which is plain round-robin when every family has one pair. An explicit
/// fold column in the manifest takes precedence.
pub fn kfold_split(manifest: &PairManifest, k: usize, seed: u64) -> Result<FoldAssignment, PipelineError> {
    if k < 2 {
        return Err(PipelineError::Config(format!("need at least 2 folds, got {k}")));
    }
    let records = manifest.records();
    if records.len() < k {
        return Err(PipelineError::Data(format!(
            "{} positive pairs cannot fill {k} folds",
            records.len()
        )));
    }
    if records.iter().all(|r| r.fold.is_some()) {
        return explicit_folds(manifest, k);
    }

    let mut families: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        families.entry(r.family_id.as_str()).or_default().push(i);
    }
    if families.len() < k {
        return Err(PipelineError::Data(format!(
            "{} families cannot fill {k} subject-disjoint folds",
            families.len()
        )));
    }
    let mut order: Vec<&Vec<usize>> = families.values().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of = vec![0; records.len()];
    let mut load = vec![0usize; k];
    for members in order {
        let f = (0..k).min_by_key(|&f| (load[f], f)).unwrap();
        load[f] += members.len();
        for &i in members {
            fold_of[i] = f;
        }
    }
    Ok(FoldAssignment { k, fold_of })
}

fn explicit_folds(manifest: &PairManifest, k: usize) -> Result<FoldAssignment, PipelineError> {
    let mut family_fold: BTreeMap<&str, usize> = BTreeMap::new();
    let mut fold_of = Vec::with_capacity(manifest.len());
    for r in manifest.records() {
        let f = r.fold.expect("checked by caller");
        if f >= k {
            return Err(PipelineError::Data(format!(
                "pair {:?}: fold {f} is outside [0, {k})",
                r.pair_id
            )));
        }
        if let Some(&g) = family_fold.get(r.family_id.as_str()) {
            if g != f {
                return Err(PipelineError::Data(format!(
                    "family {:?} appears in folds {g} and {f}",
                    r.family_id
                )));
            }
        }
        family_fold.insert(&r.family_id, f);
        fold_of.push(f);
    }
    let a = FoldAssignment { k, fold_of };
    if let Some(empty) = a.fold_sizes().iter().position(|&s| s == 0) {
        return Err(PipelineError::Data(format!("fold {empty} has no pairs")));
    }
    Ok(a)
}

/// A labelled pair to score: a manifest positive or a generated negative.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub pair_id: String,
    pub relation: String,
    pub fold: usize,
    pub label: bool,
    /// Manifest field of the parent-side sample.
    pub parent: String,
    pub child: String,
    pub parent_family: String,
    pub child_family: String,
}

impl EvalPair {
    pub fn parent_id(&self) -> String {
        sample_id(&self.parent)
    }

    pub fn child_id(&self) -> String {
        sample_id(&self.child)
    }
}

const DERANGEMENT_ATTEMPTS: usize = 1000;

/// Positives plus one negative per positive. Within each (fold, relation)
/// group the children are permuted by a seeded Sattolo cycle, redrawn until
/// no parent meets a child of its own family or a listed kin child.
pub fn generate_negatives(
    manifest: &PairManifest,
    folds: &FoldAssignment,
    seed: u64,
) -> Result<Vec<EvalPair>, PipelineError> {
    let records = manifest.records();
    if folds.fold_of.len() != records.len() {
        return Err(PipelineError::Config(
            "fold assignment does not match the manifest".into(),
        ));
    }
    let kin = manifest.kin_set();
    let mut groups: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let rel = manifest_relation_rank(&r.relation);
        groups.entry((folds.fold_of[i], rel)).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(2 * records.len());
    for ((fold, _), members) in &groups {
        let relation = &records[members[0]].relation;
        if members.len() < 2 {
            return Err(PipelineError::Data(format!(
                "fold {fold}, relation {relation}: need at least 2 positive pairs to form negatives"
            )));
        }
        let perm = (0..DERANGEMENT_ATTEMPTS)
            .map(|_| sattolo(members.len(), &mut rng))
            .find(|perm| {
                perm.iter().enumerate().all(|(a, &b)| {
                    let (p, c) = (&records[members[a]], &records[members[b]]);
                    p.family_id != c.family_id && !kin.contains(&(sample_id(&p.parent), sample_id(&c.child)))
                })
            })
            .ok_or_else(|| {
                PipelineError::Data(format!(
                    "fold {fold}, relation {relation}: no valid negative pairing (too few distinct families)"
                ))
            })?;
        for (a, &b) in perm.iter().enumerate() {
            let (p, c) = (&records[members[a]], &records[members[b]]);
            out.push(EvalPair {
                pair_id: p.pair_id.clone(),
                relation: p.relation.clone(),
                fold: *fold,
                label: true,
                parent: p.parent.clone(),
                child: p.child.clone(),
                parent_family: p.family_id.clone(),
                child_family: p.family_id.clone(),
            });
            out.push(EvalPair {
                pair_id: format!("neg_{}_{}", p.pair_id, c.pair_id),
                relation: p.relation.clone(),
                fold: *fold,
                label: false,
                parent: p.parent.clone(),
                child: c.child.clone(),
                parent_family: p.family_id.clone(),
                child_family: c.family_id.clone(),
            });
        }
    }
    Ok(out)
}

fn manifest_relation_rank(tag: &str) -> usize {
    super::manifest::RELATIONS
        .iter()
        .position(|t| *t == tag)
        .expect("validated relation tag")
}

/// Uniform random cyclic permutation (no fixed points for n ≥ 2).
fn sattolo(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..i);
        p.swap(i, j);
    }
    p
}

/// Families present in more than one fold, if any.
pub fn shared_families(pairs: &[EvalPair]) -> Vec<String> {
    let mut fold_of: BTreeMap<&str, HashSet<usize>> = BTreeMap::new();
    for p in pairs {
        fold_of.entry(&p.parent_family).or_default().insert(p.fold);
        fold_of.entry(&p.child_family).or_default().insert(p.fold);
    }
    fold_of
        .into_iter()
        .filter(|(_, f)| f.len() > 1)
        .map(|(fam, _)| fam.to_string())
        .collect()
}
