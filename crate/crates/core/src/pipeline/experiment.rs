use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::features::{Channel, FeatureProvider};
use super::folds::{generate_negatives, kfold_split, EvalPair};
use super::manifest::PairManifest;
use super::report::{EvalReport, FoldMetrics, MethodReport, MethodSummary, PooledRoc, Provenance, RelationReport};
use super::PipelineError;
use crate::bsif::WINDOWS;
use crate::deepfeat::l2_normalize_rows;
use crate::scoring::{
    accuracy_at, cosine_similarity, lr_fit_with, lr_fuse, roc_curve, roc_svg, write_roc_csv, write_score_csv, LrConfig,
    LrModel, RocReport, ScoreRecord, ScoreSet,
};
use crate::subspace::{
    txqda_project, txqda_train, wccn_fit, write_model_archive, KinPair, PairedTensors, SolverPath, TxqdaConfig,
    TxqdaModel,
};
use crate::tensor::{Matrix, Tensor3};

/// Seed offset for negative-pair generation, so that it does not replay the
/// fold shuffle stream.
const NEGATIVE_SEED_SALT: u64 = 0x6e65_6761_7469_7665;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub folds: usize,
    pub seed: u64,
    pub channels: Vec<Channel>,
    /// Requested reduced sizes; each is capped at the matching input size.
    pub txqda_d1: usize,
    pub txqda_d2: usize,
    pub txqda_iterations: usize,
    pub txqda_shrinkage: f64,
    pub solver: SolverPath,
    pub wccn: bool,
    pub wccn_shrinkage: f64,
    pub fusion: bool,
    pub lr: LrConfig,
    /// Unit-normalize every feature row before anything else.
    pub normalize_rows: bool,
    /// Also score raw (unprojected) features.
    pub raw_baselines: bool,
    /// One model over all relations instead of one per relation.
    pub shared_model: bool,
    /// BSIF windows to keep (rows of the 6-row shallow matrix); all when
    /// `None`.
    pub bsif_windows: Option<Vec<usize>>,
    /// How training-pair scores (for fusion and thresholds) are produced.
    pub train_scores: TrainScores,
}

/// Source of the training-pair scores that fusion weights and accuracy
/// thresholds are fitted on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainScores {
    /// Each training fold is scored by subspaces fitted on the other
    /// training folds. Falls back to `InSample` with a single training fold.
    #[default]
    CrossFit,
    /// Training pairs are scored by the subspaces fitted on them.
    InSample,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            seed: 0,
            channels: vec![Channel::Bsif, Channel::Deep],
            txqda_d1: 3,
            txqda_d2: 32,
            txqda_iterations: 5,
            txqda_shrinkage: 1e-3,
            solver: SolverPath::Auto,
            wccn: true,
            wccn_shrinkage: 1e-3,
            fusion: true,
            lr: LrConfig::default(),
            normalize_rows: true,
            raw_baselines: true,
            shared_model: false,
            bsif_windows: None,
            train_scores: TrainScores::CrossFit,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.folds < 2 {
            return bad(format!("need at least 2 folds, got {}", self.folds));
        }
        if self.channels.is_empty() {
            return bad("at least one feature channel is required".into());
        }
        let distinct: BTreeSet<_> = self.channels.iter().collect();
        if distinct.len() != self.channels.len() {
            return bad("feature channels must be distinct".into());
        }
        if self.txqda_d1 == 0 || self.txqda_d2 == 0 || self.txqda_iterations == 0 {
            return bad("TXQDA sizes and sweep count must be positive".into());
        }
        for (name, v) in [
            ("txqda shrinkage", self.txqda_shrinkage),
            ("wccn shrinkage", self.wccn_shrinkage),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        if let Some(ws) = &self.bsif_windows {
            if ws.is_empty() || ws.iter().any(|w| !WINDOWS.contains(w)) {
                return bad(format!(
                    "BSIF windows must be a non-empty subset of {WINDOWS:?}, got {ws:?}"
                ));
            }
        }
        Ok(())
    }

    /// Method names in report order.
    pub fn methods(&self) -> Vec<String> {
        let mut m: Vec<String> = self.channels.iter().map(|c| c.name().to_string()).collect();
        if self.fuses() {
            m.push("fused".into());
        }
        if self.raw_baselines {
            m.extend(self.channels.iter().map(|c| format!("{}_raw", c.name())));
        }
        m
    }

    fn fuses(&self) -> bool {
        self.fusion && self.channels.len() >= 2
    }
}

/// Sample ids consumed by one fitted object.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub group: String,
    pub fold: usize,
    pub stage: String,
    pub samples: Vec<String>,
}

/// Train and test scores of one model group and fold; matchers are the
/// method names.
#[derive(Clone, Debug)]
pub struct FoldScores {
    pub group: String,
    pub fold: usize,
    pub train: ScoreSet,
    pub test: ScoreSet,
}

#[derive(Clone, Debug)]
pub struct FoldModels {
    pub group: String,
    pub fold: usize,
    pub subspaces: Vec<(Channel, TxqdaModel)>,
    pub fusion: Option<LrModel>,
    /// Decision threshold per method, chosen on the training folds.
    pub thresholds: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub scores: Vec<FoldScores>,
    pub models: Vec<FoldModels>,
    pub audit: Vec<AuditEntry>,
    /// Pooled test-fold ROC per (relation, method).
    pub rocs: Vec<(String, String, RocReport)>,
    pub pairs: Vec<EvalPair>,
}

type FeatureTable = BTreeMap<(Channel, String), Matrix>;

fn load_features(
    pairs: &[EvalPair],
    provider: &dyn FeatureProvider,
    cfg: &ExperimentConfig,
) -> Result<FeatureTable, PipelineError> {
    let mut fields: BTreeMap<String, (&str, usize, &str)> = BTreeMap::new();
    for p in pairs {
        fields.entry(p.parent_id()).or_insert((&p.parent, p.fold, &p.relation));
        fields.entry(p.child_id()).or_insert((&p.child, p.fold, &p.relation));
    }
    let mut table = FeatureTable::new();
    for &channel in &cfg.channels {
        let mut shape = None;
        for (id, (field, fold, relation)) in &fields {
            let stage = format!("features:{}", channel.name());
            let mut m = provider
                .feature(channel, field)
                .map_err(|e| e.at(relation, *fold, &stage))?;
            if !m.is_finite() {
                return Err(PipelineError::Feature {
                    sample: id.clone(),
                    reason: "non-finite feature values".into(),
                }
                .at(relation, *fold, &stage));
            }
            if channel == Channel::Bsif {
                if let Some(ws) = &cfg.bsif_windows {
                    if m.rows() != WINDOWS.len() {
                        return Err(PipelineError::Config(format!(
                            "BSIF window selection needs {}-row features, sample {id:?} has {}",
                            WINDOWS.len(),
                            m.rows()
                        )));
                    }
                    let rows: Vec<usize> = ws
                        .iter()
                        .map(|w| WINDOWS.iter().position(|x| x == w).expect("validated"))
                        .collect();
                    m = m.select_rows(&rows);
                }
            }
            if cfg.normalize_rows {
                m = l2_normalize_rows(&m);
            }
            match shape {
                None => shape = Some(m.shape()),
                Some(s) if s != m.shape() => {
                    return Err(PipelineError::Feature {
                        sample: id.clone(),
                        reason: format!(
                            "{} feature is {}×{} but earlier samples are {}×{}",
                            channel.name(),
                            m.rows(),
                            m.cols(),
                            s.0,
                            s.1
                        ),
                    }
                    .at(relation, *fold, &stage));
                }
                Some(_) => {}
            }
            table.insert((channel, id.clone()), m);
        }
    }
    Ok(table)
}

struct ChannelFit {
    model: TxqdaModel,
    audit: Vec<AuditEntry>,
}

fn fit_channel(
    train: &[&EvalPair],
    channel: Channel,
    features: &FeatureTable,
    cfg: &ExperimentConfig,
    group: &str,
    fold: usize,
) -> Result<ChannelFit, PipelineError> {
    let parents: BTreeMap<String, &str> = train
        .iter()
        .map(|p| (p.parent_id(), p.parent_family.as_str()))
        .collect();
    let children: BTreeMap<String, &str> = train.iter().map(|p| (p.child_id(), p.child_family.as_str())).collect();
    let index = |ids: &BTreeMap<String, &str>| -> HashMap<String, usize> {
        ids.keys().enumerate().map(|(i, id)| (id.clone(), i)).collect()
    };
    let (pi, ci) = (index(&parents), index(&children));
    let stack = |ids: &BTreeMap<String, &str>| -> Result<Tensor3, PipelineError> {
        let slices: Vec<&Matrix> = ids.keys().map(|id| &features[&(channel, id.clone())]).collect();
        Tensor3::from_slices(&slices).map_err(|e| PipelineError::Data(e.to_string()))
    };
    let pairs: Vec<KinPair> = train
        .iter()
        .map(|p| KinPair {
            parent: pi[&p.parent_id()],
            child: ci[&p.child_id()],
            kin: p.label,
        })
        .collect();
    let data = PairedTensors::new(stack(&parents)?, stack(&children)?, pairs)?;
    let (i1, i2) = data.sample_dims();
    let tx_cfg = TxqdaConfig {
        d1: cfg.txqda_d1.min(i1),
        d2: cfg.txqda_d2.min(i2),
        iterations: cfg.txqda_iterations,
        shrinkage: cfg.txqda_shrinkage,
        seed: cfg.seed.wrapping_add(fold as u64),
        solver: cfg.solver,
    };
    let mut model = txqda_train(&data, &tx_cfg)?;

    let mut used: Vec<String> = parents.keys().chain(children.keys()).cloned().collect();
    used.sort();
    used.dedup();
    let mut audit = vec![AuditEntry {
        group: group.to_string(),
        fold,
        stage: format!("txqda:{}", channel.name()),
        samples: used.clone(),
    }];

    if cfg.wccn {
        let mut vectors = Vec::new();
        let mut labels = Vec::new();
        for (ids, _) in [(&parents, 0), (&children, 1)] {
            for (id, fam) in ids.iter() {
                vectors.push(txqda_project(&features[&(channel, id.clone())], &model)?);
                labels.push(fam.to_string());
            }
        }
        model.wccn = Some(wccn_fit(&vectors, &labels, cfg.wccn_shrinkage)?);
        audit.push(AuditEntry {
            group: group.to_string(),
            fold,
            stage: format!("wccn:{}", channel.name()),
            samples: used,
        });
    }
    Ok(ChannelFit { model, audit })
}

fn flatten(m: &Matrix) -> &[f64] {
    m.data()
}

fn pair_samples(pairs: &[&EvalPair]) -> Vec<String> {
    let set: BTreeSet<String> = pairs.iter().flat_map(|p| [p.parent_id(), p.child_id()]).collect();
    set.into_iter().collect()
}

/// Scores for `pairs` under one method, as a column.
fn projected_scores(
    pairs: &[&EvalPair],
    channel: Channel,
    features: &FeatureTable,
    model: &TxqdaModel,
    cache: &mut HashMap<String, Vec<f64>>,
) -> Result<Vec<f64>, PipelineError> {
    let mut project = |id: String| -> Result<Vec<f64>, PipelineError> {
        if let Some(v) = cache.get(&id) {
            return Ok(v.clone());
        }
        let v = txqda_project(&features[&(channel, id.clone())], model)?;
        cache.insert(id, v.clone());
        Ok(v)
    };
    pairs
        .iter()
        .map(|p| {
            let a = project(p.parent_id())?;
            let b = project(p.child_id())?;
            Ok(cosine_similarity(&a, &b)?)
        })
        .collect()
}

fn raw_scores(pairs: &[&EvalPair], channel: Channel, features: &FeatureTable) -> Result<Vec<f64>, PipelineError> {
    pairs
        .iter()
        .map(|p| {
            let a = &features[&(channel, p.parent_id())];
            let b = &features[&(channel, p.child_id())];
            Ok(cosine_similarity(flatten(a), flatten(b))?)
        })
        .collect()
}

fn score_set(pairs: &[&EvalPair], methods: &[String], columns: &[Vec<f64>]) -> Result<ScoreSet, PipelineError> {
    let records = pairs
        .iter()
        .enumerate()
        .map(|(i, p)| ScoreRecord {
            pair_id: p.pair_id.clone(),
            label: p.label,
            scores: columns.iter().map(|c| c[i]).collect(),
        })
        .collect();
    Ok(ScoreSet::new(methods.to_vec(), records)?)
}

struct GroupFold {
    scores: FoldScores,
    models: FoldModels,
    audit: Vec<AuditEntry>,
    /// Test pairs in score-row order.
    test_pairs: Vec<EvalPair>,
}

fn run_group_fold(
    group: &str,
    fold: usize,
    pairs: &[&EvalPair],
    features: &FeatureTable,
    cfg: &ExperimentConfig,
) -> Result<GroupFold, PipelineError> {
    let train: Vec<&EvalPair> = pairs.iter().copied().filter(|p| p.fold != fold).collect();
    let test: Vec<&EvalPair> = pairs.iter().copied().filter(|p| p.fold == fold).collect();
    let methods = cfg.methods();
    let mut train_cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut test_cols: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut audit = Vec::new();
    let mut subspaces = Vec::new();

    let train_folds: BTreeSet<usize> = train.iter().map(|p| p.fold).collect();
    let cross_fit = cfg.train_scores == TrainScores::CrossFit && train_folds.len() >= 2;
    for &channel in &cfg.channels {
        let stage = format!("txqda:{}", channel.name());
        let fit = fit_channel(&train, channel, features, cfg, group, fold).map_err(|e| e.at(group, fold, &stage))?;
        let mut cache = HashMap::new();
        let score_stage = format!("score:{}", channel.name());
        let te = projected_scores(&test, channel, features, &fit.model, &mut cache)
            .map_err(|e| e.at(group, fold, &score_stage))?;
        let tr = if cross_fit {
            let mut tr = vec![0.0; train.len()];
            for &inner in &train_folds {
                let fit_pairs: Vec<&EvalPair> = train.iter().copied().filter(|p| p.fold != inner).collect();
                let held: Vec<usize> = (0..train.len()).filter(|&i| train[i].fold == inner).collect();
                let held_pairs: Vec<&EvalPair> = held.iter().map(|&i| train[i]).collect();
                let inner_fit = fit_channel(&fit_pairs, channel, features, cfg, group, fold)
                    .map_err(|e| e.at(group, fold, &format!("{stage}:inner{inner}")))?;
                let scores = projected_scores(&held_pairs, channel, features, &inner_fit.model, &mut HashMap::new())
                    .map_err(|e| e.at(group, fold, &score_stage))?;
                for (i, s) in held.into_iter().zip(scores) {
                    tr[i] = s;
                }
                audit.extend(inner_fit.audit.into_iter().map(|mut a| {
                    a.stage = format!("{}:inner{inner}", a.stage);
                    a
                }));
            }
            tr
        } else {
            projected_scores(&train, channel, features, &fit.model, &mut cache)
                .map_err(|e| e.at(group, fold, &score_stage))?
        };
        train_cols.insert(channel.name().to_string(), tr);
        test_cols.insert(channel.name().to_string(), te);
        if cfg.raw_baselines {
            let name = format!("{}_raw", channel.name());
            train_cols.insert(name.clone(), raw_scores(&train, channel, features)?);
            test_cols.insert(name, raw_scores(&test, channel, features)?);
        }
        audit.extend(fit.audit);
        subspaces.push((channel, fit.model));
    }

    let mut fusion = None;
    if cfg.fuses() {
        let names: Vec<String> = cfg.channels.iter().map(|c| c.name().to_string()).collect();
        let cols: Vec<Vec<f64>> = names.iter().map(|n| train_cols[n].clone()).collect();
        let set = score_set(&train, &names, &cols)?;
        let lr = lr_fit_with(&set, &cfg.lr).map_err(|e| PipelineError::from(e).at(group, fold, "lr"))?;
        let fuse = |ps: &[&EvalPair], src: &BTreeMap<String, Vec<f64>>| -> Result<Vec<f64>, PipelineError> {
            (0..ps.len())
                .map(|i| {
                    let y: Vec<f64> = names.iter().map(|n| src[n][i]).collect();
                    Ok(lr_fuse(&lr, &y)?)
                })
                .collect()
        };
        train_cols.insert("fused".into(), fuse(&train, &train_cols)?);
        test_cols.insert("fused".into(), fuse(&test, &test_cols)?);
        audit.push(AuditEntry {
            group: group.to_string(),
            fold,
            stage: "lr".into(),
            samples: pair_samples(&train),
        });
        fusion = Some(lr);
    }

    let labels: Vec<bool> = train.iter().map(|p| p.label).collect();
    let mut thresholds = BTreeMap::new();
    for m in &methods {
        let roc =
            roc_curve(&train_cols[m], &labels).map_err(|e| PipelineError::from(e).at(group, fold, "threshold"))?;
        thresholds.insert(m.clone(), roc.threshold);
    }
    audit.push(AuditEntry {
        group: group.to_string(),
        fold,
        stage: "threshold".into(),
        samples: pair_samples(&train),
    });

    let ordered =
        |cols: &BTreeMap<String, Vec<f64>>| -> Vec<Vec<f64>> { methods.iter().map(|m| cols[m].clone()).collect() };
    Ok(GroupFold {
        scores: FoldScores {
            group: group.to_string(),
            fold,
            train: score_set(&train, &methods, &ordered(&train_cols))?,
            test: score_set(&test, &methods, &ordered(&test_cols))?,
        },
        models: FoldModels {
            group: group.to_string(),
            fold,
            subspaces,
            fusion,
            thresholds,
        },
        audit,
        test_pairs: test.into_iter().cloned().collect(),
    })
}

/// Every fitted object must have seen only samples outside its test fold.
/// Returns the offending (stage, fold, sample) triples.
pub fn check_leakage(audit: &[AuditEntry], pairs: &[EvalPair]) -> Vec<(String, usize, String)> {
    let mut fold_samples: BTreeMap<usize, BTreeSet<String>> = BTreeMap::new();
    for p in pairs {
        let set = fold_samples.entry(p.fold).or_default();
        set.insert(p.parent_id());
        set.insert(p.child_id());
    }
    let mut bad = Vec::new();
    for e in audit {
        if let Some(test) = fold_samples.get(&e.fold) {
            for s in &e.samples {
                if test.contains(s) {
                    bad.push((format!("{}/{}", e.group, e.stage), e.fold, s.clone()));
                }
            }
        }
    }
    bad
}

/// Full k-fold evaluation. Every fitted object (TXQDA, WCCN, LR,
/// thresholds) sees training-fold pairs only.
pub fn run_experiment(
    manifest: &PairManifest,
    provider: &dyn FeatureProvider,
    cfg: &ExperimentConfig,
) -> Result<ExperimentOutcome, PipelineError> {
    cfg.validate()?;
    let folds = kfold_split(manifest, cfg.folds, cfg.seed)?;
    let pairs = generate_negatives(manifest, &folds, cfg.seed ^ NEGATIVE_SEED_SALT)?;
    let features = load_features(&pairs, provider, cfg)?;
    let relations = manifest.relations();
    let groups: Vec<(String, Vec<String>)> = if cfg.shared_model {
        vec![("shared".to_string(), relations.clone())]
    } else {
        relations.iter().map(|r| (r.clone(), vec![r.clone()])).collect()
    };
    let methods = cfg.methods();

    let mut scores = Vec::new();
    let mut models = Vec::new();
    let mut audit = Vec::new();
    // (relation, method) -> per-fold metrics and pooled test scores.
    let mut per_fold: BTreeMap<(String, String), Vec<FoldMetrics>> = BTreeMap::new();
    let mut pooled: BTreeMap<(String, String), (Vec<f64>, Vec<bool>)> = BTreeMap::new();

    for (group, rels) in &groups {
        let members: Vec<&EvalPair> = pairs.iter().filter(|p| rels.contains(&p.relation)).collect();
        for fold in 0..cfg.folds {
            let gf = run_group_fold(group, fold, &members, &features, cfg)?;
            for relation in rels {
                let rows: Vec<usize> = gf
                    .test_pairs
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| &p.relation == relation)
                    .map(|(i, _)| i)
                    .collect();
                let labels: Vec<bool> = rows.iter().map(|&i| gf.test_pairs[i].label).collect();
                for (k, m) in methods.iter().enumerate() {
                    let s: Vec<f64> = rows.iter().map(|&i| gf.scores.test.records()[i].scores[k]).collect();
                    let roc =
                        roc_curve(&s, &labels).map_err(|e| PipelineError::from(e).at(relation, fold, "metrics"))?;
                    let t = gf.models.thresholds[m];
                    per_fold
                        .entry((relation.clone(), m.clone()))
                        .or_default()
                        .push(FoldMetrics {
                            fold,
                            accuracy: accuracy_at(&s, &labels, t)?,
                            auc: roc.auc,
                            eer: roc.eer,
                            threshold: t,
                            n_test: s.len(),
                        });
                    let entry = pooled.entry((relation.clone(), m.clone())).or_default();
                    entry.0.extend(&s);
                    entry.1.extend(&labels);
                }
            }
            scores.push(gf.scores);
            models.push(gf.models);
            audit.extend(gf.audit);
        }
    }

    let leaks = check_leakage(&audit, &pairs);
    if let Some((stage, fold, sample)) = leaks.first() {
        return Err(PipelineError::Numerical(format!(
            "leakage audit failed: {stage} in fold {fold} consumed test sample {sample:?}"
        )));
    }

    let mut rocs = Vec::new();
    let mut relation_reports = Vec::new();
    for relation in &relations {
        let mut method_reports = Vec::new();
        for m in &methods {
            let key = (relation.clone(), m.clone());
            let folds_m = per_fold.remove(&key).unwrap_or_default();
            let (s, l) = &pooled[&key];
            let roc = roc_curve(s, l)?;
            method_reports.push(MethodReport::new(m.clone(), folds_m, PooledRoc::from(&roc)));
            rocs.push((relation.clone(), m.clone(), roc));
        }
        relation_reports.push(RelationReport {
            relation: relation.clone(),
            n_positive: manifest.records().iter().filter(|r| &r.relation == relation).count(),
            methods: method_reports,
        });
    }
    let summary = methods
        .iter()
        .map(|m| MethodSummary::over(m, &relation_reports))
        .collect();

    let violations: Vec<String> = models
        .iter()
        .flat_map(|fm| {
            fm.subspaces.iter().flat_map(move |(c, model)| {
                model
                    .monotonicity_violations(1e-9)
                    .into_iter()
                    .map(move |(mode, sweep)| {
                        format!("{} fold {} {}: mode {mode} sweep {sweep}", fm.group, fm.fold, c.name())
                    })
            })
        })
        .collect();
    let lr_unconverged = models
        .iter()
        .filter(|m| m.fusion.as_ref().is_some_and(|lr| !lr.converged))
        .count();

    let report = EvalReport {
        provenance: Provenance {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: cfg.seed,
            config: cfg.clone(),
            inputs: BTreeMap::new(),
            fold_sizes: folds.fold_sizes(),
            threshold_rule: match cfg.train_scores {
                TrainScores::CrossFit => {
                    "per method, the best-accuracy threshold on cross-fitted training-fold scores, applied to the test fold"
                }
                TrainScores::InSample => {
                    "per method, the best-accuracy threshold on in-sample training-fold scores, applied to the test fold"
                }
            }
            .into(),
            leakage_check: "passed".into(),
            trace_ratio_decreases: violations,
            lr_unconverged_folds: lr_unconverged,
            timestamp: None,
        },
        relations: relation_reports,
        summary,
    };
    Ok(ExperimentOutcome {
        report,
        scores,
        models,
        audit,
        rocs,
        pairs,
    })
}

/// Which artifacts [`write_outputs`] produces.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutputSelection {
    pub report: bool,
    pub scores: bool,
    pub models: bool,
}

impl Default for OutputSelection {
    fn default() -> Self {
        Self {
            report: true,
            scores: true,
            models: false,
        }
    }
}

fn file_name_part(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

struct Writer {
    created: Vec<PathBuf>,
}

impl Writer {
    fn dir(&mut self, p: &Path) -> Result<(), PipelineError> {
        if !p.exists() {
            std::fs::create_dir_all(p).map_err(|source| PipelineError::Io {
                path: p.display().to_string(),
                source,
            })?;
            self.created.push(p.to_path_buf());
        }
        Ok(())
    }

    fn file(&mut self, p: PathBuf, bytes: &[u8]) -> Result<(), PipelineError> {
        self.created.push(p.clone());
        std::fs::write(&p, bytes).map_err(|source| PipelineError::Io {
            path: p.display().to_string(),
            source,
        })
    }

    fn with<E>(&mut self, p: PathBuf, f: impl FnOnce(&Path) -> Result<(), E>) -> Result<(), PipelineError>
    where
        PipelineError: From<E>,
    {
        self.created.push(p.clone());
        f(&p).map_err(PipelineError::from)
    }

    fn rollback(&self) {
        for p in self.created.iter().rev() {
            if p.is_dir() {
                let _ = std::fs::remove_dir(p);
            } else {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// Writes `report.json`, `audit.json`, ROC CSV/SVG files, per-fold score
/// CSVs and optionally model archives under `out`. Everything written is
/// removed again if any write fails. Returns the files written.
pub fn write_outputs(
    outcome: &mut ExperimentOutcome,
    out: &Path,
    select: OutputSelection,
) -> Result<Vec<PathBuf>, PipelineError> {
    let mut w = Writer { created: Vec::new() };
    match write_all(outcome, out, select, &mut w) {
        Ok(()) => Ok(w.created.into_iter().filter(|p| p.is_file()).collect()),
        Err(e) => {
            w.rollback();
            Err(e)
        }
    }
}

fn write_all(
    outcome: &mut ExperimentOutcome,
    out: &Path,
    select: OutputSelection,
    w: &mut Writer,
) -> Result<(), PipelineError> {
    w.dir(out)?;
    if select.report {
        outcome.report.provenance.timestamp = Some(
            std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        );
        w.file(out.join("report.json"), outcome.report.to_json().as_bytes())?;
        let roc_dir = out.join("roc");
        w.dir(&roc_dir)?;
        let mut by_relation: BTreeMap<&str, Vec<(String, &RocReport)>> = BTreeMap::new();
        for (relation, method, roc) in &outcome.rocs {
            let name = format!("{}_{}.csv", file_name_part(relation), file_name_part(method));
            w.with(roc_dir.join(name), |p| write_roc_csv(p, roc))?;
            by_relation.entry(relation).or_default().push((method.clone(), roc));
        }
        for (relation, curves) in by_relation {
            let svg = roc_svg(&format!("ROC: {relation}"), &curves);
            w.file(
                roc_dir.join(format!("{}.svg", file_name_part(relation))),
                svg.as_bytes(),
            )?;
        }
        let audit = serde_json::to_string_pretty(&outcome.audit).expect("audit serializes");
        w.file(out.join("audit.json"), audit.as_bytes())?;
    }
    if select.scores {
        let dir = out.join("scores");
        w.dir(&dir)?;
        for s in &outcome.scores {
            let stem = format!("{}_fold{}", file_name_part(&s.group), s.fold);
            w.with(dir.join(format!("{stem}_train.csv")), |p| write_score_csv(p, &s.train))?;
            w.with(dir.join(format!("{stem}_test.csv")), |p| write_score_csv(p, &s.test))?;
        }
    }
    if select.models {
        let dir = out.join("models");
        w.dir(&dir)?;
        for m in &outcome.models {
            let stem = format!("{}_fold{}", file_name_part(&m.group), m.fold);
            for (c, model) in &m.subspaces {
                w.with(dir.join(format!("{stem}_{}.kinarch", c.name())), |p| {
                    write_model_archive(p, model)
                })?;
            }
            let fusion = serde_json::json!({
                "lr": m.fusion,
                "thresholds": m.thresholds,
            });
            let text = serde_json::to_string_pretty(&fusion).expect("fusion serializes");
            w.file(dir.join(format!("{stem}_fusion.json")), text.as_bytes())?;
        }
    }
    Ok(())
}
