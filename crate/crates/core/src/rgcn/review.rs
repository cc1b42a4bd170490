use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    predict_products, targets_from_labels, train, ClassScore, RelationalView, RgcnConfig, RgcnError, RgcnModel,
};
use crate::hetgraph::{LabelMerge, LabelStore, PoliticalClass, PoliticalLabel, Provenance};
use crate::par::Execution;

const CLIP_LO: f64 = 1e-4;
const CLIP_HI: f64 = 0.9999;
const LOGIT_BOUND: f64 = 10.0;

/// Clipped logit of `p`, mapped from [-10, 10] onto [0, 1].
pub fn lifestyle_score(p: f64) -> f64 {
    let p = p.clamp(CLIP_LO, CLIP_HI);
    ((p / (1.0 - p)).ln() + LOGIT_BOUND) / (2.0 * LOGIT_BOUND)
}

/// Inverse of the scaling step: scaled score back to a logit.
pub fn lifestyle_logit(scaled: f64) -> f64 {
    scaled * 2.0 * LOGIT_BOUND - LOGIT_BOUND
}

/// Scaled score back to a conservative probability.
pub fn lifestyle_probability(scaled: f64) -> f64 {
    1.0 / (1.0 + (-lifestyle_logit(scaled)).exp())
}

/// Fraction of scores whose max probability reaches each threshold.
pub fn threshold_curve(scores: &[ClassScore], grid: &[f64]) -> Result<Vec<(f64, f64)>, RgcnError> {
    if scores.is_empty() {
        return Err(RgcnError::EmptyScores);
    }
    if grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) || grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(RgcnError::InvalidConfig(
            "threshold grid must be sorted within (0, 1]".into(),
        ));
    }
    let mut maxes: Vec<f64> = scores.iter().map(|s| s.max_prob).collect();
    maxes.sort_by(f64::total_cmp);
    let n = maxes.len() as f64;
    Ok(grid
        .iter()
        .map(|&t| {
            let below = maxes.partition_point(|&m| m < t);
            (t, (maxes.len() - below) as f64 / n)
        })
        .collect())
}

/// Model labels for confident predictions in `classes`; products that already
/// carry a seed or human label are skipped.
pub fn accept_labels(
    scores: &[ClassScore],
    threshold: f64,
    classes: &[PoliticalClass],
    existing: &LabelStore,
    iteration: u32,
) -> Vec<PoliticalLabel> {
    scores
        .iter()
        .filter(|s| s.max_prob >= threshold && classes.contains(&s.class))
        .filter(|s| existing.get(&s.key).is_none_or(|l| l.provenance == Provenance::Model))
        .map(|s| PoliticalLabel::model(&s.key, s.class, s.max_prob, iteration))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidates {
    pub conservative: Vec<ClassScore>,
    pub liberal: Vec<ClassScore>,
    pub ambiguous: Vec<ClassScore>,
}

/// Review strata: strongest conservative, strongest liberal and most
/// uncertain predictions, excluding seed- and human-labeled products.
pub fn candidates(scores: &[ClassScore], n: usize, labels: &LabelStore) -> Candidates {
    let open: Vec<&ClassScore> = scores
        .iter()
        .filter(|s| labels.get(&s.key).is_none_or(|l| l.provenance == Provenance::Model))
        .collect();
    let top = |f: &dyn Fn(&ClassScore) -> f64| {
        let mut v = open.clone();
        v.sort_by(|a, b| f(b).total_cmp(&f(a)).then_with(|| a.key.cmp(&b.key)));
        v.into_iter().take(n).cloned().collect::<Vec<_>>()
    };
    Candidates {
        conservative: top(&|s| s.prob(PoliticalClass::Conservative)),
        liberal: top(&|s| s.prob(PoliticalClass::Liberal)),
        ambiguous: top(&|s| s.entropy()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub asin: String,
    pub class: PoliticalClass,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VerdictRejection {
    pub asin: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationReport {
    pub iteration: u32,
    pub classes: usize,
    pub verdicts_applied: usize,
    pub rejected: Vec<VerdictRejection>,
    pub labels_before: BTreeMap<String, usize>,
    pub labels_after: BTreeMap<String, usize>,
    /// Share of products predicted per class by the retrained model.
    pub predicted_share: BTreeMap<String, f64>,
    /// Change in predicted share against the previous scores, when given.
    pub share_drift: BTreeMap<String, f64>,
    pub best_val_acc: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct HitlOutcome {
    pub labels: LabelStore,
    pub model: RgcnModel,
    pub scores: Vec<ClassScore>,
    pub report: IterationReport,
}

fn counts(labels: &LabelStore) -> BTreeMap<String, usize> {
    labels
        .class_counts()
        .into_iter()
        .map(|(c, n)| (c.as_str().to_string(), n))
        .collect()
}

fn shares(scores: &[ClassScore]) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for s in scores {
        *out.entry(s.class.as_str().to_string()).or_insert(0.0) += 1.0;
    }
    let n = scores.len().max(1) as f64;
    out.values_mut().for_each(|v| *v /= n);
    out
}

/// Merges human verdicts and retrains. The model gains the nonpolitical
/// class once any nonpolitical label exists; each iteration re-splits with
/// the iteration index folded into the seed.
pub fn hitl_iterate(
    view: &RelationalView,
    labels: &LabelStore,
    verdicts: &[Verdict],
    cfg: &RgcnConfig,
    iteration: u32,
    previous: Option<&[ClassScore]>,
    exec: Execution,
) -> Result<HitlOutcome, RgcnError> {
    let mut merged = labels.clone();
    let mut rejected = Vec::new();
    let mut applied = 0;
    for v in verdicts {
        if view.product(&v.asin).is_none() {
            rejected.push(VerdictRejection {
                asin: v.asin.clone(),
                reason: "unknown-node".into(),
            });
            continue;
        }
        match merged.offer(PoliticalLabel::human(&v.asin, v.class, iteration)) {
            LabelMerge::Rejected(p) => rejected.push(VerdictRejection {
                asin: v.asin.clone(),
                reason: format!("{}-precedence", p.as_str()),
            }),
            _ => applied += 1,
        }
    }

    let has_nonpolitical = merged.iter().any(|l| l.class == PoliticalClass::Nonpolitical);
    let cfg = RgcnConfig {
        classes: if has_nonpolitical { 3 } else { cfg.classes },
        seed: cfg.seed.wrapping_add(iteration as u64),
        ..cfg.clone()
    };
    let targets = targets_from_labels(view, &merged, cfg.class_list(), false);
    let out = train(view, &targets, &cfg, exec)?;
    let scores = predict_products(&out.model, view, exec)?;
    let predicted_share = shares(&scores);
    let share_drift = previous
        .map(|prev| {
            let before = shares(prev);
            PoliticalClass::ALL
                .iter()
                .map(|c| {
                    let k = c.as_str();
                    let d = predicted_share.get(k).unwrap_or(&0.0) - before.get(k).unwrap_or(&0.0);
                    (k.to_string(), d)
                })
                .collect()
        })
        .unwrap_or_default();
    let best = out.best();
    let report = IterationReport {
        iteration,
        classes: cfg.classes,
        verdicts_applied: applied,
        rejected,
        labels_before: counts(labels),
        labels_after: counts(&merged),
        predicted_share,
        share_drift,
        best_val_acc: best.val_acc,
        test_acc: best.test_acc,
    };
    Ok(HitlOutcome {
        labels: merged,
        model: out.model,
        scores,
        report,
    })
}

#[derive(Serialize)]
struct ScoreRow<'a> {
    asin: &'a str,
    class: &'a str,
    max_prob: f64,
    p_conservative: f64,
    p_liberal: f64,
    p_nonpolitical: f64,
    lifestyle: f64,
}

pub fn write_scores_csv<W: Write>(w: W, scores: &[ClassScore]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for s in scores {
        out.serialize(ScoreRow {
            asin: &s.key,
            class: s.class.as_str(),
            max_prob: s.max_prob,
            p_conservative: s.prob(PoliticalClass::Conservative),
            p_liberal: s.prob(PoliticalClass::Liberal),
            p_nonpolitical: s.prob(PoliticalClass::Nonpolitical),
            lifestyle: lifestyle_score(s.conservative_share()),
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_curve_csv<W: Write>(w: W, curve: &[(f64, f64)]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["threshold", "accepted_fraction"])?;
    for (t, f) in curve {
        out.write_record([t.to_string(), f.to_string()])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(key: &str, probs: &[f64]) -> ClassScore {
        let (arg, &max_prob) = probs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
        ClassScore {
            node: 0,
            key: key.into(),
            probs: probs.to_vec(),
            class: PoliticalClass::ALL[arg],
            max_prob,
        }
    }

    #[test]
    fn lifestyle_examples() {
        assert_eq!(lifestyle_score(0.5), 0.5);
        assert!((lifestyle_logit(0.5572) - 1.144).abs() < 1e-9);
        let p = lifestyle_probability(0.5572);
        assert!((p - 1.144f64.exp() / (1.0 + 1.144f64.exp())).abs() < 1e-12);
        assert!((p - 0.75842).abs() < 1e-5);
        let top = (9999f64).ln();
        assert!((lifestyle_score(1.0) - (top + 10.0) / 20.0).abs() < 1e-12);
        assert!((lifestyle_score(1.0) - 0.96051).abs() < 1e-5);
        assert_eq!(lifestyle_score(1.0), lifestyle_score(0.99995));
        assert_eq!(lifestyle_score(0.0), lifestyle_score(1e-5));
    }

    #[test]
    fn curve_counts() {
        let s: Vec<_> = [0.6, 0.7, 0.9, 0.99]
            .iter()
            .map(|&p| score("x", &[p, 1.0 - p]))
            .collect();
        let c = threshold_curve(&s, &[0.5, 0.8, 1.0]).unwrap();
        assert_eq!(c, vec![(0.5, 1.0), (0.8, 0.5), (1.0, 0.0)]);
        let flat: Vec<_> = (0..3).map(|_| score("x", &[1.0, 0.0])).collect();
        assert!(threshold_curve(&flat, &[0.1, 0.5, 1.0])
            .unwrap()
            .iter()
            .all(|p| p.1 == 1.0));
        let uniform: Vec<_> = (0..3).map(|_| score("x", &[0.5, 0.5])).collect();
        assert_eq!(threshold_curve(&uniform, &[0.51]).unwrap()[0].1, 0.0);
        assert!(threshold_curve(&[], &[0.5]).is_err());
        assert!(threshold_curve(&s, &[0.9, 0.5]).is_err());
    }

    #[test]
    fn acceptance_rule() {
        let mut existing = LabelStore::new();
        existing.offer(PoliticalLabel::human("h", PoliticalClass::Liberal, 1));
        let s = vec![
            score("a", &[0.96, 0.04]),
            score("b", &[0.94, 0.06]),
            score("h", &[0.99, 0.01]),
        ];
        let got = accept_labels(
            &s,
            0.95,
            &[PoliticalClass::Conservative, PoliticalClass::Liberal],
            &existing,
            2,
        );
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].product, "a");
        assert_eq!(got[0].class, PoliticalClass::Conservative);
        assert_eq!(got[0].provenance, Provenance::Model);
        let strict = accept_labels(&s, 1.0, PoliticalClass::ALL.as_slice(), &existing, 2);
        assert!(strict.is_empty());
    }

    #[test]
    fn candidate_strata() {
        let mut labels = LabelStore::new();
        labels.offer(PoliticalLabel::seed("s", PoliticalClass::Conservative));
        let s = vec![
            score("s", &[0.99, 0.01]),
            score("c", &[0.9, 0.1]),
            score("l", &[0.2, 0.8]),
            score("m", &[0.51, 0.49]),
        ];
        let c = candidates(&s, 1, &labels);
        assert_eq!(c.conservative[0].key, "c");
        assert_eq!(c.liberal[0].key, "l");
        assert_eq!(c.ambiguous[0].key, "m");
    }

    #[test]
    fn hitl_iteration_rules() {
        let (g, truth) = super::super::train::tests::planted(12, 3);
        let view = RelationalView::from_graph(&g, None);
        let mut labels = LabelStore::new();
        for k in 0..4 {
            for i in [k, 12 + k] {
                labels.offer(PoliticalLabel::seed(&format!("p{i:03}"), PoliticalClass::ALL[truth[i]]));
            }
        }
        let cfg = RgcnConfig {
            epochs: 5,
            hidden: 4,
            ..Default::default()
        };
        let none = hitl_iterate(&view, &labels, &[], &cfg, 1, None, Execution::Sequential).unwrap();
        assert_eq!(none.report.labels_before, none.report.labels_after);
        assert_eq!(none.report.classes, 2);

        let verdicts = vec![
            Verdict {
                asin: "p010".into(),
                class: PoliticalClass::Nonpolitical,
            },
            Verdict {
                asin: "p000".into(),
                class: PoliticalClass::Liberal,
            },
            Verdict {
                asin: "nope".into(),
                class: PoliticalClass::Liberal,
            },
        ];
        let out = hitl_iterate(
            &view,
            &labels,
            &verdicts,
            &cfg,
            2,
            Some(&none.scores),
            Execution::Sequential,
        )
        .unwrap();
        assert_eq!(out.report.classes, 3);
        assert_eq!(out.model.config.classes, 3);
        assert_eq!(out.report.verdicts_applied, 1);
        let reasons: Vec<_> = out.report.rejected.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(reasons, vec!["seed-precedence", "unknown-node"]);
        assert_eq!(out.labels.get("p010").unwrap().provenance, Provenance::Human);
        assert!(out
            .scores
            .iter()
            .all(|s| (s.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9));
        assert_eq!(out.report.share_drift.len(), 3);
    }
}
