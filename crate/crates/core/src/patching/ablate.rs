// SPDX-License-Identifier: MIT OR Apache-2.0

//! Zero and mean ablation of head outputs in the donor run.

use std::collections::BTreeMap;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{degenerate, stable_mean, PatchError, TripleRuns};
use crate::axioms::DiagnosticTriple;
use crate::model::{HookKind, HookSite, Model, ModelError, Patch, Positions, Record};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationMode {
    Zero,
    Mean,
}

impl FromStr for AblationMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(AblationMode::Zero),
            "mean" => Ok(AblationMode::Mean),
            _ => Err(format!("unknown ablation mode {s:?} (zero or mean)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTriple {
    pub triple_id: String,
    pub qid: String,
    pub head: HookSite,
    pub s_high: f32,
    pub s_low: f32,
    pub s_high_ablated: f32,
    pub gap_before: f64,
    pub gap_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub head: HookSite,
    pub n_triples: usize,
    pub mean_gap_before: f64,
    pub mean_gap_after: f64,
    /// `1 − mean_gap_after / mean_gap_before`: 1 removes the gap, 0 leaves
    /// it unchanged.
    pub collapse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub mode: AblationMode,
    pub rows: Vec<AblationRow>,
    pub triples: Vec<AblationTriple>,
    /// Queries skipped by mean ablation for having fewer than two triples.
    pub skipped_queries: Vec<String>,
}

impl AblationReport {
    pub fn row(&self, head: HookSite) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.head == head)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("head,mode,n_triples,mean_gap_before,mean_gap_after,collapse\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{:?},{:?},{:?}\n",
                r.head,
                match self.mode {
                    AblationMode::Zero => "zero",
                    AblationMode::Mean => "mean",
                },
                r.n_triples,
                r.mean_gap_before,
                r.mean_gap_after,
                r.collapse
            ));
        }
        s
    }
}

/// Mean `HeadOut` row of each head over every position of every baseline
/// and perturbed document of the triples.
fn mean_head_outputs(
    model: &Model,
    triples: &[&DiagnosticTriple],
    heads: &[HookSite],
) -> Result<Vec<Vec<f32>>, PatchError> {
    let d = model.config().d_model;
    let record = Record::sites(heads.iter().copied());
    let docs: Vec<&[u32]> = triples
        .iter()
        .flat_map(|t| [t.baseline_ids.ids.as_slice(), t.perturbed_ids.ids.as_slice()])
        .collect();
    let caches = docs
        .par_iter()
        .map(|ids| model.encode(ids, &record).map(|e| e.cache))
        .collect::<Result<Vec<_>, _>>()?;
    heads
        .iter()
        .map(|h| {
            let mut out = vec![0.0f32; d];
            for (j, slot) in out.iter_mut().enumerate() {
                let mut vals: Vec<f64> = Vec::new();
                for c in &caches {
                    let t = c.require(h)?;
                    vals.extend((0..t.rows()).map(|i| t.row(i)[j] as f64));
                }
                *slot = stable_mean(&mut vals).unwrap_or(0.0) as f32;
            }
            Ok(out)
        })
        .collect()
}

/// Ablates each head in the donor run of every usable triple and reports
/// how much of the score gap `s_high − s_low` remains.
pub fn ablate(
    model: &Model,
    triples: &[DiagnosticTriple],
    heads: &[HookSite],
    mode: AblationMode,
    keep_contradictions: bool,
) -> Result<AblationReport, PatchError> {
    let cfg = model.config();
    for h in heads {
        if h.kind != HookKind::HeadOut {
            return Err(PatchError::InvalidSpec(format!("{h} is not a head_out site")));
        }
        h.validate(cfg)?;
    }

    // qid → (triples, per-head mean rows)
    let mut groups: BTreeMap<&str, Vec<&DiagnosticTriple>> = BTreeMap::new();
    for t in triples {
        groups.entry(t.qid.as_str()).or_default().push(t);
    }
    let mut skipped = Vec::new();
    let mut means: BTreeMap<&str, Vec<Vec<f32>>> = BTreeMap::new();
    if mode == AblationMode::Mean {
        for (qid, group) in &groups {
            if group.len() < 2 {
                log::warn!("query {qid}: mean ablation needs at least 2 triples, skipping");
                skipped.push(qid.to_string());
                continue;
            }
            means.insert(qid, mean_head_outputs(model, group, heads)?);
        }
    }

    let usable: Vec<&DiagnosticTriple> = triples
        .iter()
        .filter(|t| mode == AblationMode::Zero || means.contains_key(t.qid.as_str()))
        .collect();

    let per_triple: Vec<Vec<AblationTriple>> = usable
        .par_iter()
        .map(|t| -> Result<Vec<AblationTriple>, PatchError> {
            let runs = TripleRuns::new(model, t, &[])?;
            let (s_high, s_low) = (runs.s_high(), runs.s_low());
            if degenerate(s_high, s_low) || (!keep_contradictions && s_high < s_low) {
                return Ok(Vec::new());
            }
            let seq = runs.donor.ids.len();
            heads
                .iter()
                .enumerate()
                .map(|(hi, head)| {
                    let replacement = match mode {
                        AblationMode::Zero => Tensor::zeros(vec![seq, cfg.d_model]),
                        AblationMode::Mean => {
                            let row = &means[t.qid.as_str()][hi];
                            Tensor::from_rows(&vec![row.clone(); seq]).map_err(ModelError::from)?
                        }
                    };
                    let patch = Patch::new(*head, Positions::All, &replacement);
                    let cls = model.encode_with_patches_from(&runs.donor.ids, &runs.donor.cache, &[patch])?;
                    let s_high_ablated = crate::model::score(&runs.query, &cls)?;
                    Ok(AblationTriple {
                        triple_id: t.id.clone(),
                        qid: t.qid.clone(),
                        head: *head,
                        s_high,
                        s_low,
                        s_high_ablated,
                        gap_before: s_high as f64 - s_low as f64,
                        gap_after: s_high_ablated as f64 - s_low as f64,
                    })
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;
    let results: Vec<AblationTriple> = per_triple.into_iter().flatten().collect();

    let rows = heads
        .iter()
        .map(|h| {
            let of_head: Vec<&AblationTriple> = results.iter().filter(|r| r.head == *h).collect();
            let mut before: Vec<f64> = of_head.iter().map(|r| r.gap_before).collect();
            let mut after: Vec<f64> = of_head.iter().map(|r| r.gap_after).collect();
            let mb = stable_mean(&mut before).unwrap_or(f64::NAN);
            let ma = stable_mean(&mut after).unwrap_or(f64::NAN);
            AblationRow {
                head: *h,
                n_triples: of_head.len(),
                mean_gap_before: mb,
                mean_gap_after: ma,
                collapse: 1.0 - ma / mb,
            }
        })
        .collect();
    if results.is_empty() {
        return Err(PatchError::EmptyDataset);
    }
    Ok(AblationReport {
        mode,
        rows,
        triples: results,
        skipped_queries: skipped,
    })
}
