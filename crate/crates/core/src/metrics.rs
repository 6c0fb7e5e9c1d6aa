//! Categorical and probabilistic forecast verification.
//!
//! GMGS uses the Gerrity (1992) scoring matrix built from a climatology of
//! observed class frequencies. TSS and BSS are evaluated on the binary
//! `>=M` event (classes M and X).

use std::fmt::Write as _;

use crate::error::{FlareError, Result};
use crate::exec::pairwise_sum;
use crate::types::{ConfusionMatrix, FlareClass, ProbDist, NUM_CLASSES};

const CLIMATOLOGY_SUM_TOL: f64 = 1e-9;

/// Symmetric, equitable Gerrity scoring matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringMatrix {
    s: [[f64; NUM_CLASSES]; NUM_CLASSES],
    climatology: [f64; NUM_CLASSES],
}

impl ScoringMatrix {
    pub fn get(&self, observed: FlareClass, predicted: FlareClass) -> f64 {
        self.s[observed.rank()][predicted.rank()]
    }

    pub fn entries(&self) -> &[[f64; NUM_CLASSES]; NUM_CLASSES] {
        &self.s
    }

    pub fn climatology(&self) -> &[f64; NUM_CLASSES] {
        &self.climatology
    }
}

/// Gerrity scores for an arbitrary number of ordinal categories.
///
/// With cumulative odds `a_r = (1 - P_r) / P_r`, `P_r = p_1 + ... + p_r`:
///
/// ```text
/// s_ii = (Σ_{r<i} 1/a_r + Σ_{r>=i} a_r) / (K-1)
/// s_ij = (Σ_{r<i} 1/a_r - (j - i) + Σ_{r>=j} a_r) / (K-1),  i < j
/// ```
fn gerrity_scores(p: &[f64]) -> Result<Vec<Vec<f64>>> {
    let k = p.len();
    if k < 2 {
        return Err(FlareError::DegenerateClimatology(
            "need at least two categories".into(),
        ));
    }
    if let Some(bad) = p.iter().find(|v| !v.is_finite() || **v <= 0.0) {
        return Err(FlareError::DegenerateClimatology(format!(
            "class probability {bad} is not strictly positive"
        )));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > CLIMATOLOGY_SUM_TOL {
        return Err(FlareError::DegenerateClimatology(format!(
            "probabilities sum to {total}, expected 1"
        )));
    }

    let mut odds = Vec::with_capacity(k - 1);
    let mut cumulative = 0.0;
    for (r, pr) in p[..k - 1].iter().enumerate() {
        cumulative += pr;
        let a = (1.0 - cumulative) / cumulative;
        if !(a.is_finite() && a > 0.0) {
            return Err(FlareError::DegenerateClimatology(format!(
                "cumulative probability reaches 1 at category {}",
                r + 1
            )));
        }
        odds.push(a);
    }

    // prefix[i] = Σ_{r<i} 1/a_r, suffix[j] = Σ_{r>=j} a_r
    let mut prefix = vec![0.0; k];
    for i in 1..k {
        prefix[i] = prefix[i - 1] + 1.0 / odds[i - 1];
    }
    let mut suffix = vec![0.0; k];
    for j in (0..k - 1).rev() {
        suffix[j] = suffix[j + 1] + odds[j];
    }

    let norm = (k - 1) as f64;
    let mut s = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let v = (prefix[i] - (j - i) as f64 + suffix[j]) / norm;
            s[i][j] = v;
            s[j][i] = v;
        }
    }
    Ok(s)
}

/// Builds the Gerrity scoring matrix for a four-class climatology.
pub fn gerrity_matrix(climatology: &[f64; NUM_CLASSES]) -> Result<ScoringMatrix> {
    let rows = gerrity_scores(climatology)?;
    let mut s = [[0.0; NUM_CLASSES]; NUM_CLASSES];
    for (dst, src) in s.iter_mut().zip(&rows) {
        dst.copy_from_slice(src);
    }
    Ok(ScoringMatrix {
        s,
        climatology: *climatology,
    })
}

/// Source of the climatology used to build the scoring matrix.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Climatology {
    /// Observed-class frequencies of the evaluated confusion matrix.
    #[default]
    FromMatrixRows,
    Explicit([f64; NUM_CLASSES]),
}

impl Climatology {
    pub fn resolve(&self, cm: &ConfusionMatrix) -> [f64; NUM_CLASSES] {
        match self {
            Climatology::FromMatrixRows => cm.row_climatology(),
            Climatology::Explicit(p) => *p,
        }
    }
}

fn score_with(cm: &ConfusionMatrix, s: &ScoringMatrix) -> f64 {
    let terms: Vec<f64> = cm
        .counts()
        .iter()
        .zip(s.entries())
        .flat_map(|(crow, srow)| crow.iter().zip(srow).map(|(c, s)| *c as f64 * s))
        .collect();
    pairwise_sum(&terms) / cm.total() as f64
}

/// Gandin–Murphy–Gerrity score: `(1/N) Σ c_ij s_ij`.
pub fn gmgs(cm: &ConfusionMatrix, climatology: &Climatology) -> Result<f64> {
    let s = gerrity_matrix(&climatology.resolve(cm))?;
    Ok(score_with(cm, &s))
}

/// Binary `>=M` contingency counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl BinaryCounts {
    pub fn ge_m(cm: &ConfusionMatrix) -> Self {
        let mut out = BinaryCounts {
            tp: 0,
            fn_: 0,
            fp: 0,
            tn: 0,
        };
        for obs in FlareClass::ALL {
            for pred in FlareClass::ALL {
                let c = cm.get(obs, pred);
                match (obs.is_ge_m(), pred.is_ge_m()) {
                    (true, true) => out.tp += c,
                    (true, false) => out.fn_ += c,
                    (false, true) => out.fp += c,
                    (false, false) => out.tn += c,
                }
            }
        }
        out
    }
}

/// True skill statistic on the `>=M` event: hit rate minus false-alarm rate.
pub fn tss_ge_m(cm: &ConfusionMatrix) -> Result<f64> {
    let b = BinaryCounts::ge_m(cm);
    let positives = b.tp + b.fn_;
    let negatives = b.fp + b.tn;
    if positives == 0 || negatives == 0 {
        return Err(FlareError::UndefinedTss);
    }
    Ok(b.tp as f64 / positives as f64 - b.fp as f64 / negatives as f64)
}

/// Brier skill score on the `>=M` event against the sequence's own base rate.
pub fn bss_ge_m(forecasts: &[(ProbDist, FlareClass)]) -> Result<f64> {
    if forecasts.is_empty() {
        return Err(FlareError::EmptyEvaluationSet);
    }
    let n = forecasts.len() as f64;
    let events = forecasts.iter().filter(|(_, obs)| obs.is_ge_m()).count();
    let rate = events as f64 / n;
    if events == 0 || events == forecasts.len() {
        return Err(FlareError::DegenerateBssClimatology(rate));
    }
    let sq: Vec<f64> = forecasts
        .iter()
        .map(|(p, obs)| {
            let o = if obs.is_ge_m() { 1.0 } else { 0.0 };
            (p.ge_m() - o).powi(2)
        })
        .collect();
    let bs = pairwise_sum(&sq) / n;
    let bs_clim = rate * (1.0 - rate);
    Ok(1.0 - bs / bs_clim)
}

/// One off-diagonal cell's contribution to the GMGS shortfall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfluenceEntry {
    pub observed: FlareClass,
    pub predicted: FlareClass,
    pub influence: f64,
}

/// `c_ij (s_ii - s_ij) / N` for every off-diagonal cell, sorted descending.
///
/// Ties keep row-major order.
pub fn gmgs_influence(cm: &ConfusionMatrix, s: &ScoringMatrix) -> Vec<InfluenceEntry> {
    let n = cm.total() as f64;
    let mut table = Vec::with_capacity(NUM_CLASSES * (NUM_CLASSES - 1));
    for obs in FlareClass::ALL {
        for pred in FlareClass::ALL {
            if obs == pred {
                continue;
            }
            let influence = cm.get(obs, pred) as f64 * (s.get(obs, obs) - s.get(obs, pred)) / n;
            table.push(InfluenceEntry {
                observed: obs,
                predicted: pred,
                influence,
            });
        }
    }
    table.sort_by(|a, b| b.influence.total_cmp(&a.influence));
    table
}

/// `2ab / (a + b)` for strictly positive inputs.
pub fn harmonic_mean(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(FlareError::HarmonicMeanUndefined(a, b));
    }
    Ok(2.0 * a * b / (a + b))
}

/// Summary of one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub gmgs: f64,
    pub tss_ge_m: Option<f64>,
    /// `None` for hard-class predictions or a degenerate base rate.
    pub bss_ge_m: Option<f64>,
    pub hm: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub influence_table: Vec<InfluenceEntry>,
}

impl MetricReport {
    /// Report for hard `(observed, predicted)` pairs. BSS is not available.
    pub fn from_hard(
        pairs: &[(FlareClass, FlareClass)],
        climatology: &Climatology,
    ) -> Result<Self> {
        let cm = ConfusionMatrix::build(pairs.iter().copied())?;
        Self::assemble(cm, climatology, None)
    }

    /// Report for probabilistic forecasts; the categorical prediction is the
    /// most probable class.
    pub fn from_probabilistic(
        forecasts: &[(ProbDist, FlareClass)],
        climatology: &Climatology,
    ) -> Result<Self> {
        let cm = ConfusionMatrix::build(forecasts.iter().map(|(p, obs)| (*obs, p.argmax())))?;
        let bss = bss_ge_m(forecasts).ok();
        Self::assemble(cm, climatology, bss)
    }

    fn assemble(cm: ConfusionMatrix, climatology: &Climatology, bss: Option<f64>) -> Result<Self> {
        let s = gerrity_matrix(&climatology.resolve(&cm))?;
        let gmgs = score_with(&cm, &s);
        let hm = bss.and_then(|b| harmonic_mean(gmgs, b).ok());
        Ok(Self {
            gmgs,
            tss_ge_m: tss_ge_m(&cm).ok(),
            bss_ge_m: bss,
            hm,
            confusion: cm,
            influence_table: gmgs_influence(&cm, &s),
        })
    }

    /// Human-readable table with the top `top_k` influence rows.
    pub fn to_text(&self, top_k: usize) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        let mut out = String::new();
        let _ = writeln!(out, "metric      value");
        let _ = writeln!(out, "GMGS        {:.4}", self.gmgs);
        let _ = writeln!(out, "TSS>=M      {}", fmt(self.tss_ge_m));
        let _ = writeln!(out, "BSS>=M      {}", fmt(self.bss_ge_m));
        let _ = writeln!(out, "HM          {}", fmt(self.hm));
        let _ = writeln!(out, "N           {}", self.confusion.total());
        let _ = writeln!(out);
        let _ = writeln!(out, "confusion (rows observed, columns predicted)");
        let _ = writeln!(out, "     {:>8}{:>8}{:>8}{:>8}", "O", "C", "M", "X");
        for obs in FlareClass::ALL {
            let _ = write!(out, "{obs:<5}");
            for pred in FlareClass::ALL {
                let _ = write!(out, "{:>8}", self.confusion.get(obs, pred));
            }
            let _ = writeln!(out);
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "observed predicted GMGS-Influence");
        for e in self.influence_table.iter().take(top_k) {
            let _ = writeln!(
                out,
                "{:<8} {:<9} {:.4}",
                e.observed, e.predicted, e.influence
            );
        }
        out
    }

    /// `metric,value` rows. Missing metrics are written as `n/a`.
    pub fn to_csv(&self, top_k: usize) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| x.to_string());
        let mut out = String::from("metric,value\n");
        let _ = writeln!(out, "gmgs,{}", self.gmgs);
        let _ = writeln!(out, "tss_ge_m,{}", fmt(self.tss_ge_m));
        let _ = writeln!(out, "bss_ge_m,{}", fmt(self.bss_ge_m));
        let _ = writeln!(out, "hm,{}", fmt(self.hm));
        let _ = writeln!(out, "n,{}", self.confusion.total());
        for obs in FlareClass::ALL {
            for pred in FlareClass::ALL {
                let _ = writeln!(out, "cm_{obs}_{pred},{}", self.confusion.get(obs, pred));
            }
        }
        for e in self.influence_table.iter().take(top_k) {
            let _ = writeln!(
                out,
                "influence_{}_{},{}",
                e.observed, e.predicted, e.influence
            );
        }
        out
    }
}
