//! Maximum-likelihood logistic fit of survey responses by iteratively
//! reweighted least squares.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::acceptance::AcceptanceModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyRecord {
    pub rank: u32,
    pub income: f64,
    pub obedience: f64,
    pub accepted: u8,
}

impl SurveyRecord {
    pub fn validate(&self, income_scale: [f64; 2]) -> Result<()> {
        if !(1..=9).contains(&self.rank) {
            return Err(Error::Fit(format!("rank {} outside 1..9", self.rank)));
        }
        if !(0.0..=1.0).contains(&self.obedience) {
            return Err(Error::Fit(format!("obedience {} outside [0, 1]", self.obedience)));
        }
        if !(self.income >= income_scale[0] && self.income <= income_scale[1]) {
            return Err(Error::Fit(format!(
                "income {} outside survey scale [{}, {}]",
                self.income, income_scale[0], income_scale[1]
            )));
        }
        if self.accepted > 1 {
            return Err(Error::Fit(format!("accepted must be 0 or 1, got {}", self.accepted)));
        }
        Ok(())
    }
}

pub const MIN_RECORDS: usize = 50;
pub const TOLERANCE: f64 = 1e-8;
pub const MAX_ITER: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub model: AcceptanceModel,
    pub records: usize,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// Share of records classified correctly at threshold 0.5.
    pub accuracy: f64,
    pub auc: f64,
}

impl FitReport {
    /// Flat `key = value` lines.
    pub fn to_kv(&self, config_hash: Option<u64>) -> String {
        let mut s = String::new();
        if let Some(h) = config_hash {
            s.push_str(&format!("config_hash = {h:016x}\n"));
        }
        s.push_str(&format!("b = {}\n", self.model.b));
        s.push_str(&format!("w_r = {}\n", self.model.w_r));
        s.push_str(&format!("w_m = {}\n", self.model.w_m));
        s.push_str(&format!("w_o = {}\n", self.model.w_o));
        s.push_str(&format!("records = {}\n", self.records));
        s.push_str(&format!("iterations = {}\n", self.iterations));
        s.push_str(&format!("log_likelihood = {}\n", self.log_likelihood));
        s.push_str(&format!("accuracy = {}\n", self.accuracy));
        s.push_str(&format!("auc = {}\n", self.auc));
        s
    }
}

/// Parse the `b`/`w_r`/`w_m`/`w_o` keys out of a flat key-value model file.
pub fn model_from_kv(text: &str) -> Result<AcceptanceModel> {
    let mut c = [None; 4];
    for line in text.lines() {
        let Some((k, v)) = line.split_once('=') else { continue };
        let idx = match k.trim() {
            "b" => 0,
            "w_r" => 1,
            "w_m" => 2,
            "w_o" => 3,
            _ => continue,
        };
        c[idx] = Some(
            v.trim()
                .parse::<f64>()
                .map_err(|e| Error::config(k.trim(), e.to_string()))?,
        );
    }
    let get = |i: usize, k: &str| c[i].ok_or_else(|| Error::config(k, "missing from model file"));
    Ok(AcceptanceModel {
        b: get(0, "b")?,
        w_r: get(1, "w_r")?,
        w_m: get(2, "w_m")?,
        w_o: get(3, "w_o")?,
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn design(records: &[SurveyRecord]) -> (DMatrix<f64>, DVector<f64>) {
    let n = records.len();
    let x = DMatrix::from_fn(n, 4, |i, j| {
        let r = &records[i];
        match j {
            0 => 1.0,
            1 => r.rank as f64,
            2 => r.income,
            _ => r.obedience,
        }
    });
    let y = DVector::from_iterator(n, records.iter().map(|r| r.accepted as f64));
    (x, y)
}

/// Fit `P(accept) = σ(b + w_r r + w_m m + w_o o)` by Newton/IRLS.
pub fn fit_acceptance_model(records: &[SurveyRecord]) -> Result<FitReport> {
    if records.len() < MIN_RECORDS {
        return Err(Error::Fit(format!(
            "need at least {MIN_RECORDS} records, got {}",
            records.len()
        )));
    }
    let positives = records.iter().filter(|r| r.accepted == 1).count();
    if positives == 0 || positives == records.len() {
        return Err(Error::Fit(format!(
            "separation: only one class present ({positives} of {} accepted)",
            records.len()
        )));
    }
    let (x, y) = design(records);
    let mut beta = DVector::<f64>::zeros(4);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITER {
        iterations += 1;
        let eta = &x * &beta;
        let p = eta.map(sigmoid);
        let w = p.map(|v| v * (1.0 - v));
        if w.iter().all(|&v| v < 1e-12) {
            return Err(Error::Fit("separation: fitted probabilities collapsed to 0/1".into()));
        }
        let mut xtwx = DMatrix::<f64>::zeros(4, 4);
        for i in 0..x.nrows() {
            let row = x.row(i);
            for a in 0..4 {
                for b in 0..4 {
                    xtwx[(a, b)] += w[i] * row[a] * row[b];
                }
            }
        }
        let grad = x.transpose() * (&y - &p);
        let chol = xtwx
            .cholesky()
            .ok_or_else(|| Error::Fit("singular information matrix (collinear or separated data)".into()))?;
        let delta = chol.solve(&grad);
        beta += &delta;
        if beta.iter().any(|v| !v.is_finite() || v.abs() > 1e3) {
            return Err(Error::Fit("separation: coefficients diverged".into()));
        }
        if delta.amax() < TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Fit(format!("no convergence after {MAX_ITER} iterations")));
    }
    let model = AcceptanceModel::from_array([beta[0], beta[1], beta[2], beta[3]]);
    let probs: Vec<f64> = records
        .iter()
        .map(|r| model.probability(r.rank as f64, r.income, r.obedience))
        .collect();
    let log_likelihood = records
        .iter()
        .zip(&probs)
        .map(|(r, &p)| {
            let p = p.clamp(1e-300, 1.0 - 1e-16);
            if r.accepted == 1 {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum();
    let correct = records
        .iter()
        .zip(&probs)
        .filter(|(r, &p)| (p >= 0.5) == (r.accepted == 1))
        .count();
    let labels: Vec<bool> = records.iter().map(|r| r.accepted == 1).collect();
    Ok(FitReport {
        model,
        records: records.len(),
        iterations,
        log_likelihood,
        accuracy: correct as f64 / records.len() as f64,
        auc: auc(&probs, &labels),
    })
}

/// Area under the ROC curve via the rank-sum statistic; tied scores share ranks.
pub fn auc(scores: &[f64], labels: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    let n_pos = labels.iter().filter(|&&l| l).count() as f64;
    let n_neg = labels.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return f64::NAN;
    }
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg)
}

/// Income levels offered in the survey: seven evenly spaced values across the scale.
pub fn survey_income_levels(scale: [f64; 2]) -> [f64; 7] {
    std::array::from_fn(|i| scale[0] + (scale[1] - scale[0]) * i as f64 / 6.0)
}

/// Draw synthetic survey answers from a known model.
pub fn sample_survey<R: Rng>(model: &AcceptanceModel, n: usize, scale: [f64; 2], rng: &mut R) -> Vec<SurveyRecord> {
    let levels = survey_income_levels(scale);
    (0..n)
        .map(|_| {
            let rank = rng.gen_range(1..=9u32);
            let income = levels[rng.gen_range(0..levels.len())];
            let obedience: f64 = rng.gen();
            let p = model.probability(rank as f64, income, obedience);
            SurveyRecord {
                rank,
                income,
                obedience,
                accepted: u8::from(rng.gen::<f64>() < p),
            }
        })
        .collect()
}

pub fn read_survey_csv<R: Read>(r: R, income_scale: [f64; 2]) -> Result<Vec<SurveyRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize::<SurveyRecord>() {
        let row = row?;
        row.validate(income_scale)?;
        out.push(row);
    }
    Ok(out)
}

pub fn write_survey_csv<W: Write>(records: &[SurveyRecord], w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    wtr.write_record(["rank", "income", "obedience", "accepted"])?;
    for r in records {
        wtr.write_record([
            r.rank.to_string(),
            r.income.to_string(),
            r.obedience.to_string(),
            r.accepted.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};

    #[test]
    fn all_accept_is_separation() {
        let recs: Vec<SurveyRecord> = (0..60)
            .map(|i| SurveyRecord {
                rank: 1 + (i % 9) as u32,
                income: 10.0,
                obedience: 0.5,
                accepted: 1,
            })
            .collect();
        let err = fit_acceptance_model(&recs).unwrap_err();
        assert!(err.to_string().contains("separation"));
    }

    #[test]
    fn too_few_records() {
        let mut rng = stream_rng(1, Stream::Survey, 0);
        let recs = sample_survey(&AcceptanceModel::default(), 10, [6.0, 16.0], &mut rng);
        assert!(fit_acceptance_model(&recs).is_err());
    }

    #[test]
    fn null_model_has_chance_auc() {
        let mut rng = stream_rng(4, Stream::Survey, 0);
        let recs = sample_survey(&AcceptanceModel::ZERO, 5000, [6.0, 16.0], &mut rng);
        let rep = fit_acceptance_model(&recs).unwrap();
        assert!((rep.auc - 0.5).abs() < 0.05, "auc {}", rep.auc);
    }

    #[test]
    fn auc_known_values() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]), 1.0);
        assert_eq!(auc(&[0.5, 0.5], &[false, true]), 0.5);
        assert_eq!(auc(&[0.9, 0.1], &[false, true]), 0.0);
    }

    #[test]
    fn kv_round_trip() {
        let mut rng = stream_rng(5, Stream::Survey, 0);
        let recs = sample_survey(&AcceptanceModel::default(), 2000, [6.0, 16.0], &mut rng);
        let rep = fit_acceptance_model(&recs).unwrap();
        let back = model_from_kv(&rep.to_kv(Some(7))).unwrap();
        assert_eq!(back, rep.model);
    }

    #[test]
    fn survey_csv_round_trip_and_validation() {
        let mut rng = stream_rng(6, Stream::Survey, 0);
        let recs = sample_survey(&AcceptanceModel::default(), 20, [6.0, 16.0], &mut rng);
        let mut buf = Vec::new();
        write_survey_csv(&recs, &mut buf).unwrap();
        assert!(buf.starts_with(b"rank,income,obedience,accepted\n"));
        assert_eq!(read_survey_csv(buf.as_slice(), [6.0, 16.0]).unwrap(), recs);
        assert!(read_survey_csv(&b"rank,income,obedience,accepted\n10,8,0.5,1\n"[..], [6.0, 16.0]).is_err());
    }
}
