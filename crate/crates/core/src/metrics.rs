//! Episode metrics from the event log, and cross-seed comparison tables.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::{Cents, Event, GridId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: u64,
    pub policy: String,
    pub seed: u64,
    pub tdi: Cents,
    pub ri: Cents,
    pub rrr: f64,
    /// `None` when no recommendation was issued.
    pub acceptance_rate: Option<f64>,
    pub repositions: u64,
}

/// Derive all five metrics from a complete log.
pub fn compute_metrics(log: &[Event], policy: &str, seed: u64, episode: u64) -> Result<EpisodeMetrics> {
    let mut requests = 0u64;
    let mut served = 0u64;
    let mut tdi = Cents(0);
    let mut ri = Cents(0);
    let mut issued = 0u64;
    let mut accepted = 0u64;
    let mut repositions = 0u64;
    let mut open_rec: HashMap<usize, (GridId, GridId)> = HashMap::new();
    let mut last_accepted: HashMap<usize, bool> = HashMap::new();
    let mut attributed: HashMap<u64, bool> = HashMap::new();
    for e in log {
        match *e {
            Event::Request { .. } => requests += 1,
            Event::Recommend {
                driver, from, target, ..
            } => {
                if open_rec.insert(driver, (from, target)).is_some() {
                    return Err(Error::MalformedLog(format!(
                        "driver {driver} got two recommendations in a row"
                    )));
                }
                issued += 1;
            }
            Event::Decide {
                driver, accepted: ok, ..
            } => {
                let (from, target) = open_rec.remove(&driver).ok_or_else(|| {
                    Error::MalformedLog(format!("decision without recommendation for driver {driver}"))
                })?;
                if ok {
                    accepted += 1;
                    if target != from {
                        repositions += 1;
                    }
                }
                last_accepted.insert(driver, ok);
            }
            Event::Cruise { driver, .. } => {
                last_accepted.insert(driver, false);
            }
            Event::Match { request, driver, .. } => {
                let a = last_accepted.remove(&driver).unwrap_or(false);
                attributed.insert(request, a);
            }
            Event::Serve { request, fare, .. } => {
                let a = attributed
                    .remove(&request)
                    .ok_or_else(|| Error::MalformedLog(format!("request {request} served without a match")))?;
                served += 1;
                tdi += fare;
                if a {
                    ri += fare;
                }
            }
            Event::Expire { .. } => {}
        }
    }
    Ok(EpisodeMetrics {
        episode,
        policy: policy.to_string(),
        seed,
        tdi,
        ri,
        rrr: if requests == 0 {
            0.0
        } else {
            served as f64 / requests as f64
        },
        acceptance_rate: (issued > 0).then(|| accepted as f64 / issued as f64),
        repositions,
    })
}

pub const CSV_HEADER: &str = "episode,policy,seed,tdi,ri,rrr,acceptance_rate,repositions";

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "N/A".to_string(), |v| format!("{v:.6}"))
}

impl EpisodeMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.2},{:.2},{:.6},{},{}",
            self.episode,
            self.policy,
            self.seed,
            self.tdi.as_currency(),
            self.ri.as_currency(),
            self.rrr,
            fmt_rate(self.acceptance_rate),
            self.repositions
        )
    }
}

/// Per-episode CSV: a `# config_hash=` line, the header, then one row per episode.
pub fn write_metrics_csv<W: Write>(mut w: W, config_hash: u64, rows: &[EpisodeMetrics]) -> Result<()> {
    writeln!(w, "# config_hash={config_hash:016x}")?;
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv_row())?;
    }
    Ok(())
}

pub fn append_metrics_row<W: Write>(mut w: W, row: &EpisodeMetrics) -> Result<()> {
    writeln!(w, "{}", row.csv_row())?;
    Ok(())
}

/// Parse a metrics CSV. Returns the embedded config hash, if any, and the rows.
pub fn read_metrics_csv<R: BufRead>(r: R) -> Result<(Option<u64>, Vec<EpisodeMetrics>)> {
    let mut hash = None;
    let mut rows = Vec::new();
    let mut header = false;
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix("# config_hash=") {
            hash = Some(
                u64::from_str_radix(h.trim(), 16)
                    .map_err(|_| Error::MalformedLog(format!("line {}: bad config hash", n + 1)))?,
            );
            continue;
        }
        if !header {
            if line != CSV_HEADER {
                return Err(Error::MalformedLog(format!(
                    "line {}: expected header `{CSV_HEADER}`",
                    n + 1
                )));
            }
            header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(Error::MalformedLog(format!("line {}: expected 8 fields", n + 1)));
        }
        let bad = |what: &str| Error::MalformedLog(format!("line {}: bad {what}", n + 1));
        rows.push(EpisodeMetrics {
            episode: f[0].parse().map_err(|_| bad("episode"))?,
            policy: f[1].to_string(),
            seed: f[2].parse().map_err(|_| bad("seed"))?,
            tdi: Cents::from_currency(f[3].parse().map_err(|_| bad("tdi"))?),
            ri: Cents::from_currency(f[4].parse().map_err(|_| bad("ri"))?),
            rrr: f[5].parse().map_err(|_| bad("rrr"))?,
            acceptance_rate: match f[6] {
                "N/A" => None,
                v => Some(v.parse().map_err(|_| bad("acceptance_rate"))?),
            },
            repositions: f[7].parse().map_err(|_| bad("repositions"))?,
        });
    }
    Ok((hash, rows))
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_sd(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub policy: String,
    pub runs: usize,
    /// Percent of the no-reposition TDI for the same seed.
    pub norm_tdi: (f64, f64),
    /// RI as a percent of TDI.
    pub ri_tdi: (f64, f64),
    pub rrr: (f64, f64),
    pub acceptance: Option<(f64, f64)>,
    pub repositions: (f64, f64),
}

/// Normalize each run by the no-reposition run with the same seed, then
/// average over seeds.
pub fn normalize_and_tabulate(runs: &[EpisodeMetrics], baseline: &str) -> Result<Vec<TableRow>> {
    let base: HashMap<u64, f64> = runs
        .iter()
        .filter(|r| r.policy == baseline)
        .map(|r| (r.seed, r.tdi.as_currency()))
        .collect();
    if base.is_empty() {
        return Err(Error::MalformedLog(format!(
            "no `{baseline}` runs to normalize against"
        )));
    }
    let mut by: BTreeMap<&str, Vec<&EpisodeMetrics>> = BTreeMap::new();
    for r in runs {
        by.entry(r.policy.as_str()).or_default().push(r);
    }
    let mut rows = Vec::new();
    for (policy, rs) in by {
        let mut norm = Vec::new();
        for r in &rs {
            let b = base
                .get(&r.seed)
                .ok_or_else(|| Error::MalformedLog(format!("no `{baseline}` run for seed {}", r.seed)))?;
            norm.push(if *b > 0.0 { 100.0 * r.tdi.as_currency() / b } else { 0.0 });
        }
        let ri: Vec<f64> = rs
            .iter()
            .map(|r| {
                let t = r.tdi.as_currency();
                if t > 0.0 {
                    100.0 * r.ri.as_currency() / t
                } else {
                    0.0
                }
            })
            .collect();
        let rrr: Vec<f64> = rs.iter().map(|r| 100.0 * r.rrr).collect();
        let acc: Vec<f64> = rs.iter().filter_map(|r| r.acceptance_rate.map(|a| 100.0 * a)).collect();
        let rep: Vec<f64> = rs.iter().map(|r| r.repositions as f64).collect();
        rows.push(TableRow {
            policy: policy.to_string(),
            runs: rs.len(),
            norm_tdi: mean_sd(&norm),
            ri_tdi: mean_sd(&ri),
            rrr: mean_sd(&rrr),
            acceptance: (!acc.is_empty()).then(|| mean_sd(&acc)),
            repositions: mean_sd(&rep),
        });
    }
    Ok(rows)
}

pub const TABLE_HEADER: &str =
    "policy,runs,norm_tdi_mean,norm_tdi_sd,ri_tdi_mean,ri_tdi_sd,rrr_mean,rrr_sd,acceptance_mean,acceptance_sd,repositions_mean,repositions_sd";

pub fn write_table_csv<W: Write>(mut w: W, config_hash: u64, rows: &[TableRow]) -> Result<()> {
    writeln!(w, "# config_hash={config_hash:016x}")?;
    writeln!(w, "{TABLE_HEADER}")?;
    for r in rows {
        let (am, asd) = r.acceptance.map_or(("N/A".to_string(), "N/A".to_string()), |(m, s)| {
            (format!("{m:.2}"), format!("{s:.2}"))
        });
        writeln!(
            w,
            "{},{},{:.2},{:.2},{:.2},{:.2},{:.2},{:.2},{},{},{:.1},{:.1}",
            r.policy,
            r.runs,
            r.norm_tdi.0,
            r.norm_tdi.1,
            r.ri_tdi.0,
            r.ri_tdi.1,
            r.rrr.0,
            r.rrr.1,
            am,
            asd,
            r.repositions.0,
            r.repositions.1
        )?;
    }
    Ok(())
}

/// Aligned, human-readable version of the table.
pub fn format_table(rows: &[TableRow]) -> String {
    let pm = |(m, s): (f64, f64)| format!("{m:.2}% ± {s:.2}");
    let mut lines = vec![[
        "Policy".to_string(),
        "Norm. TDI".to_string(),
        "RI/TDI".to_string(),
        "RRR".to_string(),
        "Acceptance".to_string(),
        "Repositions".to_string(),
    ]];
    for r in rows {
        lines.push([
            r.policy.clone(),
            pm(r.norm_tdi),
            pm(r.ri_tdi),
            pm(r.rrr),
            r.acceptance.map_or("N/A".to_string(), pm),
            format!("{:.0} ± {:.0}", r.repositions.0, r.repositions.1),
        ]);
    }
    let widths: Vec<usize> = (0..6)
        .map(|c| lines.iter().map(|l| l[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, l) in lines.iter().enumerate() {
        let cells: Vec<String> = l
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let pad = widths[c] - s.chars().count();
                if c == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(policy: &str, seed: u64, tdi: f64) -> EpisodeMetrics {
        EpisodeMetrics {
            episode: 0,
            policy: policy.into(),
            seed,
            tdi: Cents::from_currency(tdi),
            ri: Cents(0),
            rrr: 0.5,
            acceptance_rate: None,
            repositions: 0,
        }
    }

    #[test]
    fn empty_log() {
        let m = compute_metrics(&[], "x", 1, 0).unwrap();
        assert_eq!(m.tdi, Cents(0));
        assert_eq!(m.rrr, 0.0);
        assert_eq!(m.acceptance_rate, None);
    }

    #[test]
    fn stay_acceptances_are_not_repositions() {
        let g = GridId(4);
        let log = vec![
            Event::Recommend {
                t: 0,
                driver: 0,
                from: g,
                target: g,
            },
            Event::Decide {
                t: 0,
                driver: 0,
                accepted: true,
                dest: g,
            },
            Event::Recommend {
                t: 0,
                driver: 1,
                from: g,
                target: g,
            },
            Event::Decide {
                t: 0,
                driver: 1,
                accepted: true,
                dest: g,
            },
        ];
        let m = compute_metrics(&log, "x", 1, 0).unwrap();
        assert_eq!(m.acceptance_rate, Some(1.0));
        assert_eq!(m.repositions, 0);
    }

    #[test]
    fn hand_trace() {
        let (a, b) = (GridId(0), GridId(1));
        let log = vec![
            Event::Request {
                t: 1,
                request: 7,
                origin: b,
                dest: a,
                fare: Cents(350),
            },
            Event::Recommend {
                t: 0,
                driver: 2,
                from: a,
                target: b,
            },
            Event::Decide {
                t: 0,
                driver: 2,
                accepted: true,
                dest: b,
            },
            Event::Match {
                t: 1,
                request: 7,
                driver: 2,
            },
            Event::Serve {
                t: 2,
                request: 7,
                driver: 2,
                fare: Cents(350),
            },
            Event::Request {
                t: 1,
                request: 8,
                origin: a,
                dest: b,
                fare: Cents(350),
            },
            Event::Expire { t: 1, request: 8 },
        ];
        let m = compute_metrics(&log, "x", 1, 0).unwrap();
        assert_eq!(m.tdi, Cents(350));
        assert_eq!(m.ri, Cents(350));
        assert_eq!(m.rrr, 0.5);
        assert_eq!(m.repositions, 1);
    }

    #[test]
    fn table_arithmetic() {
        let runs = vec![
            row("no_reposition", 1, 100.0),
            row("no_reposition", 2, 100.0),
            row("p", 1, 100.0),
            row("p", 2, 110.0),
        ];
        let t = normalize_and_tabulate(&runs, "no_reposition").unwrap();
        let base = t.iter().find(|r| r.policy == "no_reposition").unwrap();
        assert!((base.norm_tdi.0 - 100.0).abs() < 1e-12);
        let p = t.iter().find(|r| r.policy == "p").unwrap();
        assert!((p.norm_tdi.0 - 105.0).abs() < 1e-12);
        assert!((p.norm_tdi.1 - 7.0711).abs() < 1e-4);
        assert!(format_table(&t).contains("N/A"));
    }

    #[test]
    fn csv_round_trip() {
        let mut r = row("random", 3, 12.34);
        r.acceptance_rate = Some(0.25);
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, 0xabc, &[r.clone(), row("no_reposition", 3, 1.0)]).unwrap();
        let (h, rows) = read_metrics_csv(&buf[..]).unwrap();
        assert_eq!(h, Some(0xabc));
        assert_eq!(rows[0], r);
    }
}
