use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BenchError, Difficulty, TOOLKIT_VERSION};
use crate::simulator::OutcomeType;

/// One scenario × repeat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub scenario: String,
    pub difficulty: Difficulty,
    pub repeat: usize,
    pub seed: u64,
    pub outcome: OutcomeType,
    /// Every object stands on its own.
    pub gravity_ok: bool,
    pub stabilized: bool,
    pub settle_time: f64,
    /// SP-3D of the observed motion against the initial placement.
    pub sp3d_input: f64,
    /// SP-3D after the align stage (equal to the input when it is off).
    pub sp3d: f64,
    pub w_mpjpe_pre: f64,
    pub w_mpjpe_post: f64,
    pub pa_mpjpe_pre: Option<f64>,
    pub pa_mpjpe_post: Option<f64>,
    pub note: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierReport {
    pub difficulty: Difficulty,
    pub runs: usize,
    /// Runs ending in Type1..Type4.
    pub outcomes: [usize; 4],
    pub stability_hsi: f64,
    pub stability_gravity: f64,
    pub sp3d_input: f64,
    pub sp3d: f64,
    pub w_mpjpe_pre: f64,
    pub w_mpjpe_post: f64,
    pub pa_mpjpe_pre: f64,
    pub pa_mpjpe_post: f64,
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchReport {
    pub toolkit_version: String,
    /// Type1 runs were left out of the Stability-HSI denominator.
    pub exclude_gravity_failures: bool,
    pub tiers: Vec<TierReport>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Rows in aggregation order: scenario id, then repeat.
pub fn sort_rows(rows: &mut [RunRow]) {
    rows.sort_by(|a, b| a.scenario.cmp(&b.scenario).then(a.repeat.cmp(&b.repeat)));
}

impl BenchReport {
    /// Folds run rows into per-tier figures. The rows are sorted first, so
    /// the result does not depend on their order.
    pub fn from_rows(rows: &[RunRow], exclude_gravity_failures: bool) -> BenchReport {
        let mut rows = rows.to_vec();
        sort_rows(&mut rows);
        let tiers = Difficulty::ALL
            .into_iter()
            .filter_map(|d| {
                let tier: Vec<&RunRow> = rows.iter().filter(|r| r.difficulty == d).collect();
                if tier.is_empty() {
                    return None;
                }
                let mut outcomes = [0usize; 4];
                for r in &tier {
                    outcomes[r.outcome as usize] += 1;
                }
                let den = if exclude_gravity_failures {
                    tier.len() - outcomes[0]
                } else {
                    tier.len()
                };
                Some(TierReport {
                    difficulty: d,
                    runs: tier.len(),
                    outcomes,
                    stability_hsi: pct(outcomes[3], den),
                    stability_gravity: pct(tier.iter().filter(|r| r.gravity_ok).count(), tier.len()),
                    sp3d_input: mean(tier.iter().map(|r| r.sp3d_input)),
                    sp3d: mean(tier.iter().map(|r| r.sp3d)),
                    w_mpjpe_pre: mean(tier.iter().map(|r| r.w_mpjpe_pre)),
                    w_mpjpe_post: mean(tier.iter().map(|r| r.w_mpjpe_post)),
                    pa_mpjpe_pre: mean(tier.iter().filter_map(|r| r.pa_mpjpe_pre)),
                    pa_mpjpe_post: mean(tier.iter().filter_map(|r| r.pa_mpjpe_post)),
                    seeds: tier.iter().map(|r| r.seed).collect(),
                })
            })
            .collect();
        BenchReport {
            toolkit_version: TOOLKIT_VERSION.to_string(),
            exclude_gravity_failures,
            tiers,
        }
    }

    pub fn tier(&self, d: Difficulty) -> Option<&TierReport> {
        self.tiers.iter().find(|t| t.difficulty == d)
    }
}

pub fn rows_to_csv(rows: &[RunRow]) -> Result<String, BenchError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<RunRow>, BenchError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|row| row.map_err(BenchError::from)).collect()
}

pub fn read_rows(path: &Path) -> Result<Vec<RunRow>, BenchError> {
    rows_from_csv(&super::read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, repeat: usize, outcome: OutcomeType, sp3d: f64) -> RunRow {
        RunRow {
            scenario: id.into(),
            difficulty: Difficulty::Easy,
            repeat,
            seed: repeat as u64 + 10,
            outcome,
            gravity_ok: outcome != OutcomeType::Type1,
            stabilized: outcome >= OutcomeType::Type3,
            settle_time: 1.25,
            sp3d_input: 2.0 * sp3d,
            sp3d,
            w_mpjpe_pre: 0.05,
            w_mpjpe_post: 0.01,
            pa_mpjpe_pre: Some(0.0),
            pa_mpjpe_post: None,
            note: String::new(),
        }
    }

    #[test]
    fn aggregates_count_type4_only() {
        let rows = vec![
            row("a", 0, OutcomeType::Type4, 1.0),
            row("a", 1, OutcomeType::Type3, 0.1),
            row("b", 0, OutcomeType::Type1, 1.0 / 3.0),
            row("b", 1, OutcomeType::Type4, 0.0),
        ];
        let r = BenchReport::from_rows(&rows, false);
        let t = r.tier(Difficulty::Easy).unwrap();
        assert_eq!(t.runs, 4);
        assert_eq!(t.outcomes, [1, 0, 1, 2]);
        assert_eq!(t.stability_hsi, 50.0);
        assert_eq!(t.stability_gravity, 75.0);
        let ex = BenchReport::from_rows(&rows, true);
        assert!((ex.tiers[0].stability_hsi - 200.0 / 3.0).abs() < 1e-12);
        let mut shuffled = rows.clone();
        shuffled.reverse();
        assert_eq!(BenchReport::from_rows(&shuffled, false), r);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = vec![
            row("a", 0, OutcomeType::Type4, 0.1 + 0.2),
            row("b", 3, OutcomeType::Type2, 1.0 / 7.0),
        ];
        let text = rows_to_csv(&rows).unwrap();
        assert_eq!(rows_from_csv(&text).unwrap(), rows);
    }
}
