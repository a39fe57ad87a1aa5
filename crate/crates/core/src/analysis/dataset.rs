//! Published outcome tables and figure rates, with a consistency checker.
//!
//! Rows carry both the published counts and the published percentages so the
//! checker can recompute one from the other. Two sources disagree on the rate
//! figures for agents 1 and 3: the figure captions and the running text. Both
//! are kept; neither is treated as correct.

use serde::{Deserialize, Serialize};

use super::{OutcomeCounts, OutcomeTally};
use crate::protocol::InteractionOutcome;

/// Default tolerance in percentage points. Published values carry one
/// decimal, so honest rounding stays within 0.05 pp.
pub const DEFAULT_TOLERANCE_PP: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRow {
    pub table: u8,
    pub pair: (u32, u32),
    pub topic: String,
    pub counts: OutcomeCounts,
    /// Published percentages in canonical outcome order.
    pub published_pct: [f64; 4],
}

impl PaperRow {
    pub fn tally(&self) -> OutcomeTally {
        OutcomeTally::new(self.pair, self.topic.clone(), self.counts)
    }
}

/// Success/failure/draw percentages of one subject against several
/// opponents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureRates {
    pub figure: u8,
    pub subject: u32,
    pub opponents: Vec<u32>,
    pub success_pct: Vec<f64>,
    pub failure_pct: Vec<f64>,
    /// Absent when the source gives no draw rates.
    pub draw_pct: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperDataset {
    pub rows: Vec<PaperRow>,
    /// Rates from the figure captions, used as the reference.
    pub figure_captions: Vec<FigureRates>,
    /// Rates stated in the running text; they conflict with the captions.
    pub text_rates: Vec<FigureRates>,
}

impl PaperDataset {
    pub fn tallies(&self) -> Vec<OutcomeTally> {
        self.rows.iter().map(PaperRow::tally).collect()
    }

    pub fn row(&self, pair: (u32, u32), topic: &str) -> Option<&PaperRow> {
        self.rows.iter().find(|r| r.pair == pair && r.topic == topic)
    }

    /// Human-readable notes on where captions and text disagree.
    pub fn rate_conflicts(&self) -> Vec<String> {
        let mut notes = Vec::new();
        for text in &self.text_rates {
            let Some(cap) = self
                .figure_captions
                .iter()
                .find(|c| c.subject == text.subject && c.opponents == text.opponents)
            else {
                continue;
            };
            for (i, opp) in text.opponents.iter().enumerate() {
                for (what, t, c) in [
                    ("success", text.success_pct[i], cap.success_pct[i]),
                    ("failure", text.failure_pct[i], cap.failure_pct[i]),
                ] {
                    if (t - c).abs() > 0.05 {
                        notes.push(format!(
                            "figure {}: agent {} vs agent {opp} {what} rate is {c:.1}% in the caption \
                             but {t:.1}% in the text",
                            cap.figure, text.subject
                        ));
                    }
                }
            }
        }
        notes
    }
}

/// (table, pair, topic, counts, published percentages)
type RowLiteral = (u8, (u32, u32), &'static str, [u64; 4], [f64; 4]);

const fn row(table: u8, pair: (u32, u32), topic: &'static str, c: [u64; 4], p: [f64; 4]) -> RowLiteral {
    (table, pair, topic, c, p)
}

#[rustfmt::skip]
const ROWS: [RowLiteral; 18] = [
    row(1, (4, 5), "HIV",       [38, 14, 10, 2], [59.4, 21.9, 15.6, 3.1]),
    row(1, (4, 5), "QAnon",     [32,  9, 13, 3], [56.1, 15.8, 22.8, 5.3]),
    row(1, (4, 5), "5G",        [22, 17, 20, 1], [36.7, 28.3, 33.3, 1.7]),
    row(1, (4, 5), "MMR",       [25, 15, 13, 2], [45.5, 27.3, 23.6, 3.6]),
    row(1, (4, 5), "Chloride",  [25, 16,  3, 1], [55.6, 35.6,  6.7, 2.2]),
    row(1, (4, 5), "Superfood", [23, 17,  4, 1], [51.1, 37.8,  8.9, 2.2]),
    row(2, (4, 6), "HIV",       [21, 27, 26, 0], [28.4, 36.5, 35.1, 0.0]),
    row(2, (4, 6), "QAnon",     [11, 20, 28, 0], [18.6, 33.9, 47.5, 0.0]),
    row(2, (4, 6), "5G",        [13, 24, 18, 0], [23.6, 43.6, 32.7, 0.0]),
    row(2, (4, 6), "MMR",       [13, 30, 14, 2], [22.0, 50.8, 23.7, 3.4]),
    row(2, (4, 6), "Chloride",  [17, 28,  8, 1], [31.5, 51.9, 14.8, 1.9]),
    row(2, (4, 6), "Superfood", [17, 30,  5, 0], [32.7, 57.7,  9.6, 0.0]),
    row(3, (5, 6), "HIV",       [36,  9, 42, 0], [41.4, 10.3, 48.3, 0.0]),
    row(3, (5, 6), "QAnon",     [13, 18, 34, 1], [19.7, 27.3, 51.6, 1.5]),
    row(3, (5, 6), "5G",        [27, 20, 31, 0], [30.7, 22.7, 35.2, 0.0]),
    row(3, (5, 6), "MMR",       [37, 10, 20, 0], [55.2, 14.9, 29.9, 0.0]),
    row(3, (5, 6), "Chloride",  [26,  8, 21, 2], [45.6, 14.0, 36.8, 3.5]),
    row(3, (5, 6), "Superfood", [32, 25, 14, 3], [42.1, 35.5, 18.4, 3.9]),
];

/// All eighteen published table rows plus both rate figures.
pub fn builtin_paper_dataset() -> PaperDataset {
    let rows = ROWS
        .iter()
        .map(|&(table, pair, topic, c, p)| PaperRow {
            table,
            pair,
            topic: topic.to_string(),
            counts: OutcomeCounts::from_array(c),
            published_pct: p,
        })
        .collect();
    let opponents = vec![2, 4, 6];
    let figure_captions = vec![
        FigureRates {
            figure: 1,
            subject: 1,
            opponents: opponents.clone(),
            success_pct: vec![47.5, 33.2, 40.4],
            failure_pct: vec![22.3, 24.4, 23.9],
            draw_pct: Some(vec![30.1, 42.4, 35.8]),
        },
        FigureRates {
            figure: 2,
            subject: 3,
            opponents: opponents.clone(),
            success_pct: vec![49.5, 38.6, 36.3],
            failure_pct: vec![21.0, 23.7, 24.5],
            draw_pct: Some(vec![29.5, 37.7, 39.2]),
        },
    ];
    let text_rates = vec![
        FigureRates {
            figure: 1,
            subject: 1,
            opponents: opponents.clone(),
            success_pct: vec![47.5, 42.2, 42.4],
            failure_pct: vec![30.1, 35.4, 29.9],
            draw_pct: None,
        },
        FigureRates {
            figure: 2,
            subject: 3,
            opponents,
            success_pct: vec![45.6, 38.4, 36.2],
            failure_pct: vec![32.1, 27.7, 31.6],
            draw_pct: None,
        },
    ];
    PaperDataset {
        rows,
        figure_captions,
        text_rates,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    /// Outcome name, or `published_sum` for the row-sum check.
    pub field: String,
    pub published: f64,
    pub recomputed: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowValidation {
    pub table: u8,
    pub pair: (u32, u32),
    pub topic: String,
    pub count_sum: u64,
    pub recomputed_pct: [f64; 4],
    pub published_pct: [f64; 4],
    pub published_sum: f64,
    pub discrepancies: Vec<Discrepancy>,
}

impl RowValidation {
    pub fn is_flagged(&self) -> bool {
        !self.discrepancies.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableValidationReport {
    pub tolerance_pp: f64,
    pub rows: Vec<RowValidation>,
    /// Informational findings that are not row discrepancies.
    pub notes: Vec<String>,
}

impl TableValidationReport {
    pub fn flagged(&self) -> impl Iterator<Item = &RowValidation> {
        self.rows.iter().filter(|r| r.is_flagged())
    }
}

/// Recomputes each row's percentages from its counts and flags cells whose
/// published value is off by more than `tolerance_pp`, and rows whose
/// published percentages do not sum to 100 within `4 · tolerance_pp`.
pub fn validate_published_table(rows: &[PaperRow], tolerance_pp: f64) -> TableValidationReport {
    let rows = rows
        .iter()
        .map(|row| {
            let total = row.counts.total();
            let recomputed_pct = if total == 0 {
                [0.0; 4]
            } else {
                row.counts.as_array().map(|c| 100.0 * c as f64 / total as f64)
            };
            let mut discrepancies = Vec::new();
            for outcome in InteractionOutcome::ALL {
                let i = outcome.index();
                let delta = row.published_pct[i] - recomputed_pct[i];
                if delta.abs() > tolerance_pp {
                    discrepancies.push(Discrepancy {
                        field: outcome.as_str().to_string(),
                        published: row.published_pct[i],
                        recomputed: recomputed_pct[i],
                        delta,
                    });
                }
            }
            let published_sum: f64 = row.published_pct.iter().sum();
            if (published_sum - 100.0).abs() > 4.0 * tolerance_pp {
                discrepancies.push(Discrepancy {
                    field: "published_sum".into(),
                    published: published_sum,
                    recomputed: 100.0,
                    delta: published_sum - 100.0,
                });
            }
            RowValidation {
                table: row.table,
                pair: row.pair,
                topic: row.topic.clone(),
                count_sum: total,
                recomputed_pct,
                published_pct: row.published_pct,
                published_sum,
                discrepancies,
            }
        })
        .collect();
    TableValidationReport {
        tolerance_pp,
        rows,
        notes: Vec::new(),
    }
}

/// Validates the built-in rows and attaches the caption/text rate conflicts
/// as notes.
pub fn validate_paper_dataset(dataset: &PaperDataset, tolerance_pp: f64) -> TableValidationReport {
    let mut report = validate_published_table(&dataset.rows, tolerance_pp);
    report.notes = dataset.rate_conflicts();
    report
}
