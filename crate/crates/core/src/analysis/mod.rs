//! Outcome tallies, rate summaries, dominance relations, published-table
//! checks and model calibration.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::{adjudicate, InteractionOutcome, Transcript};

pub mod dataset;
pub mod dominance;
pub mod fit;

pub use dataset::{
    builtin_paper_dataset, validate_paper_dataset, validate_published_table, Discrepancy,
    FigureRates, PaperDataset, PaperRow, RowValidation, TableValidationReport,
    DEFAULT_TOLERANCE_PP,
};
pub use dominance::{dominance_matrix, nontransitive_triads, DominanceEntry, DominanceMatrix, Relation};
pub use fit::{
    cell_log_likelihood, cell_mle, fit_trait_parameters, goodness_of_fit, CellFit, FitConfig,
    FitResult, GoodnessOfFit,
};

/// Counts of the four outcomes, in canonical column order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub a_convinces_b: u64,
    pub b_convinces_a: u64,
    pub mutual_resistance: u64,
    pub bilateral_influence: u64,
}

impl OutcomeCounts {
    pub const fn new(a_convinces_b: u64, b_convinces_a: u64, mutual_resistance: u64, bilateral_influence: u64) -> Self {
        OutcomeCounts {
            a_convinces_b,
            b_convinces_a,
            mutual_resistance,
            bilateral_influence,
        }
    }

    pub fn from_array(c: [u64; 4]) -> Self {
        OutcomeCounts::new(c[0], c[1], c[2], c[3])
    }

    pub fn as_array(&self) -> [u64; 4] {
        [
            self.a_convinces_b,
            self.b_convinces_a,
            self.mutual_resistance,
            self.bilateral_influence,
        ]
    }

    pub fn get(&self, outcome: InteractionOutcome) -> u64 {
        self.as_array()[outcome.index()]
    }

    pub fn add(&mut self, outcome: InteractionOutcome, n: u64) {
        match outcome {
            InteractionOutcome::AConvincesB => self.a_convinces_b += n,
            InteractionOutcome::BConvincesA => self.b_convinces_a += n,
            InteractionOutcome::MutualResistance => self.mutual_resistance += n,
            InteractionOutcome::BilateralInfluence => self.bilateral_influence += n,
        }
    }

    pub fn merge(&mut self, other: &OutcomeCounts) {
        for o in InteractionOutcome::ALL {
            self.add(o, other.get(o));
        }
    }

    pub fn total(&self) -> u64 {
        self.as_array().iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeTally {
    pub pair: (u32, u32),
    pub topic: String,
    pub counts: OutcomeCounts,
    pub total: u64,
}

impl OutcomeTally {
    pub fn new(pair: (u32, u32), topic: impl Into<String>, counts: OutcomeCounts) -> Self {
        OutcomeTally {
            pair,
            topic: topic.into(),
            total: counts.total(),
            counts,
        }
    }
}

/// One adjudicated interaction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub pair: (u32, u32),
    pub topic: String,
    pub outcome: InteractionOutcome,
}

/// Groups records into one tally per (pair, topic), sorted by pair then
/// topic name. The result does not depend on record order.
pub fn tally_outcomes<I>(records: I) -> Vec<OutcomeTally>
where
    I: IntoIterator<Item = OutcomeRecord>,
{
    let mut cells: BTreeMap<((u32, u32), String), OutcomeCounts> = BTreeMap::new();
    for r in records {
        cells.entry((r.pair, r.topic)).or_default().add(r.outcome, 1);
    }
    cells
        .into_iter()
        .map(|((pair, topic), counts)| OutcomeTally::new(pair, topic, counts))
        .collect()
}

/// Adjudicates every transcript and tallies the outcomes.
pub fn tally_transcripts(transcripts: &[Transcript]) -> Result<Vec<OutcomeTally>> {
    let records = transcripts
        .iter()
        .map(|t| {
            Ok(OutcomeRecord {
                pair: t.pair,
                topic: t.topic.clone(),
                outcome: adjudicate(t)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(tally_outcomes(records))
}

/// Counts divided by total, in canonical outcome order.
pub fn proportions(tally: &OutcomeTally) -> Result<[f64; 4]> {
    let total = tally.counts.total();
    if total == 0 {
        return Err(Error::UndefinedProportion);
    }
    Ok(tally.counts.as_array().map(|c| c as f64 / total as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub subject: u32,
    pub opponent: u32,
    pub success_rate: f64,
    pub failure_rate: f64,
    pub draw_rate: f64,
    pub bilateral_rate: f64,
    pub total: u64,
}

/// Pools every topic of the (subject, opponent) pair. Success means the
/// subject convinced the opponent; a draw is mutual resistance.
pub fn agent_rate_summary(tallies: &[OutcomeTally], subject: u32, opponent: u32) -> Result<RateSummary> {
    let pair = (subject.min(opponent), subject.max(opponent));
    let mut pooled = OutcomeCounts::default();
    let mut found = false;
    for t in tallies.iter().filter(|t| t.pair == pair) {
        pooled.merge(&t.counts);
        found = true;
    }
    let total = pooled.total();
    if !found || total == 0 || subject == opponent {
        return Err(Error::MissingData(format!(
            "no outcomes recorded between agents {subject} and {opponent}"
        )));
    }
    let (wins, losses) = if subject == pair.0 {
        (pooled.a_convinces_b, pooled.b_convinces_a)
    } else {
        (pooled.b_convinces_a, pooled.a_convinces_b)
    };
    let n = total as f64;
    Ok(RateSummary {
        subject,
        opponent,
        success_rate: wins as f64 / n,
        failure_rate: losses as f64 / n,
        draw_rate: pooled.mutual_resistance as f64 / n,
        bilateral_rate: pooled.bilateral_influence as f64 / n,
        total,
    })
}

/// Rate summaries for every ordered pair with data, sorted by (subject,
/// opponent).
pub fn all_rate_summaries(tallies: &[OutcomeTally]) -> Vec<RateSummary> {
    let mut pairs: Vec<(u32, u32)> = tallies.iter().map(|t| t.pair).collect();
    pairs.sort_unstable();
    pairs.dedup();
    let mut out: Vec<RateSummary> = pairs
        .into_iter()
        .flat_map(|(a, b)| [(a, b), (b, a)])
        .filter_map(|(s, o)| agent_rate_summary(tallies, s, o).ok())
        .collect();
    out.sort_by_key(|r| (r.subject, r.opponent));
    out
}

pub const TALLY_CSV_HEADER: [&str; 8] = [
    "pair_a",
    "pair_b",
    "topic",
    "a_convinces_b",
    "b_convinces_a",
    "mutual_resistance",
    "bilateral_influence",
    "total",
];

pub fn write_tallies_csv<W: Write>(writer: W, tallies: &[OutcomeTally]) -> Result<()> {
    let to_err = |e: csv::Error| Error::InvalidArgument(format!("CSV write failed: {e}"));
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TALLY_CSV_HEADER).map_err(to_err)?;
    for t in tallies {
        let c = t.counts.as_array();
        w.write_record([
            t.pair.0.to_string(),
            t.pair.1.to_string(),
            t.topic.clone(),
            c[0].to_string(),
            c[1].to_string(),
            c[2].to_string(),
            c[3].to_string(),
            t.counts.total().to_string(),
        ])
        .map_err(to_err)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidArgument(format!("CSV flush failed: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn records(pair: (u32, u32), topic: &str, counts: [u64; 4]) -> Vec<OutcomeRecord> {
        InteractionOutcome::ALL
            .into_iter()
            .zip(counts)
            .flat_map(|(outcome, n)| {
                std::iter::repeat_n(
                    OutcomeRecord {
                        pair,
                        topic: topic.to_string(),
                        outcome,
                    },
                    n as usize,
                )
            })
            .collect()
    }

    #[test]
    fn tally_paper_cell() {
        let tallies = tally_outcomes(records((4, 5), "HIV", [38, 14, 10, 2]));
        assert_eq!(tallies.len(), 1);
        assert_eq!(tallies[0].counts, OutcomeCounts::new(38, 14, 10, 2));
        assert_eq!(tallies[0].total, 64);
        assert!(tally_outcomes(Vec::new()).is_empty());
        let one = tally_outcomes(records((1, 2), "MMR", [0, 0, 1, 0]));
        assert_eq!(one[0].total, 1);
    }

    #[test]
    fn proportions_of_table1_hiv() {
        let t = OutcomeTally::new((4, 5), "HIV", OutcomeCounts::new(38, 14, 10, 2));
        assert_eq!(proportions(&t).unwrap(), [0.59375, 0.21875, 0.15625, 0.03125]);
        let pct: Vec<String> = proportions(&t)
            .unwrap()
            .iter()
            .map(|p| format!("{:.1}", p * 100.0))
            .collect();
        assert_eq!(pct, ["59.4", "21.9", "15.6", "3.1"]);

        let t = OutcomeTally::new((1, 2), "X", OutcomeCounts::new(0, 0, 5, 0));
        assert_eq!(proportions(&t).unwrap()[2], 1.0);
        let t = OutcomeTally::new((1, 2), "X", OutcomeCounts::default());
        assert!(matches!(proportions(&t), Err(Error::UndefinedProportion)));
    }

    #[test]
    fn rate_summary_fixture() {
        // 19/8/12/1 pooled over two topics
        let tallies = vec![
            OutcomeTally::new((1, 2), "HIV", OutcomeCounts::new(10, 5, 4, 1)),
            OutcomeTally::new((1, 2), "MMR", OutcomeCounts::new(9, 3, 8, 0)),
        ];
        let r = agent_rate_summary(&tallies, 1, 2).unwrap();
        assert_abs_diff_eq!(r.success_rate, 0.475, epsilon = 1e-12);
        assert_abs_diff_eq!(r.failure_rate, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(r.draw_rate, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(r.bilateral_rate, 0.025, epsilon = 1e-12);

        let mirrored = agent_rate_summary(&tallies, 2, 1).unwrap();
        assert_abs_diff_eq!(mirrored.success_rate, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(mirrored.failure_rate, 0.475, epsilon = 1e-12);

        let draws = vec![OutcomeTally::new((3, 4), "X", OutcomeCounts::new(0, 0, 7, 0))];
        let r = agent_rate_summary(&draws, 3, 4).unwrap();
        assert_eq!((r.success_rate, r.failure_rate, r.draw_rate), (0.0, 0.0, 1.0));

        assert!(matches!(agent_rate_summary(&draws, 1, 2), Err(Error::MissingData(_))));
    }

    #[test]
    fn csv_export_format() {
        let tallies = vec![OutcomeTally::new((4, 5), "HIV", OutcomeCounts::new(38, 14, 10, 2))];
        let mut buf = Vec::new();
        write_tallies_csv(&mut buf, &tallies).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "pair_a,pair_b,topic,a_convinces_b,b_convinces_a,mutual_resistance,bilateral_influence,total\n\
             4,5,HIV,38,14,10,2,64\n"
        );
    }

    fn arb_records() -> impl Strategy<Value = Vec<OutcomeRecord>> {
        prop::collection::vec(
            ((1u32..4), (0usize..3), (0usize..4)).prop_map(|(a, t, o)| OutcomeRecord {
                pair: (a, a + 1),
                topic: ["HIV", "MMR", "5G"][t].to_string(),
                outcome: InteractionOutcome::ALL[o],
            }),
            0..200,
        )
    }

    proptest! {
        #[test]
        fn proportions_and_rates_partition(recs in arb_records()) {
            let tallies = tally_outcomes(recs.clone());
            let total: u64 = tallies.iter().map(|t| t.total).sum();
            prop_assert_eq!(total as usize, recs.len());
            for t in &tallies {
                prop_assert_eq!(t.total, t.counts.total());
                let p = proportions(t).unwrap();
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }
            for r in all_rate_summaries(&tallies) {
                let s = r.success_rate + r.failure_rate + r.draw_rate + r.bilateral_rate;
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }

        #[test]
        fn tallies_ignore_record_order(recs in arb_records(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = recs.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(tally_outcomes(recs), tally_outcomes(shuffled));
        }
    }
}
