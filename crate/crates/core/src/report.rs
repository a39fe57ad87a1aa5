//! Markdown outcome tables and SVG grouped-bar charts.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::analysis::{FigureRates, OutcomeTally, RateSummary};
use crate::error::{Error, Result};

/// Percentage with one decimal, halves rounded away from zero.
pub fn format_pct(pct: f64) -> String {
    format!("{:.1}", (pct * 10.0).round() / 10.0)
}

/// `"<count>(<pct>%)"`.
pub fn format_cell(count: u64, total: u64) -> String {
    let pct = if total == 0 { 0.0 } else { 100.0 * count as f64 / total as f64 };
    format!("{count}({}%)", format_pct(pct))
}

fn topic_rank<'a>(order: &'a [String]) -> impl Fn(&str) -> (usize, String) + 'a {
    move |topic: &str| {
        let pos = order.iter().position(|t| t == topic).unwrap_or(order.len());
        (pos, topic.to_string())
    }
}

/// One table per agent pair: a row per topic with the four outcome cells,
/// the larger of the two conversion counts in bold.
pub fn render_markdown_tables(tallies: &[OutcomeTally], topic_order: &[String]) -> String {
    let mut by_pair: BTreeMap<(u32, u32), Vec<&OutcomeTally>> = BTreeMap::new();
    for t in tallies {
        by_pair.entry(t.pair).or_default().push(t);
    }
    let rank = topic_rank(topic_order);
    let mut out = String::new();
    for ((a, b), mut rows) in by_pair {
        rows.sort_by_key(|t| rank(&t.topic));
        let _ = writeln!(out, "### Agent {a} vs Agent {b}\n");
        let _ = writeln!(
            out,
            "| Topic | Agent {a} convinces Agent {b} | Agent {b} convinces Agent {a} | mutual resistance | bilateral influence |"
        );
        out.push_str("|---|---|---|---|---|\n");
        for t in rows {
            let c = t.counts.as_array();
            let total = t.counts.total();
            let mut cells: Vec<String> = c.iter().map(|&n| format_cell(n, total)).collect();
            if c[0] > c[1] {
                cells[0] = format!("**{}**", cells[0]);
            } else if c[1] > c[0] {
                cells[1] = format!("**{}**", cells[1]);
            }
            let _ = writeln!(out, "| {} | {} |", t.topic, cells.join(" | "));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChartSpec {
    pub subject: u32,
    pub opponents: Vec<u32>,
    /// Rates in [0, 1], one per opponent.
    pub success: Vec<f64>,
    pub failure: Vec<f64>,
    pub draw: Vec<f64>,
    pub title: String,
}

impl ChartSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.opponents.len();
        if n == 0 {
            return Err(Error::InvalidArgument("chart needs at least one opponent".into()));
        }
        for (name, s) in [("success", &self.success), ("failure", &self.failure), ("draw", &self.draw)] {
            if s.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "{name} series has {} values for {n} opponents",
                    s.len()
                )));
            }
            if let Some(v) = s.iter().find(|v| !(0.0..=1.0).contains(*v)) {
                return Err(Error::InvalidArgument(format!("{name} value {v} outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Chart of one subject against the given opponents from rate summaries.
    pub fn from_summaries(summaries: &[RateSummary], subject: u32, opponents: &[u32]) -> Result<Self> {
        let mut spec = ChartSpec {
            subject,
            opponents: opponents.to_vec(),
            success: Vec::new(),
            failure: Vec::new(),
            draw: Vec::new(),
            title: format!("Agent {subject}: outcome rates by opponent"),
        };
        for &opp in opponents {
            let r = summaries
                .iter()
                .find(|r| r.subject == subject && r.opponent == opp)
                .ok_or_else(|| Error::MissingData(format!("no rates for agent {subject} vs agent {opp}")))?;
            spec.success.push(r.success_rate);
            spec.failure.push(r.failure_rate);
            spec.draw.push(r.draw_rate);
        }
        Ok(spec)
    }

    pub fn from_figure(fig: &FigureRates) -> Result<Self> {
        let draw = fig
            .draw_pct
            .as_ref()
            .ok_or_else(|| Error::MissingData(format!("figure {} has no draw rates", fig.figure)))?;
        let scale = |v: &[f64]| v.iter().map(|p| p / 100.0).collect::<Vec<_>>();
        Ok(ChartSpec {
            subject: fig.subject,
            opponents: fig.opponents.clone(),
            success: scale(&fig.success_pct),
            failure: scale(&fig.failure_pct),
            draw: scale(draw),
            title: format!("Agent {}: outcome rates by opponent", fig.subject),
        })
    }
}

const PALETTE: [(&str, &str); 3] = [("Success", "#4c72b0"), ("Failure", "#dd8452"), ("Draw", "#55a868")];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Self-contained grouped-bar SVG: three bars per opponent, y axis 0–100 %.
pub fn render_svg_chart(spec: &ChartSpec) -> Result<String> {
    spec.validate()?;
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let base_y = TOP + plot_h;
    let groups = spec.opponents.len() as f64;
    let group_w = plot_w / groups;
    let bar_w = group_w * 0.8 / 3.0;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(&spec.title)
    );

    for tick in 0..=5 {
        let pct = tick * 20;
        let y = base_y - plot_h * f64::from(pct) / 100.0;
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd" stroke-width="1"/>"##,
            LEFT + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">{pct}%</text>"#,
            LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r##"<line x1="{LEFT:.2}" y1="{base_y:.2}" x2="{:.2}" y2="{base_y:.2}" stroke="#333333" stroke-width="1"/>"##,
        LEFT + plot_w
    );

    for (g, opp) in spec.opponents.iter().enumerate() {
        let group_x = LEFT + group_w * g as f64 + group_w * 0.1;
        for (k, series) in [&spec.success, &spec.failure, &spec.draw].into_iter().enumerate() {
            let value = series[g];
            let h = plot_h * value;
            let x = group_x + bar_w * k as f64;
            let y = base_y - h;
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{h:.2}" fill="{}"/>"#,
                PALETTE[k].1
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" font-size="10" text-anchor="middle">{}%</text>"#,
                x + bar_w / 2.0,
                y - 4.0,
                format_pct(value * 100.0)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">Agent {opp}</text>"#,
            LEFT + group_w * (g as f64 + 0.5),
            base_y + 20.0
        );
    }

    for (k, (label, color)) in PALETTE.iter().enumerate() {
        let x = LEFT + 110.0 * k as f64;
        let y = HEIGHT - 18.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"#,
            y - 10.0
        );
        let _ = writeln!(s, r#"<text x="{:.2}" y="{y:.2}" font-size="12">{label}</text>"#, x + 18.0);
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{builtin_paper_dataset, OutcomeCounts};

    #[test]
    fn cell_format() {
        assert_eq!(format_cell(38, 64), "38(59.4%)");
        assert_eq!(format_cell(2, 64), "2(3.1%)");
        assert_eq!(format_cell(0, 74), "0(0.0%)");
        // 1/16 = 6.25 exactly; half rounds up
        assert_eq!(format_cell(1, 16), "1(6.3%)");
        assert_eq!(format_pct(55.223880597), "55.2");
    }

    #[test]
    fn table_bolds_winner() {
        let order: Vec<String> = crate::protocol::default_topics().into_iter().map(|t| t.abbreviation).collect();
        let md = render_markdown_tables(&builtin_paper_dataset().tallies(), &order);
        assert!(md.contains("| HIV | **38(59.4%)** | 14(21.9%) | 10(15.6%) | 2(3.1%) |"));
        assert!(md.contains("| MMR | 13(22.0%) | **30(50.8%)** | 14(23.7%) | 2(3.4%) |"));
        assert!(md.contains("### Agent 5 vs Agent 6"));
        // topic rows follow canonical order
        let hiv = md.find("| HIV |").unwrap();
        let qanon = md.find("| QAnon |").unwrap();
        assert!(hiv < qanon);

        let tie = [OutcomeTally::new((1, 2), "X", OutcomeCounts::new(3, 3, 0, 0))];
        assert!(!render_markdown_tables(&tie, &[]).contains("**"));
    }

    #[test]
    fn chart_labels_and_determinism() {
        let d = builtin_paper_dataset();
        let spec = ChartSpec::from_figure(&d.figure_captions[0]).unwrap();
        let svg = render_svg_chart(&spec).unwrap();
        for label in ["47.5%", "33.2%", "40.4%", "22.3%", "42.4%"] {
            assert!(svg.contains(&format!(">{label}</text>")), "missing {label}");
        }
        assert_eq!(svg, render_svg_chart(&spec).unwrap());
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn zero_series_chart() {
        let spec = ChartSpec {
            subject: 1,
            opponents: vec![2, 4],
            success: vec![0.0; 2],
            failure: vec![0.0; 2],
            draw: vec![0.0; 2],
            title: "empty".into(),
        };
        let svg = render_svg_chart(&spec).unwrap();
        assert!(svg.contains(r#"height="0.00""#));
        assert_eq!(svg.matches("<rect").count(), 1 + 6 + 3);
    }

    #[test]
    fn chart_validation() {
        let spec = ChartSpec {
            subject: 1,
            opponents: vec![2, 4],
            success: vec![0.1],
            failure: vec![0.0; 2],
            draw: vec![0.0; 2],
            title: "bad".into(),
        };
        assert!(render_svg_chart(&spec).is_err());
    }
}
