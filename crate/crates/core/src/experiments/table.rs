use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stats::PairedComparison;
use crate::error::{NgnnError, Result};

pub const DESK_SCALE_CAVEAT: &str = "desk-scale run: trends and exact parameter/metric bookkeeping only; \
absolute scores are not comparable to OGB-scale results";

/// Sweep coordinate: a number (noise level, depth) or a name (position).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Number(f64),
    Text(String),
}

impl std::fmt::Display for SweepValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepValue::Number(x) => write!(f, "{x}"),
            SweepValue::Text(s) => f.write_str(s),
        }
    }
}

/// Aggregate over `runs` seeds for one sweep value and model variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: SweepValue,
    pub mean: f64,
    pub std: f64,
    pub params: usize,
    pub epoch_s: f64,
    pub variant: String,
    pub hidden: usize,
    /// Undirected edges injected (edge-noise sweeps).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges_added: Option<usize>,
    /// Mean metric at the variant's first sweep value minus `mean`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drop: Option<f64>,
    pub seeds: Vec<u64>,
    pub metrics: Vec<f64>,
}

/// Degradation of a variant relative to the baseline between the first
/// sweep value and `sweep_value`, paired by seed. Smaller drops win.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub sweep_value: SweepValue,
    pub variant: String,
    pub baseline: String,
    pub variant_drop: f64,
    pub baseline_drop: f64,
    /// `variant_drop - baseline_drop`; negative means the variant degrades less.
    pub gap: f64,
    #[serde(flatten)]
    pub test: PairedComparison,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub command: String,
    pub metric: String,
    pub caveat: String,
    pub dataset: String,
    pub runs: usize,
    pub base_seed: u64,
    pub rows: Vec<ResultRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gaps: Vec<GapRow>,
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

fn join(v: &[impl ToString]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(";")
}

impl ResultTable {
    pub fn row(&self, variant: &str, sweep_value: &SweepValue) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.variant == variant && &r.sweep_value == sweep_value)
    }

    /// Rows as CSV. Numbers use the shortest representation that parses
    /// back to the same `f64`, matching the JSON output.
    pub fn rows_csv(&self) -> String {
        let mut out = String::from("sweep_value,mean,std,params,epoch_s,variant,hidden,edges_added,drop,seeds,metrics\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.sweep_value,
                r.mean,
                r.std,
                r.params,
                r.epoch_s,
                r.variant,
                r.hidden,
                opt(&r.edges_added),
                opt(&r.drop),
                join(&r.seeds),
                join(&r.metrics),
            );
        }
        out
    }

    pub fn gaps_csv(&self) -> String {
        let mut out =
            String::from("sweep_value,variant,baseline,variant_drop,baseline_drop,gap,wins,losses,ties,p_value\n");
        for g in &self.gaps {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                g.sweep_value,
                g.variant,
                g.baseline,
                g.variant_drop,
                g.baseline_drop,
                g.gap,
                g.test.wins,
                g.test.losses,
                g.test.ties,
                g.test.p_value,
            );
        }
        out
    }

    /// Writes `<stem>.json`, `<stem>.csv` and, when gaps exist,
    /// `<stem>_gaps.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| NgnnError::io(dir, e))?;
        let write = |name: String, body: String| {
            let p = dir.join(name);
            fs::write(&p, body).map_err(|e| NgnnError::io(&p, e))
        };
        write(format!("{stem}.json"), serde_json::to_string_pretty(self)?)?;
        write(format!("{stem}.csv"), self.rows_csv())?;
        if !self.gaps.is_empty() {
            write(format!("{stem}_gaps.csv"), self.gaps_csv())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ResultTable {
        ResultTable {
            command: "noise-sweep".into(),
            metric: "accuracy".into(),
            caveat: DESK_SCALE_CAVEAT.into(),
            dataset: "d".into(),
            runs: 2,
            base_seed: 0,
            rows: vec![ResultRow {
                sweep_value: SweepValue::Number(0.1),
                mean: 0.1 + 0.2,
                std: 1.0 / 3.0,
                params: 42,
                epoch_s: 0.004,
                variant: "baseline".into(),
                hidden: 8,
                edges_added: None,
                drop: Some(0.0),
                seeds: vec![0, 1],
                metrics: vec![0.25, 0.35000000000000003],
            }],
            gaps: Vec::new(),
        }
    }

    #[test]
    fn csv_values_parse_back_to_json_values() {
        let t = table();
        let csv = t.rows_csv();
        let line = csv.lines().nth(1).unwrap();
        let cells: Vec<&str> = line.split(',').collect();
        assert_eq!(cells[1].parse::<f64>().unwrap(), t.rows[0].mean);
        assert_eq!(cells[2].parse::<f64>().unwrap(), t.rows[0].std);
        let metrics: Vec<f64> = cells[10].split(';').map(|s| s.parse().unwrap()).collect();
        assert_eq!(metrics, t.rows[0].metrics);
        let json: ResultTable = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(json, t);
    }

    #[test]
    fn text_sweep_values_render_plainly() {
        assert_eq!(SweepValue::Text("hidden".into()).to_string(), "hidden");
        assert_eq!(SweepValue::Number(2.0).to_string(), "2");
    }
}
