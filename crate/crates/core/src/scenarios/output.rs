//! Result files of a scenario run.
//!
//! | file | content |
//! |------|---------|
//! | `report.json` | the full [`ScenarioReport`] |
//! | `metrics.csv` | long form `scenario,variant,fold,task,metric,value` |
//! | `plan.csv` | routing per candidate cell (simulation only) |
//! | `grid.csv` | mean R² per budget and text count, `--` when infeasible |
//! | `plotdata/*.csv` | per-figure long-form tables |

use super::acquisition::AcquisitionPlan;
use super::report::{MetricSummary, ScenarioReport};
use crate::metrics::MetricReport;
use std::fs;
use std::io::Write;
use std::path::Path;

type CsvResult = Result<(), csv::Error>;

fn num(v: f64) -> String {
    v.to_string()
}

struct MetricsWriter<'a, W: Write> {
    w: csv::Writer<W>,
    scenario: &'a str,
}

impl<W: Write> MetricsWriter<'_, W> {
    fn row(
        &mut self,
        variant: &str,
        fold: &str,
        task: &str,
        metric: &str,
        value: &str,
    ) -> CsvResult {
        self.w
            .write_record([self.scenario, variant, fold, task, metric, value])
    }

    fn fold(&mut self, variant: &str, fold: &str, r: &MetricReport) -> CsvResult {
        for (metric, v) in [
            ("aer", r.aer),
            ("aal", r.aal),
            ("mlral", r.mlral),
            ("mb", r.mb),
        ] {
            self.row(variant, fold, "", metric, &num(v))?;
        }
        for (metric, v) in [
            ("n_cells", r.n_cells),
            ("n_valuable", r.n_valuable),
            ("n_invaluable", r.n_invaluable),
        ] {
            self.row(variant, fold, "", metric, &v.to_string())?;
        }
        self.per_task(
            variant,
            fold,
            &r.lal_per_task,
            &r.macro_f1_per_task,
            &r.r2_per_task,
        )
    }

    fn per_task(
        &mut self,
        variant: &str,
        fold: &str,
        lal: &indexmap::IndexMap<String, f64>,
        f1: &indexmap::IndexMap<String, f64>,
        r2: &indexmap::IndexMap<String, f64>,
    ) -> CsvResult {
        for (metric, map) in [("lal", lal), ("macro_f1", f1), ("r2", r2)] {
            for (task, v) in map {
                self.row(variant, fold, task, metric, &num(*v))?;
            }
        }
        Ok(())
    }

    fn summary(&mut self, variant: &str, fold: &str, s: &MetricSummary) -> CsvResult {
        for (metric, v) in [
            ("aer", s.aer),
            ("aal", s.aal),
            ("mlral", s.mlral),
            ("mb", s.mb),
        ] {
            self.row(variant, fold, "", metric, &num(v))?;
        }
        self.per_task(
            variant,
            fold,
            &s.lal_per_task,
            &s.macro_f1_per_task,
            &s.r2_per_task,
        )
    }
}

/// Writes `metrics.csv` content for a report.
pub fn write_metrics_csv<W: Write>(report: &ScenarioReport, out: W) -> CsvResult {
    let mut m = MetricsWriter {
        w: csv::Writer::from_writer(out),
        scenario: report.scenario.as_str(),
    };
    m.w.write_record(["scenario", "variant", "fold", "task", "metric", "value"])?;
    for v in &report.variants {
        for (i, f) in v.folds.iter().enumerate() {
            m.fold(&v.name, &i.to_string(), f)?;
        }
        m.summary(&v.name, "mean", &v.mean)?;
        m.summary(&v.name, "std", &v.std)?;
    }
    for (metric, per_task) in &report.differences {
        for (task, v) in per_task {
            m.row("difference", "mean", task, metric, &num(*v))?;
        }
    }
    if let Some(grid) = &report.grid {
        for c in &grid.cells {
            let variant = format!("M={}/N={}", c.texts, c.annotations);
            if !c.feasible {
                m.row(&variant, "mean", "", "r2", "--")?;
                continue;
            }
            for (i, r) in c.r2_per_fold.iter().enumerate() {
                m.row(
                    &variant,
                    &i.to_string(),
                    "",
                    "r2",
                    &r.map(num).unwrap_or_default(),
                )?;
            }
            m.row(
                &variant,
                "mean",
                "",
                "r2",
                &c.r2_mean.map(num).unwrap_or_default(),
            )?;
            m.row(
                &variant,
                "std",
                "",
                "r2",
                &c.r2_std.map(num).unwrap_or_default(),
            )?;
        }
    }
    if let Some(sim) = &report.simulation {
        m.fold("simulation", "all", &sim.report)?;
        let c = &sim.cost;
        for (metric, v) in [
            ("price_per_label", c.price_per_label),
            ("annotators_per_text", c.annotators_per_text),
            ("full_cost", c.full_cost),
            ("plan_cost", c.plan_cost),
            ("savings", c.savings),
            ("savings_fraction", c.savings_fraction),
        ] {
            m.row("simulation", "all", "", metric, &num(v))?;
        }
        m.row(
            "simulation",
            "all",
            "",
            "n_human_cells",
            &sim.plan.n_human_cells.to_string(),
        )?;
        m.row(
            "simulation",
            "all",
            "",
            "n_auto_cells",
            &sim.plan.n_auto_cells.to_string(),
        )?;
    }
    m.w.flush()?;
    Ok(())
}

/// `text_id,task,route,score` per candidate cell.
pub fn write_plan_csv<W: Write>(plan: &AcquisitionPlan, out: W) -> CsvResult {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["text_id", "task", "route", "score"])?;
    for (d, text) in plan.text_ids.iter().enumerate() {
        for (l, task) in plan.task_ids.iter().enumerate() {
            let i = d * plan.task_ids.len() + l;
            w.write_record([
                text.as_str(),
                task.as_str(),
                plan.routes[i].as_str(),
                &num(plan.scores[i]),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn write_grid_csv<W: Write>(report: &ScenarioReport, out: W) -> CsvResult {
    let Some(grid) = &report.grid else {
        return Ok(());
    };
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["annotations".to_string()];
    header.extend(grid.texts.iter().map(|m| m.to_string()));
    w.write_record(&header)?;
    for &n in &grid.annotations {
        let mut row = vec![n.to_string()];
        for &m in &grid.texts {
            let cell = grid.cell(n, m).expect("grid covers every pair");
            row.push(match (cell.feasible, cell.r2_mean) {
                (false, _) => "--".to_string(),
                (true, Some(v)) => format!("{v:.6}"),
                (true, None) => String::new(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_plotdata(report: &ScenarioReport, dir: &Path) -> Result<(), std::io::Error> {
    let name = report.scenario.as_str();
    let csv_err = |e: csv::Error| std::io::Error::other(e.to_string());
    if !report.variants.is_empty() {
        let mut w =
            csv::Writer::from_path(dir.join(format!("{name}_summary.csv"))).map_err(csv_err)?;
        w.write_record(["variant", "task", "metric", "mean", "std"])
            .map_err(csv_err)?;
        for v in &report.variants {
            for (metric, mean, std) in [
                ("aer", v.mean.aer, v.std.aer),
                ("aal", v.mean.aal, v.std.aal),
                ("mlral", v.mean.mlral, v.std.mlral),
                ("mb", v.mean.mb, v.std.mb),
            ] {
                w.write_record([v.name.as_str(), "", metric, &num(mean), &num(std)])
                    .map_err(csv_err)?;
            }
            for (metric, means, stds) in [
                ("lal", &v.mean.lal_per_task, &v.std.lal_per_task),
                (
                    "macro_f1",
                    &v.mean.macro_f1_per_task,
                    &v.std.macro_f1_per_task,
                ),
            ] {
                for (task, mean) in means {
                    let std = stds.get(task).copied().unwrap_or(0.0);
                    w.write_record([v.name.as_str(), task, metric, &num(*mean), &num(std)])
                        .map_err(csv_err)?;
                }
            }
        }
        w.flush()?;
    }
    if !report.differences.is_empty() {
        let mut w =
            csv::Writer::from_path(dir.join(format!("{name}_difference.csv"))).map_err(csv_err)?;
        w.write_record(["task", "metric", "difference"])
            .map_err(csv_err)?;
        for (metric, per_task) in &report.differences {
            for (task, v) in per_task {
                w.write_record([task.as_str(), metric, &num(*v)])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
    }
    if let Some(grid) = &report.grid {
        let mut w = csv::Writer::from_path(dir.join(format!("{name}.csv"))).map_err(csv_err)?;
        w.write_record(["texts", "annotations", "feasible", "r2_mean", "r2_std"])
            .map_err(csv_err)?;
        for c in &grid.cells {
            w.write_record([
                c.texts.to_string(),
                c.annotations.to_string(),
                c.feasible.to_string(),
                c.r2_mean.map(num).unwrap_or_default(),
                c.r2_std.map(num).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
    }
    if let Some(sim) = &report.simulation {
        let mut w =
            csv::Writer::from_path(dir.join(format!("{name}_routes.csv"))).map_err(csv_err)?;
        w.write_record(["task", "human_cells", "auto_zero_cells"])
            .map_err(csv_err)?;
        let k = sim.plan.task_ids.len();
        for (l, task) in sim.plan.task_ids.iter().enumerate() {
            let human = (0..sim.plan.text_ids.len())
                .filter(|&d| sim.plan.routes[d * k + l] == super::Route::Human)
                .count();
            let auto = sim.plan.text_ids.len() - human;
            w.write_record([task.as_str(), &human.to_string(), &auto.to_string()])
                .map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(())
}

/// Writes every result file of `report` into `dir` (created if missing).
pub fn write_outputs(report: &ScenarioReport, dir: &Path) -> Result<(), std::io::Error> {
    let csv_err = |e: csv::Error| std::io::Error::other(e.to_string());
    fs::create_dir_all(dir.join("plotdata"))?;
    let json = serde_json::to_vec_pretty(report).map_err(std::io::Error::other)?;
    fs::write(dir.join("report.json"), json)?;
    write_metrics_csv(report, fs::File::create(dir.join("metrics.csv"))?).map_err(csv_err)?;
    if report.grid.is_some() {
        write_grid_csv(report, fs::File::create(dir.join("grid.csv"))?).map_err(csv_err)?;
    }
    if let Some(sim) = &report.simulation {
        write_plan_csv(&sim.plan, fs::File::create(dir.join("plan.csv"))?).map_err(csv_err)?;
    }
    write_plotdata(report, &dir.join("plotdata"))
}
