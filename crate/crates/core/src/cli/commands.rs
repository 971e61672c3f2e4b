//! Implementations of the `simulate`, `fit`, `sweep`, `report` and
//! `experiment` subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::formats::{
    fmt_f64, read_dataset, read_graph, write_dataset, write_graph, write_matrix, write_text, Checkpoint,
    CheckpointMeta,
};
use super::CliError;
use crate::eval::{
    assemble_graph, auc, lag_profile, off_diagonal_auc, roc_points, run_sweep, series_seed, GrangerGraph,
};
use crate::model::{build_lagged, ComponentMlp};
use crate::optimizer::{fit_with_progress, FitResult, Progress};
use crate::penalty::PenaltySpec;
use crate::timeseries::{standardize, TimeSeries};

/// How often (in iterations) a fit reports progress on stderr.
const PROGRESS_EVERY: usize = 1000;

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub quiet: bool,
}

impl RunOptions {
    fn say(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn prepare(cfg: &ExperimentConfig, ts: TimeSeries) -> Result<TimeSeries, CliError> {
    if cfg.data.standardize {
        Ok(standardize(&ts)?.0)
    } else {
        Ok(ts)
    }
}

/// Writes `data.csv` and `truth.csv` plus the resolved configuration.
pub fn simulate(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<(), CliError> {
    let (ts, truth) = cfg.generator.generate(cfg.data.length, cfg.seed)?;
    write_dataset(&out.join("data.csv"), &ts)?;
    write_graph(&out.join("truth.csv"), &truth)?;
    write_text(&out.join("config.toml"), &cfg.to_toml())?;
    opts.say(format!(
        "simulated {} series x {} points ({}, seed {}) into {}",
        ts.dim(),
        ts.len(),
        cfg.generator.name(),
        cfg.seed,
        out.display()
    ));
    Ok(())
}

/// Fits every component network at `penalty.lambda`.
///
/// Series that fail are reported together after the successful ones have
/// been written.
pub fn fit(cfg: &ExperimentConfig, data: &Path, out: &Path, opts: RunOptions) -> Result<(), CliError> {
    let ts = prepare(cfg, read_dataset(data)?)?;
    let p = ts.dim();
    let arch = cfg.model.architecture(p);
    let spec = PenaltySpec::new(cfg.penalty.kind, cfg.penalty.lambda)?;

    let results: Vec<crate::Result<FitResult>> = (0..p)
        .into_par_iter()
        .map(|i| {
            let lagged = build_lagged(&ts, arch.lags, i)?;
            let mut report = |pr: &Progress| {
                if pr.iteration % PROGRESS_EVERY == 0 {
                    opts.say(format!(
                        "series {i}: iteration {} objective {} step {:.3e} active inputs {}",
                        pr.iteration, pr.objective, pr.step, pr.active_groups
                    ));
                }
            };
            let sink: Option<&mut dyn FnMut(&Progress)> = if opts.quiet { None } else { Some(&mut report) };
            fit_with_progress(&lagged, &spec, &arch, &cfg.optimizer, series_seed(cfg.seed, i), sink)
        })
        .collect();

    let mut summary = String::from("series,iterations,converged,final_objective,active_inputs\n");
    let mut models: Vec<Option<ComponentMlp>> = Vec::with_capacity(p);
    let mut failures = Vec::new();
    for (i, res) in results.into_iter().enumerate() {
        match res {
            Ok(res) => {
                let active = res.model.granger_weights().iter().filter(|&&w| w > 0.0).count();
                summary.push_str(&format!(
                    "{i},{},{},{},{active}\n",
                    res.iterations_run,
                    res.converged,
                    fmt_f64(res.final_objective())
                ));
                let meta = CheckpointMeta {
                    series: i,
                    penalty: cfg.penalty.kind,
                    lambda: cfg.penalty.lambda,
                    seed: cfg.seed,
                    iterations: res.iterations_run,
                    converged: res.converged,
                    final_objective: res.final_objective(),
                };
                Checkpoint::new(&res.model, meta).write(&out.join("checkpoints").join(format!("series_{i:03}.json")))?;
                write_matrix(&out.join("lag_profiles").join(format!("series_{i:03}.csv")), &lag_profile(&res.model))?;
                opts.say(format!(
                    "series {i}: {} iterations, {}, objective {}, {active} active inputs",
                    res.iterations_run,
                    if res.converged { "converged" } else { "not converged" },
                    res.final_objective()
                ));
                models.push(Some(res.model));
            }
            Err(e) => {
                failures.push(format!("series {i}: {e}"));
                models.push(None);
            }
        }
    }
    write_text(&out.join("fits.csv"), &summary)?;
    if !failures.is_empty() {
        return Err(CliError::Optimization(failures.join("; ")));
    }
    let models: Vec<ComponentMlp> = models.into_iter().flatten().collect();
    write_graph(&out.join("graph.csv"), &assemble_graph(&models)?)?;
    Ok(())
}

/// False and true positive rates of one estimated graph.
fn rates(truth: &GrangerGraph, est: &GrangerGraph, include_diagonal: bool) -> (f64, f64) {
    let p = truth.p();
    let (mut tp, mut fp, mut pos, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..p {
        for j in 0..p {
            if i == j && !include_diagonal {
                continue;
            }
            let predicted = est.get(i, j) > 0.0;
            if truth.get(i, j) > 0.0 {
                pos += 1;
                tp += predicted as usize;
            } else {
                neg += 1;
                fp += predicted as usize;
            }
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (frac(fp, neg), frac(tp, pos))
}

pub const AUC_HEADER: &str = "generator,length,seed,penalty,include_diagonal,auc,auc_off_diagonal";

/// Runs the penalty path against a known truth and writes per-λ graphs,
/// the ROC curve and the AUC row.
pub fn sweep(cfg: &ExperimentConfig, data: &Path, truth: &Path, out: &Path, opts: RunOptions) -> Result<(), CliError> {
    let raw = read_dataset(data)?;
    let truth = read_graph(truth)?;
    if truth.p() != raw.dim() {
        return Err(CliError::Data(format!(
            "truth is {0} x {0} but the dataset has {1} series",
            truth.p(),
            raw.dim()
        )));
    }
    let length = raw.len();
    let ts = prepare(cfg, raw)?;
    let sweep_cfg = cfg.sweep_config(ts.dim());
    let lambdas = sweep_cfg.grid.resolve(&ts, sweep_cfg.arch.lags, sweep_cfg.arch.output_bias)?;
    opts.say(format!("sweeping {} penalty values over {} series", lambdas.len(), ts.dim()));
    let result = run_sweep(&ts, &sweep_cfg, &lambdas, cfg.seed)?;

    let include_diagonal = cfg.evaluation.include_diagonal;
    let mut path = String::from("index,lambda,edges,edges_off_diagonal,selected_lags,fpr,tpr,converged,monotone\n");
    let selected = result.selected_lag_counts();
    for (l, graph) in result.graphs.iter().enumerate() {
        write_graph(&out.join("graphs").join(format!("graph_{l:03}.csv")), graph)?;
        let (fpr, tpr) = rates(&truth, graph, include_diagonal);
        let converged = result.fits[l].iter().all(|f| f.converged);
        let monotone = result.fits[l].iter().all(|f| f.monotone);
        path.push_str(&format!(
            "{l},{},{},{},{},{},{},{converged},{monotone}\n",
            fmt_f64(result.lambdas[l]),
            graph.edge_count(true),
            graph.edge_count(false),
            selected[l],
            fmt_f64(fpr),
            fmt_f64(tpr)
        ));
        opts.say(format!(
            "lambda {:.4e}: {} edges, fpr {fpr:.3}, tpr {tpr:.3}",
            result.lambdas[l],
            graph.edge_count(include_diagonal)
        ));
    }
    write_text(&out.join("lambda_path.csv"), &path)?;

    let points = roc_points(&truth, &result.graphs, include_diagonal)?;
    let mut roc = String::from("fpr,tpr\n");
    for (f, t) in &points {
        roc.push_str(&format!("{},{}\n", fmt_f64(*f), fmt_f64(*t)));
    }
    write_text(&out.join("roc.csv"), &roc)?;

    let auc_all = auc(&points);
    let auc_off = off_diagonal_auc(&truth, &result.graphs)?;
    let row = format!(
        "{AUC_HEADER}\n{},{length},{},{},{include_diagonal},{},{}\n",
        cfg.generator.name(),
        cfg.seed,
        cfg.penalty.kind.name(),
        fmt_f64(auc_all),
        auc_off.map(fmt_f64).unwrap_or_default()
    );
    write_text(&out.join("auc.csv"), &row)?;
    match auc_off {
        Some(off) => opts.say(format!("AUC {auc_all:.4} (off-diagonal {off:.4})")),
        None => opts.say(format!("AUC {auc_all:.4} (no off-diagonal edges)")),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
struct AucRecord {
    generator: String,
    length: usize,
    seed: u64,
    penalty: String,
    include_diagonal: bool,
    auc: f64,
    auc_off_diagonal: Option<f64>,
}

fn parse_auc_file(path: &Path) -> Result<Vec<AucRecord>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(AUC_HEADER) {
        return Err(format!("{}: unexpected header", path.display()));
    }
    let mut out = Vec::new();
    for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |what: &str| format!("{}: row {}: bad {what}", path.display(), n + 1);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(bad("field count"));
        }
        let auc: f64 = f[5].parse().map_err(|_| bad("auc"))?;
        let auc_off_diagonal: Option<f64> = if f[6].is_empty() {
            None
        } else {
            Some(f[6].parse().map_err(|_| bad("auc_off_diagonal"))?)
        };
        if !(0.0..=1.0).contains(&auc) || auc_off_diagonal.is_some_and(|a| !(0.0..=1.0).contains(&a)) {
            return Err(bad("auc range"));
        }
        out.push(AucRecord {
            generator: f[0].to_string(),
            length: f[1].parse().map_err(|_| bad("length"))?,
            seed: f[2].parse().map_err(|_| bad("seed"))?,
            penalty: f[3].to_string(),
            include_diagonal: f[4].parse().map_err(|_| bad("include_diagonal"))?,
            auc,
            auc_off_diagonal,
        });
    }
    if out.is_empty() {
        return Err(format!("{}: no rows", path.display()));
    }
    Ok(out)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Collects `auc.csv` from each sweep directory into `auc_report.csv` and
/// writes per-setting means to `auc_summary.csv`.
///
/// Unreadable inputs are listed in the error; the report is still written
/// from the readable ones.
pub fn report(dirs: &[PathBuf], out: &Path, opts: RunOptions) -> Result<(), CliError> {
    if dirs.is_empty() {
        return Err(CliError::Data("report needs at least one sweep directory".into()));
    }
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for dir in dirs {
        match parse_auc_file(&dir.join("auc.csv")) {
            Ok(rows) => records.extend(rows),
            Err(e) => failures.push(e),
        }
    }
    if records.is_empty() {
        return Err(CliError::Data(format!("no usable AUC rows: {}", failures.join("; "))));
    }

    let mut table = format!("{AUC_HEADER}\n");
    for r in &records {
        table.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.generator,
            r.length,
            r.seed,
            r.penalty,
            r.include_diagonal,
            fmt_f64(r.auc),
            r.auc_off_diagonal.map(fmt_f64).unwrap_or_default()
        ));
    }
    write_text(&out.join("auc_report.csv"), &table)?;

    let mut groups: BTreeMap<(String, usize, String, bool), Vec<&AucRecord>> = BTreeMap::new();
    for r in &records {
        groups
            .entry((r.generator.clone(), r.length, r.penalty.clone(), r.include_diagonal))
            .or_default()
            .push(r);
    }
    let mut summary =
        String::from("generator,length,penalty,include_diagonal,runs,mean_auc,std_auc,mean_auc_off_diagonal\n");
    for ((generator, length, penalty, diag), rows) in &groups {
        let aucs: Vec<f64> = rows.iter().map(|r| r.auc).collect();
        let offs: Vec<f64> = rows.iter().filter_map(|r| r.auc_off_diagonal).collect();
        let (mean, std) = mean_std(&aucs);
        let mean_off = if offs.is_empty() {
            String::new()
        } else {
            fmt_f64(mean_std(&offs).0)
        };
        summary.push_str(&format!(
            "{generator},{length},{penalty},{diag},{},{},{},{mean_off}\n",
            rows.len(),
            fmt_f64(mean),
            fmt_f64(std)
        ));
        opts.say(format!(
            "{generator} T={length} {penalty}: mean AUC {mean:.4} +/- {std:.4} over {} runs",
            rows.len()
        ));
    }
    write_text(&out.join("auc_summary.csv"), &summary)?;

    if !failures.is_empty() {
        return Err(CliError::Data(format!("skipped inputs: {}", failures.join("; "))));
    }
    Ok(())
}

/// Simulates and sweeps one dataset per evaluation seed, then reports.
pub fn experiment(cfg: &ExperimentConfig, out: &Path, opts: RunOptions) -> Result<(), CliError> {
    let mut dirs = Vec::with_capacity(cfg.evaluation.seeds.len());
    for &seed in &cfg.evaluation.seeds {
        let run_cfg = ExperimentConfig {
            seed,
            ..cfg.clone()
        };
        let dir = out.join(format!("seed_{seed}"));
        simulate(&run_cfg, &dir, opts)?;
        sweep(&run_cfg, &dir.join("data.csv"), &dir.join("truth.csv"), &dir, opts)?;
        dirs.push(dir);
    }
    report(&dirs, out, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Matrix;

    #[test]
    fn rates_count_edges() {
        let truth = GrangerGraph::from_matrix(Matrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap()).unwrap();
        let est = GrangerGraph::from_matrix(Matrix::from_rows(&[vec![0.5, 0.0], vec![0.2, 0.0]]).unwrap()).unwrap();
        assert_eq!(rates(&truth, &est, true), (1.0, 1.0 / 3.0));
        assert_eq!(rates(&truth, &est, false), (1.0, 0.0));
    }

    #[test]
    fn auc_file_parsing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("auc.csv");
        std::fs::write(&path, format!("{AUC_HEADER}\nvar,1000,3,group,true,9.5e-1,9.0e-1\n")).unwrap();
        let rows = parse_auc_file(&path).unwrap();
        assert_eq!(rows[0].seed, 3);
        assert_eq!(rows[0].auc, 0.95);

        std::fs::write(&path, format!("{AUC_HEADER}\nvar,1000,4,group,true,9.5e-1,\n")).unwrap();
        assert_eq!(parse_auc_file(&path).unwrap()[0].auc_off_diagonal, None);

        std::fs::write(&path, format!("{AUC_HEADER}\nvar,1000,3,group,true,1.5,0.9\n")).unwrap();
        assert!(parse_auc_file(&path).is_err());
        std::fs::write(&path, "nope\n").unwrap();
        assert!(parse_auc_file(&path).is_err());
    }

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[1.0, 3.0]), (2.0, 2f64.sqrt()));
        assert_eq!(mean_std(&[4.0]), (4.0, 0.0));
    }
}
