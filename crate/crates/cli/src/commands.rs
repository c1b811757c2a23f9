use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use augtta::base::train_base_model;
use augtta::forge::write_stream_dump;
use augtta::model::{load_checkpoint, save_checkpoint};
use augtta::scenario::{aggregate, compare_selection, replicate_runs, replication_seed, replication_stream, Arm, ArmResult, RunContext};
use augtta::Model;
use serde::Serialize;

use crate::config::{resolve_run, resolve_train, CommonArgs, Placement, ResolvedRun, RunArgs, TrainConfig, CHECKPOINT_NAME};
use crate::summary::Summary;

pub type CmdResult = Result<(), String>;

fn err(context: impl std::fmt::Display) -> impl FnOnce(augtta::Error) -> String {
    move |e| format!("{context}: {e}")
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CmdResult {
    fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> CmdResult {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| format!("{}: {e}", path.display()))?;
    text.push('\n');
    write(path, text)
}

fn pool(workers: usize) -> Result<rayon::ThreadPool, String> {
    rayon::ThreadPoolBuilder::new().num_threads(workers).build().map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct TrainOutput<'a> {
    #[serde(flatten)]
    report: &'a augtta::base::TrainingReport,
    config: &'a TrainConfig,
}

pub fn train(common: &CommonArgs) -> CmdResult {
    let (cfg, Placement { out, .. }) = resolve_train(common)?;
    create_dir(&out)?;
    let (model, report) = train_base_model(&cfg.train, cfg.seed).map_err(err("training"))?;
    let ckpt = out.join(CHECKPOINT_NAME);
    save_checkpoint(&model, &ckpt).map_err(err(ckpt.display()))?;
    write_json(&out.join("train_report.json"), &TrainOutput { report: &report, config: &cfg })?;
    println!(
        "trained base model: held-out error {:.4}, norm-affine fraction {:.5} -> {}",
        report.heldout_error,
        report.norm_affine_fraction,
        ckpt.display()
    );
    Ok(())
}

fn prepare(args: &RunArgs) -> Result<(ResolvedRun, RunContext, f64), String> {
    let run = resolve_run(args)?;
    let model: Model = load_checkpoint(&run.checkpoint).map_err(err(format!("checkpoint {}", run.checkpoint.display())))?;
    let (total, affine) = model.param_counts();
    let ctx = RunContext::new(run.config.scenario.clone(), model, run.config.seed).map_err(err("scenario"))?;
    create_dir(&run.placement.out)?;
    Ok((run, ctx, affine as f64 / total as f64))
}

fn errors_csv(summary: &Summary) -> String {
    let mut s = String::from("arm,interval,mean_error,std_error\n");
    for a in &summary.arms {
        for (k, (m, sd)) in a.mean_error.iter().zip(&a.std_error).enumerate() {
            let _ = writeln!(s, "{},{},{},{}", a.arm, k + 1, m, sd);
        }
    }
    s
}

fn selection_csv(summary: &Summary) -> String {
    let mut s = String::from("interval,windowing_success,random_success\n");
    if let Some(sel) = &summary.selection {
        for (k, (w, r)) in sel.windowing.iter().zip(&sel.random).enumerate() {
            let _ = writeln!(s, "{},{},{}", k + 1, w, r);
        }
    }
    s
}

fn decisions_csv(runs: &[Vec<ArmResult>]) -> String {
    let mut s = String::from("replication,arm,interval,proxy_rate,decision,culprit,samples\n");
    for (r, results) in runs.iter().enumerate() {
        for res in results.iter().filter(|res| res.arm == Arm::TtaSaf) {
            for d in &res.decisions {
                let rate = d.proxy_rate.map(|v| v.to_string()).unwrap_or_default();
                let culprit = d.culprit.map(|k| k.name()).unwrap_or("");
                let _ = writeln!(s, "{r},{},{},{rate},{},{culprit},{}", res.arm, d.interval, d.decision, d.samples);
            }
        }
    }
    s
}

fn dump(run: &ResolvedRun, ctx: &RunContext, runs: &[Vec<ArmResult>]) -> CmdResult {
    let out = &run.placement.out;
    if run.config.dump_ledger {
        let dir = out.join("ledgers");
        create_dir(&dir)?;
        for (r, results) in runs.iter().enumerate() {
            for res in results {
                let path = dir.join(format!("rep{r:03}_{}.csv", res.arm));
                res.ledger.export_csv(&path).map_err(err(path.display()))?;
            }
        }
    }
    if run.config.dump_stream {
        let dir = out.join("streams");
        create_dir(&dir)?;
        for r in 0..runs.len() {
            let stream = replication_stream(&ctx.spec, replication_seed(run.config.seed, r));
            let path = dir.join(format!("rep{r:03}.csv"));
            let mut buf = Vec::new();
            write_stream_dump(&stream, &mut buf).map_err(err(path.display()))?;
            write(&path, buf)?;
        }
    }
    Ok(())
}

pub fn replicate(args: &RunArgs) -> CmdResult {
    let (run, ctx, fraction) = prepare(args)?;
    let cfg = &run.config;
    let (runs, selection) = pool(run.placement.workers)?.install(|| {
        let runs = replicate_runs(&ctx, &cfg.arms, cfg.reps, cfg.seed).map_err(err("replicate"))?;
        let selection = if ctx.spec.shifted_intervals().is_empty() {
            None
        } else {
            Some(compare_selection(&ctx, cfg.reps, cfg.seed).map_err(err("compare-selection"))?)
        };
        Ok::<_, String>((runs, selection))
    })?;
    let report = aggregate(&ctx.spec, &cfg.arms, &runs, cfg.seed);
    let summary = Summary::from_report("replicate", Some(&report), selection.as_ref(), fraction, cfg);
    let out = &run.placement.out;
    write(&out.join("errors.csv"), errors_csv(&summary))?;
    write(&out.join("selection.csv"), selection_csv(&summary))?;
    write(&out.join("decisions.csv"), decisions_csv(&runs))?;
    write_json(&out.join("summary.json"), &summary)?;
    dump(&run, &ctx, &runs)?;
    print!("{}", render_text(&summary));
    Ok(())
}

pub fn compare(args: &RunArgs) -> CmdResult {
    let (run, ctx, fraction) = prepare(args)?;
    let cfg = &run.config;
    let selection = pool(run.placement.workers)?
        .install(|| compare_selection(&ctx, cfg.reps, cfg.seed))
        .map_err(err("compare-selection"))?;
    let summary = Summary::from_report("compare-selection", None, Some(&selection), fraction, cfg);
    let out = &run.placement.out;
    write(&out.join("selection.csv"), selection_csv(&summary))?;
    write_json(&out.join("selection_summary.json"), &summary)?;
    print!("{}", render_text(&summary));
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.2}"))
}

pub fn render_text(s: &Summary) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "{} ({}), {} replications, base seed {}", s.scenario, s.command, s.n_reps, s.base_seed);
    let mut header = format!("{:<9}", "interval");
    for a in &s.arms {
        let _ = write!(header, " {:>15}", a.arm.name());
    }
    if s.selection.is_some() {
        let _ = write!(header, " {:>10} {:>10}", "windowing", "random");
    }
    let _ = writeln!(t, "{header}");
    for k in 0..s.intervals {
        let mark = if s.shifted_intervals.contains(&(k as u32 + 1)) { "*" } else { " " };
        let mut line = format!("{:<9}", format!("{}{mark}", k + 1));
        for a in &s.arms {
            let _ = write!(line, " {:>15}", format!("{:.3} ± {:.3}", a.mean_error[k], a.std_error[k]));
        }
        if let Some(sel) = &s.selection {
            let _ = write!(line, " {:>10.3} {:>10.3}", sel.windowing[k], sel.random[k]);
        }
        let _ = writeln!(t, "{line}");
    }
    if !s.arms.is_empty() {
        let _ = writeln!(
            t,
            "offline/saf {}, tta/saf {}, fine-tune events {} (max {} per replication), budget violations {}",
            fmt_opt(s.offline_over_saf),
            fmt_opt(s.tta_over_saf),
            s.finetune_events_total,
            s.finetune_events_max,
            s.budget_violations
        );
    }
    let _ = writeln!(t, "(* = shifted interval)");
    t
}

pub fn report(inputs: &[PathBuf], common: &CommonArgs) -> CmdResult {
    let file = crate::config::FileConfig::load(common.config.as_deref())?;
    let out = common.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(crate::config::DEFAULT_OUT));
    let inputs = if inputs.is_empty() { vec![out.join("summary.json")] } else { inputs.to_vec() };
    create_dir(&out)?;
    for path in &inputs {
        let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let summary: Summary = serde_json::from_str(&text).map_err(|e| format!("{}: malformed summary: {e}", path.display()))?;
        summary.validate().map_err(|e| format!("{}: malformed summary: {e}", path.display()))?;
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("summary");
        if !summary.arms.is_empty() {
            let mut series = String::from("interval");
            for a in &summary.arms {
                series.push(',');
                series.push_str(a.arm.name());
            }
            series.push('\n');
            for k in 0..summary.intervals {
                series.push_str(&(k + 1).to_string());
                for a in &summary.arms {
                    let _ = write!(series, ",{}", a.mean_error[k]);
                }
                series.push('\n');
            }
            write(&out.join(format!("{stem}_error_series.csv")), series)?;
        }
        if let Some(sel) = &summary.selection {
            let mut series = String::from("interval,windowing,random\n");
            for k in 0..summary.intervals {
                let _ = writeln!(series, "{},{},{}", k + 1, sel.windowing[k], sel.random[k]);
            }
            write(&out.join(format!("{stem}_selection_series.csv")), series)?;
        }
        let text = render_text(&summary);
        write(&out.join(format!("{stem}_report.txt")), &text)?;
        print!("{text}");
    }
    Ok(())
}
