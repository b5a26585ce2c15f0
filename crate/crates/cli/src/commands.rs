use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use gmrf_core::analyze::{ci_pattern, precision_sparsity};
use gmrf_core::assemble::{build_joint, JointPair};
use gmrf_core::bench::{pd_sweep, scaling_exponent, time_construction, PdSweepReport, Scenario, SweepKernel};
use gmrf_core::fixtures;
use gmrf_core::infer::{cross_validate, simulate_observations};
use gmrf_core::{FieldDag, ModelSpec};
use serde_json::json;

use crate::args::{BenchArgs, BuildArgs, GraphArgs, Mode, PredictArgs, SweepArgs};
use crate::error::CliError;
use crate::{heatmap, matfile};

pub const SIGMA_FILE: &str = "sigma";
pub const PRECISION_FILE: &str = "precision";
pub const METADATA_FILE: &str = "metadata.json";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn pairs_text(pairs: impl IntoIterator<Item = (usize, usize)>) -> String {
    pairs.into_iter().map(|(a, b)| format!("{{{a},{b}}}")).collect::<Vec<_>>().join(" ")
}

/// Writes the build outputs and returns the joint pair.
pub fn build(args: &BuildArgs, out: &mut impl Write) -> Result<JointPair, CliError> {
    create_dir(&args.out_dir)?;
    let spec = args.spec()?;
    let jp = build_joint(&spec)?;
    let ext = if args.csv { "csv" } else { "gmrf" };
    matfile::save(&args.out_dir.join(format!("{SIGMA_FILE}.{ext}")), &jp.sigma, args.csv)?;
    matfile::save(&args.out_dir.join(format!("{PRECISION_FILE}.{ext}")), &jp.precision, args.csv)?;
    heatmap::save(&args.out_dir.join(format!("{SIGMA_FILE}_heatmap.csv")), &jp.sigma)?;
    heatmap::save(&args.out_dir.join(format!("{PRECISION_FILE}_heatmap.csv")), &jp.precision)?;

    let meta = metadata(&spec, &jp);
    let path = args.out_dir.join(METADATA_FILE);
    let mut w = create_file(&path)?;
    serde_json::to_writer_pretty(&mut w, &meta)
        .map_err(|e| CliError::Format {
            path: path.clone(),
            reason: e.to_string(),
        })
        .and_then(|_| w.flush().map_err(|e| CliError::io(&path, e)))?;

    let sparsity = precision_sparsity(&jp);
    writeln!(
        out,
        "built p={} n={} mode={} regularization={:e} threshold={:e} sigma_pd={} precision_pd={} zero={:.2}%",
        jp.p(),
        jp.n(),
        spec.univariate.name(),
        jp.applied_regularization,
        jp.applied_threshold,
        jp.sigma_pd,
        jp.precision_pd,
        sparsity.zero_percent
    )
    .map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
    if !jp.certified() {
        return Err(CliError::NotCertified(format!(
            "positive definiteness not certified (sigma {}, precision {})",
            jp.sigma_pd, jp.precision_pd
        )));
    }
    Ok(jp)
}

fn metadata(spec: &ModelSpec, jp: &JointPair) -> serde_json::Value {
    let layout = &jp.layout;
    let blocks: Vec<_> = layout
        .order()
        .iter()
        .map(|&label| {
            let range = layout.range(label);
            json!({
                "label": label,
                "name": spec.dag.name(label),
                "start": range.start,
                "end": range.end,
                "parents": spec.dag.parents(label).unwrap_or_default(),
            })
        })
        .collect();
    let ci: Vec<[usize; 2]> = ci_pattern(jp).into_iter().map(|(a, b)| [a, b]).collect();
    json!({
        "mode": spec.univariate.name(),
        "p": jp.p(),
        "n": jp.n(),
        "dim": layout.dim(),
        "grid_step": spec.grid.step(),
        "applied_threshold": jp.applied_threshold,
        "applied_regularization": jp.applied_regularization,
        "sigma_pd": jp.sigma_pd,
        "precision_pd": jp.precision_pd,
        "options": {
            "normalize_b": spec.options.normalize_b,
            "regularize": spec.options.regularize,
            "threshold": spec.options.threshold,
            "update": format!("{:?}", spec.options.update),
        },
        "sparsity": precision_sparsity(jp),
        "ci_pairs": ci,
        "layout": { "order": layout.order(), "blocks": blocks },
        "flops": { "sigma_path": jp.flops.sigma_path, "precision_path": jp.flops.precision_path },
    })
}

pub fn moralize_report(dag: &FieldDag) -> String {
    let moral = dag.moralize();
    let marriages = if moral.marriages().is_empty() {
        "no marriages".to_string()
    } else {
        format!("marriages: {}", pairs_text(moral.marriages().iter().copied()))
    };
    let ci = moral.ci_pairs();
    let ci = if ci.is_empty() {
        "ci pairs: none".to_string()
    } else {
        format!("ci pairs: {}", pairs_text(ci))
    };
    format!("{marriages}\n{ci}\n")
}

pub fn moralize(args: &GraphArgs, out: &mut impl Write) -> Result<(), CliError> {
    let dag = args.resolve()?;
    out.write_all(moralize_report(&dag).as_bytes())
        .map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

pub fn bench(args: &BenchArgs, stdout: &mut impl Write, log: &mut impl Write) -> Result<(), CliError> {
    let scenarios = args
        .scenario
        .iter()
        .map(|s| s.parse::<Scenario>())
        .collect::<Result<Vec<_>, _>>()?;
    let mut file;
    let (sink, name): (&mut dyn Write, &Path) = match &args.out {
        Some(path) => {
            file = create_file(path)?;
            (&mut file, path.as_path())
        }
        None => (stdout, Path::new("<stdout>")),
    };
    let io = |e| CliError::io(name, e);
    writeln!(sink, "scenario,n,p,rep,seconds").map_err(io)?;
    for scenario in scenarios {
        let mut records = Vec::new();
        for &p in &args.p {
            let rec = time_construction(scenario, args.n, p, args.reps, args.seed)?;
            for (k, t) in rec.times.iter().enumerate() {
                writeln!(sink, "{},{},{},{},{}", rec.scenario, rec.n, rec.p, k, t).map_err(io)?;
            }
            writeln!(
                log,
                "{} n={} p={}: min {:.6} lq {:.6} median {:.6} mean {:.6} uq {:.6} max {:.6} s",
                rec.scenario, rec.n, rec.p, rec.min, rec.lq, rec.median, rec.mean, rec.uq, rec.max
            )
            .map_err(|e| CliError::io(Path::new("<stderr>"), e))?;
            records.push(rec);
        }
        if records.len() >= 4 {
            let slope = scaling_exponent(&records)?;
            writeln!(log, "{scenario}: scaling exponent in p = {slope:.3}").map_err(|e| CliError::io(Path::new("<stderr>"), e))?;
        }
    }
    sink.flush().map_err(io)
}

pub fn predict(args: &PredictArgs, out: &mut impl Write) -> Result<(), CliError> {
    if let Some(dir) = &args.out_dir {
        create_dir(dir)?;
    }
    let car = match args.mode {
        Mode::Geostat => false,
        Mode::Car => true,
        Mode::Taper => return Err(CliError::Usage("predict supports --mode geostat or car".into())),
    };
    let family: fixtures::Family = args.family.into();
    let spec = fixtures::six_field_spec(fixtures::denoise_grid(), family, car)?;
    let jp = build_joint(&spec)?;
    let (truth, observed) = simulate_observations(&jp, args.tau2, args.seed)?;
    let split = fixtures::denoise_split(&jp.layout);
    let r = cross_validate(&jp, &observed, &truth, &split, args.tau2)?;
    let stdout = |e| CliError::io(Path::new("<stdout>"), e);
    writeln!(out, "kernel {} mode {} tau2 {} seed {}", family.name(), spec.univariate.name(), args.tau2, args.seed).map_err(stdout)?;
    writeln!(out, "test sites {}", r.n_test).map_err(stdout)?;
    writeln!(out, "MAE {:.4} RMSE {:.4}", r.mae, r.rmse).map_err(stdout)?;
    writeln!(out, "baseline MAE {:.4} RMSE {:.4}", r.baseline_mae, r.baseline_rmse).map_err(stdout)?;
    if let Some(dir) = &args.out_dir {
        let path = dir.join("cv.csv");
        let mut w = create_file(&path)?;
        let io = |e| CliError::io(&path, e);
        writeln!(w, "kernel,mode,tau2,seed,n_test,mae,rmse,baseline_mae,baseline_rmse").map_err(io)?;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            family.name(),
            spec.univariate.name(),
            args.tau2,
            args.seed,
            r.n_test,
            r.mae,
            r.rmse,
            r.baseline_mae,
            r.baseline_rmse
        )
        .map_err(io)?;
        w.flush().map_err(io)?;
    }
    Ok(())
}

/// Runs both paths for each kernel. Fails only if the stabilized path misses a certificate.
pub fn pd_sweep_cmd(args: &SweepArgs, out: &mut impl Write) -> Result<(), CliError> {
    let kernels: Vec<SweepKernel> = if args.kernel.eq_ignore_ascii_case("all") {
        SweepKernel::ALL.to_vec()
    } else {
        vec![args.kernel.parse::<SweepKernel>()?]
    };
    if let Some(dir) = &args.out_dir {
        create_dir(dir)?;
    }
    let dag = args.dag()?;
    let grid = args.grid()?;
    let stdout = |e| CliError::io(Path::new("<stdout>"), e);
    writeln!(out, "{:<9} {:<11} {:>9} {:>13} {:>9}", "kernel", "path", "sigma_pd", "precision_pd", "both").map_err(stdout)?;
    let mut reports: Vec<PdSweepReport> = Vec::new();
    for k in kernels {
        for stabilized in [false, true] {
            let rep = pd_sweep(k, &grid, &dag, stabilized)?;
            let total = rep.cases.len();
            writeln!(
                out,
                "{:<9} {:<11} {:>9} {:>13} {:>9}",
                k.name(),
                if stabilized { "stabilized" } else { "original" },
                format!("{}/{total}", rep.sigma_pass()),
                format!("{}/{total}", rep.precision_pass()),
                format!("{}/{total}", rep.both_pass())
            )
            .map_err(stdout)?;
            reports.push(rep);
        }
    }
    if let Some(dir) = &args.out_dir {
        let path = dir.join("pd_sweep.csv");
        let mut w = create_file(&path)?;
        let io = |e| CliError::io(&path, e);
        writeln!(w, "kernel,path,a,delta,sigma_pd,precision_pd,regularization").map_err(io)?;
        for rep in &reports {
            for c in &rep.cases {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    rep.kernel.name(),
                    if rep.stabilized { "stabilized" } else { "original" },
                    c.amplitude,
                    c.delta,
                    c.sigma_pd,
                    c.precision_pd,
                    c.regularization
                )
                .map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| r.stabilized && r.both_pass() < r.cases.len())
        .map(|r| r.kernel.name())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::NotCertified(format!("stabilized sweep not fully positive definite for {}", failed.join(", "))))
    }
}
