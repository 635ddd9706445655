use std::path::{Path, PathBuf};
use std::time::Instant;

use csdecon::experiment::{
    aggregate, fmt_f64, fmt_snr, format_table, parse_snr, run_grid, ExperimentSpec, PhantomSpec, PsfSpec, RunMetrics,
    RunRecord, SeedStreams, SolverSpec, TableMetric,
};
use csdecon::io::{encode_pfm, encode_pgm_log, read_pfm, KeyValues, MeasurementFile};
use csdecon::metrics::{self, CnrInput, RegionSpec};
use csdecon::phantoms::{self, AcquisitionSpec};
use csdecon::{
    admm_reconstruct, sequential_reconstruct, Error, HaarWavelet, PsfOperator, Result, SensingOperator,
};

use crate::output::{csv_bytes, ensure_dir, read_csv_rows, Staged};
use crate::{AcquireArgs, ExperimentArgs, Globals, MetricsArgs, PhantomArgs, PsfArgs, ReconstructArgs};

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

fn set_opt<T: ToString>(kv: &mut KeyValues, key: &str, value: Option<T>) {
    if let Some(v) = value {
        kv.set(key, v);
    }
}

fn run_seed(g: &Globals) -> Result<u64> {
    match g.seed {
        Some(s) => Ok(s),
        None => Ok(g.config.parse_value("seed")?.unwrap_or(0)),
    }
}

fn path_arg(flag: Option<PathBuf>, kv: &KeyValues, key: &str) -> Result<PathBuf> {
    flag.or_else(|| kv.get(key).map(PathBuf::from))
        .ok_or_else(|| invalid(format!("missing `--{}`", key.replace('_', "-"))))
}

fn sidecar(stem: &Path) -> PathBuf {
    stem.with_extension("params")
}

pub fn phantom(g: &Globals, a: PhantomArgs) -> Result<()> {
    let mut kv = g.config.clone();
    set_opt(&mut kv, "phantom", a.kind);
    set_opt(&mut kv, "size", a.size);
    set_opt(&mut kv, "shepp_variant", a.variant);
    set_opt(&mut kv, "ggd_shape", a.ggd_shape);
    set_opt(&mut kv, "ggd_scale", a.ggd_scale);
    set_opt(&mut kv, "scatterer_density", a.density);
    set_opt(&mut kv, "cyst_radius", a.cyst_radius);
    set_opt(&mut kv, "cyst_attenuation", a.cyst_attenuation);
    let spec = PhantomSpec::from_key_values(&kv)?;
    let seed = run_seed(g)?;
    let phantom_seed = SeedStreams::derive(seed).phantom;
    let img = spec.build(phantom_seed)?;

    let mut params = KeyValues::new();
    spec.write(&mut params);
    params.set("seed", seed);
    params.set("phantom_seed", phantom_seed);
    let stem = g.out.join(&a.name);
    let mut staged = Staged::default();
    staged.add(stem.with_extension("pfm"), encode_pfm(&img));
    staged.add(sidecar(&stem), params.to_text());
    staged.commit()
}

pub fn psf(g: &Globals, a: PsfArgs) -> Result<()> {
    let mut kv = g.config.clone();
    set_opt(&mut kv, "psf", a.kind);
    set_opt(&mut kv, "psf_size", a.size);
    set_opt(&mut kv, "psf_variance", a.variance);
    set_opt(&mut kv, "psf_axial_freq", a.axial_freq);
    set_opt(&mut kv, "psf_axial_sigma", a.axial_sigma);
    set_opt(&mut kv, "psf_lateral_sigma", a.lateral_sigma);
    let spec = PsfSpec::from_key_values(&kv)?;
    let kernel = spec.kernel()?;

    let mut params = KeyValues::new();
    spec.write(&mut params);
    let stem = g.out.join(&a.name);
    let mut staged = Staged::default();
    staged.add(stem.with_extension("pfm"), encode_pfm(&kernel));
    staged.add(sidecar(&stem), params.to_text());
    staged.commit()
}

pub fn acquire(g: &Globals, a: AcquireArgs) -> Result<()> {
    let kv = &g.config;
    let trf_path = path_arg(a.trf, kv, "trf")?;
    let psf_path = path_arg(a.psf, kv, "psf_file")?;
    let cs_ratio = match a.cs_ratio {
        Some(r) => r,
        None => kv.parse_value("cs_ratio")?.ok_or_else(|| invalid("missing `--cs-ratio`"))?,
    };
    let snr_db = parse_snr(a.snr_db.as_deref().or(kv.get("snr_db")).unwrap_or("none"))?;
    let seed = run_seed(g)?;
    let seeds = SeedStreams::derive(seed);

    let trf = read_pfm(&trf_path)?;
    let kernel = read_pfm(&psf_path)?;
    let (h, w) = trf.shape();
    let psf = PsfOperator::new(&kernel, h, w)?;
    let spec = AcquisitionSpec {
        cs_ratio,
        snr_db,
        sensing_seed: seeds.sensing,
        noise_seed: seeds.noise,
    };
    let acq = phantoms::acquire(&trf, &psf, &spec)?;
    let file = MeasurementFile {
        height: h,
        width: w,
        cs_ratio,
        sensing_seed: seeds.sensing,
        noise_seed: seeds.noise,
        snr_db,
        values: acq.measurements.clone(),
    };

    let mut params = KeyValues::new();
    params.set("trf", trf_path.display());
    params.set("psf_file", psf_path.display());
    params.set("cs_ratio", fmt_f64(cs_ratio));
    params.set("snr_db", fmt_snr(snr_db));
    params.set("seed", seed);
    params.set("sensing_seed", seeds.sensing);
    params.set("noise_seed", seeds.noise);
    params.set("measurements", acq.measurements.len());
    params.set("realized_snr_db", fmt_f64(acq.realized_snr_db()));
    params.set("signal_energy", fmt_f64(acq.signal_energy));
    params.set("noise_energy", fmt_f64(acq.noise_energy));
    let stem = g.out.join(&a.name);
    let mut staged = Staged::default();
    staged.add(stem.with_extension("bin"), file.encode());
    staged.add(sidecar(&stem), params.to_text());
    staged.commit()
}

pub const CONVERGENCE_HEADER: [&str; 9] = [
    "method",
    "p",
    "iterations",
    "converged",
    "rel_change",
    "residual_coefficient",
    "residual_image",
    "residual_reduction",
    "seconds",
];

pub fn reconstruct(g: &Globals, a: ReconstructArgs) -> Result<()> {
    let mut kv = g.config.clone();
    let measurements_path = path_arg(a.measurements, &kv, "measurements")?;
    let psf_path = path_arg(a.psf, &kv, "psf_file")?;
    set_opt(&mut kv, "solver", a.solver);
    set_opt(&mut kv, "prior", a.prior);
    set_opt(&mut kv, "p", a.p);
    set_opt(&mut kv, "alpha", a.alpha);
    set_opt(&mut kv, "mu", a.mu);
    set_opt(&mut kv, "beta", a.beta);
    set_opt(&mut kv, "gamma", a.gamma);
    set_opt(&mut kv, "rel_tol", a.rel_tol);
    set_opt(&mut kv, "max_iter", a.max_iter);
    set_opt(&mut kv, "gtv_inner_iter", a.gtv_inner_iter);
    set_opt(&mut kv, "gtv_epsilon", a.gtv_epsilon);
    set_opt(&mut kv, "cg_tol", a.cg_tol);
    set_opt(&mut kv, "cg_max_iter", a.cg_max_iter);
    set_opt(&mut kv, "fista_tol", a.fista_tol);
    set_opt(&mut kv, "fista_max_iter", a.fista_max_iter);
    set_opt(&mut kv, "fb_step", a.fb_step);
    set_opt(&mut kv, "fb_tol", a.fb_tol);
    set_opt(&mut kv, "fb_max_iter", a.fb_max_iter);
    set_opt(&mut kv, "wavelet_levels", a.wavelet_levels);
    set_opt(&mut kv, "dynamic_range_db", a.dynamic_range);
    let kind = kv.get("solver").unwrap_or("admm_lp").to_string();
    let solver = SolverSpec::from_key_values(&kind, &kv)?;
    let levels: usize = kv.parse_value("wavelet_levels")?.unwrap_or(3);
    let dynamic_range: f64 = kv.parse_value("dynamic_range_db")?.unwrap_or(40.0);
    if !(dynamic_range > 0.0) {
        return Err(invalid("dynamic range must be positive"));
    }

    let file = MeasurementFile::read(&measurements_path)?;
    let kernel = read_pfm(&psf_path)?;
    let (h, w) = (file.height, file.width);
    let m = SensingOperator::measurement_count(h * w, file.cs_ratio)?;
    if file.values.len() != m {
        return Err(Error::Format(format!(
            "{} holds {} measurements but ratio {} on {h}x{w} implies {m}",
            measurements_path.display(),
            file.values.len(),
            file.cs_ratio
        )));
    }
    let sensing = SensingOperator::new(h, w, m, file.sensing_seed)?;
    let psf = PsfOperator::new(&kernel, h, w)?;
    let wavelet = HaarWavelet::new(levels, h, w)?;

    let start = Instant::now();
    let mut params = KeyValues::new();
    solver.write(&mut params);
    let mut residuals = [String::new(), String::new(), String::new()];
    let estimate = match &solver {
        SolverSpec::Admm(config) => {
            let (x, report) = admm_reconstruct(&file.values, &sensing, &psf, &wavelet, config)?;
            residuals = [
                fmt_f64(report.final_residuals.coefficient),
                fmt_f64(report.final_residuals.image),
                fmt_f64(report.residual_reduction()),
            ];
            params.set("iterations", report.iterations);
            params.set("converged", report.converged);
            params.set("rel_change", fmt_f64(report.rel_change));
            x
        }
        SolverSpec::Sequential(config) => {
            let (x, report) = sequential_reconstruct(&file.values, &sensing, &psf, &wavelet, config)?;
            params.set("iterations", report.iterations());
            params.set("converged", report.converged());
            params.set("cs_iterations", report.cs.iterations);
            params.set("deconvolution_iterations", report.deconvolution.iterations);
            params.set("rel_change", fmt_f64(report.deconvolution.rel_change));
            x
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    params.set("method", solver.label());
    params.set("measurements_file", measurements_path.display());
    params.set("psf_file", psf_path.display());
    params.set("cs_ratio", fmt_f64(file.cs_ratio));
    params.set("snr_db", fmt_snr(file.snr_db));
    params.set("sensing_seed", file.sensing_seed);
    params.set("noise_seed", file.noise_seed);
    params.set("wavelet_levels", levels);
    params.set("dynamic_range_db", fmt_f64(dynamic_range));
    params.set("seconds", fmt_f64(seconds));
    for (key, value) in ["residual_coefficient", "residual_image", "residual_reduction"].iter().zip(&residuals) {
        if !value.is_empty() {
            params.set(*key, value);
        }
    }
    let row = vec![
        solver.label(),
        fmt_f64(solver.exponent()),
        params.get("iterations").unwrap_or_default().to_string(),
        params.get("converged").unwrap_or_default().to_string(),
        params.get("rel_change").unwrap_or_default().to_string(),
        residuals[0].clone(),
        residuals[1].clone(),
        residuals[2].clone(),
        fmt_f64(seconds),
    ];
    if let Some(id) = kv.get("experiment_id") {
        params.set("experiment_id", id);
    }

    let stem = g.out.join(&a.name);
    let mut staged = Staged::default();
    staged.add(stem.with_extension("pfm"), encode_pfm(&estimate));
    staged.add(stem.with_extension("pgm"), encode_pgm_log(&estimate, dynamic_range)?);
    staged.add(sidecar(&stem), params.to_text());
    staged.add(g.out.join(format!("{}_convergence.csv", a.name)), csv_bytes(&CONVERGENCE_HEADER, &[row])?);
    staged.commit()
}

pub const METRICS_HEADER: [&str; 8] = [
    "experiment_id",
    "cs_ratio",
    "method",
    "psnr_db",
    "ssim_x100",
    "cnr",
    "iterations",
    "seconds",
];

fn parse_region(s: &str) -> Result<RegionSpec> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| invalid(format!("bad region `{s}`: {e}")))?;
    match parts[..] {
        [r, c, h, w] => Ok(RegionSpec::new(r, c, h, w)),
        _ => Err(invalid(format!("region `{s}` must be `row,col,height,width`"))),
    }
}

pub fn metrics(g: &Globals, a: MetricsArgs) -> Result<()> {
    let truth = read_pfm(&a.truth)?;
    let estimate = read_pfm(&a.estimate)?;
    let meta_path = sidecar(&a.estimate);
    let meta = if meta_path.exists() { KeyValues::read(&meta_path)? } else { KeyValues::new() };
    let input = match a.cnr_input.as_str() {
        "envelope" => CnrInput::Envelope,
        "raw" => CnrInput::Raw,
        other => return Err(invalid(format!("unknown cnr input `{other}`"))),
    };
    let regions = match (&a.region1, &a.region2) {
        (Some(r1), Some(r2)) => Some((parse_region(r1)?, parse_region(r2)?)),
        (None, None) => None,
        _ => return Err(invalid("CNR needs both --region1 and --region2")),
    };

    let psnr = metrics::psnr(&truth, &estimate)?;
    let ssim = metrics::ssim_global(&truth, &estimate)?;
    let cnr = regions
        .map(|(r1, r2)| metrics::cnr_with(&estimate, &r1, &r2, input))
        .transpose()?;
    let cs_ratio = match a.cs_ratio {
        Some(r) => Some(r),
        None => meta.parse_value::<f64>("cs_ratio")?,
    };
    let iterations = match a.iterations {
        Some(n) => Some(n),
        None => meta.parse_value::<usize>("iterations")?,
    };
    let seconds = match a.seconds {
        Some(s) => Some(s),
        None => meta.parse_value::<f64>("seconds")?,
    };
    let row = vec![
        a.experiment_id
            .or_else(|| meta.get("experiment_id").map(str::to_string))
            .unwrap_or_default(),
        cs_ratio.map(fmt_f64).unwrap_or_default(),
        a.method.or_else(|| meta.get("method").map(str::to_string)).unwrap_or_default(),
        format!("{psnr:.2}"),
        format!("{:.2}", 100.0 * ssim),
        cnr.map(|c| format!("{c:.2}")).unwrap_or_default(),
        iterations.map(|n| n.to_string()).unwrap_or_default(),
        seconds.map(|s| format!("{s:.3}")).unwrap_or_default(),
    ];

    let path = g.out.join(&a.csv);
    let mut rows = read_csv_rows(&path, &METRICS_HEADER)?;
    println!("{}", METRICS_HEADER.iter().zip(&row).map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" "));
    rows.push(row);
    let mut staged = Staged::default();
    staged.add(path, csv_bytes(&METRICS_HEADER, &rows)?);
    staged.commit()
}

pub const RUNS_HEADER: [&str; 18] = [
    "index",
    "solver",
    "p",
    "cs_ratio",
    "snr_db",
    "seed",
    "status",
    "psnr_db",
    "ssim_x100",
    "cnr",
    "iterations",
    "converged",
    "rel_change",
    "residual_reduction",
    "measurements",
    "realized_snr_db",
    "seconds",
    "error",
];

pub const AGGREGATE_HEADER: [&str; 10] = [
    "solver",
    "snr_db",
    "cs_ratio",
    "runs",
    "failures",
    "psnr_db",
    "ssim_x100",
    "cnr",
    "iterations",
    "seconds",
];

fn run_row(r: &RunRecord) -> Vec<String> {
    let s = &r.spec;
    let mut row = vec![
        r.index.to_string(),
        s.solver.label(),
        fmt_f64(s.solver.exponent()),
        fmt_f64(s.cs_ratio),
        fmt_snr(s.snr_db),
        s.seed.to_string(),
    ];
    match &r.result {
        Ok(m) => {
            row.push("ok".into());
            row.extend(metric_cells(m));
            row.push(String::new());
        }
        Err(e) => {
            row.push("failed".into());
            row.extend(std::iter::repeat_n(String::new(), 10));
            row.push(e.clone());
        }
    }
    row
}

fn metric_cells(m: &RunMetrics) -> Vec<String> {
    vec![
        fmt_f64(m.psnr_db),
        fmt_f64(100.0 * m.ssim),
        m.cnr.map(fmt_f64).unwrap_or_default(),
        m.iterations.to_string(),
        m.converged.to_string(),
        fmt_f64(m.rel_change),
        m.residual_reduction.map(fmt_f64).unwrap_or_default(),
        m.measurements.to_string(),
        fmt_f64(m.realized_snr_db),
        fmt_f64(m.seconds),
    ]
}

pub fn experiment(g: &Globals, a: ExperimentArgs) -> Result<()> {
    let mut kv = g.config.clone();
    if let Some(path) = &a.spec {
        kv.merge(&KeyValues::read(path)?);
    }
    set_opt(&mut kv, "name", a.name);
    set_opt(&mut kv, "cs_ratios", a.cs_ratios);
    set_opt(&mut kv, "seeds", a.seeds);
    set_opt(&mut kv, "snr_db", a.snr_db);
    set_opt(&mut kv, "solver", a.solver);
    if let Some(seed) = g.seed {
        if !kv.contains("seeds") {
            kv.set("seeds", seed);
        }
    }
    let spec = ExperimentSpec::from_key_values(&kv)?;
    let dir = g.out.join(&spec.name);
    let runs_dir = dir.join("runs");
    ensure_dir(&runs_dir)?;

    let write_images = !a.no_images;
    let name = spec.name.clone();
    let records = run_grid(&spec, g.threads, |index, run, outcome| {
        let mut params = run.to_key_values();
        params.set("name", &name);
        params.set("cs_ratios", fmt_f64(run.cs_ratio));
        params.set("seeds", run.seed);
        let mut staged = Staged::default();
        match outcome {
            Ok(o) => {
                params.set("status", "ok");
                params.set("psnr_db", fmt_f64(o.metrics.psnr_db));
                params.set("ssim", fmt_f64(o.metrics.ssim));
                params.set("iterations", o.metrics.iterations);
                params.set("converged", o.metrics.converged);
                if write_images {
                    staged.add(runs_dir.join(format!("{index:03}.pfm")), encode_pfm(&o.estimate));
                }
            }
            Err(e) => {
                params.set("status", "failed");
                params.set("error", e.to_string().replace('\n', " "));
            }
        }
        staged.add(runs_dir.join(format!("{index:03}.params")), params.to_text());
        if let Err(e) = staged.commit() {
            eprintln!("warning: run {index}: {e}");
        }
        let status = match outcome {
            Ok(o) => format!("psnr {:.2} dB, {} iterations", o.metrics.psnr_db, o.metrics.iterations),
            Err(e) => format!("failed: {e}"),
        };
        eprintln!("run {index:03} {} ratio {} seed {}: {status}", run.solver.label(), run.cs_ratio, run.seed);
    })?;

    let rows: Vec<Vec<String>> = records.iter().map(run_row).collect();
    let agg = aggregate(&records);
    let agg_rows: Vec<Vec<String>> = agg
        .iter()
        .map(|r| {
            vec![
                r.solver.clone(),
                fmt_snr(r.snr_db),
                fmt_f64(r.cs_ratio),
                r.runs.to_string(),
                r.failures.to_string(),
                fmt_f64(r.psnr_db),
                fmt_f64(100.0 * r.ssim),
                r.cnr.map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.iterations),
                fmt_f64(r.seconds),
            ]
        })
        .collect();
    let mut table = format_table(&agg, TableMetric::Psnr);
    table.push('\n');
    table.push_str(&format_table(&agg, TableMetric::SsimX100));
    if agg.iter().any(|r| r.cnr.is_some()) {
        table.push('\n');
        table.push_str(&format_table(&agg, TableMetric::Cnr));
    }
    print!("{table}");

    let mut staged = Staged::default();
    staged.add(dir.join("runs.csv"), csv_bytes(&RUNS_HEADER, &rows)?);
    staged.add(dir.join("aggregate.csv"), csv_bytes(&AGGREGATE_HEADER, &agg_rows)?);
    staged.add(dir.join("table.txt"), table);
    staged.add(dir.join("experiment.params"), kv.to_text());
    staged.commit()
}
