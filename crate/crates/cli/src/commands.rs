use std::fs;
use std::path::{Path, PathBuf};

use mmagls::hrtf::{export_spectra_csv, hrz, load_hrir, synth_sphere_hrir, to_frequency_domain, HrirFormat, SphereHeadModel};
use mmagls::mask::{export_mask_csv, load_mask, save_mask};
use mmagls::metrics::{band_average, export_metrics_csv, mag_error, masked_average, nmse, spatial_average, Curve, ErrorSurface, Metric};
use mmagls::solver::{load_shc, save_shc, solve_ls, solve_magls};
use mmagls::{compute_mask, optimize, Ear, Error, HrtfSet, NotchMask, SamplingGrid, ShHrtf};
use serde_json::{json, Value};

use crate::config::{require_file, Method, Provenance, RunConfig};
use crate::report::CliError;

type Result<T> = std::result::Result<T, CliError>;

fn out_dir(cfg: &RunConfig) -> Result<&Path> {
    let dir = cfg.out()?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    Ok(dir)
}

fn load_reference(cfg: &RunConfig) -> Result<HrtfSet> {
    let path = cfg.input()?;
    let hrir = load_hrir(path, HrirFormat::from_path(path))?;
    Ok(to_frequency_domain(&hrir, cfg.n_fft)?)
}

fn metadata(prov: &Provenance, extra: Value) -> Value {
    let mut v = json!({ "provenance": prov });
    if let (Some(map), Value::Object(extra)) = (v.as_object_mut(), extra) {
        map.extend(extra);
    }
    v
}

/// `name=path` or a bare path.
fn parse_candidate(spec: &str) -> (Option<String>, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) if !name.is_empty() => (Some(name.to_string()), PathBuf::from(path)),
        _ => (None, PathBuf::from(spec)),
    }
}

struct Candidate {
    name: String,
    coeffs: ShHrtf,
}

fn load_candidates(specs: &[String]) -> Result<Vec<Candidate>> {
    let parsed: Vec<(Option<String>, PathBuf)> = specs.iter().map(|s| parse_candidate(s)).collect();
    for (_, path) in &parsed {
        require_file(path)?;
    }
    parsed
        .into_iter()
        .map(|(name, path)| {
            let (coeffs, meta) = load_shc(&path)?;
            let name = name
                .or_else(|| meta.get("method").and_then(Value::as_str).map(str::to_string))
                .unwrap_or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
            Ok(Candidate { name, coeffs })
        })
        .collect()
}

pub fn convert(cfg: &RunConfig) -> Result<()> {
    let input = cfg.input()?;
    let out = cfg.out()?;
    let hrir = load_hrir(input, HrirFormat::from_path(input))?;
    // the spectral view must be valid for the configured transform size
    let hrtf = to_frequency_domain(&hrir, cfg.n_fft)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    hrz::save(&hrir, out)?;
    println!(
        "{}: {} directions, {} taps at {} Hz, {} bins at n_fft {}",
        out.display(),
        hrir.num_directions(),
        hrir.taps(),
        hrir.sample_rate(),
        hrtf.num_bins(),
        cfg.n_fft
    );
    Ok(())
}

pub fn synth(cfg: &RunConfig) -> Result<()> {
    let out = cfg.out()?;
    let grid = SamplingGrid::lebedev(cfg.synth.grid_points)?;
    let model = SphereHeadModel {
        radius: cfg.solver.head_radius,
        speed_of_sound: cfg.synth.speed_of_sound,
        ..SphereHeadModel::default()
    };
    let hrir = synth_sphere_hrir(&grid, cfg.synth.sample_rate, cfg.n_fft, &model, cfg.synth.delay_taps)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    hrz::save(&hrir, out)?;
    println!(
        "{}: rigid sphere r={} m, {} directions, {} taps",
        out.display(),
        model.radius,
        grid.len(),
        hrir.taps()
    );
    Ok(())
}

pub fn mask(cfg: &RunConfig) -> Result<()> {
    cfg.input()?;
    let dir = out_dir(cfg)?;
    let hrtf = load_reference(cfg)?;
    let prov = Provenance::new("mask", cfg);
    let mask = compute_mask(&hrtf, &cfg.mask)?;
    let path = dir.join("mask.msk");
    save_mask(&mask, &path, &metadata(&prov, json!({ "mask": cfg.mask })))?;
    for ear in Ear::BOTH {
        let csv = dir.join(format!("mask_{}_{}.csv", cfg.plane.name(), ear.name()));
        export_mask_csv(&mask, ear, cfg.plane, &csv, Some(&prov.line()))?;
    }
    println!(
        "{}: k={} clip={} gate {}-{} Hz, active fraction {:.4}",
        path.display(),
        cfg.mask.k,
        cfg.mask.clip,
        cfg.mask.f_lo,
        cfg.mask.f_hi,
        mask.active_fraction()
    );
    Ok(())
}

fn curves(name: &str, coeffs: &ShHrtf, reference: &HrtfSet) -> Result<(ErrorSurface, ErrorSurface, Vec<Curve>)> {
    let n = nmse(coeffs, reference)?;
    let m = mag_error(coeffs, reference)?;
    let c = vec![
        Curve {
            method: name.to_string(),
            metric: Metric::Nmse,
            values: spatial_average(&n, None),
        },
        Curve {
            method: name.to_string(),
            metric: Metric::Mag,
            values: spatial_average(&m, None),
        },
    ];
    Ok((n, m, c))
}

pub fn solve(cfg: &RunConfig) -> Result<()> {
    if cfg.method == Method::Mmagls {
        return Err(CliError::usage(
            "usage.invalid_method",
            "solve supports ls and magls; use optimize for mmagls",
        ));
    }
    cfg.input()?;
    let dir = out_dir(cfg)?;
    let hrtf = load_reference(cfg)?;
    let prov = Provenance::new("solve", cfg);
    let name = cfg.method.name();
    let (coeffs, extra) = match cfg.method {
        Method::Ls => (solve_ls(&hrtf, cfg.solver.order)?, json!({ "method": name, "solver": cfg.solver })),
        _ => {
            let sol = solve_magls(&hrtf, &cfg.solver)?;
            if sol.ls_only {
                eprintln!("warning: no bin lies above the {:.1} Hz cutoff; result is plain LS", sol.cutoff_hz);
            }
            let extra = json!({
                "method": name,
                "solver": cfg.solver,
                "cutoff_hz": sol.cutoff_hz,
                "last_ls_bin": sol.last_ls_bin,
                "ls_only": sol.ls_only,
            });
            (sol.coeffs, extra)
        }
    };
    let path = dir.join(format!("{name}.shc"));
    save_shc(&coeffs, &path, &metadata(&prov, extra))?;
    let (_, _, c) = curves(name, &coeffs, &hrtf)?;
    let csv = dir.join(format!("{name}_metrics.csv"));
    export_metrics_csv(&c, hrtf.freq(), &csv, Some(&prov.line()))?;
    println!("{}: order {} {name}, cutoff {:.1} Hz", path.display(), coeffs.order(), cfg.solver.cutoff_hz());
    Ok(())
}

pub fn optimize_cmd(cfg: &RunConfig, init: Option<&Path>, mask_path: Option<&Path>) -> Result<()> {
    cfg.input()?;
    for p in init.iter().chain(mask_path.iter()) {
        require_file(p)?;
    }
    let dir = out_dir(cfg)?;
    let hrtf = load_reference(cfg)?;
    let prov = Provenance::new("optimize", cfg);
    let start = match init {
        Some(p) => load_shc(p)?.0,
        None => solve_magls(&hrtf, &cfg.solver)?.coeffs,
    };
    let mask: NotchMask = match mask_path {
        Some(p) => load_mask(p)?.0,
        None => compute_mask(&hrtf, &cfg.mask)?,
    };
    let (coeffs, report) = match optimize(&start, &hrtf, &mask, &cfg.optimizer) {
        Ok(r) => r,
        Err(Error::NonFiniteLoss { epoch, last_finite }) => {
            let path = dir.join("mmagls_last_finite.shc");
            save_shc(&last_finite, &path, &metadata(&prov, json!({ "method": "mmagls", "aborted_at_epoch": epoch })))?;
            return Err(CliError::new("numerical.non_finite_loss", format!("non-finite loss at epoch {epoch}"))
                .with_details(json!({ "epoch": epoch, "last_finite": path })));
        }
        Err(e) => return Err(e.into()),
    };
    let path = dir.join("mmagls.shc");
    let extra = json!({
        "method": "mmagls",
        "optimizer": cfg.optimizer,
        "initial_eps": report.initial.eps,
        "final_eps": report.final_record.eps,
        "num_params": report.num_params,
    });
    save_shc(&coeffs, &path, &metadata(&prov, extra))?;
    report.write_csv(dir.join("opt_report.csv"), Some(&prov.line()))?;
    println!(
        "{}: eps {:.6e} -> {:.6e} over {} epochs, {} parameters, {:.2?}",
        path.display(),
        report.initial.eps,
        report.final_record.eps,
        cfg.optimizer.epochs,
        report.num_params,
        report.wall_clock
    );
    Ok(())
}

pub fn eval(cfg: &RunConfig, specs: &[String], mask_path: Option<&Path>) -> Result<()> {
    cfg.input()?;
    if let Some(p) = mask_path {
        require_file(p)?;
    }
    let candidates = load_candidates(specs)?;
    let dir = out_dir(cfg)?;
    let hrtf = load_reference(cfg)?;
    let mask = mask_path.map(load_mask).transpose()?.map(|(m, _)| m);
    let prov = Provenance::new("eval", cfg);
    let cutoff = cfg.solver.cutoff_hz();
    let (lo, hi) = (cfg.eval.band_lo, cfg.eval.band_hi);

    let mut all = Vec::new();
    let mut rows = Vec::new();
    for cand in &candidates {
        let (n, m, c) = curves(&cand.name, &cand.coeffs, &hrtf)?;
        for (surface, curve) in [(&n, &c[0]), (&m, &c[1])] {
            let band = band_average(&curve.values, hrtf.freq(), lo, hi)?;
            let below = band_average(&curve.values, hrtf.freq(), 0.0, cutoff).ok();
            let masked = mask.as_ref().map(|mk| masked_average(surface, mk)).transpose().ok().flatten();
            rows.push((cand.name.clone(), curve.metric, band, below, masked));
        }
        all.extend(c);
    }
    export_metrics_csv(&all, hrtf.freq(), dir.join("eval.csv"), Some(&prov.line()))?;

    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into());
    let mut table = format!("# {}\nmethod,metric,band_{lo}_{hi}_db,below_cutoff_db,masked_db\n", prov.line());
    println!("{:<12} {:<6} {:>12} {:>14} {:>10}", "method", "metric", format!("{}-{} kHz", lo / 1000.0, hi / 1000.0), "below cutoff", "masked");
    for (name, metric, band, below, masked) in &rows {
        println!("{:<12} {:<6} {:>12.2} {:>14} {:>10}", name, metric.name(), band, fmt(*below), fmt(*masked));
        table.push_str(&format!(
            "{name},{},{band},{},{}\n",
            metric.name(),
            below.map(|v| v.to_string()).unwrap_or_default(),
            masked.map(|v| v.to_string()).unwrap_or_default()
        ));
    }
    let path = dir.join("band_table.csv");
    fs::write(&path, table).map_err(|e| CliError::io(&path, e))?;
    Ok(())
}

pub fn export(cfg: &RunConfig, specs: &[String], mask_path: Option<&Path>) -> Result<()> {
    cfg.input()?;
    if let Some(p) = mask_path {
        require_file(p)?;
    }
    let candidates = load_candidates(specs)?;
    let dir = out_dir(cfg)?;
    let hrtf = load_reference(cfg)?;
    let prov = Provenance::new("export", cfg);
    let plane = cfg.plane.name();
    let mut written = 0;
    for ear in Ear::BOTH {
        let path = dir.join(format!("spectra_reference_{plane}_{}.csv", ear.name()));
        export_spectra_csv(&hrtf, ear, cfg.plane, &path, Some(&prov.line()))?;
        written += 1;
    }
    for cand in &candidates {
        cand.coeffs.check_against(&hrtf)?;
        let rec = cand.coeffs.reconstruct(hrtf.grid())?;
        for ear in Ear::BOTH {
            let path = dir.join(format!("spectra_{}_{plane}_{}.csv", cand.name, ear.name()));
            export_spectra_csv(&rec, ear, cfg.plane, &path, Some(&prov.line()))?;
            written += 1;
        }
    }
    if let Some(p) = mask_path {
        let (mask, _) = load_mask(p)?;
        mask.check_compatible(&hrtf)?;
        for ear in Ear::BOTH {
            let path = dir.join(format!("mask_{plane}_{}.csv", ear.name()));
            export_mask_csv(&mask, ear, cfg.plane, &path, Some(&prov.line()))?;
            written += 1;
        }
    }
    println!("{}: {written} files for the {plane} plane", dir.display());
    Ok(())
}
