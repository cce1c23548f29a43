//! Subcommand implementations: track, simulate, evaluate, prune-bench.

use std::path::{Path, PathBuf};

use crate::CliError;
use crate::formats;
use settrack::bench::{PruneBenchConfig, PruneBenchReport, SweepPoint, run_prune_bench};
use settrack::metrics::{MotReport, clear_mot};
use settrack::models::ModelParams;
use settrack::sim::{InitialPopulation, SimOptions, generate_detections, generate_truth};
use settrack::tracker::Tracker;

/// Run the tracker over a detection file and write reported identities.
pub fn run_track(
    params: &ModelParams,
    detections_path: &Path,
    out_path: &Path,
    seed: u64,
    runs: u32,
) -> Result<(), CliError> {
    let frames = formats::ingest(detections_path, params)?;
    let mut row_counts: Vec<f64> = Vec::new();
    for run in 0..runs.max(1) {
        let run_seed = seed + run as u64;
        let mut tracker = Tracker::new(params.clone(), run_seed)?;
        let mut out_frames = Vec::with_capacity(frames.len());
        for (t, dets) in frames.iter().enumerate() {
            let reported = tracker.step(dets)?;
            out_frames.push((t, reported));
        }
        if tracker.degeneracy_events() > 0 {
            eprintln!(
                "warning: seed {run_seed}: {} weight-degeneracy resets",
                tracker.degeneracy_events()
            );
        }
        let path = if runs <= 1 {
            out_path.to_path_buf()
        } else {
            suffixed(out_path, run_seed)
        };
        let rows: usize = out_frames.iter().map(|(_, ids)| ids.len()).sum();
        row_counts.push(rows as f64);
        formats::write_tracks(&path, &out_frames)?;
    }
    if runs > 1 {
        let mean = row_counts.iter().sum::<f64>() / row_counts.len() as f64;
        let std = (row_counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>()
            / row_counts.len() as f64)
            .sqrt();
        println!(
            "{} runs (seeds {}..{}): {:.1} ± {:.1} reported rows",
            runs,
            seed,
            seed + runs as u64 - 1,
            mean,
            std
        );
    }
    Ok(())
}

fn suffixed(path: &Path, seed: u64) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let ext = path.extension().and_then(|s| s.to_str()).unwrap_or("csv");
    path.with_file_name(format!("{stem}.seed{seed}.{ext}"))
}

/// Generate ground truth and detections files for a synthetic scenario.
#[allow(clippy::too_many_arguments)]
pub fn run_simulate(
    params: &ModelParams,
    n_frames: usize,
    seed: u64,
    initial: InitialPopulation,
    confine: bool,
    truth_path: &Path,
    detections_path: &Path,
) -> Result<(), CliError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let options = SimOptions {
        initial,
        confine_to_arena: confine,
        ..SimOptions::default()
    };
    let scenario = generate_truth(params, n_frames, &options, seed, &mut rng);
    let det_frames: Vec<Vec<settrack::models::Detection>> = scenario
        .frames
        .iter()
        .map(|f| generate_detections(f, params, &mut rng))
        .collect();
    formats::write_ground_truth(truth_path, &scenario)?;
    formats::write_detections(detections_path, &det_frames)?;
    println!(
        "wrote {} frames: {} (truth), {} (detections)",
        n_frames,
        truth_path.display(),
        detections_path.display()
    );
    Ok(())
}

/// Evaluate tracker output against ground truth and print/emit the report.
pub fn run_evaluate(
    gt_path: &Path,
    tracks_path: &Path,
    dist_threshold: f64,
    out_path: Option<&Path>,
) -> Result<MotReport, CliError> {
    let gt = formats::read_ground_truth(gt_path)?;
    let tracks = formats::read_tracks(tracks_path)?;
    let (gt, tracks) = formats::align_frames(gt, tracks);
    let report = clear_mot(&gt, &tracks, dist_threshold)?;

    println!("metric   value");
    println!("------   -----");
    println!("MOTA     {:.1}%", 100.0 * report.mota);
    println!("MOTP     {:.1}%", 100.0 * report.motp);
    println!("IDS      {}", report.ids);
    println!("MT       {}", report.mt);
    println!("FM       {}", report.fm);

    let machine = format!(
        "mota,motp,ids,mt,fm\n{:.6},{:.6},{},{},{}\n",
        report.mota, report.motp, report.ids, report.mt, report.fm
    );
    match out_path {
        Some(p) => std::fs::write(p, machine)?,
        None => print!("{machine}"),
    }
    Ok(report)
}

/// Run the pruning benchmark and write per-threshold rows.
pub fn run_prune_bench_cmd(
    params: &ModelParams,
    n_frames: usize,
    seed: u64,
    runs: u32,
    out_path: Option<&Path>,
) -> Result<PruneBenchReport, CliError> {
    let config = PruneBenchConfig {
        n_frames,
        seeds: (seed..seed + runs.max(1) as u64).collect(),
        ..PruneBenchConfig::default()
    };
    let report = run_prune_bench(params, &config)?;

    let header = "sweep,t_assign,t_fm,matched_terms_before,matched_terms_after,matched_prune_rate,matched_rel_err,matched_rel_err_std,full_terms_before,full_terms_after,full_prune_rate,full_rel_err,full_rel_err_std,wall_ms";
    let mut rows = String::from(header);
    rows.push('\n');
    println!("{header}");
    let mut emit = |sweep: &str, p: &SweepPoint| {
        let row = format!(
            "{sweep},{},{},{:.2},{:.3},{:.4},{:.6},{:.6},{:.2},{:.3},{:.4},{:.6},{:.6},{:.1}",
            p.t_assign,
            p.t_fm,
            p.mean(|s| s.matched_terms_before_mean),
            p.mean(|s| s.matched_terms_after_mean),
            p.mean(|s| s.matched_prune_rate()),
            p.mean(|s| s.matched_rel_err_mean),
            p.std(|s| s.matched_rel_err_mean),
            p.mean(|s| s.full_terms_before_mean),
            p.mean(|s| s.full_terms_after_mean),
            p.mean(|s| s.full_prune_rate()),
            p.mean(|s| s.full_rel_err_mean),
            p.std(|s| s.full_rel_err_mean),
            p.mean(|s| s.wall_ms),
        );
        println!("{row}");
        rows.push_str(&row);
        rows.push('\n');
    };
    for p in &report.assign_sweep {
        emit("assign", p);
    }
    for p in &report.fm_sweep {
        emit("false-missing", p);
    }
    if let Some(path) = out_path {
        std::fs::write(path, rows)?;
    }
    Ok(report)
}
