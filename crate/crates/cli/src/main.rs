//! Scenario-driven experiment runner: synthesize captures, discover cells
//! and estimate CSI, run the sensing DSP chain, classify gestures, and
//! sweep benchmark axes. Exit codes: 0 success, 2 configuration error,
//! 3 runtime failure.

use clap::{Parser, Subcommand};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cellsense_core::dsp::{
    bandpass_dynamic, crs_subcarrier_select, csi_ratio, doppler_spectrogram,
    estimate_activity_threshold, extract_main_path, peak_doppler_track, CsiSource, DopplerTrack,
};
use cellsense_core::gesture::{classify, remove_outliers, GestureLabel};
use cellsense_core::grid::{CsgridReader, CsgridWriter, FrameGrid};
use cellsense_core::pipeline::{
    self, run_accuracy_bench, run_nmse_bench, run_pipeline, SimWorld, SweepAxis,
};
use cellsense_core::receiver::sic::{sic_cell_search, SicParams};
use cellsense_core::receiver::{crs_ls_estimate, joint_ls_estimate};
use cellsense_core::scenario::{Method, Scenario};

#[derive(Parser)]
#[command(name = "cellsense", version, about = "Cellular-signal sensing simulator and receiver toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize one capture and write per-antenna CSGRID01 files.
    Synth {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Trial index controlling the random streams.
        #[arg(long, default_value_t = 0)]
        trial: usize,
        /// Scripted gesture label (omit for a static capture).
        #[arg(long)]
        gesture: Option<String>,
    },
    /// Discover cells in a capture directory and export CSI series.
    Estimate {
        /// Directory produced by `synth`.
        #[arg(long)]
        capture: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        /// Acquisition method: pbch, crs or crs_ss.
        #[arg(long, default_value = "pbch")]
        method: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sensing DSP: main path, CSI ratio, band-pass, spectrogram, track.
    Dsp {
        /// CSI CSV of the sensing series.
        #[arg(long)]
        csi: PathBuf,
        /// CSI CSV of the phase reference (second antenna or port).
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value = "pbch")]
        source: String,
        #[arg(long, default_value_t = 0)]
        stream: usize,
        /// Keep only this many selected subcarriers before combining.
        #[arg(long)]
        select: Option<usize>,
        #[arg(long, default_value_t = 0.1)]
        window_s: f64,
        #[arg(long, default_value_t = 0.05)]
        step_s: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Classify a pair of Doppler tracks.
    Classify {
        #[arg(long)]
        track_r1: PathBuf,
        #[arg(long)]
        track_r2: PathBuf,
        /// Optional truth label for scoring.
        #[arg(long)]
        truth: Option<String>,
    },
    /// Full comparison: synthesize, estimate with every method, classify.
    Pipeline {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte Carlo sweeps of NMSE or accuracy against a scenario axis.
    Bench {
        #[arg(long)]
        scenario: PathBuf,
        /// Swept axis: duty, sir, snr or kl.
        #[arg(long)]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
        /// Monte Carlo captures per point (nmse metric).
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        /// Metric: nmse or accuracy.
        #[arg(long, default_value = "nmse")]
        metric: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }
}

fn config_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut scenario = Scenario::from_toml(&text).map_err(config_err)?;
    if let Some(seed) = seed {
        scenario.seed = seed;
    }
    scenario.validate().map_err(config_err)?;
    Ok(scenario)
}

fn write_manifest(out: &Path, scenario: &Scenario, command: &str) -> Result<(), CliError> {
    let manifest = serde_json::json!({
        "tool": "cellsense",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "scenario": scenario.name,
        "config_hash": scenario.config_hash(),
        "seed": scenario.seed,
    });
    let path = out.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("json") + "\n")
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn ensure_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn parse_label(s: &str) -> Result<GestureLabel, CliError> {
    GestureLabel::GESTURES
        .iter()
        .copied()
        .find(|g| g.as_str() == s)
        .ok_or_else(|| CliError::Config(format!("unknown gesture '{s}'")))
}

fn cmd_synth(
    scenario_path: &Path,
    out: &Path,
    seed: Option<u64>,
    trial: usize,
    gesture: Option<String>,
) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path, seed)?;
    let world = SimWorld::new(scenario.clone()).map_err(runtime_err)?;
    let script = match &gesture {
        Some(label) => {
            let script = world.script(parse_label(label)?);
            script.validate().map_err(config_err)?;
            Some(script)
        }
        None => None,
    };
    ensure_dir(out)?;
    let mut sim = world.trial(trial, script.as_ref()).map_err(runtime_err)?;
    let n_antennas = scenario.n_antennas();
    let mut writers = Vec::with_capacity(n_antennas);
    for a in 0..n_antennas {
        let path = out.join(format!("rx_a{a}.csgrid"));
        let file = fs::File::create(&path)
            .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
        writers.push(
            CsgridWriter::new(BufWriter::new(file), scenario.n_frames, world.n_sc())
                .map_err(runtime_err)?,
        );
    }
    for n in 0..scenario.n_frames {
        let batch = sim.frame(&world, n).map_err(runtime_err)?;
        for (w, frame) in writers.iter_mut().zip(batch.iter()) {
            w.append(frame).map_err(runtime_err)?;
        }
    }
    for w in writers {
        w.finish().map_err(runtime_err)?;
    }
    let truth = serde_json::json!({
        "trial": trial,
        "sfn0": sim.sfn0,
        "gesture": gesture,
        "cells": scenario.cells.iter().map(|c| serde_json::json!({
            "pci": c.pci, "ports": c.ports, "power_db": c.power_db,
            "payload_duty": c.payload_duty, "serving": c.serving,
        })).collect::<Vec<_>>(),
    });
    fs::write(out.join("truth.json"), serde_json::to_string_pretty(&truth).expect("json") + "\n")
        .map_err(runtime_err)?;
    write_manifest(out, &scenario, "synth")?;
    println!(
        "wrote {} antennas x {} frames to {}",
        n_antennas,
        scenario.n_frames,
        out.display()
    );
    Ok(())
}

fn read_capture(path: &Path) -> Result<Vec<FrameGrid>, CliError> {
    let file = fs::File::open(path)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut reader = CsgridReader::new(BufReader::new(file)).map_err(config_err)?;
    let mut frames = Vec::with_capacity(reader.n_frames());
    while let Some(frame) = reader.next_frame().map_err(runtime_err)? {
        frames.push(frame);
    }
    Ok(frames)
}

fn cmd_estimate(capture: &Path, scenario_path: &Path, method: &str, out: &Path) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path, None)?;
    let method: Method = method.parse().map_err(CliError::Config)?;
    ensure_dir(out)?;
    // Antenna files present in the capture directory.
    let mut antennas = Vec::new();
    for a in 0.. {
        let path = capture.join(format!("rx_a{a}.csgrid"));
        if !path.exists() {
            break;
        }
        antennas.push(path);
    }
    if antennas.is_empty() {
        return Err(CliError::Config(format!(
            "no rx_a*.csgrid files in {}",
            capture.display()
        )));
    }
    let frames0 = read_capture(&antennas[0])?;
    let sic_params = SicParams {
        k_sc: scenario.estimators.k_sc,
        l_sym: scenario.estimators.l_sym,
        cond_limit: scenario.estimators.cond_limit,
        decode_frames: scenario.estimators.decode_frames,
        ..SicParams::default()
    };
    let mut outcome = sic_cell_search(&frames0, &sic_params).map_err(runtime_err)?;
    if outcome.cfo_hz.abs() < 1.0 {
        outcome.cfo_hz = 0.0; // sub-Hz estimates are measurement noise
    }
    if outcome.cells.is_empty() {
        return Err(CliError::Runtime("no cells discovered".into()));
    }
    {
        let path = out.join("discovery.jsonl");
        let mut f = BufWriter::new(fs::File::create(&path).map_err(runtime_err)?);
        pipeline::write_discovery_jsonl(&outcome.cells, &mut f).map_err(runtime_err)?;
    }
    let serving_pci = scenario.cells[scenario.serving_index()].pci;
    let serving = outcome
        .cells
        .iter()
        .find(|c| c.identity.pci() == serving_pci)
        .ok_or_else(|| CliError::Runtime(format!("serving cell {serving_pci} not discovered")))?;
    for (a, path) in antennas.iter().enumerate() {
        let mut frames = if a == 0 { frames0.clone() } else { read_capture(path)? };
        cellsense_core::receiver::compensate_cfo(&mut frames, outcome.cfo_hz);
        let csv = out.join(format!("csi_{}_a{a}.csv", method.as_str()));
        let mut w = BufWriter::new(fs::File::create(&csv).map_err(runtime_err)?);
        match method {
            Method::Pbch => {
                let est = joint_ls_estimate(
                    &frames,
                    &outcome.cells,
                    scenario.estimators.k_sc,
                    scenario.estimators.l_sym,
                    scenario.estimators.cond_limit,
                )
                .map_err(runtime_err)?;
                // Export every stream; the serving stream index is noted in
                // the discovery report order.
                writeln!(w, "frame_index,group_k,group_l,stream,re,im").map_err(runtime_err)?;
                for (n, frame) in est.rows.iter().enumerate() {
                    for (g, grp) in frame.iter().enumerate() {
                        let group = est.groups[g];
                        for (s, v) in grp.iter().enumerate() {
                            writeln!(
                                w,
                                "{},{},{},{},{:.9e},{:.9e}",
                                n, group.k_g, group.l_g, s, v.re, v.im
                            )
                            .map_err(runtime_err)?;
                        }
                    }
                }
            }
            Method::Crs | Method::CrsSs => {
                let series = crs_ls_estimate(&frames, serving.identity, 0).map_err(runtime_err)?;
                pipeline::write_csi_csv(&series, 0, &mut w).map_err(runtime_err)?;
            }
        }
    }
    write_manifest(out, &scenario, "estimate")?;
    println!(
        "discovered {} cells; CSI written to {}",
        outcome.cells.len(),
        out.display()
    );
    Ok(())
}

fn parse_source(s: &str) -> Result<CsiSource, CliError> {
    match s {
        "pbch" => Ok(CsiSource::Pbch),
        "crs" | "crs_ss" => Ok(CsiSource::Crs),
        other => Err(CliError::Config(format!("unknown source '{other}'"))),
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_dsp(
    csi: &Path,
    reference: &Path,
    source: &str,
    stream: usize,
    select: Option<usize>,
    window_s: f64,
    step_s: f64,
    out: &Path,
) -> Result<(), CliError> {
    let source = parse_source(source)?;
    ensure_dir(out)?;
    let open = |p: &Path| -> Result<_, CliError> {
        let f = fs::File::open(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
        pipeline::read_csi_csv(BufReader::new(f), stream, source).map_err(config_err)
    };
    let mut num = open(csi)?;
    let mut den = open(reference)?;
    if let Some(count) = select {
        let columns: Vec<Vec<_>> = (0..num.n_points()).map(|i| num.column(i)).collect();
        let keep = crs_subcarrier_select(&columns, count);
        num = num.select_columns(&keep);
        den = den.select_columns(&keep);
    }
    let num_path = extract_main_path(&num.rows, &num.lattice, source).map_err(runtime_err)?;
    let den_path = extract_main_path(&den.rows, &den.lattice, source).map_err(runtime_err)?;
    let ratio = csi_ratio(&num_path, &den_path, 1e-3).map_err(runtime_err)?;
    let dynamic = bandpass_dynamic(&ratio).map_err(runtime_err)?;
    let spec = doppler_spectrogram(&dynamic, window_s, step_s).map_err(runtime_err)?;
    let threshold = estimate_activity_threshold(&spec);
    let track = remove_outliers(&peak_doppler_track(&spec, threshold));
    {
        let mut f = BufWriter::new(fs::File::create(out.join("spectrogram.csv")).map_err(runtime_err)?);
        spec.write_csv(&mut f).map_err(runtime_err)?;
    }
    {
        let mut f = BufWriter::new(fs::File::create(out.join("track.csv")).map_err(runtime_err)?);
        track.write_csv(&mut f).map_err(runtime_err)?;
    }
    println!(
        "{} windows; outputs in {}",
        spec.n_windows(),
        out.display()
    );
    Ok(())
}

fn read_track(path: &Path) -> Result<DopplerTrack, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut times = Vec::new();
    let mut f_hz = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let t: f64 = parts
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| CliError::Config(format!("{}:{}: bad time", path.display(), i + 1)))?;
        let f: f64 = parts
            .next()
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| CliError::Config(format!("{}:{}: bad frequency", path.display(), i + 1)))?;
        times.push(t);
        f_hz.push(f);
    }
    let step_s = if times.len() > 1 { times[1] - times[0] } else { 0.05 };
    Ok(DopplerTrack {
        f_hz,
        times_s: times,
        step_s,
    })
}

fn cmd_classify(track_r1: &Path, track_r2: &Path, truth: Option<String>) -> Result<(), CliError> {
    let t1 = read_track(track_r1)?;
    let t2 = read_track(track_r2)?;
    let label = classify(&t1, &t2, &Default::default()).map_err(runtime_err)?;
    let mut obj = serde_json::json!({ "label": label.as_str() });
    if let Some(truth) = truth {
        let truth_label = parse_label(&truth)?;
        obj["truth"] = serde_json::json!(truth_label.as_str());
        obj["correct"] = serde_json::json!(truth_label == label);
    }
    println!("{obj}");
    Ok(())
}

fn cmd_pipeline(scenario_path: &Path, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path, seed)?;
    ensure_dir(out)?;
    let world = SimWorld::new(scenario.clone()).map_err(runtime_err)?;
    let report = run_pipeline(&world).map_err(runtime_err)?;
    for m in &report.methods {
        println!("== {} ==", m.method);
        print!("{}", m.report.render_table());
    }
    if report.failed_trials > 0 {
        println!("note: {} trials failed discovery or DSP", report.failed_trials);
    }
    fs::write(
        out.join("report.json"),
        serde_json::to_string_pretty(&report).expect("json") + "\n",
    )
    .map_err(runtime_err)?;
    write_manifest(out, &scenario, "pipeline")?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    scenario_path: &Path,
    axis: &str,
    values: &str,
    seeds: usize,
    metric: &str,
    out: &Path,
    seed: Option<u64>,
) -> Result<(), CliError> {
    let scenario = load_scenario(scenario_path, seed)?;
    let axis: SweepAxis = axis.parse().map_err(CliError::Config)?;
    let values: Vec<f64> = values
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|e| CliError::Config(format!("bad axis value '{v}': {e}")))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(CliError::Config("no axis values".into()));
    }
    ensure_dir(out)?;
    let records = match metric {
        "nmse" => run_nmse_bench(&scenario, axis, &values, seeds).map_err(runtime_err)?,
        "accuracy" => run_accuracy_bench(&scenario, axis, &values).map_err(runtime_err)?,
        other => return Err(CliError::Config(format!("unknown metric '{other}'"))),
    };
    let path = out.join(format!("bench_{}_{metric}.csv", axis.as_str()));
    let mut f = BufWriter::new(fs::File::create(&path).map_err(runtime_err)?);
    pipeline::write_bench_csv(&records, &mut f).map_err(runtime_err)?;
    write_manifest(out, &scenario, "bench")?;
    println!("{} records -> {}", records.len(), path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth {
            scenario,
            out,
            seed,
            trial,
            gesture,
        } => cmd_synth(&scenario, &out, seed, trial, gesture),
        Command::Estimate {
            capture,
            scenario,
            method,
            out,
        } => cmd_estimate(&capture, &scenario, &method, &out),
        Command::Dsp {
            csi,
            reference,
            source,
            stream,
            select,
            window_s,
            step_s,
            out,
        } => cmd_dsp(&csi, &reference, &source, stream, select, window_s, step_s, &out),
        Command::Classify {
            track_r1,
            track_r2,
            truth,
        } => cmd_classify(&track_r1, &track_r2, truth),
        Command::Pipeline { scenario, out, seed } => cmd_pipeline(&scenario, &out, seed),
        Command::Bench {
            scenario,
            axis,
            values,
            seeds,
            metric,
            out,
            seed,
        } => cmd_bench(&scenario, &axis, &values, seeds, &metric, &out, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
