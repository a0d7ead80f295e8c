//! Stage orchestration: reduce, synthesize, simulate, compare.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use inertia_core::mrc::{
    assemble_plant, assemble_reference, augment, build_lmi, synthesize_gain, validate_closed_loop, AugmentedSystem,
    BisectionProbe, DelayBounds, GainPair,
};
use inertia_core::sim::{compute_metrics, controller_label, rms_distance, run_scenario, Metrics, SimModels, Trajectory};
use inertia_core::sma::{reduce_turbine, step_fidelity, ReducedWtgModel, TurbineReduction};
use inertia_core::Matrix;
use serde::{Deserialize, Serialize};

use crate::config::{Config, ScenarioSpec};
use crate::error::CliError;
use crate::output;

/// Reduced-versus-full step comparison settings.
pub const FIDELITY_HORIZON: f64 = 5.0;
pub const FIDELITY_DT: f64 = 1e-3;
/// Peak deviation reported as within the expected envelope.
pub const FIDELITY_ENVELOPE: f64 = 0.15;
/// Peak deviation treated as a failed reduction.
pub const FIDELITY_HARD_LIMIT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stages {
    pub reduce: bool,
    pub synthesize: bool,
    pub simulate: bool,
}

impl Stages {
    pub const ALL: Stages = Stages { reduce: true, synthesize: true, simulate: true };

    /// Comma-separated subset of `reduce,synthesize,simulate`.
    pub fn parse(list: &str) -> Result<Stages, CliError> {
        let mut s = Stages { reduce: false, synthesize: false, simulate: false };
        for item in list.split(',').map(str::trim).filter(|x| !x.is_empty()) {
            match item {
                "reduce" => s.reduce = true,
                "synthesize" => s.synthesize = true,
                "simulate" => s.simulate = true,
                other => return Err(CliError::Usage(format!("unknown stage `{other}` (expected reduce, synthesize, simulate)"))),
            }
        }
        if !(s.reduce || s.synthesize || s.simulate) {
            return Err(CliError::Usage("no stages selected".into()));
        }
        Ok(s)
    }

    pub fn names(&self) -> Vec<String> {
        [(self.reduce, "reduce"), (self.synthesize, "synthesize"), (self.simulate, "simulate")]
            .iter()
            .filter(|(on, _)| *on)
            .map(|(_, n)| n.to_string())
            .collect()
    }
}

#[derive(Clone, Debug, Default)]
pub struct PipelineOptions {
    pub stages: Option<Stages>,
    /// Imported gain and where it came from; skips synthesis.
    pub gain: Option<(GainPair, String)>,
    pub out_dir: Option<PathBuf>,
    /// Scenario names to run; empty means all.
    pub scenarios: Vec<String>,
    pub compare: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionSummary {
    pub v_wind: f64,
    pub omega_m_eq: f64,
    pub u_eq: f64,
    pub lambda_r: f64,
    pub a_rd: f64,
    pub b_rd: f64,
    pub c_rd: f64,
    pub d_rd: f64,
    pub step_fidelity_peak: f64,
    pub step_fidelity_envelope: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSummary {
    pub gamma: f64,
    pub gain: Vec<f64>,
    pub margin: f64,
    pub epsilon: f64,
    pub certified: bool,
    pub per_constraint: Vec<(String, f64)>,
    pub p_condition: f64,
    pub probes: Vec<BisectionProbe>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainSummary {
    pub source: String,
    pub values: Vec<f64>,
    pub closed_loop_stable: bool,
    /// Zero-delay closed-loop eigenvalues as `[re, im]`.
    pub closed_loop_eigenvalues: Vec<[f64; 2]>,
    pub dc_tracking_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub name: String,
    pub controller: String,
    pub metrics: Metrics,
    pub csv: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub scenarios: Vec<String>,
    /// RMS of `Δω_d - ω̂` for each scenario.
    pub rms_tracking: Vec<f64>,
    /// RMS distance between the `Δω_d` traces of each pair.
    pub pairwise: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stages: Vec<String>,
    pub delays: DelayBounds,
    pub reduction: Option<ReductionSummary>,
    pub synthesis: Option<SynthesisSummary>,
    pub gain: Option<GainSummary>,
    pub scenarios: Vec<ScenarioReport>,
    pub comparison: Option<ComparisonReport>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
}

pub struct PipelineRun {
    pub report: RunReport,
    pub trajectories: BTreeMap<String, Trajectory>,
}

struct Artifacts<'a> {
    dir: Option<&'a Path>,
    written: Vec<String>,
}

impl Artifacts<'_> {
    fn emit(&mut self, name: &str, write: impl FnOnce(&Path) -> Result<(), CliError>) -> Result<Option<String>, CliError> {
        let Some(dir) = self.dir else { return Ok(None) };
        let path = dir.join(name);
        write(&path)?;
        let shown = path.display().to_string();
        self.written.push(shown.clone());
        Ok(Some(shown))
    }
}

pub fn augmented_system(cfg: &Config, reduced: &ReducedWtgModel) -> Result<AugmentedSystem, CliError> {
    let plant = assemble_plant(&cfg.diesel, reduced, &cfg.base).map_err(CliError::stage("synthesize"))?;
    augment(&plant, &assemble_reference(&cfg.reference), cfg.synthesis.lmi.channel).map_err(CliError::stage("synthesize"))
}

fn selected<'a>(cfg: &'a Config, names: &[String]) -> Result<Vec<&'a ScenarioSpec>, CliError> {
    if names.is_empty() {
        return Ok(cfg.scenarios.iter().collect());
    }
    names
        .iter()
        .map(|n| cfg.scenario(n).ok_or_else(|| CliError::Usage(format!("no scenario named `{n}` in the configuration"))))
        .collect()
}

pub fn run_pipeline(cfg: &Config, opts: &PipelineOptions) -> Result<PipelineRun, CliError> {
    let mut stages = opts.stages.unwrap_or(Stages::ALL);
    if opts.gain.is_some() {
        stages.synthesize = false;
    }
    let scenarios = if stages.simulate { selected(cfg, &opts.scenarios)? } else { Vec::new() };
    if (stages.synthesize || stages.simulate) && !stages.reduce {
        return Err(CliError::Usage("synthesize and simulate need the reduce stage".into()));
    }
    if stages.simulate && !stages.synthesize && opts.gain.is_none() && scenarios.iter().any(|s| s.needs_gain()) {
        return Err(CliError::Usage("simulating an MRC scenario needs a gain: select synthesize or pass --gain-file".into()));
    }
    if let Some(dir) = &opts.out_dir {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.display().to_string(), source })?;
    }
    let mut art = Artifacts { dir: opts.out_dir.as_deref(), written: Vec::new() };
    let mut report = RunReport {
        stages: stages.names(),
        delays: cfg.delays,
        reduction: None,
        synthesis: None,
        gain: None,
        scenarios: Vec::new(),
        comparison: None,
        warnings: Vec::new(),
        artifacts: Vec::new(),
    };
    let mut trajectories = BTreeMap::new();
    let plant = cfg.plant();

    let turbine: Option<TurbineReduction> = if stages.reduce {
        let t = reduce_turbine(&plant, &cfg.reduction).map_err(CliError::stage("reduce"))?;
        let r = t.reduction.reduced;
        let fid = step_fidelity(&t.full, &r, FIDELITY_HORIZON, FIDELITY_DT).map_err(CliError::stage("reduce"))?;
        if fid.peak_deviation > FIDELITY_HARD_LIMIT {
            return Err(CliError::Fidelity { peak: 100.0 * fid.peak_deviation, limit: 100.0 * FIDELITY_HARD_LIMIT });
        }
        if fid.peak_deviation > FIDELITY_ENVELOPE {
            report.warnings.push(format!(
                "reduced step response deviates {:.1}% from the full model (envelope {:.0}%)",
                100.0 * fid.peak_deviation,
                100.0 * FIDELITY_ENVELOPE
            ));
        }
        report.reduction = Some(ReductionSummary {
            v_wind: cfg.reduction.v_wind,
            omega_m_eq: t.equilibrium.x_eq.omega_m,
            u_eq: t.equilibrium.u_eq,
            lambda_r: r.lambda_r,
            a_rd: r.a_rd,
            b_rd: r.b_rd,
            c_rd: r.c_rd,
            d_rd: r.d_rd,
            step_fidelity_peak: fid.peak_deviation,
            step_fidelity_envelope: FIDELITY_ENVELOPE,
        });
        let scalar = |v: f64| Matrix::from_rows(&[&[v]]);
        let (ar, br, cr, dr) = (scalar(r.a_rd), scalar(r.b_rd), scalar(r.c_rd), scalar(r.d_rd));
        art.emit("reduction.txt", |p| {
            output::write_matrix_dump(
                p,
                &[("A", &t.full.a), ("B", &t.full.b), ("C", &t.full.c), ("D", &t.full.d), ("a_rd", &ar), ("b_rd", &br), ("c_rd", &cr), ("d_rd", &dr)],
            )
        })?;
        Some(t)
    } else {
        None
    };

    let mut gains = None;
    if let Some(t) = &turbine {
        let aug = augmented_system(cfg, &t.reduction.reduced)?;
        let source = if let Some((g, origin)) = &opts.gain {
            gains = Some(*g);
            Some(origin.clone())
        } else if stages.synthesize {
            let s = synthesize_gain(&aug, &cfg.delays, &cfg.synthesis).map_err(CliError::stage("synthesize"))?;
            if let Some(w) = &s.warning {
                report.warnings.push(w.clone());
            }
            report.synthesis = Some(SynthesisSummary {
                gamma: s.gamma,
                gain: s.gains.to_vec(),
                margin: s.margin.max_eigenvalue,
                epsilon: s.margin.epsilon,
                certified: s.margin.passes,
                per_constraint: s.margin.per_constraint.clone(),
                p_condition: s.p_condition,
                probes: s.probes.clone(),
            });
            let expr = build_lmi(&aug, s.gamma, &cfg.delays, s.certificate.epsilon, &cfg.synthesis.lmi);
            art.emit("lmi.txt", |p| output::write_lmi_dump(p, &expr))?;
            let vars: Vec<(&str, &Matrix)> = s.certificate.variables.iter().map(|(k, v)| (k.as_str(), v)).collect();
            art.emit("certificate.txt", |p| output::write_matrix_dump(p, &vars))?;
            gains = Some(s.gains);
            Some("synthesized".to_string())
        } else {
            None
        };
        if let (Some(g), Some(source)) = (gains, source) {
            let cl = validate_closed_loop(&aug, &g, None).map_err(CliError::stage("synthesize"))?;
            if !cl.stable {
                report.warnings.push(format!("gain from {source} does not stabilize the zero-delay closed loop"));
            }
            report.gain = Some(GainSummary {
                source,
                values: g.to_vec(),
                closed_loop_stable: cl.stable,
                closed_loop_eigenvalues: cl.eigenvalues.iter().map(|l| [l.re, l.im]).collect(),
                dc_tracking_error: cl.dc_tracking_error,
            });
            art.emit("gain.txt", |p| output::write_gain_file(p, &g))?;
        }
    }

    if stages.simulate {
        let t = turbine.as_ref().expect("reduce stage ran");
        let models = SimModels { params: plant, reduced: t.reduction.reduced, equilibrium: Some(t.equilibrium) };
        let gain = gains.unwrap_or_else(GainPair::zero);
        let runs: Vec<_> = std::thread::scope(|scope| {
            let jobs: Vec<_> = scenarios
                .iter()
                .map(|spec| {
                    let models = &models;
                    scope.spawn(move || {
                        let sc = spec.to_scenario(gain);
                        let traj = run_scenario(&sc, models)?;
                        let metrics = compute_metrics(&traj, &sc)?;
                        Ok::<_, inertia_core::Error>((sc, traj, metrics))
                    })
                })
                .collect();
            jobs.into_iter().map(|j| j.join().expect("scenario thread panicked")).collect()
        });
        for run in runs {
            let (sc, traj, metrics) = run.map_err(CliError::stage("simulate"))?;
            let csv = art.emit(&format!("{}.csv", sc.name), |p| output::write_trajectory_csv(p, &traj))?;
            report.scenarios.push(ScenarioReport { name: sc.name.clone(), controller: controller_label(&sc.controller), metrics, csv });
            trajectories.insert(sc.name, traj);
        }
        let names: Vec<String> = report.scenarios.iter().map(|s| s.name.clone()).collect();
        art.emit("plot.gp", |p| output::write_plot_script(p, &names))?;
        if opts.compare {
            let ordered: Vec<(&str, &Trajectory)> = names.iter().map(|n| (n.as_str(), &trajectories[n])).collect();
            report.comparison = Some(emit_comparison(&ordered, opts.out_dir.as_deref())?);
            if opts.out_dir.is_some() {
                for f in ["comparison.csv", "comparison.txt"] {
                    art.written.push(opts.out_dir.as_ref().unwrap().join(f).display().to_string());
                }
            }
        }
    }

    if let Some(dir) = opts.out_dir.as_deref() {
        let path = dir.join("report.json");
        art.written.push(path.display().to_string());
        report.artifacts = art.written;
        output::write_json(&path, &report)?;
    }
    Ok(PipelineRun { report, trajectories })
}

/// Aligns runs that share one time grid and scores each against its
/// reference trajectory.
pub fn emit_comparison(runs: &[(&str, &Trajectory)], out_dir: Option<&Path>) -> Result<ComparisonReport, CliError> {
    if runs.len() < 2 {
        return Err(CliError::Comparison(format!("need at least two scenario results, got {}", runs.len())));
    }
    let (first, base) = runs[0];
    for (name, t) in &runs[1..] {
        let same = t.time.len() == base.time.len()
            && t.time.iter().zip(&base.time).all(|(a, b)| (a - b).abs() <= 1e-12 * a.abs().max(1.0));
        if !same {
            return Err(CliError::Comparison(format!(
                "time grids of `{first}` and `{name}` differ; run compared scenarios with identical dt and duration"
            )));
        }
    }
    let rms = |a: &[f64], b: &[f64]| rms_distance(a, b).map_err(CliError::stage("compare"));
    let rms_tracking = runs.iter().map(|(_, t)| rms(&t.d_omega_d, &t.omega_hat)).collect::<Result<Vec<_>, _>>()?;
    let pairwise = runs
        .iter()
        .map(|(_, a)| runs.iter().map(|(_, b)| rms(&a.d_omega_d, &b.d_omega_d)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    let report = ComparisonReport { scenarios: runs.iter().map(|(n, _)| n.to_string()).collect(), rms_tracking, pairwise };

    if let Some(dir) = out_dir {
        let path = dir.join("comparison.csv");
        let csv_err = |e: csv::Error| CliError::Format { path: path.display().to_string(), message: e.to_string() };
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        let mut header = vec!["time".to_string()];
        for (n, _) in runs {
            header.push(format!("d_omega_d[{n}]"));
            header.push(format!("omega_hat[{n}]"));
        }
        w.write_record(&header).map_err(csv_err)?;
        for k in 0..base.time.len() {
            let mut row = vec![base.time[k].to_string()];
            for (_, t) in runs {
                row.push(t.d_omega_d[k].to_string());
                row.push(t.omega_hat[k].to_string());
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|source| CliError::Io { path: path.display().to_string(), source })?;

        let table_path = dir.join("comparison.txt");
        let mut table = String::from("scenario rms(d_omega_d - omega_hat)\n");
        for (n, v) in report.scenarios.iter().zip(&report.rms_tracking) {
            table.push_str(&format!("{n} {v}\n"));
        }
        std::fs::write(&table_path, table).map_err(|source| CliError::Io { path: table_path.display().to_string(), source })?;
    }
    Ok(report)
}
