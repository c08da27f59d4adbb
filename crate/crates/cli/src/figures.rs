//! Desk-scale reproduction of the numerical study: min-entropy rate curves
//! over the round-count grid and the two-expression guessing-probability
//! landscape.
//!
//! Every figure emits plot-ready CSV data plus a gnuplot script; nothing is
//! rendered here. Curves show the first simulation run with a min/max band
//! over the repetitions.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use rayon::prelude::*;

use dirng_core::bell::{
    chsh_variant, expression_set, Behavior, InputDistribution, Scenario, SetKind,
};
use dirng_core::gp::{
    guessing_probability_point, solve_gp_with, EtaMode, GpQuery, GpStatus,
};
use dirng_core::io::campaign_csv;
use dirng_core::npa::build_relaxation;
use dirng_core::protocol::{run_campaign, CampaignConfig, CampaignRow, ExprSpec, PiRule};
use dirng_core::quantum::{extremal_behavior, mix_with_noise};
use dirng_core::{Error, Result};

/// Desk-scale figure options; full-study values are documented on each
/// field.
#[derive(Debug, Clone)]
pub struct FigureOptions {
    /// Points on the log-spaced n grid (full study: dense grid over 10²..3·10¹⁸).
    pub points: usize,
    /// Repetitions per cell (full study: 300).
    pub reps: u32,
    /// Heat-map resolution per axis for the landscape figure.
    pub res: usize,
    pub n_min: f64,
    pub n_max: f64,
    /// Device visibility (full study: 0.99).
    pub visibility: f64,
    pub level: usize,
    pub seed: u64,
}

impl Default for FigureOptions {
    fn default() -> Self {
        FigureOptions {
            points: 12,
            reps: 20,
            res: 41,
            n_min: 1e2,
            n_max: 3e18,
            visibility: 0.99,
            level: 2,
            seed: 20100731,
        }
    }
}

/// The simulated device of the numerical study: tilted-CHSH extremal point at
/// θ = π/8 mixed with white noise.
pub fn study_device(visibility: f64) -> Result<Behavior> {
    mix_with_noise(&extremal_behavior(PI / 8.0)?, visibility)
}

pub fn theta_beta() -> f64 {
    dirng_core::bell::tilted_beta(PI / 8.0)
}

fn log_n_grid(points: usize, n_min: f64, n_max: f64) -> Vec<u64> {
    let lo = n_min.log10();
    let hi = n_max.log10();
    let mut grid: Vec<u64> = (0..points)
        .map(|i| {
            let t = if points == 1 {
                0.0
            } else {
                i as f64 / (points - 1) as f64
            };
            10f64.powf(lo + t * (hi - lo)).round() as u64
        })
        .collect();
    grid.dedup();
    grid
}

/// Certified min-entropy H(p) of the exact behavior for a generating set
/// (the asymptote the estimator curves approach).
pub fn behavior_asymptote(p: &Behavior, gen_inputs: &[usize], level: usize) -> Result<f64> {
    let pi = InputDistribution::uniform(p.scenario().clone());
    let exprs = expression_set(SetKind::Correlators, &pi)?;
    let values: Vec<f64> = exprs.iter().map(|f| f.value(p)).collect::<Result<_>>()?;
    let r = guessing_probability_point(&exprs, &values, gen_inputs, level)?;
    Ok(r.h)
}

/// Certified min-entropy given only one expression's exact value.
pub fn expression_asymptote(
    p: &Behavior,
    expr: &dirng_core::bell::BellExpression,
    gen_inputs: &[usize],
    level: usize,
) -> Result<f64> {
    let value = expr.value(p)?;
    let r = guessing_probability_point(&[expr.clone()], &[value], gen_inputs, level)?;
    Ok(r.h)
}

struct CurveSpec {
    set_name: &'static str,
    spec: ExprSpec,
    xr_name: &'static str,
    xr: Vec<usize>,
}

fn x10(scenario: &Scenario) -> usize {
    scenario.joint_input_index(&[1, 0])
}

fn all_inputs(scenario: &Scenario) -> Vec<usize> {
    (0..scenario.joint_inputs()).collect()
}

fn write(path: &Path, content: &str) -> Result<()> {
    std::fs::write(path, content)?;
    Ok(())
}

fn aggregate_curves(rows: &[CampaignRow]) -> BTreeMap<(String, String), Vec<(u64, f64, f64, f64)>> {
    // (set, xr) → per-n (n, first, min, max)
    let mut acc: BTreeMap<(String, String), BTreeMap<u64, (f64, f64, f64)>> = BTreeMap::new();
    for row in rows {
        if !row.rate.is_finite() {
            continue;
        }
        let entry = acc
            .entry((row.set.clone(), row.xr.clone()))
            .or_default()
            .entry(row.n)
            .or_insert((f64::NAN, f64::INFINITY, f64::NEG_INFINITY));
        if row.repetition == 0 {
            entry.0 = row.rate;
        }
        entry.1 = entry.1.min(row.rate);
        entry.2 = entry.2.max(row.rate);
    }
    acc.into_iter()
        .map(|(key, by_n)| {
            let series = by_n
                .into_iter()
                .map(|(n, (first, min, max))| (n, first, min, max))
                .collect();
            (key, series)
        })
        .collect()
}

fn run_figure_campaign(
    device: &Behavior,
    curves: &[CurveSpec],
    opts: &FigureOptions,
) -> Result<Vec<CampaignRow>> {
    // group curves by xr to honor per-curve pairings
    let mut rows = Vec::new();
    for (group, curve) in curves.iter().enumerate() {
        let campaign = CampaignConfig {
            n_grid: log_n_grid(opts.points, opts.n_min, opts.n_max),
            expression_sets: vec![(curve.set_name.to_string(), curve.spec.clone())],
            xr_choices: vec![(curve.xr_name.to_string(), curve.xr.clone())],
            repetitions: opts.reps,
            pi_rule: PiRule::Biased {
                x_star: x10(device.scenario()),
                delta: 0.2,
                kappa: 1.5,
            },
            epsilon: 1e-6,
            level: opts.level,
            eta_mode: EtaMode::Trivial,
            master_seed: dirng_core::rng::derive_seed(opts.seed, group as u64),
        };
        rows.extend(run_campaign(device, &campaign)?);
    }
    Ok(rows)
}

fn curves_csv(rows: &[CampaignRow]) -> String {
    let mut out = String::from("n,set,xr,rate_first,rate_min,rate_max\n");
    for ((set, xr), series) in aggregate_curves(rows) {
        for (n, first, min, max) in series {
            out.push_str(&format!("{n},{set},{xr},{first},{min},{max}\n"));
        }
    }
    out
}

fn asymptote_csv(entries: &[(&str, f64)]) -> String {
    let mut out = String::from("name,h\n");
    for (name, h) in entries {
        out.push_str(&format!("{name},{h}\n"));
    }
    out
}

fn rate_plot_script(figure: &str, curves: &[(&str, &str)], asymptotes: &[&str]) -> String {
    let mut gp = format!(
        "# gnuplot script for {figure}: min-entropy rate vs rounds\n\
         set datafile separator ','\n\
         set logscale x\n\
         set xlabel 'rounds n'\n\
         set ylabel 'min-entropy rate (bits/round)'\n\
         set yrange [0:*]\n\
         set key bottom right\n"
    );
    let mut plots: Vec<String> = Vec::new();
    for (set, xr) in curves {
        let data = format!("{figure}_curves.csv");
        let filter = format!(
            "\"< awk -F, 'NR==1 || ($2==\\\"{set}\\\" && $3==\\\"{xr}\\\")' {data}\""
        );
        plots.push(format!(
            "{filter} using 1:5:6 with filledcurves fc rgb '#dddddd' notitle"
        ));
        plots.push(format!(
            "{filter} using 1:4 with linespoints title '{set} ({xr})'"
        ));
    }
    for name in asymptotes {
        let filter = format!(
            "\"< awk -F, '$1==\\\"{name}\\\"' {figure}_asymptotes.csv\""
        );
        plots.push(format!(
            "{filter} using (1e2):2 with lines dt 2 title '{name}'"
        ));
    }
    gp.push_str(&format!("plot {}\n", plots.join(", \\\n     ")));
    gp
}

fn rate_figure(
    figure: &str,
    curves: Vec<CurveSpec>,
    asymptotes: Vec<(&str, f64)>,
    device: &Behavior,
    opts: &FigureOptions,
    out_dir: &Path,
) -> Result<()> {
    let rows = run_figure_campaign(device, &curves, opts)?;
    write(&out_dir.join(format!("{figure}_rates.csv")), &campaign_csv(&rows))?;
    write(&out_dir.join(format!("{figure}_curves.csv")), &curves_csv(&rows))?;
    write(
        &out_dir.join(format!("{figure}_asymptotes.csv")),
        &asymptote_csv(&asymptotes),
    )?;
    let curve_keys: Vec<(&str, &str)> = curves
        .iter()
        .map(|c| (c.set_name, c.xr_name))
        .collect();
    let names: Vec<&str> = asymptotes.iter().map(|&(n, _)| n).collect();
    write(
        &out_dir.join(format!("{figure}.gp")),
        &rate_plot_script(figure, &curve_keys, &names),
    )?;
    Ok(())
}

/// Rate curves with the full generating set (single-expression estimators).
pub fn figure1(opts: &FigureOptions, out_dir: &Path) -> Result<()> {
    let device = study_device(opts.visibility)?;
    let sc = device.scenario().clone();
    let all = all_inputs(&sc);
    let x10v = vec![x10(&sc)];
    let curves = vec![
        CurveSpec {
            set_name: "chsh",
            spec: ExprSpec::Chsh,
            xr_name: "all",
            xr: all.clone(),
        },
        CurveSpec {
            set_name: "tilted",
            spec: ExprSpec::TiltedChsh { beta: theta_beta() },
            xr_name: "all",
            xr: all.clone(),
        },
        CurveSpec {
            set_name: "opt_all",
            spec: ExprSpec::Optimal {
                gen_inputs: all.clone(),
            },
            xr_name: "all",
            xr: all.clone(),
        },
    ];
    let tilted = dirng_core::bell::tilted_chsh(&sc, theta_beta())?;
    let asymptotes = vec![
        ("H_p_all", behavior_asymptote(&device, &all, opts.level)?),
        ("H_p_x10", behavior_asymptote(&device, &x10v, opts.level)?),
        (
            "H_tilted_all",
            expression_asymptote(&device, &tilted, &all, opts.level)?,
        ),
    ];
    rate_figure("figure1", curves, asymptotes, &device, opts, out_dir)
}

/// Restricted generating set vs full set, plus the penalty term.
pub fn figure2(opts: &FigureOptions, out_dir: &Path) -> Result<()> {
    let device = study_device(opts.visibility)?;
    let sc = device.scenario().clone();
    let all = all_inputs(&sc);
    let x10v = vec![x10(&sc)];
    let curves = vec![
        CurveSpec {
            set_name: "chsh",
            spec: ExprSpec::Chsh,
            xr_name: "all",
            xr: all.clone(),
        },
        CurveSpec {
            set_name: "opt_all",
            spec: ExprSpec::Optimal {
                gen_inputs: all.clone(),
            },
            xr_name: "all",
            xr: all.clone(),
        },
        CurveSpec {
            set_name: "tilted",
            spec: ExprSpec::TiltedChsh { beta: theta_beta() },
            xr_name: "x10",
            xr: x10v.clone(),
        },
        CurveSpec {
            set_name: "opt_x10",
            spec: ExprSpec::Optimal {
                gen_inputs: x10v.clone(),
            },
            xr_name: "x10",
            xr: x10v.clone(),
        },
    ];
    let tilted = dirng_core::bell::tilted_chsh(&sc, theta_beta())?;
    let asymptotes = vec![
        ("H_p_all", behavior_asymptote(&device, &all, opts.level)?),
        ("H_p_x10", behavior_asymptote(&device, &x10v, opts.level)?),
        (
            "H_tilted_x10",
            expression_asymptote(&device, &tilted, &x10v, opts.level)?,
        ),
    ];
    rate_figure("figure2", curves, asymptotes, &device, opts, out_dir)?;
    // penalty term ν·η/n is h_of_v − rate; emit it explicitly for the top panel
    let rows_text = std::fs::read_to_string(out_dir.join("figure2_rates.csv"))?;
    let mut penalty = String::from("n,xr,penalty_first\n");
    for line in rows_text.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() >= 10 && cols[3] == "0" {
            let h: f64 = cols[5].parse().unwrap_or(f64::NAN);
            let rate: f64 = cols[8].parse().unwrap_or(f64::NAN);
            penalty.push_str(&format!("{},{},{}\n", cols[0], cols[2], h - rate));
        }
    }
    write(&out_dir.join("figure2_penalty.csv"), &penalty)?;
    Ok(())
}

/// Single expressions vs the full 8-expression set.
pub fn figure4(opts: &FigureOptions, out_dir: &Path) -> Result<()> {
    let device = study_device(opts.visibility)?;
    let sc = device.scenario().clone();
    let all = all_inputs(&sc);
    let x10v = vec![x10(&sc)];
    let curves = vec![
        CurveSpec {
            set_name: "chsh",
            spec: ExprSpec::Chsh,
            xr_name: "all",
            xr: all.clone(),
        },
        CurveSpec {
            set_name: "h_set",
            spec: ExprSpec::Set {
                set: SetKind::MarginalsAndChsh,
            },
            xr_name: "all",
            xr: all.clone(),
        },
        CurveSpec {
            set_name: "opt_x10",
            spec: ExprSpec::Optimal {
                gen_inputs: x10v.clone(),
            },
            xr_name: "x10",
            xr: x10v.clone(),
        },
        CurveSpec {
            set_name: "h_set",
            spec: ExprSpec::Set {
                set: SetKind::MarginalsAndChsh,
            },
            xr_name: "x10",
            xr: x10v.clone(),
        },
    ];
    let asymptotes = vec![
        ("H_p_all", behavior_asymptote(&device, &all, opts.level)?),
        ("H_p_x10", behavior_asymptote(&device, &x10v, opts.level)?),
    ];
    rate_figure("figure4", curves, asymptotes, &device, opts, out_dir)
}

/// The three asymptotically equivalent estimator sets.
pub fn figure5(opts: &FigureOptions, out_dir: &Path) -> Result<()> {
    let device = study_device(opts.visibility)?;
    let sc = device.scenario().clone();
    let x10v = vec![x10(&sc)];
    let curves = vec![
        CurveSpec {
            set_name: "e_set",
            spec: ExprSpec::Set {
                set: SetKind::Probabilities,
            },
            xr_name: "x10",
            xr: x10v.clone(),
        },
        CurveSpec {
            set_name: "g_set",
            spec: ExprSpec::Set {
                set: SetKind::Correlators,
            },
            xr_name: "x10",
            xr: x10v.clone(),
        },
        CurveSpec {
            set_name: "h_set",
            spec: ExprSpec::Set {
                set: SetKind::MarginalsAndChsh,
            },
            xr_name: "x10",
            xr: x10v.clone(),
        },
    ];
    let asymptotes = vec![(
        "H_p_x10",
        behavior_asymptote(&device, &x10v, opts.level)?,
    )];
    rate_figure("figure5", curves, asymptotes, &device, opts, out_dir)
}

/// Guessing-probability landscape over two CHSH permutations, generating
/// input fixed to (0,0). Values round to 1e-6 in the CSV so the file is
/// byte-stable.
pub fn figure6(opts: &FigureOptions, out_dir: &Path) -> Result<()> {
    let sc = Scenario::chsh();
    let f1 = chsh_variant(&sc, 0, 0)?;
    let f2 = chsh_variant(&sc, 0, 1)?;
    let xr = vec![sc.joint_input_index(&[0, 0])];
    let structure = build_relaxation(&sc, opts.level)?;
    let res = opts.res.max(2);
    let lim = 2.0 * 2.0f64.sqrt();
    let coords: Vec<(usize, usize)> = (0..res)
        .flat_map(|i| (0..res).map(move |j| (i, j)))
        .collect();
    let cells: Vec<(f64, f64, f64, GpStatus)> = coords
        .par_iter()
        .map(|&(i, j)| {
            let v1 = -lim + 2.0 * lim * i as f64 / (res - 1) as f64;
            let v2 = -lim + 2.0 * lim * j as f64 / (res - 1) as f64;
            let query = GpQuery::point(
                vec![f1.clone(), f2.clone()],
                &[v1, v2],
                xr.clone(),
                opts.level,
            )
            .expect("grid query");
            match solve_gp_with(&structure, &query) {
                Ok(r) => (v1, v2, r.g, r.status),
                Err(_) => (v1, v2, 1.0, GpStatus::NumericalFailure),
            }
        })
        .collect();
    let mut csv = String::from("f1,f2,g,status\n");
    for (v1, v2, g, status) in &cells {
        let label = match status {
            GpStatus::Optimal => "optimal",
            GpStatus::InfeasiblePrimal => "infeasible",
            GpStatus::NumericalFailure => "numerical_failure",
        };
        csv.push_str(&format!("{v1:.6},{v2:.6},{g:.6},{label}\n"));
    }
    write(&out_dir.join("figure6_grid.csv"), &csv)?;
    let gp = "# gnuplot script for figure6: guessing-probability landscape\n\
        set datafile separator ','\n\
        set xlabel 'chsh[00] value'\n\
        set ylabel 'chsh[01] value'\n\
        set cblabel 'guessing probability'\n\
        set size square\n\
        set palette rgb 33,13,10\n\
        plot 'figure6_grid.csv' every ::1 using 1:2:3 with image notitle\n";
    write(&out_dir.join("figure6.gp"), gp)?;
    Ok(())
}

/// Dispatch by figure id.
pub fn run_figure(id: u32, opts: &FigureOptions, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    match id {
        1 => figure1(opts, out_dir),
        2 => figure2(opts, out_dir),
        4 => figure4(opts, out_dir),
        5 => figure5(opts, out_dir),
        6 => figure6(opts, out_dir),
        other => Err(Error::invalid(format!("unknown figure id {other}"))),
    }
}
