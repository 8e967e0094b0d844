use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use serde::Serialize;

use sdamh::benchmark::{
    amh_benchmark_params, antithetic_study, check_antithetic, check_filter, check_impact, check_init, check_recovery,
    filter_study, filter_study_params, impact_params, impact_study, init_study, recovery_study, recovery_params, Check,
    FilterMethod, FILTER_SIGMA, INIT_SIGMA,
};
use sdamh::diagnostics::{bic, diagnose};
use sdamh::estimate::{filter, fit_with, FilterState, FitOptions, InitSearchSpec, ParamLayout};
use sdamh::impact::{beta_regression, beta_sign_empirical, model_impact_series, Bin, ImpactWindow, WindowLayout};
use sdamh::io::{fmt_f64, load_lobster, load_trades_csv, save_trades_csv, IngestFormat, IngestSpec};
use sdamh::irf::{cirf_at, fit_exponential, write_cirf_csv, CirfOptions};
use sdamh::simulate::{scenario_path, simulate, Ar1Spec, ScenarioKind, ScenarioPath, ShockStream, SimOptions};
use sdamh::{AggregationSpec, LagSpec, SeriesStats, StaticParams, TickSeries};

use crate::config::{BinSpec, RunConfig};
use crate::exit;

pub fn run(name: &str, cfg: &RunConfig) -> Result<u8> {
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    fs::write(cfg.out_dir.join("config.txt"), cfg.to_text())?;
    match name {
        "simulate" => simulate_cmd(cfg),
        "fit" => fit_cmd(cfg),
        "filter" => filter_cmd(cfg),
        "irf" => irf_cmd(cfg),
        "impact" => impact_cmd(cfg),
        "diagnose" => diagnose_cmd(cfg),
        "benchmark" => benchmark_cmd(cfg),
        _ => unreachable!("clap only accepts known subcommands"),
    }
}

fn lags(cfg: &RunConfig, p: &StaticParams) -> Result<LagSpec> {
    Ok(match p.lags {
        LagSpec::Aggregated(a) => LagSpec::Aggregated(AggregationSpec {
            l1: cfg.l1,
            l2: cfg.l2,
            ..a
        }),
        raw => raw,
    })
}

/// Parameters from a preset name or a JSON file holding either a parameter
/// set or a fit report.
fn load_params(cfg: &RunConfig) -> Result<StaticParams> {
    let mut p = match cfg.params.as_str() {
        "recovery" => recovery_params(),
        "impact" => impact_params(),
        "amh" => amh_benchmark_params(),
        "filter-study" => filter_study_params(FILTER_SIGMA),
        path => {
            let text = fs::read_to_string(path).with_context(|| format!("reading parameters from {path}"))?;
            let mut v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {path}"))?;
            if let Some(inner) = v.get_mut("params") {
                v = inner.take();
            }
            serde_json::from_value(v).with_context(|| format!("{path} does not hold a parameter set"))?
        }
    };
    p.lags = lags(cfg, &p)?;
    p.validate()?;
    Ok(p)
}

fn ingest(cfg: &RunConfig) -> Result<TickSeries> {
    let Some(input) = &cfg.input else {
        bail!(sdamh::Error::InvalidArgument("this command needs --input".into()));
    };
    let series = match cfg.format {
        IngestFormat::TradesCsv => {
            let spec = IngestSpec {
                sign_rule: cfg.sign_rule,
                log_returns: cfg.log_returns,
                ..IngestSpec::default()
            };
            load_trades_csv(input, &spec).with_context(|| format!("reading {}", input.display()))?
        }
        IngestFormat::LobsterPair => {
            let ob = cfg.orderbook.as_ref().expect("validated with the configuration");
            load_lobster(input, ob, cfg.log_returns)
                .with_context(|| format!("reading {} and {}", input.display(), ob.display()))?
        }
    };
    let stats = SeriesStats::compute(&series);
    println!(
        "{:>8} {:>12} {:>12} {:>8} {:>8} {:>7} {:>10}",
        "trades", "mean r", "std r", "skew", "kurt", "% buy", "duration"
    );
    println!(
        "{:>8} {:>12.4e} {:>12.4e} {:>8.3} {:>8.3} {:>7.2} {:>10}",
        stats.n,
        stats.mean,
        stats.std,
        stats.skew,
        stats.excess_kurtosis,
        stats.pct_buy,
        stats.mean_duration.map_or("-".into(), |d| format!("{d:.3}"))
    );
    write_json(&cfg.out_dir.join("stats.json"), &stats)?;
    Ok(series)
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut f, v)?;
    writeln!(f)?;
    Ok(())
}

fn csv_writer(cfg: &RunConfig, name: &str) -> Result<BufWriter<File>> {
    let path = cfg.out_dir.join(name);
    Ok(BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?))
}

/// Filtered path for score-driven variants (the recursion starts at `b0`).
fn run_filter(series: &TickSeries, p: &StaticParams) -> Result<FilterState> {
    Ok(filter(series, p, p.b0)?)
}

fn simulate_cmd(cfg: &RunConfig) -> Result<u8> {
    // the parameter set carries its own variant
    let p = load_params(cfg)?;
    let kind = cfg.scenario.unwrap_or(if p.variant.is_score_driven() {
        ScenarioKind::ScoreDriven
    } else {
        ScenarioKind::Constant
    });
    let scen = match kind {
        ScenarioKind::ScoreDriven => ScenarioPath::score_driven(),
        ScenarioKind::Constant => ScenarioPath::constant(),
        k => scenario_path(k, cfg.t_len)?,
    };
    let shocks = ShockStream::generate(cfg.seed, cfg.t_len);
    let sim = simulate(&p, &scen, cfg.t_len, &shocks, &SimOptions::default())?;
    save_trades_csv(&cfg.out_dir.join("trades.csv"), &sim.series)?;
    let mut w = csv::Writer::from_writer(csv_writer(cfg, "path.csv")?);
    w.write_record(["t", "b0", "pi", "state"])?;
    for i in 0..sim.b0.len() {
        w.write_record([i.to_string(), fmt_f64(sim.b0[i]), fmt_f64(sim.pi[i]), fmt_f64(sim.state[i])])?;
    }
    w.flush()?;
    write_json(&cfg.out_dir.join("params.json"), &p)?;
    println!("simulated {} trades of {} ({kind})", sim.series.len(), p.variant);
    Ok(0)
}

fn fit_cmd(cfg: &RunConfig) -> Result<u8> {
    let series = ingest(cfg)?;
    let template = StaticParams::zeros(cfg.variant);
    let opts = FitOptions {
        init: InitSearchSpec {
            n_draws: cfg.n_draws,
            seed: cfg.init_seed,
            ..InitSearchSpec::default()
        },
        standard_errors: cfg.standard_errors,
        lags: Some(lags(cfg, &template)?),
        ..FitOptions::default()
    };
    let (est, f, report) = fit_with(&series, cfg.variant, &opts)?;
    write_json(&cfg.out_dir.join("fit.json"), &report)?;
    write_json(&cfg.out_dir.join("params.json"), &est)?;
    write_filter_csv(cfg, &f)?;
    println!(
        "{} fit ({}): loglik {} over {} observations, {} parameters, converged {}",
        report.variant,
        report.method,
        fmt_f64(report.loglik),
        report.n_obs,
        report.n_params,
        report.converged
    );
    println!("{:<10} {:>24} {:>24}", "parameter", "estimate", "std error");
    for e in &report.estimates {
        println!("{:<10} {:>24} {:>24}", e.name, fmt_f64(e.value), fmt_f64(e.std_error));
    }
    Ok(0)
}

fn write_filter_csv(cfg: &RunConfig, f: &FilterState) -> Result<()> {
    let mut w = csv::Writer::from_writer(csv_writer(cfg, "filter.csv")?);
    w.write_record(["t", "b0", "state", "pi", "score", "loglik"])?;
    for i in 0..f.b0_path.len() {
        w.write_record([
            (f.start + i).to_string(),
            fmt_f64(f.b0_path[i]),
            fmt_f64(f.state[i]),
            fmt_f64(f.pi[i]),
            fmt_f64(f.scores.get(i).copied().unwrap_or(f64::NAN)),
            fmt_f64(f.loglik.per_obs[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FilterSummary {
    loglik: f64,
    n_obs: usize,
    clamped: usize,
    b0_init: f64,
    b0_next: f64,
}

fn filter_cmd(cfg: &RunConfig) -> Result<u8> {
    let series = ingest(cfg)?;
    let p = load_params(cfg)?;
    let f = run_filter(&series, &p)?;
    write_filter_csv(cfg, &f)?;
    let summary = FilterSummary {
        loglik: f.loglik.total,
        n_obs: f.loglik.n_obs,
        clamped: f.loglik.clamped,
        b0_init: f.b0_init,
        b0_next: f.b0_next,
    };
    write_json(&cfg.out_dir.join("filter.json"), &summary)?;
    println!("loglik {} over {} observations; next impact {}", fmt_f64(f.loglik.total), f.loglik.n_obs, fmt_f64(f.b0_next));
    Ok(0)
}

fn irf_cmd(cfg: &RunConfig) -> Result<u8> {
    let series = ingest(cfg)?;
    let p = load_params(cfg)?;
    let f = run_filter(&series, &p)?;
    let opts = CirfOptions {
        horizon: cfg.horizon,
        n_sim: cfg.n_sim,
        delta_x: cfg.delta_x,
        antithetic: cfg.antithetic,
        pairing: cfg.pairing,
        seed: cfg.seed,
    };
    let first = cfg.irf_start.max(p.lags.warmup());
    let ts: Vec<usize> = (first..series.len()).step_by(cfg.thin).collect();
    if ts.is_empty() {
        bail!(sdamh::Error::InsufficientHistory {
            t: series.len(),
            required: first + 1
        });
    }
    info!("computing {} impulse responses", ts.len());
    let results = ts
        .iter()
        .map(|&t| cirf_at(&series, &p, Some(&f), t, &opts))
        .collect::<sdamh::Result<Vec<_>>>()?;
    write_cirf_csv(csv_writer(cfg, "cirf.csv")?, &results)?;
    let mut w = csv::Writer::from_writer(csv_writer(cfg, "lrcirf.csv")?);
    w.write_record(["t", "lrcirf", "mc_std", "b0", "state", "c", "kappa", "phi"])?;
    for r in &results {
        let exp = fit_exponential(&r.cirf).ok();
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        w.write_record([
            r.t.to_string(),
            fmt_f64(r.lrcirf),
            fmt_f64(r.lrcirf_std()),
            fmt_f64(r.b0),
            opt(f.state_at(r.t)),
            opt(exp.as_ref().map(|e| e.c)),
            opt(exp.as_ref().map(|e| e.kappa)),
            opt(exp.as_ref().map(|e| e.phi)),
        ])?;
    }
    w.flush()?;
    let mean = results.iter().map(|r| r.lrcirf).sum::<f64>() / results.len() as f64;
    println!("{} conditioning trades, mean long-run CIRF {}", results.len(), fmt_f64(mean));
    Ok(0)
}

fn impact_cmd(cfg: &RunConfig) -> Result<u8> {
    let series = ingest(cfg)?;
    let p = load_params(cfg)?;
    let f = run_filter(&series, &p)?;
    let m = cfg.impact_m;
    let model = model_impact_series(&p, Some(&f), None, &series, m, WindowLayout::default())?;
    let mut rows = model.estimates.clone();
    for e in &model.estimates {
        if let Ok(emp) = beta_sign_empirical(&series, ImpactWindow::new(m, e.t)?) {
            rows.push(emp);
        }
    }
    let bin = match cfg.bin {
        BinSpec::Trades => Bin::Trades(m),
        BinSpec::Seconds(s) => Bin::Seconds(s),
    };
    let reg = beta_regression(&series, bin)?;
    rows.push(reg.estimate(series.len()));
    sdamh::impact::write_impact_csv(csv_writer(cfg, "impact.csv")?, &rows)?;
    println!(
        "model impact: mean {} over {} windows ({} balanced windows skipped)",
        fmt_f64(model.mean()),
        model.estimates.len(),
        model.skipped
    );
    println!(
        "regression impact: {} (se {}, {} bins)",
        fmt_f64(reg.slope),
        fmt_f64(reg.se),
        reg.n_bins
    );
    Ok(0)
}

#[derive(Serialize)]
struct DiagnoseOutput {
    variant: sdamh::Variant,
    diagnostics: sdamh::diagnostics::DiagnosticsReport,
    score: sdamh::diagnostics::ModelScore,
}

fn diagnose_cmd(cfg: &RunConfig) -> Result<u8> {
    let series = ingest(cfg)?;
    let p = load_params(cfg)?;
    let f = run_filter(&series, &p)?;
    let report = diagnose(&series, &p, &f, cfg.quantile_seed)?;
    let score = bic(ParamLayout::new(&p).len(), f.loglik.n_obs, f.loglik.total, cfg.bic)?;
    println!("JB p-value: returns {:.4}, trades {:.4}", report.jb_return_p, report.jb_trade_p);
    println!("LM suite: {}/{} lags pass", report.lm_pass_count, report.lm_lags.len());
    println!("BIC ({:?} convention): {}", score.convention, fmt_f64(score.bic));
    write_json(
        &cfg.out_dir.join("diagnostics.json"),
        &DiagnoseOutput {
            variant: p.variant,
            diagnostics: report,
            score,
        },
    )?;
    Ok(0)
}

fn benchmark_cmd(cfg: &RunConfig) -> Result<u8> {
    let mut checks: Vec<Check> = Vec::new();
    let mut studies = serde_json::Map::new();
    let (t, s, seed, draws) = (cfg.t_len, cfg.reps, cfg.seed, cfg.bench_draws);
    for suite in &cfg.suite {
        info!("running the {suite} benchmark");
        let value = match suite.as_str() {
            "recovery" => {
                let st = recovery_study(&recovery_params(), t, s, seed, draws)?;
                checks.extend(check_recovery(&st));
                serde_json::to_value(st)?
            }
            "filter" => {
                let mut ts = vec![1_000, t];
                ts.dedup();
                ts.retain(|&v| v <= t);
                let st = filter_study(
                    &cfg.scenarios,
                    &ts,
                    s,
                    seed,
                    FILTER_SIGMA,
                    &Ar1Spec::default(),
                    FilterMethod::Fit { draws },
                )?;
                print_filter_table(&st);
                checks.extend(check_filter(&st));
                serde_json::to_value(st)?
            }
            "init" => {
                let mut p = recovery_params();
                p.sigma2 = INIT_SIGMA * INIT_SIGMA;
                let st = init_study(&p, t, s, seed)?;
                checks.extend(check_init(&st));
                serde_json::to_value(st)?
            }
            "impact" => {
                let st = impact_study(&impact_params(), t, s, cfg.impact_m, seed, draws)?;
                checks.extend(check_impact(&st));
                serde_json::to_value(st)?
            }
            "antithetic" => {
                let st = antithetic_study(&amh_benchmark_params(), cfg.n_sim, 20, cfg.pairing, seed)?;
                checks.extend(check_antithetic(&st));
                serde_json::to_value(st)?
            }
            other => unreachable!("suite `{other}` passed validation"),
        };
        studies.insert(suite.clone(), value);
    }
    studies.insert("checks".into(), serde_json::to_value(&checks)?);
    write_json(&cfg.out_dir.join("benchmark.json"), &studies)?;

    println!("{:<11} {:<34} {:>14} {:>26}  result", "suite", "check", "value", "target");
    for c in &checks {
        println!(
            "{:<11} {:<34} {:>14.5e} {:>26}  {}",
            c.suite,
            c.item,
            c.value,
            c.target,
            if c.pass { "PASS" } else { "FAIL" }
        );
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!("{} of {} checks passed", checks.len() - failed, checks.len());
    Ok(if failed == 0 { 0 } else { exit::BENCHMARK })
}

/// MAE* by scenario (rows) and sample size (columns).
fn print_filter_table(st: &sdamh::benchmark::FilterStudy) {
    let mut ts: Vec<usize> = st.rows.iter().map(|r| r.t_len).collect();
    ts.sort_unstable();
    ts.dedup();
    print!("{:<12}", "MAE*");
    for t in &ts {
        print!(" {:>12}", format!("T={t}"));
    }
    println!();
    let mut kinds: Vec<ScenarioKind> = st.rows.iter().map(|r| r.scenario).collect();
    kinds.dedup();
    for k in kinds {
        print!("{:<12}", k.name());
        for t in &ts {
            let v = st.rows.iter().find(|r| r.scenario == k && r.t_len == *t).map(|r| r.mae_star.mean);
            print!(" {:>12}", v.map_or("-".into(), |v| format!("{v:.4}")));
        }
        println!();
    }
}
