//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{data_path, gradient_check, random_model_and_data, read_json};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use solvability::active::{score, top_b, AcquisitionStrategy};
use solvability::harness::{
    audit_boundary, export_boundary_grid, load_case, run_experiment, ExperimentConfig, ExperimentKind,
    ExperimentReport,
};
use solvability::mlp::Posterior;
use solvability::powerflow::{label, solve_newton, PfConfig, SolvabilityLabel};
use solvability::sampling::{Distribution, FeatureSlot, Quantity, SamplingSpec};

const TWO_BUS_X: f64 = 0.1;
const BAND: f64 = 0.05;
const PF_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-5;
const MARGIN_LABEL_BUDGET: f64 = 250.0;
const AUDIT_POINTS: usize = 400;
const AUDIT_MIN: f64 = 0.94;
const MIN_WINNING_ITERS: usize = 7;
const MIN_FINAL_GAIN: f64 = 0.02;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, elapsed: Duration, o: &Outcome) {
    println!(
        "criterion {n} {name}: {} ({:.2} s) {}",
        if o.pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64(),
        o.detail
    );
}

fn timed<F: FnOnce() -> Outcome>(limit: Duration, f: F) -> (Outcome, Duration) {
    let t = Instant::now();
    let mut o = f();
    let dt = t.elapsed();
    if dt > limit {
        o.pass = false;
        o.detail.push_str(&format!("; over time limit {:.0} s", limit.as_secs_f64()));
    }
    (o, dt)
}

fn analytic_two_bus() -> Outcome {
    let net = load_case(&data_path("two_bus.m")).unwrap();
    let spec = SamplingSpec::new(
        1,
        vec![FeatureSlot {
            quantity: Quantity::LoadP,
            element: 0,
            bus_id: 2,
            dist: Distribution::Uniform { lo: 0.0, hi: 1000.0 },
        }],
    )
    .unwrap();
    let nose = 1.0 / (2.0 * TWO_BUS_X);
    // 100 points on each side of the band.
    let below = (0..100).map(|i| (nose - BAND) * i as f64 / 100.0);
    let above = (0..100).map(|i| nose + BAND + (10.0 - nose - BAND) * (i + 1) as f64 / 100.0);
    let points: Vec<f64> = below.chain(above).collect();
    let cfg = PfConfig::default();
    let mut wrong = Vec::new();
    for &p in &points {
        let disc = 1.0 - 4.0 * (p * TWO_BUS_X).powi(2);
        let expect = if disc >= 0.0 { SolvabilityLabel::Solvable } else { SolvabilityLabel::NonSolvable };
        let got = label(&net, &spec, &[p * net.base_mva], &cfg).unwrap();
        if got != expect {
            wrong.push(p);
        }
    }
    Outcome {
        pass: points.len() == 200 && wrong.is_empty(),
        detail: format!("{} of {} points agree, mismatches at {:?}", points.len() - wrong.len(), points.len(), wrong),
    }
}

fn case39_power_flow() -> Outcome {
    let net = load_case(&data_path("case39.m")).unwrap();
    let mut worst_v = 0.0f64;
    let mut worst_a = 0.0f64;
    let mut converged = true;
    for (q_limits, key) in [(false, "no_q_limits"), (true, "q_limits")] {
        let sol = solve_newton(
            &net,
            &PfConfig {
                enforce_q_limits: q_limits,
                ..PfConfig::default()
            },
        )
        .unwrap();
        converged &= sol.converged;
        let r = &read_json("case39_pf_reference.json")[key];
        for k in 0..net.n_buses() {
            worst_v = worst_v.max((sol.v_mag[k] - r["vm"][k].as_f64().unwrap()).abs());
            worst_a = worst_a.max((sol.v_ang[k] - r["va_rad"][k].as_f64().unwrap()).abs());
        }
    }
    Outcome {
        pass: converged && worst_v <= PF_TOL && worst_a <= PF_TOL,
        detail: format!("converged {converged}, max |dV| {worst_v:.2e} pu, max |dtheta| {worst_a:.2e} rad"),
    }
}

fn gradient_suite() -> Outcome {
    let errs: Vec<f64> = (0..20)
        .map(|seed| {
            let (model, data) = random_model_and_data(seed);
            gradient_check(&model, &data, FD_STEP)
        })
        .collect();
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    Outcome {
        pass: errs.iter().all(|&e| e < FD_TOL),
        detail: format!("20 models, worst relative error {worst:.2e}"),
    }
}

fn argmax(xs: &[f64]) -> usize {
    top_b(xs, &(0..xs.len()).collect::<Vec<_>>(), 1)[0]
}

fn acquisition_identities() -> Outcome {
    let three = [Posterior([0.9, 0.1]), Posterior([0.6, 0.4]), Posterior([0.2, 0.8])];
    let margin = argmax(&score(AcquisitionStrategy::Margin, &three, 0));
    let lc = argmax(&score(AcquisitionStrategy::LeastConfident, &three, 0));
    let h = score(AcquisitionStrategy::Entropy, &[Posterior([0.5, 0.5])], 0)[0];
    let examples_ok = margin == 1 && lc == 1 && (h - 2f64.ln()).abs() < 1e-15 && (h - 0.693147).abs() < 5e-7;

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut failures = 0;
    for _ in 0..1000 {
        let n = rng.random_range(2..60);
        // Dyadic posteriors keep 1 - p exact, so mirror rows tie exactly.
        let post: Vec<Posterior> = (0..n)
            .map(|_| {
                let p = rng.random_range(0..=4096) as f64 / 4096.0;
                Posterior([1.0 - p, p])
            })
            .collect();
        let b = rng.random_range(1..=n);
        let idx: Vec<usize> = (0..n).collect();
        let picks: Vec<Vec<usize>> = [
            AcquisitionStrategy::LeastConfident,
            AcquisitionStrategy::Margin,
            AcquisitionStrategy::Entropy,
        ]
        .into_iter()
        .map(|s| top_b(&score(s, &post, 0), &idx, b))
        .collect();
        if picks[0] != picks[1] || picks[1] != picks[2] {
            failures += 1;
        }
    }
    Outcome {
        pass: examples_ok && failures == 0,
        detail: format!(
            "margin argmax index {margin}, least-confident argmax index {lc}, entropy(0.5, 0.5) = {h:.6}; \
             {failures} of 1000 random sets rank differently"
        ),
    }
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 { xs[n / 2] } else { (xs[n / 2 - 1] + xs[n / 2]) / 2.0 }
}

fn final_labels(report: &ExperimentReport, s: AcquisitionStrategy) -> Vec<f64> {
    report
        .cells
        .iter()
        .filter(|c| c.strategy == s)
        .filter_map(|c| c.outcome.as_ref().ok())
        .map(|r| r.result.labels_consumed as f64)
        .collect()
}

fn two_d_experiment(report: &ExperimentReport, cfg: &ExperimentConfig) -> Outcome {
    let failed = report.failures().count();
    let m = final_labels(report, AcquisitionStrategy::Margin);
    let r = final_labels(report, AcquisitionStrategy::Random);
    let (mm, mr) = (median(m.clone()), median(r.clone()));

    // Boundary audit of every Margin run that stopped on accuracy.
    let mut audits = Vec::new();
    for cell in report.cells.iter().filter(|c| c.strategy == AcquisitionStrategy::Margin) {
        let Ok(run) = &cell.outcome else { continue };
        if !run.result.stopped_by_accuracy {
            continue;
        }
        let (lo, hi) = cfg.sampling.bounds;
        let grid =
            export_boundary_grid(&run.result.model, &run.normalizer, [(lo, hi), (lo, hi)], cfg.boundary_resolution)
                .unwrap();
        let seed = solvability::seed::derive_seed(cell.seed, "audit", 0);
        audits.push(audit_boundary(&grid, &report.net, &report.spec, &cfg.pf, AUDIT_POINTS, seed).unwrap());
    }
    let worst_audit = audits.iter().cloned().fold(1.0, f64::min);
    Outcome {
        pass: failed == 0 && m.len() == 5 && mm <= MARGIN_LABEL_BUDGET && mm < mr && worst_audit >= AUDIT_MIN,
        detail: format!(
            "margin labels {m:?} median {mm}, random labels {r:?} median {mr}; \
             boundary audit of {} converged margin runs, worst {:.3}",
            audits.len(),
            worst_audit
        ),
    }
}

fn full_experiment(report: &ExperimentReport, cfg: &ExperimentConfig) -> Outcome {
    let failed = report.failures().count();
    let mean = |s: AcquisitionStrategy, k: usize| {
        report
            .aggregates
            .iter()
            .find(|a| a.strategy == s && a.iteration == k)
            .map(|a| (a.mean_test_accuracy, a.mean_undersampled))
    };
    let last = cfg.active.max_iterations;
    let uncertain = [
        AcquisitionStrategy::LeastConfident,
        AcquisitionStrategy::Margin,
        AcquisitionStrategy::Entropy,
    ];
    let mut wins = Vec::new();
    let mut gains = Vec::new();
    let mut balance_ok = true;
    let mut complete = true;
    let Some((rand_final, rand_us)) = mean(AcquisitionStrategy::Random, last) else {
        return Outcome {
            pass: false,
            detail: "random strategy has no final iteration".into(),
        };
    };
    for s in uncertain {
        let mut w = 0;
        for k in 1..=last {
            match (mean(s, k), mean(AcquisitionStrategy::Random, k)) {
                (Some((a, _)), Some((b, _))) if a >= b => w += 1,
                (Some(_), Some(_)) => {}
                _ => complete = false,
            }
        }
        wins.push(w);
        match mean(s, last) {
            Some((acc, us)) => {
                gains.push(acc - rand_final);
                balance_ok &= us >= rand_us;
            }
            None => complete = false,
        }
    }
    let best = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let us: Vec<String> = uncertain
        .iter()
        .filter_map(|&s| mean(s, last).map(|m| format!("{s} {:.1}", m.1)))
        .collect();
    Outcome {
        pass: failed == 0
            && complete
            && wins.iter().all(|&w| w >= MIN_WINNING_ITERS)
            && best >= MIN_FINAL_GAIN
            && balance_ok,
        detail: format!(
            "d = {}; iterations at or above random (lc, margin, entropy) {wins:?} of {last}; \
             best final gain {:+.2} pp; final undersampled {} vs random {rand_us:.1}",
            report.dim,
            100.0 * best,
            us.join(", ")
        ),
    }
}

/// Structural invariants of every cell of a finished experiment.
fn invariant_violations(report: &ExperimentReport, cfg: &ExperimentConfig) -> Vec<String> {
    let mut bad = Vec::new();
    let (init, b) = (cfg.active.initial_size, cfg.active.batch_size);
    for cell in &report.cells {
        let tag = format!("{}_seed{}", cell.strategy, cell.seed);
        let Ok(run) = &cell.outcome else {
            bad.push(format!("{tag} failed"));
            continue;
        };
        let st = &run.result.state;
        let labeled: HashSet<usize> = st.labeled.iter().copied().collect();
        let unlabeled: HashSet<usize> = st.unlabeled().into_iter().collect();
        if labeled.len() != st.labeled.len()
            || !labeled.is_disjoint(&unlabeled)
            || labeled.len() + unlabeled.len() != st.pool_size()
        {
            bad.push(format!("{tag} conservation"));
        }
        for h in &run.result.history {
            if h.labels_consumed != init + h.iteration * b {
                bad.push(format!("{tag} budget at iteration {}", h.iteration));
            }
            let prefix = &st.labels[..h.labels_consumed];
            let sol = prefix.iter().filter(|&&l| l == SolvabilityLabel::Solvable).count();
            if h.undersampled != 2 * sol.min(h.labels_consumed - sol) {
                bad.push(format!("{tag} undersampling at iteration {}", h.iteration));
            }
        }
        let k = run.result.history.len() - 1;
        if run.result.labels_consumed != init + k * b || run.log.len() != run.result.labels_consumed {
            bad.push(format!("{tag} final budget"));
        }
        let log: HashSet<usize> = run.log.iter().map(|a| a.pool_index).collect();
        if log.len() != run.log.len() {
            bad.push(format!("{tag} repeated acquisition"));
        }
        let x = run.normalizer.normalize(&run.log_features);
        for p in run.result.model.posteriors(x.view()).unwrap() {
            if !(p.0[0] > 0.0 && p.0[1] > 0.0 && (p.0[0] + p.0[1] - 1.0).abs() <= 1e-12) {
                bad.push(format!("{tag} posterior {:?}", p.0));
                break;
            }
        }
    }
    bad
}

fn same_bytes(a: &Path, b: &Path) -> Vec<String> {
    let mut files = Vec::new();
    for sub in ["", "acquisitions", "checkpoints", "boundary"] {
        let Ok(entries) = fs::read_dir(a.join(sub)) else { continue };
        for e in entries.flatten() {
            if e.path().is_file() {
                files.push(Path::new(sub).join(e.file_name()));
            }
        }
    }
    files.sort();
    files
        .into_iter()
        .filter(|f| fs::read(a.join(f)).ok() != fs::read(b.join(f)).ok())
        .map(|f| f.display().to_string())
        .collect()
}

fn main() {
    let _ = env_logger::builder().is_test(true).try_init();
    let mut all = true;
    let mut log = |n: usize, name: &str, (o, dt): (Outcome, Duration)| {
        report(n, name, dt, &o);
        all &= o.pass;
    };

    log(1, "analytic two-bus oracle", timed(Duration::from_secs(1), analytic_two_bus));
    log(2, "case39 power flow fidelity", timed(Duration::from_secs(1), case39_power_flow));
    log(3, "gradient suite", timed(Duration::from_secs(30), gradient_suite));
    log(4, "acquisition identities", timed(Duration::from_secs(60), acquisition_identities));

    let dir = tempfile::tempdir().unwrap();
    let mut cfg2 = ExperimentConfig::preset(ExperimentKind::TwoD, data_path("case39.m"));
    cfg2.out_dir = dir.path().join("2d");
    let mut rep2 = None;
    log(
        5,
        "2-D experiment",
        timed(Duration::from_secs(600), || {
            let r = run_experiment(&cfg2).unwrap();
            let o = two_d_experiment(&r, &cfg2);
            rep2 = Some(r);
            o
        }),
    );

    let mut cfg6 = ExperimentConfig::preset(ExperimentKind::FullInjection, data_path("case39.m"));
    cfg6.out_dir = dir.path().join("full");
    let mut rep6 = None;
    log(
        6,
        "full-injection experiment",
        timed(Duration::from_secs(3600), || {
            let r = run_experiment(&cfg6).unwrap();
            let o = full_experiment(&r, &cfg6);
            rep6 = Some(r);
            o
        }),
    );

    log(
        7,
        "determinism and conservation",
        timed(Duration::from_secs(900), || {
            let mut again = cfg2.clone();
            again.out_dir = dir.path().join("2d_again");
            run_experiment(&again).unwrap();
            let diff = same_bytes(&cfg2.out_dir, &again.out_dir);
            let mut bad = Vec::new();
            let mut cells = 0;
            for (rep, cfg) in [(&rep2, &cfg2), (&rep6, &cfg6)] {
                if let Some(r) = rep {
                    cells += r.cells.len();
                    bad.extend(invariant_violations(r, cfg));
                }
            }
            Outcome {
                pass: diff.is_empty() && bad.is_empty() && cells == 30,
                detail: format!(
                    "2-D rerun differs in {} files {:?}; {} invariant violations over {cells} cells {:?}",
                    diff.len(),
                    diff,
                    bad.len(),
                    bad.iter().take(5).collect::<Vec<_>>()
                ),
            }
        }),
    );

    if !all {
        std::process::exit(1);
    }
}
