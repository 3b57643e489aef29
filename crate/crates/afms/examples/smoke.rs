//! Round-trip smoke harness: random admissible draws → synthesize → fit →
//! tolerance check. Run: `cargo run --example smoke [n201] [n41] [seed]`.

use afms::estimator::{fit_block, wrap_phase, FitConfig};
use afms::model::synthesize;
use afms::AfmsParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn draw_201(rng: &mut ChaCha8Rng) -> AfmsParams {
    let wf = rng.gen_range(0.055..0.068);
    let ca = rng.gen_range(4.78..4.90);
    let cc = rng.gen_range(2.66..2.74);
    let wa = ca * wf;
    let wc = cc * wa;
    draw_rest(rng, wc, wa, wf, (0.10, 0.18))
}

fn draw_41(rng: &mut ChaCha8Rng) -> AfmsParams {
    let fc = rng.gen_range(8.0..13.0);
    let wc = 2.0 * PI * fc / 500.0;
    let cc = rng.gen_range(2.66..2.74);
    let ca = rng.gen_range(4.78..4.90);
    let wa = wc / cc;
    let wf = wa / ca;
    draw_rest(rng, wc, wa, wf, (0.05, 0.15))
}

fn draw_rest(rng: &mut ChaCha8Rng, wc: f64, wa: f64, wf: f64, kf_range: (f64, f64)) -> AfmsParams {
    let k_f = rng.gen_range(kf_range.0..kf_range.1);
    let k_a = rng.gen_range(0.4..0.8);
    let s = rng.gen_range(0.8..1.3);
    let a = rng.gen_range(0.6..1.8);
    let theta = rng.gen_range(-PI..PI);
    let tha_raw = rng.gen_range(-1.1..1.1) + if rng.gen_bool(0.5) { PI } else { 0.0 };
    let theta_b = rng.gen_range(-PI..PI);
    let p = AfmsParams {
        a,
        omega_c: wc,
        theta,
        k_f,
        omega_f: wf,
        k_a,
        omega_a: wa,
        theta_a: wrap_phase(tha_raw),
        theta_b,
        s,
        r: -1.0,
    };
    assert!(
        wc + wa + (k_f.ceil() + 2.0) * wf < PI / 2.0,
        "inadmissible draw"
    );
    p
}

fn run(label: &str, n_trials: usize, len: usize, seed: u64, kf_checked: bool) -> bool {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = FitConfig::default();
    let mut fails = 0usize;
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut maxes: std::collections::BTreeMap<&str, f64> = Default::default();
    for t in 0..n_trials {
        let p = if len >= 101 {
            draw_201(&mut rng)
        } else {
            draw_41(&mut rng)
        };
        let block = synthesize(&p, len, 500.0).unwrap();
        match fit_block(&block, &config) {
            Err(e) => {
                fails += 1;
                worst.push((format!("trial {t}: {e}"), f64::INFINITY));
            }
            Ok(fit) => {
                let e = &fit.params;
                let mut errs: Vec<(&str, f64, f64)> = vec![
                    ("wc", (e.omega_c - p.omega_c).abs(), 1e-3),
                    ("wa", (e.omega_a - p.omega_a).abs(), 1e-3),
                    ("A", (e.a - p.a).abs() / p.a, 0.02),
                    ("ka", (e.k_a - p.k_a).abs() / p.k_a, 0.05),
                    ("s", (e.s - p.s).abs() / p.s, 0.05),
                    ("th", wrap_phase(e.theta - p.theta).abs(), 0.05),
                    ("tha", wrap_phase(e.theta_a - p.theta_a).abs(), 0.05),
                    ("thb", wrap_phase(e.theta_b - p.theta_b).abs(), 0.05),
                    ("nrmse", fit.nrmse, if kf_checked { 0.05 } else { 0.10 }),
                ];
                if kf_checked {
                    errs.push(("wf", (e.omega_f - p.omega_f).abs(), 1e-3));
                    errs.push(("kf", (e.k_f - p.k_f).abs() / p.k_f, 0.05));
                }
                let mut bad = Vec::new();
                for (name, v, tol) in &errs {
                    let m = maxes.entry(name).or_insert(0.0);
                    if *v > *m {
                        *m = *v;
                    }
                    if (kf_checked || *name == "nrmse") && v > tol {
                        bad.push(format!("{name}={v:.3e}"));
                    }
                }
                if !bad.is_empty() {
                    fails += 1;
                    worst.push((format!("trial {t}: BAD {}", bad.join(" ")), 0.0));
                }
            }
        }
    }
    println!("{label}: {}/{} within tolerance", n_trials - fails, n_trials);
    for (name, v) in &maxes {
        println!("  max {name:6} = {v:.3e}");
    }
    for (msg, _) in worst.iter().take(10) {
        println!("  {msg}");
    }
    fails == 0
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n201: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(30);
    let n41: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(30);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(12345);
    let t0 = std::time::Instant::now();
    let ok1 = run("201-sample long path", n201, 201, seed, true);
    let t1 = std::time::Instant::now();
    let ok2 = run("41-sample short path", n41, 41, seed + 1, false);
    let t2 = std::time::Instant::now();
    println!(
        "timing: 201-path {:.2} s total ({:.3} s/trial), 41-path {:.2} s total ({:.3} s/trial)",
        (t1 - t0).as_secs_f64(),
        (t1 - t0).as_secs_f64() / n201.max(1) as f64,
        (t2 - t1).as_secs_f64(),
        (t2 - t1).as_secs_f64() / n41.max(1) as f64
    );
    std::process::exit(if ok1 && ok2 { 0 } else { 1 });
}
