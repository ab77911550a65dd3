//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::f64::consts::{FRAC_PI_2, PI};
use std::process::ExitCode;

use rand::Rng;

use qae_core::bench::{
    fit_loglog, instantaneous_exponent_xy, medians_by_epsilon, qoprime_params, regression_slope, run_sweep,
    BenchmarkRecord, Choice, SweepConfig,
};
use qae_core::numtheory::{crt_reconstruct, find_coprimes, gcd};
use qae_core::oracle::{outcome_probability_with, Basis};
use qae_core::powerlaw::PosteriorGrid;
use qae_core::qoprime::{
    align_fractions, budget_envelope, optimize_params, prefactor_expression, Branch, GroupEstimate,
    QoPrimeParams, QoPrimePlan, SampleBudget,
};
use qae_core::report::Algorithm;
use qae_core::rng::{derive_seed, rng_from_seed};
use qae_core::schedules::{fisher_information, power_law_schedule, PowerLawParams, Schedule, ScheduleEntry};

type Outcome = (bool, String);

fn failures(recs: &[BenchmarkRecord]) -> usize {
    recs.iter().filter(|r| !r.success).count()
}

/// Allowed failure fraction: `p + 3σ` of a binomial with `n` trials.
fn binomial_slack(p: f64, n: usize) -> f64 {
    p + 3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

fn criterion_1() -> Outcome {
    let eps = vec![1e-2, 10f64.powf(-2.5), 1e-3, 10f64.powf(-3.5)];
    let mut ok = true;
    let mut detail = Vec::new();
    for beta in [0.455, 0.714] {
        let mut cfg = SweepConfig::new(Algorithm::PowerLaw, eps.clone(), 20);
        cfg.beta = Choice::Fixed(beta);
        cfg.base_seed = 1;
        let recs = run_sweep(&cfg).expect("sweep");
        let fit = regression_slope(&recs).expect("fit");
        let target = -(1.0 + beta);
        ok &= (fit.slope - target).abs() <= 0.1;
        detail.push(format!("beta={beta} slope={:.4} (target {target:.3})", fit.slope));
    }
    (ok, detail.join(", "))
}

fn criterion_2() -> Outcome {
    let mut cfg = SweepConfig::new(Algorithm::PowerLaw, vec![1e-3], 200);
    cfg.beta = Choice::Fixed(0.5);
    cfg.base_seed = 2;
    let recs = run_sweep(&cfg).expect("sweep");
    let rate = failures(&recs) as f64 / recs.len() as f64;
    let bound = binomial_slack(0.1, recs.len());
    (rate <= bound, format!("failure rate {rate:.4} <= {bound:.4}"))
}

fn criterion_3() -> Outcome {
    let delta = 1e-3;
    let trials = 1000;
    let bound = binomial_slack(delta, trials);
    let mut ok = true;
    let mut detail = Vec::new();
    for eps in [1e-3, 1e-4] {
        let o = optimize_params(eps, 0.0, delta).expect("optimize");
        let mut cfg = SweepConfig::new(Algorithm::QoPrime, vec![eps], trials);
        cfg.delta = delta;
        cfg.k = Choice::Fixed(o.k);
        cfg.q = Choice::Fixed(o.q);
        cfg.sample_cap = 1e18;
        cfg.base_seed = 3;
        let recs = run_sweep(&cfg).expect("sweep");
        let rate = failures(&recs) as f64 / trials as f64;
        ok &= rate <= bound;
        detail.push(format!("eps={eps:e} (k,q)=({},{}) failure {rate:.4}", o.k, o.q));
    }
    (ok, format!("{} <= {bound:.4}", detail.join(", ")))
}

/// Per-configuration spread of `N·D·ε²` and slope of `log(N·D)` vs `log ε`.
fn nd_check(recs: &[BenchmarkRecord]) -> (bool, f64, f64) {
    let nd = medians_by_epsilon(recs, |r| r.oracle_calls as f64 * r.max_depth as f64);
    let ratios: Vec<f64> = nd.iter().map(|(e, v)| v * e * e).collect();
    let spread = ratios.iter().cloned().fold(f64::MIN, f64::max) / ratios.iter().cloned().fold(f64::MAX, f64::min);
    let (xs, ys): (Vec<f64>, Vec<f64>) = nd.into_iter().unzip();
    let slope = fit_loglog(&xs, &ys).expect("fit").slope;
    (spread < 5.0 && (slope + 2.0).abs() <= 0.1 && failures(recs) == 0, spread, slope)
}

fn criterion_4() -> Outcome {
    let eps = vec![1e-2, 1e-3, 1e-4];
    let mut ok = true;
    let mut detail = Vec::new();
    for beta in [0.25, 0.5, 0.75] {
        let mut cfg = SweepConfig::new(Algorithm::PowerLaw, eps.clone(), 5);
        cfg.beta = Choice::Fixed(beta);
        cfg.base_seed = 4;
        let (pass, spread, slope) = nd_check(&run_sweep(&cfg).expect("sweep"));
        ok &= pass;
        detail.push(format!("beta={beta}: spread {spread:.2} slope {slope:.3}"));
    }
    for (k, q) in [(2, 1), (3, 1), (3, 2)] {
        let mut cfg = SweepConfig::new(Algorithm::QoPrime, eps.clone(), 5);
        cfg.k = Choice::Fixed(k);
        cfg.q = Choice::Fixed(q);
        cfg.sample_cap = 1e13;
        cfg.base_seed = 4;
        let (pass, spread, slope) = nd_check(&run_sweep(&cfg).expect("sweep"));
        ok &= pass;
        detail.push(format!("q/k={q}/{k}: spread {spread:.2} slope {slope:.3}"));
    }
    (ok, detail.join(", "))
}

fn criterion_5() -> Outcome {
    let eps: Vec<f64> = (0..=16).map(|j| 10f64.powf(-3.0 - 0.25 * j as f64)).collect();
    let env = budget_envelope(&eps, 1e-5, 1e-5).expect("envelope");
    let ys: Vec<f64> = env.iter().map(|(_, o)| o.predicted_calls).collect();
    let inst = instantaneous_exponent_xy(&eps, &ys).expect("exponents");
    let in_band = inst.iter().all(|&(_, s)| (-2.05..=-0.95).contains(&s));
    let coherent: Vec<f64> = inst.iter().filter(|(e, _)| *e >= 1e-4).map(|p| p.1).collect();
    let noisy: Vec<f64> = inst.iter().filter(|(e, _)| *e <= 1e-6).map(|p| p.1).collect();
    let coherent_ok = coherent.iter().all(|&s| s >= -1.35);
    let noisy_ok = noisy.iter().all(|&s| s <= -1.6);
    let range = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::MAX, f64::min);
        let hi = v.iter().cloned().fold(f64::MIN, f64::max);
        format!("[{lo:.3}, {hi:.3}]")
    };
    let all: Vec<f64> = inst.iter().map(|p| p.1).collect();
    (
        in_band && coherent_ok && noisy_ok,
        format!(
            "exponents {} overall, {} for eps>=1e-4, {} for eps<=1e-6",
            range(&all),
            range(&coherent),
            range(&noisy)
        ),
    )
}

fn criterion_6() -> Outcome {
    let delta = 1e-5;
    let mut ok = true;
    let mut detail = Vec::new();
    for gamma in [0.0, 1e-5] {
        for eps in [1e-3, 1e-4, 1e-5] {
            let p = qoprime_params(eps, gamma, delta, Choice::Auto, Choice::Auto).expect("params");
            let expr = prefactor_expression(p.k, p.q, eps, gamma, delta);
            let mut ratios = Vec::new();
            for budget in [SampleBudget::ExactBinomial, SampleBudget::Chernoff] {
                let mut cfg = SweepConfig::new(Algorithm::QoPrime, vec![eps], 20);
                cfg.gamma = gamma;
                cfg.delta = delta;
                cfg.budget = budget;
                cfg.sample_cap = 1e15;
                cfg.base_seed = 6;
                let recs = run_sweep(&cfg).expect("sweep");
                ratios.push(medians_by_epsilon(&recs, |r| r.oracle_calls as f64)[0].1 / expr);
            }
            ok &= ratios[0] < 10.0;
            detail.push(format!("g={gamma:e} eps={eps:e}: {:.1} (chernoff {:.0})", ratios[0], ratios[1]));
        }
    }
    (ok, format!("calls/expression {}", detail.join(", ")))
}

fn criterion_7() -> Outcome {
    let eps = vec![1e-3, 1e-4, 1e-5, 1e-6, 1e-7];
    let mut cfg = SweepConfig::new(Algorithm::QoPrime, eps.clone(), 3);
    cfg.gamma = 1e-4;
    cfg.sample_cap = 1e18;
    cfg.base_seed = 7;
    let depths = medians_by_epsilon(&run_sweep(&cfg).expect("sweep"), |r| r.max_depth as f64);
    let plateau = depths[4].1 / depths[2].1;

    let pure_depth = |e: f64| {
        let o = optimize_params(e, 1e-4, 1e-3).expect("optimize");
        let p = QoPrimeParams::new(e, 1e-3, o.k, o.q, 1e-4).expect("params").with_sample_cap(f64::INFINITY);
        QoPrimePlan::new(&p).expect("plan").max_depth() as f64
    };
    let pure_plateau = pure_depth(1e-7) / pure_depth(1e-5);

    let mut cfg = SweepConfig::new(Algorithm::QoPrime, eps, 3);
    cfg.k = Choice::Fixed(3);
    cfg.q = Choice::Fixed(1);
    cfg.sample_cap = 1e18;
    cfg.base_seed = 7;
    let noiseless = medians_by_epsilon(&run_sweep(&cfg).expect("sweep"), |r| r.max_depth as f64);
    let (xs, ys): (Vec<f64>, Vec<f64>) = noiseless.into_iter().unzip();
    let slope = fit_loglog(&xs, &ys).expect("fit").slope;
    let target = -(1.0 - 1.0 / 3.0);
    (
        plateau <= 3.0 && pure_plateau <= 3.0 && (slope - target).abs() <= 0.1,
        format!(
            "depth(1e-7)/depth(1e-5) = {plateau:.3} (closed-form optimizer {pure_plateau:.3}), noiseless (3,1) depth slope {slope:.3} (target {target:.3})"
        ),
    )
}

fn crt_round_trip(rng: &mut impl Rng) -> bool {
    for _ in 0..1000 {
        let k = rng.random_range(2..=4);
        let mut moduli: Vec<u128> = Vec::new();
        while moduli.len() < k {
            let n = rng.random_range(2..=40u128);
            if moduli.iter().all(|&m| gcd(m, n) == 1) {
                moduli.push(n);
            }
        }
        let product: u128 = moduli.iter().product();
        let m = rng.random_range(0..product);
        let pairs: Vec<(u128, u128)> = moduli.iter().map(|&n| (m % n, n)).collect();
        let brute = (0..product).find(|x| pairs.iter().all(|&(r, n)| x % n == r));
        if crt_reconstruct(&pairs).ok() != brute || brute != Some(m) {
            return false;
        }
    }
    true
}

/// Worst relative gap between the Fisher formula and the empirical variance
/// of the score `∂_α log f` over `10⁵` single-shot outcomes, at angles where
/// neither outcome is rare.
fn fisher_vs_score_variance(rng: &mut impl Rng) -> f64 {
    let cases = [(0.6, 0.0, 0), (0.25, 0.0, 1), (0.12, 0.0, 3), (0.2, 1e-3, 1), (1.3, 2e-2, 7)];
    let mut worst: f64 = 0.0;
    for (theta, gamma, depth) in cases {
        let p1 = outcome_probability_with(theta, gamma, depth, Basis::Standard, false);
        let h = 1e-6;
        let dp = (outcome_probability_with(theta + h, gamma, depth, Basis::Standard, false)
            - outcome_probability_with(theta - h, gamma, depth, Basis::Standard, false))
            / (2.0 * h);
        let dalpha = (2.0 * theta).sin();
        let n = 100_000;
        let (mut sum, mut sum2) = (0.0, 0.0);
        for _ in 0..n {
            let score = if rng.random::<f64>() < p1 { dp / p1 } else { -dp / (1.0 - p1) } / dalpha;
            sum += score;
            sum2 += score * score;
        }
        let var = sum2 / n as f64 - (sum / n as f64).powi(2);
        let s = Schedule::new(vec![ScheduleEntry { depth, shots: 1 }]).expect("schedule");
        let analytic = fisher_information(&s, theta, gamma).expect("fisher").value;
        worst = worst.max((var - analytic).abs() / analytic);
    }
    worst
}

/// Worst relative deviation of the `γ = 0` paths from the noiseless closed forms.
fn zero_noise_identities() -> f64 {
    let mut worst: f64 = 0.0;
    let rel = |a: f64, b: f64| if b == 0.0 { a.abs() } else { ((a - b) / b).abs() };
    for theta in [0.1, 0.3, 0.7, 1.2] {
        for depth in [0u64, 1, 5, 40, 333] {
            let w = (2 * depth + 1) as f64;
            let p1 = outcome_probability_with(theta, 0.0, depth, Basis::Standard, false);
            worst = worst.max(rel(p1, (w * theta).sin().powi(2)));
            let pm = outcome_probability_with(theta, 0.0, depth, Basis::Hadamard, false);
            worst = worst.max(rel(pm, (w * theta + PI / 4.0).sin().powi(2)));
            let tiny = outcome_probability_with(theta, 1e-300, depth, Basis::Standard, false);
            worst = worst.max(rel(tiny, p1));
        }
        let s = power_law_schedule(&PowerLawParams::new(0.5, 1e-2, 10).unwrap()).unwrap();
        let alpha = theta.cos().powi(2);
        let closed: f64 =
            s.entries().iter().map(|e| e.shots as f64 * ((2 * e.depth + 1) as f64).powi(2)).sum::<f64>() / (alpha * (1.0 - alpha));
        worst = worst.max(rel(fisher_information(&s, theta, 0.0).unwrap().value, closed));
    }
    worst
}

/// Largest `|Σ p_t - 1|` observed after any single posterior update.
fn posterior_normalization(rng: &mut impl Rng) -> f64 {
    let mut worst: f64 = 0.0;
    for (beta, gamma) in [(0.5, 0.0), (0.3, 1e-3), (0.9, 0.0)] {
        let eps = 1e-3;
        let s = power_law_schedule(&PowerLawParams::new(beta, eps, 100).unwrap()).unwrap();
        let theta = rng.random_range(0.0..FRAC_PI_2);
        let mut grid = PosteriorGrid::new(eps).unwrap();
        for e in s.entries() {
            let p1 = outcome_probability_with(theta, gamma, e.depth, Basis::Standard, false);
            let n1 = (0..e.shots).filter(|_| rng.random::<f64>() < p1).count() as u64;
            grid.update(e.depth, e.shots - n1, n1, gamma).unwrap();
            worst = worst.max((grid.probabilities().iter().sum::<f64>() - 1.0).abs());
        }
    }
    worst
}

fn estimate_with_fraction(f: f64, index: usize) -> GroupEstimate {
    GroupEstimate {
        index,
        n_i: 1_000_003,
        depth: 0,
        branch: Branch::Direct,
        l_hat_direct: f,
        l_hat: f,
        parity: 0,
        m_bar: 1000.0 + f,
        residue_2n: 1000.0 + f,
        samples_used: 0,
        oracle_calls: 0,
    }
}

fn circ(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Agreement of arc intersection with a `10⁴`-point scan of the circle.
fn arc_intersection(rng: &mut impl Rng) -> bool {
    const POINTS: usize = 10_000;
    let resolution = 1.0 / POINTS as f64;
    for _ in 0..1000 {
        let k = rng.random_range(2..=6);
        let spread = rng.random_range(0.05..0.8);
        let center = rng.random::<f64>();
        let fracs: Vec<f64> = (0..k).map(|_| (center + spread * (rng.random::<f64>() - 0.5)).rem_euclid(1.0)).collect();
        let ests: Vec<GroupEstimate> = fracs.iter().enumerate().map(|(i, &f)| estimate_with_fraction(f, i)).collect();
        let hit = |x: f64, slack: f64| fracs.iter().all(|&f| circ(x, f) <= 0.25 + slack);
        let strict = (0..POINTS).any(|j| hit(j as f64 * resolution, 0.0));
        let loose = (0..POINTS).any(|j| hit(j as f64 * resolution, resolution));
        match align_fractions(&ests) {
            Ok((alpha, residues)) => {
                if !loose || !hit(alpha, 1e-12) {
                    return false;
                }
                let expected: Vec<u128> = fracs
                    .iter()
                    .map(|&f| {
                        let beta = (alpha - f + 0.5).rem_euclid(1.0) - 0.5;
                        (1000.0 + f + beta - alpha).round() as u128
                    })
                    .collect();
                if residues != expected {
                    return false;
                }
            }
            Err(_) if strict => return false,
            Err(_) => {}
        }
    }
    true
}

fn criterion_8() -> Outcome {
    let mut rng = rng_from_seed(derive_seed(8, 0));
    let crt = crt_round_trip(&mut rng);
    let fisher = fisher_vs_score_variance(&mut rng);
    let zero = zero_noise_identities();
    let norm = posterior_normalization(&mut rng);
    let arcs = arc_intersection(&mut rng);
    (
        crt && fisher <= 0.05 && zero <= 1e-10 && norm <= 1e-9 && arcs,
        format!(
            "crt={crt}, fisher rel gap {fisher:.4}, zero-noise rel {zero:.1e}, normalization {norm:.1e}, arcs={arcs}"
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for k in 2..=6usize {
        let dev = |e: f64| {
            let c = find_coprimes(e, k).expect("coprimes");
            let root = (PI / e).powf(1.0 / k as f64);
            let first = c.moduli()[0] as f64 / root;
            let last = *c.moduli().last().unwrap() as f64 / root;
            (first - 1.0).abs().max((last - 1.0).abs())
        };
        let coarse = dev(1e-4);
        let fine = dev(1e-8);
        ok &= fine <= coarse && fine <= 0.5;
        detail.push(format!("k={k}: {coarse:.3}->{fine:.3}"));
    }
    let iqae_rejected = "iqae".parse::<Algorithm>().is_err();
    ok &= iqae_rejected;
    (
        ok,
        format!("moduli/(pi/eps)^(1/k) deviation eps 1e-4 -> 1e-8 {}, iqae rejected={iqae_rejected}", detail.join(", ")),
    )
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 9] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
    ];
    let mut failed = 0;
    for (n, f) in criteria {
        let (ok, detail) = f();
        println!("criterion {n}: {} {detail}", if ok { "PASS" } else { "FAIL" });
        failed += usize::from(!ok);
    }
    println!("acceptance: {}/{} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
