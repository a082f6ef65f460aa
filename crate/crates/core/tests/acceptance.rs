//! Acceptance criteria 1-9. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use phasekit::direct::{moments, phase_type_params, phase_type_params_in};
use phasekit::inverse::thomas::{accepting_systems, symmetrized_v};
use phasekit::inverse::{generic_conditions, invert_generic_dd, invert_unbranched_dd, m3_family, rel_dev, InvertOptions};
use phasekit::model::{CATALOG, SOLVABLE};
use phasekit::rashomon::{
    discrimination_experiment, enumerate_variants, map_m4_to_m9, map_m8_to_m9, map_m9_to_m4, map_m9_to_m8, markers,
    ExperimentConfig, RootPolicy,
};
use phasekit::scalar::{Dd, Scalar};
use phasekit::stochastic::{dkw_bound, fit_multiexp, ks_statistic, simulate_events, FitConfig};
use phasekit::{Generator, ModelId, SymmetricMoments};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_611;

fn rng(stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(SEED);
    r.set_stream(stream);
    r
}

/// `n` rates log-uniform on [1e-2, 1e2].
fn log_uniform(r: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| 10f64.powf(r.random_range(-2.0..2.0))).collect()
}

fn dd_moments(model: ModelId, rates: &[f64]) -> Vec<f64> {
    let r: Vec<Dd> = rates.iter().map(|&x| Dd::from_f64(x)).collect();
    SymmetricMoments::from_rates(model, &r).to_vec().iter().map(|x| x.re()).collect()
}

fn v5(m: &SymmetricMoments) -> [f64; 5] {
    [m.l[0], m.l[1], m.l[2], m.s[0], m.s[1]]
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, elapsed: Duration, o: &Outcome) {
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!("{tag} criterion {n}: {name} ({:.1} s) {}", elapsed.as_secs_f64(), o.detail);
}

/// Round trip of the generic closed forms, 1000 draws per model, rel 1e-8.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for (s, model) in SOLVABLE.into_iter().enumerate() {
        let mut r = rng(100 + s as u64);
        let (mut done, mut redrawn, mut non_generic, mut worst, mut bad_count) = (0, 0, 0, 0.0f64, 0);
        while done < 1000 {
            let rates = log_uniform(&mut r, 5);
            let Ok(p) = phase_type_params_in::<Dd>(&Generator::new(model, &rates).unwrap()) else {
                redrawn += 1;
                continue;
            };
            let m = moments(&p);
            let v = [m.l[0], m.l[1], m.l[2], m.s[0], m.s[1]].map(|x| x.re());
            if generic_conditions(model, &v, 1e-9).is_err() {
                non_generic += 1;
                continue;
            }
            let sols = invert_generic_dd(model, &m, &InvertOptions::default()).unwrap();
            let want = if model == ModelId::M2 { 1 } else { 2 };
            if sols.len() != want {
                bad_count += 1;
            }
            let best = sols.iter().map(|s| s.rel_err(&rates)).fold(f64::INFINITY, f64::min);
            worst = worst.max(best);
            done += 1;
        }
        pass &= worst <= 1e-8 && bad_count == 0;
        lines.push(format!(
            "{model}: worst rel err {worst:.1e}, wrong count {bad_count}, redrawn {redrawn}, off generic stratum {non_generic}"
        ));
    }
    let t = start.elapsed();
    pass &= t < Duration::from_secs(30);
    Outcome { pass, detail: lines.join("; ") }
}

/// Chain recursion, N = 1..8, 200 draws each, rel 1e-6.
fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for n in 1..=8usize {
        let model = ModelId::UnbranchedChain(n);
        let mut r = rng(200 + n as u64);
        let (mut done, mut redrawn, mut worst, mut failures) = (0, 0, 0.0f64, 0);
        let (mut over, mut over_min_amp) = (0, 0.0f64);
        while done < 200 {
            let rates = log_uniform(&mut r, 2 * n - 1);
            let Ok(p) = phase_type_params_in::<Dd>(&Generator::new(model, &rates).unwrap()) else {
                redrawn += 1;
                continue;
            };
            match invert_unbranched_dd(n, &p) {
                Ok(s) => {
                    let e = s.rel_err(&rates);
                    worst = worst.max(e);
                    if e > 1e-6 {
                        over += 1;
                        let amp = p.a.iter().map(|x| x.re().abs()).fold(f64::INFINITY, f64::min);
                        over_min_amp = over_min_amp.max(amp);
                    }
                }
                Err(_) => failures += 1,
            }
            done += 1;
        }
        pass &= worst <= 1e-6 && failures == 0;
        let mut line = format!("N={n}: worst {worst:.1e} failures {failures} redrawn {redrawn}");
        if over > 0 {
            // tiny amplitudes are below the resolution of double-double forward parameters
            line += &format!(" ({over} draws over 1e-6, all with some |A_j| <= {over_min_amp:.0e})");
        }
        lines.push(line);
    }
    pass &= start.elapsed() < Duration::from_secs(30);
    Outcome { pass, detail: lines.join("; ") }
}

/// M3: forward moments lie on the hypersurface; three family members
/// reproduce them.
fn criterion_3() -> Outcome {
    let mut r = rng(300);
    let (mut done, mut worst_h, mut worst_member, mut failures) = (0, 0.0f64, 0.0f64, 0);
    let grid = [0.1, 1.0, 10.0];
    while done < 100 {
        let rates = log_uniform(&mut r, 5);
        let Ok(p) = phase_type_params(&Generator::new(ModelId::M3, &rates).unwrap()) else { continue };
        let m = moments(&p);
        let [l1, l2, l3, s1, s2] = v5(&m);
        let terms = [l1 * s1 * s2, -l2 * s1 * s1, l3 * s1, -s2 * s2];
        let scale: f64 = terms.iter().map(|t| t.abs()).sum();
        worst_h = worst_h.max(terms.iter().sum::<f64>().abs() / scale);
        match m3_family(&m, 1e-9) {
            Ok(fam) => {
                let members: Vec<Vec<f64>> = grid.iter().map(|&k3| fam.at(k3)).collect();
                for k in &members {
                    worst_member = worst_member.max(rel_dev(&dd_moments(ModelId::M3, k), &m.to_vec()));
                }
            }
            Err(_) => failures += 1,
        }
        done += 1;
    }
    Outcome {
        pass: worst_h <= 1e-9 && worst_member <= 1e-9 && failures == 0,
        detail: format!(
            "worst |H|/scale {worst_h:.1e}, worst member moment dev {worst_member:.1e} (k3 in {grid:?}), family failures {failures}"
        ),
    }
}

/// Discrimination experiment at 1e5 samples with the default seed.
fn criterion_4() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let rep = discrimination_experiment(&cfg);
    let z = rep.zero_discrimination;
    let target = [0.11, 0.16, 0.16];
    let mut pass = (rep.retained_fraction - 0.614).abs() <= 0.02;
    for j in 0..3 {
        pass &= (z[j] - target[j]).abs() <= 0.03;
    }
    pass &= start.elapsed() < Duration::from_secs(300);
    let strict = discrimination_experiment(&ExperimentConfig { root_policy: RootPolicy::Strict, ..cfg.clone() });
    Outcome {
        pass,
        detail: format!(
            "retained {:.4} (target 0.614 ± 0.02), zero fractions p1 {:.4} T1 {:.4} T2 {:.4} (targets 0.11/0.16/0.16 ± 0.03); \
             real-roots-only policy for comparison: retained {:.4}, zero {:.4}/{:.4}/{:.4}",
            rep.retained_fraction, z[0], z[1], z[2],
            strict.retained_fraction, strict.zero_discrimination[0], strict.zero_discrimination[1], strict.zero_discrimination[2]
        ),
    }
}

/// Exit rate, T_N and p_N agree across valid variants.
fn criterion_5() -> Outcome {
    let mut r = rng(500);
    let (mut done, mut multi, mut violations, mut worst) = (0, 0, 0, 0.0f64);
    while done < 500 {
        let model = SOLVABLE[r.random_range(0..SOLVABLE.len())];
        let rates = log_uniform(&mut r, 5);
        let Ok(p) = phase_type_params(&Generator::new(model, &rates).unwrap()) else { continue };
        let rep = enumerate_variants(&p, &SOLVABLE);
        done += 1;
        if rep.valid().count() >= 2 {
            multi += 1;
            let c = &rep.constraints;
            worst = worst.max(c.exit_rate_spread).max(c.t_exit_spread).max(c.p_exit_spread);
            if !c.holds(1e-8) {
                violations += 1;
            }
        }
    }
    Outcome {
        pass: violations == 0 && multi > 0,
        detail: format!("{multi} of {done} inputs with >= 2 valid variants, worst spread {worst:.1e}, violations {violations}"),
    }
}

/// map1 / map2 images reproduce the moments and share T and p_3.
fn criterion_6() -> Outcome {
    let mut r = rng(600);
    let (mut n1, mut n2, mut worst_m, mut worst_t, mut worst_p, mut worst_inv) = (0, 0, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    while n1 + n2 < 500 {
        let k = log_uniform(&mut r, 5);
        let (img, model, back) = if k[1] > k[0] {
            n1 += 1;
            let i = map_m9_to_m8(&k).unwrap();
            let b = map_m8_to_m9(&i).unwrap();
            (i, ModelId::M8, b)
        } else {
            n2 += 1;
            let i = map_m9_to_m4(&k).unwrap();
            let b = map_m4_to_m9(&i).unwrap();
            (i, ModelId::M4, b)
        };
        worst_m = worst_m.max(rel_dev(&dd_moments(model, &img), &dd_moments(ModelId::M9, &k)));
        let (a, b) = (markers(ModelId::M9, &k).unwrap(), markers(model, &img).unwrap());
        worst_t = worst_t.max(rel_dev(&b.t, &a.t));
        worst_p = worst_p.max((b.p[2] - a.p[2]).abs() / a.p[2]);
        worst_inv = worst_inv.max(rel_dev(&back, &k));
    }
    Outcome {
        pass: worst_m <= 1e-9 && worst_t <= 1e-9 && worst_p <= 1e-9,
        detail: format!(
            "{n1} via map1, {n2} via map2: moments {worst_m:.1e}, T {worst_t:.1e}, p3 {worst_p:.1e}, inverse round trip {worst_inv:.1e}"
        ),
    }
}

/// Points of the original systems, including degenerate strata, are accepted
/// by exactly one simple system. Coordinates are multiples of 1/8 so every
/// relation evaluates exactly.
fn criterion_7() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for (s, model) in CATALOG.into_iter().enumerate() {
        let mut r = rng(700 + s as u64);
        let n_sys = phasekit::inverse::thomas::decomposition(model).unwrap().systems.len();
        let mut hits = vec![0usize; n_sys];
        let mut bad = 0;
        for _ in 0..500 {
            let mut k: [f64; 5] = std::array::from_fn(|_| match r.random_range(0..10) {
                0..=1 => 0.0,
                2 => -(r.random_range(1..24) as f64) / 8.0,
                _ => r.random_range(1..160) as f64 / 8.0,
            });
            // tie two coordinates now and then to reach strata where differences vanish
            if r.random_bool(0.3) {
                let (i, j) = (r.random_range(0..5), r.random_range(0..5));
                k[i] = k[j];
            }
            let v = symmetrized_v(model, &k).unwrap();
            let acc = accepting_systems(model, &k, &v, 1e-9).unwrap();
            if acc.len() == 1 {
                hits[acc[0] - 1] += 1;
            } else {
                bad += 1;
            }
        }
        pass &= bad == 0;
        let reached = hits.iter().filter(|&&h| h > 0).count();
        lines.push(format!("{model}: {bad} bad, {reached}/{n_sys} systems reached"));
    }
    Outcome { pass, detail: lines.join("; ") }
}

/// DKW acceptance of 100 simulations, and the mean-time identity.
fn criterion_8() -> Outcome {
    let gen = Generator::new(ModelId::M9, &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let p = phase_type_params(&gen).unwrap();
    let n = 100_000;
    let bound = dkw_bound(n, 0.01);
    let within = (0..100u64)
        .filter(|&s| ks_statistic(&simulate_events(&gen, n, 8000 + s).unwrap(), &p).unwrap() <= bound)
        .count();

    let mut r = rng(800);
    let mut worst = 0.0f64;
    let models = [ModelId::M2, ModelId::M3, ModelId::M4, ModelId::M8, ModelId::M9, ModelId::UnbranchedChain(4)];
    for i in 0..600 {
        let model = models[i % models.len()];
        let rates = log_uniform(&mut r, model.n_rates());
        let Ok(pp) = phase_type_params(&Generator::new(model, &rates).unwrap()) else { continue };
        let mk = markers(model, &rates).unwrap();
        let analytic = 1.0 / (mk.p[model.n_states() - 1] * rates[model.exit_index()]);
        worst = worst.max((pp.mean_time() - analytic).abs() / analytic);
    }
    Outcome {
        pass: within >= 99 && worst <= 1e-9,
        detail: format!("{within}/100 runs with KS <= {bound:.5}; mean-time identity worst rel dev {worst:.1e}"),
    }
}

/// Simulate M9 with well-separated eigenvalues, fit, invert.
fn criterion_9() -> Outcome {
    let rates = [0.3, 3.0, 1.0, 3.0, 4.0];
    let gen = Generator::new(ModelId::M9, &rates).unwrap();
    let truth = phase_type_params(&gen).unwrap();
    let ratios = [truth.lambda[1] / truth.lambda[0], truth.lambda[2] / truth.lambda[1]];
    let trace = simulate_events(&gen, 1_000_000, SEED).unwrap();
    let fit = match fit_multiexp(&trace, 3, &FitConfig::default()) {
        Ok(f) => f,
        Err(e) => return Outcome { pass: false, detail: format!("fit failed: {e}") },
    };
    let rep = enumerate_variants(&fit.params, &SOLVABLE);
    let best = rep
        .valid()
        .filter(|v| v.solution.model == ModelId::M9)
        .map(|v| v.solution.rel_err(&rates))
        .fold(f64::INFINITY, f64::min);
    Outcome {
        pass: best <= 0.15,
        detail: format!(
            "rates {rates:?}, eigenvalue ratios {:.1}/{:.1}, fit converged {}, best M9 variant rel err {best:.3} (limit 0.15)",
            ratios[0], ratios[1], fit.converged
        ),
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("generic round trip", criterion_1),
        ("unbranched chain round trip", criterion_2),
        ("M3 hypersurface and family", criterion_3),
        ("discrimination experiment", criterion_4),
        ("exit-state constraints across variants", criterion_5),
        ("M9 to M8/M4 maps", criterion_6),
        ("simple-system disjointness", criterion_7),
        ("simulation fidelity", criterion_8),
        ("end-to-end inference", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = f();
        report(i + 1, name, start.elapsed(), &o);
        failed += usize::from(!o.pass);
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
