//! End-to-end acceptance checks: convergence rates of the three reduced
//! families, stochastic and exact oracle agreement, closure laws of the
//! truncated limit systems, heterogeneity comparison theorems, the toy
//! truncation ladders, and the weighted-norm error bounds. Each check
//! prints one PASS/FAIL line with its headline numbers and runtime.

use std::time::Instant;

use basslab_core::compartmental::{bass_series, circle_series};
use basslab_core::lab::{
    bass_horizon, circle_horizon, circle_study_bound, hetero_compare, hetero_counterexample,
    study_circle, study_complete, study_kgroup, toy_embedding, verify_bound, StudyOptions,
    ToyRule,
};
use basslab_core::master::{
    solve_circle_reduced, solve_complete_reduced, solve_full_master, solve_truncated_circle,
    solve_truncated_complete, EmbeddedFamily, TopClosure,
};
use basslab_core::stochastic::monte_carlo;
use basslab_core::{
    from_weight_matrix, make_circle, make_complete, uniform_grid, BassParams, HeteroSpec,
    IntegratorConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Collects violations so each acceptance check reports exactly one line.
struct Criterion {
    label: &'static str,
    started: Instant,
    violations: Vec<String>,
}

impl Criterion {
    fn new(label: &'static str) -> Self {
        Criterion {
            label,
            started: Instant::now(),
            violations: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, detail: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(detail());
        }
    }

    fn finish(mut self, budget_secs: Option<f64>, summary: String) {
        let elapsed = self.started.elapsed().as_secs_f64();
        if let Some(cap) = budget_secs {
            if elapsed >= cap {
                self.violations
                    .push(format!("runtime {elapsed:.1}s exceeds {cap:.0}s"));
            }
        }
        let verdict = if self.violations.is_empty() {
            "PASS"
        } else {
            "FAIL"
        };
        println!("{verdict} {} ({elapsed:.1}s): {summary}", self.label);
        assert!(
            self.violations.is_empty(),
            "{}: {}",
            self.label,
            self.violations.join("; ")
        );
    }
}

fn fig1_params() -> BassParams {
    BassParams::new(0.02, 0.1).unwrap()
}

fn fig2_params() -> BassParams {
    BassParams::new(0.02, 0.11).unwrap()
}

fn fig3_spec() -> HeteroSpec {
    HeteroSpec::new(
        vec![0.4, 0.1, 0.3, 0.2],
        vec![0.0, 0.02, 0.04, 0.01],
        vec![
            vec![0.1, 0.05, 0.01, 0.0],
            vec![0.05, 0.025, 0.08, 0.05],
            vec![0.01, 0.02, 0.03, 0.04],
            vec![0.15, 0.05, 0.05, 0.05],
        ],
    )
    .unwrap()
}

#[test]
fn complete_family_converges_at_rate_one_over_m() {
    let mut crit = Criterion::new("complete-family 1/M rate");
    let study = study_complete(
        &fig1_params(),
        &[8, 16, 32, 64, 128, 256],
        &StudyOptions::default(),
    )
    .unwrap();
    let fit = study.fit.expect("six usable differences");
    crit.check((-1.1..=-0.9).contains(&fit.slope), || {
        format!("log-log slope {} outside [-1.1, -0.9]", fit.slope)
    });
    crit.check(study.sup_diffs.windows(2).all(|w| w[1] < w[0]), || {
        "differences are not strictly decreasing in M".into()
    });
    crit.finish(Some(60.0), format!("slope {:.3}", fit.slope));
}

#[test]
fn circle_family_converges_exponentially_within_the_analytic_cap() {
    let mut crit = Criterion::new("circle-family exponential rate");
    let pr = fig2_params();
    let ms: Vec<usize> = (3..=14).collect();
    let study = study_circle(&pr, &ms, &StudyOptions::default()).unwrap();
    crit.check(study.ms == ms, || {
        format!("study kept {:?} of the requested sizes", study.ms)
    });
    let fit = study.fit.expect("twelve usable differences");
    crit.check((-1.6..=-1.0).contains(&fit.slope), || {
        format!("semi-log slope {} outside [-1.6, -1.0]", fit.slope)
    });
    let eps = 0.5 * (1.0 + pr.p / pr.q).ln();
    for (&m, &d) in study.ms.iter().zip(&study.sup_diffs) {
        let cap = circle_study_bound(m, &pr, eps).unwrap();
        crit.check(d <= cap, || format!("M={m}: sup diff {d} above cap {cap}"));
    }
    crit.finish(Some(60.0), format!("slope {:.3}", fit.slope));
}

#[test]
fn multi_group_family_converges_at_rate_one_over_m() {
    let mut crit = Criterion::new("multi-group 1/M rate");
    let study = study_kgroup(
        &fig3_spec(),
        &[20, 40, 80, 160],
        &StudyOptions::kgroup_default(),
    )
    .unwrap();
    crit.check(!study.truncated, || {
        format!("study truncated after {:?}", study.ms)
    });
    let fit = study.fit.expect("four usable differences");
    crit.check((-1.15..=-0.8).contains(&fit.slope), || {
        format!("log-log slope {} outside [-1.15, -0.8]", fit.slope)
    });
    crit.finish(Some(600.0), format!("slope {:.3}", fit.slope));
}

#[test]
fn stochastic_and_reduced_solvers_agree_with_the_full_master() {
    let mut crit = Criterion::new("oracle agreement");
    let cfg = IntegratorConfig::default();
    let grid = uniform_grid(20.0, 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0acc_e97e_d001);
    let mut max_z = 0.0f64;
    for net_idx in 0..20 {
        let m = rng.gen_range(2..=10usize);
        let p: Vec<f64> = (0..m).map(|_| rng.gen_range(0.01..0.2)).collect();
        let w: Vec<Vec<f64>> = (0..m)
            .map(|i| {
                (0..m)
                    .map(|j| if i == j { 0.0 } else { rng.gen::<f64>() })
                    .collect()
            })
            .collect();
        let net = from_weight_matrix(p, &w).unwrap();
        let exact = solve_full_master(&net, &grid, &cfg).unwrap();
        let mc = monte_carlo(&net, &grid, 100_000, 0xbeef_0000 + net_idx).unwrap();
        for (t, ((&mean, &se), &truth)) in mc
            .f_mean()
            .iter()
            .zip(mc.f_se())
            .zip(exact.f_discrete())
            .enumerate()
        {
            let gap = (mean - truth).abs();
            if se > 0.0 {
                max_z = max_z.max(gap / se);
            }
            crit.check(gap <= 4.0 * se + 1e-12, || {
                format!(
                    "network {net_idx} (M={m}) at t={}: |{mean} - {truth}| > 4se={}",
                    grid[t],
                    4.0 * se
                )
            });
        }
    }

    let mut max_reduced_gap = 0.0f64;
    for m in 2..=10usize {
        let pr = fig1_params();
        let reduced = solve_complete_reduced(m, &pr, &grid, &cfg).unwrap();
        let net = make_complete(m, &pr).unwrap();
        let exact = solve_full_master(&net, &grid, &cfg).unwrap();
        for (a, b) in reduced.f_discrete().iter().zip(exact.f_discrete()) {
            max_reduced_gap = max_reduced_gap.max((a - b).abs());
        }
        for n in 1..=m {
            let nodes: Vec<usize> = (0..n).collect();
            for (a, b) in reduced.level(n).unwrap().iter().zip(exact.survival(&nodes).unwrap()) {
                max_reduced_gap = max_reduced_gap.max((a - b).abs());
            }
        }
    }
    for m in 3..=10usize {
        let pr = fig2_params();
        let reduced = solve_circle_reduced(m, &pr, &grid, &cfg).unwrap();
        let net = make_circle(m, &pr).unwrap();
        let exact = solve_full_master(&net, &grid, &cfg).unwrap();
        for (a, b) in reduced.f_discrete().iter().zip(exact.f_discrete()) {
            max_reduced_gap = max_reduced_gap.max((a - b).abs());
        }
        for n in 1..=m {
            let nodes: Vec<usize> = (0..n).collect();
            for (a, b) in reduced.level(n).unwrap().iter().zip(exact.survival(&nodes).unwrap()) {
                max_reduced_gap = max_reduced_gap.max((a - b).abs());
            }
        }
    }
    crit.check(max_reduced_gap <= 1e-8, || {
        format!("reduced vs full gap {max_reduced_gap} above 1e-8")
    });
    crit.finish(
        None,
        format!("max |z| {max_z:.2}, reduced gap {max_reduced_gap:.2e}"),
    );
}

#[test]
fn ansatz_closures_reproduce_the_limit_laws() {
    let mut crit = Criterion::new("ansatz closure laws");
    let cfg = IntegratorConfig::default();

    let pr = fig1_params();
    let grid = uniform_grid(bass_horizon(&pr).unwrap(), 201).unwrap();
    let ladder = solve_truncated_complete(30, &pr, TopClosure::Ansatz, &grid, &cfg).unwrap();
    let f = bass_series(&grid, &pr).unwrap();
    let mut worst_complete = 0.0f64;
    for n in 1..=30usize {
        for (u, &fi) in ladder.level(n).unwrap().iter().zip(&f) {
            worst_complete = worst_complete.max((u - (1.0 - fi).powi(n as i32)).abs());
        }
    }
    crit.check(worst_complete <= 1e-7, || {
        format!("complete limit deviates {worst_complete} from the logistic powers")
    });

    let pr = fig2_params();
    let grid = uniform_grid(circle_horizon(&pr).unwrap(), 201).unwrap();
    let ladder = solve_truncated_circle(20, &pr, TopClosure::Ansatz, &grid, &cfg).unwrap();
    let f1d = circle_series(&grid, &pr).unwrap();
    let u1 = ladder.level(1).unwrap();
    let mut worst_circle = 0.0f64;
    for (u, &fi) in u1.iter().zip(&f1d) {
        worst_circle = worst_circle.max((u - (1.0 - fi)).abs());
    }
    for n in 2..=20usize {
        for ((u, &v1), &t) in ladder.level(n).unwrap().iter().zip(u1).zip(&grid) {
            let expected = (-((n - 1) as f64) * pr.p * t).exp() * v1;
            worst_circle = worst_circle.max((u - expected).abs());
        }
    }
    crit.check(worst_circle <= 1e-7, || {
        format!("ring limit deviates {worst_circle} from the level-one relation")
    });
    crit.finish(
        None,
        format!("complete {worst_complete:.2e}, ring {worst_circle:.2e}"),
    );
}

#[test]
fn heterogeneity_comparisons_hold_across_random_and_crafted_configs() {
    let mut crit = Criterion::new("heterogeneity comparisons");
    let cfg = IntegratorConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0x0acc_e97e_d006);
    for case in 0..100 {
        let k = rng.gen_range(2..=4usize);
        let mut p: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
        let mut q: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
        p.sort_by(|a, b| a.partial_cmp(b).unwrap());
        q.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let a: Vec<f64> = raw.iter().map(|x| x / total).collect();
        let spec = HeteroSpec::mild(a.clone(), p.clone(), q.clone()).unwrap();
        let grid = uniform_grid(bass_horizon(&spec.homogenize()).unwrap(), 200).unwrap();
        let cmp = hetero_compare(&p, &q, &a, &grid, &cfg).unwrap();
        crit.check(cmp.gap_positive, || {
            format!("case {case}: heterogeneous curve not below homogenized")
        });
        crit.check(cmp.y_positive, || {
            format!("case {case}: drive mismatch not positive")
        });
        crit.check(cmp.fractions_ascending, || {
            format!("case {case}: group fractions not ascending")
        });
    }

    let pr = fig1_params();
    let grid = uniform_grid(bass_horizon(&pr).unwrap(), 400).unwrap();
    let report = hetero_counterexample(&pr, &grid, &cfg).unwrap();
    crit.check(report.initial_positive, || {
        "cross example does not start above the homogenized curve".into()
    });
    let ratio = report.het_curvature.second / report.hom_curvature.second;
    crit.check((ratio - 2.0).abs() <= 0.1, || {
        format!("initial curvature ratio {ratio} not within 5% of 2")
    });

    let mut example2_gap = true;
    for (p, q) in [(0.1, 0.1), (0.15, 0.1)] {
        let pr = BassParams::new(p, q).unwrap();
        let grid = uniform_grid(bass_horizon(&pr).unwrap(), 400).unwrap();
        let cmp = hetero_compare(
            &[0.0, 2.0 * p],
            &[2.0 * q, 0.0],
            &[0.5, 0.5],
            &grid,
            &cfg,
        )
        .unwrap();
        example2_gap &= cmp.gap_positive;
        crit.check(cmp.gap_positive, || {
            format!("anti-correlated example with p={p} >= q={q} not below homogenized")
        });
    }
    crit.finish(
        None,
        format!("curvature ratio {ratio:.3}, crafted examples ordered: {example2_gap}"),
    );
}

#[test]
fn toy_ladders_separate_convergent_from_divergent_truncations() {
    let mut crit = Criterion::new("toy truncation ladders");
    let cfg = IntegratorConfig::default();

    let grid = uniform_grid(5.0, 101).unwrap();
    let t_one = grid.iter().position(|&t| t == 1.0).unwrap();
    let mut worst_constant = 0.0f64;
    let mut u1_at_one = Vec::new();
    for m in [2usize, 4, 8, 16] {
        let run = toy_embedding(ToyRule::Constant, m, &grid, &cfg).unwrap();
        for k in 1..=m {
            let reference = run.reference(k).unwrap();
            for (u, r) in run.u(k).unwrap().iter().zip(&reference) {
                worst_constant = worst_constant.max((u - r).abs());
            }
        }
        u1_at_one.push(run.u(1).unwrap()[t_one]);
    }
    crit.check(worst_constant <= 1e-7, || {
        format!("unit-rate ladder deviates {worst_constant} from the Taylor identity")
    });
    crit.check(u1_at_one.windows(2).all(|w| w[1] > w[0]), || {
        format!("u_1(1; M) not increasing: {u1_at_one:?}")
    });
    crit.check(1.0 - u1_at_one[3] < 1e-10, || {
        format!("u_1(1; 16) = {} far from 1", u1_at_one[3])
    });

    let grid = uniform_grid(1.0, 101).unwrap();
    let mut worst_geom_u1 = 0.0f64;
    for m in [4usize, 6, 8] {
        let run = toy_embedding(ToyRule::Geometric, m, &grid, &cfg).unwrap();
        for k in 1..=m {
            let envelope = run.geometric_envelope(k);
            for (u, e) in run.u(k).unwrap().iter().zip(&envelope) {
                crit.check(*u <= e + 1e-9, || {
                    format!("geometric ladder M={m}: u_{k} = {u} above envelope {e}")
                });
            }
        }
        let u1 = run.u(1).unwrap()[100];
        worst_geom_u1 = worst_geom_u1.max(u1);
        crit.check(u1 <= 0.0996, || {
            format!("geometric ladder M={m}: u_1(1) = {u1} above 0.0996")
        });
    }
    crit.finish(
        None,
        format!(
            "constant dev {worst_constant:.2e}, geometric u_1(1) <= {worst_geom_u1:.4} across M"
        ),
    );
}

#[test]
fn weighted_norm_bound_holds_across_the_sweep() {
    let mut crit = Criterion::new("weighted-norm bounds");
    let cfg = IntegratorConfig::default();
    let mut checked = 0usize;
    let mut tightest = f64::INFINITY;
    for q in [0.1, 0.11] {
        let pr = BassParams::new(0.02, q).unwrap();
        let eps_tilde = (1.0 + pr.p / pr.q).ln();
        for (family, horizon) in [
            (EmbeddedFamily::Complete, bass_horizon(&pr).unwrap()),
            (EmbeddedFamily::Circle, circle_horizon(&pr).unwrap()),
        ] {
            let grid = uniform_grid(horizon, 400).unwrap();
            for m in [4usize, 8, 16, 32, 64] {
                for frac in [0.25, 0.5, 0.75] {
                    let report =
                        verify_bound(family, m, &pr, frac * eps_tilde, &grid, &cfg).unwrap();
                    crit.check(report.passes, || {
                        format!(
                            "{family:?} M={m} eps={:.4}: lhs {} above rhs {}",
                            frac * eps_tilde,
                            report.lhs,
                            report.rhs
                        )
                    });
                    checked += 1;
                    if report.lhs > 0.0 {
                        tightest = tightest.min(report.rhs / report.lhs);
                    }
                }
            }
        }
    }
    crit.finish(
        None,
        format!("{checked} cases, smallest rhs/lhs margin {tightest:.2}"),
    );
}
