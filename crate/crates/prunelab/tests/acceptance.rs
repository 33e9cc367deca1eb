//! Acceptance suite: one test per criterion, each printing a PASS line
//! (visible with `--nocapture`) and asserting its runtime budget.
//!
//! The heavy experiments (5 through 8) run multiple seeds in parallel
//! worker threads capped by `PRUNELAB_THREADS`.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use prunelab::checkpoint::Checkpoint;
use prunelab::config::{preset, ExperimentConfig, PipelineKind, RuleName};
use prunelab::digits::{gen_digits, DigitsSpec};
use prunelab::metrics::{final_accuracies, to_csv_line, Phase};
use prunelab::pipeline::{
    median_of_sorted, run_ablation_prune_epoch, run_baseline, run_pipeline, run_wilton,
};
use prunelab_core::dataset::{
    gen_multifreq, lift_constant, split_train_val, Band, DatasetHandle, MultifreqSpec, Targets,
};
use prunelab_core::network::{InitScheme, LossKind, Network, NetworkSpec, OptimizerState};
use prunelab_core::pruning::{self, PruneRecipe, PruneRule, PruneScope, TieBreak};
use prunelab_core::seeds::{derive_seed, splitmix64};
use prunelab_core::spectral::{
    dft, frequency_convergence, network_spectrum, norm_report, pruning_stability, Grid1D,
};
use prunelab_core::tape::Tape;
use prunelab_core::Matrix;
use prunelab_testkit::{central_difference, jacobi_singular_values, max_relative_error, naive_dft};

fn report(criterion: &str, elapsed: Duration, budget: Duration, detail: &str) {
    println!(
        "[PASS] {criterion}: {detail} ({:.1}s of {:.0}s budget)",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    assert!(
        elapsed <= budget,
        "{criterion} exceeded its runtime budget: {:.1}s > {:.0}s",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
}

fn uniform(state: &mut u64) -> f64 {
    *state = splitmix64(*state);
    (*state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
}

/// Criterion 1: autodiff gradients match central finite differences on 20
/// random small networks, relative error below 1e-5.
#[test]
fn criterion_1_gradient_correctness() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for case in 0..20u64 {
        let depth = 1 + (case % 3) as usize;
        let mut state = 0x9000 + case;
        let input_dim = 2 + (splitmix64(case) % 4) as usize;
        let widths: Vec<usize> = (0..depth)
            .map(|k| 2 + (splitmix64(case ^ (k as u64 + 1)) % 6) as usize)
            .collect();
        let net = Network::init(NetworkSpec {
            input_dim,
            layer_widths: widths.clone(),
            seed: 5000 + case,
            init: InitScheme::HeNormal,
        })
        .unwrap();
        let batch = Matrix::from_fn(5, input_dim, |_, _| uniform(&mut state));
        let classify = case % 2 == 0;
        let out = *widths.last().unwrap();
        let labels: Vec<usize> = (0..5).map(|r| (r + case as usize) % out).collect();
        let targets = Matrix::from_fn(5, out, |_, _| uniform(&mut state));

        let loss_of = |weights: &[Matrix]| -> f64 {
            let probe = Network::from_parts(net.spec().clone(), weights.to_vec(), None, None, 0)
                .unwrap();
            let logits = probe.forward(&batch).unwrap();
            let mut tape = Tape::new();
            let z = tape.input(logits);
            let node = if classify {
                tape.softmax_cross_entropy(z, &labels).unwrap()
            } else {
                tape.mean_squared_error(z, targets.clone()).unwrap()
            };
            tape.value(node).get(0, 0)
        };

        let mut tape = Tape::new();
        let x = tape.input(batch.clone());
        let (logits, params) = net.forward_on_tape(&mut tape, x).unwrap();
        let loss_node = if classify {
            tape.softmax_cross_entropy(logits, &labels).unwrap()
        } else {
            tape.mean_squared_error(logits, targets.clone()).unwrap()
        };
        let grads = tape.backward(loss_node).unwrap();

        for (k, &pid) in params.iter().enumerate() {
            let shape = net.weights()[k].shape();
            let mut flat = net.weights()[k].data().to_vec();
            let fd = central_difference(&mut flat, 1e-5, |buf| {
                let mut weights = net.weights().to_vec();
                weights[k] = Matrix::from_vec(shape.0, shape.1, buf.to_vec()).unwrap();
                loss_of(&weights)
            });
            let rel = max_relative_error(grads.get(pid).unwrap().data(), &fd);
            assert!(rel < 1e-5, "net {case} layer {k}: rel err {rel}");
            worst = worst.max(rel);
        }
    }
    report(
        "criterion 1 (gradient correctness)",
        start.elapsed(),
        Duration::from_secs(30),
        &format!("20 nets, worst rel err {worst:.2e}"),
    );
}

/// Criterion 2: exact removal counts, magnitude dominance, and brute-force
/// sort oracle agreement.
#[test]
fn criterion_2_pruning_exactness() {
    let start = Instant::now();
    // 100*80 + 80*25 = 10000 weights exactly.
    let net = Network::init(NetworkSpec {
        input_dim: 100,
        layer_widths: vec![80, 25],
        seed: 31337,
        init: InitScheme::HeNormal,
    })
    .unwrap();
    let d = net.spec().weight_count();
    assert_eq!(d, 10_000);
    for &ratio in &[0.5, 0.9, 0.95, 0.98] {
        let recipe = PruneRecipe {
            ratio,
            scope: PruneScope::Global,
            rule: PruneRule::Magnitude,
            prune_epoch: 0,
            tie_break: TieBreak::StableIndex,
        };
        let mask = pruning::select_magnitude(&net, &recipe).unwrap();
        let removed = (ratio * d as f64).round() as usize; // exact decimal ratios
        assert_eq!(mask.kept_total(), d - removed, "ratio {ratio}");

        let mut kept_min = f64::INFINITY;
        let mut removed_max = 0.0f64;
        for (k, w) in net.weights().iter().enumerate() {
            for r in 0..w.rows() {
                for c in 0..w.cols() {
                    let m = w.get(r, c).abs();
                    if mask.get(k, r, c) {
                        kept_min = kept_min.min(m);
                    } else {
                        removed_max = removed_max.max(m);
                    }
                }
            }
        }
        assert!(kept_min >= removed_max, "dominance at ratio {ratio}");
    }

    // Brute-force oracle agreement on 100 random nets.
    for case in 0..100u64 {
        let net = Network::init(NetworkSpec {
            input_dim: 3 + (case % 5) as usize,
            layer_widths: vec![4 + (case % 7) as usize, 3],
            seed: 100 + case,
            init: InitScheme::HeNormal,
        })
        .unwrap();
        let ratio = 0.1 + 0.8 * ((case as f64 * 0.37) % 1.0);
        let recipe = PruneRecipe {
            ratio,
            scope: PruneScope::Global,
            rule: PruneRule::Magnitude,
            prune_epoch: 0,
            tie_break: TieBreak::StableIndex,
        };
        let mask = pruning::select_magnitude(&net, &recipe).unwrap();

        // Oracle: flat (magnitude, index) sort, keep the largest.
        let mut entries: Vec<(f64, usize)> = Vec::new();
        let mut flat = 0usize;
        for w in net.weights() {
            for &x in w.data() {
                entries.push((x.abs(), flat));
                flat += 1;
            }
        }
        let d = entries.len();
        let removed = ((ratio * d as f64) + 1e-9).floor() as usize;
        entries.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then_with(|| a.1.cmp(&b.1))
        });
        let kept_oracle: BTreeSet<usize> =
            entries[..d - removed].iter().map(|&(_, i)| i).collect();

        let mut flat = 0usize;
        for (k, w) in net.weights().iter().enumerate() {
            for r in 0..w.rows() {
                for c in 0..w.cols() {
                    assert_eq!(
                        mask.get(k, r, c),
                        kept_oracle.contains(&flat),
                        "case {case} flat {flat}"
                    );
                    flat += 1;
                }
            }
        }
    }
    report(
        "criterion 2 (pruning exactness)",
        start.elapsed(),
        Duration::from_secs(10),
        "exact counts at 4 ratios, dominance, 100-net oracle agreement",
    );
}

/// Criterion 3: the norm chain holds on 100 random nets and their pruned
/// versions; power-iteration spectral norms match the dense SVD oracle.
#[test]
fn criterion_3_norm_chain() {
    let start = Instant::now();
    for case in 0..100u64 {
        let depth = 2 + (case % 3) as usize;
        let widths: Vec<usize> = (0..depth)
            .map(|k| 4 + (splitmix64(case * 31 + k as u64) % 29) as usize)
            .collect();
        let input_dim = 1 + (splitmix64(case * 17) % 8) as usize;
        let mut net = Network::init(NetworkSpec {
            input_dim,
            layer_widths: widths,
            seed: 9_000 + case,
            init: if case % 2 == 0 {
                InitScheme::HeNormal
            } else {
                InitScheme::UniformScaled
            },
        })
        .unwrap();
        let r = norm_report(&net).unwrap();
        assert!(r.flow_norm <= r.norm_product * (1.0 + 1e-9) + 1e-12, "case {case}");
        assert!(
            r.norm_product <= r.max_norm_bound * (1.0 + 1e-9) + 1e-12,
            "case {case}"
        );

        let recipe = PruneRecipe {
            ratio: 0.3 + 0.65 * ((case as f64 * 0.29) % 1.0),
            scope: PruneScope::Global,
            rule: PruneRule::Magnitude,
            prune_epoch: 0,
            tie_break: TieBreak::StableIndex,
        };
        let mask = pruning::select_magnitude(&net, &recipe).unwrap();
        pruning::apply(&mut net, mask).unwrap();
        let rp = norm_report(&net).unwrap();
        assert!(
            rp.flow_norm <= rp.norm_product * (1.0 + 1e-9) + 1e-12,
            "pruned case {case}"
        );
        assert!(
            rp.norm_product <= rp.max_norm_bound * (1.0 + 1e-9) + 1e-12,
            "pruned case {case}"
        );
    }

    // Spectral norm vs the one-sided Jacobi SVD oracle, up to 64x64.
    let mut worst = 0.0f64;
    for (i, &(rows, cols)) in [(4usize, 4usize), (16, 9), (9, 21), (32, 32), (64, 17), (64, 64)]
        .iter()
        .enumerate()
    {
        let mut state = 0xABC0 + i as u64;
        let m = Matrix::from_fn(rows, cols, |_, _| uniform(&mut state));
        let est = m.spectral_norm(20_000, 1e-13).unwrap();
        let oracle = jacobi_singular_values(m.data(), rows, cols)[0];
        let diff = (est.value - oracle).abs();
        assert!(diff < 1e-6, "{rows}x{cols}: {} vs {oracle}", est.value);
        worst = worst.max(diff);
    }
    report(
        "criterion 3 (norm chain)",
        start.elapsed(),
        Duration::from_secs(60),
        &format!("chain on 200 reports, svd worst diff {worst:.2e}"),
    );
}

/// Criterion 4: fast transform agrees with the quadratic oracle, Parseval
/// holds, and pure tones land on their exact bin.
#[test]
fn criterion_4_dft_correctness() {
    let start = Instant::now();
    for &n in &[8usize, 32, 128, 512, 1024] {
        let mut state = n as u64;
        let signal: Vec<f64> = (0..n).map(|_| uniform(&mut state) * 4.0).collect();
        let fast = dft(&signal).unwrap();
        let slow = naive_dft(&signal);
        for (k, &(re, im)) in slow.iter().enumerate() {
            let (fre, fim) = fast.amplitude(k);
            assert!((fre - re).abs() < 1e-10 && (fim - im).abs() < 1e-10, "n={n} bin {k}");
        }
        let mean_sq: f64 = signal.iter().map(|x| x * x).sum::<f64>() / n as f64;
        assert!(
            (fast.total_power() - mean_sq).abs() <= 1e-9 * mean_sq,
            "parseval at n={n}"
        );
    }
    // Pure tones peak at the exact bin.
    for &k0 in &[1usize, 5, 31] {
        let n = 128;
        let tone: Vec<f64> = (0..n)
            .map(|j| (2.0 * std::f64::consts::PI * k0 as f64 * j as f64 / n as f64).sin())
            .collect();
        let s = dft(&tone).unwrap();
        let peak_bin = (0..=n / 2)
            .max_by(|&a, &b| s.magnitude(a).partial_cmp(&s.magnitude(b)).unwrap())
            .unwrap();
        assert_eq!(peak_bin, k0);
        assert!((s.magnitude(k0) - 0.5).abs() < 1e-10);
    }
    report(
        "criterion 4 (dft correctness)",
        start.elapsed(),
        Duration::from_secs(10),
        "oracle agreement at 5 sizes, parseval, exact-bin tones",
    );
}

/// Criterion 5: on the three-sine target, the k=1 band reaches 10%
/// relative error no later than the k=5 band in at least 8 of 10 seeds.
#[test]
fn criterion_5_frequency_order() {
    let start = Instant::now();
    let spec_data = MultifreqSpec {
        bands: vec![
            Band { frequency: 1, amplitude: 1.0, phase: 0.0 },
            Band { frequency: 3, amplitude: 1.0, phase: 0.0 },
            Band { frequency: 5, amplitude: 1.0, phase: 0.0 },
        ],
        n_samples: 256,
        noise_sd: 0.0,
        seed: 4242,
        domain: (0.0, 1.0),
    };
    let grid = Grid1D::new(0.0, 1.0, 256).unwrap();
    let target = spec_data.analytic_spectrum(&grid).unwrap();
    let data = lift_constant(&gen_multifreq(&spec_data).unwrap());

    let seeds: Vec<u64> = (1..=10).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(prunelab::pipeline::thread_cap().min(seeds.len()))
        .build()
        .unwrap();
    use rayon::prelude::*;
    let outcomes: Vec<(Option<usize>, Option<usize>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut net = Network::init(NetworkSpec {
                    input_dim: 2,
                    layer_widths: vec![64, 64, 1],
                    seed: derive_seed(seed, "init"),
                    init: InitScheme::HeNormal,
                })
                .unwrap();
                let mut opt = OptimizerState::new(&net, 0.03, 0.9, 0.0).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "teacher"));
                let mut trace = vec![network_spectrum(&net, &grid).unwrap()];
                for _ in 0..500 {
                    net.train_epoch(&data, &mut opt, LossKind::Mse, 64, &mut rng)
                        .unwrap();
                    trace.push(network_spectrum(&net, &grid).unwrap());
                }
                let hits = frequency_convergence(&trace, &target, &[1, 5], 0.1).unwrap();
                (hits[0].first_hit, hits[1].first_hit)
            })
            .collect()
    });

    let ordered = outcomes
        .iter()
        .filter(|(h1, h5)| match (h1, h5) {
            (Some(a), Some(b)) => a <= b,
            (Some(_), None) => true,
            _ => false,
        })
        .count();
    assert!(
        ordered >= 8,
        "low-frequency-first ordering held in only {ordered}/10 seeds: {outcomes:?}"
    );
    report(
        "criterion 5 (frequency order)",
        start.elapsed(),
        Duration::from_secs(600),
        &format!("band 1 before band 5 in {ordered}/10 seeds"),
    );
}

/// Criterion 6: at 0.9 removed on a trained desk MLP, magnitude masks
/// disturb the flow indicator less than random masks (median over seeds).
#[test]
fn criterion_6_stability_ordering() {
    let start = Instant::now();
    let digits_spec = DigitsSpec {
        train: 2000,
        test: 400,
        noise_sd: 0.35,
        seed: 7777,
        max_shift: 4,
    };
    let (train_full, _test) = gen_digits(&digits_spec).unwrap();
    let (train, _val) = split_train_val(&train_full, 0.10, derive_seed(7777, "val-split")).unwrap();

    let seeds: Vec<u64> = (1..=10).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(prunelab::pipeline::thread_cap().min(seeds.len()))
        .build()
        .unwrap();
    use rayon::prelude::*;
    let drifts: Vec<(f64, f64)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut net = Network::init(NetworkSpec {
                    input_dim: 784,
                    layer_widths: vec![128, 10],
                    seed: derive_seed(seed, "init"),
                    init: InitScheme::HeNormal,
                })
                .unwrap();
                let mut opt = OptimizerState::new(&net, 0.1, 0.9, 5e-4).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "teacher"));
                for _ in 0..8 {
                    net.train_epoch(&train, &mut opt, LossKind::CrossEntropy, 64, &mut rng)
                        .unwrap();
                }
                let recipe = PruneRecipe {
                    ratio: 0.9,
                    scope: PruneScope::Global,
                    rule: PruneRule::Magnitude,
                    prune_epoch: 8,
                    tie_break: TieBreak::StableIndex,
                };
                let mut magnitude_net = net.clone();
                let mask = pruning::select_magnitude(&net, &recipe).unwrap();
                pruning::apply(&mut magnitude_net, mask).unwrap();
                let mag_drift = pruning_stability(&net, &magnitude_net).unwrap().flow_drift;

                let rand_recipe = PruneRecipe { rule: PruneRule::Random, ..recipe };
                let mut random_net = net.clone();
                let rmask =
                    pruning::select_random(&net, &rand_recipe, derive_seed(seed, "mask")).unwrap();
                pruning::apply(&mut random_net, rmask).unwrap();
                let rnd_drift = pruning_stability(&net, &random_net).unwrap().flow_drift;
                (mag_drift, rnd_drift)
            })
            .collect()
    });

    let mut mags: Vec<f64> = drifts.iter().map(|d| d.0).collect();
    let mut rnds: Vec<f64> = drifts.iter().map(|d| d.1).collect();
    mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
    rnds.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med_mag = median_of_sorted(&mags);
    let med_rnd = median_of_sorted(&rnds);
    assert!(
        med_mag < med_rnd,
        "magnitude drift {med_mag} not below random drift {med_rnd}"
    );
    report(
        "criterion 6 (stability ordering)",
        start.elapsed(),
        Duration::from_secs(300),
        &format!("median flow drift {med_mag:.4} (magnitude) vs {med_rnd:.4} (random)"),
    );
}

fn desk_config(ratio: f64) -> ExperimentConfig {
    let mut cfg = preset("wilton-desk").unwrap();
    cfg.prune.as_mut().unwrap().ratio = ratio;
    cfg
}

fn median_acc(rows: &[prunelab::metrics::MetricsRow], pipeline: &str) -> f64 {
    let mut accs: Vec<f64> = final_accuracies(rows)
        .into_iter()
        .filter(|(p, _, _)| p == pipeline)
        .map(|(_, _, a)| a)
        .collect();
    assert_eq!(accs.len(), 5, "{pipeline}: expected 5 seeds");
    accs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    median_of_sorted(&accs)
}

/// Criterion 7: on the desk preset at 0.95 removed, median final test
/// accuracy over 5 seeds orders as
/// dense >= wilton >= vanilla-mbp >= random-prune.
#[test]
fn criterion_7_pipeline_ordering() {
    let start = Instant::now();
    let cfg = desk_config(0.95);
    let wilton = run_wilton(&cfg).unwrap();

    // Baselines reuse the wilton teachers through checkpoint files, seed
    // for seed.
    let dir = tempfile::tempdir().unwrap();
    for run in &wilton.seed_runs {
        run.teacher_final
            .save(&dir.path().join(format!("teacher-s{}.wltn", run.seed)))
            .unwrap();
    }
    let template = dir
        .path()
        .join("teacher-s{seed}.wltn")
        .to_str()
        .unwrap()
        .to_string();

    let mut vanilla_cfg = desk_config(0.95);
    vanilla_cfg.pipeline = PipelineKind::VanillaMbp;
    vanilla_cfg.distill = None;
    vanilla_cfg.teacher_checkpoint = Some(template.clone());
    let vanilla = run_baseline(&vanilla_cfg).unwrap();

    let mut random_cfg = desk_config(0.95);
    random_cfg.pipeline = PipelineKind::RandomPrune;
    random_cfg.distill = None;
    random_cfg.prune.as_mut().unwrap().rule = RuleName::Random;
    random_cfg.teacher_checkpoint = Some(template);
    let random = run_baseline(&random_cfg).unwrap();

    // Dense accuracy per seed is the wilton run's final teacher row.
    let mut dense_accs: Vec<f64> = cfg
        .seeds
        .iter()
        .map(|&seed| {
            wilton
                .rows
                .iter()
                .filter(|r| r.seed == seed && r.phase == Phase::Teacher)
                .max_by_key(|r| r.epoch)
                .and_then(|r| r.test_acc)
                .expect("teacher rows")
        })
        .collect();
    dense_accs.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let med_dense = median_of_sorted(&dense_accs);
    let med_wilton = median_acc(&wilton.rows, "wilton");
    let med_vanilla = median_acc(&vanilla.rows, "vanilla-mbp");
    let med_random = median_acc(&random.rows, "random-prune");

    assert!(
        med_wilton >= med_vanilla,
        "wilton {med_wilton} < vanilla {med_vanilla}"
    );
    assert!(
        med_vanilla >= med_random,
        "vanilla {med_vanilla} < random {med_random}"
    );
    assert!(
        med_dense >= med_wilton,
        "dense {med_dense} < wilton {med_wilton}"
    );
    report(
        "criterion 7 (pipeline ordering)",
        start.elapsed(),
        Duration::from_secs(45 * 60),
        &format!(
            "medians: dense {med_dense:.4} >= wilton {med_wilton:.4} >= vanilla {med_vanilla:.4} >= random {med_random:.4}"
        ),
    );
}

/// Criterion 8: pruning at mid-training is no worse than pruning at the
/// final epoch (median over 5 seeds, 0.9 removed).
#[test]
fn criterion_8_ablation_trend() {
    let start = Instant::now();
    let cfg = desk_config(0.9);
    let prune_epochs = [0usize, 10, 20, 30, 40];
    let output = run_ablation_prune_epoch(&cfg, &prune_epochs, &[0.9]).unwrap();

    // One entry per requested pair and seed; no silent skips.
    for &e in &prune_epochs {
        let n = output
            .cells
            .iter()
            .filter(|c| c.prune_epoch == e && c.ratio == 0.9)
            .count();
        assert_eq!(n, cfg.seeds.len(), "epoch {e} cell count");
    }

    let median_at = |epoch: usize| -> f64 {
        let mut accs: Vec<f64> = output
            .cells
            .iter()
            .filter(|c| c.prune_epoch == epoch)
            .map(|c| c.final_test_acc)
            .collect();
        accs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        median_of_sorted(&accs)
    };
    let at_20 = median_at(20);
    let at_40 = median_at(40);
    assert!(
        at_20 >= at_40,
        "median accuracy pruning at epoch 20 ({at_20}) below epoch 40 ({at_40})"
    );
    report(
        "criterion 8 (ablation trend)",
        start.elapsed(),
        Duration::from_secs(60 * 60),
        &format!("median acc at prune epoch 20: {at_20:.4} >= epoch 40: {at_40:.4}"),
    );
}

/// Criterion 9: identical config and seed reproduce byte-identical metrics
/// CSV, and checkpoints round-trip bitwise including masks and optimizer
/// state.
#[test]
fn criterion_9_determinism_and_persistence() {
    let start = Instant::now();
    let mut cfg = preset("wilton-desk").unwrap();
    cfg.seeds = vec![3];
    cfg.epochs_teacher = 3;
    cfg.epochs_student = 3;
    cfg.prune.as_mut().unwrap().prune_epoch = 2;
    match &mut cfg.dataset {
        prunelab::config::DatasetConfig::Digits { train, test, .. } => {
            *train = 400;
            *test = 100;
        }
        _ => unreachable!(),
    }
    cfg.validate().unwrap();

    let csv_of = |out: &prunelab::pipeline::PipelineOutput| -> String {
        let mut s = String::new();
        for row in &out.rows {
            s.push_str(&to_csv_line(row));
            s.push('\n');
        }
        s
    };
    let a = run_pipeline(&cfg).unwrap();
    let b = run_pipeline(&cfg).unwrap();
    assert_eq!(csv_of(&a), csv_of(&b), "metrics CSV not byte-identical");
    let ckpt_a = a.seed_runs[0].student_final.as_ref().unwrap().encode();
    let ckpt_b = b.seed_runs[0].student_final.as_ref().unwrap().encode();
    assert_eq!(ckpt_a, ckpt_b, "student checkpoints differ across reruns");

    // Round trip with masks, velocities, and RNG state all populated.
    let student = a.seed_runs[0].student_final.as_ref().unwrap();
    assert!(student.masks.is_some());
    assert!(student.velocities.iter().any(|v| v.max_abs() > 0.0));
    let decoded = Checkpoint::decode(&ckpt_a).unwrap();
    assert_eq!(student, &decoded);
    assert_eq!(ckpt_a, decoded.encode(), "save(load(x)) not byte-identical");

    // Resuming the stored RNG continues the stream exactly.
    let mut resumed = decoded.rng.restore();
    let mut fresh = student.rng.restore();
    use rand::Rng;
    for _ in 0..8 {
        assert_eq!(resumed.random::<u64>(), fresh.random::<u64>());
    }

    // A dataset handle survives the gather path deterministically too.
    let (d1, _) = gen_digits(&DigitsSpec { train: 50, test: 20, ..Default::default() }).unwrap();
    let (d2, _) = gen_digits(&DigitsSpec { train: 50, test: 20, ..Default::default() }).unwrap();
    assert_eq!(d1, d2);
    let _: &DatasetHandle = &d1;
    if let Targets::Labels { labels, .. } = &d1.targets {
        assert_eq!(labels.len(), 50);
    }

    report(
        "criterion 9 (determinism & persistence)",
        start.elapsed(),
        Duration::from_secs(300),
        "byte-identical reruns, bitwise checkpoint round trip",
    );
}
