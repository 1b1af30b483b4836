// Temporary probe; removed before release.
use mmdvs_core::*;
use std::time::Instant;

fn make(kind: &str, seed: u64, n: usize) -> (SamplePair, Vec<usize>) {
    let setting = mmdvs_core::bench::SyntheticSetting {
        kind: kind.parse().unwrap(),
        dim: 20,
        rho: 0.1,
        n,
        seed: RngStream::new(seed),
    };
    mmdvs_core::bench::generate(&setting).unwrap()
}

#[test]
#[ignore]
fn probe_training() {
    let (pair, _truth) = make("shifted_means", 1, 200);
    let scales = median_lengthscales(&pair).unwrap();
    println!("scales[0..4] = {:?}", &scales[0..4]);
    let t0 = Instant::now();
    let res = train_ard(
        &pair,
        &pair,
        &scales,
        0.01,
        &ObjectiveConfig::default(),
        &TrainConfig::default(),
        &RngStream::new(0),
    )
    .unwrap();
    println!(
        "full-pair train: epochs={} stopped_early={} time={:?} final_loss={:.4}",
        res.epochs_run,
        res.stopped_early,
        t0.elapsed(),
        res.train_loss_trace.last().unwrap()
    );
    println!("weights = {:?}", res.weights.iter().map(|w| (w.abs() * 100.0).round() / 100.0).collect::<Vec<_>>());
}

#[test]
#[ignore]
fn probe_grid() {
    let (pair, _t) = make("shifted_means", 1, 200);
    let scales = median_lengthscales(&pair).unwrap();
    let t0 = Instant::now();
    let grid = generate_lambda_grid(
        &pair,
        &scales,
        &ObjectiveConfig::default(),
        &TrainConfig::default(),
        &GridConfig::default(),
        &RngStream::new(7),
    )
    .unwrap();
    println!("grid = {:?} in {:?}", grid.values, t0.elapsed());
}

#[test]
#[ignore]
fn probe_dirac_fig1() {
    let (pair, truth) = make("redundant_dirac", 3, 200);
    let scales = median_lengthscales(&pair).unwrap();
    println!("truth={truth:?} scales[0..4]={:?}", &scales[0..4]);
    for lambda in [0.0, 0.5] {
        let res = train_ard(
            &pair,
            &pair,
            &scales,
            lambda,
            &ObjectiveConfig::default(),
            &TrainConfig::default(),
            &RngStream::new(0),
        )
        .unwrap();
        println!(
            "lambda={lambda}: epochs={} w[0..4]={:?} w[5]={} w[19]={}",
            res.epochs_run,
            &res.weights[0..4],
            res.weights[5],
            res.weights[19]
        );
    }
}

#[test]
#[ignore]
fn probe_cv_run() {
    let (pair, truth) = make("shifted_means", 1, 200);
    let scales = median_lengthscales(&pair).unwrap();
    let cfg = PipelineConfig::new(scales.clone());
    let t0 = Instant::now();
    let grid = generate_lambda_grid(
        &pair,
        &scales,
        &cfg.objective,
        &cfg.train,
        &GridConfig::default(),
        &RngStream::new(11).child(0),
    )
    .unwrap();
    println!("grid {:?} in {:?}", grid.values, t0.elapsed());
    let t1 = Instant::now();
    let res = cv_aggregation(&pair, &grid, &cfg, &RngStream::new(11).child(1)).unwrap();
    let m = mmdvs_core::bench::evaluate(&res.selected, &truth);
    println!(
        "cv in {:?}: selected={:?} F={:.3} Pr={:.3} Re={:.3}",
        t1.elapsed(),
        res.selected,
        m.f_score,
        m.precision,
        m.recall
    );
    let score = res.score_vector.unwrap();
    println!("score = {:?}", score.iter().map(|s| (s * 1000.0).round() / 1000.0).collect::<Vec<_>>());
}

#[test]
#[ignore]
fn probe_landscape() {
    let (pair, _t) = make("shifted_means", 1, 200);
    let scales = median_lengthscales(&pair).unwrap();
    let cfg = ObjectiveConfig::default();
    let mk = |signal: f64, noise: f64| {
        let mut w = vec![noise; 20];
        w[0] = signal;
        w[1] = signal;
        KernelParams::new(w, scales.clone()).unwrap()
    };
    for (s, n) in [(1.0, 1.0), (0.1, 0.1), (1.0, 0.0), (3.0, 0.0), (5.0, 0.0), (2.0, 0.1), (0.5, 0.0), (0.1, 0.0)] {
        let p = mk(s, n);
        let m = mmd_u(&pair, &p).unwrap();
        let v = variance_u(&pair, &p).unwrap();
        let r = ratio_objective(&pair, &p, &cfg).unwrap();
        println!("signal={s:4} noise={n:4}: mmd={m:12.6e} var={v:12.6e} ratio={r:10.4}");
    }
}

#[test]
#[ignore]
fn probe_cv_diagnostics() {
    let (pair, _t) = make("shifted_means", 1, 200);
    let scales = median_lengthscales(&pair).unwrap();
    let mut cfg = PipelineConfig::new(scales.clone());
    cfg.k_splits = 4;
    let grid = LambdaGrid::from_values(vec![0.01, 0.364, 0.718, 1.072, 1.426, 1.78]).unwrap();
    let res = cv_aggregation(&pair, &grid, &cfg, &RngStream::new(11).child(1)).unwrap();
    for d in &res.diagnostics {
        let top: Vec<(usize, f64)> = {
            let mut idx: Vec<usize> = (0..20).collect();
            idx.sort_by(|a, b| d.normalized_weights[*b].total_cmp(&d.normalized_weights[*a]));
            idx.iter().take(4).map(|&i| (i, (d.normalized_weights[i] * 100.0).round() / 100.0)).collect()
        };
        println!(
            "lam={:5.3} split={} p={:6.4} lval={:8.4} nsel={:2} sel(top4 norm w)={:?} sel={:?}",
            d.lambda, d.split, d.p_value, d.objective_val, d.selected.len(), top,
            &d.selected[..d.selected.len().min(8)]
        );
    }
}

#[test]
#[ignore]
fn probe_multiseed() {
    let mut f_cv = vec![];
    let mut f_mmd = vec![];
    let mut f_log = vec![];
    for seed in 0..6u64 {
        let (pair, truth) = make("shifted_means", 1000 + seed, 200);
        let scales = median_lengthscales(&pair).unwrap();
        let cfg = PipelineConfig::new(scales.clone());
        let master = RngStream::new(seed);
        let grid = generate_lambda_grid(&pair, &scales, &cfg.objective, &cfg.train, &GridConfig::default(), &master.child(0)).unwrap();
        let res = cv_aggregation(&pair, &grid, &cfg, &master.child(1)).unwrap();
        let m = mmdvs_core::bench::evaluate(&res.selected, &truth);
        let bres = mmdvs_core::bench::mmd_baseline(&pair, &cfg, &master.child(2)).unwrap();
        let bm = mmdvs_core::bench::evaluate(&bres.selected, &truth);
        let lres = mmdvs_core::bench::logistic_baseline(&pair, &Default::default(), &master.child(3)).unwrap();
        let lm = mmdvs_core::bench::evaluate(&lres.selected, &truth);
        println!(
            "seed {seed}: grid_up={:.2} cv: sel={:?} F={:.2} | mmd: nsel={} F={:.2} | log: nsel={} F={:.2}",
            grid.values.last().unwrap(), res.selected, m.f_score, bres.selected.len(), bm.f_score,
            lres.selected.len(), lm.f_score
        );
        f_cv.push(m.f_score);
        f_mmd.push(bm.f_score);
        f_log.push(lm.f_score);
    }
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    println!("MEAN F: cv={:.3} mmd={:.3} log={:.3}", mean(&f_cv), mean(&f_mmd), mean(&f_log));
}

#[test]
#[ignore]
fn probe_plateau_hypothesis() {
    let (pair, _t) = make("shifted_means", 1001, 200);
    let scales = median_lengthscales(&pair).unwrap();
    let split = split_pair(&pair, 0.5, &RngStream::new(77)).unwrap();
    let show = |label: &str, cfg: &TrainConfig| {
        let res = train_ard(&split.train, &split.val, &scales, 0.718, &ObjectiveConfig::default(), cfg, &RngStream::new(5)).unwrap();
        let mut w: Vec<(usize, f64)> = res.weights.iter().map(|v| v.abs()).enumerate().collect();
        w.sort_by(|a, b| b.1.total_cmp(&a.1));
        let top: Vec<(usize, f64)> = w.iter().take(6).map(|(i, v)| (*i, (v * 1000.0).round() / 1000.0)).collect();
        println!(
            "{label}: epochs={} early={} loss={:.4} top6={:?}",
            res.epochs_run, res.stopped_early, res.train_loss_trace.last().unwrap(), top
        );
    };
    let a = TrainConfig { max_epochs: 2000, ..Default::default() };
    show("A spec-default   ", &a);
    let b = TrainConfig { max_epochs: 2000, early_stop_tol: 1e-5, ..Default::default() };
    show("B tol=1e-5       ", &b);
    let c = TrainConfig { max_epochs: 2000, plateau_patience: 100000, ..Default::default() };
    show("C no-plateau     ", &c);
    let d = TrainConfig { max_epochs: 6000, plateau_patience: 100000, ..Default::default() };
    show("D no-plateau 6000", &d);
}

#[test]
#[ignore]
fn probe_lr_decay_variants() {
    let (pair, _t) = make("shifted_means", 1001, 200);
    let scales = median_lengthscales(&pair).unwrap();
    let split = split_pair(&pair, 0.5, &RngStream::new(77)).unwrap();
    let show = |label: &str, lambda: f64, cfg: &TrainConfig| {
        let res = train_ard(&split.train, &split.val, &scales, lambda, &ObjectiveConfig::default(), cfg, &RngStream::new(5)).unwrap();
        let mut w: Vec<(usize, f64)> = res.weights.iter().map(|v| v.abs()).enumerate().collect();
        w.sort_by(|a, b| b.1.total_cmp(&a.1));
        let top: Vec<String> = w.iter().take(5).map(|(i, v)| format!("{i}:{v:.2e}")).collect();
        let rest: Vec<String> = w.iter().skip(5).take(3).map(|(i, v)| format!("{i}:{v:.2e}")).collect();
        println!(
            "{label} lam={lambda}: ep={} early={} top5={top:?} next3={rest:?}",
            res.epochs_run, res.stopped_early
        );
    };
    let e = TrainConfig { plateau_factor: 0.1, min_lr: 1e-8, max_epochs: 6000, ..Default::default() };
    show("E f=0.1 minlr=1e-8", 0.718, &e);
    show("E f=0.1 minlr=1e-8", 0.364, &e);
    show("E f=0.1 minlr=1e-8", 0.01, &e);
    let f = TrainConfig { plateau_factor: 0.1, min_lr: 1e-8, max_epochs: 6000, early_stop_window: 300, ..Default::default() };
    show("F window=300      ", 0.718, &f);
    let g = TrainConfig { plateau_factor: 0.5, min_lr: 1e-8, max_epochs: 6000, ..Default::default() };
    show("G f=0.5 minlr=1e-8", 0.718, &g);
}

#[test]
#[ignore]
fn probe_cv_with_min_lr() {
    let mut fs = vec![];
    for seed in 0..4u64 {
        let (pair, truth) = make("shifted_means", 1000 + seed, 200);
        let scales = median_lengthscales(&pair).unwrap();
        let mut cfg = PipelineConfig::new(scales.clone());
        cfg.train.min_lr = 1e-8;
        let master = RngStream::new(seed);
        let grid = generate_lambda_grid(&pair, &scales, &cfg.objective, &cfg.train, &GridConfig::default(), &master.child(0)).unwrap();
        let res = cv_aggregation(&pair, &grid, &cfg, &master.child(1)).unwrap();
        let m = mmdvs_core::bench::evaluate(&res.selected, &truth);
        let score = res.score_vector.unwrap();
        let s: Vec<String> = score.iter().map(|v| format!("{v:.3}")).collect();
        println!("seed {seed}: up={:.2} sel={:?} F={:.2}", grid.values.last().unwrap(), res.selected, m.f_score);
        println!("   score={s:?}");
        fs.push(m.f_score);
    }
    println!("mean F = {:.3}", fs.iter().sum::<f64>() / fs.len() as f64);
}

#[test]
#[ignore]
fn probe_pvalue_dilution() {
    use mmdvs_core::swdtest::*;
    // Validation-sized data: n=100 per side, shift 0.5 on coords {0,1}.
    for num_projections in [100usize, 20, 10] {
        for nsel in [2usize, 5, 9, 16, 20] {
            let mut rejects = 0;
            let mut psum = 0.0;
            let reps = 30;
            for rep in 0..reps {
                let (pair, _) = make("shifted_means", 500 + rep, 100);
                let cols: Vec<usize> = (0..nsel).collect();
                let sub = pair.restrict_columns(&cols).unwrap();
                let cfg = PermutationTestConfig {
                    num_permutations: 200,
                    num_projections,
                    alpha: 0.05,
                    seed: RngStream::new(9000 + rep).child(num_projections as u64),
                };
                let p = permutation_pvalue(sub.x(), sub.y(), &cfg).unwrap();
                psum += p;
                if p < 0.05 {
                    rejects += 1;
                }
            }
            println!(
                "L={num_projections:3} nsel={nsel:2}: reject rate={:.2} mean p={:.3}",
                rejects as f64 / reps as f64,
                psum / reps as f64
            );
        }
    }
}

#[test]
#[ignore]
fn probe_insample_optimality() {
    let (pair, _t) = make("shifted_means", 1001, 200);
    let scales = median_lengthscales(&pair).unwrap();
    let split = split_pair(&pair, 0.5, &RngStream::new(77)).unwrap();
    let lambda = 0.718;
    let cfg = ObjectiveConfig::default();
    let res = train_ard(&split.train, &split.val, &scales, lambda, &cfg, &TrainConfig { min_lr: 1e-8, ..Default::default() }, &RngStream::new(5)).unwrap();
    let trained = res.weights.clone();
    let loss_of = |w: &Vec<f64>| {
        let p = KernelParams::new(w.clone(), scales.clone()).unwrap();
        let lg = regularized_loss(&split.train, &p, lambda, &cfg).unwrap();
        let r_train = ratio_objective(&split.train, &p, &cfg).unwrap();
        let r_val = ratio_objective(&split.val, &p, &cfg).unwrap();
        (lg.loss, r_train, r_val)
    };
    let (l1, rt1, rv1) = loss_of(&trained);
    println!("trained (junk incl): loss={l1:.5} ratio_train={rt1:.4} ratio_val={rv1:.4}");
    // Zero all but the true signal coordinates.
    let mut clean = vec![0.0; 20];
    clean[0] = trained[0].abs();
    clean[1] = trained[1].abs();
    let (l2, rt2, rv2) = loss_of(&clean);
    println!("signal only         : loss={l2:.5} ratio_train={rt2:.4} ratio_val={rv2:.4}");
    // Signal at the scale the optimizer picked for survivors, junk zeroed,
    // scanning the signal magnitude.
    for s in [0.01, 0.03, 0.1, 0.3, 1.0] {
        let mut w = vec![0.0; 20];
        w[0] = s;
        w[1] = s;
        let (l, rt, rv) = loss_of(&w);
        println!("signal={s:5}        : loss={l:.5} ratio_train={rt:.4} ratio_val={rv:.4}");
    }
}

#[test]
#[ignore]
fn probe_plateau_threshold() {
    let (pair, _t) = make("shifted_means", 1001, 200);
    let scales = median_lengthscales(&pair).unwrap();
    let split = split_pair(&pair, 0.5, &RngStream::new(77)).unwrap();
    for lambda in [0.01, 0.08, 0.364, 0.718, 1.78] {
        let t0 = std::time::Instant::now();
        let res = train_ard(&split.train, &split.val, &scales, lambda, &ObjectiveConfig::default(), &TrainConfig::default(), &RngStream::new(5)).unwrap();
        let mut w: Vec<(usize, f64)> = res.weights.iter().map(|v| v.abs()).enumerate().collect();
        w.sort_by(|a, b| b.1.total_cmp(&a.1));
        let top: Vec<String> = w.iter().take(6).map(|(i, v)| format!("{i}:{v:.2e}")).collect();
        println!(
            "lam={lambda:5}: ep={:5} t={:5.1}s early={} top6={top:?}",
            res.epochs_run, t0.elapsed().as_secs_f64(), res.stopped_early
        );
    }
}

#[test]
#[ignore]
fn probe_projected_dynamics() {
    let (pair, _t) = make("shifted_means", 1001, 200);
    let scales = median_lengthscales(&pair).unwrap();
    let split = split_pair(&pair, 0.5, &RngStream::new(77)).unwrap();
    let obj = ObjectiveConfig::default();
    let tc = TrainConfig::default();

    // Projected nonnegative Adam: clamp at zero, boundary subgradient +lambda.
    let projected = |lambda: f64| -> Vec<f64> {
        let mut a = vec![1.0f64; 20];
        let mut state = AdamState::new(20);
        let mut lr = tc.initial_lr;
        let mut best = f64::INFINITY;
        let mut stagnant = 0;
        let mut train_trace: Vec<f64> = vec![];
        let mut val_trace: Vec<f64> = vec![];
        for _epoch in 1..=tc.max_epochs {
            let params = KernelParams::new(a.clone(), scales.clone()).unwrap();
            let mut lg = regularized_loss(&split.train, &params, lambda, &obj).unwrap();
            for d in 0..20 {
                if a[d] == 0.0 {
                    lg.grad[d] += lambda;
                }
            }
            adam_step(&mut state, &mut a, &lg.grad, lr, &tc);
            for v in a.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
            let params = KernelParams::new(a.clone(), scales.clone()).unwrap();
            let tl = regularized_loss(&split.train, &params, lambda, &obj).unwrap().loss;
            let vl = regularized_loss(&split.val, &params, lambda, &obj).unwrap().loss;
            train_trace.push(tl);
            val_trace.push(vl);
            if best - tl > tc.plateau_threshold {
                best = tl;
                stagnant = 0;
            } else {
                stagnant += 1;
                if stagnant >= tc.plateau_patience {
                    lr = (lr * tc.plateau_factor).max(tc.min_lr);
                    stagnant = 0;
                }
            }
            let w = tc.early_stop_window;
            if train_trace.len() >= w {
                let range = |t: &Vec<f64>| {
                    let tail = &t[t.len() - w..];
                    tail.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                        - tail.iter().copied().fold(f64::INFINITY, f64::min)
                };
                if range(&train_trace) < tc.early_stop_tol && range(&val_trace) < tc.early_stop_tol {
                    break;
                }
            }
        }
        a
    };

    for lambda in [0.08, 0.364, 0.718] {
        let a = projected(lambda);
        let mut w: Vec<(usize, f64)> = a.iter().copied().enumerate().collect();
        w.sort_by(|x, y| y.1.total_cmp(&x.1));
        let top: Vec<String> = w.iter().take(8).map(|(i, v)| format!("{i}:{v:.2e}")).collect();
        let nz = a.iter().filter(|v| **v > 0.0).count();
        println!("PROJ lam={lambda}: nonzero={nz} top8={top:?}");
    }
}

#[test]
#[ignore]
fn probe_minibatch() {
    let (pair, _t) = make("shifted_means", 1001, 200);
    let scales = median_lengthscales(&pair).unwrap();
    let split = split_pair(&pair, 0.5, &RngStream::new(77)).unwrap();
    for batch in [Some(25usize), Some(50)] {
        for lambda in [0.08, 0.364, 0.718] {
            let cfg = TrainConfig { batch_size: batch, ..Default::default() };
            let res = train_ard(&split.train, &split.val, &scales, lambda, &ObjectiveConfig::default(), &cfg, &RngStream::new(5)).unwrap();
            let mut w: Vec<(usize, f64)> = res.weights.iter().map(|v| v.abs()).enumerate().collect();
            w.sort_by(|a, b| b.1.total_cmp(&a.1));
            let top: Vec<String> = w.iter().take(8).map(|(i, v)| format!("{i}:{v:.2e}")).collect();
            println!("BATCH={:?} lam={lambda}: ep={} top8={top:?}", batch, res.epochs_run);
        }
    }
}

#[test]
#[ignore]
fn probe_multiseed_batch() {
    let mut f_cv = vec![];
    let mut f_mmd = vec![];
    for seed in 0..6u64 {
        let (pair, truth) = make("shifted_means", 1000 + seed, 200);
        let scales = median_lengthscales(&pair).unwrap();
        let mut cfg = PipelineConfig::new(scales.clone());
        cfg.train.batch_size = Some(25);
        let master = RngStream::new(seed);
        let grid = generate_lambda_grid(&pair, &scales, &cfg.objective, &cfg.train, &GridConfig::default(), &master.child(0)).unwrap();
        let res = cv_aggregation(&pair, &grid, &cfg, &master.child(1)).unwrap();
        let m = mmdvs_core::bench::evaluate(&res.selected, &truth);
        let bres = mmdvs_core::bench::mmd_baseline(&pair, &cfg, &master.child(2)).unwrap();
        let bm = mmdvs_core::bench::evaluate(&bres.selected, &truth);
        let score = res.score_vector.unwrap();
        let s: Vec<String> = score.iter().map(|v| format!("{v:.2}")).collect();
        println!(
            "seed {seed}: up={:.2} cv sel={:?} F={:.2} | mmd nsel={} F={:.2}",
            grid.values.last().unwrap(), res.selected, m.f_score, bres.selected.len(), bm.f_score
        );
        println!("   score={s:?}");
        f_cv.push(m.f_score);
        f_mmd.push(bm.f_score);
    }
    let mean = |v: &Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    println!("MEAN F: cv={:.3} mmd={:.3}", mean(&f_cv), mean(&f_mmd));
}

#[test]
#[ignore]
fn probe_seed3_decomposition() {
    let (pair, _truth) = make("shifted_means", 1003, 200);
    let scales = median_lengthscales(&pair).unwrap();
    let mut cfg = PipelineConfig::new(scales.clone());
    cfg.train.batch_size = Some(25);
    let master = RngStream::new(3);
    let grid = generate_lambda_grid(&pair, &scales, &cfg.objective, &cfg.train, &GridConfig::default(), &master.child(0)).unwrap();
    println!("grid={:?}", grid.values);
    let res = cv_aggregation(&pair, &grid, &cfg, &master.child(1)).unwrap();
    for &lambda in &grid.values {
        let cells: Vec<&PerLambdaDiagnostics> = res.diagnostics.iter().filter(|d| d.lambda == lambda).collect();
        let pass = cells.iter().filter(|d| d.p_value < 0.05).count();
        let mean_nsel: f64 = cells.iter().map(|d| d.selected.len() as f64).sum::<f64>() / cells.len() as f64;
        let mean_lval: f64 = cells.iter().map(|d| d.objective_val.max(0.0)).sum::<f64>() / cells.len() as f64;
        // Junk mass this lambda contributes: mean over cells of filtered lval*norm for junk coords 2..20.
        let mut junk_mass = 0.0;
        let mut sig_mass = 0.0;
        for d in cells.iter().filter(|d| d.p_value < 0.05) {
            let l = d.objective_val.max(0.0);
            junk_mass += l * d.normalized_weights[2..].iter().sum::<f64>() / 18.0;
            sig_mass += l * (d.normalized_weights[0] + d.normalized_weights[1]) / 2.0;
        }
        println!(
            "lam={lambda:6.3}: pass={pass}/10 mean_nsel={mean_nsel:4.1} mean_lval={mean_lval:6.3} sig_mass={:.3} junk_mass={:.3}",
            sig_mass / 10.0, junk_mass / 10.0
        );
    }
}
