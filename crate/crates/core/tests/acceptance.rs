//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. Progress and diagnostics go to stderr.

mod common;

use std::time::Instant;

use common::{
    adamax_recurrence, brute_auroc, brute_average_precision, brute_fpr95, gradcheck, random_tensor,
    rng, store_of, tied_scores, toy_batches, toy_config,
};
use food::checkpoint::Checkpoint;
use food::config::RunConfig;
use food::detect::ThresholdSet;
use food::eval::{MetricsReport, ScoreVariant};
use food::metrics::{aupr, auroc, fpr_at_95_tpr, Positives};
use food::model::FoodModel;
use food::optim::{Adamax, AdamaxConfig};
use food::pipeline::{self, Experiment, Splits};
use food::radar::{read_dataset, write_dataset, Dataset};
use food::tensor::{Gradients, Graph, ParamStore, Result as TensorResult, Tensor, Var};
use rand::Rng;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Epochs for the end-to-end run (the criterion allows up to 30).
const E2E_EPOCHS: usize = 20;
/// Epochs for the two additional ablation seeds.
const ABLATION_EPOCHS: usize = 10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst: Vec<(&str, f64)> = Vec::new();
    let mut check =
        |name: &'static str,
         shapes: &[&[usize]],
         out: &[usize],
         op: &dyn Fn(&mut Graph<'_, f64>, &[Var]) -> TensorResult<Var>| {
            let tensors = shapes.iter().map(|s| random_tensor(s, &mut r)).collect();
            let target = random_tensor(out, &mut r);
            let (store, ids) = store_of(tensors);
            let err = gradcheck(&store, 1e-4, |g| {
                let vars: Vec<Var> = ids.iter().map(|&id| g.param(id)).collect();
                let y = op(g, &vars)?;
                let t = g.input(target.clone(), false);
                g.mse(y, t)
            });
            worst.push((name, err));
        };
    check(
        "conv2d",
        &[&[2, 2, 5, 6], &[3, 2, 3, 3], &[3]],
        &[2, 3, 3, 3],
        &|g, v| g.conv2d(v[0], v[1], v[2], 2, 1),
    );
    check(
        "conv_transpose2d",
        &[&[2, 3, 3, 4], &[3, 2, 3, 3], &[2]],
        &[2, 2, 6, 8],
        &|g, v| g.conv_transpose2d(v[0], v[1], v[2], 2, 1, 1),
    );
    check("linear", &[&[4, 5], &[3, 5], &[3]], &[4, 3], &|g, v| {
        g.linear(v[0], v[1], v[2])
    });
    check("leaky_relu", &[&[2, 3, 4, 4]], &[2, 3, 4, 4], &|g, v| {
        Ok(g.leaky_relu(v[0], 0.2))
    });
    check("relu", &[&[2, 3, 4, 4]], &[2, 3, 4, 4], &|g, v| {
        Ok(g.relu(v[0]))
    });
    check("avg_pool2d", &[&[2, 3, 4, 8]], &[2, 3, 2, 4], &|g, v| {
        g.avg_pool2d(v[0], 2)
    });
    check("mse", &[&[3, 7]], &[3, 7], &|_, v| Ok(v[0]));

    let model = FoodModel::<f64>::build(toy_config(102)).expect("toy model");
    let batches = toy_batches(2, 103);
    let err = gradcheck(model.params(), 1e-4, |g| {
        let b = [&batches[0], &batches[1], &batches[2]];
        Ok(model.training_losses(g, b).expect("losses").total)
    });
    worst.push(("toy model", err));

    let secs = start.elapsed().as_secs_f64();
    let max = worst.iter().map(|w| w.1).fold(0.0, f64::max);
    let detail = worst
        .iter()
        .map(|(n, e)| format!("{n}={e:.1e}"))
        .collect::<Vec<_>>()
        .join(" ");
    outcome(
        max < 1e-4 && secs < 60.0,
        format!("max rel err {max:.2e} < 1e-4 in {secs:.1}s < 60s [{detail}]"),
    )
}

fn metric_oracles() -> Outcome {
    let mut r = rng(201);
    let mut auroc_gap = 0.0f64;
    let mut counting_mismatches = 0;
    for _ in 0..200 {
        let levels = r.random_range(2..20);
        let id = tied_scores(r.random_range(1..=50), levels, &mut r);
        let ood = tied_scores(r.random_range(1..=50), levels, &mut r);
        auroc_gap = auroc_gap.max((auroc(&id, &ood).unwrap() - brute_auroc(&id, &ood)).abs());
        if fpr_at_95_tpr(&id, &ood).unwrap() != brute_fpr95(&id, &ood) {
            counting_mismatches += 1;
        }
        let ap = aupr(&id, &ood, Positives::Ood).unwrap();
        if (ap - brute_average_precision(&ood, &id)).abs() > 1e-12 {
            counting_mismatches += 1;
        }
    }
    let hundred: Vec<f64> = (1..=100).map(f64::from).collect();
    let examples = [
        fpr_at_95_tpr(&hundred, &[90.0, 96.0, 200.0]).unwrap() == 1.0 / 3.0,
        brute_fpr95(&hundred, &[90.0, 96.0, 200.0]) == 1.0 / 3.0,
        fpr_at_95_tpr(&hundred, &[101.0, 500.0]).unwrap() == 0.0,
        aupr(&[0.1, 0.4], &[0.3], Positives::Ood).unwrap() == 0.5,
        brute_average_precision(&[0.3], &[0.1, 0.4]) == 0.5,
        aupr(&[0.1, 0.2], &[0.3, 0.4], Positives::Ood).unwrap() == 1.0,
        aupr(&[0.1, 0.2], &[0.3, 0.4], Positives::Id).unwrap() == 1.0,
        aupr(&[], &[0.3], Positives::Ood).is_err(),
        auroc(&[0.1, 0.3], &[0.2, 0.4]).unwrap() == 0.75,
    ];
    let failed_examples = examples.iter().filter(|ok| !**ok).count();
    outcome(
        auroc_gap < 1e-12 && counting_mismatches == 0 && failed_examples == 0,
        format!(
            "200 tied populations: max |auroc - pairwise| = {auroc_gap:.1e}, counting mismatches {counting_mismatches}; worked examples failed {failed_examples}"
        ),
    )
}

fn scalar_adamax(theta0: f64, grads: &[f64], config: AdamaxConfig) -> Vec<f64> {
    let mut store = ParamStore::new();
    let id = store.insert("theta", Tensor::scalar(theta0));
    let mut opt = Adamax::new(config, &store).unwrap();
    grads
        .iter()
        .map(|&g| {
            let mut grad = Gradients::empty(1);
            grad.set_param(id, Tensor::scalar(g));
            opt.step(&mut store, &grad).unwrap();
            store.get(id).item()
        })
        .collect()
}

fn adamax() -> Outcome {
    let exact = AdamaxConfig {
        eps: 0.0,
        ..Default::default()
    };
    let literal = scalar_adamax(1.0, &[0.5; 3], exact);
    let literal_err = (literal[0] - 0.998).abs().max((literal[1] - 0.996).abs());

    let d = AdamaxConfig::default();
    let ours = scalar_adamax(1.0, &[0.5; 3], d);
    let hand = adamax_recurrence(1.0, &[0.5; 3], d.lr, d.beta1, d.beta2, d.eps);
    let recurrence_err = ours
        .iter()
        .zip(&hand)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    let mut step_err = 0.0f64;
    for g in [-3.0, 0.01, 0.5, 7.0] {
        let t = scalar_adamax(0.0, &[g; 20], exact);
        let mut prev = 0.0;
        for v in t {
            step_err = step_err.max(((prev - v).abs() - exact.lr).abs());
            prev = v;
        }
    }
    outcome(
        literal_err < 1e-12 && recurrence_err < 1e-12 && step_err < 1e-12,
        format!(
            "theta1,theta2 vs 0.998,0.996 (eps=0): {literal_err:.1e}; 3-step vs hand recurrence (eps=1e-8): {recurrence_err:.1e}; |step|-lr: {step_err:.1e}"
        ),
    )
}

fn calibration_guarantee() -> Outcome {
    let mut r = rng(401);
    let mut violations = 0;
    let mut worst_slack = f64::INFINITY;
    for _ in 0..100 {
        let sets: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                let n = r.random_range(1..=500);
                let scale = r.random_range(0.01..100.0);
                (0..n).map(|_| scale * r.random::<f64>()).collect()
            })
            .collect();
        let t = ThresholdSet::from_scores([&sets[0], &sets[1], &sets[2]]).unwrap();
        for (i, s) in sets.iter().enumerate() {
            let n = s.len() as f64;
            let frac = s.iter().filter(|&&v| v <= t.tau[i]).count() as f64 / n;
            if frac < 0.95 || frac > 0.95 + 1.0 / n || frac != t.coverage[i] {
                violations += 1;
            }
            worst_slack = worst_slack.min(0.95 + 1.0 / n - frac).min(frac - 0.95);
        }
    }
    outcome(
        violations == 0,
        format!("100 random sets x 3 classes: {violations} outside [0.95, 0.95 + 1/N] (min margin {worst_slack:.2e})"),
    )
}

fn e2e_config() -> RunConfig {
    let mut c = RunConfig::with_seed(0);
    c.train.epochs = E2E_EPOCHS;
    c
}

struct E2e {
    splits: Splits,
    experiment: Experiment,
    seconds: f64,
}

fn run_e2e() -> Result<E2e, String> {
    let start = Instant::now();
    let config = e2e_config();
    let data = pipeline::synthesize(&config, &pipeline::default_suite(&config))
        .map_err(|e| e.to_string())?;
    let splits = Splits::new(&data, &config).map_err(|e| e.to_string())?;
    drop(data);
    eprintln!(
        "e2e: {} train / {} calibration / {} ID test / {} OOD test frames",
        splits.train.len(),
        splits.calibration.len(),
        splits.test_id.len(),
        splits.test_ood.len()
    );
    let experiment = pipeline::run(&config, &splits, |log| eprintln!("  {}", log.to_line()))
        .map_err(|e| e.to_string())?;
    let seconds = start.elapsed().as_secs_f64();
    eprint!("{}", experiment.report.to_table());
    Ok(E2e {
        splits,
        experiment,
        seconds,
    })
}

fn end_to_end(e2e: &Result<E2e, String>) -> Outcome {
    let e2e = match e2e {
        Ok(e) => e,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let r = &e2e.experiment.report;
    let aurocs = r.per_class.map(|c| c.auroc);
    let fprs = r.per_class.map(|c| c.fpr95);
    let pass = r.id_accuracy >= 0.90
        && aurocs.iter().all(|&a| a >= 0.90)
        && fprs.iter().all(|&f| f <= 0.30)
        && (r.id_acceptance - 0.95).abs() <= 0.03
        && e2e.seconds <= 600.0;
    outcome(
        pass,
        format!(
            "{E2E_EPOCHS} epochs: id accuracy {:.4} >= 0.90; AUROC {:.4}/{:.4}/{:.4} >= 0.90; FPR95 {:.4}/{:.4}/{:.4} <= 0.30; ID acceptance {:.4} in 0.95 +/- 0.03; {:.0}s <= 600s",
            r.id_accuracy, aurocs[0], aurocs[1], aurocs[2], fprs[0], fprs[1], fprs[2], r.id_acceptance, e2e.seconds
        ),
    )
}

fn ablation_margins(reports: (&MetricsReport, &MetricsReport)) -> (f64, f64) {
    let (full, ablated) = reports;
    (
        full.id_accuracy - ablated.id_accuracy,
        full.mean_auroc - ablated.mean_auroc,
    )
}

fn ablation(e2e: &Result<E2e, String>) -> Outcome {
    let e2e = match e2e {
        Ok(e) => e,
        Err(e) => return outcome(false, format!("end-to-end run failed: {e}")),
    };
    let mut lines = Vec::new();
    let mut pass = true;
    let mut margins = |seed: u64, exp: &Experiment| -> Result<(), String> {
        let ablated = exp
            .report_with(ScoreVariant::NoPrivateLeaves)
            .map_err(|e| e.to_string())?;
        let (acc, au) = ablation_margins((&exp.report, &ablated));
        pass &= acc >= 0.0 && au >= 0.0;
        lines.push(format!(
            "seed {seed}: accuracy margin {acc:+.4}, mean AUROC margin {au:+.4}"
        ));
        Ok(())
    };
    if let Err(e) = margins(0, &e2e.experiment) {
        return outcome(false, e);
    }
    for seed in [1u64, 2] {
        let mut config = e2e_config();
        let reseeded = RunConfig::with_seed(seed);
        config.model.seed = reseeded.model.seed;
        config.train.seed = reseeded.train.seed;
        config.train.epochs = ABLATION_EPOCHS;
        eprintln!("ablation seed {seed}: {ABLATION_EPOCHS} epochs");
        let exp = match pipeline::run(&config, &e2e.splits, |log| eprintln!("  {}", log.to_line()))
        {
            Ok(exp) => exp,
            Err(e) => return outcome(false, format!("seed {seed}: {e}")),
        };
        if let Err(e) = margins(seed, &exp) {
            return outcome(false, e);
        }
    }
    outcome(pass, format!("margins >= 0 required; {}", lines.join("; ")))
}

fn small_config() -> RunConfig {
    let mut c = RunConfig::with_seed(7);
    c.synth.frames_per_class = 40;
    c.synth.ood_frames = 40;
    c.train.epochs = 2;
    c.train.batch_per_class = 8;
    c
}

fn dataset_bytes(d: &Dataset) -> Vec<u8> {
    let mut out = Vec::new();
    write_dataset(&mut out, d).expect("in-memory write");
    out
}

fn small_run(config: &RunConfig) -> Result<(Vec<u8>, Vec<u8>, String), String> {
    let data = pipeline::synthesize(config, &pipeline::default_suite(config))
        .map_err(|e| e.to_string())?;
    let splits = Splits::new(&data, config).map_err(|e| e.to_string())?;
    let exp = pipeline::run(config, &splits, |_| {}).map_err(|e| e.to_string())?;
    let ckpt = Checkpoint::from_model(
        config.clone(),
        exp.trainer.epoch,
        &exp.trainer.model,
        Some(&exp.trainer.optimizer),
        Some(exp.thresholds),
    );
    Ok((
        dataset_bytes(&data),
        ckpt.to_bytes(),
        exp.report.without_timing().to_json(),
    ))
}

fn determinism_and_formats() -> Outcome {
    let config = small_config();
    let (a, b) = match (small_run(&config), small_run(&config)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return outcome(false, e),
    };
    let same_data = a.0 == b.0;
    let same_ckpt = a.1 == b.1;
    let same_report = a.2 == b.2;

    let dataset = read_dataset(&a.0[..]).expect("read back");
    let raw_roundtrip = dataset_bytes(&dataset) == a.0;
    let ckpt = Checkpoint::from_bytes(&a.1).expect("parse checkpoint");
    let ckpt_roundtrip = ckpt.to_bytes() == a.1;
    let report = MetricsReport::from_json(&a.2).expect("parse report");
    let report_roundtrip = report.to_json() == a.2;

    let mut other = config.clone();
    other.seed = 8;
    other.resolve();
    let reseeded =
        pipeline::synthesize(&other, &pipeline::default_suite(&other)).expect("synthesize");
    let seed_matters = dataset_bytes(&reseeded) != a.0;

    let checks = [
        ("dataset", same_data),
        ("checkpoint", same_ckpt),
        ("report", same_report),
        ("FOODRAW1 round trip", raw_roundtrip),
        ("checkpoint round trip", ckpt_roundtrip),
        ("report round trip", report_roundtrip),
        ("seed changes data", seed_matters),
    ];
    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    outcome(
        failed.is_empty(),
        if failed.is_empty() {
            format!(
                "identical bytes across two seeded runs ({} B data, {} B checkpoint); round trips bit-exact",
                a.0.len(),
                a.1.len()
            )
        } else {
            format!("failed: {}", failed.join(", "))
        },
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut report = |name: &'static str, o: Outcome| {
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        results.push((name, o));
    };
    report("gradient correctness", gradient_correctness());
    report("metric oracles", metric_oracles());
    report("adamax", adamax());
    report("calibration guarantee", calibration_guarantee());
    report("determinism and formats", determinism_and_formats());
    let e2e = run_e2e();
    report("end-to-end synthetic reproduction", end_to_end(&e2e));
    report("ablation directionality", ablation(&e2e));

    let failed = results.iter().filter(|r| !r.1.pass).count();
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
