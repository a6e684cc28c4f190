//! Acceptance gate. Prints one PASS/FAIL line per criterion, then fails the
//! test if any criterion failed. Run with `--nocapture` to see the lines.

mod common;

use std::time::{Duration, Instant};

use common::{brute_map, codes_from_signs, finite_difference_gradient, naive_hamming, random_signs, rng};
use hcdh::analysis::{
    ablate, ablation_csv, bit_balance, confusion_matrix, fraction_in_band, lsh_baseline, min_diagonal, run_experiment,
    ExperimentConfig, ExperimentData, ExperimentResult, RankWeighting,
};
use hcdh::dataset::{make_synthetic_blobs, split_protocol, FeatureSet, LabelSet, Split};
use hcdh::hadamard::{build_codebook, make_target, sylvester, Codebook, Provenance};
use hcdh::linalg::Matrix;
use hcdh::model::{backward, ClassLabels, HashNetwork, NetSpec, Objective};
use hcdh::retrieval::{evaluate, hamming_distance, search, ApDenominator, BinarizationMode, EvalOptions};
use hcdh::trainer::{Checkpoint, TrainConfig, Trainer, Variant};
use hcdh::GradientSetF64;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: u32, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let mut out = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed >= limit {
            out.pass = false;
        }
        out.detail = format!("{}; {:.2}s (limit {}s)", out.detail, elapsed.as_secs_f64(), limit.as_secs());
    } else {
        out.detail = format!("{}; {:.2}s", out.detail, elapsed.as_secs_f64());
    }
    println!("criterion {id} {}: {name}: {}", if out.pass { "PASS" } else { "FAIL" }, out.detail);
    out.pass
}

fn codebook_exactness() -> Outcome {
    let mut pass = true;
    for (k, c) in [(16, 10), (32, 10), (64, 21), (128, 100)] {
        let cb = build_codebook(k, c, 0).unwrap();
        pass &= cb.provenance == Provenance::Direct;
        for i in 0..c {
            let row = cb.codeword(i);
            pass &= row.iter().map(|&v| v as i64).sum::<i64>() == 0;
            for j in 0..i {
                pass &= row.iter().zip(cb.codeword(j)).map(|(&a, &b)| (a * b) as i64).sum::<i64>() == 0;
            }
        }
    }
    Outcome { pass, detail: "(16,10) (32,10) (64,21) (128,100) orthogonal and balanced".into() }
}

fn sylvester_oracle() -> Outcome {
    let mut pass = true;
    let mut n = 1;
    while n <= 1024 {
        let h = sylvester(n).unwrap();
        for i in 0..n {
            for j in i..n {
                let ip: i64 = h.row(i).iter().zip(h.row(j)).map(|(&a, &b)| (a * b) as i64).sum();
                pass &= ip == if i == j { n as i64 } else { 0 };
            }
        }
        n *= 2;
    }
    Outcome { pass, detail: "H Hᵀ = n I for n = 1..1024".into() }
}

fn gradient_check() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut networks = 0;
    for multi in [false, true] {
        for seed in 0..20u64 {
            let mut r = rng(1000 + seed + 100 * multi as u64);
            let input = r.gen_range(2..6);
            let hidden: Vec<usize> = (0..r.gen_range(0..3)).map(|_| r.gen_range(2..6)).collect();
            let (k, c, b) = (r.gen_range(2..9), r.gen_range(2..6), r.gen_range(1..6));
            let spec = NetSpec { input_dim: input, hidden, code_length: k, num_classes: c };
            let mut net = HashNetwork::<f64>::new(&spec, seed).unwrap();
            let jittered: Vec<f64> = net.flat_params().iter().map(|p| p + r.gen_range(-0.3..0.3)).collect();
            net.set_flat_params(&jittered).unwrap();
            let x = Matrix::from_fn(b, input, |_, _| r.gen_range(-2.0..2.0));
            let cb = build_codebook(k, c, seed).unwrap();
            let mut y = Matrix::zeros(b, c);
            for i in 0..b {
                y.set(i, r.gen_range(0..c), 1u8);
                if multi {
                    for j in 0..c {
                        if r.gen_bool(0.3) {
                            y.set(i, j, 1);
                        }
                    }
                }
            }
            let targets: Vec<_> = (0..b).map(|i| make_target(&cb, y.row(i)).unwrap()).collect();
            let labels = if multi {
                ClassLabels::MultiHot(y)
            } else {
                ClassLabels::Classes((0..b).map(|i| y.row(i).iter().position(|&v| v == 1).unwrap()).collect())
            };
            let objective = Objective::combined(r.gen_range(0.1..2.0));
            let (_, grads): (_, GradientSetF64) = backward(&net, &x, &targets, &labels, objective).unwrap();
            let numeric = finite_difference_gradient(&net, &x, &targets, &labels, objective, 1e-6);
            let analytic = grads.flat();
            let diff = analytic.iter().zip(&numeric).map(|(a, n)| (a - n).powi(2)).sum::<f64>().sqrt();
            let scale = analytic.iter().map(|a| a * a).sum::<f64>().sqrt().max(numeric.iter().map(|n| n * n).sum::<f64>().sqrt());
            worst = worst.max(if scale > 0.0 { diff / scale } else { diff });
            networks += 1;
        }
    }
    Outcome {
        pass: worst < 1e-5,
        detail: format!("{networks} networks (CE and BCE), max relative error {worst:.2e} (< 1e-5)"),
    }
}

fn map_oracle() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut instances = 0;
    let mut r = rng(2024);
    while instances < 60 {
        let k = [8, 16, 32, 64][instances % 4];
        let c = r.gen_range(2..6);
        let (nq, nd) = (r.gen_range(1..20), r.gen_range(2..=200));
        let q = random_signs(&mut r, nq, k);
        let db = random_signs(&mut r, nd, k);
        let label = |r: &mut rand_chacha::ChaCha8Rng, n: usize| {
            let mut m = Matrix::zeros(n, c);
            for i in 0..n {
                m.set(i, r.gen_range(0..c), 1u8);
                if instances % 2 == 1 && r.gen_bool(0.3) {
                    m.set(i, r.gen_range(0..c), 1);
                }
            }
            m
        };
        let (ql, dl) = (label(&mut r, nq), label(&mut r, nd));
        let cutoff = if r.gen_bool(0.5) { None } else { Some(r.gen_range(1..=nd)) };
        let denominator = if r.gen_bool(0.5) { ApDenominator::MinCutoffRelevant } else { ApDenominator::AllRelevant };
        let options = EvalOptions { cutoff, denominator, ..EvalOptions::default() };
        let Some(oracle) = brute_map(&q, &db, &ql, &dl, cutoff.unwrap_or(nd), denominator) else {
            continue;
        };
        let got = evaluate(&codes_from_signs(&q), &codes_from_signs(&db), &ql, &dl, &options).unwrap();
        worst = worst.max((got.map - oracle).abs());
        instances += 1;
    }
    Outcome {
        pass: worst <= 1e-12,
        detail: format!("{instances} instances, max |mAP - oracle| = {worst:.1e}"),
    }
}

fn bit_packing() -> Outcome {
    let mut r = rng(7);
    let mut mismatches = 0;
    for k in [16, 48, 64, 128] {
        let a = random_signs(&mut r, 10_000, k);
        let b = random_signs(&mut r, 10_000, k);
        let (pa, pb) = (codes_from_signs(&a), codes_from_signs(&b));
        for i in 0..10_000 {
            if hamming_distance(pa.code(i), pb.code(i)).unwrap() != naive_hamming(a.row(i), b.row(i)) {
                mismatches += 1;
            }
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("10^4 pairs at K = 16, 48, 64, 128; {mismatches} mismatches"),
    }
}

struct Synthetic {
    features: FeatureSet,
    labels: LabelSet,
    split: Split,
    codebook: Codebook,
    config: ExperimentConfig,
}

const K: usize = 16;

fn synthetic() -> Synthetic {
    let (features, labels) = make_synthetic_blobs(8, 200, 16, 0.5, 1).unwrap();
    let split = split_protocol(&labels, 20, 180, 1).unwrap();
    let codebook = build_codebook(K, 8, 0).unwrap();
    let config = ExperimentConfig {
        train: TrainConfig { epochs: 60, base_lr: 1e-3, lambda: 1.0, seed: 1, ..TrainConfig::default() },
        spec: NetSpec::with_default_hidden(16, K, 8),
        eval: EvalOptions { threads: 1, ..EvalOptions::default() },
        mode: BinarizationMode::Sign,
    };
    Synthetic { features, labels, split, codebook, config }
}

impl Synthetic {
    fn data(&self) -> ExperimentData<'_> {
        ExperimentData { features: &self.features, labels: &self.labels, split: &self.split, codebook: &self.codebook }
    }

    fn run(&self) -> ExperimentResult {
        run_experiment(&self.config, self.data()).unwrap()
    }
}

fn end_to_end(s: &Synthetic, result: &mut Option<ExperimentResult>) -> Outcome {
    let r = s.run();
    let lsh = lsh_baseline(&s.features, &s.labels, &s.split, K, 1, &s.config.eval).unwrap();
    let balance = fraction_in_band(&bit_balance(&r.encoded.database).unwrap(), 0.2, 0.8);
    let qlabels = s.labels.matrix().select_rows(&s.split.query);
    let dblabels = s.labels.matrix().select_rows(&s.split.database);
    let conf = confusion_matrix(&r.rankings, &qlabels, &dblabels, 100, RankWeighting::LogDiscount).unwrap();
    let diag = min_diagonal(&conf);
    let map = r.report.map;
    let pass = map >= 0.95 && map - lsh.map >= 0.10 && balance >= 0.9 && diag > 0.8;
    *result = Some(r);
    Outcome {
        pass,
        detail: format!(
            "mAP {map:.4} (>= 0.95), LSH {:.4} (margin {:.4} >= 0.10), bits in band {balance:.4} (>= 0.90), confusion min diagonal {diag:.4} (> 0.8)",
            lsh.map,
            map - lsh.map
        ),
    }
}

fn ablation(s: &Synthetic) -> Outcome {
    let rows = ablate(&s.config, s.data()).unwrap();
    let map_of = |v: Variant| rows.iter().find(|r| r.variant == v).unwrap().map;
    let (full, cls) = (map_of(Variant::Full), map_of(Variant::ClassifierOnly));
    let table = ablation_csv(&rows);
    Outcome {
        pass: rows.len() == 3 && full >= cls - 0.02,
        detail: format!("{}; HCDH >= HCDH-C - 0.02", table.trim_end().replace('\n', " | ")),
    }
}

fn determinism(s: &Synthetic, first: &ExperimentResult) -> Outcome {
    let second = s.run();
    let ckpt = || {
        let mut t = Trainer::<f64>::new(
            s.config.train.clone(),
            &s.features,
            &s.labels,
            &s.split,
            &s.codebook,
            &s.config.spec,
        )
        .unwrap();
        t.run(|_| Ok(())).unwrap();
        t.checkpoint().to_bytes()
    };
    let reference = ckpt();
    let same_ckpt = reference == ckpt() && Checkpoint::<f64>::from_bytes(&reference).unwrap().network == first.network;
    let same_codes = first.encoded.queries.to_bytes() == second.encoded.queries.to_bytes()
        && first.encoded.database.to_bytes() == second.encoded.database.to_bytes();
    let same_report = first.report.summary_json() == second.report.summary_json()
        && first.report.pr_csv() == second.report.pr_csv()
        && first.report.precision_at_k_csv() == second.report.precision_at_k_csv()
        && first.history.same_trajectory(&second.history);
    Outcome {
        pass: same_ckpt && same_codes && same_report,
        detail: format!("checkpoint identical: {same_ckpt}, codes identical: {same_codes}, reports identical: {same_report}"),
    }
}

fn search_throughput(elapsed: &mut Duration) -> Outcome {
    let mut r = rng(99);
    let db = random_signs(&mut r, 1_000_000, 64);
    let q = random_signs(&mut r, 100, 64);
    let (db, q) = (codes_from_signs(&db), codes_from_signs(&q));
    let start = Instant::now();
    let lists = search(&q, &db, Some(100), 1).unwrap();
    *elapsed = start.elapsed();
    let shape_ok = lists.len() == 100 && lists.iter().all(|l| l.len() == 100);
    Outcome {
        pass: shape_ok && *elapsed < Duration::from_secs(2),
        detail: format!("100 queries x 10^6 codes, K = 64, top-100 in {:.3}s single-threaded (< 2s)", elapsed.as_secs_f64()),
    }
}

#[test]
fn acceptance() {
    let secs = Duration::from_secs;
    let mut passed = Vec::new();
    passed.push(report(1, "codebook exactness", Some(secs(1)), codebook_exactness));
    passed.push(report(2, "Sylvester oracle", Some(secs(5)), sylvester_oracle));
    passed.push(report(3, "gradient correctness", Some(secs(30)), gradient_check));
    passed.push(report(4, "mAP oracle equivalence", Some(secs(10)), map_oracle));
    passed.push(report(5, "bit-packing oracle", Some(secs(5)), bit_packing));

    let s = synthetic();
    let mut first = None;
    passed.push(report(6, "end-to-end synthetic regression", Some(secs(120)), || end_to_end(&s, &mut first)));
    passed.push(report(7, "ablation trend", Some(secs(300)), || ablation(&s)));
    let first = first.expect("criterion 6 produced a result");
    passed.push(report(8, "determinism", None, || determinism(&s, &first)));
    let mut search_time = Duration::ZERO;
    passed.push(report(9, "search throughput", None, || search_throughput(&mut search_time)));

    let failed: Vec<usize> = passed.iter().enumerate().filter(|(_, &p)| !p).map(|(i, _)| i + 1).collect();
    println!("acceptance: {}/{} criteria passed", passed.len() - failed.len(), passed.len());
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
