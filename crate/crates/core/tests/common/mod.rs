//! Independent reference implementations used as oracles by several test
//! targets. Nothing here calls into the library's numeric code paths.
#![allow(dead_code)]

use hcdh::hadamard::TargetCode;
use hcdh::linalg::Matrix;
use hcdh::model::{Activation, ClassLabels, HashNetwork, Objective};
use hcdh::retrieval::{ApDenominator, BinarizationMode, BinaryCodeSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_signs(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Matrix<i8> {
    Matrix::from_fn(n, k, |_, _| if rng.gen::<bool>() { 1 } else { -1 })
}

pub fn codes_from_signs(signs: &Matrix<i8>) -> BinaryCodeSet {
    BinaryCodeSet::from_signs(signs, BinarizationMode::Sign).unwrap()
}

/// Hamming distance by comparing ±1 entries one at a time.
pub fn naive_hamming(a: &[i8], b: &[i8]) -> u32 {
    a.iter().zip(b).filter(|(x, y)| x != y).count() as u32
}

/// Full ranking by a stable sort on (distance, index).
pub fn naive_ranking(query: &[i8], db: &Matrix<i8>) -> Vec<(u32, usize)> {
    let mut v: Vec<(u32, usize)> = (0..db.rows()).map(|i| (naive_hamming(query, db.row(i)), i)).collect();
    v.sort();
    v
}

pub fn shares_label(a: &[u8], b: &[u8]) -> bool {
    a.iter().zip(b).any(|(&x, &y)| x != 0 && y != 0)
}

/// AP of one ranked list from its relevance flags.
pub fn brute_ap(relevant: &[bool], total_relevant: usize, denominator: ApDenominator) -> f64 {
    let mut hits = 0.0;
    let mut sum = 0.0;
    for (i, &r) in relevant.iter().enumerate() {
        if r {
            hits += 1.0;
            sum += hits / (i + 1) as f64;
        }
    }
    let d = match denominator {
        ApDenominator::MinCutoffRelevant => total_relevant.min(relevant.len()),
        ApDenominator::AllRelevant => total_relevant,
    };
    sum / d as f64
}

/// mAP over all queries with at least one relevant item, ranking with the
/// naive oracle and truncating at `cutoff`.
pub fn brute_map(
    q: &Matrix<i8>,
    db: &Matrix<i8>,
    qlabels: &Matrix<u8>,
    dblabels: &Matrix<u8>,
    cutoff: usize,
    denominator: ApDenominator,
) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for i in 0..q.rows() {
        let rel_total = (0..db.rows()).filter(|&j| shares_label(qlabels.row(i), dblabels.row(j))).count();
        if rel_total == 0 {
            continue;
        }
        let flags: Vec<bool> = naive_ranking(q.row(i), db)
            .into_iter()
            .take(cutoff)
            .map(|(_, j)| shares_label(qlabels.row(i), dblabels.row(j)))
            .collect();
        total += brute_ap(&flags, rel_total, denominator);
        n += 1;
    }
    (n > 0).then(|| total / n as f64)
}

fn act(a: Activation, v: f64) -> f64 {
    match a {
        Activation::Identity => v,
        Activation::Relu => v.max(0.0),
        Activation::Tanh => v.tanh(),
    }
}

/// Objective value from a plain loop forward pass over a flat parameter
/// vector laid out as the network's (weights row-major, then bias) per layer.
pub fn reference_loss(
    net: &HashNetwork<f64>,
    params: &[f64],
    x: &Matrix<f64>,
    targets: &[TargetCode],
    labels: &ClassLabels,
    objective: Objective,
) -> f64 {
    let b = x.rows();
    let n_layers = net.layers().len();
    let mut codes = vec![Vec::new(); b];
    let mut logits = vec![Vec::new(); b];
    for s in 0..b {
        let mut a: Vec<f64> = x.row(s).to_vec();
        let mut off = 0;
        for (li, layer) in net.layers().iter().enumerate() {
            let (o, i) = (layer.output_dim(), layer.input_dim());
            let w = &params[off..off + o * i];
            let bias = &params[off + o * i..off + o * i + o];
            off += o * i + o;
            a = (0..o)
                .map(|r| act(layer.activation, bias[r] + (0..i).map(|c| w[r * i + c] * a[c]).sum::<f64>()))
                .collect();
            if li == n_layers - 2 {
                codes[s] = a.clone();
            }
        }
        logits[s] = a;
    }

    let mut h = 0.0;
    for s in 0..b {
        for (j, &u) in codes[s].iter().enumerate() {
            if targets[s].mask[j] {
                h += (u - targets[s].values[j] as f64).powi(2);
            }
        }
    }
    h /= 2.0 * b as f64;

    let c = match labels {
        ClassLabels::Classes(cls) => {
            let mut total = 0.0;
            for s in 0..b {
                let z = &logits[s];
                let lse = z.iter().map(|v| v.exp()).sum::<f64>().ln();
                total += lse - z[cls[s]];
            }
            total / b as f64
        }
        ClassLabels::MultiHot(y) => {
            let mut total = 0.0;
            let k = y.cols();
            for s in 0..b {
                for j in 0..k {
                    let p = 1.0 / (1.0 + (-logits[s][j]).exp());
                    let t = y.get(s, j) as f64;
                    total -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
                }
            }
            total / (b * k) as f64
        }
    };
    let h = if objective.hadamard { h } else { 0.0 };
    h + objective.lambda * c
}

/// Central-difference gradient of [`reference_loss`].
pub fn finite_difference_gradient(
    net: &HashNetwork<f64>,
    x: &Matrix<f64>,
    targets: &[TargetCode],
    labels: &ClassLabels,
    objective: Objective,
    eps: f64,
) -> Vec<f64> {
    let base = net.flat_params();
    let mut p = base.clone();
    (0..base.len())
        .map(|i| {
            p[i] = base[i] + eps;
            let up = reference_loss(net, &p, x, targets, labels, objective);
            p[i] = base[i] - eps;
            let down = reference_loss(net, &p, x, targets, labels, objective);
            p[i] = base[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}
