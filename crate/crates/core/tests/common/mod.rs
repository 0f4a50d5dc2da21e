#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use fairprune::nn::{Activation, Batch, Mlp};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_batch(rng: &mut impl Rng, dim: usize, classes: usize, n: usize) -> Batch {
    let features = (0..n * dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let groups = (0..n).map(|_| rng.gen_range(0..2u8)).collect();
    Batch::new(dim, features, labels, groups).unwrap()
}

/// Random MLP with 1..=max_layers weight layers and widths in 1..=max_width.
pub fn random_mlp(rng: &mut impl Rng, max_layers: usize, max_width: usize, activation: Activation) -> Mlp {
    let layers = rng.gen_range(1..=max_layers);
    let mut sizes: Vec<usize> = (0..layers).map(|_| rng.gen_range(1..=max_width)).collect();
    sizes.push(rng.gen_range(2..=max_width.clamp(2, 6)));
    let mut model = Mlp::new(&sizes, activation, rng.gen()).unwrap();
    // Non-zero biases so every parameter is exercised.
    for layer in 0..model.num_layers() {
        let range = model.layer_range(layer, fairprune::nn::LayerPart::Biases);
        let mut flat = model.flatten();
        for v in &mut flat[range] {
            *v = rng.gen_range(-0.5..0.5);
        }
        model.unflatten(&flat).unwrap();
    }
    model
}

pub fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// One-vs-rest counts computed directly from the prediction lists.
pub struct BruteCounts {
    pub tp: f64,
    pub fn_: f64,
    pub tn: f64,
    pub fp: f64,
}

pub fn brute_counts(preds: &[usize], labels: &[usize], groups: &[u8], class: usize, group: u8) -> BruteCounts {
    let mut c = BruteCounts {
        tp: 0.0,
        fn_: 0.0,
        tn: 0.0,
        fp: 0.0,
    };
    for i in 0..preds.len() {
        if groups[i] != group {
            continue;
        }
        let actual = labels[i] == class;
        let predicted = preds[i] == class;
        match (actual, predicted) {
            (true, true) => c.tp += 1.0,
            (true, false) => c.fn_ += 1.0,
            (false, false) => c.tn += 1.0,
            (false, true) => c.fp += 1.0,
        }
    }
    c
}

pub struct BruteReport {
    pub eopp0: f64,
    pub eopp1: f64,
    pub eodd: f64,
    /// (precision, recall, f1) per group.
    pub prf: [[f64; 3]; 2],
}

pub fn brute_report(preds: &[usize], labels: &[usize], groups: &[u8], classes: usize) -> BruteReport {
    let mut eopp0 = 0.0;
    let mut eopp1 = 0.0;
    let mut eodd = 0.0;
    for k in 0..classes {
        let a = brute_counts(preds, labels, groups, k, 0);
        let b = brute_counts(preds, labels, groups, k, 1);
        let pos = a.tp + a.fn_ > 0.0 && b.tp + b.fn_ > 0.0;
        let neg = a.tn + a.fp > 0.0 && b.tn + b.fp > 0.0;
        if pos {
            eopp1 += (b.tp / (b.tp + b.fn_) - a.tp / (a.tp + a.fn_)).abs();
        }
        if neg {
            eopp0 += (b.tn / (b.tn + b.fp) - a.tn / (a.tn + a.fp)).abs();
        }
        if pos && neg {
            let dtpr = b.tp / (b.tp + b.fn_) - a.tp / (a.tp + a.fn_);
            let dfpr = b.fp / (b.fp + b.tn) - a.fp / (a.fp + a.tn);
            eodd += (dtpr + dfpr).abs();
        }
    }
    let mut prf = [[0.0; 3]; 2];
    for g in 0..2u8 {
        let mut used = 0.0;
        let mut sums = [0.0; 3];
        for k in 0..classes {
            let c = brute_counts(preds, labels, groups, k, g);
            if c.tp + c.fn_ == 0.0 {
                continue;
            }
            let p = if c.tp + c.fp > 0.0 { c.tp / (c.tp + c.fp) } else { 0.0 };
            let r = c.tp / (c.tp + c.fn_);
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            sums[0] += p;
            sums[1] += r;
            sums[2] += f;
            used += 1.0;
        }
        if used > 0.0 {
            prf[g as usize] = sums.map(|s| s / used);
        }
    }
    BruteReport { eopp0, eopp1, eodd, prf }
}
