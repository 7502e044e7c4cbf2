#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tdanet::numerics::{Arithmetic, Graph, Tensor, Var};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(shape: &[usize], r: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Compares reverse-mode gradients of `Σ f(inputs) ⊙ R` (fixed random `R`)
/// with central differences (h = 1e-5), in double precision. Returns the worst
/// per-input relative error.
pub fn grad_check(inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> Var) -> f64 {
    let eval = |inputs: &[Tensor], want_grads: bool| -> (f64, Vec<Vec<f64>>) {
        let mut g = Graph::new(Arithmetic::Double);
        let vars: Vec<Var> = inputs.iter().map(|t| g.param(t)).collect();
        let out = f(&mut g, &vars);
        let n = g.value(out).len();
        let mut r = rng(99);
        let weights = Tensor::new(
            g.value(out).shape(),
            (0..n).map(|_| r.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let w = g.constant(weights);
        let prod = g.mul(out, w).unwrap();
        let loss = g.sum(prod).unwrap();
        let value = g.value(loss).data()[0];
        if !want_grads {
            return (value, Vec::new());
        }
        let grads = g.backward(loss).unwrap();
        (
            value,
            vars.iter()
                .zip(inputs)
                .map(|(&v, t)| grads.get_or_zeros(v, t.len()))
                .collect(),
        )
    };
    let (_, analytic) = eval(inputs, true);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (i, t) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; t.len()];
        for j in 0..t.len() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            numeric[j] = (eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * h);
        }
        worst = worst.max(rel_err(&analytic[i], &numeric));
    }
    worst
}

/// Gradient check for a parameterised block. `run` rebuilds the block from
/// `params`, binds it into `g` and applies it to `x`, returning the output and
/// the parameter handles. Checks the input gradient and every parameter.
pub fn block_grad_check(
    params: &[Tensor],
    x: &Tensor,
    run: impl Fn(&mut Graph, &[Tensor], Var) -> (Var, Vec<Var>),
) -> Vec<f64> {
    let objective = |params: &[Tensor], x: &Tensor, want_grads: bool| -> (f64, Vec<Vec<f64>>) {
        let mut g = Graph::new(Arithmetic::Double);
        let xv = g.param(x);
        let (out, vars) = run(&mut g, params, xv);
        let n = g.value(out).len();
        let weights = Tensor::new(
            g.value(out).shape(),
            (0..n).map(|i| (0.37 * i as f64 + 0.1).sin()).collect(),
        )
        .unwrap();
        let w = g.constant(weights);
        let prod = g.mul(out, w).unwrap();
        let loss = g.sum(prod).unwrap();
        let value = g.value(loss).data()[0];
        if !want_grads {
            return (value, Vec::new());
        }
        let grads = g.backward(loss).unwrap();
        let mut all = vec![grads.get_or_zeros(xv, x.len())];
        all.extend(
            vars.iter()
                .zip(params)
                .map(|(&v, t)| grads.get_or_zeros(v, t.len())),
        );
        (value, all)
    };
    let (_, analytic) = objective(params, x, true);
    let h = 1e-5;
    let mut errors = Vec::new();
    // Input gradient.
    let mut numeric = vec![0.0; x.len()];
    for j in 0..x.len() {
        let (mut up, mut down) = (x.clone(), x.clone());
        up.data_mut()[j] += h;
        down.data_mut()[j] -= h;
        numeric[j] =
            (objective(params, &up, false).0 - objective(params, &down, false).0) / (2.0 * h);
    }
    errors.push(rel_err(&analytic[0], &numeric));
    for (i, t) in params.iter().enumerate() {
        let mut numeric = vec![0.0; t.len()];
        for j in 0..t.len() {
            let (mut up, mut down) = (params.to_vec(), params.to_vec());
            up[i].data_mut()[j] += h;
            down[i].data_mut()[j] -= h;
            numeric[j] = (objective(&up, x, false).0 - objective(&down, x, false).0) / (2.0 * h);
        }
        errors.push(rel_err(&analytic[i + 1], &numeric));
    }
    errors
}

/// `|Σ x[n]·w[n]·e^{−2πi·f·n/N}|` evaluated directly.
fn direct_bin(x: impl Iterator<Item = f64>, f: usize, n_total: usize) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for (n, v) in x.enumerate() {
        let ang = -std::f64::consts::TAU * ((f * n) % n_total) as f64 / n_total as f64;
        re += v * ang.cos();
        im += v * ang.sin();
    }
    re.hypot(im)
}

/// O(T²) DFT magnitudes for bins `1..=T/2`, averaged over channels.
pub fn naive_dft(signal: &Tensor) -> Vec<f64> {
    let (t, c) = (signal.shape()[0], signal.shape()[1]);
    let d = signal.data();
    (1..=t / 2)
        .map(|f| {
            (0..c)
                .map(|ch| direct_bin((0..t).map(|n| d[n * c + ch]), f, t))
                .sum::<f64>()
                / c as f64
        })
        .collect()
}

/// Direct periodic-Hann STFT, frame- and channel-averaged, mapped to global
/// bins by `round(b·T/W)` keeping the maximum on collisions.
pub fn naive_stft(signal: &Tensor, w: usize, hop: usize) -> Vec<f64> {
    let (t, c) = (signal.shape()[0], signal.shape()[1]);
    let d = signal.data();
    let hann: Vec<f64> = (0..w)
        .map(|n| 0.5 - 0.5 * (std::f64::consts::TAU * n as f64 / w as f64).cos())
        .collect();
    let starts: Vec<usize> = (0..).map(|m| m * hop).take_while(|s| s + w <= t).collect();
    let mut global = vec![0.0; t / 2];
    for b in 1..=w / 2 {
        let mut total = 0.0;
        for &s in &starts {
            for ch in 0..c {
                total += direct_bin((0..w).map(|n| d[(s + n) * c + ch] * hann[n]), b, w);
            }
        }
        let amp = total / (starts.len() * c) as f64;
        let f = ((b * t) as f64 / w as f64).round() as usize;
        let slot = &mut global[f.clamp(1, t / 2) - 1];
        *slot = f64::max(*slot, amp);
    }
    global
}

/// Top-k by a full descending sort; equal amplitudes keep the lower bin.
pub fn brute_top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize)> = values
        .iter()
        .enumerate()
        .map(|(i, &v)| (v, i + 1))
        .collect();
    for i in 0..pairs.len() {
        for j in 0..pairs.len() - 1 - i {
            let (a, b) = (pairs[j], pairs[j + 1]);
            if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                pairs.swap(j, j + 1);
            }
        }
    }
    pairs[..k].iter().map(|p| p.1).collect()
}

/// Metric values recomputed from an explicit list of (truth, prediction)
/// pairs: `[accuracy, overall, precision, recall, f1]`.
pub fn brute_metrics(pairs: &[(usize, usize)], n: usize) -> [f64; 5] {
    let total = pairs.len() as f64;
    let (mut acc, mut prec, mut rec) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..n {
        let tp = pairs.iter().filter(|&&(t, p)| t == c && p == c).count() as f64;
        let fp = pairs.iter().filter(|&&(t, p)| t != c && p == c).count() as f64;
        let fn_ = pairs.iter().filter(|&&(t, p)| t == c && p != c).count() as f64;
        let tn = pairs.iter().filter(|&&(t, p)| t != c && p != c).count() as f64;
        acc.push((tp + tn) / total);
        if tp + fp > 0.0 {
            prec.push(tp / (tp + fp));
        }
        if tp + fn_ > 0.0 {
            rec.push(tp / (tp + fn_));
        }
    }
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let (p, r) = (mean(&prec), mean(&rec));
    let f1 = if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    };
    let overall = pairs.iter().filter(|(t, p)| t == p).count() as f64 / total;
    [mean(&acc), overall, p, r, f1]
}
