//! Randomised comparisons against the oracles, parameterised by case count.

use brainvox_core::baseline::{pca_fit, pca_fit_with, svm_fit, svm_fit_detailed, Kernel, PcaMethod};
use brainvox_core::conv::{conv3d_forward, ConvSpec};
use brainvox_core::eval::{
    nested_cv, repeat_and_average, roc_auc, roc_auc_trapezoid, stratified_kfold, Classifier, CvSettings, Dataset,
    ModelFamily, TrainView,
};
use brainvox_core::pool::{maxpool3d_forward, PoolSpec};
use brainvox_core::rng::derive_seed;
use brainvox_core::{Result, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::oracles;

#[derive(Debug)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

fn outcome(failures: &[String], detail: String) -> Outcome {
    Outcome {
        passed: failures.is_empty(),
        detail: if failures.is_empty() {
            detail
        } else {
            format!("{detail}; first failure: {}", failures[0])
        },
    }
}

fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], quantized: bool) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            if quantized {
                f64::from(rng.random_range(0..3u8)) / 2.0
            } else {
                rng.random_range(-1.0..1.0)
            }
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

/// Conv3d against the direct loop (max abs diff < 1e-12) and max pooling
/// against the enumerating oracle (exact values and argmax indices).
pub fn conv_pool(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < cases {
        let c = rng.random_range(1..=3);
        let o = rng.random_range(1..=3);
        let ext: [usize; 3] = [rng.random_range(1..=7), rng.random_range(1..=7), rng.random_range(1..=7)];
        let kernel: [usize; 3] = [rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4)];
        let stride: [usize; 3] = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
        let pad: [usize; 3] = [0, 1, 2].map(|a| rng.random_range(0..kernel[a]));
        if (0..3).any(|a| ext[a] + 2 * pad[a] < kernel[a]) {
            continue;
        }
        done += 1;
        let x = rand_tensor(&mut rng, &[c, ext[0], ext[1], ext[2]], false);
        let k = rand_tensor(&mut rng, &[o, c, kernel[0], kernel[1], kernel[2]], false);
        let b = rand_tensor(&mut rng, &[o], false);
        let spec = ConvSpec {
            kernel,
            stride,
            padding: pad,
        };
        let y = conv3d_forward(&x, &k, &b, &spec).unwrap();
        let (want, shape) = oracles::conv3d(
            x.data(),
            [c, ext[0], ext[1], ext[2]],
            k.data(),
            [o, c, kernel[0], kernel[1], kernel[2]],
            b.data(),
            stride,
            pad,
        );
        if y.shape() != shape {
            failures.push(format!("conv shape {:?} vs {:?} for {spec:?}", y.shape(), shape));
            continue;
        }
        let diff = y.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(diff);
        if diff >= 1e-12 {
            failures.push(format!("conv diff {diff:e} for {spec:?}"));
        }

        // Pooling on its own random configuration; half the cases use a
        // three-level input so that ties are common.
        let window: [usize; 3] = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
        let pstride: [usize; 3] = [rng.random_range(1..=3), rng.random_range(1..=3), rng.random_range(1..=3)];
        let ppad: [usize; 3] = [0, 1, 2].map(|a| rng.random_range(0..window[a]));
        if (0..3).any(|a| ext[a] + 2 * ppad[a] < window[a]) {
            continue;
        }
        let xp = rand_tensor(&mut rng, &[c, ext[0], ext[1], ext[2]], done % 2 == 0);
        let spec = PoolSpec {
            window,
            stride: pstride,
            padding: ppad,
        };
        let (y, map) = maxpool3d_forward(&xp, &spec).unwrap();
        let (want, idx, shape) = oracles::maxpool3d(xp.data(), [c, ext[0], ext[1], ext[2]], window, pstride, ppad);
        if y.shape() != shape || y.data() != want.as_slice() || map.indices() != idx.as_slice() {
            failures.push(format!("maxpool mismatch for {spec:?} on {ext:?}"));
        }
    }
    outcome(&failures, format!("{cases} conv/pool configurations, worst conv diff {worst:e}"))
}

/// Integer pair-count AUC must be reproduced exactly; the trapezoid route
/// must agree within 1e-10.
pub fn auc(instances: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for case in 0..instances {
        let n = rng.random_range(2..=60);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let levels = if case % 3 == 0 { 4 } else { 1000 };
        let scores: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..levels)) / levels as f64).collect();
        let got = roc_auc(&scores, &labels).unwrap();
        let want = oracles::auc(&scores, &labels);
        if got != want {
            failures.push(format!("case {case}: {got} vs {want}"));
        }
        let trap = roc_auc_trapezoid(&scores, &labels).unwrap();
        if (trap - want).abs() > 1e-10 {
            failures.push(format!("case {case}: trapezoid {trap} vs {want}"));
        }
    }
    outcome(&failures, format!("{instances} AUC instances"))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Closed-form two-point problem, XOR, and optimality conditions on
/// random problems.
pub fn svm(datasets: usize, seed: u64) -> Outcome {
    let mut failures = Vec::new();

    let xs = [[-1.0], [1.0]];
    let refs: Vec<&[f64]> = xs.iter().map(|r| &r[..]).collect();
    let fit = svm_fit_detailed(&refs, &[-1, 1], Kernel::Linear, 1e3, false).unwrap();
    let w: f64 = fit.model.dual_coef().iter().zip(fit.model.support_vectors()).map(|(a, s)| a * s[0]).sum();
    let margin = 2.0 / w.abs();
    if (fit.alphas[0] - 0.5).abs() > 1e-6
        || (fit.alphas[1] - 0.5).abs() > 1e-6
        || fit.model.bias().abs() > 1e-6
        || (margin - 2.0).abs() > 1e-6
    {
        failures.push(format!(
            "two-point: alphas {:?} bias {} margin {margin}",
            fit.alphas,
            fit.model.bias()
        ));
    }
    if (fit.model.decision(&[0.5]).unwrap() - 0.5).abs() > 1e-6 {
        failures.push("two-point: f(0.5) != 0.5".into());
    }

    let xor = [[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]];
    let ys = [-1i8, -1, 1, 1];
    let refs: Vec<&[f64]> = xor.iter().map(|r| &r[..]).collect();
    let rbf = svm_fit(&refs, &ys, Kernel::Rbf { gamma: 1.0 }, 1e3).unwrap();
    let lin = svm_fit(&refs, &ys, Kernel::Linear, 1e3).unwrap();
    let acc = |m: &brainvox_core::baseline::SvmModel| {
        xor.iter().zip(&ys).filter(|(x, &y)| m.predict(&x[..]).unwrap() == y).count() as f64 / 4.0
    };
    if acc(&rbf) != 1.0 {
        failures.push(format!("XOR: RBF training accuracy {}", acc(&rbf)));
    }
    if acc(&lin) > 0.75 {
        failures.push(format!("XOR: linear training accuracy {}", acc(&lin)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_kkt = 0.0f64;
    let mut worst_sum = 0.0f64;
    for case in 0..datasets {
        let n = rng.random_range(8..=40);
        let d = rng.random_range(1..=5);
        let sep = rng.random_range(0.0..3.0);
        let mut feats = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let y: i8 = if i % 2 == 0 { 1 } else { -1 };
            feats.push((0..d).map(|_| gaussian(&mut rng) + f64::from(y) * sep / 2.0).collect::<Vec<f64>>());
            labels.push(y);
        }
        let c = [0.1, 1.0, 10.0][case % 3];
        let kernel = if case % 2 == 0 {
            Kernel::Linear
        } else {
            Kernel::Rbf {
                gamma: rng.random_range(0.1..2.0),
            }
        };
        let refs: Vec<&[f64]> = feats.iter().map(Vec::as_slice).collect();
        let fit = svm_fit_detailed(&refs, &labels, kernel, c, true).unwrap();
        // Optimality conditions recomputed from the returned model.
        let mut kkt = 0.0f64;
        for (i, x) in refs.iter().enumerate() {
            let m = f64::from(labels[i]) * fit.model.decision(x).unwrap() - 1.0;
            let a = fit.alphas[i];
            let v = if a <= 0.0 {
                (-m).max(0.0)
            } else if a >= c {
                m.max(0.0)
            } else {
                m.abs()
            };
            kkt = kkt.max(v);
            if !(0.0..=c).contains(&a) {
                failures.push(format!("case {case}: alpha {a} outside [0, {c}]"));
            }
        }
        let sum: f64 = fit.alphas.iter().zip(&labels).map(|(a, &y)| a * f64::from(y)).sum();
        worst_kkt = worst_kkt.max(kkt);
        worst_sum = worst_sum.max(sum.abs());
        if kkt >= 1e-3 {
            failures.push(format!("case {case}: KKT residual {kkt:e}"));
        }
        if sum.abs() >= 1e-6 {
            failures.push(format!("case {case}: sum alpha*y = {sum:e}"));
        }
        if let Some(w) = fit.objective_trace.windows(2).find(|w| w[1] < w[0] - 1e-12 * w[0].abs().max(1.0)) {
            failures.push(format!("case {case}: dual objective fell from {} to {}", w[0], w[1]));
        }
    }
    outcome(
        &failures,
        format!("two-point, XOR and {datasets} random problems; worst KKT {worst_kkt:e}, worst |sum alpha y| {worst_sum:e}"),
    )
}

fn orthonormality_error(comps: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (i, a) in comps.iter().enumerate() {
        for (j, b) in comps.iter().enumerate() {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
            let want = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot - want).abs());
        }
    }
    worst
}

/// Orthonormality, Gram/covariance agreement (20x6 and wide instances),
/// eigenvalues against nalgebra, and full-rank reconstruction.
pub fn pca(instances: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut worst = [0.0f64; 4];
    for case in 0..instances {
        let (n, d) = if case % 2 == 0 { (20, 6) } else { (8, rng.random_range(9..=30)) };
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|j| gaussian(&mut rng) * (1.0 + j as f64)).collect())
            .collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let gram = pca_fit_with(&refs, 1.0, PcaMethod::Gram).unwrap();
        let cov = pca_fit_with(&refs, 1.0, PcaMethod::Covariance).unwrap();

        let ortho = orthonormality_error(gram.components()).max(orthonormality_error(cov.components()));
        worst[0] = worst[0].max(ortho);
        if ortho >= 1e-8 {
            failures.push(format!("case {case}: orthonormality error {ortho:e}"));
        }

        if gram.k() != cov.k() {
            failures.push(format!("case {case}: k {} vs {}", gram.k(), cov.k()));
            continue;
        }
        let mut diff = 0.0f64;
        for (a, b) in gram.eigenvalues().iter().zip(cov.eigenvalues()) {
            diff = diff.max((a - b).abs());
        }
        for (a, b) in gram.components().iter().zip(cov.components()) {
            for (x, y) in a.iter().zip(b) {
                diff = diff.max((x - y).abs());
            }
        }
        worst[1] = worst[1].max(diff);
        if diff >= 1e-8 {
            failures.push(format!("case {case}: Gram vs covariance {diff:e}"));
        }

        let oracle = oracles::covariance_eigenvalues(&rows);
        let ev = cov.eigenvalues();
        let eig_diff = ev.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst[2] = worst[2].max(eig_diff);
        if eig_diff >= 1e-8 {
            failures.push(format!("case {case}: eigenvalues vs nalgebra {eig_diff:e}"));
        }
        let ratio_sum: f64 = cov.explained_variance_ratio().iter().sum();
        if (ratio_sum - 1.0).abs() > 1e-12 {
            failures.push(format!("case {case}: ratios sum to {ratio_sum}"));
        }

        let auto = pca_fit(&refs, 1.0).unwrap();
        for r in &rows {
            let back = auto.reconstruct(&auto.transform(r).unwrap()).unwrap();
            let err = back.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            worst[3] = worst[3].max(err);
            if err >= 1e-8 {
                failures.push(format!("case {case}: reconstruction error {err:e}"));
                break;
            }
        }
    }
    outcome(
        &failures,
        format!(
            "{instances} instances; worst orthonormality {:e}, Gram/cov {:e}, eigenvalues {:e}, reconstruction {:e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

/// Labels all equal to their index parity give no signal; thresholds on
/// the first voxel make a cheap family with several candidates.
#[derive(Clone)]
pub struct ThresholdFamily {
    pub thresholds: Vec<f64>,
}

pub struct ThresholdModel {
    threshold: f64,
    flip: bool,
}

impl Classifier for ThresholdModel {
    fn predict_proba(&self, x: &Tensor) -> Result<f64> {
        let hit = x.data()[0] >= self.threshold;
        Ok(if hit != self.flip { 0.9 } else { 0.1 })
    }
}

impl ModelFamily for ThresholdFamily {
    type Model = ThresholdModel;
    type Hyper = f64;

    fn name(&self) -> String {
        "threshold".into()
    }

    fn candidates(&self) -> Vec<f64> {
        self.thresholds.clone()
    }

    fn fit(&self, train: &TrainView<'_>, t: &f64, _seed: u64) -> Result<ThresholdModel> {
        let mut agree = 0i64;
        for j in 0..train.len() {
            let hit = train.sample(j).data()[0] >= *t;
            agree += if hit == (train.label(j) == 1) { 1 } else { -1 };
        }
        Ok(ThresholdModel {
            threshold: *t,
            flip: agree < 0,
        })
    }
}

/// Predicts from a hash of the fit seed and the sample, so accuracy varies
/// between repeats.
pub struct CoinFamily;

pub struct CoinModel(u64);

impl Classifier for CoinModel {
    fn predict_proba(&self, x: &Tensor) -> Result<f64> {
        let h = derive_seed(self.0, x.data()[0].to_bits());
        Ok((h >> 11) as f64 / (1u64 << 53) as f64)
    }
}

impl ModelFamily for CoinFamily {
    type Model = CoinModel;
    type Hyper = ();

    fn name(&self) -> String {
        "coin".into()
    }

    fn candidates(&self) -> Vec<()> {
        vec![()]
    }

    fn fit(&self, train: &TrainView<'_>, _: &(), seed: u64) -> Result<CoinModel> {
        let _ = train.label(0);
        Ok(CoinModel(seed))
    }
}

pub fn scalar_dataset(rng: &mut ChaCha8Rng, n: usize) -> Dataset {
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let samples = labels
        .iter()
        .map(|&y| Tensor::new(&[1, 1, 1, 2], vec![f64::from(y) * 0.3 + rng.random_range(0.0..1.0), 0.0]).unwrap())
        .collect();
    let ids = (0..n).map(|i| format!("s{i}")).collect();
    Dataset::new(samples, labels, ids).unwrap()
}

/// Fold laws on `cases` random problems, leakage audits on nested CV runs,
/// and best-repeat selection against an independent argmax.
pub fn protocol(cases: usize, seed: u64) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    for case in 0..cases {
        let k = rng.random_range(2..=6);
        let n = rng.random_range(2 * k..=80);
        let p = rng.random_range(0.2..0.8);
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(p))).collect();
        // Make each class at least k strong.
        for i in 0..k {
            labels[i] = 0;
            labels[n - 1 - i] = 1;
        }
        let s = rng.random::<u64>();
        let plan = stratified_kfold(&labels, k, s).unwrap();
        let mut seen = vec![0usize; n];
        for f in plan.folds() {
            for &i in f {
                seen[i] += 1;
            }
        }
        if seen.iter().any(|&c| c != 1) {
            failures.push(format!("case {case}: folds do not partition 0..{n}"));
        }
        let sizes: Vec<usize> = plan.folds().iter().map(Vec::len).collect();
        if sizes.iter().max().unwrap() - sizes.iter().min().unwrap() > 1 {
            failures.push(format!("case {case}: fold sizes {sizes:?}"));
        }
        let pos = labels.iter().filter(|&&y| y == 1).count() as f64;
        for f in plan.folds() {
            let fp = f.iter().filter(|&&i| labels[i] == 1).count() as f64;
            let expected = pos * f.len() as f64 / n as f64;
            if (fp - expected).abs() > 1.0 + 1e-9 {
                failures.push(format!("case {case}: fold has {fp} positives, expected {expected:.2}"));
            }
        }
        if stratified_kfold(&labels, k, s).unwrap() != plan {
            failures.push(format!("case {case}: plan not reproducible"));
        }
    }

    let mut audits = 0;
    for run in 0..6 {
        let data = scalar_dataset(&mut rng, 30 + run * 7);
        let family = ThresholdFamily {
            thresholds: vec![0.2, 0.4, 0.6, 0.8],
        };
        let settings = CvSettings {
            outer_folds: 5,
            inner_folds: 4,
            repeats: 1,
            seed: run as u64,
        };
        let cv = nested_cv(&data, &family, &settings, run as u64).unwrap();
        for (f, fold) in cv.folds.iter().enumerate() {
            audits += 1;
            let test = cv.plan.test_indices(f);
            let train = cv.plan.train_indices(f);
            if fold.touched.iter().any(|i| test.contains(i)) {
                failures.push(format!("run {run} fold {f}: held-out index touched"));
            }
            if fold.touched.iter().any(|i| !train.contains(i)) {
                failures.push(format!("run {run} fold {f}: touched index outside training portion"));
            }
            if fold.inner_scores.len() != 4 {
                failures.push(format!("run {run} fold {f}: inner loop did not run"));
            }
        }
    }

    let data = scalar_dataset(&mut rng, 40);
    let settings = CvSettings {
        outer_folds: 5,
        inner_folds: 4,
        repeats: 10,
        seed: 77,
    };
    let out = repeat_and_average(&data, &CoinFamily, &settings).unwrap();
    let table: Vec<f64> = out.repeats.iter().map(|r| r.mean.accuracy).collect();
    // Recompute each repeat's mean accuracy from its fold predictions.
    let recomputed: Vec<f64> = out
        .repeats
        .iter()
        .map(|r| {
            r.folds
                .iter()
                .map(|f| {
                    let ok = f
                        .test_indices
                        .iter()
                        .zip(&f.predictions)
                        .filter(|(&i, &p)| data.labels()[i] == p)
                        .count();
                    ok as f64 / f.test_indices.len() as f64
                })
                .sum::<f64>()
                / r.folds.len() as f64
        })
        .collect();
    let mut argmax = 0;
    for (i, &a) in recomputed.iter().enumerate() {
        if a > recomputed[argmax] {
            argmax = i;
        }
    }
    if out.best_repeat != argmax {
        failures.push(format!("best repeat {} but argmax {argmax} over {recomputed:?}", out.best_repeat));
    }
    if table.iter().zip(&recomputed).any(|(a, b)| (a - b).abs() > 1e-12) {
        failures.push("logged repeat accuracies differ from recomputation".into());
    }
    outcome(
        &failures,
        format!(
            "{cases} fold plans, {audits} audited folds, best repeat {} of {}",
            out.best_repeat,
            table.len()
        ),
    )
}
