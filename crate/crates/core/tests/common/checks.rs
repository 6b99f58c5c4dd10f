//! Named numerical checks shared by the focused test files and the acceptance runner.

use rand::Rng;
use seanet_core::correlation::ChannelCorrelation;
use seanet_core::dynamic_matching::{ddconv, SemanticMatch};
use seanet_core::edge_alignment::{extract_edge, Eeu};
use seanet_core::losses::{bce_loss, downscale_gt, edge_align_loss, iou_loss, total_loss};
use seanet_core::metrics;
use seanet_core::nn::{named_params, Ctx, Init, Module, Param};
use seanet_core::tensor::Tensor;
use seanet_core::{ModelConfig, SeaNet};

use super::*;

pub const OPERATOR_TOL: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-3;
pub const GRAD_STEP: f64 = 1e-6;
/// Gradients smaller than this are compared in absolute terms.
pub const GRAD_FLOOR: f64 = 1e-5;
pub const METRIC_TOL: f64 = 1e-6;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub err: f64,
    pub tol: f64,
}

impl Check {
    pub fn new(name: impl Into<String>, err: f64, tol: f64) -> Self {
        Self { name: name.into(), err, tol }
    }

    pub fn pass(&self) -> bool {
        self.err.is_finite() && self.err <= self.tol
    }
}

pub fn failures(checks: &[Check]) -> Vec<String> {
    checks.iter().filter(|c| !c.pass()).map(|c| format!("{} err {:.3e} > {:.0e}", c.name, c.err, c.tol)).collect()
}

pub fn assert_all(checks: &[Check]) {
    let bad = failures(checks);
    assert!(bad.is_empty(), "{}", bad.join("\n"));
}

fn randomize(m: &impl Module<f64>, seed: u64) {
    let mut r = rng(seed);
    for (_, p) in named_params(m, "") {
        p.set(uniform(&mut r, p.numel(), -0.5, 0.5)).unwrap();
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

fn scalar_rel(a: f64, b: f64) -> f64 {
    if (a - b).abs() <= 1e-12 {
        0.0
    } else {
        rel(a, b)
    }
}

// ---- operators ---------------------------------------------------------------------

pub fn operator_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let mut r = rng(100);
    let dims = [2, 3, 7, 6];
    let n = dims.iter().product();
    let f = uniform(&mut r, n, -1.0, 1.0);
    let k = uniform(&mut r, 2 * 3 * 25, -1.0, 1.0);
    let ft = tensor(f.clone(), &dims);
    let kt = tensor(k.clone(), &[2, 3, 5, 5]);
    for dil in 1..=3 {
        let got = ddconv(&ft, &kt, dil).unwrap();
        out.push(Check::new(format!("ddconv r={dil}"), max_rel_err(got.data(), &ddconv_ref(&f, dims, &k, 5, dil)), OPERATOR_TOL));
    }

    let sm = SemanticMatch::<f64>::new(&mut Init::new(3), 3, [1, 2, 3]);
    randomize(&sm, 101);
    let mut sum = vec![0.0; n];
    for dil in 1..=3 {
        for (s, v) in sum.iter_mut().zip(ddconv_ref(&f, dims, &k, 5, dil)) {
            *s += v;
        }
    }
    let got = sm.forward(&ft, &kt).unwrap();
    out.push(Check::new("semantic match", max_rel_err(got.data(), &conv_layer(&sum, dims, &sm.pointwise)), OPERATOR_TOL));

    let got = extract_edge(&ft, 3).unwrap();
    out.push(Check::new("edge extraction", max_rel_err(got.data(), &extract_edge_ref(&f, dims, 3)), OPERATOR_TOL));

    let eeu = Eeu::<f64>::new(&mut Init::new(4), 3, 3);
    randomize(&eeu, 102);
    let (enhanced, _) = eeu.forward(&ft).unwrap();
    let edge = extract_edge_ref(&f, dims, 3);
    let gate = conv_layer(&edge, dims, &eeu.gate);
    let want: Vec<f64> = gate.iter().zip(&f).map(|(g, v)| sigmoid(*g) * v + v).collect();
    out.push(Check::new("edge enhancement", max_rel_err(enhanced.data(), &want), OPERATOR_TOL));

    let cdims = [2, 2, 4, 3];
    let cn = cdims.iter().product();
    let f1 = uniform(&mut r, cn, -1.0, 1.0);
    let f2 = uniform(&mut r, cn, -1.0, 1.0);
    let cc = ChannelCorrelation::<f64>::new(&mut Init::new(5), 2);
    randomize(&cc, 103);
    let (t1, t2) = (tensor(f1.clone(), &cdims), tensor(f2.clone(), &cdims));
    let att = cc.attend(&t1, &t2).unwrap();
    let want = ccorr_attention(&f1, &f2, cdims, &cc.wm.to_vec());
    out.push(Check::new("ccorr affinity", max_rel_err(att.affinity.data(), &want.affinity), OPERATOR_TOL));
    let e = max_rel_err(att.enhanced1.data(), &want.enhanced1).max(max_rel_err(att.enhanced2.data(), &want.enhanced2));
    out.push(Check::new("ccorr enhancement", e, OPERATOR_TOL));
    let fused = cc.forward(&t1, &t2, &Ctx::eval()).unwrap();
    let s1: Vec<f64> = want.enhanced1.iter().zip(&f1).map(|(a, b)| a + b).collect();
    let s2: Vec<f64> = want.enhanced2.iter().zip(&f2).map(|(a, b)| a + b).collect();
    let (r1, r2) = (dsconv_eval(&s1, cdims, &cc.refine1), dsconv_eval(&s2, cdims, &cc.refine2));
    let per = cn / 2;
    let expected: Vec<f64> = (0..2).flat_map(|b| r1[b * per..(b + 1) * per].iter().chain(&r2[b * per..(b + 1) * per]).copied()).collect();
    out.push(Check::new("ccorr output", max_rel_err(fused.data(), &expected), OPERATOR_TOL));

    // Losses, including the documented closed forms.
    let logits = uniform(&mut r, 2 * 16, -3.0, 3.0);
    let g: Vec<f64> = uniform(&mut r, 32, 0.0, 1.0).into_iter().map(|v| f64::from(u8::from(v > 0.5))).collect();
    let (lt, gt) = (tensor(logits.clone(), &[2, 1, 4, 4]), tensor(g.clone(), &[2, 1, 4, 4]));
    out.push(Check::new("bce", scalar_rel(bce_loss(&lt, &gt).unwrap().item().unwrap(), bce(&logits, &g)), OPERATOR_TOL));
    let s: Vec<f64> = logits.iter().map(|&x| sigmoid(x)).collect();
    let u = iou_loss(&tensor(s.clone(), &[2, 1, 4, 4]), &gt, 1.0).unwrap().item().unwrap();
    out.push(Check::new("iou", scalar_rel(u, iou(&s, &g, 2, 1.0)), OPERATOR_TOL));
    let e1 = uniform(&mut r, 48, -1.0, 1.0);
    let e2 = uniform(&mut r, 48, -1.0, 1.0);
    let l = edge_align_loss(&tensor(e1.clone(), &[1, 3, 4, 4]), &tensor(e2.clone(), &[1, 3, 4, 4]), &tensor(vec![0.25], &[1])).unwrap();
    out.push(Check::new("edge alignment", scalar_rel(l.item().unwrap(), edge_align(&e1, &e2, 0.25)), OPERATOR_TOL));

    let half = bce_loss(&tensor(vec![0.0; 16], &[1, 1, 4, 4]), &gt.narrow(0, 0, 1).unwrap()).unwrap().item().unwrap();
    out.push(Check::new("bce at one half is ln 2", scalar_rel(half, std::f64::consts::LN_2), OPERATOR_TOL));
    let miss = iou_loss(&tensor(vec![0.0; 16], &[1, 1, 4, 4]), &tensor(vec![1.0; 16], &[1, 1, 4, 4]), 1.0).unwrap();
    out.push(Check::new("iou closed form", scalar_rel(miss.item().unwrap(), 1.0 - 1.0 / 17.0), OPERATOR_TOL));
    let perfect = iou_loss(&gt, &gt, 1.0).unwrap().item().unwrap();
    out.push(Check::new("iou of identical maps", perfect.abs(), OPERATOR_TOL));

    let gd = uniform(&mut r, 2 * 64, 0.0, 1.0).into_iter().map(|v| f64::from(u8::from(v > 0.5))).collect::<Vec<_>>();
    let gdt = tensor(gd.clone(), &[2, 1, 8, 8]);
    let down = downscale_gt(&gdt, 4).unwrap();
    out.push(Check::new("target downscale", max_rel_err(down.data(), &downscale_gt_ref(&gd, 2, 8, 4)), OPERATOR_TOL));
    out
}

fn ddconv_ref(f: &[f64], dims: [usize; 4], k: &[f64], ks: usize, r: usize) -> Vec<f64> {
    super::ddconv(f, dims, k, ks, r)
}

fn extract_edge_ref(f: &[f64], dims: [usize; 4], k: usize) -> Vec<f64> {
    super::extract_edge(f, dims, k)
}

fn downscale_gt_ref(g: &[f64], batch: usize, size: usize, out: usize) -> Vec<f64> {
    super::downscale_gt(g, batch, size, out)
}

// ---- gradients ---------------------------------------------------------------------

/// Worst relative deviation between autograd and central differences for leaf inputs.
fn input_gradients(inputs: &[(Vec<f64>, Vec<usize>)], samples: usize, seed: u64, build: impl Fn(&[Tensor<f64>]) -> Tensor<f64>) -> f64 {
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|(d, s)| Tensor::variable(d.clone(), s).unwrap()).collect();
    let grads = build(&leaves).backward().unwrap();
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for (i, (data, shape)) in inputs.iter().enumerate() {
        let analytic = grads.get(&leaves[i]).expect("leaf receives a gradient").to_vec();
        let idx: Vec<usize> = (0..samples.min(data.len())).map(|_| r.random_range(0..data.len())).collect();
        let mut eval = |x: &[f64]| {
            let mut ts: Vec<Tensor<f64>> = inputs.iter().map(|(d, s)| tensor(d.clone(), s)).collect();
            ts[i] = tensor(x.to_vec(), shape);
            build(&ts).item().unwrap()
        };
        let numeric = finite_diff(&mut eval, data, &idx, GRAD_STEP);
        for (&j, n) in idx.iter().zip(numeric) {
            worst = worst.max(grad_err(analytic[j], n));
        }
    }
    worst
}

/// Outcome of a parameter gradient check.
#[derive(Clone, Copy, Debug)]
pub struct GradReport {
    pub worst: f64,
    pub checked: usize,
    /// Coordinates where the loss has a kink within one step (ReLU6 clipping, ReLU at zero),
    /// detected by disagreeing one-sided differences.
    pub kinks: usize,
}

/// Worst deviation for selected `(parameter, flat index)` coordinates of a module.
fn param_gradients(coords: &[(&Param<f64>, usize)], loss: impl Fn() -> Tensor<f64>) -> GradReport {
    let l0 = loss();
    let f0 = l0.item().unwrap();
    let grads = l0.backward().unwrap();
    // Perturbing swaps in fresh leaves, so read every analytic value first.
    let analytic: Vec<f64> = coords.iter().map(|&(p, j)| grads.get(&p.tensor()).map_or(0.0, |g| g[j])).collect();
    let mut report = GradReport { worst: 0.0, checked: 0, kinks: 0 };
    for (&(p, j), analytic) in coords.iter().zip(analytic) {
        let base = p.to_vec();
        let at = |delta: f64| {
            let mut v = base.clone();
            v[j] += delta;
            p.set(v).unwrap();
            loss().item().unwrap()
        };
        let (fp, fm) = (at(GRAD_STEP), at(-GRAD_STEP));
        p.set(base).unwrap();
        let (forward, backward) = ((fp - f0) / GRAD_STEP, (f0 - fm) / GRAD_STEP);
        if grad_err(forward, backward) > GRAD_TOL {
            report.kinks += 1;
            continue;
        }
        report.checked += 1;
        report.worst = report.worst.max(grad_err(analytic, (fp - fm) / (2.0 * GRAD_STEP)));
    }
    report
}

fn grad_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(GRAD_FLOOR)
}

/// Contracts a tensor with fixed random weights so every output element matters.
fn probe(out: &Tensor<f64>, seed: u64) -> Tensor<f64> {
    let w = uniform(&mut rng(seed), out.numel(), -1.0, 1.0);
    out.mul(&tensor(w, out.shape())).unwrap().sum()
}

pub fn gradient_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let mut r = rng(200);
    let dims = [2, 2, 5, 5];
    let f = uniform(&mut r, 100, -1.0, 1.0);
    let k = uniform(&mut r, 2 * 2 * 9, -1.0, 1.0);
    for dil in 1..=3 {
        let e = input_gradients(&[(f.clone(), dims.to_vec()), (k.clone(), vec![2, 2, 3, 3])], 12, 201, |t| {
            probe(&ddconv(&t[0], &t[1], dil).unwrap(), 202)
        });
        out.push(Check::new(format!("ddconv r={dil} wrt input and kernel"), e, GRAD_TOL));
    }

    let e = input_gradients(&[(f.clone(), dims.to_vec())], 12, 203, |t| probe(&extract_edge(&t[0], 3).unwrap(), 204));
    out.push(Check::new("edge extraction wrt input", e, GRAD_TOL));

    let cdims = [2, 3, 4, 4];
    let f1 = uniform(&mut r, 96, -1.0, 1.0);
    let f2 = uniform(&mut r, 96, -1.0, 1.0);
    let cc = ChannelCorrelation::<f64>::new(&mut Init::new(205), 3);
    let coords: Vec<(&Param<f64>, usize)> = (0..9).map(|j| (&cc.wm, j)).collect();
    let e = param_gradients(&coords, || {
        let a = cc.attend(&tensor(f1.clone(), &cdims), &tensor(f2.clone(), &cdims)).unwrap();
        probe(&a.enhanced1, 206).add(&probe(&a.enhanced2, 207)).unwrap()
    })
    .worst;
    out.push(Check::new("ccorr attention wrt Wm", e, GRAD_TOL));
    let e = param_gradients(&coords, || probe(&cc.forward(&tensor(f1.clone(), &cdims), &tensor(f2.clone(), &cdims), &Ctx::eval()).unwrap(), 208)).worst;
    out.push(Check::new("ccorr output wrt Wm", e, GRAD_TOL));

    // Mixed signs so both PReLU branches carry gradient.
    let e1 = uniform(&mut r, 48, -1.0, 1.0);
    let e2 = uniform(&mut r, 48, -1.0, 1.0);
    let e = input_gradients(&[(e1, vec![1, 3, 4, 4]), (e2, vec![1, 3, 4, 4]), (vec![0.25], vec![1])], 12, 209, |t| {
        edge_align_loss(&t[0], &t[1], &t[2]).unwrap()
    });
    out.push(Check::new("edge alignment wrt e1, e2 and slope", e, GRAD_TOL));

    let m = model_gradients(2024, 20);
    // Too many kinks would leave too few smooth coordinates to mean anything.
    let err = if m.checked * 4 >= 20 * 3 { m.worst } else { f64::INFINITY };
    out.push(Check::new(format!("total loss wrt {} sampled model parameters ({} at kinks)", m.checked, m.kinks), err, GRAD_TOL));
    out
}

/// Shrunken full network: every component active, batch 2, fixed dropout stream.
pub fn model_gradients(seed: u64, samples: usize) -> GradReport {
    let cfg = ModelConfig { width: 0.125, ..ModelConfig::default() };
    let size = 32;
    let model = SeaNet::<f64>::new(&cfg, size, seed).unwrap();
    let mut r = rng(seed);
    let image = tensor(uniform(&mut r, 2 * 3 * size * size, -1.0, 1.0), &[2, 3, size, size]);
    let mask: Vec<f64> = (0..2 * size * size)
        .map(|i| {
            let (y, x) = ((i / size) % size, i % size);
            f64::from(u8::from((y as f64 - 15.5).hypot(x as f64 - 15.5) < 9.0 + (i / (size * size)) as f64 * 3.0))
        })
        .collect();
    let gt = tensor(mask, &[2, 1, size, size]);

    let params = named_params(&model, "");
    let mut coords: Vec<(&Param<f64>, usize)> = Vec::new();
    // Always cover the components that carry the method's own parameters.
    for key in ["align_prelu.weight", ".wm", ".gate.weight", "match3.pointwise.weight"] {
        if let Some((_, p)) = params.iter().find(|(n, _)| n.ends_with(key) || n.contains(key)) {
            coords.push((p, r.random_range(0..p.numel())));
        }
    }
    while coords.len() < samples {
        let (_, p) = &params[r.random_range(0..params.len())];
        coords.push((p, r.random_range(0..p.numel())));
    }
    param_gradients(&coords, || {
        let ctx = Ctx::train(seed);
        let out = model.forward(&image, &ctx).unwrap();
        let slope = model.align_slope.as_ref().map(|p| p.tensor());
        total_loss(&out.saliency, &gt, out.edges.as_ref(), slope.as_ref(), 0.5, 1.0).unwrap().total
    })
}

// ---- metrics -----------------------------------------------------------------------

fn metric_case(name: &str, s: &[f64], g: &[bool], out: &mut Vec<Check>) {
    let (f, f_curve_lib) = metrics::f_measure(s, g).unwrap();
    let (e, e_curve_lib) = metrics::e_measure(s, g).unwrap();
    let fc = f_curve(s, g);
    let ec = e_curve(s, g);
    let curve_err = f_curve_lib
        .iter()
        .zip(&fc)
        .map(|(a, b)| (a.0 - b.0).abs().max((a.1 - b.1).abs()).max((a.2 - b.2).abs()))
        .chain(e_curve_lib.iter().zip(&ec).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    out.push(Check::new(format!("{name}: F and E curves"), curve_err, METRIC_TOL));
    let fmax = fc.iter().map(|c| c.2).fold(f64::MIN, f64::max);
    let fmean = fc.iter().map(|c| c.2).sum::<f64>() / 256.0;
    let emax = ec.iter().copied().fold(f64::MIN, f64::max);
    let emean = ec.iter().sum::<f64>() / 256.0;
    let bin = adaptive_bin(s);
    let scalars = [
        (f.max, fmax),
        (f.mean, fmean),
        (f.adaptive, f_at(&bin, g).2),
        (e.max, emax),
        (e.mean, emean),
        (e.adaptive, e_at(&bin, g)),
        (metrics::mae(s, g).unwrap(), mae(s, g)),
        (metrics::s_measure(s, g, 8, 8).unwrap(), s_measure(s, g, 8, 8)),
    ];
    let err = scalars.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(Check::new(format!("{name}: scalar scores"), err, METRIC_TOL));
}

pub fn metric_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let mut r = rng(300);
    for trial in 0..4 {
        let s = uniform(&mut r, 64, 0.0, 1.0);
        let g: Vec<bool> = (0..64).map(|i| (i % 8) as f64 + (i / 8) as f64 * 0.5 + r.random_range(-1.5..1.5) > 5.0).collect();
        metric_case(&format!("random map {trial}"), &s, &g, &mut out);
    }
    let g: Vec<bool> = (0..64).map(|i| (2..6).contains(&(i % 8)) && (1..5).contains(&(i / 8))).collect();
    let gf: Vec<f64> = g.iter().map(|&b| f64::from(u8::from(b))).collect();
    let s = uniform(&mut r, 64, 0.0, 1.0);
    metric_case("empty ground truth", &s, &[false; 64], &mut out);
    metric_case("full ground truth", &s, &[true; 64], &mut out);
    metric_case("prediction equals ground truth", &gf, &g, &mut out);
    let inv: Vec<f64> = gf.iter().map(|v| 1.0 - v).collect();
    metric_case("inverted prediction", &inv, &g, &mut out);

    // Closed values for the degenerate cases.
    let (f, _) = metrics::f_measure(&s, &[false; 64]).unwrap();
    out.push(Check::new("empty ground truth gives zero F", f.max.abs().max(f.mean.abs()), METRIC_TOL));
    let (f, _) = metrics::f_measure(&gf, &g).unwrap();
    let (e, _) = metrics::e_measure(&gf, &g).unwrap();
    let sm = metrics::s_measure(&gf, &g, 8, 8).unwrap();
    let perfect = [f.max, e.max, sm].iter().map(|v| (1.0 - v).abs()).fold(metrics::mae(&gf, &g).unwrap(), f64::max);
    out.push(Check::new("perfect prediction scores one", perfect, METRIC_TOL));
    let (f, _) = metrics::f_measure(&inv, &g).unwrap();
    let worst = (1.0 - metrics::mae(&inv, &g).unwrap()).abs().max(f.adaptive.abs());
    out.push(Check::new("inverted prediction has unit error and zero adaptive F", worst, METRIC_TOL));
    out
}

// ---- shapes ------------------------------------------------------------------------

fn shape(name: &str, t: &Tensor<f32>, want: [usize; 4]) -> Check {
    let ok = t.shape() == want;
    let label = if ok { name.to_string() } else { format!("{name}: got {:?}, expected {want:?}", t.shape()) };
    Check::new(label, if ok { 0.0 } else { 1.0 }, 0.0)
}

/// Every intermediate of the stock network on a random batch at 288 × 288.
pub fn shape_checks(batch: usize) -> Vec<Check> {
    let n = batch;
    let model = SeaNet::<f32>::new(&ModelConfig::default(), 288, 11).unwrap();
    let data: Vec<f32> = uniform(&mut rng(12), n * 3 * 288 * 288, -2.0, 2.0).into_iter().map(|v| v as f32).collect();
    let image = Tensor::from_vec(data, &[n, 3, 288, 288]).unwrap();
    let ctx = Ctx::eval();
    seanet_core::tensor::no_grad(|| {
        let mut out = Vec::new();
        let feats = model.backbone.encode(&image, &ctx).unwrap();
        let levels = [[16, 144], [24, 72], [32, 36], [96, 18], [320, 9]];
        for (i, [c, s]) in levels.into_iter().enumerate() {
            out.push(shape(&format!("E{}", i + 1), feats.level(i + 1), [n, c, s, s]));
        }
        let dsmm = model.dsmm.as_ref().unwrap().forward_parts(feats.level(3), feats.level(4), feats.level(5), &ctx).unwrap();
        let k = dsmm.kernels.as_ref().unwrap();
        out.push(shape("SKC kernel for E3", &k.k3, [n, 32, 5, 5]));
        out.push(shape("SKC kernel for E4", &k.k4, [n, 96, 5, 5]));
        out.push(shape("matched E3", &dsmm.matched[0], [n, 32, 36, 36]));
        out.push(shape("matched E4", &dsmm.matched[1], [n, 96, 18, 18]));
        out.push(shape("DSMM aligned E3", &dsmm.aligned[0], [n, 96, 36, 36]));
        out.push(shape("DSMM aligned E4", &dsmm.aligned[1], [n, 96, 36, 36]));
        out.push(shape("DSMM output", &dsmm.fused, [n, 192, 36, 36]));

        let esam = model.esam.as_ref().unwrap().forward(feats.level(1), feats.level(2), &ctx).unwrap();
        out.push(shape("ESAM aligned E1", &esam.aligned[0], [n, 24, 144, 144]));
        out.push(shape("ESAM aligned E2", &esam.aligned[1], [n, 24, 144, 144]));
        let edges = esam.edges.as_ref().unwrap();
        out.push(shape("edge map 1", &edges[0], [n, 24, 144, 144]));
        out.push(shape("edge map 2", &edges[1], [n, 24, 144, 144]));
        out.push(shape("ESAM output", &esam.fused, [n, 48, 144, 144]));

        let dec = &model.decoder;
        let d5 = dec.d5.forward(feats.level(5), &ctx).unwrap();
        out.push(shape("D5", &d5, [n, 192, 36, 36]));
        let d34 = dec.d34.forward(&Tensor::cat(&[&d5, &dsmm.fused], 1).unwrap(), &ctx).unwrap();
        out.push(shape("D34", &d34, [n, 48, 144, 144]));
        let d12 = dec.d12.forward(&Tensor::cat(&[&d34, &esam.fused], 1).unwrap(), &ctx).unwrap();
        out.push(shape("D12", &d12, [n, 48, 288, 288]));

        let full = model.forward(&image, &ctx).unwrap();
        for (i, s) in [288, 144, 36].into_iter().enumerate() {
            out.push(shape(&format!("S{} map", i + 1), &full.saliency.maps[i], [n, 1, s, s]));
            out.push(shape(&format!("S{} logits", i + 1), &full.saliency.logits[i], [n, 1, s, s]));
        }
        let in_range = full.saliency.maps.iter().all(|m| m.data().iter().all(|v| (0.0..=1.0).contains(v)));
        out.push(Check::new("saliency maps lie in [0, 1]", if in_range { 0.0 } else { 1.0 }, 0.0));
        out
    })
}
