//! The runnable oracle suite: gradient checks, shifted-window equivalence,
//! contrast brute force, temporal reachability, and metric protocol checks.
//! Both the CLI `verify` subcommand and the acceptance tests drive these.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contrast::{pixel_contrast_loss, KeySource, PairBatch};
use crate::data::LabelMap;
use crate::metrics::{frame_scores, wilcoxon_signed_rank};
use crate::oracle;
use crate::segnet::{Model, ModelConfig};
use crate::stswin::{
    gradient_dependency, shifted_window_attention, time_shift_schedule, AttentionWeights,
    BlockConfig, StswinBlock,
};
use crate::tensor::{grad_check, grad_check_param, max_abs_diff, Tensor};
use crate::train::ce_ohem_loss;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn from_err(name: &str, err: f64, tol: f64) -> Check {
        Check {
            name: name.to_string(),
            passed: err < tol,
            detail: format!("max err {err:.3e} (tolerance {tol:.0e})"),
        }
    }

    fn bool(name: &str, passed: bool, detail: String) -> Check {
        Check { name: name.to_string(), passed, detail }
    }
}

fn tiny_model_cfg() -> ModelConfig {
    ModelConfig {
        height: 16,
        width: 16,
        stride: 4,
        channels: 8,
        clip_len: 2,
        window: 2,
        num_heads: 2,
        d_tr: 16,
        d_cl: 4,
        num_classes: 4,
        aspp_rates: vec![1, 2],
        seg_hidden: 4,
        ..ModelConfig::default()
    }
}

/// Gradient correctness over every differentiable operation and the full
/// network loss, CE and contrast (finite differences, eps = 1e-5, double
/// precision, tolerance 1e-5 relative).
pub fn grad_check_suite() -> Vec<Check> {
    const EPS: f64 = 1e-5;
    const TOL: f64 = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut checks = Vec::new();

    // Elementwise, matmul, shape and normalization operations.
    {
        let w = Tensor::uniform(&[4, 3], -1.0, 1.0, &mut rng);
        let bias = Tensor::uniform(&[3], -0.5, 0.5, &mut rng);
        let x0 = Tensor::uniform(&[5, 4], -1.0, 1.0, &mut rng);
        let err = grad_check(
            |x| {
                let y = x.matmul(&w).add_bias(&bias);
                let z = y.gelu().add(&y.relu()).sub(&y.softplus()).mul(&y);
                let cat = Tensor::concat_lastdim(&[&z, &y]);
                Tensor::concat_rows(&[&cat.slice_rows(0, 3), &cat.slice_rows(2, 3)])
                    .gather_rows(&[0, 5, 2, 2])
                    .slice_cols(1, 4)
                    .l2_normalize_rows(1e-12)
                    .softmax_lastdim()
                    .mul_scalar(3.0)
                    .add_scalar(0.1)
                    .sum_all()
            },
            &x0,
            EPS,
        );
        checks.push(Check::from_err("grad/elementwise+shape+matmul", err, TOL));
    }
    {
        let gain = Tensor::uniform(&[6], 0.5, 1.5, &mut rng);
        let bias = Tensor::uniform(&[6], -0.5, 0.5, &mut rng);
        let x0 = Tensor::uniform(&[2, 4, 6], -1.0, 1.0, &mut rng);
        let err = grad_check(
            |x| {
                x.layer_norm(&gain, &bias, 1e-5)
                    .group_norm(3, &gain, &bias, 1e-5)
                    .mul(x)
                    .sum_lastdim()
                    .sum_all()
            },
            &x0,
            EPS,
        );
        checks.push(Check::from_err("grad/layer_norm+group_norm", err, TOL));
    }
    {
        let k = Tensor::uniform(&[3, 3, 2, 3], -0.5, 0.5, &mut rng);
        let x0 = Tensor::uniform(&[6, 5, 2], -1.0, 1.0, &mut rng);
        let err = grad_check(
            |x| {
                x.conv2d_dilated(&k, 1, 2, 2)
                    .relu()
                    .roll2d(1, -1)
                    .bilinear_upsample(2)
                    .pad_bottom_right(1, 1)
                    .crop2d(6, 5)
                    .mean_all()
            },
            &x0,
            EPS,
        );
        checks.push(Check::from_err("grad/conv+roll+upsample+pad", err, TOL));
        let kerr = grad_check(
            |kk| x0.conv2d(kk, 2, 1).sum_all(),
            &k,
            EPS,
        );
        checks.push(Check::from_err("grad/conv kernel", kerr, TOL));
    }
    {
        let labels = vec![0u8, 2, 255, 1, 3, 3];
        let x0 = Tensor::uniform(&[6, 4], -1.0, 1.0, &mut rng);
        let err = grad_check(|x| x.ce_per_pixel(&labels, 255).sum_all(), &x0, EPS);
        checks.push(Check::from_err("grad/cross_entropy", err, TOL));
    }

    // One full space-time block on 4x4x8 tokens.
    {
        let bc = BlockConfig { window: 2, num_heads: 2, channels: 8, mlp_ratio: 2.0, use_relative_position_bias: true };
        let block = StswinBlock::new(&bc, &mut rng);
        let other = Tensor::uniform(&[4, 4, 8], -0.5, 0.5, &mut rng);
        let x0 = Tensor::uniform(&[4, 4, 8], -0.5, 0.5, &mut rng);
        let err = grad_check(
            |x| {
                let out = block.forward(&[x, &other]);
                out[0].add(&out[1]).sum_all()
            },
            &x0,
            EPS,
        );
        checks.push(Check::from_err("grad/stswin_block", err, TOL));
    }

    // Full network: CE loss and contrast loss, gradients w.r.t. the input
    // and w.r.t. representative parameters. The end-to-end input check runs
    // on a 32x32x3 frame with 4 classes; the parameter probes use a smaller
    // map to keep the finite differencing cheap.
    {
        let cfg32 = ModelConfig { height: 32, width: 32, ..tiny_model_cfg() };
        let model32 = Model::new(&cfg32, &mut rng);
        let prev32 = Tensor::uniform(&[32, 32, 3], 0.0, 1.0, &mut rng);
        let labels32 = LabelMap::new(32, 32, (0..1024).map(|i| ((i * 7) % 4) as u8).collect());
        let x0 = Tensor::uniform(&[32, 32, 3], 0.0, 1.0, &mut rng);
        let err = grad_check(
            |x| {
                let logits = model32.seg_logits_last(&[prev32.clone(), x.clone()]);
                ce_ohem_loss(&logits, &labels32, 1.0, 255).value
            },
            &x0,
            EPS,
        );
        checks.push(Check::from_err("grad/full_net_ce_input_32x32", err, TOL));
    }
    let cfg = tiny_model_cfg();
    let model = Model::new(&cfg, &mut rng);
    let prev = Tensor::uniform(&[16, 16, 3], 0.0, 1.0, &mut rng);
    let labels = LabelMap::new(16, 16, (0..256).map(|i| ((i * 7) % 4) as u8).collect());
    {
        let frames = vec![prev.clone(), Tensor::uniform(&[16, 16, 3], 0.0, 1.0, &mut rng)];
        let key = crate::tensor::no_grad(|| model.proj_last(std::slice::from_ref(&prev)));
        let key_labels = crate::contrast::downsample_labels(&labels, 4);
        let q_labels = crate::contrast::downsample_labels(&labels, 4);
        let ce_loss = || {
            let logits = model.seg_logits_last(&frames);
            ce_ohem_loss(&logits, &labels, 0.7, 255).value
        };
        let contrast_loss = || {
            let e_q = model.proj_last(&frames);
            let batch = PairBatch::new(
                e_q,
                q_labels.clone(),
                vec![(key.clone(), key_labels.clone(), KeySource::AugmentedSelf)],
                255,
                1.0,
            );
            pixel_contrast_loss(&batch).value
        };
        let named = model.named_params();
        let probe_names = [
            "backbone.stage0.kernel",
            "stage1.block0.attn_r.wq",
            "stage1.block0.attn_s.rel_bias",
            "stage1.block0.ln1.gain",
            "merge.bias",
            "aspp.global_w",
            "seg_head.b3",
        ];
        for name in probe_names {
            let (_, param) = named.iter().find(|(n, _)| n == name).expect("probe parameter exists");
            let err = grad_check_param(ce_loss, param, EPS);
            checks.push(Check::from_err(&format!("grad/full_net_ce[{name}]"), err, TOL));
        }
        for name in ["proj_head.w2", "stage2.block0.mlp2.w1"] {
            let (_, param) = named.iter().find(|(n, _)| n == name).expect("probe parameter exists");
            let err = grad_check_param(contrast_loss, param, EPS);
            checks.push(Check::from_err(&format!("grad/full_net_contrast[{name}]"), err, TOL));
        }
        let x0 = Tensor::uniform(&[16, 16, 3], 0.0, 1.0, &mut rng);
        let err = grad_check(
            |x| {
                let e_q = model.proj_last(&[prev.clone(), x.clone()]);
                let batch = PairBatch::new(
                    e_q,
                    q_labels.clone(),
                    vec![(key.clone(), key_labels.clone(), KeySource::AugmentedSelf)],
                    255,
                    1.0,
                );
                pixel_contrast_loss(&batch).value
            },
            &x0,
            EPS,
        );
        checks.push(Check::from_err("grad/full_net_contrast_input", err, TOL));
    }
    checks
}

/// Masked cyclic-shift attention against dense attention over the explicit
/// shifted sub-windows, elementwise, on random shapes.
pub fn shifted_window_suite(cases: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut ran = 0;
    while ran < cases {
        let m = *[2usize, 2, 3, 4].get(rng.gen_range(0..4)).unwrap();
        let h = m * rng.gen_range(1..=3);
        let w = m * rng.gen_range(1..=3);
        let heads = *[1usize, 2, 4].get(rng.gen_range(0..3)).unwrap();
        let channels = heads * rng.gen_range(2..=4);
        let t = rng.gen_range(1..=2);
        let bc = BlockConfig {
            window: m,
            num_heads: heads,
            channels,
            mlp_ratio: 1.0,
            use_relative_position_bias: rng.gen_bool(0.7),
        };
        let attn = AttentionWeights::new(&bc, 2, &mut rng);
        let frames: Vec<Tensor> =
            (0..t).map(|_| Tensor::uniform(&[h, w, channels], -1.0, 1.0, &mut rng)).collect();
        let refs: Vec<&Tensor> = frames.iter().collect();
        let got = shifted_window_attention(&refs, &attn);

        let mats = [
            attn.wq.to_vec(),
            attn.bq.to_vec(),
            attn.wk.to_vec(),
            attn.bk.to_vec(),
            attn.wv.to_vec(),
            attn.bv.to_vec(),
            attn.wo.to_vec(),
            attn.bo.to_vec(),
        ];
        let bias = attn.rel_bias.as_ref().map(|b| b.to_vec());
        let aref = oracle::AttentionRef {
            wq: &mats[0],
            bq: &mats[1],
            wk: &mats[2],
            bk: &mats[3],
            wv: &mats[4],
            bv: &mats[5],
            wo: &mats[6],
            bo: &mats[7],
            rel_bias: bias.as_deref(),
            channels,
            num_heads: heads,
            window: m,
        };
        let frame_data: Vec<Vec<f64>> = frames.iter().map(|f| f.to_vec()).collect();
        let frame_slices: Vec<&[f64]> = frame_data.iter().map(|v| v.as_slice()).collect();
        let expect = oracle::shifted_window_attention_naive(&frame_slices, h, w, &aref);
        for (g, e) in got.iter().zip(&expect) {
            let diff = g
                .to_vec()
                .iter()
                .zip(e.iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            worst = worst.max(diff);
        }
        ran += 1;
    }
    Check::from_err(&format!("stswin/shifted_window_equivalence[{cases} cases]"), worst, 1e-10)
}

/// Contrast loss against the brute-force quadruple loop across the pair
/// configurations, plus the two closed forms.
pub fn contrast_oracle_suite(instances: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let configs = [(0usize, 0usize), (1, 0), (1, 1), (1, 2), (1, 3), (1, 4), (2, 3)];
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let (adj, cross) = configs[i % configs.len()];
        let num_keys = 1 + adj + cross;
        let d = rng.gen_range(3..=6);
        let p = rng.gen_range(8..=18);
        let query = Tensor::uniform(&[p, d], -1.0, 1.0, &mut rng).l2_normalize_rows(1e-12).detach();
        let q_labels: Vec<u8> =
            (0..p).map(|_| if rng.gen_bool(0.08) { 255 } else { rng.gen_range(0..4u8) }).collect();
        let mut keys = Vec::new();
        let mut raw = Vec::new();
        for _ in 0..num_keys {
            let pk = rng.gen_range(6..=16);
            let e = Tensor::uniform(&[pk, d], -1.0, 1.0, &mut rng).l2_normalize_rows(1e-12).detach();
            let labels: Vec<u8> =
                (0..pk).map(|_| if rng.gen_bool(0.08) { 255 } else { rng.gen_range(0..4u8) }).collect();
            raw.push((e.to_vec(), labels.clone()));
            keys.push((e, LabelMap::new(1, pk, labels), KeySource::CrossVideo));
        }
        let batch = PairBatch::new(query.clone(), LabelMap::new(1, p, q_labels.clone()), keys, 255, 1.0);
        let got = pixel_contrast_loss(&batch);
        let (expect, n) = oracle::contrast_loss_bruteforce(&query.to_vec(), &q_labels, d, &raw, 255, 1.0);
        if got.contributing != n {
            return vec![Check::bool(
                "contrast/bruteforce",
                false,
                format!("contributing-pixel count mismatch: {} vs {n}", got.contributing),
            )];
        }
        worst = worst.max((got.value.item() - expect).abs());
    }
    let mut checks = vec![Check::from_err(
        &format!("contrast/bruteforce[{instances} instances]"),
        worst,
        1e-10,
    )];

    // Closed forms.
    let query = Tensor::from_vec(&[1, 2], vec![1.0, 0.0]);
    let ql = LabelMap::new(1, 1, vec![0]);
    let sym = pixel_contrast_loss(&PairBatch::new(
        query.clone(),
        ql.clone(),
        vec![(Tensor::from_vec(&[2, 2], vec![0.6, 0.8, 0.6, 0.8]), LabelMap::new(1, 2, vec![0, 1]), KeySource::CrossVideo)],
        255,
        1.0,
    ));
    checks.push(Check::from_err(
        "contrast/closed_form_ln2",
        (sym.value.item() - 2.0f64.ln()).abs(),
        1e-9,
    ));
    let hard = pixel_contrast_loss(&PairBatch::new(
        query,
        ql,
        vec![(Tensor::from_vec(&[2, 2], vec![1.0, 0.0, -1.0, 0.0]), LabelMap::new(1, 2, vec![0, 1]), KeySource::CrossVideo)],
        255,
        1.0,
    ));
    checks.push(Check::from_err(
        "contrast/closed_form_softplus",
        (hard.value.item() - (1.0 + (-2.0f64).exp()).ln()).abs(),
        1e-9,
    ));
    checks
}

/// Temporal reachability: the measured gradient dependency equals the
/// schedule's prediction, full schedules are dense, truncations banded, and
/// even-length clips need exactly N-2 shifts (6 for the 8-frame clip).
pub fn reachability_suite() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut checks = Vec::new();
    for n in 2..=5usize {
        let schedule = time_shift_schedule(n);
        let bc = BlockConfig { window: 2, num_heads: 2, channels: 4, mlp_ratio: 1.0, use_relative_position_bias: true };
        let blocks: Vec<StswinBlock> =
            (0..schedule.len()).map(|_| StswinBlock::new(&bc, &mut rng)).collect();
        let clip: Vec<Tensor> =
            (0..n).map(|_| Tensor::uniform(&[4, 4, 4], -0.5, 0.5, &mut rng)).collect();
        let dep = gradient_dependency(&clip, &schedule, &blocks);
        let dense = dep.iter().all(|row| row.iter().all(|&v| v));
        checks.push(Check::bool(
            &format!("schedule/dense[n={n}]"),
            dense,
            format!("{dep:?}"),
        ));

        // Truncate to the first configuration and compare against the
        // predicted banded pattern.
        let mut truncated = schedule.clone();
        truncated.configs.truncate(1);
        let tblocks = &blocks[..1];
        let tdep = gradient_dependency(&clip, &truncated, tblocks);
        let predicted = truncated.simulate_dependency();
        checks.push(Check::bool(
            &format!("schedule/banded_truncation[n={n}]"),
            tdep == predicted,
            format!("measured {tdep:?} vs predicted {predicted:?}"),
        ));
    }
    for n in [2usize, 4, 8] {
        let shifts = time_shift_schedule(n).shifts();
        checks.push(Check::bool(
            &format!("schedule/shifts[n={n}]"),
            shifts == n - 2,
            format!("{shifts} shifts"),
        ));
    }
    checks
}

/// Metric protocol checks: the hand-counted frame example, Dice >= IoU on
/// random masks, and Wilcoxon p-values against exact enumeration.
pub fn metrics_suite() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut checks = Vec::new();
    let gt = LabelMap::new(2, 2, vec![1, 1, 2, 2]);
    let pred = LabelMap::new(2, 2, vec![1, 2, 2, 2]);
    let s = frame_scores(&pred, &gt, 0, 255);
    checks.push(Check::bool(
        "metrics/hand_counted_2x2",
        (s.miou - 7.0 / 12.0).abs() < 1e-15 && (s.dice - 11.0 / 15.0).abs() < 1e-15,
        format!("miou {} dice {}", s.miou, s.dice),
    ));

    let mut dice_ok = true;
    for _ in 0..1000 {
        let gt: Vec<u8> = (0..20).map(|_| rng.gen_range(0..4)).collect();
        let pr: Vec<u8> = (0..20).map(|_| rng.gen_range(0..4)).collect();
        let s = frame_scores(&LabelMap::new(4, 5, pr), &LabelMap::new(4, 5, gt), 0, 255);
        for (_, iou, dice) in s.per_class {
            if dice < iou - 1e-15 {
                dice_ok = false;
            }
        }
    }
    checks.push(Check::bool("metrics/dice_geq_iou[1000 masks]", dice_ok, String::new()));

    let mut worst: f64 = 0.0;
    for _ in 0..30 {
        let n = rng.gen_range(6..=10);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..n)
            .map(|i| if rng.gen_bool(0.25) { a[i] } else { rng.gen_range(0.0..1.0) })
            .collect();
        let ours = wilcoxon_signed_rank(&a, &b).p_value;
        let exact = oracle::wilcoxon_exact_p(&a, &b);
        worst = worst.max((ours - exact).abs());
    }
    checks.push(Check::from_err("metrics/wilcoxon_vs_enumeration", worst, 1e-6));
    checks
}

/// Core tensor invariants that the rest of the suite leans on.
pub fn tensor_invariant_suite() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut checks = Vec::new();
    let x = Tensor::uniform(&[5, 7, 3], -1.0, 1.0, &mut rng);
    let back = x.roll2d(3, -2).roll2d(-3, 2);
    checks.push(Check::bool(
        "tensor/roll_round_trip",
        max_abs_diff(&back, &x) == 0.0,
        String::new(),
    ));
    let soft = Tensor::uniform(&[9, 6], -5.0, 5.0, &mut rng).softmax_lastdim();
    let d = soft.data();
    let mut worst: f64 = 0.0;
    for r in 0..9 {
        let s: f64 = d[r * 6..(r + 1) * 6].iter().sum();
        worst = worst.max((s - 1.0).abs());
    }
    checks.push(Check::from_err("tensor/softmax_row_sums", worst, 1e-12));

    // Two identical forward+backward runs produce bit-identical gradients.
    let run = || {
        let mut r2 = ChaCha8Rng::seed_from_u64(607);
        let x = Tensor::uniform(&[6, 6, 2], -1.0, 1.0, &mut r2).tracked();
        let k = Tensor::uniform(&[3, 3, 2, 2], -1.0, 1.0, &mut r2).tracked();
        let y = x.conv2d(&k, 1, 1).gelu().sum_all();
        y.backward();
        (x.grad_or_zeros(), k.grad_or_zeros())
    };
    let (a1, b1) = run();
    let (a2, b2) = run();
    let bit_eq = a1.iter().zip(&a2).all(|(p, q)| p.to_bits() == q.to_bits())
        && b1.iter().zip(&b2).all(|(p, q)| p.to_bits() == q.to_bits());
    checks.push(Check::bool("tensor/deterministic_replay", bit_eq, String::new()));
    checks
}

/// The full oracle suite in a deterministic order.
pub fn run_all() -> Vec<Check> {
    let mut checks = Vec::new();
    checks.extend(tensor_invariant_suite());
    checks.extend(grad_check_suite());
    checks.push(shifted_window_suite(20));
    checks.extend(contrast_oracle_suite(56));
    checks.extend(reachability_suite());
    checks.extend(metrics_suite());
    checks
}
