//! Acceptance suite. Runs every criterion at its stated tolerance and
//! prints one PASS/FAIL line each; exits non-zero if any fails.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use promptpainter::augmentation::{fractal_noise, random_view, AugmentConfig, NoiseConfig};
use promptpainter::loss::style_loss_gradient;
use promptpainter::optim::Optimizer;
use promptpainter::pipeline::{evaluate, step, NullClock, StepContext};
use promptpainter::superres::apply_stage;
use promptpainter::*;
use promptpainter_cli::{BenchReport, RunManifest};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_unit(r: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        if let Ok(e) = normalize(&v) {
            return e;
        }
    }
}

fn random_image(h: usize, w: usize, seed: u64) -> ImageBuffer {
    let mut r = rng(seed);
    ImageBuffer::new(h, w, (0..h * w * 3).map(|_| r.random::<f64>()).collect()).unwrap()
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-12)
}

fn central_difference(x: &[f64], i: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
    const H: f64 = 1e-6;
    let (mut plus, mut minus) = (x.to_vec(), x.to_vec());
    plus[i] += H;
    minus[i] -= H;
    (f(&plus) - f(&minus)) / (2.0 * H)
}

fn loss_analytic() -> Outcome {
    let start = Instant::now();
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for dim in [2, 3, 16, 512] {
        let f = random_unit(&mut r, dim);
        // A unit vector orthogonal to f by Gram-Schmidt.
        let g = random_unit(&mut r, dim);
        let d = f.dot(&g);
        let orth: Vec<f64> = g
            .values()
            .iter()
            .zip(f.values())
            .map(|(g, f)| g - d * f)
            .collect();
        let s = normalize(&orth).map_err(|e| e.to_string())?;
        let checks = [
            (chord_term(&f, &f).unwrap(), 0.0),
            (chord_term(&f, &f.negated()).unwrap(), (PI / 2.0).powi(2)),
            (chord_term(&f, &s).unwrap(), (PI / 4.0).powi(2)),
            (
                style_loss(
                    &f,
                    &[WeightedEmbedding {
                        embedding: f.negated(),
                        weight: 1.0,
                    }],
                )
                .unwrap()
                .total,
                PI * PI / 2.0,
            ),
        ];
        for (got, want) in checks {
            worst = worst.max((got - want).abs());
        }
    }
    ensure(worst <= 1e-9, || format!("max abs error {worst:e} > 1e-9"))?;
    within_time(start.elapsed(), 1.0)?;
    Ok(format!("max abs error {worst:.1e}"))
}

fn angle_identity() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2);
    let mut worst = 0.0f64;
    let mut nans = 0;
    for i in 0..1000 {
        let dim = 2 + i % 63;
        let u = random_unit(&mut r, dim);
        let v = random_unit(&mut r, dim);
        let c = chord_term(&u, &v).unwrap();
        if c.is_nan() {
            nans += 1;
            continue;
        }
        let theta = u.dot(&v).clamp(-1.0, 1.0).acos();
        worst = worst.max((c - (theta / 2.0).powi(2)).abs());
        // Exact antipodes sit where the half chord rounds around 1.
        let w = u.negated();
        if chord_term(&u, &w).unwrap().is_nan() {
            nans += 1;
        }
    }
    ensure(nans == 0, || format!("{nans} NaN results"))?;
    ensure(worst <= 1e-9, || format!("max abs error {worst:e} > 1e-9"))?;
    within_time(start.elapsed(), 5.0)?;
    Ok(format!("1000 pairs, max abs error {worst:.1e}, 0 NaN"))
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let enc = ToyEncoder::new();
    let gen = ToyGenerator::new();
    let mut r = rng(3);

    // (a) loss w.r.t. embedding.
    let f = random_unit(&mut r, 16);
    let styles: Vec<WeightedEmbedding> = (0..3)
        .map(|i| WeightedEmbedding {
            embedding: random_unit(&mut r, 16),
            weight: 0.5 + i as f64,
        })
        .collect();
    let analytic = style_loss_gradient(&f, &styles).unwrap();
    let mut err_a = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let numeric = central_difference(f.values(), i, |v| {
            let e = EmbeddingVector::from_unit(v.to_vec(), 1e-3).unwrap();
            style_loss(&e, &styles).unwrap().total
        });
        err_a = err_a.max(relative_error(a, numeric));
    }

    // (b) toy decode w.r.t. latent, over each pixel's bilinear support.
    let t = gen.random_latent(32, 9).unwrap();
    let shape = t.shape();
    let mut err_b = 0.0f64;
    for _ in 0..10 {
        let p = r.random_range(0..32 * 32 * 3);
        let mut onehot = vec![0.0; 32 * 32 * 3];
        onehot[p] = 1.0;
        let analytic = gen.decode_pullback(&t, &onehot).unwrap();
        for j in (0..analytic.len())
            .filter(|&j| analytic[j].abs() > 1e-8)
            .take(4)
        {
            let numeric = central_difference(t.values(), j, |v| {
                gen.decode(&LatentTensor::new(shape, 32, 32, v.to_vec()).unwrap())
                    .unwrap()
                    .pixels()[p]
            });
            err_b = err_b.max(relative_error(analytic[j], numeric));
        }
    }

    // (c) end to end with augmentations frozen by their seeds.
    let styles = vec![
        WeightedEmbedding {
            embedding: embed_text(&enc, "a stormy sea at dusk").unwrap(),
            weight: 1.0,
        },
        WeightedEmbedding {
            embedding: embed_image(&enc, &random_image(32, 32, 4)).unwrap(),
            weight: 2.0,
        },
    ];
    let augment = AugmentConfig {
        n_views: 4,
        ..AugmentConfig::default().with_crop_size(24)
    };
    let noise = NoiseConfig::default();
    let ctx = StepContext {
        encoder: &enc,
        generator: &gen,
        styles: &styles,
        augment: &augment,
        noise: &noise,
    };
    let t = gen.random_latent(32, 21).unwrap();
    let eval = evaluate(&ctx, &t, 1234, 5678, &NullClock).unwrap();
    let mut err_c = 0.0f64;
    for _ in 0..10 {
        let j = r.random_range(0..t.values().len());
        let numeric = central_difference(t.values(), j, |v| {
            let tt = LatentTensor::new(shape, 32, 32, v.to_vec()).unwrap();
            evaluate(&ctx, &tt, 1234, 5678, &NullClock)
                .unwrap()
                .loss
                .total
        });
        err_c = err_c.max(relative_error(eval.gradient[j], numeric));
    }

    let detail = format!("max rel error (a) {err_a:.1e} (b) {err_b:.1e} (c) {err_c:.1e}");
    ensure(err_a < 1e-4 && err_b < 1e-4 && err_c < 1e-3, || {
        detail.clone()
    })?;
    within_time(start.elapsed(), 60.0)?;
    Ok(detail)
}

fn toy_convergence() -> Outcome {
    let start = Instant::now();
    let enc = ToyEncoder::new();
    let gen = ToyGenerator::new();
    let target = gen.decode(&gen.random_latent(32, 1001).unwrap()).unwrap();
    let styles = vec![WeightedEmbedding {
        embedding: embed_image(&enc, &target).unwrap(),
        weight: 1.0,
    }];
    let augment = AugmentConfig::identity(32);
    let noise = NoiseConfig {
        amplitude: 0.0,
        ..Default::default()
    };
    let ctx = StepContext {
        encoder: &enc,
        generator: &gen,
        styles: &styles,
        augment: &augment,
        noise: &noise,
    };
    let mut t = gen.random_latent(32, 7).unwrap();
    let mut opt = Optimizer::new(OptimizerKind::PlainGradientDescent, t.values().len());
    let mut first = None;
    let mut last = 0.0;
    for i in 0..200 {
        let out = step(&ctx, &mut t, &mut opt, 1.0, 0, i, 42, &NullClock, 0.0)
            .map_err(|e| e.to_string())?;
        first.get_or_insert(out.record.total);
        last = out.record.total;
    }
    let first = first.unwrap();
    let ratio = last / first;
    ensure(ratio <= 0.1, || format!("final/initial {ratio:.4} > 0.1"))?;
    within_time(start.elapsed(), 120.0)?;
    Ok(format!("loss {first:.4} -> {last:.2e}, ratio {ratio:.4}"))
}

fn cli(args: &[&str], out: &Path) -> Result<(), String> {
    let res = Command::new(env!("CARGO_BIN_EXE_promptpainter"))
        .args(args)
        .arg("--output-dir")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(res.status.success(), || {
        format!(
            "exit {:?}: {}",
            res.status.code(),
            String::from_utf8_lossy(&res.stderr)
        )
    })
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = [
        "run",
        "--text",
        "lighthouse in fog",
        "--text",
        "woodcut",
        "--levels",
        "32:5:0.05,64:3:0.05",
        "--seed",
        "99",
    ];
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cli(&args, &a)?;
    cli(&args, &b)?;
    let png = |d: &Path| std::fs::read(d.join("output.png")).map_err(|e| e.to_string());
    ensure(png(&a)? == png(&b)?, || "output.png differs".into())?;
    let trace = |d: &Path| -> Result<Vec<(f64, Vec<f64>)>, String> {
        let m = RunManifest::load(&d.join("manifest.json")).map_err(|e| e.to_string())?;
        Ok(m.trace()
            .records
            .into_iter()
            .map(|r| (r.total, r.per_style))
            .collect())
    };
    let (ta, tb) = (trace(&a)?, trace(&b)?);
    ensure(ta == tb, || "loss traces differ".into())?;
    Ok(format!(
        "output.png byte-identical, {} trace records identical",
        ta.len()
    ))
}

fn hierarchy_shape() -> Outcome {
    let enc = ToyEncoder::new();
    let gen = ToyGenerator::new();
    let mut cfg = RunConfig::new(StyleSet::new(vec![StyleParam::text("tide pools")]).unwrap());
    cfg.levels = vec![LevelConfig::new(32, 4, 0.05), LevelConfig::new(64, 3, 0.05)];
    cfg.augment.n_views = 2;
    cfg.seed = 5;
    let out = run_hierarchy(&cfg, &enc, &gen).map_err(|e| e.to_string())?;
    let pre = (out.image.height(), out.image.width());
    ensure(pre == (64, 64), || format!("pre-superres {pre:?}"))?;
    let fin = apply_stage(&cfg.superres, &out.image).map_err(|e| e.to_string())?;
    let fin = (fin.height(), fin.width());
    ensure(fin == (128, 128), || format!("final {fin:?}"))?;
    ensure(out.trace.len() == cfg.total_iterations(), || {
        format!(
            "{} records for {} iterations",
            out.trace.len(),
            cfg.total_iterations()
        )
    })?;
    Ok(format!("64x64 -> 128x128, {} records", out.trace.len()))
}

fn augmentation_suite() -> Outcome {
    let img = random_image(24, 24, 6);
    let view = random_view(&img, &AugmentConfig::identity(24), 11).map_err(|e| e.to_string())?;
    ensure(view == img, || "identity view differs from input".into())?;

    let flip = AugmentConfig {
        flip_probability: 1.0,
        ..AugmentConfig::identity(24)
    };
    let view = random_view(&img, &flip, 3).map_err(|e| e.to_string())?;
    let mirrored = (0..24).all(|y| (0..24).all(|x| view.pixel(y, x) == img.pixel(y, 23 - x)));
    ensure(mirrored, || "flip is not an exact mirror".into())?;

    let src = random_image(48, 40, 7);
    let mut r = rng(8);
    for seed in 0..200u64 {
        let cfg = AugmentConfig {
            n_views: 1,
            resize_range: [r.random_range(0.8..1.0), r.random_range(1.0..1.3)],
            crop_size: Some(32),
            perspective_scale: r.random_range(0.0..0.5),
            flip_probability: 0.5,
            gaussian_sigma: r.random_range(0.0..0.3),
        };
        let v = random_view(&src, &cfg, seed).map_err(|e| e.to_string())?;
        ensure(v.pixels().iter().all(|p| (0.0..=1.0).contains(p)), || {
            format!("view {seed} out of range")
        })?;
    }

    let noise = NoiseConfig::default();
    for seed in 0..100 {
        let a = fractal_noise(32, 32, &noise, seed).map_err(|e| e.to_string())?;
        let b = fractal_noise(32, 32, &noise, seed).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("noise seed {seed} not deterministic"))?;
        ensure(a.values.iter().all(|v| (-1.0..=1.0).contains(v)), || {
            format!("noise seed {seed} out of [-1, 1]")
        })?;
    }
    Ok("identity exact, flip exact, 200 views in [0,1], 100 noise seeds bounded".into())
}

fn bench_transparency() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    cli(
        &[
            "bench",
            "--text",
            "copper etching",
            "--levels",
            "32:10",
            "--seed",
            "4",
        ],
        tmp.path(),
    )?;
    let text = std::fs::read_to_string(tmp.path().join("bench.json")).map_err(|e| e.to_string())?;
    let report: BenchReport = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure(report.iterations == 10, || {
        format!("{} iterations", report.iterations)
    })?;
    let stages = report.stages.as_array();
    ensure(
        stages
            .iter()
            .all(|s| s.mean_ms >= 0.0 && s.median_ms >= 0.0),
        || "negative stage time".into(),
    )?;
    let means: Vec<String> = ["decode", "augment", "embed", "backprop", "update"]
        .iter()
        .zip(&stages)
        .map(|(n, s)| format!("{n} {:.2}", s.mean_ms))
        .collect();
    Ok(format!(
        "mean ms: {}; total {:.0} ms",
        means.join(", "),
        report.total_ms
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("loss analytic suite", loss_analytic),
        ("angle identity property", angle_identity),
        ("gradient checks", gradient_checks),
        ("toy convergence", toy_convergence),
        ("CLI determinism", determinism),
        ("hierarchy shape law", hierarchy_shape),
        ("augmentation suite", augmentation_suite),
        ("bench transparency", bench_transparency),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({secs:.2} s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.2} s): {why}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
