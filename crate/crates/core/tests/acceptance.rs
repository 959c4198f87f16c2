//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use hdrstitch::detail::{self, DetailSystem, GuidanceField, SolverConfig};
use hdrstitch::layout::Region;
use hdrstitch::mef;
use hdrstitch::metrics::psnr;
use hdrstitch::scene::{
    simulate_misalignment, synthesize_exposure_pair, synthesize_test_scene,
    synthesize_test_scene_with, SceneParams,
};
use hdrstitch::wha::{self, Histogram256, Imf, BINS};
use hdrstitch::{stitch, FloatImage, LdrImage, PanoLayout, StitchConfig, View};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// Rank matching on the expanded samples: the r-th smallest source sample is
/// paired with the r-th smallest target sample.
fn rank_match(hi: &[u64; BINS], hj: &[u64; BINS]) -> Vec<Vec<u64>> {
    let expand = |h: &[u64; BINS]| -> Vec<usize> {
        h.iter()
            .enumerate()
            .flat_map(|(b, &n)| std::iter::repeat_n(b, n as usize))
            .collect()
    };
    let (si, sj) = (expand(hi), expand(hj));
    let mut joint = vec![vec![0u64; BINS]; BINS];
    for (&z, &k) in si.iter().zip(&sj) {
        joint[z][k] += 1;
    }
    joint
}

fn prefix(h: &[u64; BINS]) -> Vec<u64> {
    h.iter()
        .scan(0, |acc, &v| {
            *acc += v;
            Some(*acc)
        })
        .collect()
}

/// Smallest `k` with `C_j(k) >= C_i(z)`, found by scanning every `k`.
fn psi_scan(ci: &[u64], cj: &[u64], z: isize) -> usize {
    if z < 0 {
        return 0;
    }
    (0..BINS)
        .find(|&k| cj[k] >= ci[z as usize])
        .unwrap_or(BINS - 1)
}

fn random_pair(rng: &mut ChaCha8Rng) -> ([u64; BINS], [u64; BINS]) {
    let total = rng.gen_range(1..=3000u64);
    let draw = |rng: &mut ChaCha8Rng| {
        let mut h = [0u64; BINS];
        // A few occupied bins, sometimes clustered, sometimes spread out.
        let support = rng.gen_range(1..=BINS);
        let lo = rng.gen_range(0..=BINS - support);
        for _ in 0..total {
            h[lo + rng.gen_range(0..support)] += 1;
        }
        h
    };
    (draw(rng), draw(rng))
}

fn wha_random() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let pairs = 1000;
    let mut worst: f64 = 0.0;
    for n in 0..pairs {
        let (hi, hj) = random_pair(&mut rng);
        let (h_i, h_j) = (Histogram256::from_counts(hi), Histogram256::from_counts(hj));
        let (ci, cj) = (h_i.cumulative(), h_j.cumulative());
        let table = wha::psi_table(&ci, &cj).map_err(|e| e.to_string())?;
        let joint = rank_match(&hi, &hj);
        let (pi, pj) = (prefix(&hi), prefix(&hj));
        let imf = wha::build_imf(&h_i, &h_j).map_err(|e| e.to_string())?;
        let mut prev: Option<f64> = None;
        for z in 0..BINS {
            let (lo, up) = (
                psi_scan(&pi, &pj, z as isize - 1),
                psi_scan(&pi, &pj, z as isize),
            );
            ensure(table[z] == up, || {
                format!("pair {n}: psi({z}) = {} vs scan {up}", table[z])
            })?;
            let mut mass = 0;
            for k in lo..=up {
                let m = wha::subbin_mass(&ci, &cj, &table, z, k).map_err(|e| e.to_string())?;
                ensure(m == joint[z][k], || {
                    format!("pair {n}: H({k},{z}) = {m} vs {}", joint[z][k])
                })?;
                mass += m;
            }
            ensure(mass == hi[z], || {
                format!("pair {n}: bin {z} mass {mass} vs {}", hi[z])
            })?;
            if hi[z] == 0 {
                continue;
            }
            let lambda = imf.lambda[z];
            let expect = joint[z]
                .iter()
                .enumerate()
                .map(|(k, &c)| (k as u64 * c) as f64)
                .sum::<f64>()
                / hi[z] as f64;
            worst = worst.max((lambda - expect).abs());
            ensure((lambda - expect).abs() < 1e-9, || {
                format!("pair {n}: lambda({z}) {lambda} vs {expect}")
            })?;
            ensure(lo as f64 <= lambda && lambda <= up as f64, || {
                format!("pair {n}: lambda({z}) out of range")
            })?;
            if let Some(p) = prev {
                ensure(lambda >= p, || format!("pair {n}: lambda decreases at {z}"))?;
            }
            prev = Some(lambda);
        }
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(5), || format!("took {took:.2?}"))?;
    Ok(format!(
        "{pairs} pairs, max |delta| {worst:.1e}, {took:.2?}"
    ))
}

fn wha_hand_case() -> Outcome {
    let imf = wha::build_imf(
        &Histogram256::from_slice(&[2, 2]),
        &Histogram256::from_slice(&[1, 3]),
    )
    .map_err(|e| e.to_string())?;
    let (l0, l1) = (imf.lambda[0], imf.lambda[1]);
    ensure(l0 == 0.5 && l1 == 1.0, || {
        format!("lambda(0) = {l0}, lambda(1) = {l1}")
    })?;
    Ok(format!("lambda(0) = {l0}, lambda(1) = {l1}"))
}

fn imf_synthetic() -> Outcome {
    let start = Instant::now();
    let (mut aligned, mut shifted) = (0.0, 0.0);
    let n = 50;
    for seed in 0..n {
        // Log radiance around 4 stops below clipping, so both the dark and
        // the saturated end of the response are populated.
        let (z1, z2) = synthesize_exposure_pair(1000 + seed, 640, 480, 2.0, -4.0, 3.0)
            .map_err(|e| e.to_string())?;
        let score = |src: &LdrImage, tgt: &LdrImage| -> Result<f64, String> {
            let imf = Imf::estimate(src, tgt).map_err(|e| e.to_string())?;
            let mapped = wha::apply_imf(&imf, &z1)
                .map_err(|e| e.to_string())?
                .quantize();
            psnr(&mapped, &z2).map_err(|e| e.to_string())
        };
        aligned += score(&z1, &z2)?;
        let (a, b) = simulate_misalignment(&z1, &z2).map_err(|e| e.to_string())?;
        shifted += score(&a, &b)?;
    }
    let (aligned, shifted) = (aligned / n as f64, shifted / n as f64);
    let took = start.elapsed();
    let detail = format!("mean {aligned:.2} dB aligned, {shifted:.2} dB misaligned, {took:.2?}");
    ensure(aligned >= 35.0, || detail.clone())?;
    ensure(aligned - shifted <= 3.0, || detail.clone())?;
    ensure(took < Duration::from_secs(30), || detail.clone())?;
    Ok(detail)
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> FloatImage {
    FloatImage::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.0..255.0))
}

fn pyramid_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let (w, h) = (rng.gen_range(8..120), rng.gen_range(8..90));
        let img = random_image(&mut rng, w, h);
        let depth = mef::max_depth(w, h);
        let pyr = mef::laplacian_pyramid(&img, depth).map_err(|e| e.to_string())?;
        let back = mef::collapse(&pyr).map_err(|e| e.to_string())?;
        let d = back.max_abs_diff(&img);
        worst = worst.max(d);
        ensure(d <= 1e-6, || format!("image {i} ({w}x{h}): {d:.2e}"))?;
    }
    Ok(format!("20 images, max abs {worst:.1e}"))
}

fn mef_idempotence() -> Outcome {
    let layout = PanoLayout::new(160, 120, 40, 40).map_err(|e| e.to_string())?;
    let scene = synthesize_test_scene(7, &layout);
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let inputs = [
        scene.ground_truth[1].to_float(),
        random_image(&mut rng, 97, 61),
    ];
    let mut worst: f64 = 0.0;
    for img in &inputs {
        let depth = mef::default_depth(img.width(), img.height());
        let out = mef::fuse_images(&[img, img, img], depth).map_err(|e| e.to_string())?;
        worst = worst.max(out.image.max_abs_diff(img));
    }
    ensure(worst <= 1.0, || format!("identity error {worst:.3}"))?;

    let maps: Vec<FloatImage> = scene
        .ground_truth
        .iter()
        .map(|g| mef::quality_weight(&g.to_float()))
        .collect();
    let norm = mef::normalize_weights(&maps);
    let n = norm[0].data().len();
    let sum_err = (0..n)
        .map(|i| (norm.iter().map(|m| m.data()[i]).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(sum_err <= 1e-9, || {
        format!("weight sum off by {sum_err:.1e}")
    })?;
    Ok(format!(
        "identity error {worst:.3}, weight sum error {sum_err:.1e}"
    ))
}

/// `I + lambda (Gx' Wx Gx + Gy' Wy Gy)` and its right-hand side, built
/// from explicit difference matrices.
fn dense_system(
    w: usize,
    h: usize,
    vx: &[f64],
    vy: &[f64],
    cfg: &SolverConfig,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = w * h;
    let mut gx = DMatrix::zeros(n, n);
    let mut gy = DMatrix::zeros(n, n);
    let weight = |v: f64| 1.0 / (v.abs().powf(0.75) + 2.0);
    let mut wx = DVector::zeros(n);
    let mut wy = DVector::zeros(n);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                gx[(i, i)] = -1.0;
                gx[(i, i + 1)] = 1.0;
                wx[i] = weight(vx[i]);
            }
            if y + 1 < h {
                gy[(i, i)] = -1.0;
                gy[(i, i + w)] = 1.0;
                wy[i] = weight(vy[i]);
            }
        }
    }
    let (dx, dy) = (DMatrix::from_diagonal(&wx), DMatrix::from_diagonal(&wy));
    let a = DMatrix::identity(n, n)
        + (gx.transpose() * &dx * &gx + gy.transpose() * &dy * &gy) * cfg.lambda;
    let b = (gx.transpose() * &dx * DVector::from_column_slice(vx)
        + gy.transpose() * &dy * DVector::from_column_slice(vy))
        * (cfg.lambda * cfg.alpha);
    (a, b)
}

fn detail_solver() -> Outcome {
    let cfg = SolverConfig::default();
    ensure(cfg.lambda == 0.125 && cfg.alpha == 1.125, || {
        format!("defaults lambda {} alpha {}", cfg.lambda, cfg.alpha)
    })?;

    let zero =
        detail::solve_detail(&GuidanceField::zeros(9, 7, 3), &cfg).map_err(|e| e.to_string())?;
    ensure(zero.zd.data().iter().all(|&v| v == 0.0), || {
        "V = 0 gave a non-zero layer".into()
    })?;

    // Two pixels in a row: z = c (-1, 1) with c = l a W v / (1 + 2 l W).
    let v = 1.0;
    let sys = DetailSystem::new(2, 1, &[v, 0.0], &[0.0, 0.0], cfg.lambda, cfg.alpha);
    let (z, _, _) = sys.solve(1e-14, 100).map_err(|e| e.to_string())?;
    let wv = 1.0 / (v.powf(0.75) + 2.0);
    let c = cfg.lambda * cfg.alpha * wv * v / (1.0 + 2.0 * cfg.lambda * wv);
    let closed = (z[0] + c).abs().max((z[1] - c).abs());
    ensure(closed <= 1e-9, || format!("1x2 error {closed:.1e}"))?;
    ensure((z[1] - 0.043_269_230_769).abs() < 1e-9, || {
        format!("1x2 solution {z:?}")
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut worst: f64 = 0.0;
    let mut worst_res: f64 = 0.0;
    for _ in 0..5 {
        let vx: Vec<f64> = (0..64).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let vy: Vec<f64> = (0..64).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let (a, b) = dense_system(8, 8, &vx, &vy, &cfg);
        let dense = a.lu().solve(&b).ok_or("dense system is singular")?;
        let sys = DetailSystem::new(8, 8, &vx, &vy, cfg.lambda, cfg.alpha);
        let (z, _, res) = sys
            .solve(cfg.cg_tolerance, cfg.cg_max_iters)
            .map_err(|e| e.to_string())?;
        let diff = z
            .iter()
            .zip(dense.iter())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        worst = worst.max(diff);
        let true_res = sys.relative_residual(&z);
        worst_res = worst_res.max(true_res).max(res);
    }
    ensure(worst <= 1e-4, || format!("CG vs dense {worst:.1e}"))?;
    ensure(worst_res <= 1e-6, || format!("residual {worst_res:.1e}"))?;
    Ok(format!(
        "1x2 error {closed:.1e}, CG vs dense {worst:.1e}, residual {worst_res:.1e}, lambda {} alpha {}",
        cfg.lambda, cfg.alpha
    ))
}

/// Jumps between each region's first column and its left neighbour: the
/// largest single-pixel jump and the largest per-channel mean absolute jump
/// down the column.
fn seam_jump(img: &LdrImage, layout: &PanoLayout) -> (u8, f64) {
    let starts = [Region::Xi12, Region::Chi2, Region::Xi23, Region::Chi3]
        .map(|r| layout.region_range(r).start);
    let (mut pixel, mut column) = (0, 0.0f64);
    for &x in &starts {
        for c in 0..3 {
            let mut sum = 0.0;
            for y in 0..img.height() {
                let d = img.sample(x, y, c).abs_diff(img.sample(x - 1, y, c));
                pixel = pixel.max(d);
                sum += f64::from(d);
            }
            column = column.max(sum / img.height() as f64);
        }
    }
    (pixel, column)
}

fn end_to_end() -> Outcome {
    let layout = PanoLayout::new(640, 480, 200, 200).map_err(|e| e.to_string())?;
    let mut min_psnr = f64::INFINITY;
    let (mut pixel_jump, mut column_jump) = (0, 0.0f64);
    let mut slowest = Duration::ZERO;
    for seed in 0..10 {
        let scene = synthesize_test_scene(seed, &layout);
        let start = Instant::now();
        let r = stitch(&scene.viewset, &StitchConfig::default())
            .map_err(|e| format!("scene {seed}: {e}"))?;
        slowest = slowest.max(start.elapsed());
        for l in View::ALL {
            let p = psnr(
                &r.panos[l.index()].image.quantize(),
                &scene.ground_truth[l.index()],
            )
            .map_err(|e| e.to_string())?;
            min_psnr = min_psnr.min(p);
        }
        let (p, c) = seam_jump(&r.final_image, &layout);
        pixel_jump = pixel_jump.max(p);
        column_jump = column_jump.max(c);
    }
    // Radiance constant along x: any jump at a boundary comes from the
    // stitching itself rather than from the scene.
    let flat_x = SceneParams {
        bump_sigma_x: (1e9, 1e9),
        ..SceneParams::default()
    };
    let mut smooth_jump = 0;
    for seed in 0..10 {
        let scene = synthesize_test_scene_with(seed, &layout, &flat_x);
        let start = Instant::now();
        let r = stitch(&scene.viewset, &StitchConfig::default())
            .map_err(|e| format!("smooth scene {seed}: {e}"))?;
        slowest = slowest.max(start.elapsed());
        smooth_jump = smooth_jump.max(seam_jump(&r.final_image, &layout).0);
    }
    let detail = format!(
        "min pano PSNR {min_psnr:.2} dB, boundary jump on x-smooth scenes {smooth_jump}, \
         column-mean boundary jump {column_jump:.3} (single pixel {pixel_jump}), slowest {slowest:.2?}"
    );
    ensure(min_psnr >= 30.0, || detail.clone())?;
    ensure(smooth_jump <= 2, || detail.clone())?;
    ensure(column_jump <= 2.0, || detail.clone())?;
    ensure(slowest < Duration::from_secs(15), || detail.clone())?;
    Ok(detail)
}

fn determinism() -> Outcome {
    let layout = PanoLayout::new(160, 120, 50, 40).map_err(|e| e.to_string())?;
    let scene = synthesize_test_scene(42, &layout);
    let a = stitch(&scene.viewset, &StitchConfig::default()).map_err(|e| e.to_string())?;
    let b = stitch(&scene.viewset, &StitchConfig::default()).map_err(|e| e.to_string())?;
    ensure(a.final_image == b.final_image, || {
        "final images differ".into()
    })?;
    ensure(a.enhanced.image == b.enhanced.image, || {
        "enhanced panoramas differ".into()
    })?;
    ensure(a.imfs == b.imfs, || "IMFs differ".into())?;
    ensure(a.detail.zd == b.detail.zd, || "detail layers differ".into())?;
    Ok("two runs bit-identical".into())
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("wha_random_oracle", wha_random),
        ("wha_hand_case", wha_hand_case),
        ("imf_synthetic_pairs", imf_synthetic),
        ("pyramid_identity", pyramid_identity),
        ("mef_idempotence", mef_idempotence),
        ("detail_solver", detail_solver),
        ("end_to_end_stitch", end_to_end),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
