//! Acceptance suite: one pass/fail line per criterion.
//!
//! Run all with `cargo test -p stochlod --test acceptance`; pass criterion
//! numbers after `--` to run a subset.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stochlod::config::{CoefficientClass, ExperimentConfig};
use stochlod::fem::{solve_fem, Source, DEFAULT_TOL, CORNER_OFFSETS};
use stochlod::grid::{CoarseGrid, FineGrid};
use stochlod::lod::{
    assemble_global, compute_local_surrogates, corrector_decay, covering_order, direct_global_matrix, local_surrogate,
    prolong_coarse, solve_correctors, Coefficient, Interpolator,
};
use stochlod::mlp::{load_checkpoint, save_checkpoint, train, MlpModel, PairSet};
use stochlod::pipeline::{
    evaluate, generate_dataset, line_l2, load_dataset, monte_carlo_mean, Discretization, FieldSource, OracleModel,
    Solver,
};
use stochlod::randfield::{contrast, matern_cov, to_lognormal, FieldKind, FieldRealization, GaussianSampler, HierarchicalParams, MaternParams};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn lognormal_on(fine: FineGrid, sigma2: f64, kappa: f64, seed: u64) -> Coefficient {
    let p = MaternParams::new(sigma2, 1.0, kappa).unwrap();
    let z = GaussianSampler::new(p, fine).unwrap().sample(seed, 0).unwrap();
    Coefficient::from_field(&to_lognormal(&z).unwrap(), fine).unwrap()
}

/// Empirical covariance of 10^4 samples at five midpoint pairs.
fn covariance_fidelity() -> Outcome {
    let p = MaternParams::new(1.0, 1.0, 2f64.powi(-5)).unwrap();
    let grid = FineGrid::new(CoarseGrid::with_cells(4).unwrap(), 16).unwrap();
    let h = grid.mesh_size();
    let sampler = GaussianSampler::new(p, grid).unwrap();
    // (first cell, offset in cells)
    let pairs = [([10, 10], [1, 0]), ([30, 20], [2, 0]), ([5, 40], [0, 3]), ([50, 50], [2, 2]), ([20, 33], [5, 1])];
    let n = 10_000;
    let mut prods = vec![Vec::with_capacity(n); pairs.len()];
    for k in 0..(n / 2) as u64 {
        let (a, b) = sampler.sample_pair(17, k).unwrap();
        for z in [a, b] {
            let v = z.values();
            for (q, ([x, y], [dx, dy])) in pairs.iter().enumerate() {
                prods[q].push(v[grid.cell_index(*x, *y)] * v[grid.cell_index(x + dx, y + dy)]);
            }
        }
    }
    let mut worst: f64 = 0.0;
    for (q, (_, [dx, dy])) in pairs.iter().enumerate() {
        let r = h * ((dx * dx + dy * dy) as f64).sqrt();
        let mean = prods[q].iter().sum::<f64>() / n as f64;
        let var = prods[q].iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        worst = worst.max((mean - matern_cov(&p, r).unwrap()).abs() / se);
    }
    check(worst <= 4.0, format!("max deviation {worst:.2} standard errors over 5 pairs"))
}

/// `L2` error of the unit-square Poisson solution against the double sine series.
fn fem_convergence() -> Outcome {
    let terms = 256;
    let freqs: Vec<f64> = (0..terms).map(|k| (2 * k + 1) as f64).collect();
    let pi = std::f64::consts::PI;
    let c = DMatrix::from_fn(terms, terms, |i, j| {
        let (m, n) = (freqs[i], freqs[j]);
        16.0 / (pi.powi(4) * m * n * (m * m + n * n))
    });
    let g = [0.5 - 0.5 * (0.6f64).sqrt(), 0.5, 0.5 + 0.5 * (0.6f64).sqrt()];
    let w = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
    let mut errors = Vec::new();
    for k in [5, 6, 7] {
        let cells = 1usize << k;
        let grid = FineGrid::new(CoarseGrid::with_cells(2).unwrap(), cells / 2).unwrap();
        let h = grid.mesh_size();
        let a = FieldRealization::new(grid, vec![1.0; grid.num_cells()], FieldKind::Lognormal).unwrap();
        let u = solve_fem(grid, &a, &Source::Constant(1.0), DEFAULT_TOL).unwrap();
        let pts: Vec<f64> = (0..cells).flat_map(|i| g.map(|t| (i as f64 + t) * h)).collect();
        let s = DMatrix::from_fn(terms, pts.len(), |i, j| (freqs[i] * pi * pts[j]).sin());
        let exact = s.transpose() * &c * &s;
        let mut e2 = 0.0;
        for (ix, &x) in pts.iter().enumerate() {
            for (iy, &y) in pts.iter().enumerate() {
                let d = u.eval(x, y) - exact[(ix, iy)];
                e2 += w[ix % 3] * w[iy % 3] * h * h * d * d;
            }
        }
        errors.push(e2.sqrt());
    }
    let ratios = [errors[0] / errors[1], errors[1] / errors[2]];
    check(
        ratios.iter().all(|r| (3.5..=4.5).contains(r)),
        format!("errors {errors:?}, ratios {ratios:?}"),
    )
}

/// `a((id - Q) v_H, w) = 0` for `w` in the kernel of `I_H`, full patches.
fn orthogonality() -> Outcome {
    let c = CoarseGrid::with_cells(4).unwrap();
    let f = FineGrid::new(c, 8).unwrap();
    let it = Interpolator::new(c, f).unwrap();
    let coef = lognormal_on(f, 1.0, 2f64.powi(-4), 3);
    let k = coef.stiffness();
    let ell = 3;
    let correctors: Vec<_> = (0..c.num_elements())
        .map(|t| solve_correctors(&c.patch(t, ell).unwrap(), &it, &coef).unwrap())
        .collect();
    let energy = |v: &[f64]| k.matvec(v).iter().zip(v).map(|(a, b)| a * b).sum::<f64>().sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let vh: Vec<f64> = (0..c.num_interior_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut q = vec![0.0; f.num_nodes()];
        for (t, corr) in correctors.iter().enumerate() {
            let [tx, ty] = c.element_coords(t);
            for (j, [ox, oy]) in CORNER_OFFSETS.iter().enumerate() {
                if let Some(z) = c.interior_node((tx + ox) as isize, (ty + oy) as isize) {
                    for (a, b) in q.iter_mut().zip(corr.to_global(j)) {
                        *a += vh[z] * b;
                    }
                }
            }
        }
        let trial: Vec<f64> = prolong_coarse(&c, &f, &vh).iter().zip(&q).map(|(a, b)| a - b).collect();
        let trial = f.restrict_interior(&trial);
        let v: Vec<f64> = (0..f.num_interior_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ih = it.apply(&f.expand_interior(&v));
        let pv = f.restrict_interior(&prolong_coarse(&c, &f, &ih));
        let w: Vec<f64> = v.iter().zip(&pv).map(|(a, b)| a - b).collect();
        let kernel_residual = it.apply(&f.expand_interior(&w)).iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(kernel_residual < 1e-12, "test function not in the kernel");
        let lhs: f64 = k.matvec(&trial).iter().zip(&w).map(|(a, b)| a * b).sum();
        worst = worst.max(lhs.abs() / (energy(&trial) * energy(&w)));
    }
    check(worst <= 1e-9, format!("max relative residual {worst:.2e} over 50 test functions"))
}

fn assembly_oracle() -> Outcome {
    let c = CoarseGrid::with_cells(8).unwrap();
    let f = FineGrid::new(c, 4).unwrap();
    let it = Interpolator::new(c, f).unwrap();
    let coef = lognormal_on(f, 1.0, 2f64.powi(-4), 5);
    let ell = 2;
    let s = assemble_global(&c, &compute_local_surrogates(&it, &coef, ell).unwrap())
        .unwrap()
        .to_dense();
    let d = direct_global_matrix(&it, &coef, ell).unwrap();
    let diff = (s - &d).amax();
    check(
        diff <= 1e-12 * d.amax(),
        format!("max entry difference {diff:.2e} (largest entry {:.2e})", d.amax()),
    )
}

fn corrector_decay_tables() -> Outcome {
    let c = CoarseGrid::with_cells(8).unwrap();
    let f = FineGrid::new(c, 8).unwrap();
    let it = Interpolator::new(c, f).unwrap();
    let t = c.element_index([3, 3]);
    let mut detail = Vec::new();
    let mut ok = true;
    for (name, coef) in [
        ("a=1", Coefficient::constant(f, 1.0).unwrap()),
        ("sigma2=1", lognormal_on(f, 1.0, 2f64.powi(-4), 7)),
    ] {
        let rows = corrector_decay(&it, &coef, t).unwrap();
        let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
        let nonzero: Vec<f64> = errs.iter().copied().filter(|e| *e > 0.0).collect();
        let monotone = errs.windows(2).all(|w| w[1] < w[0]);
        let ratio = nonzero.last().unwrap() / nonzero[0];
        ok &= monotone && ratio <= 0.1 && rows.len() == covering_order(&c, t);
        detail.push(format!("{name}: {errs:?} last/first {ratio:.2e}"));
    }
    check(ok, detail.join("; "))
}

fn scaling_equivariance() -> Outcome {
    let c = CoarseGrid::with_cells(8).unwrap();
    let f = FineGrid::new(c, 4).unwrap();
    let it = Interpolator::new(c, f).unwrap();
    let coef = lognormal_on(f, 1.0, 2f64.powi(-4), 9);
    let twice = coef.scaled(2.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let t = rng.random_range(0..c.num_elements());
        let ell = rng.random_range(1..=3);
        let p = c.patch(t, ell).unwrap();
        let s1 = local_surrogate(&solve_correctors(&p, &it, &coef).unwrap(), &coef).unwrap();
        let s2 = local_surrogate(&solve_correctors(&p, &it, &twice).unwrap(), &twice).unwrap();
        let scale = s1.vec().iter().fold(0.0f64, |m, v| m.max(2.0 * v.abs()));
        let diff = s1.vec().iter().zip(s2.vec()).fold(0.0f64, |m, (a, b)| m.max((b - 2.0 * a).abs()));
        worst = worst.max(diff / scale);
    }
    check(worst <= 1e-13, format!("max relative deviation {worst:.2e} over 10 patches"))
}

fn gradient_check() -> Outcome {
    let mut m = MlpModel::he_uniform(&[8, 8, 8, 4], 21).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for l in m.layers_mut() {
        l.b.iter_mut().for_each(|v| *v = rng.random_range(-0.5..0.5));
    }
    let x = ndarray::Array2::from_shape_fn((6, 8), |_| rng.random_range(-1.0..1.0));
    let y = ndarray::Array2::from_shape_fn((6, 4), |_| rng.random_range(-1.0..1.0));
    let batch = PairSet::new(x, y).unwrap();
    let batch = batch.as_batch();
    let (_, g) = m.gradients(batch).unwrap();
    let step = 1e-6;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for l in 0..m.layers().len() {
        let (out, inp) = m.layers()[l].dims();
        for i in 0..out {
            for j in 0..=inp {
                let analytic = if j < inp { g.layers[l].w[[i, j]] } else { g.layers[l].b[i] };
                let at = |m: &mut MlpModel, d: f64| {
                    let layer = &mut m.layers_mut()[l];
                    let p = if j < inp { &mut layer.w[[i, j]] } else { &mut layer.b[i] };
                    *p += d;
                };
                at(&mut m, step);
                let up = m.loss(batch).unwrap();
                at(&mut m, -2.0 * step);
                let down = m.loss(batch).unwrap();
                at(&mut m, step);
                let fd = (up - down) / (2.0 * step);
                worst = worst.max((fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-8));
                count += 1;
            }
        }
    }
    check(worst <= 1e-5, format!("max relative error {worst:.2e} over {count} parameters"))
}

fn desk_config() -> ExperimentConfig {
    ExperimentConfig::desk()
}

fn perfect_model() -> Outcome {
    let cfg = desk_config();
    let disc = Discretization::from_config(&cfg).unwrap();
    let source = FieldSource::from_class(&cfg.coefficient, disc.field).unwrap();
    let seed = 31;
    let (_, z) = source.sample(seed, 0).unwrap();
    let oracle = OracleModel::new(&disc.local_surrogates(&to_lognormal(&z).unwrap()).unwrap()).unwrap();
    let report = evaluate(&oracle, &disc, &source, 1.0, seed, 1, false).unwrap();
    let r = &report.rows[0];
    check(
        r.l2_error == 0.0 && r.spectral_error == 0.0 && report.cross_sections[0].pglod == report.cross_sections[0].nnlod,
        format!("L2 difference {:e}, spectral difference {:e}", r.l2_error, r.spectral_error),
    )
}

fn desk_learning() -> Outcome {
    let cfg = desk_config();
    let dir = tempfile::tempdir().unwrap();
    {
        let t0 = Instant::now();
        let manifest = generate_dataset(&cfg, dir.path()).unwrap();
        let data = load_dataset(dir.path()).unwrap();
        let gen_time = t0.elapsed().as_secs_f64();
        let widths = cfg.widths();
        let mut model = MlpModel::he_uniform(&widths, 41).unwrap();
        let trace = train(&mut model, &data.train, &data.val, &cfg.training).unwrap();
        // the trained network survives a checkpoint round trip
        let ck = dir.path().join("m.ckpt");
        save_checkpoint(&ck, &model, None, serde_json::Value::Null).unwrap();
        assert_eq!(load_checkpoint(&ck).unwrap().model, model);
        let drop = trace.initial_train / trace.final_train();
        let gap = trace.final_val() / trace.final_train();
        check(
            manifest.total_split() == (32, 4, 4) && widths[0] == 400 && drop >= 10.0 && gap <= 10.0,
            format!(
                "split {:?}, widths {widths:?}, train loss {:.3e} -> {:.3e} ({drop:.1}x), val {:.3e} ({gap:.2}x train), dataset {gen_time:.0}s",
                manifest.total_split(),
                trace.initial_train,
                trace.final_train(),
                trace.final_val()
            ),
        )
    }
}

fn contrast_ordering() -> Outcome {
    let grid = FineGrid::from_sizes(2f64.powi(-4), 2f64.powi(-7)).unwrap();
    let mut medians = Vec::new();
    for sigma2 in [0.5, 1.0, 2.0] {
        let s = GaussianSampler::new(MaternParams::new(sigma2, 1.0, 2f64.powi(-6)).unwrap(), grid).unwrap();
        let mut c: Vec<f64> = (0..100)
            .map(|i| contrast(&to_lognormal(&s.sample(51, i).unwrap()).unwrap()).unwrap())
            .collect();
        c.sort_by(|a, b| a.total_cmp(b));
        medians.push(0.5 * (c[49] + c[50]));
    }
    check(
        medians[0] < medians[1] && medians[1] < medians[2] && (1e2..=1e5).contains(&medians[0]),
        format!("median contrasts {medians:?}"),
    )
}

fn hierarchical_sampler() -> Outcome {
    let (lo, hi) = (2f64.powi(-6), 2f64.powi(-3));
    let hp = HierarchicalParams::new(1.0, 1.0, lo, hi).unwrap();
    let n = 10_000;
    let mut k: Vec<f64> = (0..n).map(|i| hp.draw_kappa(61, i as u64)).collect();
    let inside = k.iter().all(|v| (lo..=hi).contains(v));
    k.sort_by(|a, b| a.total_cmp(b));
    let d = k
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let u = (v - lo) / (hi - lo);
            ((i + 1) as f64 / n as f64 - u).max(u - i as f64 / n as f64)
        })
        .fold(0.0f64, f64::max);
    let critical = 1.628 / (n as f64).sqrt();
    check(inside && d <= critical, format!("all in range: {inside}, KS D = {d:.4} (critical {critical:.4})"))
}

fn monte_carlo_consistency() -> Outcome {
    let cfg = ExperimentConfig {
        coefficient: CoefficientClass::hierarchical_default(0.5),
        ..desk_config()
    };
    let disc = Discretization::from_config(&cfg).unwrap();
    let source = FieldSource::from_class(&cfg.coefficient, disc.field).unwrap();
    let mc = monte_carlo_mean(&disc, &source, 1.0, &[Solver::Fem, Solver::Pglod], None, 100, 71).unwrap();
    let cs = &mc.cross_sections[0];
    let fem = cs.fem.as_ref().unwrap();
    let pg = cs.pglod.as_ref().unwrap();
    let diff: Vec<f64> = fem.iter().zip(pg).map(|(a, b)| a - b).collect();
    let rel = line_l2(&cs.coordinate, &diff) / line_l2(&cs.coordinate, fem);
    check(rel <= 0.05, format!("relative L2 deviation along x1 = 0.5: {rel:.3e}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("covariance fidelity", covariance_fidelity),
        ("FEM convergence", fem_convergence),
        ("LOD orthogonality", orthogonality),
        ("assembly oracle", assembly_oracle),
        ("corrector decay", corrector_decay_tables),
        ("coefficient scaling", scaling_equivariance),
        ("gradient check", gradient_check),
        ("perfect-model equivalence", perfect_model),
        ("desk-scale learning", desk_learning),
        ("contrast ordering", contrast_ordering),
        ("hierarchical sampler", hierarchical_sampler),
        ("Monte Carlo consistency", monte_carlo_consistency),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {id:>2} PASS  {name} [{secs:.1}s]: {d}"),
            Err(d) => {
                failed += 1;
                println!("criterion {id:>2} FAIL  {name} [{secs:.1}s]: {d}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
