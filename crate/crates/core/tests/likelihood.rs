use gridmrf_core::data::GridField;
use gridmrf_core::lattice::GridMask;
use gridmrf_core::likelihood::{
    loglik_approx, loglik_exact, loglik_indblocks, loglik_nugget_fullq, loglik_nugget_lean, tile_blocks, Method,
    Problem,
};
use gridmrf_core::oracle::dense_loglik;
use gridmrf_core::precision::Scheme;
use gridmrf_core::spectral::{Model, ModelParams, Shape, Stencil};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn field(mask: &GridMask, seed: u64) -> GridField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let y: Vec<f64> = (0..mask.n_obs()).map(|_| rng.random_range(-2.0..2.0)).collect();
    GridField::from_observations(mask, &y).unwrap()
}

fn mask_missing(n1: usize, n2: usize, missing: &[(usize, usize)]) -> GridMask {
    let mut obs = vec![true; n1 * n2];
    for &(r, c) in missing {
        obs[r * n2 + c] = false;
    }
    GridMask::new(n1, n2, obs).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn single_observation_closed_form() {
    let p = ModelParams::latent(1.0, 1.0, 0).unwrap();
    let data = GridField::new(1, 1, vec![0.0]).unwrap();
    let ll = loglik_exact(&p, &data, 3).unwrap();
    let k0 = Problem::new(&data).unwrap().table(&p.model()).unwrap().k0();
    assert!((ll.loglik + 0.5 * (2.0 * std::f64::consts::PI * k0).ln()).abs() < 1e-13);
}

#[test]
fn no_nugget_matches_dense_reference() {
    let cases = [
        (mask_missing(4, 4, &[]), 0.2, 0),
        (mask_missing(6, 6, &[(0, 3), (2, 2), (3, 4), (5, 0), (4, 1)]), 0.1, 1),
        (mask_missing(7, 5, &[(3, 2), (1, 1)]), 0.5, 0),
    ];
    for (k, (mask, kappa, nu)) in cases.iter().enumerate() {
        let data = field(mask, k as u64);
        let p = ModelParams::new(1.3, *kappa, *nu, 0.0, 0.2).unwrap();
        let a = loglik_exact(&p, &data, 3).unwrap();
        let b = dense_loglik(&p, &data, 64).unwrap();
        assert!(rel(a.loglik, b.loglik) < 1e-8, "case {k}: {} vs {}", a.loglik, b.loglik);
        assert!(rel(a.logdet, b.logdet) < 1e-8 || (a.logdet - b.logdet).abs() < 1e-8);
        assert!(rel(a.quadform, b.quadform) < 1e-8);
    }
}

#[test]
fn nugget_paths_match_reference_and_each_other() {
    let ring: Vec<(usize, usize)> = (1..5).flat_map(|i| [(1, i), (4, i), (i, 1), (i, 4)]).collect();
    let cases = [
        (mask_missing(4, 4, &[]), 0.2, 0, 0.01),
        (mask_missing(6, 6, &ring), 0.3, 1, 0.05),
        (mask_missing(5, 8, &[(2, 3), (2, 4)]), 0.1, 0, 0.05),
    ];
    for (k, (mask, kappa, nu, s2)) in cases.iter().enumerate() {
        let data = field(mask, 10 + k as u64);
        let p = ModelParams::new(0.8, *kappa, *nu, *s2, -0.3).unwrap();
        let full = loglik_nugget_fullq(&p, &data, 3).unwrap();
        let lean = loglik_nugget_lean(&p, &data, 3).unwrap();
        let dense = dense_loglik(&p, &data, 64).unwrap();
        assert!(rel(full.loglik, dense.loglik) < 1e-8, "case {k}: {} vs {}", full.loglik, dense.loglik);
        assert!(rel(lean.loglik, dense.loglik) < 1e-8, "case {k}: {} vs {}", lean.loglik, dense.loglik);
        assert!(rel(full.loglik, lean.loglik) < 1e-9, "case {k}");
        assert!(rel(full.quadform, lean.quadform) < 1e-9, "case {k}");
    }
}

#[test]
fn all_partial_mask_reduces_to_dense() {
    // checkerboard: nobody is fully neighbored
    let obs: Vec<bool> = (0..36).map(|k| (k / 6 + k % 6) % 2 == 0).collect();
    let mask = GridMask::new(6, 6, obs).unwrap();
    let data = field(&mask, 3);
    let p = ModelParams::new(1.0, 0.2, 0, 0.02, 0.0).unwrap();
    let lean = loglik_nugget_lean(&p, &data, 3).unwrap();
    let dense = dense_loglik(&p, &data, 64).unwrap();
    assert!(rel(lean.loglik, dense.loglik) < 1e-9);
    let p0 = ModelParams::new(1.0, 0.2, 0, 0.0, 0.0).unwrap();
    assert!(rel(loglik_exact(&p0, &data, 3).unwrap().loglik, dense_loglik(&p0, &data, 64).unwrap().loglik) < 1e-9);
}

#[test]
fn tiny_nugget_is_continuous() {
    let mask = GridMask::complete(5, 5).unwrap();
    let data = field(&mask, 4);
    let p0 = ModelParams::new(1.0, 0.2, 0, 0.0, 0.0).unwrap();
    let p1 = ModelParams { sigma2: 1e-12, ..p0 };
    let a = loglik_exact(&p0, &data, 3).unwrap().loglik;
    let b = loglik_nugget_fullq(&p1, &data, 3).unwrap().loglik;
    assert!((a - b).abs() < 1e-4, "{a} vs {b}");
}

#[test]
fn wide_and_tall_grids_agree() {
    let mask = mask_missing(4, 9, &[(1, 1), (2, 6)]);
    let data = field(&mask, 5);
    let t = data.transpose();
    for s2 in [0.0, 0.03] {
        let p = ModelParams::new(1.0, 0.25, 1, s2, 0.1).unwrap();
        let method = if s2 > 0.0 { Method::Lean } else { Method::Exact };
        let a = Problem::new(&data).unwrap().loglik(&p.model(), &method).unwrap();
        let b = Problem::new(&t).unwrap().loglik(&p.model(), &method).unwrap();
        assert!(rel(a.loglik, b.loglik) < 1e-10);
    }
}

#[test]
fn rotated_grid_agrees() {
    // a half-turn reverses the order of observations inside each group
    let mask = mask_missing(6, 8, &[(0, 0), (2, 3), (2, 4), (5, 1), (3, 7)]);
    let data = field(&mask, 8);
    let (n1, n2) = data.dims();
    let rot: Vec<f64> = data.values().iter().rev().copied().collect();
    let rot = GridField::new(n1, n2, rot).unwrap();
    for (s2, method) in [(0.0, Method::Exact), (0.05, Method::FullQ), (0.05, Method::Lean)] {
        let p = ModelParams::new(0.8, 0.3, 1, s2, -0.2).unwrap();
        let a = Problem::new(&data).unwrap().loglik(&p.model(), &method).unwrap();
        let b = Problem::new(&rot).unwrap().loglik(&p.model(), &method).unwrap();
        assert!(rel(a.loglik, b.loglik) < 1e-11, "{method:?}: {} vs {}", a.loglik, b.loglik);
    }
}

#[test]
fn quadform_scales_quadratically() {
    let mask = mask_missing(6, 7, &[(2, 2)]);
    let data = field(&mask, 6);
    let scaled = GridField::from_observations(&mask, &data.observations().iter().map(|v| 3.0 * v).collect::<Vec<_>>()).unwrap();
    let p = ModelParams::new(1.0, 0.2, 0, 0.0, 0.0).unwrap();
    let a = loglik_exact(&p, &data, 3).unwrap();
    let b = loglik_exact(&p, &scaled, 3).unwrap();
    assert!(rel(b.quadform, 9.0 * a.quadform) < 1e-12);
    assert!((a.logdet - b.logdet).abs() < 1e-12);
}

#[test]
fn tau_scaling_identity() {
    let mask = mask_missing(5, 6, &[(0, 0), (3, 3)]);
    let data = field(&mask, 7);
    let c = 1.7;
    let scaled = GridField::from_observations(&mask, &data.observations().iter().map(|v| c * v).collect::<Vec<_>>()).unwrap();
    let p = ModelParams::new(1.0, 0.3, 1, 0.0, 0.0).unwrap();
    let pc = ModelParams { tau: c, ..p };
    let a = loglik_exact(&pc, &data, 3).unwrap().loglik;
    // Sigma(tau c) = Sigma(tau) / c^2, so L(tau c; y) = L(tau; c y) + n log c
    let b = loglik_exact(&p, &scaled, 3).unwrap().loglik + data.n_obs() as f64 * c.ln();
    assert!(rel(a, b) < 1e-12);
}

#[test]
fn approximate_none_is_exact_on_interior_points() {
    // observations at the interior of a larger grid, all fully neighbored
    // relative to each other is impossible; use a white-noise stencil where
    // every observation is fully neighbored
    let m = Model::new(Shape::Custom(Stencil::white_noise(2.0).unwrap()), 1.0, 0.0, 0.0).unwrap();
    let mask = mask_missing(4, 4, &[(1, 2)]);
    let data = field(&mask, 8);
    let pr = Problem::new(&data).unwrap();
    let a = pr.loglik(&m, &Method::Approx { scheme: Scheme::None }).unwrap();
    let b = pr.loglik(&m, &Method::Exact).unwrap();
    assert!(rel(a.loglik, b.loglik) < 1e-9);
}

#[test]
fn approximate_on_single_cell() {
    let p = ModelParams::latent(1.0, 1.0, 0).unwrap();
    let data = GridField::new(1, 1, vec![0.7]).unwrap();
    let ll = loglik_approx(&p, &data, Scheme::None).unwrap();
    let eta0 = 5.0f64;
    let expect = -0.5 * (2.0 * std::f64::consts::PI / eta0).ln() - 0.49 * eta0 / 2.0;
    assert!((ll.loglik - expect).abs() < 1e-13);
}

#[test]
fn approximations_need_no_nugget() {
    let mask = GridMask::complete(4, 4).unwrap();
    let data = field(&mask, 9);
    let p = ModelParams::new(1.0, 1.0, 0, 0.1, 0.0).unwrap();
    assert!(loglik_approx(&p, &data, Scheme::Precision).is_err());
}

#[test]
fn independent_blocks() {
    let mask = mask_missing(6, 6, &[(2, 3)]);
    let data = field(&mask, 11);
    let p = ModelParams::new(1.0, 0.3, 0, 0.02, 0.1).unwrap();
    let whole = vec![mask.cells().to_vec()];
    let a = loglik_indblocks(&p, &data, &whole, 3).unwrap();
    let b = dense_loglik(&p, &data, 64).unwrap();
    assert!(rel(a.loglik, b.loglik) < 1e-9);
    let tiles = tile_blocks(&mask, 3, 3).unwrap();
    assert_eq!(tiles.len(), 4);
    let t1 = loglik_indblocks(&p, &data, &tiles, 3).unwrap();
    let t2 = Problem::new(&data).unwrap().loglik(&p.model(), &Method::IndBlocks { rows: 3, cols: 3 }).unwrap();
    assert_eq!(t1.loglik, t2.loglik);
    // not a partition
    assert!(loglik_indblocks(&p, &data, &tiles[..3], 3).is_err());
}

#[test]
fn independent_blocks_exact_for_white_noise() {
    let m = Model::new(Shape::Custom(Stencil::white_noise(1.5).unwrap()), 1.0, 0.1, 0.0).unwrap();
    let mask = GridMask::complete(6, 4).unwrap();
    let data = field(&mask, 12);
    let pr = Problem::new(&data).unwrap();
    let a = pr.loglik(&m, &Method::IndBlocks { rows: 3, cols: 2 }).unwrap();
    let b = pr.loglik(&m, &Method::FullQ).unwrap();
    assert!(rel(a.loglik, b.loglik) < 1e-6);
}

#[test]
fn size_guard_on_boundary_count() {
    let mask = GridMask::complete(10, 10).unwrap();
    let data = field(&mask, 13);
    let pr = Problem::new(&data).unwrap().with_m_cap(10);
    let err = pr.loglik(&ModelParams::latent(1.0, 0.2, 0).unwrap().model(), &Method::Exact).unwrap_err();
    assert!(err.is_size_guard());
}
