use super::*;
use crate::numlin::vec_norm_inf;

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn exp(rate: f64) -> StateLaw {
    StateLaw::Exponential { rate }
}

fn diff(a: &CVector, b: &CVector) -> f64 {
    vec_norm_inf(&(a - b))
}

fn single_ar(a: f64, lambda: f64, service: StateLaw) -> ModelConfig {
    ModelConfig::StationaryAr(StationaryArConfig {
        transition: vec![vec![1.0]],
        lambda: vec![lambda],
        service: vec![service],
        a: vec![a],
    })
}

#[test]
fn canonical_models_solve_with_small_residuals() {
    for kind in ModelKind::ALL {
        let cfg = ModelConfig::canonical(kind);
        let solved = cfg.solve(&opts()).unwrap_or_else(|e| panic!("{kind}: {e}"));
        assert!(solved.resolution.residual < 1e-8, "{kind}: {}", solved.resolution.residual);
        for s in cfg.auto_grid(4).unwrap() {
            let r = solved.residual(c(s)).unwrap();
            assert!(r <= 10.0 * opts().tol, "{kind} at {s}: residual {r:e}");
        }
    }
}

#[test]
fn stationary_kinds_return_pi_at_anchor() {
    for kind in ModelKind::ALL.into_iter().filter(|k| k.is_stationary()) {
        let cfg = ModelConfig::canonical(kind);
        let solved = cfg.solve(&opts()).unwrap();
        let pi = solved.stationary.clone().unwrap();
        let anchor = if kind.is_pgf() { 1.0 } else { 1e-9 };
        if kind == ModelKind::WaitDependent {
            // D(s)⁻¹ is singular at 0; take the Richardson limit from the right.
            let z = |h: f64| solved.evaluate_real(h).unwrap();
            let h = 1e-3;
            let limit = (z(h) - z(h / 2.0) * c(6.0) + z(h / 4.0) * c(8.0)) / c(3.0);
            assert!(diff(&limit, &pi) < 1e-8, "{kind}: {limit} vs {pi}");
            assert!((limit.sum().re - 1.0).abs() < 1e-8);
            continue;
        }
        let z = solved.evaluate_real(anchor).unwrap();
        assert!(diff(&z, &pi) < 1e-8, "{kind}: {z} vs {pi}");
        assert!((z.sum().re - 1.0).abs() < 1e-8);
    }
}

#[test]
fn transient_anchor_scalar_example() {
    let cfg = ModelConfig::TransientAr(TransientArConfig {
        generator: vec![vec![0.0]],
        lambda: vec![2.0],
        service: vec![exp(3.0)],
        a: vec![0.5],
        r: 0.5,
        eta: 0.0,
        w: 1.0,
        initial: None,
    });
    let built = cfg.build().unwrap();
    match built.system.anchor() {
        crate::engine::Anchor::FixedPointValue { value, .. } => {
            assert!((value[0] - c(1.0)).norm() < 1e-14)
        }
        other => panic!("unexpected anchor {other:?}"),
    }
    let solved = cfg.solve(&opts()).unwrap();
    let z0 = solved.evaluate_real(1e-12).unwrap();
    assert!((z0[0] - c(1.0)).norm() < 1e-8);
}

#[test]
fn transient_anchor_matches_resolvent_formula() {
    let cfg = ModelConfig::canonical(ModelKind::TransientAr);
    let ModelConfig::TransientAr(t) = &cfg else { unreachable!() };
    // Independent route: Aᵀ(η) column by column from the linear system Mᵀ(η)x = e_k.
    let q = crate::numlin::real_matrix(&t.generator).unwrap();
    let n = t.lambda.len();
    let mut mt = -q.transpose();
    for i in 0..n {
        mt[(i, i)] += c(t.eta + t.lambda[i]);
    }
    let mut at = CMatrix::zeros(n, n);
    for k in 0..n {
        let mut e = CVector::zeros(n);
        e[k] = c(1.0);
        let x = crate::numlin::solve_linear(&mt, &e).unwrap();
        for i in 0..n {
            at[(i, k)] = x[i] * t.lambda[i];
        }
    }
    let p_hat = crate::stochcore::CtChain::from_rows(&t.generator, &t.lambda)
        .unwrap()
        .stationary()
        .unwrap();
    // Neumann series Σ rⁿ(Aᵀ)^{n−1}p̂.
    let mut term = &p_hat * c(t.r);
    let mut expected = term.clone();
    for _ in 0..400 {
        term = &at * term * c(t.r);
        expected += &term;
    }
    let solved = cfg.solve(&opts()).unwrap();
    let z0 = solved.evaluate_real(1e-12).unwrap();
    assert!(diff(&z0, &expected) < 1e-8, "{z0} vs {expected}");
}

#[test]
fn transient_carries_n_squared_unknowns() {
    let solved = ModelConfig::canonical(ModelKind::TransientAr).solve(&opts()).unwrap();
    assert_eq!(solved.unknown("C").unwrap().len(), 4);
    // V(s; C) vanishes at s = 0 apart from the r·p̂ term, i.e. C₀ = 0.
    let sys = &solved.solution.system;
    let v = sys.inhomogeneous(c(0.0), &solved.solution.u).unwrap();
    let v_free = sys.inhomogeneous(c(0.0), &CVector::zeros(4)).unwrap();
    assert!(diff(&v, &v_free) < 1e-15);
}

#[test]
fn transient_rejects_repeated_nu() {
    let cfg = ModelConfig::TransientAr(TransientArConfig {
        generator: vec![vec![0.0, 0.0], vec![0.0, 0.0]],
        lambda: vec![1.0, 1.0],
        service: vec![exp(2.0), exp(2.0)],
        a: vec![0.5, 0.4],
        r: 0.5,
        eta: 0.1,
        w: 0.0,
        initial: Some(vec![0.5, 0.5]),
    });
    assert!(matches!(cfg.build(), Err(Error::DegenerateSpectrum { .. })));
}

#[test]
fn transient_mass_bound_on_imaginary_axis() {
    let cfg = ModelConfig::canonical(ModelKind::TransientAr);
    let solved = cfg.solve(&opts()).unwrap();
    for t in [0.5, 2.0, 7.0] {
        let trace = solved.solution.trace(C64::new(0.0, t)).unwrap();
        for (k, &m) in trace.mass_norms.iter().enumerate() {
            assert!(m <= 1.1 * 0.5f64.powi(k as i32) + 1e-15, "t={t} k={k} mass {m}");
        }
    }
}

#[test]
fn stationary_h0_is_p_transpose_and_v0_vanishes() {
    for kind in [ModelKind::StationaryAr, ModelKind::StationaryFgm] {
        let built = ModelConfig::canonical(kind).build().unwrap();
        let sys = &built.system;
        let mut h0 = CMatrix::zeros(2, 2);
        for m in 0..sys.branch_count() {
            h0 += sys.branch_coeff(m, c(0.0)).unwrap();
        }
        let p = crate::numlin::real_matrix(&[vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
        assert!(crate::numlin::max_abs(&(h0 - p.transpose())) < 1e-15, "{kind}");
        let u = CVector::from_element(sys.unknown_dim(), C64::new(0.3, -0.2));
        assert!(vec_norm_inf(&sys.inhomogeneous(c(0.0), &u).unwrap()) == 0.0);
    }
}

#[test]
fn fgm_with_zero_theta_reduces_to_ar() {
    let ModelConfig::StationaryFgm(mut f) = ModelConfig::canonical(ModelKind::StationaryFgm) else {
        unreachable!()
    };
    f.theta = vec![vec![0.0; 2]; 2];
    let ar = ModelConfig::StationaryAr(StationaryArConfig {
        transition: f.transition.clone(),
        lambda: f.lambda.clone(),
        service: f.service.clone(),
        a: f.a.clone(),
    });
    let fgm = ModelConfig::StationaryFgm(f).solve(&opts()).unwrap();
    let ar_solved = ar.solve(&opts()).unwrap();
    assert!(vec_norm_inf(fgm.unknown("v2").unwrap()) < 1e-12);
    for s in ar.auto_grid(6).unwrap() {
        let d = diff(&fgm.evaluate_real(s).unwrap(), &ar_solved.evaluate_real(s).unwrap());
        assert!(d <= 1e-10, "s={s}: {d:e}");
    }
}

#[test]
fn fgm_transform_is_linear_in_small_theta() {
    let ModelConfig::StationaryFgm(base) = ModelConfig::canonical(ModelKind::StationaryFgm) else {
        unreachable!()
    };
    let at = |eps: f64| {
        let mut cfg = base.clone();
        for row in &mut cfg.theta {
            for t in row.iter_mut() {
                *t *= eps;
            }
        }
        ModelConfig::StationaryFgm(cfg).solve(&opts()).unwrap().evaluate_real(0.8).unwrap()
    };
    let z0 = at(0.0);
    let slopes: Vec<f64> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&e| diff(&at(e), &z0) / e)
        .collect();
    assert!(slopes.iter().all(|s| s.is_finite() && *s > 0.0));
    // The transform is affine-analytic in ε, so the slopes settle.
    assert!((slopes[1] - slopes[2]).abs() < (slopes[0] - slopes[1]).abs() + 1e-9);
    assert!((slopes[0] / slopes[2] - 1.0).abs() < 0.2);
}

#[test]
fn fgm_rejects_deterministic_service() {
    let ModelConfig::StationaryFgm(mut f) = ModelConfig::canonical(ModelKind::StationaryFgm) else {
        unreachable!()
    };
    f.service[0] = StateLaw::Deterministic { value: 0.5 };
    assert!(matches!(ModelConfig::StationaryFgm(f).build(), Err(Error::UnsupportedLaw(_))));
}

#[test]
fn shot_noise_factors_example() {
    let ModelConfig::ShotNoise(mut s) = ModelConfig::canonical(ModelKind::ShotNoise) else {
        unreachable!()
    };
    s.speed = 1.0;
    s.t = vec![0.5, 1.0];
    let a = s.factors();
    assert!((a[0] - 0.60653).abs() < 1e-5 && (a[1] - 0.36788).abs() < 1e-5);
}

#[test]
fn shot_noise_without_negative_noise_has_no_unknowns() {
    let ModelConfig::ShotNoise(mut s) = ModelConfig::canonical(ModelKind::ShotNoise) else {
        unreachable!()
    };
    s.p = 1.0;
    s.negative_rate.clear();
    let solved = ModelConfig::ShotNoise(s).solve(&opts()).unwrap();
    assert_eq!(solved.solution.u.len(), 0);
    assert!(solved.unknowns.is_empty());
    let sys = &solved.solution.system;
    assert_eq!(vec_norm_inf(&sys.inhomogeneous(c(1.3), &CVector::zeros(0)).unwrap()), 0.0);
    let z0 = solved.evaluate_real(1e-12).unwrap();
    assert!(diff(&z0, solved.stationary.as_ref().unwrap()) < 1e-8);
}

#[test]
fn shot_noise_pure_decay_matches_product_oracle() {
    let (a_t, rate) = (0.8, 1.5);
    let cfg = ModelConfig::ShotNoise(ShotNoiseConfig {
        transition: vec![vec![1.0]],
        service: vec![exp(rate)],
        t: vec![a_t],
        speed: 1.0,
        p: 1.0,
        positive_noise: None,
        negative_rate: vec![],
    });
    let solved = cfg.solve(&opts()).unwrap();
    let a = (-a_t).exp();
    for s in [0.3, 1.0, 2.5, 6.0] {
        // W = Σ_{k≥1} a^k S_k, so E e^{−sW} = Π β(a^k s).
        let mut oracle = 1.0;
        let mut x = a * s;
        while x > 1e-18 {
            oracle *= rate / (rate + x);
            x *= a;
        }
        let z = solved.evaluate_real(s).unwrap()[0].re;
        assert!((z - oracle).abs() < 1e-9, "s={s}: {z} vs {oracle}");
    }
}

#[test]
fn wait_dependent_gamma_example_and_atoms() {
    let example = ModelConfig::WaitDependent(WaitDependentConfig {
        transition: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        lambda: vec![2.0, 3.0],
        mu: vec![1.0, 2.0],
        c: 0.5,
    });
    let gamma = &example.build().unwrap().spectra[0].1;
    assert!(gamma[0].norm() == 0.0);
    assert!((gamma[1] - c(2.5)).norm() < 1e-12);

    let solved = ModelConfig::canonical(ModelKind::WaitDependent).solve(&opts()).unwrap();
    let v = solved.boundary_atoms().unwrap().unwrap();
    let mut total = 0.0;
    for x in v.iter() {
        assert!(x.im.abs() < 1e-10 && (0.0..=1.0).contains(&x.re), "{v}");
        total += x.re;
    }
    assert!(total > 0.0 && total < 1.0);
}

#[test]
fn wait_dependent_transform_tends_to_atoms_at_infinity() {
    let solved = ModelConfig::canonical(ModelKind::WaitDependent).solve(&opts()).unwrap();
    let v = solved.unknown("v").unwrap().clone();
    let far = solved.evaluate_real(1e5).unwrap();
    assert!(diff(&far, &v) < 1e-3, "{far} vs {v}");
}

#[test]
fn inar_branch_weights_partition_identity() {
    let built = ModelConfig::canonical(ModelKind::Inar).build().unwrap();
    // At z = 1 every B_ij(1) = p_ij, so the branch coefficients add to Pᵀ.
    let sys = &built.system;
    let mut total = CMatrix::zeros(2, 2);
    for m in 0..sys.branch_count() {
        total += sys.branch_coeff(m, c(1.0)).unwrap();
    }
    let p = crate::numlin::real_matrix(&[vec![0.6, 0.4], vec![0.3, 0.7]]).unwrap();
    assert!(crate::numlin::max_abs(&(total - p.transpose())) < 1e-15);
}

#[test]
fn inar_pgf_has_nonnegative_coefficients() {
    let solved = ModelConfig::canonical(ModelKind::Inar).solve(&opts()).unwrap();
    let f0 = solved.boundary_atoms().unwrap().unwrap();
    let h = 0.1;
    let values: Vec<CVector> = std::iter::once(f0.clone())
        .chain((1..=5).map(|k| solved.evaluate_real(k as f64 * h).unwrap()))
        .collect();
    for j in 0..2 {
        let mut row: Vec<f64> = values.iter().map(|v| v[j].re).collect();
        assert!(row[0] >= -1e-8);
        for _order in 1..=5 {
            row = row.windows(2).map(|w| w[1] - w[0]).collect();
            assert!(row.iter().all(|&d| d >= -1e-8), "state {j}: {row:?}");
        }
    }
    let q = solved.unknown("q_minus_one").unwrap();
    assert!(q.iter().all(|x| x.re > 0.0 && x.re < 1.0));
}

#[test]
fn moment_of_nearly_memoryless_ar_matches_closed_form() {
    let (mu, lambda) = (2.0, 1.0);
    let solved = single_ar(1e-5, lambda, exp(mu)).solve(&opts()).unwrap();
    // With a → 0, W ≈ [S − A]⁺: P(S > A) = λ/(λ+μ) and the overshoot is Exp(μ).
    let p = lambda / (lambda + mu);
    let m1 = solved.moment(0, 1).unwrap();
    let m2 = solved.moment(0, 2).unwrap();
    assert!((m1 - p / mu).abs() < 1e-4, "{m1}");
    assert!((m2 - 2.0 * p / (mu * mu)).abs() < 1e-4, "{m2}");
}

#[test]
fn tiny_deterministic_service_has_tiny_mean() {
    let solved = single_ar(0.5, 1.0, StateLaw::Deterministic { value: 1e-4 })
        .solve(&opts())
        .unwrap();
    let m = solved.moment(0, 1).unwrap();
    assert!((0.0..=1e-3).contains(&m), "{m}");
}

#[test]
fn moments_reject_transient_models() {
    let solved = ModelConfig::canonical(ModelKind::TransientAr).solve(&opts()).unwrap();
    assert!(matches!(solved.moment(0, 1), Err(Error::DomainError(_))));
}

#[test]
fn auto_grid_keeps_clear_of_poles() {
    for kind in ModelKind::ALL {
        let cfg = ModelConfig::canonical(kind);
        let grid = cfg.auto_grid(12).unwrap();
        let built = cfg.build().unwrap();
        for &s in &grid {
            for pole in built.system.poles() {
                assert!((c(s) - pole).norm() >= 0.02 * pole.norm().max(0.01) * 0.999, "{kind} {s}");
            }
        }
    }
}

#[test]
fn config_round_trips_through_json() {
    for kind in ModelKind::ALL {
        let cfg = ModelConfig::canonical(kind);
        let text = serde_json::to_string(&cfg).unwrap();
        assert!(text.contains(kind.name()));
        let back: ModelConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}

#[test]
fn builders_validate_parameters() {
    let ModelConfig::StationaryAr(mut s) = ModelConfig::canonical(ModelKind::StationaryAr) else {
        unreachable!()
    };
    s.a[0] = 1.0;
    assert!(matches!(ModelConfig::StationaryAr(s).build(), Err(Error::InvalidParameter { .. })));

    let ModelConfig::TransientAr(mut t) = ModelConfig::canonical(ModelKind::TransientAr) else {
        unreachable!()
    };
    t.r = 1.0;
    assert!(ModelConfig::TransientAr(t).build().is_err());

    let ModelConfig::Inar(mut i) = ModelConfig::canonical(ModelKind::Inar) else { unreachable!() };
    i.q[0] = vec![0.5, 0.6];
    assert!(ModelConfig::Inar(i).build().is_err());
}

#[test]
fn evaluation_on_a_representation_pole_uses_the_analytic_value() {
    let solved = single_ar(0.5, 1.0, exp(2.0)).solve(&opts()).unwrap();
    let at_pole = solved.evaluate_real(1.0).unwrap()[0];
    // Symmetric fourth-order difference from points that avoid the pole.
    let z = |x: f64| solved.evaluate_real(x).unwrap()[0];
    let h = 0.05;
    let mid = (z(1.0 + h) + z(1.0 - h)) * 4.0 / 6.0 - (z(1.0 + 2.0 * h) + z(1.0 - 2.0 * h)) / 6.0;
    assert!((at_pole - mid).norm() < 1e-6, "{at_pole} vs {mid}");
    assert!(at_pole.im.abs() < 1e-12);
}

#[test]
fn anchor_helpers_agree_for_every_kind() {
    for kind in ModelKind::ALL {
        let solved = ModelConfig::canonical(kind).solve(&opts()).unwrap();
        let got = solved.anchor_value().unwrap();
        let want = solved.expected_anchor().unwrap();
        assert!(diff(&got, &want) < 1e-8, "{kind}: {got} vs {want}");
    }
}
