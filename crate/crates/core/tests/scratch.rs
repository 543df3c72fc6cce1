use glm_landscape::activations::Activation;
use glm_landscape::annealed::*;
use glm_landscape::measures::DiscreteMeasure;
use std::collections::HashMap;

fn act(name: &str) -> Activation {
    Activation::builtin(name, &HashMap::new()).unwrap()
}

#[test]
#[ignore]
fn diag_tanh_grids() {
    let tanh = act("tanh");
    for k in [64usize, 96, 128, 192] {
        let grid = DiscreteMeasure::gauss_hermite(k).unwrap();
        let sol = solve_annealed_l1(
            &tanh,
            2.0,
            Constraint::Unconstrained,
            &AnnealedOptions::default(),
            &grid,
        )
        .unwrap();
        println!(
            "k={k}: complexity={:.12} raw={:.12} l={:.8} lambda1={:.8} g=({:.8},{:.8}) iters={}",
            sol.complexity, sol.complexity_at_epsilon, sol.l, sol.lambda1, sol.g_re, sol.g_im, sol.iterations
        );
    }
}

#[test]
#[ignore]
fn diag_square() {
    let sq = act("square");
    let grid = DiscreteMeasure::gauss_hermite(64).unwrap();
    let sol = solve_annealed_l1(
        &sq,
        2.0,
        Constraint::Unconstrained,
        &AnnealedOptions {
            tol: 1e-6,
            ..Default::default()
        },
        &grid,
    );
    match sol {
        Ok(s) => println!(
            "square: complexity={:.10} l={:.8} lambda1={:.8} g=({:.6},{:.6}) res={:?}",
            s.complexity, s.l, s.lambda1, s.g_re, s.g_im, s.residuals
        ),
        Err(e) => println!("square failed: {e}"),
    }
}

#[test]
#[ignore]
fn diag_tilt_quadrature() {
    use num_complex::Complex64;
    let tanh = act("tanh");
    let alpha = 2.0;
    let (l0, l1, g) = (0.0, 1.31112, Complex64::new(-2.2427, 0.29714));
    let mut prev = (0.0, 0.0, 0.0);
    for k in [64usize, 96, 128, 192, 256, 501] {
        let grid = DiscreteMeasure::gauss_hermite(k).unwrap();
        let (nu, rep) = tilt_measure(l0, l1, g, &tanh, alpha, &grid).unwrap();
        let t = nu.t_phi(&tanh).unwrap();
        let a = nu
            .expectation(|x| {
                let d = tanh.d1(x[0]);
                d * d
            })
            .unwrap();
        println!(
            "k={k}: t={:.14} A={:.14} lnZ={:.14} (dt={:.2e} dA={:.2e} dZ={:.2e})",
            t,
            a,
            rep.log_partition,
            t - prev.0,
            a - prev.1,
            rep.log_partition - prev.2
        );
        prev = (t, a, rep.log_partition);
    }
}

#[test]
#[ignore]
fn diag_l2() {
    let tanh = act("tanh");
    let grid2 = DiscreteMeasure::gauss_hermite_2d(48).unwrap();
    let t0 = std::time::Instant::now();
    let sol = solve_annealed_l2(
        &tanh,
        2.0,
        (0.01, 0.5),
        (-0.8, 0.8),
        &L2Options::default(),
        &grid2,
    );
    match &sol {
        Ok(s) => println!(
            "l2 tanh: q={:.6} value={:.8} loss={:.6} orth_res={:.2e} dist={:.2e} skipped={} in {:?}",
            s.q,
            s.complexity,
            s.loss_level,
            s.constraint_residuals[0],
            s.constraint_residuals[1],
            s.skipped_q.len(),
            t0.elapsed()
        ),
        Err(e) => println!("l2 tanh failed: {e}"),
    }

    let linear = act("linear");
    let t0 = std::time::Instant::now();
    let sol = solve_annealed_l2(
        &linear,
        2.0,
        (0.01, 1.0),
        (-0.6, 0.6),
        &L2Options::default(),
        &grid2,
    );
    match &sol {
        Ok(s) => println!(
            "l2 linear: q={:.6} value={:.8} loss={:.6} res={:?} in {:?}",
            s.q, s.complexity, s.loss_level, s.constraint_residuals, t0.elapsed()
        ),
        Err(e) => println!("l2 linear failed: {e}"),
    }
}

#[test]
#[ignore]
fn diag_l2_mirror() {
    let tanh = act("tanh");
    let grid2 = DiscreteMeasure::gauss_hermite_2d(48).unwrap();
    for q in [0.3f64, -0.3] {
        let sol = solve_annealed_l2(
            &tanh,
            2.0,
            (0.01, 0.5),
            (q - 1e-6, q + 1e-6),
            &L2Options::default(),
            &grid2,
        );
        match sol {
            Ok(s) => println!("q={q}: value={:.12}", s.complexity),
            Err(e) => println!("q={q}: failed {e}"),
        }
    }
}

#[test]
#[ignore]
fn diag_l2_mirror2() {
    let tanh = act("tanh");
    let grid2 = DiscreteMeasure::gauss_hermite_2d(48).unwrap();
    for q in [0.3f64, -0.3] {
        let v = theorem2_objective(q, &grid2, &grid2, &tanh, 2.0).unwrap();
        println!(
            "base q={q}: value={:.10} loss={:.6} orth={:.6}",
            v.value, v.loss_level, v.orthogonality
        );
        let sol = solve_annealed_l2(
            &tanh,
            2.0,
            (0.01, 2.0),
            (q - 1e-6, q + 1e-6),
            &L2Options::default(),
            &grid2,
        );
        match sol {
            Ok(s) => println!("q={q}: value={:.12} loss={:.6}", s.complexity, s.loss_level),
            Err(e) => println!("q={q}: failed {e}"),
        }
    }
}
