//! Independent cross-checks between routes that share no code path.

use num_complex::Complex64;
use padic_spectra::output::{self, Format, SpectrumConfig};
use padic_spectra::{operators, qspecial, spectrum, DepthClosure, FieldParams, TreeWindow};

fn fp(p: u32, e: u32, f: u32) -> FieldParams {
    FieldParams::new(p, e, f).unwrap()
}

#[test]
fn roots_match_jacobi_eigenvalues() {
    // the radial operator as a long tridiagonal matrix, solved by Sturm bisection
    for params in [fp(2, 1, 1), fp(3, 1, 1), fp(2, 2, 1)] {
        let roots = qspecial::roots_for(&params, 6).unwrap();
        let jac = operators::jacobi_d0(&params, 60).unwrap();
        for n in 0..6 {
            let ev = jac.eigenvalue(n);
            let rel = (ev - roots.value(n)).abs() / roots.value(n);
            assert!(rel < 1e-10, "{params:?} n={n}: {ev} vs {}", roots.value(n));
        }
    }
}

#[test]
fn lowest_eigenvalue_from_dense_matrix() {
    // Dirichlet closure: dense symmetric eigen on a small window, against the sparse solver
    let params = fp(2, 1, 1);
    let w = TreeWindow::ring(params, 6).unwrap();
    let g = operators::assemble_dstar_d(&w, DepthClosure::Dirichlet).unwrap().to_dense();
    let dense = padic_spectra::linalg::sym_eigenvalues(g);
    let sparse = operators::lowest_eigenvalues(&w, DepthClosure::Dirichlet, 5).unwrap();
    for (a, b) in dense.iter().zip(&sparse) {
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{a} vs {b}");
    }
}

#[test]
fn transparent_closure_is_depth_independent() {
    let params = fp(2, 2, 1);
    let a = operators::lowest_eigenvalues(&TreeWindow::ring(params, 7).unwrap(), DepthClosure::Transparent, 4).unwrap();
    let b = operators::lowest_eigenvalues(&TreeWindow::ring(params, 9).unwrap(), DepthClosure::Transparent, 4).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-10 * x, "{x} vs {y}");
    }
}

#[test]
fn zeta_against_direct_spectral_sum() {
    // sum over every eigenvalue with multiplicity, no closed m-factor
    let params = fp(3, 1, 1);
    let roots = qspecial::roots_for(&params, 20).unwrap();
    let table = spectrum::full_spectrum(&params, &roots, 38, 19).unwrap();
    for s in [1.5, 2.0, 3.25] {
        let direct: f64 = table
            .entries
            .iter()
            .map(|e| e.multiplicity as f64 * e.value.powf(-s))
            .sum();
        let z = spectrum::zeta_dr(&params, &roots, Complex64::new(s, 0.0), 20).unwrap();
        let rel = (z.value_re - direct).abs() / direct;
        assert!(rel < 1e-12, "s={s}: {} vs {direct}", z.value_re);
        assert!(z.value_im.abs() < 1e-14);
    }
}

#[test]
fn factor_has_zeros_where_listed() {
    let params = fp(2, 1, 1);
    let roots = qspecial::roots_for(&params, 20).unwrap();
    // near a numerator zero on a line Re s > ef/2 nothing vanishes, but the
    // factor itself does at the listed points
    for s in spectrum::factor_zeros(&params, 1..=2) {
        let f = spectrum::zeta_factor(&params, s).unwrap();
        assert!(f.norm() < 1e-12, "{s}: {f}");
    }
    let near = spectrum::zeta_dr(&params, &roots, Complex64::new(1.0, 0.0), 20).unwrap();
    assert!(near.value_re > 0.0);
}

#[test]
fn spectrum_json_round_trips_into_validation() {
    let params = fp(2, 1, 1);
    let doc = output::run_spectrum(&SpectrumConfig {
        params,
        m_max: 8,
        n_max: 7,
        seed: 1,
    })
    .unwrap();
    let table = output::spectrum_table_from_json(&output::render(&doc, Format::Json)).unwrap();
    let r = spectrum::validate_against(&table, 8, 8, 1e-6, DepthClosure::Transparent, false).unwrap();
    assert!(r.passed, "{r:?}");
}

#[test]
fn truncated_scheme_reports_but_does_not_match() {
    // the plain truncation converges too slowly to pass at 1e-6
    let r = spectrum::validate_spectrum(&fp(2, 1, 1), 6, 4, 1e-6, DepthClosure::Truncate, false).unwrap();
    assert!(!r.passed);
    assert!(r.max_rel_error > 1e-3);
}
