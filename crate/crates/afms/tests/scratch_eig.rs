use afms::spectral::{modcov_fit, pef_roots};

#[test]
fn nilpotent_companion_roots() {
    let lp = modcov_fit(&vec![0.0; 41], 24).unwrap();
    assert!(lp.degenerate);
    let roots = pef_roots(&lp);
    println!("roots: {}", roots.len());
}
