mod support;

use support::suites;

#[test]
fn conv_and_pool_match_loops() {
    let r = suites::conv_pool(60, 1);
    println!("{}", r.detail);
    assert!(r.passed, "{}", r.detail);
}

#[test]
fn auc_matches_pair_count() {
    let r = suites::auc(80, 2);
    assert!(r.passed, "{}", r.detail);
}

#[test]
fn svm_closed_forms_and_kkt() {
    let r = suites::svm(20, 3);
    println!("{}", r.detail);
    assert!(r.passed, "{}", r.detail);
}

#[test]
fn pca_against_covariance_oracle() {
    let r = suites::pca(10, 4);
    println!("{}", r.detail);
    assert!(r.passed, "{}", r.detail);
}

#[test]
fn protocol_laws() {
    let r = suites::protocol(100, 5);
    println!("{}", r.detail);
    assert!(r.passed, "{}", r.detail);
}
