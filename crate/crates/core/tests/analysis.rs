use std::sync::OnceLock;

use impatient::analysis::{
    export_covariances, mae_grid, read_curve_csv, read_mae_csv, read_matrix_csv, uncorrelated_baseline,
    variance_explained, write_curve_csv, write_mae_csv,
};
use impatient::belief::PriorModel;
use impatient::synthetic::{gen_dataset, GeneratorConfig};
use impatient::training::{fit_prior, ShowHistory};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

struct Fixture {
    histories: Vec<ShowHistory>,
    prior: PriorModel,
}

fn fixture() -> &'static Fixture {
    static CELL: OnceLock<Fixture> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = GeneratorConfig::default();
        let (histories, _) = gen_dataset(&cfg, 200, 2000).unwrap();
        let prior = fit_prior(&histories, cfg.delays(), DVector::from_element(cfg.trace_len, 1.0)).unwrap();
        Fixture { histories, prior }
    })
}

fn ones(k: usize) -> DVector<f64> {
    DVector::from_element(k, 1.0)
}

fn random_psd(k: usize, rank: usize, entries: &[f64]) -> DMatrix<f64> {
    let f = DMatrix::from_column_slice(k, rank, &entries[..k * rank]);
    &f * f.transpose()
}

proptest! {
    #[test]
    fn curves_are_monotone_and_anchored(
        k in 1usize..=20,
        rank in 1usize..=20,
        entries in prop::collection::vec(-2.0f64..2.0, 400),
        weights in prop::collection::vec(-1.0f64..2.0, 20),
    ) {
        let rank = rank.min(k);
        let c = random_psd(k, rank, &entries);
        let w = DVector::from_column_slice(&weights[..k]);
        prop_assume!(w.dot(&(&c * &w)) > 1e-6);
        let curve = variance_explained(&c, &w).unwrap();
        prop_assert_eq!(curve.explained.len(), k + 1);
        prop_assert_eq!(curve.explained[0], 0.0);
        prop_assert!((curve.explained[k] - 1.0).abs() <= 1e-9);
        for pair in curve.explained.windows(2) {
            prop_assert!(pair[1] >= pair[0] - 1e-9, "{:?}", curve.explained);
        }
    }

    #[test]
    fn curves_ignore_positive_rescaling(
        k in 1usize..=10,
        entries in prop::collection::vec(-2.0f64..2.0, 100),
        scale in 1e-3f64..1e3,
    ) {
        let c = random_psd(k, k, &entries);
        prop_assume!(ones(k).dot(&(&c * ones(k))) > 1e-6);
        let a = variance_explained(&c, &ones(k)).unwrap();
        let b = variance_explained(&(&c * scale), &ones(k)).unwrap();
        for (x, y) in a.explained.iter().zip(&b.explained) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }
}

#[test]
fn diagonal_input_matches_its_baseline() {
    let c = DMatrix::from_diagonal(&DVector::from_column_slice(&[1.0, 3.0, 0.5, 2.0]));
    assert_eq!(
        variance_explained(&c, &ones(4)).unwrap(),
        uncorrelated_baseline(&c, &ones(4)).unwrap()
    );
}

#[test]
fn synthetic_prior_calibration() {
    let prior = &fixture().prior;
    let k = prior.dim();
    let sigma = variance_explained(prior.sigma(), &ones(k)).unwrap();
    let half = sigma.first_reaching(0.5).unwrap();
    assert!((4..=16).contains(&half), "sigma curve crosses 0.5 at day {half}");
    assert!(sigma.explained[40] > 0.9, "sigma curve at day 40: {}", sigma.explained[40]);

    let v = variance_explained(prior.v_noise(), &ones(k)).unwrap();
    let half = v.first_reaching(0.5).unwrap();
    assert!((5..=20).contains(&half), "noise curve crosses 0.5 at day {half}");

    for c in [prior.sigma(), prior.v_noise()] {
        let emp = variance_explained(c, &ones(k)).unwrap();
        let base = uncorrelated_baseline(c, &ones(k)).unwrap();
        for (b, e) in base.explained.iter().zip(&emp.explained) {
            assert!(b <= &(e + 1e-9));
        }
    }
}

fn autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    let m = xs.iter().sum::<f64>() / n as f64;
    let den: f64 = xs.iter().map(|x| (x - m).powi(2)).sum();
    let num: f64 = (0..n - lag).map(|i| (xs[i] - m) * (xs[i + lag] - m)).sum();
    num / den
}

#[test]
fn exported_prior_shows_weekly_structure() {
    let prior = &fixture().prior;
    let dir = tempfile::tempdir().unwrap();
    export_covariances(prior, dir.path()).unwrap();
    let sigma = read_matrix_csv(std::fs::File::open(dir.path().join("sigma.csv")).unwrap()).unwrap();
    assert_eq!(&sigma, prior.sigma());
    let v = read_matrix_csv(std::fs::File::open(dir.path().join("v_noise.csv")).unwrap()).unwrap();
    assert_eq!(&v, prior.v_noise());

    // correlation of day 1 with every day, with the slow decay removed by
    // differencing
    let k = sigma.nrows();
    let row: Vec<f64> = (0..k)
        .map(|j| sigma[(0, j)] / (sigma[(0, 0)] * sigma[(j, j)]).sqrt())
        .collect();
    let diffs: Vec<f64> = row.windows(2).map(|p| p[1] - p[0]).collect();
    let (r5, r7, r9) = (
        autocorrelation(&diffs, 5),
        autocorrelation(&diffs, 7),
        autocorrelation(&diffs, 9),
    );
    assert!(r7 > r5 && r7 > r9, "lag 5: {r5}, lag 7: {r7}, lag 9: {r9}");
}

#[test]
fn one_dimensional_export() {
    let prior = PriorModel::new(
        DVector::from_element(1, 0.3),
        DMatrix::from_element(1, 1, 0.2),
        DMatrix::from_element(1, 1, 0.1),
        DVector::from_element(1, 1.0),
        vec![2],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_covariances(&prior, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("sigma.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    let m = read_matrix_csv(text.as_bytes()).unwrap();
    assert_eq!(m.shape(), (1, 1));
}

#[test]
fn mae_without_data_is_the_prior_error() {
    // the prediction is 1ᵀμ for every M; only the holdout changes with M
    let f = fixture();
    let shows = &f.histories[..50];
    let ms = [10, 100, 1000];
    let cells = mae_grid(&f.prior, shows, &ms, &[0]).unwrap();
    let prior_mean = f.prior.mu().sum();
    for (cell, m) in cells.iter().zip(ms) {
        let manual: f64 = shows
            .iter()
            .map(|s| {
                let holdout = &s.traces[m..];
                let y = holdout.iter().map(|t| t.observed().iter().sum::<f64>()).sum::<f64>()
                    / holdout.len() as f64;
                (prior_mean - y).abs()
            })
            .sum::<f64>()
            / shows.len() as f64;
        assert!((cell.estimate.value - manual).abs() < 1e-12);
    }
}

#[test]
fn mae_requires_a_holdout() {
    let f = fixture();
    assert!(mae_grid(&f.prior, &f.histories[..2], &[2000], &[5]).is_err());
}

#[test]
fn tables_round_trip() {
    let f = fixture();
    let cells = mae_grid(&f.prior, &f.histories[..20], &[10, 100], &[0, 5, 59]).unwrap();
    let mut buf = Vec::new();
    write_mae_csv(&mut buf, &cells).unwrap();
    assert_eq!(read_mae_csv(buf.as_slice()).unwrap(), cells);

    let curve = variance_explained(f.prior.sigma(), &ones(f.prior.dim())).unwrap();
    let mut buf = Vec::new();
    write_curve_csv(&mut buf, &curve).unwrap();
    assert_eq!(read_curve_csv(buf.as_slice()).unwrap(), curve);
}
