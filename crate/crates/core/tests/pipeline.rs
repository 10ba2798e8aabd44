use std::f64::consts::FRAC_PI_4;

use chanrep::channel::{BankSet, ChannelConfig};
use chanrep::decoder::{decode_modes, decode_point, DecodeParams};
use chanrep::learner::{fit, predict_point, TrainingSet, DEFAULT_RCOND};
use chanrep::testbed::{gen_single_valued, SyntheticKind, SyntheticLayout, SyntheticSpec};

#[test]
fn identity_task_decodes_held_out_points() {
    let cfg = ChannelConfig::new(1.0, FRAC_PI_4, 16, 3, 0.0).unwrap();
    let banks = BankSet::single(cfg);
    let (lo, hi) = cfg.domain();
    let pairs = (0..50)
        .map(|i| lo + (hi - lo) * i as f64 / 50.0)
        .map(|x| (vec![x], vec![x]))
        .collect();
    let train = TrainingSet::new(banks.clone(), banks, pairs).unwrap();
    let map = fit(&train, 0.0, DEFAULT_RCOND).unwrap();
    assert!(map.meta().residual <= 1e-8 * train.matrices().unwrap().1.norm());
    for i in 0..200 {
        let x = lo + (hi - lo) * (i as f64 + 0.37) / 200.0;
        let modes = decode_modes(&cfg, &predict_point(&map, &[x]).unwrap(), &DecodeParams::default()).unwrap();
        assert_eq!(modes.len(), 1, "x = {x}");
        assert!((modes[0].value - x).abs() <= 1e-6, "x = {x}, got {}", modes[0].value);
    }
}

#[test]
fn single_valued_dense_channels() {
    let banks_in = BankSet::single(ChannelConfig::new(1.0, 0.005, 200, 3, 0.0).unwrap());
    let banks_out = BankSet::single(ChannelConfig::new(1.0, 0.005, 200, 3, 0.0).unwrap());
    let spec = SyntheticSpec::new(SyntheticKind::SingleValued, 400, 0.0, 1);
    let train = gen_single_valued(&spec, &banks_in, &banks_out).unwrap();
    let map = fit(&train, 0.0, DEFAULT_RCOND).unwrap();
    let layout = SyntheticLayout::new(&banks_in, &banks_out);

    let n = 400.0;
    let (t0, t1) = (0.5 / n, 1.0 - 0.5 / n);
    let mut sq = 0.0;
    for i in 0..100 {
        let t = t0 + (t1 - t0) * (i as f64 + 0.5) / 100.0;
        let v = predict_point(&map, &layout.input_point(t)).unwrap();
        let modes = decode_modes(banks_out.bank(0), &v, &DecodeParams::default()).unwrap();
        assert_eq!(modes.len(), 1, "t = {t}");
        let truth = layout.branches(SyntheticKind::SingleValued, t)[0][0];
        sq += (modes[0].value - truth).powi(2);
    }
    let rmse = (sq / 100.0).sqrt();
    assert!(rmse <= 1e-3, "rmse {rmse}");
}

#[test]
fn two_axis_fit_reproduces_training_points() {
    let cfg = ChannelConfig::new(1.0, FRAC_PI_4, 16, 3, 0.0).unwrap();
    let banks = BankSet::new(vec![cfg, cfg]).unwrap();
    let (lo, hi) = cfg.domain();
    let grid: Vec<f64> = (0..14).map(|i| lo + (hi - lo) * (i as f64 + 0.5) / 14.0).collect();
    let pairs = grid
        .iter()
        .zip(grid.iter().rev())
        .map(|(&a, &b)| (vec![a, b], vec![a, b]))
        .collect();
    let train = TrainingSet::new(banks.clone(), banks.clone(), pairs).unwrap();
    let map = fit(&train, 0.0, DEFAULT_RCOND).unwrap();
    for (x, _) in train.pairs() {
        let modes = decode_point(&banks, &predict_point(&map, x).unwrap(), &DecodeParams::default()).unwrap();
        assert_eq!(modes.len(), 2);
        for (axis, found) in modes.iter().enumerate() {
            assert_eq!(found.len(), 1);
            assert!((found[0].value - x[axis]).abs() <= 1e-9);
        }
    }
}
