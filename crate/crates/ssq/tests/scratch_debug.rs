use ndarray::Array2;
use ssq::data::QuantileLevel;
use ssq::nuisance::fit_logistic;
use ssq::rng;

#[test]
fn debug_l1() {
    let mut gen = rng::rng_from(2);
    let n = 120;
    let x = Array2::from_shape_fn((n, 5), |_| rng::standard_normal(&mut gen));
    let y: Vec<f64> = (0..n)
        .map(|i| 1.5 * x[[i, 0]] - x[[i, 3]] + rng::standard_normal(&mut gen))
        .collect();
    let theta = 0.0;
    let penalty = 0.05;
    let tau = QuantileLevel::new(0.5).unwrap();
    let fit = fit_logistic(&y, x.view(), theta, tau, penalty).unwrap();
    println!("coefficients: {:?}", fit.coefficients);
    let z: Vec<f64> = y.iter().map(|&v| if v < theta { 1.0 } else { 0.0 }).collect();
    let probs: Vec<f64> = (0..n).map(|i| fit.probability(x.row(i))).collect();
    for j in 0..5 {
        let grad: f64 = (0..n).map(|i| x[[i, j]] * (probs[i] - z[i])).sum::<f64>() / n as f64;
        println!("j={j} beta={:+.6e} grad={:+.6e}", fit.coefficients[j + 1], grad);
    }
}
