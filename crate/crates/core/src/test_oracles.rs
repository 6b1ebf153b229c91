//! Independent numerical oracles for unit tests.

/// Euler-Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// `e * E1(1)` from the convergent series
/// `E1(1) = -gamma - sum_{k>=1} (-1)^k / (k k!)`.
pub fn e_e1_one() -> f64 {
    let mut sum = 0.0;
    let mut fact = 1.0;
    for k in 1..30 {
        fact *= k as f64;
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign / (k as f64 * fact);
    }
    std::f64::consts::E * (-EULER_GAMMA - sum)
}

fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

/// `int_0^inf g(x) e^{-x} dx` by composite Simpson on `[0, 60]`.
pub fn exp_expectation<G: Fn(f64) -> f64>(g: G) -> f64 {
    simpson(&|x: f64| g(x) * (-x).exp(), 0.0, 60.0, 600_000)
}

#[test]
fn oracles_agree() {
    let a = e_e1_one();
    let b = exp_expectation(|x| 1.0 / (1.0 + x));
    let c = exp_expectation(|x| x.ln_1p());
    assert!((a - 0.596_347_362_3).abs() < 1e-10);
    assert!((a - b).abs() < 1e-10);
    assert!((a - c).abs() < 1e-10);
}
