//! Central finite differences, used to check analytic gradients.

/// `(f(x + h e_i) - f(x - h e_i)) / 2h` for every coordinate `i`.
pub fn central_difference<F>(mut f: F, point: &[f64], step: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    (0..point.len())
        .map(|i| {
            x[i] = point[i] + step;
            let plus = f(&x);
            x[i] = point[i] - step;
            let minus = f(&x);
            x[i] = point[i];
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// `||a - b|| / max(||a||, ||b||)`, or 0 when both vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}
