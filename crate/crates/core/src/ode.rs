use nalgebra::DVector;

/// One classical fourth-order Runge-Kutta step of `dx/dt = rhs(t, x)`.
pub fn rk4_step<F>(rhs: F, t: f64, x: &DVector<f64>, h: f64) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = rhs(t, x);
    let k2 = rhs(t + 0.5 * h, &(x + &k1 * (0.5 * h)));
    let k3 = rhs(t + 0.5 * h, &(x + &k2 * (0.5 * h)));
    let k4 = rhs(t + h, &(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// In-place RK4 step on a plain slice for the shooting inner loop.
///
/// `scratch` must hold at least `5 * x.len()` values.
pub(crate) fn rk4_step_slice<F>(rhs: &F, x: &mut [f64], h: f64, scratch: &mut [f64])
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = x.len();
    let (k1, rest) = scratch.split_at_mut(n);
    let (k2, rest) = rest.split_at_mut(n);
    let (k3, rest) = rest.split_at_mut(n);
    let (k4, rest) = rest.split_at_mut(n);
    let tmp = &mut rest[..n];

    rhs(x, k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    rhs(tmp, k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    rhs(tmp, k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    rhs(tmp, k4);
    for i in 0..n {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn exponential_decay() {
        let mut x = dvector![1.0];
        let h = 1e-2;
        for k in 0..100 {
            x = rk4_step(|_, y| -y, k as f64 * h, &x, h);
        }
        assert!((x[0] - (-1f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn slice_step_matches_vector_step() {
        let rhs = |x: &[f64], out: &mut [f64]| {
            out[0] = x[1];
            out[1] = -4.0 * x[0] - 0.12 * x[1];
        };
        let mut xs = [0.3, -0.7];
        let mut scratch = [0.0; 10];
        rk4_step_slice(&rhs, &mut xs, 0.01, &mut scratch);
        let xv = rk4_step(
            |_, y| dvector![y[1], -4.0 * y[0] - 0.12 * y[1]],
            0.0,
            &dvector![0.3, -0.7],
            0.01,
        );
        assert_eq!(xs[0], xv[0]);
        assert_eq!(xs[1], xv[1]);
    }
}
