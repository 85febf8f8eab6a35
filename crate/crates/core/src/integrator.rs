//! Embedded Dormand–Prince 5(4) stepper with error control restricted to a
//! leading block of components.

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Work buffers and step logic for one system size.
pub(crate) struct Dopri5 {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    pub y_new: Vec<f64>,
    pub err_new: f64,
    /// Error is measured over `y[..controlled]` only.
    controlled: usize,
    rtol: f64,
    atol: f64,
    fsal_valid: bool,
}

impl Dopri5 {
    pub fn new(n: usize, controlled: usize, rtol: f64, atol: f64) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            y_new: vec![0.0; n],
            err_new: 0.0,
            controlled,
            rtol,
            atol,
            fsal_valid: false,
        }
    }

    pub fn invalidate(&mut self) {
        self.fsal_valid = false;
    }

    /// Attempts one step of size `h` from `(t, y)`. On return `y_new` holds the
    /// 5th-order solution and `err_new` the scaled error norm. Returns `false`
    /// when the right-hand side produced non-finite values.
    pub fn attempt<F>(&mut self, f: &mut F, t: f64, y: &[f64], h: f64) -> bool
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        if !self.fsal_valid {
            f(t, y, &mut self.k[0]);
            self.fsal_valid = true;
        }
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        for i in 0..n {
            tmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, tmp, k6);
        let y_new = &mut self.y_new;
        for i in 0..n {
            y_new[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, y_new, k7);
        let mut acc = 0.0;
        let mut finite = true;
        for i in 0..self.controlled {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
            let r = e / sc;
            acc += r * r;
            if !y_new[i].is_finite() {
                finite = false;
            }
        }
        self.err_new = (acc / self.controlled as f64).sqrt();
        finite && self.err_new.is_finite()
    }

    /// Promotes the attempted step: swaps the stage-7 derivative into slot 0.
    pub fn accept(&mut self, y: &mut [f64]) {
        y.copy_from_slice(&self.y_new);
        self.k.swap(0, 6);
        self.fsal_valid = true;
    }

    /// New step size from the error estimate.
    pub fn next_step(&self, h: f64) -> f64 {
        let err = self.err_new.max(1e-10);
        let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
        h * fac
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(h0: f64, steps: usize) -> f64 {
        // y' = y on [0, 1]
        let mut st = Dopri5::new(1, 1, 1e-20, 1e-20);
        let mut y = vec![1.0];
        let mut t = 0.0;
        let h = h0;
        let mut f = |_t: f64, y: &[f64], dy: &mut [f64]| dy[0] = y[0];
        for _ in 0..steps {
            assert!(st.attempt(&mut f, t, &y, h));
            st.accept(&mut y);
            t += h;
        }
        (y[0] - 1f64.exp()).abs()
    }

    #[test]
    fn fifth_order_convergence() {
        let e1 = run(0.1, 10);
        let e2 = run(0.05, 20);
        let order = (e1 / e2).log2();
        assert!(order > 4.7 && order < 5.5, "observed order {order}");
    }

    #[test]
    fn error_estimate_scales_with_step() {
        let mut st = Dopri5::new(1, 1, 0.0, 1.0);
        let mut f = |t: f64, _y: &[f64], dy: &mut [f64]| dy[0] = (3.0 * t).sin();
        st.attempt(&mut f, 0.3, &[0.0], 0.2);
        let e1 = st.err_new;
        st.invalidate();
        st.attempt(&mut f, 0.3, &[0.0], 0.1);
        let e2 = st.err_new;
        assert!(e1 / e2 > 16.0, "ratio {}", e1 / e2);
    }
}
