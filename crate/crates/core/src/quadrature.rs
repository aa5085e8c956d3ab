//! One-dimensional adaptive quadrature: Gauss-Kronrod G7K15 with interval
//! bisection, and adaptive Simpson. Both are used to integrate unnormalized
//! genie densities, either as an independent oracle against a closed form or
//! as the production route where no closed form exists.

use crate::error::{Error, Result};

// G7K15 abscissae (positive half) and weights, QUADPACK values.
const K15_NODES: [f64; 8] = [
    0.991_455_371_120_813,
    0.949_107_912_342_759,
    0.864_864_423_359_769,
    0.741_531_185_599_394,
    0.586_087_235_467_691,
    0.405_845_151_377_397,
    0.207_784_955_007_898,
    0.0,
];
const K15_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529,
    0.063_092_092_629_979,
    0.104_790_010_322_250,
    0.140_653_259_715_525,
    0.169_004_726_639_267,
    0.190_350_578_064_785,
    0.204_432_940_075_298,
    0.209_482_141_084_728,
];
const G7_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_870,
    0.279_705_391_489_277,
    0.381_830_050_505_119,
    0.417_959_183_673_469,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let center = 0.5 * (a + b);
    let mut kronrod = 0.0;
    let mut gauss = 0.0;
    for (i, (&node, &wk)) in K15_NODES.iter().zip(K15_WEIGHTS.iter()).enumerate() {
        let value = if node == 0.0 {
            f(center)
        } else {
            f(center - half * node) + f(center + half * node)
        };
        kronrod += wk * value;
        if i % 2 == 1 {
            gauss += G7_WEIGHTS[i / 2] * value;
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

/// Adaptive Gauss-Kronrod integration of `f` over `[a, b]` to the given
/// absolute tolerance.
pub fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let (value, err) = gk15(f, a, b);
        if err <= tol || (b - a).abs() < 1e-14 {
            return Ok(value);
        }
        if depth >= 60 {
            return Err(Error::Numerical(format!(
                "Gauss-Kronrod quadrature did not reach tolerance on [{a}, {b}] (err {err:.3e})"
            )));
        }
        let mid = 0.5 * (a + b);
        Ok(recurse(f, a, mid, 0.5 * tol, depth + 1)?
            + recurse(f, mid, b, 0.5 * tol, depth + 1)?)
    }
    recurse(f, a, b, abs_tol, 0)
}

/// Adaptive Simpson integration of `f` over `[a, b]` with Richardson
/// correction, to the given absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> Result<f64> {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if delta.abs() <= 15.0 * tol || (b - a).abs() < 1e-14 {
            return Ok(left + right + delta / 15.0);
        }
        if depth >= 60 {
            return Err(Error::Numerical(format!(
                "adaptive Simpson did not reach tolerance on [{a}, {b}]"
            )));
        }
        Ok(
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth + 1)?
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth + 1)?,
        )
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(f, a, b, fa, fm, fb, whole, abs_tol, 0)
}

/// Integral of a normal density with the given mean and standard deviation,
/// truncated at `mean +- width`. Used to sanity-check tail truncation.
pub fn gaussian_density(x: f64, mean: f64, std_dev: f64) -> f64 {
    let z = (x - mean) / std_dev;
    (-0.5 * z * z).exp() / (std_dev * (2.0 * std::f64::consts::PI).sqrt())
}
