//! Globally adaptive Gauss–Kronrod (7, 15) quadrature.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

#[derive(Clone, Copy, Debug)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15<F: FnMut(f64) -> Result<f64>>(f: &mut F, a: f64, b: f64) -> Result<Panel> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c)?;
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, &x) in XGK[..7].iter().enumerate() {
        let f1 = f(c - h * x)?;
        let f2 = f(c + h * x)?;
        kron += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kron * h;
    let error = ((kron - gauss) * h).abs();
    Ok(Panel { a, b, value, error })
}

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Integrates `f` over the consecutive panels given by `breaks`, bisecting the
/// panel with the largest error estimate until the total error is below
/// `rtol * |value|` (or `atol`).
pub fn integrate<F>(mut f: F, breaks: &[f64], rtol: f64, atol: f64, max_panels: usize) -> Result<Quadrature>
where
    F: FnMut(f64) -> Result<f64>,
{
    if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Parameter("quadrature breakpoints must be strictly increasing".into()));
    }
    let mut panels: Vec<Panel> = Vec::with_capacity(max_panels);
    for w in breaks.windows(2) {
        panels.push(gk15(&mut f, w[0], w[1])?);
    }
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if error <= (rtol * value.abs()).max(atol) {
            return Ok(Quadrature { value, error, panels: panels.len() });
        }
        if panels.len() >= max_panels {
            return Err(Error::Accuracy(format!(
                "quadrature error {error:.3e} above tolerance after {} panels",
                panels.len()
            )));
        }
        let worst = (0..panels.len())
            .max_by(|i, j| panels[*i].error.total_cmp(&panels[*j].error))
            .unwrap();
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if !(mid > p.a && mid < p.b) {
            panels.push(p);
            let value: f64 = panels.iter().map(|p| p.value).sum();
            let error: f64 = panels.iter().map(|p| p.error).sum();
            return Ok(Quadrature { value, error, panels: panels.len() });
        }
        panels.push(gk15(&mut f, p.a, mid)?);
        panels.push(gk15(&mut f, mid, p.b)?);
    }
}
