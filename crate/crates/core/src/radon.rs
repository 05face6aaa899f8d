//! Least-squares parabolic Radon transform and the demultiple baseline
//! built on it.
//!
//! Curvature `q` is measured in samples of move-out at the reference
//! offset (the largest offset of the gather), the same unit as the
//! generator's minimum multiple move-out.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gather::{split_exact, Gather, GatherGeometry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadonConfig {
    pub n_q: usize,
    /// Inclusive curvature range, samples at the reference offset.
    pub q_range: (f64, f64),
    /// Damping added to the normal equations.
    pub lambda: f64,
    pub max_iterations: usize,
    /// Target relative residual of the normal equations.
    pub tolerance: f64,
    /// Cells with `q >= q_mute` are modelled as multiples.
    pub q_mute: f64,
}

impl Default for RadonConfig {
    fn default() -> Self {
        RadonConfig {
            n_q: 128,
            q_range: (-8.0, 32.0),
            lambda: 0.1,
            max_iterations: 500,
            tolerance: 1e-6,
            q_mute: 10.0,
        }
    }
}

impl RadonConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.q_range;
        let bad = |m: String| Err(Error::Config(m));
        if self.n_q < 2 {
            return bad(format!("n_q must be at least 2, got {}", self.n_q));
        }
        if !(lo < 0.0 && 0.0 < hi) {
            return bad(format!("q range ({lo}, {hi}) must straddle zero"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(lo..=hi).contains(&self.q_mute) {
            return bad(format!("q_mute {} outside the q range", self.q_mute));
        }
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return bad("CG needs a positive iteration cap and tolerance".into());
        }
        Ok(())
    }

    pub fn q_axis(&self) -> Vec<f64> {
        let (lo, hi) = self.q_range;
        let step = (hi - lo) / (self.n_q - 1) as f64;
        (0..self.n_q).map(|i| lo + i as f64 * step).collect()
    }
}

/// Amplitudes on an intercept-time x curvature grid, stored q-major:
/// `data[iq * n_tau + tau]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RadonPanel {
    pub n_tau: usize,
    pub q: Vec<f64>,
    pub data: Vec<f64>,
}

impl RadonPanel {
    pub fn zeros(n_tau: usize, q: Vec<f64>) -> Self {
        let data = vec![0.0; n_tau * q.len()];
        RadonPanel { n_tau, q, data }
    }

    pub fn get(&self, tau: usize, iq: usize) -> f64 {
        self.data[iq * self.n_tau + tau]
    }

    pub fn set(&mut self, tau: usize, iq: usize, v: f64) {
        self.data[iq * self.n_tau + tau] = v;
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Interpolation stencil of one (trace, q) pair: `d[t] += (1-f) m[t+k] +
/// f m[t+k+1]`, i.e. `tau = t - shift` with `shift = q (x/x_ref)^2`.
#[derive(Clone, Copy)]
struct Stencil {
    k: isize,
    f: f64,
}

/// The modelling operator for one geometry and q axis, with the gather
/// held trace-major internally.
struct Operator {
    n_t: usize,
    n_x: usize,
    n_q: usize,
    stencils: Vec<Stencil>,
}

impl Operator {
    fn new(geometry: &GatherGeometry, q: &[f64]) -> Result<Self> {
        let x_ref = geometry.max_offset();
        if !(x_ref > 0.0) {
            return Err(Error::Config("Radon transform needs a positive maximum offset".into()));
        }
        let mut stencils = Vec::with_capacity(geometry.n_traces * q.len());
        for &x in &geometry.offsets {
            let r = (x / x_ref).powi(2);
            for &qv in q {
                let neg = -qv * r;
                let k = neg.floor();
                stencils.push(Stencil {
                    k: k as isize,
                    f: neg - k,
                });
            }
        }
        Ok(Operator {
            n_t: geometry.n_samples,
            n_x: geometry.n_traces,
            n_q: q.len(),
            stencils,
        })
    }

    /// Range of `t` for which `t + offset` indexes the panel.
    fn span(&self, offset: isize) -> std::ops::Range<usize> {
        let n = self.n_t as isize;
        (-offset).clamp(0, n) as usize..(n - offset).clamp(0, n) as usize
    }

    /// The stencil's taps as `(offset, weight)`; the second is absent when
    /// the shift is a whole number of samples.
    fn taps(st: Stencil) -> [Option<(isize, f64)>; 2] {
        [Some((st.k, 1.0 - st.f)), (st.f != 0.0).then_some((st.k + 1, st.f))]
    }

    /// Panel (q-major) to gather (trace-major).
    fn forward(&self, m: &[f64], d: &mut [f64]) {
        d.fill(0.0);
        for x in 0..self.n_x {
            let dx = &mut d[x * self.n_t..(x + 1) * self.n_t];
            for iq in 0..self.n_q {
                let mq = &m[iq * self.n_t..(iq + 1) * self.n_t];
                for (o, w) in Self::taps(self.stencils[x * self.n_q + iq]).into_iter().flatten() {
                    let r = self.span(o);
                    let src = &mq[(r.start as isize + o) as usize..(r.end as isize + o) as usize];
                    for (dv, &mv) in dx[r].iter_mut().zip(src) {
                        *dv += w * mv;
                    }
                }
            }
        }
    }

    /// Exact transpose of [`Operator::forward`]. Taps run in reverse so
    /// each panel sample accumulates in the same order as a sweep over `t`.
    fn adjoint(&self, d: &[f64], m: &mut [f64]) {
        m.fill(0.0);
        for iq in 0..self.n_q {
            let mq = &mut m[iq * self.n_t..(iq + 1) * self.n_t];
            for x in 0..self.n_x {
                let dx = &d[x * self.n_t..(x + 1) * self.n_t];
                for (o, w) in Self::taps(self.stencils[x * self.n_q + iq]).into_iter().rev().flatten() {
                    let r = self.span(o);
                    let dst = &mut mq[(r.start as isize + o) as usize..(r.end as isize + o) as usize];
                    for (mv, &dv) in dst.iter_mut().zip(&dx[r]) {
                        *mv += w * dv;
                    }
                }
            }
        }
    }
}

fn to_trace_major(g: &Gather) -> Vec<f64> {
    let (n_t, n_x) = (g.n_samples(), g.n_traces());
    let mut out = vec![0.0; n_t * n_x];
    for (i, &v) in g.data().iter().enumerate() {
        out[(i % n_x) * n_t + i / n_x] = f64::from(v);
    }
    out
}

fn to_time_major(d: &[f64], n_t: usize, n_x: usize) -> Vec<f64> {
    let mut out = vec![0.0; n_t * n_x];
    for x in 0..n_x {
        for t in 0..n_t {
            out[t * n_x + x] = d[x * n_t + t];
        }
    }
    out
}

fn modelled(panel: &RadonPanel, geometry: &GatherGeometry) -> Result<Vec<f64>> {
    if panel.n_tau != geometry.n_samples {
        return Err(Error::shape(
            "radon_model",
            format!("panel has {} taus, gather {} samples", panel.n_tau, geometry.n_samples),
        ));
    }
    let op = Operator::new(geometry, &panel.q)?;
    let mut d = vec![0.0; geometry.len()];
    op.forward(&panel.data, &mut d);
    Ok(to_time_major(&d, geometry.n_samples, geometry.n_traces))
}

/// `d(t, x) = sum_q m(t - q (x/x_ref)^2, q)`, linear interpolation in tau.
pub fn radon_model(panel: &RadonPanel, geometry: &GatherGeometry) -> Result<Gather> {
    let d = modelled(panel, geometry)?;
    Gather::new(geometry.clone(), d.iter().map(|&v| v as f32).collect())
}

/// Exact adjoint of [`radon_model`]: stacking along parabolas.
pub fn radon_adjoint(gather: &Gather, config: &RadonConfig) -> Result<RadonPanel> {
    config.validate()?;
    let op = Operator::new(&gather.geometry, &config.q_axis())?;
    let mut panel = RadonPanel::zeros(gather.n_samples(), config.q_axis());
    op.adjoint(&to_trace_major(gather), &mut panel.data);
    Ok(panel)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    /// `||A x - b|| / ||b||`, recomputed from the returned solution.
    pub relative_residual: f64,
    pub converged: bool,
}

/// Conjugate gradients for a symmetric positive-definite `A` given as a
/// matrix-vector product, starting from zero.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&[f64], &mut [f64]),
    b: &[f64],
    tolerance: f64,
    max_iterations: usize,
) -> (Vec<f64>, CgStats) {
    let n = b.len();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let b_norm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        let stats = CgStats {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        };
        return (x, stats);
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iterations && rr.sqrt() > tolerance * b_norm {
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        iterations += 1;
    }
    apply(&x, &mut ap);
    let true_residual = ap
        .iter()
        .zip(b)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
        / b_norm;
    let stats = CgStats {
        iterations,
        relative_residual: true_residual,
        // the recursive residual can drift below the true one; allow a
        // little slack before calling it a failure
        converged: true_residual <= tolerance * 10.0,
    };
    (x, stats)
}

/// Damped least-squares panel: solves `(L^T L + lambda I) m = L^T d`.
/// Non-convergence is logged and reported in the returned stats.
pub fn radon_invert(gather: &Gather, config: &RadonConfig) -> Result<(RadonPanel, CgStats)> {
    config.validate()?;
    let q = config.q_axis();
    let op = Operator::new(&gather.geometry, &q)?;
    let mut rhs = vec![0.0; gather.n_samples() * q.len()];
    op.adjoint(&to_trace_major(gather), &mut rhs);
    let mut scratch = vec![0.0; gather.geometry.len()];
    let lambda = config.lambda;
    let (data, stats) = conjugate_gradient(
        |m, out| {
            op.forward(m, &mut scratch);
            op.adjoint(&scratch, out);
            for (o, v) in out.iter_mut().zip(m) {
                *o += lambda * v;
            }
        },
        &rhs,
        config.tolerance,
        config.max_iterations,
    );
    if !stats.converged {
        log::warn!(
            "Radon CG stopped after {} iterations at relative residual {:.3e}",
            stats.iterations,
            stats.relative_residual
        );
    }
    let panel = RadonPanel {
        n_tau: gather.n_samples(),
        q,
        data,
    };
    Ok((panel, stats))
}

#[derive(Clone, Debug)]
pub struct RadonDemultiple {
    pub primaries: Gather,
    pub multiples: Gather,
    pub stats: CgStats,
}

/// Inverts, keeps only the `q >= q_mute` part of the panel, models it as
/// the multiple estimate and subtracts. `primaries + multiples`
/// reproduces the input exactly whenever the input lies on its own
/// peak-ulp grid (always true for generated data).
pub fn radon_demultiple(gather: &Gather, config: &RadonConfig) -> Result<RadonDemultiple> {
    let (mut panel, stats) = radon_invert(gather, config)?;
    for iq in 0..panel.q.len() {
        if panel.q[iq] < config.q_mute {
            panel.data[iq * panel.n_tau..(iq + 1) * panel.n_tau].fill(0.0);
        }
    }
    let estimate = modelled(&panel, &gather.geometry)?;
    let (primaries, removed) = split_exact(gather.data(), &estimate);
    Ok(RadonDemultiple {
        primaries: gather.with_data(primaries)?,
        multiples: gather.with_data(removed)?,
        stats,
    })
}
