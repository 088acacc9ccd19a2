//! Steepest descent of `F̄ = -F` inside the parameter box and the
//! face-exit bookkeeping of the confinement argument.
//!
//! Trajectories are integrated in box coordinates `t ∈ [-1, 1]³`, so each
//! axis is measured in units of its own half-width.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::eval_constants;
use crate::error::{param, Result};
use crate::potentials::RadialPotential;
use crate::reduced::{scaled_objective, Normalized, ParameterBox, FACE_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowOptions {
    /// Margin `η` in the lower level `t1`.
    pub eta: f64,
    /// `η0` in the upper level `t2`, as a fraction of `A1`.
    pub eta0_frac: f64,
    pub max_time: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_steps: usize,
    /// Stop once the box-coordinate gradient falls below this.
    pub stall_grad: f64,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            eta: 0.05,
            eta0_frac: 0.1,
            max_time: 1e4,
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_steps: 200_000,
            stall_grad: 1e-9,
        }
    }
}

impl FlowOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !(self.eta0_frac > 0.0) {
            return Err(param("eta", "need eta > 0 and eta0 > 0"));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_time > 0.0) {
            return Err(param("rel_tol", "tolerances and max_time must be positive"));
        }
        Ok(())
    }
}

/// The two energy levels of the confinement argument for `F̄`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowLevels {
    pub t1: f64,
    pub t2: f64,
    pub eta: f64,
    pub eta0: f64,
}

/// `t2 = k(-A1 + η0)` and `t1 = k(-A1 - (1+η) A3 (r0²V(r0))^{(N-2)/(N-4)} k^{-2(N-2)/(N-4)})`.
pub fn flow_levels(bx: &ParameterBox, v: &dyn RadialPotential, opts: &FlowOptions) -> FlowLevels {
    let c = eval_constants(bx.dim);
    let kf = bx.k as f64;
    let b = bx.dim.mu_exponent();
    let eta0 = opts.eta0_frac * c.a1;
    let r2v = bx.r0 * bx.r0 * v.value(bx.r0);
    FlowLevels {
        t1: kf * (-c.a1 - (1.0 + opts.eta) * c.a3() * r2v.powf(b) * kf.powf(-2.0 * b)),
        t2: kf * (-c.a1 + eta0),
        eta: opts.eta,
        eta0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowPoint {
    pub t: f64,
    pub r: f64,
    pub h: f64,
    pub mu: f64,
    /// `F̄ = -F`.
    pub f_bar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowOutcome {
    ReachedT1,
    ExitedFace { face: String },
    /// Converged to a stationary point above `t1`.
    Stalled,
    TimeLimit,
    StepUnderflow { t: f64 },
}

impl FlowOutcome {
    /// Exit through an h- or μ-face.
    pub fn is_escape(&self) -> bool {
        matches!(self, FlowOutcome::ExitedFace { face } if !face.starts_with('r'))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub start: [f64; 3],
    pub outcome: FlowOutcome,
    pub points: Vec<FlowPoint>,
}

impl Trajectory {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| crate::Error::Io(e.to_string());
        w.write_record(["t", "r", "h", "mu", "F"]).map_err(io)?;
        for p in &self.points {
            w.serialize((p.t, p.r, p.h, p.mu, p.f_bar)).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| crate::Error::Io(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub levels: FlowLevels,
    pub trajectories: Vec<Trajectory>,
    pub escapes: usize,
    pub reached_t1: usize,
    pub r_exits: usize,
}

struct Field<'a> {
    nz: Normalized<'a>,
    /// `F̄ = offset - scale·G`, with `G` the scaled varying part of `F`.
    offset: f64,
    scale: f64,
    bx: &'a ParameterBox,
    v: &'a dyn RadialPotential,
}

impl Field<'_> {
    /// Descent direction of `F̄` in box coordinates.
    fn rhs(&self, t: &[f64; 3]) -> [f64; 3] {
        let (_, g) = self.nz.eval(t);
        [-g[0], -g[1], -g[2]]
    }

    fn f_bar(&self, t: &[f64; 3]) -> f64 {
        let (g, _) = scaled_objective(self.bx, self.v, self.nz.to_u(t));
        self.offset - self.scale * g
    }

    fn point(&self, time: f64, t: &[f64; 3]) -> FlowPoint {
        let x = self.bx.from_scaled(self.nz.to_u(t));
        FlowPoint { t: time, r: x[0], h: x[1], mu: x[2], f_bar: self.f_bar(t) }
    }
}

// Dormand–Prince 5(4) tableau; the field is autonomous, so the nodes are not needed
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [5179.0 / 57600.0, 0.0, 7571.0 / 16695.0, 393.0 / 640.0, -92097.0 / 339200.0, 187.0 / 2100.0, 1.0 / 40.0];

/// One embedded step; returns the fifth-order state and the error estimate.
fn dp_step(field: &Field, y: &[f64; 3], dt: f64) -> ([f64; 3], [f64; 3]) {
    let mut k = [[0.0; 3]; 7];
    k[0] = field.rhs(y);
    for s in 1..7 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s) {
            for i in 0..3 {
                ys[i] += dt * A[s][j] * kj[i];
            }
        }
        k[s] = field.rhs(&ys);
    }
    let mut y5 = *y;
    let mut err = [0.0; 3];
    for s in 0..7 {
        for i in 0..3 {
            y5[i] += dt * B5[s] * k[s][i];
            err[i] += dt * (B5[s] - B4[s]) * k[s][i];
        }
    }
    (y5, err)
}

/// First face crossed on the segment `a → b`, in box coordinates.
fn exit_face(a: &[f64; 3], b: &[f64; 3]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..3 {
        for (side, bound) in [(0usize, -1.0), (1, 1.0)] {
            let outside = if side == 0 { b[i] < bound } else { b[i] > bound };
            if outside {
                let frac = ((bound - a[i]) / (b[i] - a[i])).clamp(0.0, 1.0);
                if best.is_none_or(|(_, f)| frac < f) {
                    best = Some((2 * i + side, frac));
                }
            }
        }
    }
    best
}

fn integrate(field: &Field, start: [f64; 3], t1: f64, opts: &FlowOptions) -> Trajectory {
    let mut y = start;
    let mut time = 0.0;
    let mut dt = 1e-3;
    let mut points = vec![field.point(0.0, &y)];
    let mut steps = 0;
    let outcome = loop {
        if field.f_bar(&y) <= t1 {
            break FlowOutcome::ReachedT1;
        }
        let g = field.rhs(&y);
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < opts.stall_grad {
            break FlowOutcome::Stalled;
        }
        if time >= opts.max_time || steps >= opts.max_steps {
            break FlowOutcome::TimeLimit;
        }
        if dt < 1e-14 * (1.0 + time) {
            break FlowOutcome::StepUnderflow { t: time };
        }
        let step = dt.min(opts.max_time - time);
        let (yn, err) = dp_step(field, &y, step);
        let e = (0..3)
            .map(|i| err[i].abs() / (opts.abs_tol + opts.rel_tol * y[i].abs().max(yn[i].abs())))
            .fold(0.0f64, f64::max);
        if e <= 1.0 {
            steps += 1;
            if let Some((face, frac)) = exit_face(&y, &yn) {
                let yf = [0, 1, 2].map(|i| y[i] + frac * (yn[i] - y[i]));
                points.push(field.point(time + frac * step, &yf));
                break FlowOutcome::ExitedFace { face: FACE_NAMES[face].to_string() };
            }
            time += step;
            y = yn;
            points.push(field.point(time, &y));
        }
        let factor = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
        dt = step * factor;
    };
    Trajectory { start: field.bx.from_scaled(field.nz.to_u(&start)), outcome, points }
}

/// Integrates the descent flow of `F̄` from each start point (given in raw
/// `(r, h, μ)`) until it drops below `t1`, leaves the box, or stalls.
pub fn flow_confinement(
    bx: &ParameterBox,
    v: &dyn RadialPotential,
    starts: &[[f64; 3]],
    opts: &FlowOptions,
) -> Result<FlowReport> {
    opts.validate()?;
    let levels = flow_levels(bx, v, opts);
    let c = eval_constants(bx.dim);
    let kf = bx.k as f64;
    let field = Field {
        nz: Normalized::new(bx, v),
        offset: -kf * c.a1,
        scale: kf.powf(1.0 - 2.0 * bx.dim.mu_exponent()),
        bx,
        v,
    };
    let mut ts = Vec::with_capacity(starts.len());
    for s in starts {
        if !bx.contains(*s) {
            return Err(param("start", format!("start point {s:?} lies outside the box")));
        }
        let u = bx.to_scaled(*s);
        let t = [0, 1, 2].map(|i| {
            let (lo, hi) = (bx.scaled_lo()[i], bx.scaled_hi()[i]);
            2.0 * (u[i] - lo) / (hi - lo) - 1.0
        });
        if field.f_bar(&t) > levels.t2 {
            return Err(param("start", format!("start point {s:?} lies above the level t2")));
        }
        ts.push(t);
    }
    let trajectories: Vec<Trajectory> = ts.par_iter().map(|t| integrate(&field, *t, levels.t1, opts)).collect();
    let count = |p: &dyn Fn(&FlowOutcome) -> bool| trajectories.iter().filter(|tr| p(&tr.outcome)).count();
    Ok(FlowReport {
        levels,
        escapes: count(&FlowOutcome::is_escape),
        reached_t1: count(&|o| *o == FlowOutcome::ReachedT1),
        r_exits: count(&|o| matches!(o, FlowOutcome::ExitedFace { face } if face.starts_with('r'))),
        trajectories,
    })
}

/// `count` start points drawn uniformly in the box from `seed`.
pub fn random_starts(bx: &ParameterBox, count: usize, seed: u64) -> Vec<[f64; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            [
                rng.random_range(bx.r.lo..=bx.r.hi),
                rng.random_range(bx.h.lo..=bx.h.hi),
                rng.random_range(bx.mu.lo..=bx.mu.hi),
            ]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Dimension;
    use crate::potentials::Potential;
    use crate::reduced::{make_boxes, AxisWidths, Interval, WidthMode};

    fn dip_box() -> (ParameterBox, Potential) {
        let v = Potential::bump_critical_at(1.0, 1.0, 2.0, 0.2).unwrap();
        let fb = AxisWidths { r: 0.1, h: 0.1, mu: 0.1 };
        let bx = make_boxes(Dimension::new(6).unwrap(), 128, 1.0, &v, WidthMode::Shrinking { fallback: fb }).unwrap();
        (bx, v)
    }

    #[test]
    fn random_starts_stay_confined() {
        let (bx, v) = dip_box();
        let starts = random_starts(&bx, 10, 7);
        let rep = flow_confinement(&bx, &v, &starts, &FlowOptions::default()).unwrap();
        assert_eq!(rep.escapes, 0, "{:?}", rep.trajectories.iter().map(|t| &t.outcome).collect::<Vec<_>>());
    }

    #[test]
    fn centre_start_does_not_escape() {
        let (bx, v) = dip_box();
        let rep = flow_confinement(&bx, &v, &[bx.center()], &FlowOptions::default()).unwrap();
        assert!(!rep.trajectories[0].outcome.is_escape());
        let last = rep.trajectories[0].points.last().unwrap();
        assert!(bx.contains([last.r, last.h, last.mu]));
    }

    #[test]
    fn shifted_box_is_detected() {
        // h-interval placed below the optimum and r pinned, so t1 cannot be
        // reached through r: the flow must leave through h_hi
        let v = Potential::bump_critical_at(1.0, 1.0, 2.0, 0.2).unwrap();
        let d6 = Dimension::new(6).unwrap();
        let w = AxisWidths { r: 1e-4, h: 0.05, mu: 0.05 };
        let mut bx = make_boxes(d6, 128, 1.0, &v, WidthMode::PerAxis(w)).unwrap();
        let hs = 128f64.powf(-0.6);
        bx.h0 *= 0.7;
        bx.h = Interval { lo: (bx.h0 - w.h) * hs, hi: (bx.h0 + w.h) * hs };
        let rep = flow_confinement(&bx, &v, &[bx.center()], &FlowOptions::default()).unwrap();
        assert_eq!(rep.trajectories[0].outcome, FlowOutcome::ExitedFace { face: "h_hi".into() });
        assert_eq!(rep.escapes, 1);
    }

    #[test]
    fn csv_export() {
        let (bx, v) = dip_box();
        let rep = flow_confinement(&bx, &v, &[bx.center()], &FlowOptions::default()).unwrap();
        let csv = rep.trajectories[0].to_csv().unwrap();
        assert!(csv.starts_with("t,r,h,mu,F\n"));
        assert_eq!(csv.lines().count(), rep.trajectories[0].points.len() + 1);
    }
}
