//! Hamiltonian, suspended and contact flows; the commutator isotopy.
//!
//! Inverse flows are always obtained by integrating backward in time.

use thiserror::Error;

use crate::expr::Var;
use crate::ham::{self, ContactPoint, Coords, HamError, Hamiltonian, PhasePoint};

/// Any coordinate beyond this magnitude truncates a trajectory.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

#[derive(Clone, Debug, PartialEq, Error)]
pub enum FlowError {
    #[error(transparent)]
    Ham(#[from] HamError),
    #[error("step count must be at least 1")]
    ZeroSteps,
    #[error("Störmer-Verlet needs an autonomous separable Hamiltonian, '{0}' is not")]
    NotSeparable(String),
    #[error("trajectory left the finite region near t = {time}")]
    Blowup { time: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Rk4,
    StormerVerlet,
}

/// Which time variable the integration clock drives.
///
/// `First`/`Second` also set `t`, so a Hamiltonian written in `t` still sees
/// the running time; the inactive slot keeps whatever `base` holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActiveTime {
    Single,
    First,
    Second,
}

impl ActiveTime {
    pub fn apply(self, base: Coords, time: f64) -> Coords {
        match self {
            ActiveTime::Single => Coords { t: time, ..base },
            ActiveTime::First => Coords {
                t: time,
                t1: time,
                ..base
            },
            ActiveTime::Second => Coords {
                t: time,
                t2: time,
                ..base
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub step: f64,
    pub samples: Vec<(f64, PhasePoint)>,
    /// `|H(z_end) - H(z_0)|` for autonomous Hamiltonians.
    pub energy_drift: Option<f64>,
    /// Index of the last finite sample when the run was truncated.
    pub blowup: Option<usize>,
}

impl Trajectory {
    pub fn end(&self) -> PhasePoint {
        self.samples.last().map(|s| s.1).unwrap_or_default()
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }
}

pub(crate) fn rk4_step<const N: usize, F>(
    field: &F,
    t: f64,
    y: &[f64; N],
    h: f64,
) -> Result<[f64; N], HamError>
where
    F: Fn(f64, &[f64; N]) -> Result<[f64; N], HamError>,
{
    let shift = |y: &[f64; N], k: &[f64; N], c: f64| {
        let mut out = *y;
        for i in 0..N {
            out[i] += c * k[i];
        }
        out
    };
    let k1 = field(t, y)?;
    let k2 = field(t + 0.5 * h, &shift(y, &k1, 0.5 * h))?;
    let k3 = field(t + 0.5 * h, &shift(y, &k2, 0.5 * h))?;
    let k4 = field(t + h, &shift(y, &k3, h))?;
    let mut out = *y;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    Ok(out)
}

pub(crate) fn escaped<const N: usize>(y: &[f64; N]) -> bool {
    y.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_THRESHOLD)
}

/// Right-hand side of the characteristic system with action transport:
/// `(ẋ, ṗ, Ṡ) = (H_p, -H_x, p H_p - H)`.
pub(crate) fn characteristic_rhs(
    h: &Hamiltonian,
    clock: ActiveTime,
    base: Coords,
) -> impl Fn(f64, &[f64; 3]) -> Result<[f64; 3], HamError> + '_ {
    move |time, y| {
        let c = Coords {
            x: y[0],
            p: y[1],
            ..clock.apply(base, time)
        };
        let hp = h.partial(Var::P, &c)?;
        let hx = h.partial(Var::X, &c)?;
        let hv = h.value(&c)?;
        Ok([hp, -hx, y[1] * hp - hv])
    }
}

/// Integrates `ż = X_H(t, z)` from `t0` to `t1` in `steps` equal steps.
pub fn integrate(
    h: &Hamiltonian,
    z0: PhasePoint,
    t0: f64,
    t1: f64,
    steps: usize,
    scheme: Scheme,
) -> Result<Trajectory, FlowError> {
    integrate_clocked(h, z0, t0, t1, steps, scheme, ActiveTime::Single, Coords::default())
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn integrate_clocked(
    h: &Hamiltonian,
    z0: PhasePoint,
    t0: f64,
    t1: f64,
    steps: usize,
    scheme: Scheme,
    clock: ActiveTime,
    base: Coords,
) -> Result<Trajectory, FlowError> {
    if steps == 0 {
        return Err(FlowError::ZeroSteps);
    }
    if scheme == Scheme::StormerVerlet && !h.is_separable() {
        return Err(FlowError::NotSeparable(h.label().to_string()));
    }
    let step = (t1 - t0) / steps as f64;
    let coords = |time: f64, x: f64, p: f64| Coords {
        x,
        p,
        ..clock.apply(base, time)
    };
    let field = |time: f64, y: &[f64; 2]| -> Result<[f64; 2], HamError> {
        let (dx, dp) = ham::vector_field_at(h, &coords(time, y[0], y[1]))?;
        Ok([dx, dp])
    };

    let mut samples = Vec::with_capacity(steps + 1);
    samples.push((t0, z0));
    let mut y = [z0.x, z0.p];
    let mut blowup = None;
    for i in 0..steps {
        let time = t0 + step * i as f64;
        let next = match scheme {
            Scheme::Rk4 => rk4_step(&field, time, &y, step)?,
            Scheme::StormerVerlet => {
                let c = coords(time, y[0], y[1]);
                let p_half = y[1] - 0.5 * step * h.partial(Var::X, &c)?;
                let x_new = y[0] + step * h.partial(Var::P, &coords(time, y[0], p_half))?;
                let p_new =
                    p_half - 0.5 * step * h.partial(Var::X, &coords(time + step, x_new, p_half))?;
                [x_new, p_new]
            }
        };
        if escaped(&next) {
            blowup = Some(samples.len() - 1);
            break;
        }
        y = next;
        let t_next = if i + 1 == steps { t1 } else { t0 + step * (i + 1) as f64 };
        samples.push((t_next, PhasePoint::new(y[0], y[1])));
    }

    let energy_drift = if h.is_autonomous() && blowup.is_none() {
        let start = h.value(&coords(t0, z0.x, z0.p))?;
        let end = h.value(&coords(t1, y[0], y[1]))?;
        Some((end - start).abs())
    } else {
        None
    };
    Ok(Trajectory {
        scheme,
        step,
        samples,
        energy_drift,
        blowup,
    })
}

/// Time-`duration` map of an autonomous flow, started at time 0. Blowup is
/// an error here.
pub fn flow_map(
    h: &Hamiltonian,
    z: PhasePoint,
    duration: f64,
    steps: usize,
) -> Result<PhasePoint, FlowError> {
    let traj = integrate(h, z, 0.0, duration, steps, Scheme::Rk4)?;
    if traj.blowup.is_some() {
        return Err(FlowError::Blowup {
            time: traj.end_time(),
        });
    }
    Ok(traj.end())
}

/// A point of `T*(ℝ × N)`: time, its conjugate `τ`, and the phase point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SuspendedPoint {
    pub t: f64,
    pub tau: f64,
    pub z: PhasePoint,
}

/// Flow of the suspension `τ + H(t, z)` for time `s`:
/// `(t, τ, z) ↦ (t + s, τ + H(t, z) - H(t + s, z'), z')` with
/// `z' = φ_t^{t+s}(z)`.
pub fn suspended_flow(
    h: &Hamiltonian,
    pt: SuspendedPoint,
    s: f64,
    steps: usize,
) -> Result<SuspendedPoint, FlowError> {
    let traj = integrate(h, pt.z, pt.t, pt.t + s, steps, Scheme::Rk4)?;
    if traj.blowup.is_some() {
        return Err(FlowError::Blowup {
            time: traj.end_time(),
        });
    }
    let z = traj.end();
    let before = h.value(&Coords::phase(pt.z.x, pt.z.p).at_time(pt.t))?;
    let after = h.value(&Coords::phase(z.x, z.p).at_time(pt.t + s))?;
    Ok(SuspendedPoint {
        t: pt.t + s,
        tau: pt.tau + before - after,
        z,
    })
}

/// `φ^t ψ^s φ^{-t} ψ^{-s}(z0)` where `φ` is the flow of `H` and `ψ` of `K`
/// (the rightmost map is applied first).
pub fn commutator_isotopy(
    h: &Hamiltonian,
    k: &Hamiltonian,
    s: f64,
    t: f64,
    z0: PhasePoint,
    steps_per_leg: usize,
) -> Result<PhasePoint, FlowError> {
    if s == 0.0 || t == 0.0 {
        return Ok(z0);
    }
    let z = flow_map(k, z0, -s, steps_per_leg)?;
    let z = flow_map(h, z, -t, steps_per_leg)?;
    let z = flow_map(k, z, s, steps_per_leg)?;
    flow_map(h, z, t, steps_per_leg)
}

/// `L_s(t, z) = H(z) - H(ψ^{-s} φ^{-t}(z))`, the Hamiltonian generating
/// `t ↦ φ^t ψ^s φ^{-t} ψ^{-s}`.
pub fn commutator_hamiltonian(
    h: &Hamiltonian,
    k: &Hamiltonian,
    s: f64,
    t: f64,
    z: PhasePoint,
    steps_per_leg: usize,
) -> Result<f64, FlowError> {
    if s == 0.0 {
        return Ok(0.0);
    }
    let pulled = commutator_pullback(h, k, s, t, z, steps_per_leg)?;
    let here = h.value(&Coords::phase(z.x, z.p))?;
    let there = h.value(&Coords::phase(pulled.x, pulled.p))?;
    Ok(here - there)
}

/// `ψ^{-s} φ^{-t}(z)`.
pub fn commutator_pullback(
    h: &Hamiltonian,
    k: &Hamiltonian,
    s: f64,
    t: f64,
    z: PhasePoint,
    steps_per_leg: usize,
) -> Result<PhasePoint, FlowError> {
    let y = if t == 0.0 { z } else { flow_map(h, z, -t, steps_per_leg)? };
    if s == 0.0 {
        Ok(y)
    } else {
        flow_map(k, y, -s, steps_per_leg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactTrajectory {
    pub step: f64,
    pub samples: Vec<(f64, ContactPoint)>,
    pub blowup: Option<usize>,
}

impl ContactTrajectory {
    pub fn end(&self) -> ContactPoint {
        self.samples.last().map(|s| s.1).unwrap_or_default()
    }
}

/// RK4 integration of the contact field of `H(x, p, u)`.
pub fn contact_integrate(
    h: &Hamiltonian,
    pt0: ContactPoint,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<ContactTrajectory, FlowError> {
    if steps == 0 {
        return Err(FlowError::ZeroSteps);
    }
    let step = (t1 - t0) / steps as f64;
    let field = |time: f64, y: &[f64; 3]| -> Result<[f64; 3], HamError> {
        let c = Coords {
            t: time,
            x: y[0],
            p: y[1],
            u: y[2],
            ..Default::default()
        };
        let (du, dx, dp) = ham::contact_field_at(h, &c)?;
        Ok([dx, dp, du])
    };
    let mut samples = Vec::with_capacity(steps + 1);
    samples.push((t0, pt0));
    let mut y = [pt0.x, pt0.p, pt0.u];
    let mut blowup = None;
    for i in 0..steps {
        let next = rk4_step(&field, t0 + step * i as f64, &y, step)?;
        if escaped(&next) {
            blowup = Some(samples.len() - 1);
            break;
        }
        y = next;
        let t_next = if i + 1 == steps { t1 } else { t0 + step * (i + 1) as f64 };
        samples.push((t_next, ContactPoint::new(y[0], y[1], y[2])));
    }
    Ok(ContactTrajectory {
        step,
        samples,
        blowup,
    })
}
