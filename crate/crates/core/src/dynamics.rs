//! Planar open-chain rigid-body dynamics.
//!
//! A [`Chain`] is a serial list of links hinged by revolute joints about the
//! sagittal normal. The first joint is fixed to the ground at `base`. Joint
//! angles are relative: the absolute angle of link `i` is the sum of
//! `q[0..=i]`, measured counter-clockwise from the forward horizontal axis.
//! Torques are counter-clockwise positive and gravity points along `-y`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::anthro::{BodyModel, SEGMENT_COUNT};
use crate::error::{Error, Result};

pub const DEFAULT_GRAVITY: f64 = 9.81;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub length: f64,
    pub mass: f64,
    /// COM distance from the proximal joint along the link axis.
    pub com: f64,
    /// Rotational inertia about the COM.
    pub inertia: f64,
}

impl Link {
    pub fn point_mass(mass: f64, length: f64) -> Self {
        Self {
            length,
            mass,
            com: length,
            inertia: 0.0,
        }
    }

    /// Rigidly merges `other` into this link. Both bodies lie on the same axis.
    pub fn merged(&self, other: &Link) -> Link {
        let mass = self.mass + other.mass;
        if mass == 0.0 {
            return Link {
                length: self.length,
                ..*self
            };
        }
        let com = (self.mass * self.com + other.mass * other.com) / mass;
        let inertia = self.inertia
            + self.mass * (self.com - com).powi(2)
            + other.inertia
            + other.mass * (other.com - com).powi(2);
        Link {
            length: self.length,
            mass,
            com,
            inertia,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub links: Vec<Link>,
    pub base: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComPoint {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointState {
    pub q: [f64; SEGMENT_COUNT],
    pub qd: [f64; SEGMENT_COUNT],
    pub qdd: [f64; SEGMENT_COUNT],
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TorqueVector {
    pub tau: [f64; SEGMENT_COUNT],
}

fn check_finite(label: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("{label} contains non-finite entries")))
    }
}

#[inline]
fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

impl Chain {
    pub fn new(links: Vec<Link>) -> Self {
        Self {
            links,
            base: [0.0, 0.0],
        }
    }

    pub fn with_base(mut self, base: [f64; 2]) -> Self {
        self.base = base;
        self
    }

    pub fn dof(&self) -> usize {
        self.links.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    fn check_len(&self, label: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.dof() {
            return Err(Error::Numeric(format!(
                "{label} has {} entries, chain has {} joints",
                v.len(),
                self.dof()
            )));
        }
        Ok(())
    }

    /// Absolute link angles.
    pub fn absolute_angles(&self, q: &[f64]) -> Vec<f64> {
        q.iter()
            .scan(0.0, |acc, qi| {
                *acc += qi;
                Some(*acc)
            })
            .collect()
    }

    /// Proximal joint positions, followed by the chain tip (`dof + 1` points).
    pub fn joint_positions(&self, q: &[f64]) -> Vec<[f64; 2]> {
        let th = self.absolute_angles(q);
        let mut out = Vec::with_capacity(self.dof() + 1);
        let mut p = self.base;
        out.push(p);
        for (link, t) in self.links.iter().zip(th.iter()) {
            p = [p[0] + link.length * t.cos(), p[1] + link.length * t.sin()];
            out.push(p);
        }
        out
    }

    pub fn com_positions(&self, q: &[f64]) -> Vec<[f64; 2]> {
        let th = self.absolute_angles(q);
        let joints = self.joint_positions(q);
        self.links
            .iter()
            .zip(th.iter().zip(joints.iter()))
            .map(|(l, (t, p))| [p[0] + l.com * t.cos(), p[1] + l.com * t.sin()])
            .collect()
    }

    pub fn potential_energy(&self, q: &[f64], gravity: f64) -> f64 {
        self.links
            .iter()
            .zip(self.com_positions(q))
            .map(|(l, c)| l.mass * gravity * c[1])
            .sum()
    }

    pub fn kinetic_energy(&self, q: &[f64], qd: &[f64]) -> f64 {
        let m = self.mass_matrix(q).unwrap_or_else(|_| DMatrix::zeros(self.dof(), self.dof()));
        let v = DVector::from_column_slice(qd);
        0.5 * (v.transpose() * &m * &v)[(0, 0)]
    }

    /// Recursive Newton-Euler inverse dynamics.
    pub fn inverse_dynamics(&self, q: &[f64], qd: &[f64], qdd: &[f64], gravity: f64) -> Result<Vec<f64>> {
        for (label, v) in [("q", q), ("qd", qd), ("qdd", qdd)] {
            self.check_len(label, v)?;
            check_finite(label, v)?;
        }
        if !gravity.is_finite() {
            return Err(Error::Numeric("gravity".into()));
        }
        let n = self.dof();
        let th = self.absolute_angles(q);
        // Outward pass: angular rates and COM/joint accelerations in the world frame.
        // Gravity enters as an upward base acceleration.
        let mut omega = 0.0;
        let mut alpha = 0.0;
        let mut acc_joint = [0.0, gravity];
        let mut acc_com = vec![[0.0; 2]; n];
        let mut alphas = vec![0.0; n];
        for i in 0..n {
            omega += qd[i];
            alpha += qdd[i];
            alphas[i] = alpha;
            let (s, c) = th[i].sin_cos();
            let l = &self.links[i];
            let tangent = [-s, c];
            let axis = [c, s];
            acc_com[i] = [
                acc_joint[0] + l.com * (alpha * tangent[0] - omega * omega * axis[0]),
                acc_joint[1] + l.com * (alpha * tangent[1] - omega * omega * axis[1]),
            ];
            acc_joint = [
                acc_joint[0] + l.length * (alpha * tangent[0] - omega * omega * axis[0]),
                acc_joint[1] + l.length * (alpha * tangent[1] - omega * omega * axis[1]),
            ];
        }
        // Inward pass: force carried across each joint and moment about it.
        let mut tau = vec![0.0; n];
        let mut f_child = [0.0; 2];
        let mut n_child = 0.0;
        for i in (0..n).rev() {
            let l = &self.links[i];
            let (s, c) = th[i].sin_cos();
            let f_body = [l.mass * acc_com[i][0], l.mass * acc_com[i][1]];
            let r_com = [l.com * c, l.com * s];
            let r_end = [l.length * c, l.length * s];
            let f = [f_body[0] + f_child[0], f_body[1] + f_child[1]];
            let moment = l.inertia * alphas[i] + cross(r_com, f_body) + n_child + cross(r_end, f_child);
            tau[i] = moment;
            f_child = f;
            n_child = moment;
        }
        Ok(tau)
    }

    /// Joint-space inertia matrix, one inverse-dynamics call per column.
    pub fn mass_matrix(&self, q: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len("q", q)?;
        check_finite("q", q)?;
        let n = self.dof();
        let zeros = vec![0.0; n];
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = 0.0);
            e[j] = 1.0;
            let col = self.inverse_dynamics(q, &zeros, &e, 0.0)?;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        Ok(m)
    }

    pub fn bias_forces(&self, q: &[f64], qd: &[f64], gravity: f64) -> Result<Vec<f64>> {
        self.inverse_dynamics(q, qd, &vec![0.0; self.dof()], gravity)
    }

    pub fn gravity_torques(&self, q: &[f64], gravity: f64) -> Result<Vec<f64>> {
        let zeros = vec![0.0; self.dof()];
        self.inverse_dynamics(q, &zeros, &zeros, gravity)
    }

    pub fn forward_dynamics(&self, q: &[f64], qd: &[f64], tau: &[f64], gravity: f64) -> Result<Vec<f64>> {
        self.check_len("tau", tau)?;
        check_finite("tau", tau)?;
        let m = self.mass_matrix(q)?;
        let bias = self.bias_forces(q, qd, gravity)?;
        let rhs = DVector::from_iterator(self.dof(), tau.iter().zip(bias.iter()).map(|(t, b)| t - b));
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Singularity("mass matrix is not positive definite".into()))?;
        Ok(chol.solve(&rhs).iter().copied().collect())
    }

    /// Whole-chain COM as a mass-weighted sum of homogeneous link transforms
    /// applied to each link's local COM.
    pub fn sesc_com(&self, q: &[f64]) -> Result<ComPoint> {
        self.check_len("q", q)?;
        check_finite("q", q)?;
        let total = self.total_mass();
        if total <= 0.0 {
            return Err(Error::Singularity("total mass is zero".into()));
        }
        let mut frame = Matrix3::new(1.0, 0.0, self.base[0], 0.0, 1.0, self.base[1], 0.0, 0.0, 1.0);
        let mut acc = Vector3::zeros();
        for (link, qi) in self.links.iter().zip(q.iter()) {
            let (s, c) = qi.sin_cos();
            // Rotate about the proximal joint.
            frame *= Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
            acc += (link.mass / total) * (frame * Vector3::new(link.com, 0.0, 1.0));
            // Translate to the distal joint.
            frame *= Matrix3::new(1.0, 0.0, link.length, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        }
        Ok(ComPoint { x: acc[0], y: acc[1] })
    }

    /// One classical RK4 step of the unforced-plus-`tau` dynamics.
    pub fn rk4_step(&self, q: &[f64], qd: &[f64], tau: &[f64], gravity: f64, dt: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = self.dof();
        let axpy = |x: &[f64], k: &[f64], h: f64| -> Vec<f64> { x.iter().zip(k).map(|(a, b)| a + h * b).collect() };
        let k1q = qd.to_vec();
        let k1v = self.forward_dynamics(q, qd, tau, gravity)?;
        let q2 = axpy(q, &k1q, dt / 2.0);
        let v2 = axpy(qd, &k1v, dt / 2.0);
        let k2q = v2.clone();
        let k2v = self.forward_dynamics(&q2, &v2, tau, gravity)?;
        let q3 = axpy(q, &k2q, dt / 2.0);
        let v3 = axpy(qd, &k2v, dt / 2.0);
        let k3q = v3.clone();
        let k3v = self.forward_dynamics(&q3, &v3, tau, gravity)?;
        let q4 = axpy(q, &k3q, dt);
        let v4 = axpy(qd, &k3v, dt);
        let k4q = v4.clone();
        let k4v = self.forward_dynamics(&q4, &v4, tau, gravity)?;
        let mut qn = vec![0.0; n];
        let mut vn = vec![0.0; n];
        for i in 0..n {
            qn[i] = q[i] + dt / 6.0 * (k1q[i] + 2.0 * k2q[i] + 2.0 * k3q[i] + k4q[i]);
            vn[i] = qd[i] + dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        Ok((qn, vn))
    }
}

fn to_array(v: Vec<f64>) -> [f64; SEGMENT_COUNT] {
    let mut out = [0.0; SEGMENT_COUNT];
    out.copy_from_slice(&v);
    out
}

pub fn inverse_dynamics(model: &BodyModel, state: &JointState, gravity: f64) -> Result<TorqueVector> {
    let tau = model
        .chain()
        .inverse_dynamics(&state.q, &state.qd, &state.qdd, gravity)?;
    Ok(TorqueVector { tau: to_array(tau) })
}

pub fn mass_matrix(model: &BodyModel, q: &[f64; SEGMENT_COUNT]) -> Result<DMatrix<f64>> {
    model.chain().mass_matrix(q)
}

pub fn bias_forces(
    model: &BodyModel,
    q: &[f64; SEGMENT_COUNT],
    qd: &[f64; SEGMENT_COUNT],
    gravity: f64,
) -> Result<TorqueVector> {
    let tau = model.chain().bias_forces(q, qd, gravity)?;
    Ok(TorqueVector { tau: to_array(tau) })
}

pub fn forward_dynamics(
    model: &BodyModel,
    q: &[f64; SEGMENT_COUNT],
    qd: &[f64; SEGMENT_COUNT],
    tau: &TorqueVector,
    gravity: f64,
) -> Result<[f64; SEGMENT_COUNT]> {
    model
        .chain()
        .forward_dynamics(q, qd, &tau.tau, gravity)
        .map(to_array)
}

pub fn sesc_com(model: &BodyModel, q: &[f64; SEGMENT_COUNT]) -> Result<ComPoint> {
    model.chain().sesc_com(q)
}
