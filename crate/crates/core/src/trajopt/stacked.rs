//! The control problem flattened into a generic NLP over
//! `z = (x_0, u_0, x_1, u_1, …, x_N)`, with equalities `(x_0 − x̄_0, f_0, …)`
//! and inequalities `(h_0, …, h_{N−1}, h_N)`. Dense, so only meant for small
//! horizons and cross-checks.

use nalgebra::{DMatrix, DVector};

use super::{TrajOptProblem, Trajectory};
use crate::error::{check_len, Result};
use crate::nlp::{NlpIterate, NlpProblem};

#[derive(Debug, Clone)]
pub struct StackedNlp {
    pub problem: TrajOptProblem,
    x_off: Vec<usize>,
    u_off: Vec<usize>,
    eq_off: Vec<usize>,
    ineq_off: Vec<usize>,
    n: usize,
    ne: usize,
    ni: usize,
}

pub fn stacked_nlp_view(problem: &TrajOptProblem) -> StackedNlp {
    let horizon = problem.horizon();
    let (mut x_off, mut u_off, mut eq_off, mut ineq_off) = (vec![], vec![], vec![], vec![]);
    let (mut n, mut ne, mut ni) = (0, 0, 0);
    for k in 0..=horizon {
        x_off.push(n);
        n += problem.nx_at(k);
        if k < horizon {
            u_off.push(n);
            n += problem.stages[k].nu();
        }
        eq_off.push(ne);
        ne += problem.nx_at(k);
        ineq_off.push(ni);
        ni += problem.nh_at(k);
    }
    StackedNlp {
        problem: problem.clone(),
        x_off,
        u_off,
        eq_off,
        ineq_off,
        n,
        ne,
        ni,
    }
}

impl StackedNlp {
    fn horizon(&self) -> usize {
        self.problem.horizon()
    }

    fn x(&self, z: &DVector<f64>, k: usize) -> DVector<f64> {
        z.rows(self.x_off[k], self.problem.nx_at(k)).into_owned()
    }

    fn u(&self, z: &DVector<f64>, k: usize) -> DVector<f64> {
        z.rows(self.u_off[k], self.problem.stages[k].nu()).into_owned()
    }

    pub fn to_trajectory(&self, it: &NlpIterate) -> Result<Trajectory> {
        check_len("z", it.x.len(), self.n)?;
        check_len("lambda", it.lam.len(), self.ne)?;
        check_len("nu", it.nu.len(), self.ni)?;
        let n = self.horizon();
        Ok(Trajectory {
            xs: (0..=n).map(|k| self.x(&it.x, k)).collect(),
            us: (0..n).map(|k| self.u(&it.x, k)).collect(),
            lams: (0..=n)
                .map(|k| it.lam.rows(self.eq_off[k], self.problem.nx_at(k)).into_owned())
                .collect(),
            nus: (0..=n)
                .map(|k| it.nu.rows(self.ineq_off[k], self.problem.nh_at(k)).into_owned())
                .collect(),
        })
    }

    pub fn from_trajectory(&self, t: &Trajectory) -> Result<NlpIterate> {
        t.check_dims(&self.problem)?;
        let n = self.horizon();
        let mut z = DVector::zeros(self.n);
        let mut lam = DVector::zeros(self.ne);
        let mut nu = DVector::zeros(self.ni);
        for k in 0..=n {
            z.rows_mut(self.x_off[k], t.xs[k].len()).copy_from(&t.xs[k]);
            lam.rows_mut(self.eq_off[k], t.lams[k].len()).copy_from(&t.lams[k]);
            nu.rows_mut(self.ineq_off[k], t.nus[k].len()).copy_from(&t.nus[k]);
            if k < n {
                z.rows_mut(self.u_off[k], t.us[k].len()).copy_from(&t.us[k]);
            }
        }
        Ok(NlpIterate::new(z, lam, nu))
    }
}

impl NlpProblem for StackedNlp {
    fn n(&self) -> usize {
        self.n
    }
    fn ne(&self) -> usize {
        self.ne
    }
    fn ni(&self) -> usize {
        self.ni
    }

    fn objective(&self, z: &DVector<f64>) -> Result<f64> {
        let n = self.horizon();
        let mut f = self.problem.terminal.cost(&self.x(z, n))?;
        for (k, s) in self.problem.stages.iter().enumerate() {
            f += s.cost(&self.x(z, k), &self.u(z, k))?;
        }
        Ok(f)
    }

    fn gradient(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.horizon();
        let mut g = DVector::zeros(self.n);
        for (k, s) in self.problem.stages.iter().enumerate() {
            let d = s.cost_derivatives(&self.x(z, k), &self.u(z, k))?;
            g.rows_mut(self.x_off[k], s.nx()).copy_from(&d.lx);
            g.rows_mut(self.u_off[k], s.nu()).copy_from(&d.lu);
        }
        let (lx, _) = self.problem.terminal.cost_derivatives(&self.x(z, n))?;
        g.rows_mut(self.x_off[n], lx.len()).copy_from(&lx);
        Ok(g)
    }

    fn equalities(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let mut c = DVector::zeros(self.ne);
        c.rows_mut(0, self.problem.x0_bar.len())
            .copy_from(&(self.x(z, 0) - &self.problem.x0_bar));
        for (k, s) in self.problem.stages.iter().enumerate() {
            let f = s.dynamics(&self.x(z, k), &self.u(z, k), &self.x(z, k + 1))?;
            c.rows_mut(self.eq_off[k + 1], s.nx_next()).copy_from(&f);
        }
        Ok(c)
    }

    fn equality_jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut j = DMatrix::zeros(self.ne, self.n);
        let nx0 = self.problem.x0_bar.len();
        j.view_mut((0, 0), (nx0, nx0)).fill_with_identity();
        for (k, s) in self.problem.stages.iter().enumerate() {
            let d = s.dynamics_jacobians(&self.x(z, k), &self.u(z, k), &self.x(z, k + 1))?;
            let r = self.eq_off[k + 1];
            let ny = s.nx_next();
            j.view_mut((r, self.x_off[k]), (ny, s.nx())).copy_from(&d.fx);
            j.view_mut((r, self.u_off[k]), (ny, s.nu())).copy_from(&d.fu);
            j.view_mut((r, self.x_off[k + 1]), (ny, ny)).copy_from(&d.fy);
        }
        Ok(j)
    }

    fn inequalities(&self, z: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.horizon();
        let mut h = DVector::zeros(self.ni);
        for (k, s) in self.problem.stages.iter().enumerate() {
            h.rows_mut(self.ineq_off[k], s.nh())
                .copy_from(&s.constraints(&self.x(z, k), &self.u(z, k))?);
        }
        let hn = self.problem.terminal.constraints(&self.x(z, n))?;
        h.rows_mut(self.ineq_off[n], hn.len()).copy_from(&hn);
        Ok(h)
    }

    fn inequality_jacobian(&self, z: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = self.horizon();
        let mut j = DMatrix::zeros(self.ni, self.n);
        for (k, s) in self.problem.stages.iter().enumerate() {
            let d = s.constraint_jacobians(&self.x(z, k), &self.u(z, k))?;
            let r = self.ineq_off[k];
            j.view_mut((r, self.x_off[k]), (s.nh(), s.nx())).copy_from(&d.hx);
            j.view_mut((r, self.u_off[k]), (s.nh(), s.nu())).copy_from(&d.hu);
        }
        let t = &self.problem.terminal;
        let hx = t.constraint_jacobian(&self.x(z, n))?;
        j.view_mut((self.ineq_off[n], self.x_off[n]), (t.nh(), t.nx())).copy_from(&hx);
        Ok(j)
    }

    fn lagrangian_hessian(
        &self,
        z: &DVector<f64>,
        lam: &DVector<f64>,
        nu: &DVector<f64>,
    ) -> Result<DMatrix<f64>> {
        let n = self.horizon();
        let mut h = DMatrix::zeros(self.n, self.n);
        let curvature = lam.iter().chain(nu.iter()).any(|&v| v != 0.0);
        for (k, s) in self.problem.stages.iter().enumerate() {
            let (x, u) = (self.x(z, k), self.u(z, k));
            let d = s.cost_derivatives(&x, &u)?;
            let (xo, uo, nx, nu_k) = (self.x_off[k], self.u_off[k], s.nx(), s.nu());
            let mut blk = |r: usize, c: usize, m: &DMatrix<f64>| {
                let mut v = h.view_mut((r, c), m.shape());
                v += m;
            };
            blk(xo, xo, &d.lxx);
            blk(uo, xo, &d.lux);
            blk(xo, uo, &d.lux.transpose());
            blk(uo, uo, &d.luu);
            if curvature {
                let y = self.x(z, k + 1);
                let lam_k = lam.rows(self.eq_off[k + 1], s.nx_next()).into_owned();
                let nu_k_v = nu.rows(self.ineq_off[k], s.nh()).into_owned();
                if let Some(c) = s.constraint_curvature(&x, &u, &y, &lam_k, &nu_k_v)? {
                    // z-block ordering (x, u, y) matches the stacked layout
                    // since u_k directly follows x_k and x_{k+1} follows u_k.
                    let nz = nx + nu_k + s.nx_next();
                    let mut v = h.view_mut((xo, xo), (nz, nz));
                    v += c;
                }
            }
        }
        let t = &self.problem.terminal;
        let xn = self.x(z, n);
        let (_, lxx) = t.cost_derivatives(&xn)?;
        let xo = self.x_off[n];
        let mut v = h.view_mut((xo, xo), lxx.shape());
        v += &lxx;
        if curvature {
            let nu_n = nu.rows(self.ineq_off[n], t.nh()).into_owned();
            if let Some(c) = t.constraint_curvature(&xn, &nu_n)? {
                let mut v = h.view_mut((xo, xo), c.shape());
                v += c;
            }
        }
        Ok(h)
    }
}
