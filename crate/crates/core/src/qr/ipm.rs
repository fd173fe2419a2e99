//! Primal-dual interior point method (Mehrotra predictor-corrector) for
//! stacked linear quantile regressions with optional non-crossing
//! constraints.
//!
//! The solver works on the bounded dual of the check-loss problem
//!
//! ```text
//!   max  yᵀa          s.t.  Aᵀa + Rᵀλ = Aᵀ(1 − τ),  0 ≤ a ≤ 1,  λ ≥ 0
//! ```
//!
//! where `A` is block diagonal with one copy of the design per level and each
//! row of `R` encodes one active constraint `x_iᵀ(β_{j+1} − β_j) ≥ 0`. The
//! coefficient vector `β` is the multiplier of the equality constraints. The
//! Newton system reduces to a block-tridiagonal matrix with `p × p` blocks,
//! one block per level.

use crate::linalg::BlockTridiag;

pub(crate) struct Problem<'a> {
    /// Row-major `n × p` design, columns already scaled.
    pub x: &'a [f64],
    pub n: usize,
    pub p: usize,
    /// Scaled response.
    pub y: &'a [f64],
    pub taus: &'a [f64],
}

/// Full primal-dual iterate. `cons[k] = (j, i)` ties row `i` between levels
/// `j` and `j + 1`; the list is kept sorted.
#[derive(Clone)]
pub(crate) struct State {
    pub beta: Vec<f64>,
    a: Vec<f64>,
    s: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    lam: Vec<f64>,
    zl: Vec<f64>,
    pub cons: Vec<(usize, usize)>,
}

pub(crate) struct Status {
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
}

const STEP_DAMPING: f64 = 0.99995;

impl Problem<'_> {
    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    fn fitted(&self, beta: &[f64], out: &mut [f64]) {
        let n = self.n;
        for (j, b) in beta.chunks(self.p).enumerate() {
            for i in 0..n {
                out[j * n + i] = dot(self.row(i), b);
            }
        }
    }

    fn mean_abs_residual(&self, fitted: &[f64]) -> f64 {
        let n = self.n;
        fitted
            .iter()
            .enumerate()
            .map(|(k, f)| (self.y[k % n] - f).abs())
            .sum::<f64>()
            / fitted.len() as f64
    }

    /// Interior starting point around the coefficients `beta`.
    pub fn cold_state(&self, beta: Vec<f64>, cons: Vec<(usize, usize)>) -> State {
        let n = self.n;
        let big_n = n * self.taus.len();
        let mut fitted = vec![0.0; big_n];
        self.fitted(&beta, &mut fitted);
        let delta = (0.1 * self.mean_abs_residual(&fitted)).max(1e-3);
        let mut st = State {
            a: (0..big_n).map(|k| 1.0 - self.taus[k / n]).collect(),
            s: (0..big_n).map(|k| self.taus[k / n]).collect(),
            z: vec![0.0; big_n],
            w: vec![0.0; big_n],
            lam: vec![0.1; cons.len()],
            zl: vec![0.0; cons.len()],
            beta,
            cons,
        };
        self.set_slacks(&mut st, &fitted, delta);
        st
    }

    /// Restarts from a previous iterate after constraints were appended.
    /// Multipliers of retained constraints are kept; everything is pushed
    /// back into the interior.
    pub fn warm_state(&self, prev: &State, cons: Vec<(usize, usize)>) -> State {
        let big_n = self.n * self.taus.len();
        let mut fitted = vec![0.0; big_n];
        self.fitted(&prev.beta, &mut fitted);
        let delta = (0.01 * self.mean_abs_residual(&fitted)).max(1e-6);
        let eta = 0.02;
        let a: Vec<f64> = prev.a.iter().map(|&v| v.clamp(eta, 1.0 - eta)).collect();
        let s: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
        let mut old = prev.cons.iter().zip(&prev.lam).peekable();
        let mut lam = Vec::with_capacity(cons.len());
        for c in &cons {
            while matches!(old.peek(), Some((oc, _)) if *oc < c) {
                old.next();
            }
            match old.peek() {
                Some((oc, &l)) if *oc == c => lam.push(l.max(0.01)),
                _ => lam.push(0.1),
            }
        }
        let mut st = State {
            beta: prev.beta.clone(),
            a,
            s,
            z: vec![0.0; big_n],
            w: vec![0.0; big_n],
            zl: vec![0.0; cons.len()],
            lam,
            cons,
        };
        self.set_slacks(&mut st, &fitted, delta);
        st
    }

    fn set_slacks(&self, st: &mut State, fitted: &[f64], delta: f64) {
        let n = self.n;
        for (k, f) in fitted.iter().enumerate() {
            let r = self.y[k % n] - f;
            st.w[k] = r.max(0.0) + delta;
            st.z[k] = (-r).max(0.0) + delta;
        }
        for (k, &(j, i)) in st.cons.iter().enumerate() {
            let gap = fitted[(j + 1) * n + i] - fitted[j * n + i];
            st.zl[k] = gap.max(0.0) + delta;
        }
    }

    /// Runs predictor-corrector steps until the relative duality gap and the
    /// scaled residuals fall below `tol`, or `max_iter` is reached.
    pub fn iterate(&self, st: &mut State, tol: f64, max_iter: usize) -> Status {
        let (n, p) = (self.n, self.p);
        let nl = self.taus.len();
        let big_n = n * nl;
        let m = st.cons.len();
        let y = self.y;

        let mut colsum = vec![0.0; p];
        for i in 0..n {
            for (c, v) in colsum.iter_mut().zip(self.row(i)) {
                *c += v;
            }
        }
        let col_norm = 1.0 + colsum.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let y_norm = 1.0 + y.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));

        let mut ws = Work::new(big_n, m, nl, p);
        let mut fitted = vec![0.0; big_n];
        self.fitted(&st.beta, &mut fitted);
        let mut last_gap = f64::INFINITY;

        for iter in 0..max_iter {
            // Residuals and convergence measures.
            for j in 0..nl {
                let base = 1.0 - self.taus[j];
                for (t, c) in colsum.iter().enumerate() {
                    ws.rp[j * p + t] = c * base;
                }
            }
            let mut primal = 0.0;
            let mut dual = 0.0;
            let mut comp = 0.0;
            let mut rd_max = 0.0f64;
            for j in 0..nl {
                let tau = self.taus[j];
                let rp = &mut ws.rp[j * p..(j + 1) * p];
                for i in 0..n {
                    let k = j * n + i;
                    let r = y[i] - fitted[k];
                    primal += if r < 0.0 { r * (tau - 1.0) } else { r * tau };
                    dual += y[i] * (st.a[k] - (1.0 - tau));
                    comp += st.a[k] * st.z[k] + st.s[k] * st.w[k];
                    let rd = r - st.w[k] + st.z[k];
                    ws.rd[k] = rd;
                    rd_max = rd_max.max(rd.abs());
                    let av = st.a[k];
                    for (d, v) in rp.iter_mut().zip(&self.x[i * p..(i + 1) * p]) {
                        *d -= av * v;
                    }
                }
            }
            let mut cross = 0.0f64;
            let mut rc_max = 0.0f64;
            for (k, &(j, i)) in st.cons.iter().enumerate() {
                let l = st.lam[k];
                let xi = self.row(i);
                for t in 0..p {
                    ws.rp[j * p + t] += l * xi[t];
                    ws.rp[(j + 1) * p + t] -= l * xi[t];
                }
                let diff = fitted[(j + 1) * n + i] - fitted[j * n + i];
                ws.rc[k] = st.zl[k] - diff;
                rc_max = rc_max.max(ws.rc[k].abs());
                cross = cross.max(-diff);
                comp += l * st.zl[k];
            }
            let gap = (primal - dual).abs().max(comp) / (1.0 + primal.abs());
            last_gap = gap;
            let rp_max = ws.rp.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            if gap <= tol
                && rp_max / col_norm <= tol
                && rd_max / y_norm <= tol
                && rc_max / y_norm <= tol
                && cross <= tol
            {
                return Status {
                    iterations: iter,
                    gap,
                    converged: true,
                };
            }

            // Scaling and the reduced Newton matrix.
            ws.h.clear();
            for j in 0..nl {
                let blk = &mut ws.h.diag[j];
                for i in 0..n {
                    let k = j * n + i;
                    let th = 1.0 / (st.w[k] / st.s[k] + st.z[k] / st.a[k]);
                    ws.theta[k] = th;
                    add_outer(blk, &self.x[i * p..(i + 1) * p], th, p);
                }
            }
            for (k, &(j, i)) in st.cons.iter().enumerate() {
                let ph = st.lam[k] / st.zl[k];
                ws.phi[k] = ph;
                let xi = &self.x[i * p..(i + 1) * p];
                add_outer(&mut ws.h.diag[j], xi, ph, p);
                add_outer(&mut ws.h.diag[j + 1], xi, ph, p);
                add_outer(&mut ws.h.off[j], xi, -ph, p);
            }
            for blk in ws.h.diag.iter_mut().chain(ws.h.off.iter_mut()) {
                symmetrize_lower(blk, p);
            }

            let total = (2 * big_n + m) as f64;
            let mu = comp / total;

            // Predictor.
            for k in 0..big_n {
                ws.ra[k] = -st.a[k] * st.z[k];
                ws.rs[k] = -st.s[k] * st.w[k];
            }
            for k in 0..m {
                ws.rl[k] = -st.lam[k] * st.zl[k];
            }
            let mut aff = std::mem::take(&mut ws.aff);
            let ok = self.direction(st, &mut ws, &mut aff);
            ws.aff = aff;
            if !ok {
                break;
            }
            let (ap, ad) = step_lengths(st, &ws.aff, 1.0);
            let mut mu_aff = 0.0;
            for k in 0..big_n {
                let da = ws.aff.a[k];
                mu_aff += (st.a[k] + ap * da) * (st.z[k] + ad * ws.aff.z[k]);
                mu_aff += (st.s[k] - ap * da) * (st.w[k] + ad * ws.aff.w[k]);
            }
            for k in 0..m {
                mu_aff += (st.lam[k] + ap * ws.aff.lam[k]) * (st.zl[k] + ad * ws.aff.zl[k]);
            }
            let sigma = (mu_aff / total / mu).powi(3).clamp(0.0, 1.0);
            let target = sigma * mu;

            // Corrector.
            for k in 0..big_n {
                let (da, dz, dw) = (ws.aff.a[k], ws.aff.z[k], ws.aff.w[k]);
                ws.ra[k] = target - st.a[k] * st.z[k] - da * dz;
                ws.rs[k] = target - st.s[k] * st.w[k] + da * dw;
            }
            for k in 0..m {
                ws.rl[k] = target - st.lam[k] * st.zl[k] - ws.aff.lam[k] * ws.aff.zl[k];
            }
            let mut dir = std::mem::take(&mut ws.dir);
            let ok = self.direction(st, &mut ws, &mut dir);
            if !ok {
                break;
            }
            let (ap, ad) = step_lengths(st, &dir, STEP_DAMPING);
            for k in 0..big_n {
                st.a[k] += ap * dir.a[k];
                st.s[k] -= ap * dir.a[k];
                st.z[k] += ad * dir.z[k];
                st.w[k] += ad * dir.w[k];
                fitted[k] += ad * dir.fit[k];
            }
            for k in 0..m {
                st.lam[k] += ap * dir.lam[k];
                st.zl[k] += ad * dir.zl[k];
            }
            for (b, db) in st.beta.iter_mut().zip(&dir.beta) {
                *b += ad * db;
            }
            ws.dir = dir;
            if iter % 10 == 9 {
                // Refresh so the running fit cannot drift from β.
                self.fitted(&st.beta, &mut fitted);
            }
        }
        Status {
            iterations: max_iter,
            gap: last_gap,
            converged: false,
        }
    }

    /// Solves the Newton system for the complementarity targets held in
    /// `ws.ra/rs/rl`. Returns false if the reduced matrix cannot be factored.
    fn direction(&self, st: &State, ws: &mut Work, out: &mut Dirs) -> bool {
        let (n, p) = (self.n, self.p);
        let nl = self.taus.len();
        for (r, v) in ws.rhs.iter_mut().zip(&ws.rp) {
            *r = -v;
        }
        for j in 0..nl {
            let rhs = &mut ws.rhs[j * p..(j + 1) * p];
            for i in 0..n {
                let k = j * n + i;
                let q = ws.rd[k] - ws.rs[k] / st.s[k] + ws.ra[k] / st.a[k];
                ws.q[k] = q;
                let f = ws.theta[k] * q;
                for (d, v) in rhs.iter_mut().zip(&self.x[i * p..(i + 1) * p]) {
                    *d += f * v;
                }
            }
        }
        for (k, &(j, i)) in st.cons.iter().enumerate() {
            let g = ws.rc[k] + ws.rl[k] / st.lam[k];
            ws.g[k] = g;
            let f = ws.phi[k] * g;
            let xi = self.row(i);
            for t in 0..p {
                ws.rhs[j * p + t] -= f * xi[t];
                ws.rhs[(j + 1) * p + t] += f * xi[t];
            }
        }
        let Some(dbeta) = ws.h.solve(&ws.rhs, 1e-12) else {
            return false;
        };
        for j in 0..nl {
            let b = &dbeta[j * p..(j + 1) * p];
            for i in 0..n {
                let k = j * n + i;
                let df = dot(&self.x[i * p..(i + 1) * p], b);
                out.fit[k] = df;
                let da = ws.theta[k] * (ws.q[k] - df);
                out.a[k] = da;
                out.z[k] = (ws.ra[k] - st.z[k] * da) / st.a[k];
                out.w[k] = (ws.rs[k] + st.w[k] * da) / st.s[k];
            }
        }
        out.beta = dbeta;
        for (k, &(j, i)) in st.cons.iter().enumerate() {
            let rdb = out.fit[(j + 1) * n + i] - out.fit[j * n + i];
            out.lam[k] = ws.phi[k] * (ws.g[k] - rdb);
            out.zl[k] = rdb - ws.rc[k];
        }
        true
    }
}

#[derive(Default)]
struct Dirs {
    beta: Vec<f64>,
    fit: Vec<f64>,
    a: Vec<f64>,
    z: Vec<f64>,
    w: Vec<f64>,
    lam: Vec<f64>,
    zl: Vec<f64>,
}

impl Dirs {
    fn new(big_n: usize, m: usize) -> Self {
        Self {
            beta: Vec::new(),
            fit: vec![0.0; big_n],
            a: vec![0.0; big_n],
            z: vec![0.0; big_n],
            w: vec![0.0; big_n],
            lam: vec![0.0; m],
            zl: vec![0.0; m],
        }
    }
}

struct Work {
    h: BlockTridiag,
    rp: Vec<f64>,
    rhs: Vec<f64>,
    rd: Vec<f64>,
    rc: Vec<f64>,
    theta: Vec<f64>,
    phi: Vec<f64>,
    q: Vec<f64>,
    g: Vec<f64>,
    ra: Vec<f64>,
    rs: Vec<f64>,
    rl: Vec<f64>,
    aff: Dirs,
    dir: Dirs,
}

impl Work {
    fn new(big_n: usize, m: usize, nl: usize, p: usize) -> Self {
        Self {
            h: BlockTridiag::zeros(nl, p),
            rp: vec![0.0; nl * p],
            rhs: vec![0.0; nl * p],
            rd: vec![0.0; big_n],
            rc: vec![0.0; m],
            theta: vec![0.0; big_n],
            phi: vec![0.0; m],
            q: vec![0.0; big_n],
            g: vec![0.0; m],
            ra: vec![0.0; big_n],
            rs: vec![0.0; big_n],
            rl: vec![0.0; m],
            aff: Dirs::new(big_n, m),
            dir: Dirs::new(big_n, m),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn add_outer(blk: &mut [f64], xi: &[f64], weight: f64, p: usize) {
    for r in 0..p {
        let wr = weight * xi[r];
        let dst = &mut blk[r * p..r * p + r + 1];
        for (d, v) in dst.iter_mut().zip(&xi[..=r]) {
            *d += wr * v;
        }
    }
}

fn symmetrize_lower(blk: &mut [f64], p: usize) {
    for r in 0..p {
        for c in 0..r {
            blk[c * p + r] = blk[r * p + c];
        }
    }
}

fn step_lengths(st: &State, d: &Dirs, damping: f64) -> (f64, f64) {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for k in 0..st.a.len() {
        let da = d.a[k];
        if da < 0.0 {
            ap = ap.min(-st.a[k] / da);
        } else if da > 0.0 {
            ap = ap.min(st.s[k] / da);
        }
        if d.z[k] < 0.0 {
            ad = ad.min(-st.z[k] / d.z[k]);
        }
        if d.w[k] < 0.0 {
            ad = ad.min(-st.w[k] / d.w[k]);
        }
    }
    for k in 0..st.lam.len() {
        if d.lam[k] < 0.0 {
            ap = ap.min(-st.lam[k] / d.lam[k]);
        }
        if d.zl[k] < 0.0 {
            ad = ad.min(-st.zl[k] / d.zl[k]);
        }
    }
    ((damping * ap).min(1.0), (damping * ad).min(1.0))
}
