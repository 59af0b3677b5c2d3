//! CG, restarted GMRES and BiCGSTAB.
//!
//! CG and BiCGSTAB use the textbook preconditioned recurrences, which track
//! the unpreconditioned residual. GMRES is left-preconditioned and estimates
//! the true residual from the preconditioned one; every convergence claim is
//! confirmed against `b - Ax` before it is accepted.

use alloc::vec;
use alloc::vec::Vec;

use super::{
    build_preconditioner, relative_residual, Clock, Method, Preconditioner, SolveConfig,
    SolveOutcome, SolveStatus, SolverKind,
};
use crate::error::{Error, Result};
use crate::math::{axpy, dot, norm2};
use crate::sparse::CsrMatrix;

/// Iterate and summary of one solve.
#[derive(Debug, Clone)]
pub struct Solution {
    pub x: Vec<f64>,
    pub outcome: SolveOutcome,
}

struct Monitor<'c> {
    clock: &'c dyn Clock,
    start: f64,
    timeout: f64,
    max_iters: usize,
    target: f64,
    blowup: f64,
}

impl Monitor<'_> {
    fn timed_out(&self) -> bool {
        self.clock.seconds() - self.start > self.timeout
    }
}

/// Solves `A x = b` from a zero initial guess.
///
/// Deterministic for fixed inputs; the clock only affects the reported
/// walltime and the timeout.
pub fn solve(
    a: &CsrMatrix,
    b: &[f64],
    method: Method,
    cfg: &SolveConfig,
    clock: &dyn Clock,
) -> Result<Solution> {
    cfg.validate()?;
    let n = a.order();
    if b.len() != n {
        return Err(Error::DimensionError { expected: n, got: b.len() });
    }
    let bnorm = norm2(b);
    if !(bnorm > 0.0 && bnorm.is_finite()) {
        return Err(Error::ConfigError("right-hand side must be finite and nonzero".into()));
    }

    let start = clock.seconds();
    let mut x = vec![0.0; n];
    let mon = Monitor {
        clock,
        start,
        timeout: cfg.timeout,
        max_iters: cfg.max_iters_for(n),
        target: cfg.rtol * bnorm,
        blowup: cfg.divergence_tol * bnorm,
    };

    let (status, iterations) =
        if method.solver == SolverKind::Cg && !a.is_structurally_symmetric() {
            (SolveStatus::Breakdown, 0)
        } else {
            match build_preconditioner(a, method.preconditioner, cfg) {
                Err(_) => (SolveStatus::Breakdown, 0),
                Ok(pc) => match method.solver {
                    SolverKind::Cg => cg(a, b, &pc, &mut x, &mon),
                    SolverKind::Gmres => gmres(a, b, &pc, &mut x, &mon, method.restart.map_or(cfg.gmres_restart, |r| r as usize)),
                    SolverKind::Bicgstab => bicgstab(a, b, &pc, &mut x, &mon),
                },
            }
        };
    let walltime = (clock.seconds() - start).max(0.0);

    let final_relres = relative_residual(a, b, &x);
    let status = if final_relres <= cfg.rtol {
        SolveStatus::Converged
    } else if status == SolveStatus::Converged {
        SolveStatus::MaxIters
    } else {
        status
    };
    Ok(Solution { x, outcome: SolveOutcome { status, iterations, final_relres, walltime } })
}

fn true_residual(a: &CsrMatrix, b: &[f64], x: &[f64], r: &mut [f64]) -> f64 {
    a.residual_into(b, x, r);
    norm2(r)
}

fn cg(
    a: &CsrMatrix,
    b: &[f64],
    pc: &Preconditioner<'_>,
    x: &mut [f64],
    mon: &Monitor<'_>,
) -> (SolveStatus, usize) {
    let n = b.len();
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let mut q = vec![0.0; n];
    pc.apply(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);

    for it in 1..=mon.max_iters {
        a.spmv_into(&p, &mut q);
        let pq = dot(&p, &q);
        if !pq.is_finite() {
            return (SolveStatus::Diverged, it);
        }
        if pq <= 0.0 {
            return (SolveStatus::Breakdown, it);
        }
        let alpha = rz / pq;
        axpy(alpha, &p, x);
        axpy(-alpha, &q, &mut r);
        let rnorm = norm2(&r);
        if !rnorm.is_finite() || rnorm > mon.blowup {
            return (SolveStatus::Diverged, it);
        }
        let mut restart = false;
        if rnorm <= mon.target {
            if true_residual(a, b, x, &mut r) <= mon.target {
                return (SolveStatus::Converged, it);
            }
            restart = true;
        }
        if mon.timed_out() {
            return (SolveStatus::Timeout, it);
        }
        pc.apply(&r, &mut z);
        let rz_next = dot(&r, &z);
        if !rz_next.is_finite() {
            return (SolveStatus::Diverged, it);
        }
        if rz_next == 0.0 {
            return (SolveStatus::Breakdown, it);
        }
        if restart {
            p.copy_from_slice(&z);
        } else {
            let beta = rz_next / rz;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        rz = rz_next;
    }
    (SolveStatus::MaxIters, mon.max_iters)
}

fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    pc: &Preconditioner<'_>,
    x: &mut [f64],
    mon: &Monitor<'_>,
) -> (SolveStatus, usize) {
    let n = b.len();
    let mut r = b.to_vec();
    let mut r_hat = r.clone();
    let mut p = vec![0.0; n];
    let mut v = vec![0.0; n];
    let mut p_hat = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut s_hat = vec![0.0; n];
    let mut t = vec![0.0; n];
    let (mut rho_prev, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);

    for it in 1..=mon.max_iters {
        let rho = dot(&r_hat, &r);
        if !rho.is_finite() {
            return (SolveStatus::Diverged, it);
        }
        if rho == 0.0 {
            return (SolveStatus::Breakdown, it);
        }
        if it == 1 {
            p.copy_from_slice(&r);
        } else {
            let beta = (rho / rho_prev) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
        }
        pc.apply(&p, &mut p_hat);
        a.spmv_into(&p_hat, &mut v);
        let rv = dot(&r_hat, &v);
        if !rv.is_finite() {
            return (SolveStatus::Diverged, it);
        }
        if rv == 0.0 {
            return (SolveStatus::Breakdown, it);
        }
        alpha = rho / rv;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = norm2(&s);
        if !snorm.is_finite() || snorm > mon.blowup {
            return (SolveStatus::Diverged, it);
        }
        if snorm <= mon.target {
            axpy(alpha, &p_hat, x);
            if true_residual(a, b, x, &mut r) <= mon.target {
                return (SolveStatus::Converged, it);
            }
            // Residual drifted from the recurrence: restart from the true one.
            r_hat.copy_from_slice(&r);
            rho_prev = 1.0;
            alpha = 1.0;
            omega = 1.0;
            p.iter_mut().for_each(|v| *v = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            continue;
        }
        pc.apply(&s, &mut s_hat);
        a.spmv_into(&s_hat, &mut t);
        let tt = dot(&t, &t);
        if !tt.is_finite() {
            return (SolveStatus::Diverged, it);
        }
        if tt == 0.0 {
            return (SolveStatus::Breakdown, it);
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * p_hat[i] + omega * s_hat[i];
            r[i] = s[i] - omega * t[i];
        }
        let rnorm = norm2(&r);
        if !rnorm.is_finite() || rnorm > mon.blowup {
            return (SolveStatus::Diverged, it);
        }
        if rnorm <= mon.target {
            if true_residual(a, b, x, &mut r) <= mon.target {
                return (SolveStatus::Converged, it);
            }
            r_hat.copy_from_slice(&r);
            rho_prev = 1.0;
            alpha = 1.0;
            omega = 1.0;
            p.iter_mut().for_each(|v| *v = 0.0);
            v.iter_mut().for_each(|e| *e = 0.0);
            continue;
        }
        if omega == 0.0 {
            return (SolveStatus::Breakdown, it);
        }
        if mon.timed_out() {
            return (SolveStatus::Timeout, it);
        }
        rho_prev = rho;
    }
    (SolveStatus::MaxIters, mon.max_iters)
}

fn gmres(
    a: &CsrMatrix,
    b: &[f64],
    pc: &Preconditioner<'_>,
    x: &mut [f64],
    mon: &Monitor<'_>,
    restart: usize,
) -> (SolveStatus, usize) {
    let n = b.len();
    let mut r = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = (0..=restart).map(|_| vec![0.0; n]).collect();
    // Column-major Hessenberg, (restart + 1) x restart.
    let ld = restart + 1;
    let mut h = vec![0.0; ld * restart];
    let mut cs = vec![0.0; restart];
    let mut sn = vec![0.0; restart];
    let mut g = vec![0.0; ld];
    let mut iters = 0usize;

    loop {
        let rnorm = true_residual(a, b, x, &mut r);
        if !rnorm.is_finite() || rnorm > mon.blowup {
            return (SolveStatus::Diverged, iters);
        }
        if rnorm <= mon.target {
            return (SolveStatus::Converged, iters);
        }
        if iters >= mon.max_iters {
            return (SolveStatus::MaxIters, iters);
        }
        pc.apply(&r, &mut basis[0]);
        let beta = norm2(&basis[0]);
        if !beta.is_finite() {
            return (SolveStatus::Diverged, iters);
        }
        if beta == 0.0 {
            return (SolveStatus::Breakdown, iters);
        }
        // Preconditioned residual target matching the true-residual target.
        let inner_target = mon.target * beta / rnorm;
        basis[0].iter_mut().for_each(|v| *v /= beta);
        g.iter_mut().for_each(|v| *v = 0.0);
        g[0] = beta;

        let mut j = 0;
        let mut timed_out = false;
        while j < restart && iters < mon.max_iters {
            a.spmv_into(&basis[j], &mut r);
            pc.apply(&r, &mut w);
            let col = &mut h[j * ld..(j + 1) * ld];
            for (i, vi) in basis.iter().enumerate().take(j + 1) {
                let hij = dot(&w, vi);
                col[i] = hij;
                axpy(-hij, vi, &mut w);
            }
            let hnext = norm2(&w);
            col[j + 1] = hnext;
            for i in 0..j {
                let (hi, hi1) = (col[i], col[i + 1]);
                col[i] = cs[i] * hi + sn[i] * hi1;
                col[i + 1] = -sn[i] * hi + cs[i] * hi1;
            }
            let (hjj, hj1) = (col[j], col[j + 1]);
            let denom = libm::hypot(hjj, hj1);
            if !denom.is_finite() {
                return (SolveStatus::Diverged, iters);
            }
            if denom == 0.0 {
                return (SolveStatus::Breakdown, iters);
            }
            cs[j] = hjj / denom;
            sn[j] = hj1 / denom;
            col[j] = denom;
            col[j + 1] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];

            iters += 1;
            j += 1;
            let estimate = g[j].abs();
            if hnext == 0.0 || estimate <= inner_target {
                break;
            }
            let inv = 1.0 / hnext;
            for (dst, src) in basis[j].iter_mut().zip(&w) {
                *dst = src * inv;
            }
            if mon.timed_out() {
                timed_out = true;
                break;
            }
        }

        // Back-substitute H y = g and update x += V y.
        let mut y = g[..j].to_vec();
        for i in (0..j).rev() {
            let mut acc = y[i];
            for c in i + 1..j {
                acc -= h[c * ld + i] * y[c];
            }
            y[i] = acc / h[i * ld + i];
        }
        for (yi, vi) in y.iter().zip(&basis) {
            axpy(*yi, vi, x);
        }
        if timed_out {
            return (SolveStatus::Timeout, iters);
        }
    }
}
