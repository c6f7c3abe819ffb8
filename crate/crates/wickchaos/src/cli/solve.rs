use clap::ValueEnum;

use super::output::{Cell, Meta, Table};
use super::{summary_row, CliError};
use crate::bsde::{linear_bsde_solve, meanfield_bsde_solve, BsdeSolution};
use crate::bsvie::{bsvie_solve_y, bsvie_solve_zk, resolvent_psi};
use crate::chaos::TimeGrid;
use crate::config::ProblemConfig;
use crate::control::{cashflow_solve, lq_solve, unconstrained_benchmark, LqProblem};
use crate::mc::{build_ensemble, Estimate, McEnsemble};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Problem {
    /// Linear BSDE with jumps.
    Bsde,
    /// Linear mean-field BSDE.
    Meanfield,
    /// Linear BSVIE: resolvent, Y, and Z/K.
    Bsvie,
    /// Constrained LQ control by Picard iteration on the maximum principle.
    Lq,
    /// Cash-flow consumption with memory.
    Cashflow,
}

impl Problem {
    pub fn label(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }
}

type Output = (Vec<Table>, Option<String>);

pub fn run(
    problem: Problem,
    cfg: &ProblemConfig,
    seed: u64,
    paths: Option<usize>,
    k: Option<usize>,
    meta: &mut Meta,
) -> Result<Output, CliError> {
    let paths = paths.unwrap_or(10_000);
    let k = k.unwrap_or(8);
    let grid = cfg.time_grid()?;
    let levy = cfg.levy_model()?;
    let mut ensemble = |levy| -> Result<McEnsemble, CliError> {
        meta.set("n_paths", paths);
        meta.set("truncation", format!("K={k}"));
        Ok(build_ensemble(seed, paths, k, grid, levy)?)
    };
    match problem {
        Problem::Bsde => {
            let spec = cfg.bsde_spec()?;
            let ens = ensemble(levy.as_ref())?;
            let sol = linear_bsde_solve(&spec, &ens)?;
            Ok((vec![bsde_table("solution", &sol, None)], None))
        }
        Problem::Meanfield => {
            let spec = cfg.bsde_spec()?;
            let s = cfg.meanfield_settings();
            let ens = ensemble(levy.as_ref())?;
            let sol = meanfield_bsde_solve(&spec, s.mode, s.cells, s.tol, Some(&ens))?;
            let y = sol.y.as_ref().ok_or_else(|| CliError::Failed("mean-field solve returned no paths".into()))?;
            let mut summary = Table::new("summary", &["quantity", "value"]);
            summary.push(summary_row("operator_norm", sol.norm));
            summary.push(summary_row("cells_per_interval", sol.cells_per_interval));
            summary.push(summary_row("intervals", sol.boundaries.len().saturating_sub(1)));
            summary.push(summary_row("continuity", sol.continuity));
            Ok((vec![bsde_table("solution", y, Some(&sol.v)), summary], None))
        }
        Problem::Bsvie => {
            let (spec, tol) = cfg.bsvie_spec()?;
            let res = resolvent_psi(&spec.phi, grid, tol)?;
            let ens = ensemble(levy.as_ref())?;
            let sol = bsvie_solve_y(&spec, &res, &ens)?;
            let mut psi = Table::new("psi", &["t", "r", "Psi"]);
            for (t, r, v) in res.psi_grid().triples() {
                psi.push(vec![t.into(), r.into(), v.into()]);
            }
            let mut y = Table::new("y", &["t", "y_mean", "y_stderr"]);
            for (i, e) in sol.mean().iter().enumerate() {
                y.push(vec![grid.t(i).into(), e.estimate.into(), e.stderr.into()]);
            }
            let mut tables = vec![psi, y];
            // Z and K are only available for a deterministic drift
            if let Ok(zk) = bsvie_solve_zk(&spec, &sol) {
                let mut cols = vec!["t".to_string(), "s".to_string(), "Z".to_string()];
                cols.extend((1..=zk.k.len()).map(|a| format!("K_{a}")));
                let mut z = Table::with_columns("z", cols);
                let ks: Vec<_> = zk.k.iter().map(|k| k.triples()).collect();
                for (n, (t, s, v)) in zk.z.triples().into_iter().enumerate() {
                    let mut row: Vec<Cell> = vec![t.into(), s.into(), v.into()];
                    row.extend(ks.iter().map(|k| Cell::from(k[n].2)));
                    z.push(row);
                }
                tables.push(z);
            }
            Ok((tables, None))
        }
        Problem::Lq => {
            let (prob, max_iter, tol) = cfg.lq_problem()?;
            let ens = ensemble(prob.levy.as_ref())?;
            let it = lq_solve(&prob, &ens, max_iter, tol)?;
            let bench = unconstrained_benchmark(&LqProblem { constrained: false, ..prob.clone() }, &ens)?;
            let w = grid.len();
            let mut policy = Table::new("policy", &["t", "u_mean", "x_mean", "p_mean", "p_stderr"]);
            for i in 0..w {
                let p: Vec<f64> = (0..ens.n_paths()).map(|n| it.p[n * w + i]).collect();
                policy.push(vec![
                    grid.t(i).into(),
                    mean(&it.paths.u_at(i)).into(),
                    mean(&it.paths.x_at(i)).into(),
                    mean(&p).into(),
                    it.p_stderr[i].into(),
                ]);
            }
            let mut iterations = Table::new("iterations", &["iteration", "J", "J_stderr", "sup_change"]);
            for h in &it.history {
                iterations.push(vec![
                    h.iteration.into(),
                    h.objective.estimate.into(),
                    h.objective.stderr.into(),
                    h.sup_change.into(),
                ]);
            }
            let mut summary = Table::new("summary", &["quantity", "value", "stderr"]);
            summary.push_estimate("J", &it.objective);
            summary.push_estimate("J_unconstrained_closed_loop", &bench.objective);
            summary.push(vec!["iterations".into(), it.iteration.into(), 0.0.into()]);
            summary.push(vec!["converged".into(), it.converged.into(), 0.0.into()]);
            let failure = (!it.converged).then(|| {
                format!("Picard iteration stopped after {} steps, change {:.3e}", it.iteration, it.sup_change)
            });
            Ok((vec![policy, iterations, summary], failure))
        }
        Problem::Cashflow => {
            let (spec, tol) = cfg.cashflow_spec()?;
            let ens = ensemble(spec.levy.as_ref())?;
            let sol = cashflow_solve(&spec, &ens, tol)?;
            let w = grid.len();
            let n = ens.n_paths();
            let mut policy = Table::new("policy", &["t", "u_mean", "u_stderr", "x_mean", "p_mean"]);
            for i in 0..w {
                let u = Estimate::of(&column(&sol.u, n, w, i));
                policy.push(vec![
                    grid.t(i).into(),
                    u.estimate.into(),
                    u.stderr.into(),
                    mean(&column(&sol.x, n, w, i)).into(),
                    mean(&sol.adjoint.y_at(i)).into(),
                ]);
            }
            let mut summary = Table::new("summary", &["quantity", "value", "stderr"]);
            summary.push_estimate("J", &sol.objective);
            summary.push(vec!["first_order_residual".into(), sol.first_order_residual.into(), 0.0.into()]);
            summary.push(vec!["hamiltonian_gradient".into(), sol.hamiltonian_gradient.into(), 0.0.into()]);
            Ok((vec![policy, summary], None))
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    Estimate::of(v).estimate
}

fn column(v: &[f64], n: usize, w: usize, i: usize) -> Vec<f64> {
    (0..n).map(|p| v[p * w + i]).collect()
}

fn bsde_table(name: &str, sol: &BsdeSolution, mf: Option<&crate::bsde::MeanFieldVector>) -> Table {
    let g: TimeGrid = sol.grid;
    let atoms = sol.k.len();
    let mut cols: Vec<String> = ["t", "y_mean", "y_stderr", "z"].iter().map(|s| s.to_string()).collect();
    cols.extend((1..=atoms).map(|a| format!("k_{a}")));
    if mf.is_some() {
        cols.push("ybar".into());
        cols.push("zbar".into());
        cols.extend((1..=atoms).map(|a| format!("kbar_{a}")));
    }
    let mut t = Table::with_columns(name, cols);
    for i in 0..g.len() {
        let y = Estimate::of(&sol.y_at(i));
        let mut row: Vec<Cell> = vec![g.t(i).into(), y.estimate.into(), y.stderr.into(), sol.z[i].into()];
        row.extend(sol.k.iter().map(|k| Cell::from(k[i])));
        if let Some(v) = mf {
            row.push(v.ybar[i].into());
            row.push(v.zbar[i].into());
            row.extend(v.kbar.iter().map(|k| Cell::from(k[i])));
        }
        t.push(row);
    }
    t
}
