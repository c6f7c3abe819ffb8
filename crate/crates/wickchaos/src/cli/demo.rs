use clap::ValueEnum;

use super::output::{Cell, Meta, Table};
use super::CliError;
use crate::bsvie::{resolvent_psi, TriangleKernel, VolterraKernel};
use crate::chaos::{
    brownian_chaos_at, expectation, ChaosProcess, HermiteChaos, KernelChaos, Overflow, TimeGrid, Truncation,
};
use crate::malliavin::{clark_ocone, skorohod_integral};
use crate::mc::{brownian_path, build_ensemble, Estimate};
use crate::wick::{wick_power, wick_power_with, wick_product_with};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DemoName {
    /// Mean, variance and fourth moment of B(t) from the θ-expansion.
    Moments,
    /// B(t)⋄B(t) = B(t)² − t.
    WickSquare,
    /// δ(B(t)(B(T) − B(t))) = B(T)^⋄3 / 6.
    SkorohodCube,
    /// F = E[F] + ∫ E[D_tF | F_t] dB(t).
    ClarkOcone,
    /// Resolvent of φ(t,r) = e^{−(r−t)} is identically 1.
    ResolventExp,
}

impl DemoName {
    pub fn label(self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
    }
}

const COLUMNS: [&str; 8] = ["identity", "t", "lhs", "rhs", "deviation", "stderr", "tolerance", "pass"];

struct Checks {
    table: Table,
    failures: Vec<String>,
}

impl Checks {
    fn new() -> Self {
        Self { table: Table::new("identities", &COLUMNS), failures: vec![] }
    }

    fn row(&mut self, identity: &str, t: f64, lhs: f64, rhs: f64, stderr: f64, tol: f64) {
        let dev = lhs - rhs;
        let pass = dev.abs() <= tol;
        if !pass {
            self.failures.push(format!("{identity} at t = {t}"));
        }
        let row: Vec<Cell> =
            vec![identity.into(), t.into(), lhs.into(), rhs.into(), dev.into(), stderr.into(), tol.into(), pass.into()];
        self.table.push(row);
    }

    fn estimate(&mut self, identity: &str, t: f64, e: &Estimate, target: f64, slack: f64) {
        self.row(identity, t, e.estimate, target, e.stderr, 3.0 * e.stderr + slack);
    }
}

pub fn run(
    name: DemoName,
    seed: u64,
    paths: Option<usize>,
    k: Option<usize>,
    meta: &mut Meta,
) -> Result<(Vec<Table>, Vec<String>), CliError> {
    let paths = paths.unwrap_or(20_000);
    let mut c = Checks::new();
    let mut extra = vec![];
    match name {
        DemoName::Moments => {
            let g = TimeGrid::new(1.0, 64)?;
            let k = k.unwrap_or(100);
            set_meta(meta, g, Some(paths), format!("K={k}"));
            let ens = build_ensemble(seed, paths, k, g, None)?;
            for i in [16, 32, 64] {
                let t = g.t(i);
                let tail = ens.basis().tail_variance(i);
                let b: Vec<f64> = (0..ens.n_paths()).map(|p| ens.brownian(p)[i]).collect();
                c.estimate("E[B]", t, &Estimate::of(&b), 0.0, 0.0);
                c.estimate("E[B^2]", t, &Estimate::of(&b.iter().map(|v| v * v).collect::<Vec<_>>()), t, tail);
                c.estimate(
                    "E[B^4]",
                    t,
                    &Estimate::of(&b.iter().map(|v| v.powi(4)).collect::<Vec<_>>()),
                    3.0 * t * t,
                    0.0,
                );
            }
        }
        DemoName::WickSquare => {
            let g = TimeGrid::new(1.0, 64)?;
            let k = k.unwrap_or(30);
            set_meta(meta, g, Some(paths), format!("K={k} N=2"));
            let ens = build_ensemble(seed, paths, k, g, None)?;
            let tr = Truncation::new(k, 2);
            for i in [16, 32, 64] {
                let t = g.t(i);
                let sq = wick_power(&brownian_chaos_at(i, ens.basis(), tr)?, 2)?;
                let vals = ens.evaluate(&sq)?;
                // on the θ-series, whose variance is t minus the tail
                let s2 = t - ens.basis().tail_variance(i);
                let x = brownian_path(&ens, t);
                let dev = vals.iter().zip(&x).map(|(v, b)| (v - (b * b - s2)).abs()).fold(0.0, f64::max);
                c.row("max_paths |B<>B - (B^2 - Var B)|", t, dev, 0.0, 0.0, 1e-9);
                let d: Vec<f64> = vals.iter().enumerate().map(|(p, v)| v - (ens.brownian(p)[i].powi(2) - t)).collect();
                c.estimate("B<>B - (B^2 - t), full path", t, &Estimate::of(&d), 0.0, 0.0);
                c.row("E[B<>B]", t, expectation(&sq), 0.0, 0.0, 1e-12);
            }
        }
        DemoName::SkorohodCube => {
            let g = TimeGrid::new(1.0, 64)?;
            let k = k.unwrap_or(16);
            set_meta(meta, g, Some(paths), format!("K={k} N=4"));
            let ens = build_ensemble(seed, paths, k, g, None)?;
            let tr = Truncation::new(k, 4);
            let b: Vec<HermiteChaos> =
                (0..g.len()).map(|i| brownian_chaos_at(i, ens.basis(), tr)).collect::<Result<_, _>>()?;
            let bt = &b[g.steps];
            let y: Vec<HermiteChaos> =
                b.iter().map(|bi| wick_product_with(bi, &bt.sub(bi), 4, Overflow::Strict)).collect::<Result<_, _>>()?;
            let delta = skorohod_integral(&ChaosProcess::from_slices(g, &y)?, ens.basis())?;
            let want = wick_power_with(bt, 3, 4, Overflow::Strict)?.scale(1.0 / 6.0);
            c.row("max coefficient |delta - B^<>3/6|", 1.0, delta.max_abs_diff(&want), 0.0, 0.0, 1e-8);
            // B^⋄3 = B³ − 3σ²B on the θ-series, σ² its variance
            let vals = ens.evaluate(&delta)?;
            let s2 = 1.0 - ens.basis().tail_variance(g.steps);
            let x = brownian_path(&ens, 1.0);
            let dev =
                vals.iter().zip(&x).map(|(v, b)| (v - (b.powi(3) - 3.0 * s2 * b) / 6.0).abs()).fold(0.0, f64::max);
            c.row("max_paths |delta - (B^3 - 3 Var B B)/6|", 1.0, dev, 0.0, 0.0, 1e-8);
        }
        DemoName::ClarkOcone => {
            let g = TimeGrid::new(1.0, 32)?;
            let k = k.unwrap_or(4);
            set_meta(meta, g, Some(paths), format!("K={k} N=3"));
            let ens = build_ensemble(seed, paths, k, g, None)?;
            let f = |t: f64| 0.5 + 0.5 * t;
            let family = [
                ("B(T)", KernelChaos::zero(g, 1).with_kernel(1, |_| 1.0)?),
                ("B(T)^2", KernelChaos::constant(g, 2, 1.0).with_kernel(2, |_| 1.0)?),
                (
                    "exp<>(I(f)), order 3",
                    KernelChaos::constant(g, 3, 1.0)
                        .with_kernel(1, |s| f(s[0]))?
                        .with_kernel(2, |s| f(s[0]) * f(s[1]) / 2.0)?
                        .with_kernel(3, |s| f(s[0]) * f(s[1]) * f(s[2]) / 6.0)?,
                ),
            ];
            let mut integrand = Table::new("integrands", &["functional", "t", "phi_mean", "phi_stderr"]);
            for (label, fc) in &family {
                let phi = clark_ocone(fc);
                let ef = fc.expectation();
                let sq: Vec<f64> = (0..ens.n_paths())
                    .map(|p| {
                        let db = ens.increments(p);
                        (fc.evaluate_increments(&db) - ef - phi.ito_sum(&db)).powi(2)
                    })
                    .collect();
                let e = Estimate::of(&sq);
                c.row(
                    &format!("E[(F - E[F] - sum phi dB)^2], F = {label}"),
                    1.0,
                    e.estimate,
                    0.0,
                    e.stderr,
                    1e-4f64.max(3.0 * e.stderr),
                );
                c.row(&format!("adaptedness defect, F = {label}"), 1.0, phi.adaptedness_defect(), 0.0, 0.0, 1e-14);
                for j in 0..g.steps {
                    let v = ens.evaluate_kernel(phi.at(j))?;
                    let e = Estimate::of(&v);
                    integrand.push(vec![(*label).into(), g.t(j).into(), e.estimate.into(), e.stderr.into()]);
                }
            }
            extra.push(integrand);
        }
        DemoName::ResolventExp => {
            let g = TimeGrid::new(1.0, 63)?;
            set_meta(meta, g, None, "deterministic".to_string());
            let res = resolvent_psi(&VolterraKernel::exp_decay(1.0, 1.0), g, 1e-13)?;
            let psi = res.psi_grid();
            let ones = TriangleKernel::from_fn(g, |_, _| 1.0);
            c.row("max |Psi - 1|", 1.0, psi.max_abs_diff(&ones), 0.0, 0.0, 1e-8);
            c.row("resolvent identity defect", 1.0, res.identity_defect(), 0.0, 0.0, 1e-8);
            let b = res.bound_report();
            c.row("factorial bound violations", 1.0, b.violations.len() as f64, 0.0, 0.0, 0.0);
            let mut t = Table::new("psi", &["t", "r", "Psi"]);
            for (a, r, v) in psi.triples() {
                t.push(vec![a.into(), r.into(), v.into()]);
            }
            extra.push(t);
        }
    }
    let mut tables = vec![c.table];
    tables.extend(extra);
    Ok((tables, c.failures))
}

fn set_meta(meta: &mut Meta, g: TimeGrid, paths: Option<usize>, truncation: String) {
    meta.set("grid", format!("T={} M={}", g.horizon, g.steps));
    meta.set("n_paths", paths.map(|p| p.to_string()).unwrap_or_else(|| "0".into()));
    meta.set("truncation", truncation);
}
