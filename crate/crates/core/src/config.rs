//! Run configuration: one TOML document, strict about unknown keys.

use crate::domain::{build_cutoff, build_potential, CutoffField, CutoffKind, GridSpec, PotentialField, PotentialSpec};
use crate::error::{invalid, Result};
use crate::experiments::{CostScanSpec, ScalingSpec};
use crate::field::{WaveField, C64};
use crate::hartree::{HartreeKernel, KernelSpec};
use crate::hum::{LinearControlProblem, SOperator, SPath};
use crate::nonlinear::NonlinearSetup;
use crate::propagate::{step_count, CrankNicolson, Scheme};
use crate::spectral::{metric_basis, MetricOperator, SpectralBasis};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub half_width: f64,
    pub n_points: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            half_width: 10.0,
            n_points: 401,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub horizon: f64,
    pub dt: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            horizon: 1.0,
            dt: 2e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CutoffConfig {
    pub kind: CutoffKind,
    pub radius: f64,
}

impl Default for CutoffConfig {
    fn default() -> Self {
        Self {
            kind: CutoffKind::Exterior,
            radius: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub metric: MetricOperator,
    pub n_modes: usize,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub n_probe: usize,
    /// force an evaluation path for `S`; chosen automatically when absent
    pub path: Option<SPath>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            metric: MetricOperator::Weight,
            n_modes: 64,
            cg_tol: 1e-10,
            cg_max_iter: 1000,
            n_probe: 48,
            path: None,
        }
    }
}

/// Initial or target data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Zero,
    Gaussian {
        amp: f64,
        center: f64,
        width: f64,
        #[serde(default)]
        momentum: f64,
    },
    /// metric-basis eigenmode, L²-normalized times `amp`
    Mode {
        index: usize,
        #[serde(default = "unit")]
        amp: f64,
    },
    /// the free flow of the initial data at the horizon (targets only)
    FreeFlow,
}

fn first_unknown_key(given: &toml::Table, echo: &toml::Table, prefix: &str) -> Option<String> {
    for (k, v) in given {
        let path = format!("{prefix}{k}");
        match (v, echo.get(k)) {
            (_, None) => return Some(path),
            (toml::Value::Table(g), Some(toml::Value::Table(e))) => {
                if let Some(bad) = first_unknown_key(g, e, &format!("{path}.")) {
                    return Some(bad);
                }
            }
            _ => {}
        }
    }
    None
}

fn unit() -> f64 {
    1.0
}

impl FieldSpec {
    fn check(&self, n_modes: usize) -> Result<()> {
        match self {
            FieldSpec::Gaussian { amp, width, .. } => {
                if !(amp.is_finite() && *width > 0.0) {
                    return invalid("gaussian needs a finite amp and positive width");
                }
            }
            FieldSpec::Mode { index, amp } => {
                if *index >= n_modes || !amp.is_finite() {
                    return invalid(format!("mode index {index} outside the {n_modes} basis modes"));
                }
            }
            FieldSpec::Zero | FieldSpec::FreeFlow => {}
        }
        Ok(())
    }

    /// Build on `grid`; `FreeFlow` is resolved by the caller.
    pub fn build(&self, grid: &GridSpec, basis: Option<&SpectralBasis>) -> Result<WaveField> {
        match self {
            FieldSpec::Zero => Ok(WaveField::zeros(grid)),
            FieldSpec::Gaussian {
                amp,
                center,
                width,
                momentum,
            } => Ok(WaveField::gaussian(grid, *amp, *center, *width, *momentum)),
            FieldSpec::Mode { index, amp } => {
                let Some(b) = basis else {
                    return invalid("mode data need a basis");
                };
                Ok(b.mode_field(*index).scaled(C64::new(*amp, 0.0)))
            }
            FieldSpec::FreeFlow => invalid("free_flow is only meaningful as a target"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub initial: FieldSpec,
    pub target: FieldSpec,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            initial: FieldSpec::Gaussian {
                amp: 0.05,
                center: -1.0,
                width: 1.0,
                momentum: 0.0,
            },
            target: FieldSpec::Gaussian {
                amp: 0.05,
                center: 1.0,
                width: 1.0,
                momentum: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BasisConfig {
    /// number of eigenpairs listed
    pub n: usize,
    pub operator: MetricOperator,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            n: 20,
            operator: MetricOperator::AbsValue,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveConfig {
    pub scheme: Scheme,
    /// write every `stride`-th time node of the trajectory
    pub stride: usize,
}

impl Default for EvolveConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::CrankNicolson,
            stride: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NonlinearConfig {
    /// relative stopping tolerance on `d_k`
    pub tol: f64,
    pub max_iter: usize,
    /// extra amplitudes for the contraction sweep; each rescales both data
    pub sweep: Vec<f64>,
}

impl Default for NonlinearConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 30,
            sweep: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// trajectory snapshot stride for control runs
    pub stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { stride: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// random samples per randomized suite
    pub samples: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { samples: 100 }
    }
}

/// Everything a run needs. All sections are optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub time: TimeConfig,
    pub potential: PotentialSpec,
    pub cutoff: CutoffConfig,
    pub kernel: KernelSpec,
    pub solver: SolverConfig,
    pub data: DataConfig,
    pub basis: BasisConfig,
    pub evolve: EvolveConfig,
    pub nonlinear: NonlinearConfig,
    pub noncontrol: CostScanSpec,
    pub scaling: ScalingSpec,
    pub verify: VerifyConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: GridConfig::default(),
            time: TimeConfig::default(),
            potential: PotentialSpec::WeightMu,
            cutoff: CutoffConfig::default(),
            kernel: KernelSpec::default(),
            solver: SolverConfig::default(),
            data: DataConfig::default(),
            basis: BasisConfig::default(),
            evolve: EvolveConfig::default(),
            nonlinear: NonlinearConfig::default(),
            noncontrol: CostScanSpec::default(),
            scaling: ScalingSpec::default(),
            verify: VerifyConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        invalid(format!("{name} must be positive, got {v}"))
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        // serde lets extra keys through on unit variants of tagged enums;
        // anything that does not survive a round trip was not understood
        let given: toml::Table = toml::from_str(text)?;
        let echo = toml::Table::try_from(&cfg).expect("config serializes");
        if let Some(key) = first_unknown_key(&given, &echo, "") {
            return invalid(format!("unknown key `{key}`"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Check every physical parameter before any compute.
    pub fn validate(&self) -> Result<()> {
        // TOML integers are signed 64-bit
        if self.seed > i64::MAX as u64 {
            return invalid(format!("seed {} exceeds {}", self.seed, i64::MAX));
        }
        let g = self.grid_spec()?;
        positive("time.horizon", self.time.horizon)?;
        positive("time.dt", self.time.dt)?;
        crate::propagate::step_count(self.time.horizon, self.time.dt)?;
        positive("cutoff.radius", self.cutoff.radius)?;
        if self.cutoff.kind != CutoffKind::Unit {
            g.check_radius(self.cutoff.radius)?;
        }
        positive("solver.cg_tol", self.solver.cg_tol)?;
        if self.solver.n_modes == 0 || self.solver.n_modes > g.n_points() - 2 {
            return invalid(format!(
                "solver.n_modes must be in 1..={}, got {}",
                g.n_points() - 2,
                self.solver.n_modes
            ));
        }
        if self.solver.cg_max_iter == 0 || self.solver.n_probe == 0 {
            return invalid("solver.cg_max_iter and solver.n_probe must be positive");
        }
        self.data.initial.check(self.solver.n_modes)?;
        if self.data.initial == FieldSpec::FreeFlow {
            return invalid("data.initial cannot be free_flow");
        }
        self.data.target.check(self.solver.n_modes)?;
        if self.basis.n == 0 || self.basis.n > g.n_points() - 2 {
            return invalid("basis.n out of range");
        }
        if self.evolve.stride == 0 || self.output.stride == 0 {
            return invalid("strides must be positive");
        }
        positive("nonlinear.tol", self.nonlinear.tol)?;
        if self.nonlinear.max_iter == 0 {
            return invalid("nonlinear.max_iter must be positive");
        }
        for &a in &self.nonlinear.sweep {
            positive("nonlinear.sweep", a)?;
        }
        let nc = &self.noncontrol;
        for (name, v) in [
            ("noncontrol.half_width", nc.half_width),
            ("noncontrol.dx", nc.dx),
            ("noncontrol.horizon", nc.horizon),
            ("noncontrol.dt", nc.dt),
            ("noncontrol.interior_radius", nc.interior_radius),
            ("noncontrol.exterior_radius", nc.exterior_radius),
            ("noncontrol.cg_tol", nc.cg_tol),
        ] {
            positive(name, v)?;
        }
        GridSpec::with_spacing(nc.half_width, nc.dx)?;
        if nc.targets.is_empty() || nc.targets.iter().any(|&n| n >= nc.n_modes) {
            return invalid("noncontrol.targets must be non-empty and below n_modes");
        }
        positive("scaling.horizon", self.scaling.horizon)?;
        if self.scaling.eps.is_empty() || self.scaling.eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) {
            return invalid("scaling.eps values must lie in (0, 1)");
        }
        if self.verify.samples == 0 {
            return invalid("verify.samples must be positive");
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.grid.half_width, self.grid.n_points)
    }

    pub fn potential_field(&self) -> Result<PotentialField> {
        build_potential(&self.grid_spec()?, &self.potential)
    }

    pub fn cutoff_field(&self) -> Result<CutoffField> {
        build_cutoff(&self.grid_spec()?, self.cutoff.kind, self.cutoff.radius)
    }

    /// Eigenbasis of the configured metric operator.
    pub fn metric_basis(&self) -> Result<Arc<SpectralBasis>> {
        let (_, basis) = metric_basis(&self.grid_spec()?, self.solver.metric, self.solver.n_modes)?;
        Ok(Arc::new(basis))
    }

    /// Linear control problem for the configured data. A `free_flow`
    /// target is the homogeneous evolution of the initial data.
    pub fn linear_problem(&self, basis: Arc<SpectralBasis>) -> Result<LinearControlProblem> {
        let grid = self.grid_spec()?;
        let potential = self.potential_field()?;
        let u0 = self.data.initial.build(&grid, Some(&basis))?;
        let target = match self.data.target {
            FieldSpec::FreeFlow => {
                let cn = CrankNicolson::from_potential(&potential, self.time.dt)?;
                cn.evolve(&u0, step_count(self.time.horizon, self.time.dt)?)
                    .last()
                    .clone()
            }
            ref other => other.build(&grid, Some(&basis))?,
        };
        Ok(LinearControlProblem {
            u0,
            target,
            horizon: self.time.horizon,
            cutoff: self.cutoff_field()?,
            potential,
            dt: self.time.dt,
            basis,
            cg_tol: self.solver.cg_tol,
            cg_max_iter: self.solver.cg_max_iter,
        })
    }

    /// Fixed-point setup with both data scaled by `factor`.
    pub fn nonlinear_setup(&self, basis: Arc<SpectralBasis>, factor: f64) -> Result<NonlinearSetup> {
        let mut problem = self.linear_problem(basis)?;
        let a = C64::new(factor, 0.0);
        problem.u0.scale(a);
        problem.target.scale(a);
        Ok(NonlinearSetup {
            kernel: HartreeKernel::build(&self.grid_spec()?, self.kernel.clone())?,
            problem,
            tol: self.nonlinear.tol,
            max_iter: self.nonlinear.max_iter,
        })
    }

    /// Gramian operator on the configured solver path.
    pub fn s_operator<'a>(&self, problem: &'a LinearControlProblem) -> Result<SOperator<'a>> {
        match self.solver.path {
            Some(p) => SOperator::with_path(problem, p),
            None => SOperator::new(problem),
        }
    }
}
