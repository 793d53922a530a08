//! TOML experiment configuration: one file describes the theory, grid,
//! network and training setup shared by every subcommand.

use latfield::density::Polynomial;
use latfield::error::{Error, Result};
use latfield::lattice::{Grid2D, SpatialBc, StencilKind};
use latfield::mlp::{Activation, MlpSpec};
use latfield::rom::LatentTrainConfig;
use latfield::train::{AdamConfig, BatchMode, LossConfig, Regularizer, TrainConfig};
use latfield::tw::TwConfig;
use serde::Deserialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Theory {
    Wave,
    Schrodinger,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub theory: Theory,
    pub grid: GridSection,
    #[serde(default = "default_out")]
    pub out: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trajectories: usize,
    #[serde(default = "one")]
    pub stride: usize,
    /// Scale on the random initial data of `gen-data` (0 ⇒ zero fields).
    #[serde(default = "unit")]
    pub amplitude: f64,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub loss: LossSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub adam: AdamSection,
    #[serde(default)]
    pub tw: TwSection,
    #[serde(default)]
    pub rom: RomSection,
}

fn default_out() -> String {
    "out".into()
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_t: usize,
    pub n_x: usize,
    pub dt: f64,
    pub dx: f64,
    #[serde(default = "periodic")]
    pub bc: BcName,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BcName {
    Periodic,
    Dirichlet,
}

fn periodic() -> BcName {
    BcName::Periodic
}

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    #[serde(default = "unit")]
    pub hbar: f64,
    /// Potential polynomial coefficients (ascending powers); defaults to the
    /// theory's reference potential.
    pub potential: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "softplus")]
    pub activation: ActivationName,
    /// Declares the learned density first-order in time (degenerate), so
    /// propagation may start from positions alone. Defaults per theory.
    pub velocity_linear: Option<bool>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { hidden: default_hidden(), activation: softplus(), velocity_linear: None }
    }
}

fn default_hidden() -> Vec<usize> {
    vec![10, 10]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivationName {
    Tanh,
    Softplus,
}

fn softplus() -> ActivationName {
    ActivationName::Softplus
}

impl From<ActivationName> for Activation {
    fn from(a: ActivationName) -> Activation {
        match a {
            ActivationName::Tanh => Activation::Tanh,
            ActivationName::Softplus => Activation::Softplus,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSection {
    #[serde(default = "reg_none")]
    pub regularizer: RegularizerName,
    #[serde(default = "unit")]
    pub weight: f64,
    /// Inverse-iteration count of the slice regularizers.
    #[serde(default = "three")]
    pub iterations: usize,
    #[serde(default = "ten")]
    pub taming: f64,
}

impl Default for LossSection {
    fn default() -> Self {
        LossSection { regularizer: reg_none(), weight: 1.0, iterations: 3, taming: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegularizerName {
    None,
    StencilInverse,
    SliceInverse,
    SliceTamed,
}

fn reg_none() -> RegularizerName {
    RegularizerName::None
}

fn three() -> usize {
    3
}

fn ten() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "batch_tuples")]
    pub batch: BatchName,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Time levels per block in `time-blocks` batching.
    #[serde(default = "one")]
    pub steps_per_block: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: default_epochs(),
            batch: batch_tuples(),
            batch_size: default_batch_size(),
            steps_per_block: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchName {
    Tuples,
    TimeBlocks,
}

fn batch_tuples() -> BatchName {
    BatchName::Tuples
}

fn default_epochs() -> usize {
    200
}

fn default_batch_size() -> usize {
    100
}

#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct AdamSection {
    pub lr: Option<f64>,
    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub epsilon: Option<f64>,
}

impl AdamSection {
    pub fn build(&self) -> AdamConfig {
        let base = AdamConfig::default();
        AdamConfig {
            lr: self.lr.unwrap_or(base.lr),
            beta1: self.beta1.unwrap_or(base.beta1),
            beta2: self.beta2.unwrap_or(base.beta2),
            epsilon: self.epsilon.unwrap_or(base.epsilon),
        }
    }
}

/// Travelling-wave search knobs; unset fields fall back to the library
/// defaults.
#[derive(Debug, Clone, Copy, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TwSection {
    /// Spatial mode of the dispersion-relation initial guess.
    #[serde(default = "one")]
    pub mode: usize,
    #[serde(default = "five")]
    pub n_modes: usize,
    #[serde(default = "unit")]
    pub amplitude: f64,
    /// Standard deviation of the perturbation applied to the initial guess.
    #[serde(default = "half")]
    pub noise: f64,
    /// Dispersion branch of the Schrödinger initial guess.
    #[serde(default)]
    pub branch: i64,
    pub steps: Option<usize>,
    pub lr_speed: Option<f64>,
    pub lr_modes: Option<f64>,
    pub unit_weight: Option<f64>,
    pub hold: Option<f64>,
    pub settle: Option<f64>,
    pub scan_halfwidth: Option<f64>,
    pub scan_points: Option<usize>,
    pub stop_tol: Option<f64>,
}

fn five() -> usize {
    5
}

fn half() -> f64 {
    0.5
}

impl TwSection {
    pub fn build(&self) -> TwConfig {
        let mut cfg = TwConfig::default();
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.lr_speed {
            cfg.lr_speed = v;
        }
        if let Some(v) = self.lr_modes {
            cfg.lr_modes = v;
        }
        if let Some(v) = self.unit_weight {
            cfg.unit_weight = v;
        }
        if let Some(v) = self.hold {
            cfg.hold = v;
        }
        if let Some(v) = self.settle {
            cfg.settle = v;
        }
        if let Some(v) = self.scan_halfwidth {
            cfg.scan_halfwidth = v;
        }
        if let Some(v) = self.scan_points {
            cfg.scan_points = v;
        }
        if let Some(v) = self.stop_tol {
            cfg.stop_tol = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RomSection {
    #[serde(default = "two")]
    pub reduced_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "softplus")]
    pub activation: ActivationName,
    #[serde(default = "default_latent_epochs")]
    pub epochs: usize,
    #[serde(default = "default_latent_batch")]
    pub batch_size: usize,
    #[serde(default = "latent_lr")]
    pub lr: f64,
    #[serde(default = "latent_reg_weight")]
    pub reg_weight: f64,
    #[serde(default = "three")]
    pub reg_iterations: usize,
}

impl Default for RomSection {
    fn default() -> Self {
        RomSection {
            reduced_dim: 2,
            hidden: default_hidden(),
            activation: softplus(),
            epochs: default_latent_epochs(),
            batch_size: default_latent_batch(),
            lr: latent_lr(),
            reg_weight: latent_reg_weight(),
            reg_iterations: 3,
        }
    }
}

fn two() -> usize {
    2
}

fn default_latent_epochs() -> usize {
    2000
}

fn default_latent_batch() -> usize {
    10
}

fn latent_lr() -> f64 {
    // latent coordinates carry the ℓ² mass of whole slices, a much larger
    // input scale than single lattice nodes
    1e-2
}

fn latent_reg_weight() -> f64 {
    1e-8
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(format!("config: {e}")))
    }

    pub fn grid(&self) -> Result<Grid2D> {
        let bc = match self.grid.bc {
            BcName::Periodic => SpatialBc::Periodic,
            BcName::Dirichlet => SpatialBc::Dirichlet,
        };
        Grid2D::new(self.grid.n_t, self.grid.n_x, self.grid.dt, self.grid.dx, bc)
    }

    pub fn arity(&self) -> usize {
        match self.theory {
            Theory::Wave => 3,
            Theory::Schrodinger => 4,
        }
    }

    pub fn dim(&self) -> usize {
        match self.theory {
            Theory::Wave => 1,
            Theory::Schrodinger => 2,
        }
    }

    pub fn stencil_kind(&self) -> StencilKind {
        match self.theory {
            Theory::Wave => StencilKind::Pts3Seven,
            Theory::Schrodinger => StencilKind::Pts4Nine,
        }
    }

    pub fn potential(&self) -> Polynomial {
        match &self.physics.potential {
            Some(coeffs) => Polynomial(coeffs.clone()),
            None => match self.theory {
                Theory::Wave => latfield::theory::quadratic_potential(),
                Theory::Schrodinger => latfield::theory::linear_modulus_potential(),
            },
        }
    }

    /// Reference density of the configured theory (data generation, oracles).
    pub fn analytic_density(&self) -> Result<latfield::density::DensityModel> {
        let g = &self.grid;
        match self.theory {
            Theory::Wave => latfield::theory::wave_density_with(g.dt, g.dx, self.potential()),
            Theory::Schrodinger => latfield::theory::schrodinger_density_with(
                g.dt,
                g.dx,
                self.physics.hbar,
                self.potential(),
            ),
        }
    }

    pub fn mlp_spec(&self) -> Result<MlpSpec> {
        let mut layers = vec![self.arity() * self.dim()];
        layers.extend(&self.model.hidden);
        layers.push(1);
        MlpSpec::new(layers, self.model.activation.into())
    }

    /// Degenerate (first-order-in-time) theories admit position-only starts;
    /// defaults to the declared theory's structure.
    pub fn velocity_linear(&self) -> bool {
        self.model.velocity_linear.unwrap_or(self.theory == Theory::Schrodinger)
    }

    pub fn loss_config(&self) -> LossConfig {
        let regularizer = match self.loss.regularizer {
            RegularizerName::None => Regularizer::None,
            RegularizerName::StencilInverse => Regularizer::StencilInverse,
            RegularizerName::SliceInverse => {
                Regularizer::SliceInverse { iterations: self.loss.iterations }
            }
            RegularizerName::SliceTamed => Regularizer::SliceTamed {
                iterations: self.loss.iterations,
                taming: self.loss.taming,
            },
        };
        LossConfig { regularizer, weight: self.loss.weight }
    }

    pub fn train_config(&self, shuffle_seed: u64) -> TrainConfig {
        let batch = match self.train.batch {
            BatchName::Tuples => BatchMode::Tuples { size: self.train.batch_size },
            BatchName::TimeBlocks => BatchMode::TimeBlocks {
                blocks_per_batch: self.train.batch_size,
                steps_per_block: self.train.steps_per_block,
            },
        };
        TrainConfig {
            epochs: self.train.epochs,
            batch,
            seed: shuffle_seed,
            adam: self.adam.build(),
            loss: self.loss_config(),
        }
    }

    pub fn latent_spec(&self) -> Result<MlpSpec> {
        let mut layers = vec![2 * self.rom.reduced_dim];
        layers.extend(&self.rom.hidden);
        layers.push(1);
        MlpSpec::new(layers, self.rom.activation.into())
    }

    pub fn latent_train_config(&self, shuffle_seed: u64) -> LatentTrainConfig {
        LatentTrainConfig {
            epochs: self.rom.epochs,
            batch_size: self.rom.batch_size,
            seed: shuffle_seed,
            adam: AdamConfig { lr: self.rom.lr, ..AdamConfig::default() },
            reg_weight: self.rom.reg_weight,
            reg_iterations: self.rom.reg_iterations,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "theory = \"wave\"\n[grid]\nn_t = 20\nn_x = 20\ndt = 0.025\ndx = 0.05\n";

    #[test]
    fn minimal_configs_fill_in_defaults() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.trajectories, 1);
        assert_eq!(cfg.stride, 1);
        assert_eq!(cfg.arity(), 3);
        assert_eq!(cfg.dim(), 1);
        assert!(!cfg.velocity_linear());
        let grid = cfg.grid().unwrap();
        assert_eq!(grid.cols(), 20);
        let spec = cfg.mlp_spec().unwrap();
        assert_eq!(spec.layers, vec![3, 10, 10, 1]);
        assert_eq!(cfg.train_config(1).epochs, 200);
        assert_eq!(cfg.latent_spec().unwrap().layers, vec![4, 10, 10, 1]);
    }

    #[test]
    fn schrodinger_configs_wire_the_four_point_theory() {
        let text = "theory = \"schrodinger\"\nseed = 5\n[grid]\nn_t = 12\nn_x = 8\ndt = 0.01\ndx = 0.125\n[physics]\nhbar = 2.0\n[loss]\nregularizer = \"slice-tamed\"\nweight = 0.1\ntaming = 5.0\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.arity(), 4);
        assert_eq!(cfg.dim(), 2);
        assert!(cfg.velocity_linear());
        assert_eq!(cfg.stencil_kind(), StencilKind::Pts4Nine);
        assert_eq!(cfg.physics.hbar, 2.0);
        match cfg.loss_config().regularizer {
            Regularizer::SliceTamed { iterations, taming } => {
                assert_eq!(iterations, 3);
                assert_eq!(taming, 5.0);
            }
            other => panic!("wrong regularizer {other:?}"),
        }
        assert!(matches!(cfg.analytic_density().unwrap().dim(), 2));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}typo_key = 3\n");
        assert!(matches!(ExperimentConfig::parse(&text), Err(Error::Parse(_))));
    }

    #[test]
    fn tw_overrides_land_in_the_search_config() {
        let text = format!("{MINIMAL}[tw]\nsteps = 77\nsettle = 0.2\n");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        let tw = cfg.tw.build();
        assert_eq!(tw.steps, 77);
        assert_eq!(tw.settle, 0.2);
        assert_eq!(tw.scan_points, TwConfig::default().scan_points);
    }
}
