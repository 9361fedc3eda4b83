//! Experiment configuration: the JSON schema the binary consumes and its
//! resolution into a concrete problem instance.

use serde::{Deserialize, Serialize};

use reps_core::agd::{eta_for_accuracy, EtaRule};
use reps_core::diagnostics::{random_policy, visitation_floor};
use reps_core::dual::{theory_constants, RegularizedProblem, TheoryConstants};
use reps_core::mdp::{behavior_reference, random_mdp, Mdp, ReferenceDistribution};
use reps_core::regularizers::{KlSpec, Regularizer, TsallisSpec};

use crate::CliError;

/// Top-level experiment description.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceConfig,
    pub regularizer: RegularizerConfig,
    pub solver: SolverConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

/// Randomly generated tabular instance.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub seed: u64,
    pub n_states: usize,
    pub n_actions: usize,
    /// Successor-support size per state-action pair.
    pub branching: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RegKind {
    Kl,
    Tsallis,
}

/// Temperature: either a number, or a target policy accuracy the rule
/// converts into one.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(untagged)]
pub enum EtaSpec {
    Fixed(f64),
    ForAccuracy {
        for_epsilon: f64,
        #[serde(default)]
        rule: RuleName,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleName {
    #[default]
    Standard,
    Conservative,
}

impl From<RuleName> for EtaRule {
    fn from(r: RuleName) -> Self {
        match r {
            RuleName::Standard => EtaRule::Standard,
            RuleName::Conservative => EtaRule::Conservative,
        }
    }
}

/// Reference distribution: uniform over pairs, or the visitation of a seeded
/// behavior policy mixed with a floor.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum QConfig {
    Uniform,
    Behavior { floor: f64 },
}

impl Default for QConfig {
    fn default() -> Self {
        QConfig::Uniform
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerConfig {
    pub kind: RegKind,
    pub eta: EtaSpec,
    /// Exponent for the Tsallis divergence; must be present iff kind is
    /// tsallis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub q: QConfig,
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Multipliers {
    #[serde(default = "one")]
    pub xi: f64,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default = "one")]
    pub n: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for Multipliers {
    fn default() -> Self {
        Multipliers { xi: 1.0, tau: 1.0, n: 1.0 }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SolverConfig {
    Agd {
        max_iters: u64,
        #[serde(default)]
        grad_tol_l1: f64,
        record_every: u64,
        /// Sup-norm ball radius; derived from the measured visitation floor
        /// when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
    },
    Sgd {
        total_steps: u64,
        delta: f64,
        record_every: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        radius: Option<f64>,
        #[serde(default)]
        multipliers: Multipliers,
    },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    /// Random policies probed (beyond the deterministic enumeration) when
    /// measuring the visitation floor.
    pub rho_policies: usize,
    /// Sampled (value, policy) pairs for the weak-duality sweep.
    pub duality_pairs: usize,
    /// Sampled pairs for the smoothness envelope.
    pub envelope_trials: usize,
    /// Ball radius the envelope is probed in (kept small so curvature is
    /// actually exercised).
    pub envelope_radius: f64,
    /// Rescales the smoothness modulus; 1.0 checks the real constant,
    /// anything else is a deliberate negative control.
    pub smoothness_factor: f64,
    /// Horizons for the accelerated-rate envelope.
    pub rate_horizons: Vec<u64>,
    /// Dual points probed by the extraction check.
    pub extraction_points: usize,
    /// Iteration budget of the reference solve.
    pub ref_max_iters: u64,
    /// Gradient tolerance of the reference solve.
    pub ref_grad_tol: f64,
    /// Seed for every sampled check in the battery.
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            rho_policies: 64,
            duality_pairs: 500,
            envelope_trials: 200,
            envelope_radius: 0.5,
            smoothness_factor: 1.0,
            rate_horizons: vec![10, 100, 1000],
            extraction_points: 20,
            ref_max_iters: 200_000,
            ref_grad_tol: 1e-10,
            seed: 1,
        }
    }
}

/// Everything the commands need, resolved from a config (plus an optional
/// seed override).
pub struct ResolvedExperiment {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub problem: RegularizedProblem<f64>,
    pub eta: f64,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub rho_hat: f64,
    pub constants: TheoryConstants<f64>,
    /// Radius actually used by the solver (configured or derived).
    pub radius: f64,
}

fn build_reference(
    cfg: &ExperimentConfig,
    m: &Mdp<f64>,
    seed: u64,
) -> Result<ReferenceDistribution<f64>, CliError> {
    match cfg.regularizer.q {
        QConfig::Uniform => Ok(ReferenceDistribution::uniform(m.n_states, m.n_actions)),
        QConfig::Behavior { floor } => {
            let pi = random_policy(m.n_states, m.n_actions, seed, "behavior-policy", 0);
            behavior_reference(m, &pi, floor).map_err(CliError::from)
        }
    }
}

fn build_regularizer(
    cfg: &ExperimentConfig,
    eta: f64,
    q: ReferenceDistribution<f64>,
) -> Result<Regularizer<f64>, CliError> {
    match cfg.regularizer.kind {
        RegKind::Kl => {
            if cfg.regularizer.alpha.is_some() {
                return Err(CliError::Config(
                    "regularizer.alpha is only meaningful for kind \"tsallis\"".into(),
                ));
            }
            Ok(Regularizer::Kl(KlSpec::new(eta, q)?))
        }
        RegKind::Tsallis => {
            let alpha = cfg.regularizer.alpha.ok_or_else(|| {
                CliError::Config("regularizer.alpha is required for kind \"tsallis\"".into())
            })?;
            Ok(Regularizer::Tsallis(TsallisSpec::new(eta, alpha, q)?))
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid experiment config: {e}")))
    }

    /// Build the instance, resolve the temperature and radius, and measure
    /// the visitation floor.
    pub fn resolve(self, seed_override: Option<u64>) -> Result<ResolvedExperiment, CliError> {
        let seed = seed_override.unwrap_or(self.instance.seed);
        let inst = &self.instance;
        let m = random_mdp::<f64>(
            seed,
            inst.n_states,
            inst.n_actions,
            inst.branching,
            inst.gamma,
        )?;
        let q = build_reference(&self, &m, seed)?;
        let beta = q.beta;
        // The temperature rules only read the problem's shape and reference
        // floor, so a placeholder temperature is enough to evaluate them.
        let eta = match self.regularizer.eta {
            EtaSpec::Fixed(x) => x,
            EtaSpec::ForAccuracy { for_epsilon, rule } => {
                let probe = RegularizedProblem::new(
                    m.clone(),
                    build_regularizer(&self, 1.0, q.clone())?,
                )?;
                eta_for_accuracy(for_epsilon, &probe, rule.into())?
            }
        };
        let problem = RegularizedProblem::new(m, build_regularizer(&self, eta, q)?)?;
        let rho_hat =
            visitation_floor(&problem.mdp, self.verify.rho_policies, self.verify.seed)?;
        let constants = theory_constants(&problem, rho_hat)?;
        let configured_radius = match self.solver {
            SolverConfig::Agd { radius, .. } => radius,
            SolverConfig::Sgd { radius, .. } => radius,
        };
        let radius = configured_radius.unwrap_or(constants.radius);
        if !(radius.is_finite() && radius > 0.0) {
            return Err(CliError::Config("solver.radius must be finite and positive".into()));
        }
        let alpha = self.regularizer.alpha;
        Ok(ResolvedExperiment {
            config: self,
            seed,
            problem,
            eta,
            alpha,
            beta,
            rho_hat,
            constants,
            radius,
        })
    }
}
