//! Run configuration, profiles and the flat TOML config file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::GridSpec;
use crate::genome::{ControllerGenome, MutationRates};
use crate::phenotype::{ConstraintConfig, PhenotypeConfig};
use crate::simulator::SimConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Controller treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "STATIC")]
    Static,
    #[serde(rename = "GENOME")]
    Genome,
    #[serde(rename = "ES")]
    Es,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Static => "STATIC",
            Scheme::Genome => "GENOME",
            Scheme::Es => "ES",
        })
    }
}

impl FromStr for Scheme {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "STATIC" => Ok(Scheme::Static),
            "GENOME" => Ok(Scheme::Genome),
            "ES" => Ok(Scheme::Es),
            _ => Err(ConfigError::Invalid(format!("unknown scheme {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Paper,
    Desk,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        })
    }
}

/// Forward speed threshold used by the shipped profiles, m/s.
pub const PROFILE_MIN_SPEED: f64 = 0.3;

/// Controller used by STATIC and as the ES starting point in the shipped profiles.
pub fn profile_static_controller() -> ControllerGenome {
    ControllerGenome {
        stride_freq: 2.0,
        vert_offset: [0.5; 3],
        phase_offset: [std::f64::consts::FRAC_PI_2, 0.0, 0.0],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scheme: Scheme,
    pub init_population: usize,
    pub offspring_per_generation: usize,
    pub generations: usize,
    pub es_iterations: usize,
    /// Init attempts allowed per requested individual.
    pub init_attempt_factor: usize,
    /// Replace rejected offspring with fresh mutants until the batch is full.
    pub regenerate_offspring: bool,
    pub static_controller: ControllerGenome,
    pub mutation: MutationRates,
    pub grid: GridSpec,
    pub sim: SimConfig,
    pub constraints: ConstraintConfig,
    pub phenotype: PhenotypeConfig,
    pub master_seed: u64,
}

impl RunConfig {
    pub fn profile(profile: Profile, scheme: Scheme) -> Self {
        let (init_population, offspring_per_generation, generations) = match profile {
            Profile::Paper => (400, 60, 4000),
            Profile::Desk => (100, 30, 200),
        };
        Self {
            scheme,
            init_population,
            offspring_per_generation,
            generations,
            es_iterations: 20,
            init_attempt_factor: 1000,
            regenerate_offspring: false,
            static_controller: profile_static_controller(),
            mutation: MutationRates::default(),
            grid: GridSpec::default(),
            sim: SimConfig::default(),
            constraints: ConstraintConfig { min_speed: PROFILE_MIN_SPEED, ..ConstraintConfig::default() },
            phenotype: PhenotypeConfig::default(),
            master_seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.init_population == 0 || self.offspring_per_generation == 0 || self.init_attempt_factor == 0 {
            return bad("counts must be at least 1");
        }
        if !self.mutation.is_valid() {
            return bad("mutation rates must lie in [0, 1]");
        }
        if !self.grid.is_valid() {
            return bad("grid dimensions need lo < hi and at least one bin");
        }
        if !self.sim.is_valid() {
            return bad("sim needs dt > 0, duration >= dt, gravity > 0");
        }
        if !self.static_controller.is_valid() {
            return bad("static controller outside the controller gene ranges");
        }
        let c = &self.constraints;
        if !(c.max_mass.is_finite() && c.min_speed.is_finite() && c.min_height.is_finite()) {
            return bad("constraint limits must be finite");
        }
        Ok(())
    }

    /// Simulator calls per evaluated candidate.
    pub fn sims_per_candidate(&self) -> usize {
        match self.scheme {
            Scheme::Es => self.es_iterations + 1,
            Scheme::Static | Scheme::Genome => 1,
        }
    }
}

/// On-disk configuration. Every key is optional; missing keys come from the profile.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub profile: Option<Profile>,
    pub scheme: Option<Scheme>,
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub init_population: Option<usize>,
    pub offspring_per_generation: Option<usize>,
    pub generations: Option<usize>,
    pub es_iterations: Option<usize>,
    pub init_attempt_factor: Option<usize>,
    pub regenerate_offspring: Option<bool>,
    pub static_stride_freq: Option<f64>,
    pub static_vert_offset: Option<[f64; 3]>,
    pub static_phase_offset: Option<[f64; 3]>,
    pub modify_leg: Option<f64>,
    pub modify_num_legs: Option<f64>,
    pub modify_num_links: Option<f64>,
    pub modify_motor: Option<f64>,
    pub modify_leg_offset: Option<f64>,
    pub modify_body: Option<f64>,
    pub bins_per_dim: Option<usize>,
    pub max_mass: Option<f64>,
    pub min_speed: Option<f64>,
    pub min_height: Option<f64>,
    pub duration: Option<f64>,
    pub dt: Option<f64>,
    pub gravity: Option<f64>,
    pub stance_epsilon: Option<f64>,
    pub link_length_gain: Option<f64>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Applies the file on top of `profile` (or the file's own profile, else desk).
    pub fn resolve(&self, profile: Option<Profile>) -> Result<RunConfig, ConfigError> {
        let profile = profile.or(self.profile).unwrap_or(Profile::Desk);
        let mut c = RunConfig::profile(profile, self.scheme.unwrap_or(Scheme::Es));
        macro_rules! set {
            ($($src:ident => $dst:expr),* $(,)?) => {
                $(if let Some(v) = self.$src { $dst = v; })*
            };
        }
        set! {
            seed => c.master_seed,
            init_population => c.init_population,
            offspring_per_generation => c.offspring_per_generation,
            generations => c.generations,
            es_iterations => c.es_iterations,
            init_attempt_factor => c.init_attempt_factor,
            regenerate_offspring => c.regenerate_offspring,
            static_stride_freq => c.static_controller.stride_freq,
            static_vert_offset => c.static_controller.vert_offset,
            static_phase_offset => c.static_controller.phase_offset,
            modify_leg => c.mutation.modify_leg,
            modify_num_legs => c.mutation.modify_num_legs,
            modify_num_links => c.mutation.modify_num_links,
            modify_motor => c.mutation.modify_motor,
            modify_leg_offset => c.mutation.modify_leg_offset,
            modify_body => c.mutation.modify_body,
            max_mass => c.constraints.max_mass,
            min_speed => c.constraints.min_speed,
            min_height => c.constraints.min_height,
            duration => c.sim.duration,
            dt => c.sim.dt,
            gravity => c.sim.gravity,
            stance_epsilon => c.sim.stance_epsilon,
            link_length_gain => c.phenotype.link_length_gain,
        }
        if let Some(bins) = self.bins_per_dim {
            for d in c.grid.dims.iter_mut() {
                d.bins = bins;
                if d.integer {
                    d.hi = d.lo + bins as f64 - 1.0;
                }
            }
        }
        c.validate()?;
        Ok(c)
    }

    /// Fully populated file describing `c`; resolving it reproduces `c`.
    pub fn echo(c: &RunConfig, profile: Profile, output_dir: &Path) -> Self {
        Self {
            profile: Some(profile),
            scheme: Some(c.scheme),
            seed: Some(c.master_seed),
            output_dir: Some(output_dir.to_path_buf()),
            init_population: Some(c.init_population),
            offspring_per_generation: Some(c.offspring_per_generation),
            generations: Some(c.generations),
            es_iterations: Some(c.es_iterations),
            init_attempt_factor: Some(c.init_attempt_factor),
            regenerate_offspring: Some(c.regenerate_offspring),
            static_stride_freq: Some(c.static_controller.stride_freq),
            static_vert_offset: Some(c.static_controller.vert_offset),
            static_phase_offset: Some(c.static_controller.phase_offset),
            modify_leg: Some(c.mutation.modify_leg),
            modify_num_legs: Some(c.mutation.modify_num_legs),
            modify_num_links: Some(c.mutation.modify_num_links),
            modify_motor: Some(c.mutation.modify_motor),
            modify_leg_offset: Some(c.mutation.modify_leg_offset),
            modify_body: Some(c.mutation.modify_body),
            bins_per_dim: Some(c.grid.dims[0].bins),
            max_mass: Some(c.constraints.max_mass),
            min_speed: Some(c.constraints.min_speed),
            min_height: Some(c.constraints.min_height),
            duration: Some(c.sim.duration),
            dt: Some(c.sim.dt),
            gravity: Some(c.sim.gravity),
            stance_epsilon: Some(c.sim.stance_epsilon),
            link_length_gain: Some(c.phenotype.link_length_gain),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles() {
        let p = RunConfig::profile(Profile::Paper, Scheme::Es);
        assert_eq!((p.init_population, p.offspring_per_generation, p.generations, p.es_iterations), (400, 60, 4000, 20));
        let d = RunConfig::profile(Profile::Desk, Scheme::Static);
        assert_eq!((d.init_population, d.offspring_per_generation, d.generations, d.es_iterations), (100, 30, 200, 20));
        assert_eq!(d.sims_per_candidate(), 1);
        assert_eq!(p.sims_per_candidate(), 21);
        assert!(p.validate().is_ok());
        assert_eq!(d.constraints.max_mass, 60.0);
        assert_eq!(d.constraints.min_height, 2.0);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(matches!(ConfigFile::parse("generations = 3\nfoo = 1\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(ConfigFile::parse("scheme = \"NOPE\"\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn overrides_and_validation() {
        let f = ConfigFile::parse("profile = \"paper\"\nscheme = \"GENOME\"\ngenerations = 7\nstatic_stride_freq = 2.5\nmin_speed = 1.0\n").unwrap();
        let c = f.resolve(None).unwrap();
        assert_eq!(c.scheme, Scheme::Genome);
        assert_eq!(c.generations, 7);
        assert_eq!(c.init_population, 400);
        assert_eq!(c.static_controller.stride_freq, 2.5);
        assert_eq!(c.constraints.min_speed, 1.0);
        assert_eq!(f.resolve(Some(Profile::Desk)).unwrap().init_population, 100);

        let bad = ConfigFile::parse("init_population = 0\n").unwrap();
        assert!(matches!(bad.resolve(None), Err(ConfigError::Invalid(_))));
        let bad = ConfigFile::parse("static_stride_freq = 9.0\n").unwrap();
        assert!(bad.resolve(None).is_err());
        let bad = ConfigFile::parse("dt = 0.0\n").unwrap();
        assert!(bad.resolve(None).is_err());
    }

    #[test]
    fn echo_round_trip() {
        let f = ConfigFile::parse("scheme = \"STATIC\"\nseed = 42\nbins_per_dim = 4\ndt = 0.02\n").unwrap();
        let c = f.resolve(Some(Profile::Desk)).unwrap();
        assert_eq!(c.grid.dims[2].hi, 5.0);
        let echo = ConfigFile::echo(&c, Profile::Desk, Path::new("out"));
        let text = echo.to_toml();
        let back = ConfigFile::parse(&text).unwrap();
        assert_eq!(back, echo);
        assert_eq!(back.resolve(None).unwrap(), c);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("es".parse::<Scheme>().unwrap(), Scheme::Es);
        assert_eq!("STATIC".parse::<Scheme>().unwrap(), Scheme::Static);
        assert!("x".parse::<Scheme>().is_err());
        assert_eq!(Scheme::Genome.to_string(), "GENOME");
    }
}
