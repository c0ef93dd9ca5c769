//! Flat `key = value` run configuration with section prefixes (`model.mu = 0.5`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lastzero::validation::McSettings;
use lastzero::{Family, LevyModel, SolverConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: LevyModel,
    pub p: f64,
    pub solver: SolverConfig,
    pub sim: McSettings,
    pub x0: f64,
    pub out: Option<PathBuf>,
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

struct Entries(BTreeMap<String, (usize, String)>);

impl Entries {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        match self.0.remove(key) {
            None => Ok(None),
            Some((line, raw)) => raw
                .parse()
                .map(Some)
                .map_err(|_| bad(format!("line {line}: cannot read `{raw}` as a value for {key}"))),
        }
    }

    fn need(&mut self, key: &str) -> Result<f64, CliError> {
        self.take(key)?.ok_or_else(|| bad(format!("missing {key}")))
    }

    fn set<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<(), CliError> {
        if let Some(v) = self.take(key)? {
            *slot = v;
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(bad(format!("line {}: expected key = value", i + 1)));
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if map.insert(k.clone(), (i + 1, v)).is_some() {
                return Err(bad(format!("line {}: {k} given twice", i + 1)));
            }
        }
        let mut e = Entries(map);

        let family: String = e.take("model.family")?.ok_or_else(|| bad("missing model.family"))?;
        let family = match family.as_str() {
            "brownian" | "brownian-drift" => Family::BrownianDrift { mu: e.need("model.mu")?, sigma: e.need("model.sigma")? },
            "jump-diffusion" => Family::JumpDiffusion {
                mu: e.need("model.mu")?,
                sigma: e.need("model.sigma")?,
                lambda: e.need("model.lambda")?,
                rho: e.need("model.rho")?,
            },
            "cramer-lundberg" => {
                Family::CramerLundberg { c: e.need("model.c")?, lambda: e.need("model.lambda")?, rho: e.need("model.rho")? }
            }
            other => return Err(bad(format!("unknown model.family `{other}`"))),
        };
        let model = LevyModel::new(family).map_err(|err| bad(err.to_string()))?;
        let p = e.take("p")?.unwrap_or(2.0);

        let mut s = SolverConfig::default();
        e.set("solver.u_min", &mut s.u_min)?;
        e.set("solver.u_max", &mut s.u_max)?;
        e.set("solver.n_u", &mut s.n_u)?;
        e.set("solver.r_nodes", &mut s.r_nodes)?;
        e.set("solver.r_cut", &mut s.r_cut)?;
        e.set("solver.damping", &mut s.damping)?;
        e.set("solver.tol_fixed_point", &mut s.tol_fixed_point)?;
        e.set("solver.tol_smooth_fit", &mut s.tol_smooth_fit)?;
        e.set("solver.max_outer", &mut s.max_outer)?;
        e.set("solver.max_inner", &mut s.max_inner)?;
        e.set("solver.fd_step", &mut s.fd_step)?;
        e.set("solver.closure_delta", &mut s.closure_delta)?;
        e.set("solver.closure_h", &mut s.closure_h)?;
        e.set("solver.mc_kernel_paths", &mut s.mc_kernel_paths)?;
        e.set("solver.n_s", &mut s.n_s)?;
        e.set("solver.n_z", &mut s.n_z)?;
        e.set("solver.seed", &mut s.seed)?;
        s.check().map_err(|err| bad(err.to_string()))?;

        let mut sim = McSettings::default();
        e.set("sim.n_paths", &mut sim.n_paths)?;
        e.set("sim.horizon", &mut sim.horizon)?;
        e.set("sim.dt", &mut sim.dt)?;
        e.set("sim.master_seed", &mut sim.seed)?;
        let x0 = e.take("sim.x0")?.unwrap_or(0.0);
        let out = e.take::<String>("out")?.map(PathBuf::from);

        if let Some((k, (line, _))) = e.0.into_iter().next() {
            return Err(bad(format!("line {line}: unknown key {k}")));
        }
        Ok(Self { model, p, solver: s, sim, x0, out })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_a_full_file() {
        let c = RunConfig::parse(
            "# jump model\nmodel.family = jump-diffusion\nmodel.mu=3\nmodel.sigma=1\nmodel.lambda=1\nmodel.rho=1\n\
             solver.n_u = 30  # coarse\nsim.n_paths=1000\nsim.master_seed=9\n",
        )
        .unwrap();
        assert_eq!(c.model, LevyModel::jump_diffusion(3.0, 1.0, 1.0, 1.0).unwrap());
        assert_eq!(c.solver.n_u, 30);
        assert_eq!(c.sim.n_paths, 1000);
        assert_eq!(c.sim.seed, 9);
        assert_eq!(c.p, 2.0);
    }

    #[test]
    fn rejects_unknown_and_repeated_keys() {
        let base = "model.family=brownian\nmodel.mu=0.5\nmodel.sigma=1\n";
        assert!(RunConfig::parse(base).is_ok());
        assert!(RunConfig::parse(&format!("{base}solver.nu=3\n")).is_err());
        assert!(RunConfig::parse(&format!("{base}model.mu=1\n")).is_err());
        assert!(RunConfig::parse(&format!("{base}sim.dt=fast\n")).is_err());
        assert!(RunConfig::parse("model.family=brownian\nmodel.mu=0.5\n").is_err());
        assert!(RunConfig::parse("model.family=stable\n").is_err());
        assert!(RunConfig::parse("model.family brownian\n").is_err());
    }
}
