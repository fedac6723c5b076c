//! Uniform front end over every single-step sampler.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::auxiliary::{build_aux_tables, build_global_table, AuxAssignment, AuxTable, AuxTables, MinibatchConfig};
use crate::continuous::{
    gibbs_da_update, gibbs_its_update, pgda_update, pgits_update, rejection_update, ContinuousSamplerConfig, Envelope,
};
use crate::discrete::{gibbs_update, poisson_gibbs_update};
use crate::error::{Error, Result};
use crate::factor_graph::{FactorGraph, State};
use crate::mh::{mh_step, poisson_mh_step, ProposalKernel};
use crate::step::StepReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Gibbs,
    PoissonGibbs,
    Pgits,
    Pgda,
    GibbsIts,
    GibbsDa,
    Rejection,
    PoissonMh,
    Mh,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 9] = [
        SamplerKind::Gibbs,
        SamplerKind::PoissonGibbs,
        SamplerKind::Pgits,
        SamplerKind::Pgda,
        SamplerKind::GibbsIts,
        SamplerKind::GibbsDa,
        SamplerKind::Rejection,
        SamplerKind::PoissonMh,
        SamplerKind::Mh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Gibbs => "gibbs",
            SamplerKind::PoissonGibbs => "poisson-gibbs",
            SamplerKind::Pgits => "pgits",
            SamplerKind::Pgda => "pgda",
            SamplerKind::GibbsIts => "gibbs-its",
            SamplerKind::GibbsDa => "gibbs-da",
            SamplerKind::Rejection => "rejection",
            SamplerKind::PoissonMh => "poisson-mh",
            SamplerKind::Mh => "mh",
        }
    }

    /// Whether the sampler draws Poisson auxiliary variables.
    pub fn is_minibatched(self) -> bool {
        matches!(self, SamplerKind::PoissonGibbs | SamplerKind::Pgits | SamplerKind::Pgda | SamplerKind::PoissonMh)
    }

    /// `Some(true)` for discrete-only, `Some(false)` for continuous-only.
    fn requires_discrete(self) -> Option<bool> {
        match self {
            SamplerKind::Gibbs | SamplerKind::PoissonGibbs => Some(true),
            SamplerKind::Mh | SamplerKind::PoissonMh => None,
            _ => Some(false),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SamplerKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sampler '{s}'")))
    }
}

/// Order in which single-site samplers visit variables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scan {
    /// Uniform with replacement; the setting the gap bounds hold for.
    #[default]
    Random,
    /// `0, 1, …, n−1`, then wrap.
    Systematic,
}

impl FromStr for Scan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Scan::Random),
            "systematic" => Ok(Scan::Systematic),
            _ => Err(Error::Config(format!("unknown scan '{s}'"))),
        }
    }
}

/// Fully resolved sampler parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerSettings {
    pub kind: SamplerKind,
    /// Absolute `λ`; ignored by samplers without auxiliary variables.
    pub lambda: f64,
    pub m: usize,
    pub k: usize,
    pub envelope: Envelope,
    pub max_trials: u64,
    pub proposal: ProposalKernel,
}

enum Aux {
    None,
    Local(AuxTables),
    Global(AuxTable, MinibatchConfig),
}

/// A sampler bound to one graph. Holds the routing tables and scratch
/// space, so each chain needs its own instance.
pub struct Sampler<'g> {
    graph: &'g FactorGraph,
    settings: SamplerSettings,
    continuous: ContinuousSamplerConfig,
    aux: Aux,
    scratch: AuxAssignment,
    scan: Scan,
    next: usize,
}

impl<'g> Sampler<'g> {
    pub fn new(graph: &'g FactorGraph, settings: SamplerSettings) -> Result<Self> {
        let kind = settings.kind;
        match (kind.requires_discrete(), graph.domain().is_discrete()) {
            (Some(true), false) => return Err(Error::WrongDomain { expected: "discrete" }),
            (Some(false), true) => return Err(Error::WrongDomain { expected: "continuous" }),
            _ => {}
        }
        let continuous = ContinuousSamplerConfig {
            m: settings.m,
            k: settings.k,
            envelope: settings.envelope,
            max_trials: settings.max_trials,
        };
        if kind.requires_discrete() == Some(false) {
            continuous.validate()?;
        }
        if matches!(kind, SamplerKind::Mh | SamplerKind::PoissonMh) {
            settings.proposal.validate(graph)?;
        }
        let aux = match kind {
            SamplerKind::PoissonGibbs | SamplerKind::Pgits | SamplerKind::Pgda => {
                Aux::Local(build_aux_tables(graph, MinibatchConfig::new(settings.lambda)?)?)
            }
            SamplerKind::PoissonMh => {
                let cfg = MinibatchConfig::new(settings.lambda)?;
                Aux::Global(build_global_table(graph, cfg)?, cfg)
            }
            _ => Aux::None,
        };
        Ok(Sampler { graph, settings, continuous, aux,
            scratch: AuxAssignment::new(graph.num_factors()),
            scan: Scan::Random,
            next: 0,
        })
    }

    /// Sets the visiting order. Joint-proposal samplers accept only random scan.
    pub fn with_scan(mut self, scan: Scan) -> Result<Self> {
        if scan == Scan::Systematic && matches!(self.settings.kind, SamplerKind::Mh | SamplerKind::PoissonMh) {
            return Err(Error::Config(format!("{} proposes joint moves and has no scan order", self.settings.kind)));
        }
        self.scan = scan;
        Ok(self)
    }

    pub fn scan(&self) -> Scan {
        self.scan
    }

    pub fn settings(&self) -> &SamplerSettings {
        &self.settings
    }

    pub fn graph(&self) -> &FactorGraph {
        self.graph
    }

    pub fn step<R: Rng + ?Sized>(&mut self, x: &mut State, rng: &mut R) -> Result<StepReport> {
        let g = self.graph;
        let cfg = &self.continuous;
        let scratch = &mut self.scratch;
        let kind = self.settings.kind;
        match (&self.aux, kind) {
            (Aux::Global(t, mb), SamplerKind::PoissonMh) => {
                return poisson_mh_step(g, t, *mb, &self.settings.proposal, x, rng, scratch);
            }
            (Aux::None, SamplerKind::Mh) => return mh_step(g, &self.settings.proposal, x, rng),
            _ => {}
        }
        let i = match self.scan {
            Scan::Random => rng.random_range(0..g.num_variables()),
            Scan::Systematic => {
                let i = self.next;
                self.next = (i + 1) % g.num_variables();
                i
            }
        };
        match (&self.aux, kind) {
            (Aux::None, SamplerKind::Gibbs) => gibbs_update(g, i, x, rng),
            (Aux::Local(t), SamplerKind::PoissonGibbs) => poisson_gibbs_update(g, t, i, x, rng, scratch),
            (Aux::Local(t), SamplerKind::Pgits) => pgits_update(g, t, cfg, i, x, rng, scratch),
            (Aux::Local(t), SamplerKind::Pgda) => pgda_update(g, t, cfg, i, x, rng, scratch),
            (Aux::None, SamplerKind::GibbsIts) => gibbs_its_update(g, cfg, i, x, rng),
            (Aux::None, SamplerKind::GibbsDa) => gibbs_da_update(g, cfg, i, x, rng),
            (Aux::None, SamplerKind::Rejection) => rejection_update(g, cfg, i, x, rng),
            _ => unreachable!("auxiliary tables are built to match the sampler kind"),
        }
    }
}
