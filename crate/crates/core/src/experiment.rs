//! Simulation runs and experiment grids: phantom, PSF, acquisition,
//! reconstruction and metrics, driven by flat `key = value` parameters.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::admm::{admm_reconstruct, Prior, SolverConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::io::{self, KeyValues};
use crate::metrics::{self, RegionSpec};
use crate::phantoms::{self, AcquisitionSpec, CystParams, GgdParams, SheppLoganVariant};
use crate::psf::PsfOperator;
use crate::sequential::{sequential_reconstruct, SequentialConfig};
use crate::transforms::HaarWavelet;

/// Independent seeds for the three random stages of one run, expanded from
/// the run seed with ChaCha8 (phantom first, then sensing, then noise).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStreams {
    pub phantom: u64,
    pub sensing: u64,
    pub noise: u64,
}

impl SeedStreams {
    pub fn derive(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            phantom: rng.next_u64(),
            sensing: rng.next_u64(),
            noise: rng.next_u64(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhantomKind {
    SheppLogan,
    /// Shepp-Logan intensities modulating GGD speckle.
    ModifiedSheppLogan,
    RoundCyst,
    File(PathBuf),
}

impl PhantomKind {
    pub fn name(&self) -> String {
        match self {
            PhantomKind::SheppLogan => "shepp_logan".into(),
            PhantomKind::ModifiedSheppLogan => "modified_shepp_logan".into(),
            PhantomKind::RoundCyst => "round_cyst".into(),
            PhantomKind::File(p) => format!("file:{}", p.display()),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let norm = s.trim().replace('-', "_");
        Ok(match norm.as_str() {
            "shepp_logan" => PhantomKind::SheppLogan,
            "modified_shepp_logan" => PhantomKind::ModifiedSheppLogan,
            "round_cyst" | "cyst" => PhantomKind::RoundCyst,
            _ => match s.trim().strip_prefix("file:") {
                Some(path) => PhantomKind::File(PathBuf::from(path)),
                None => return Err(Error::InvalidParameter(format!("unknown phantom kind `{s}`"))),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub kind: PhantomKind,
    pub size: usize,
    pub shepp_variant: SheppLoganVariant,
    pub ggd_shape: f64,
    pub ggd_scale: f64,
    /// Mean scatterers per pixel.
    pub scatterer_density: f64,
    pub cyst_radius: f64,
    pub cyst_attenuation: f64,
}

impl PhantomSpec {
    /// Defaults of each kind: GGD shape 1.3 for the speckle Shepp-Logan and
    /// 1 for the cyst, unit scale and density, cyst radius `0.2·size`.
    pub fn new(kind: PhantomKind, size: usize) -> Self {
        let ggd_shape = match kind {
            PhantomKind::RoundCyst => 1.0,
            _ => 1.3,
        };
        Self {
            kind,
            size,
            shepp_variant: SheppLoganVariant::default(),
            ggd_shape,
            ggd_scale: 1.0,
            scatterer_density: 1.0,
            cyst_radius: 0.2,
            cyst_attenuation: 0.1,
        }
    }

    pub fn build(&self, seed: u64) -> Result<Image> {
        match &self.kind {
            PhantomKind::SheppLogan => phantoms::shepp_logan_variant(self.size, self.shepp_variant),
            PhantomKind::ModifiedSheppLogan => {
                let base = phantoms::shepp_logan_variant(self.size, self.shepp_variant)?;
                let ggd = GgdParams::new(self.ggd_shape, self.ggd_scale, seed)?;
                phantoms::speckle_trf(&base, self.scatterer_density, &ggd)
            }
            PhantomKind::RoundCyst => round_cyst(self, seed),
            PhantomKind::File(path) => io::read_pfm(path),
        }
    }

    /// Cyst interior vs. an equal square of background on the same rows.
    pub fn cnr_regions(&self) -> Option<(RegionSpec, RegionSpec)> {
        if self.kind != PhantomKind::RoundCyst {
            return None;
        }
        let n = self.size;
        let radius = self.cyst_radius * n as f64;
        let side = ((radius * std::f64::consts::SQRT_2) as usize).saturating_sub(2);
        let gap = (n / 2).checked_sub(radius.ceil() as usize + side)?;
        if side < 2 {
            return None;
        }
        let start = (n - side) / 2;
        let inside = RegionSpec::new(start, start, side, side);
        let outside = RegionSpec::new(start, gap / 2, side, side);
        (!inside.overlaps(&outside)).then_some((inside, outside))
    }

    pub fn write(&self, kv: &mut KeyValues) {
        kv.set("phantom", self.kind.name());
        kv.set("size", self.size);
        kv.set(
            "shepp_variant",
            match self.shepp_variant {
                SheppLoganVariant::Toft => "toft",
                SheppLoganVariant::Original => "original",
            },
        );
        kv.set("ggd_shape", fmt_f64(self.ggd_shape));
        kv.set("ggd_scale", fmt_f64(self.ggd_scale));
        kv.set("scatterer_density", fmt_f64(self.scatterer_density));
        kv.set("cyst_radius", fmt_f64(self.cyst_radius));
        kv.set("cyst_attenuation", fmt_f64(self.cyst_attenuation));
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let kind = PhantomKind::parse(kv.get("phantom").unwrap_or("shepp_logan"))?;
        let size = kv.parse_value("size")?.unwrap_or(256);
        let mut spec = Self::new(kind, size);
        if let Some(v) = kv.get("shepp_variant") {
            spec.shepp_variant = match v {
                "toft" => SheppLoganVariant::Toft,
                "original" => SheppLoganVariant::Original,
                other => return Err(Error::InvalidParameter(format!("unknown shepp_variant `{other}`"))),
            };
        }
        override_f64(kv, "ggd_shape", &mut spec.ggd_shape)?;
        override_f64(kv, "ggd_scale", &mut spec.ggd_scale)?;
        override_f64(kv, "scatterer_density", &mut spec.scatterer_density)?;
        override_f64(kv, "cyst_radius", &mut spec.cyst_radius)?;
        override_f64(kv, "cyst_attenuation", &mut spec.cyst_attenuation)?;
        Ok(spec)
    }
}

fn round_cyst(spec: &PhantomSpec, seed: u64) -> Result<Image> {
    let mut params = CystParams::new(spec.size, spec.cyst_radius, seed);
    params.attenuation = spec.cyst_attenuation;
    params.scatterer_density = spec.scatterer_density;
    params.ggd = GgdParams::new(spec.ggd_shape, spec.ggd_scale, seed)?;
    phantoms::round_cyst_trf(&params)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PsfKind {
    Gaussian,
    Gabor,
    File(PathBuf),
}

impl PsfKind {
    pub fn name(&self) -> String {
        match self {
            PsfKind::Gaussian => "gaussian".into(),
            PsfKind::Gabor => "gabor".into(),
            PsfKind::File(p) => format!("file:{}", p.display()),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "gaussian" => PsfKind::Gaussian,
            "gabor" => PsfKind::Gabor,
            other => match other.strip_prefix("file:") {
                Some(path) => PsfKind::File(PathBuf::from(path)),
                None => return Err(Error::InvalidParameter(format!("unknown psf kind `{s}`"))),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsfSpec {
    pub kind: PsfKind,
    /// Odd kernel side length.
    pub kernel_size: usize,
    /// Gaussian variance in pixels².
    pub variance: f64,
    /// Gabor axial frequency in cycles per sample.
    pub axial_freq: f64,
    pub axial_sigma: f64,
    pub lateral_sigma: f64,
}

impl PsfSpec {
    pub fn gaussian(variance: f64) -> Self {
        Self {
            kind: PsfKind::Gaussian,
            kernel_size: 17,
            variance,
            axial_freq: phantoms::DEFAULT_AXIAL_FREQ,
            axial_sigma: 4.0,
            lateral_sigma: 2.0,
        }
    }

    pub fn gabor() -> Self {
        Self {
            kind: PsfKind::Gabor,
            kernel_size: 25,
            ..Self::gaussian(5.0)
        }
    }

    pub fn kernel(&self) -> Result<Image> {
        match &self.kind {
            PsfKind::Gaussian => phantoms::gaussian_psf(self.kernel_size, self.variance),
            PsfKind::Gabor => phantoms::gabor_psf(self.axial_freq, self.axial_sigma, self.lateral_sigma, self.kernel_size),
            PsfKind::File(path) => io::read_pfm(path),
        }
    }

    pub fn write(&self, kv: &mut KeyValues) {
        kv.set("psf", self.kind.name());
        kv.set("psf_size", self.kernel_size);
        kv.set("psf_variance", fmt_f64(self.variance));
        kv.set("psf_axial_freq", fmt_f64(self.axial_freq));
        kv.set("psf_axial_sigma", fmt_f64(self.axial_sigma));
        kv.set("psf_lateral_sigma", fmt_f64(self.lateral_sigma));
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let kind = PsfKind::parse(kv.get("psf").unwrap_or("gaussian"))?;
        let mut spec = match kind {
            PsfKind::Gabor => Self::gabor(),
            _ => Self {
                kind,
                ..Self::gaussian(5.0)
            },
        };
        if let Some(n) = kv.parse_value("psf_size")? {
            spec.kernel_size = n;
        }
        override_f64(kv, "psf_variance", &mut spec.variance)?;
        override_f64(kv, "psf_axial_freq", &mut spec.axial_freq)?;
        override_f64(kv, "psf_axial_sigma", &mut spec.axial_sigma)?;
        override_f64(kv, "psf_lateral_sigma", &mut spec.lateral_sigma)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolverSpec {
    Admm(SolverConfig),
    Sequential(SequentialConfig),
}

impl SolverSpec {
    /// Short method name, e.g. `ADMM_L1.3`, `ADMM_GTV`, `SEQ_L1`.
    pub fn label(&self) -> String {
        match self {
            SolverSpec::Admm(c) => match c.prior {
                Prior::Lp { p } => format!("ADMM_L{}", fmt_f64(p)),
                Prior::Gtv { .. } => "ADMM_GTV".into(),
            },
            SolverSpec::Sequential(c) => format!("SEQ_L{}", fmt_f64(c.p)),
        }
    }

    /// Solver kind as used in parameter files.
    pub fn kind_name(&self) -> &'static str {
        match self {
            SolverSpec::Admm(c) => match c.prior {
                Prior::Lp { .. } => "admm_lp",
                Prior::Gtv { .. } => "admm_gtv",
            },
            SolverSpec::Sequential(_) => "sequential",
        }
    }

    /// `p` of the ℓp prior, or the GTV exponent.
    pub fn exponent(&self) -> f64 {
        match self {
            SolverSpec::Admm(c) => c.prior.exponent(),
            SolverSpec::Sequential(c) => c.p,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SolverSpec::Admm(c) => c.validate(),
            SolverSpec::Sequential(c) => c.validate(),
        }
    }

    pub fn write(&self, kv: &mut KeyValues) {
        kv.set("solver", self.kind_name());
        match self {
            SolverSpec::Admm(c) => {
                kv.set("p", fmt_f64(c.prior.exponent()));
                kv.set("alpha", fmt_f64(c.alpha));
                kv.set("mu", fmt_f64(c.mu));
                kv.set("beta", fmt_f64(c.beta));
                kv.set("gamma", c.gamma.map_or_else(|| "auto".to_string(), fmt_f64));
                kv.set("rel_tol", fmt_f64(c.rel_tol));
                kv.set("max_iter", c.max_iter);
                kv.set("gtv_inner_iter", c.gtv_inner_iter);
                kv.set("gtv_epsilon", fmt_f64(c.gtv_epsilon));
                kv.set("cg_tol", fmt_f64(c.cg_tol));
                kv.set("cg_max_iter", c.cg_max_iter);
                kv.set("newton_tol", fmt_f64(c.newton_tol));
                kv.set("newton_max_iter", c.newton_max_iter);
            }
            SolverSpec::Sequential(c) => {
                kv.set("p", fmt_f64(c.p));
                kv.set("alpha", fmt_f64(c.alpha));
                kv.set("mu", fmt_f64(c.mu));
                kv.set("fista_tol", fmt_f64(c.fista_tol));
                kv.set("fista_max_iter", c.fista_max_iter);
                kv.set("fb_step", c.fb_step.map_or_else(|| "auto".to_string(), fmt_f64));
                kv.set("fb_tol", fmt_f64(c.fb_tol));
                kv.set("fb_max_iter", c.fb_max_iter);
            }
        }
    }

    /// Reads `solver` plus its hyperparameters. Keys prefixed by the solver
    /// kind (`admm_gtv.beta = 100`) take precedence over bare keys.
    pub fn from_key_values(kind: &str, kv: &KeyValues) -> Result<Self> {
        let kind = kind.trim().replace('-', "_");
        let scoped = |key: &str| -> Option<String> {
            kv.get(&format!("{kind}.{key}"))
                .or_else(|| kv.get(key))
                .map(str::to_string)
        };
        let num = |key: &str| -> Result<Option<f64>> {
            scoped(key)
                .map(|v| v.parse::<f64>().map_err(|e| Error::Format(format!("bad value for `{key}` (`{v}`): {e}"))))
                .transpose()
        };
        let count = |key: &str| -> Result<Option<usize>> {
            scoped(key)
                .map(|v| v.parse::<usize>().map_err(|e| Error::Format(format!("bad value for `{key}` (`{v}`): {e}"))))
                .transpose()
        };
        let optional = |key: &str| -> Result<Option<f64>> {
            match scoped(key).as_deref() {
                None | Some("auto") => Ok(None),
                Some(_) => num(key),
            }
        };
        let required = |key: &str| -> Result<f64> {
            num(key)?.ok_or_else(|| Error::InvalidParameter(format!("solver `{kind}` needs `{key}`")))
        };
        let spec = match kind.as_str() {
            "admm_lp" | "admm" | "admm_gtv" => {
                let prior = if kind == "admm_gtv" || scoped("prior").as_deref() == Some("gtv") {
                    Prior::Gtv {
                        p: num("p")?.unwrap_or(SolverConfig::DEFAULT_GTV_P),
                    }
                } else {
                    Prior::Lp {
                        p: num("p")?.unwrap_or(1.0),
                    }
                };
                let mut c = SolverConfig::new(prior, required("alpha")?, required("mu")?, required("beta")?);
                c.gamma = optional("gamma")?;
                override_opt(num("rel_tol")?, &mut c.rel_tol);
                override_opt(count("max_iter")?, &mut c.max_iter);
                override_opt(count("gtv_inner_iter")?, &mut c.gtv_inner_iter);
                override_opt(num("gtv_epsilon")?, &mut c.gtv_epsilon);
                override_opt(num("cg_tol")?, &mut c.cg_tol);
                override_opt(count("cg_max_iter")?, &mut c.cg_max_iter);
                override_opt(num("newton_tol")?, &mut c.newton_tol);
                override_opt(count("newton_max_iter")?, &mut c.newton_max_iter);
                SolverSpec::Admm(c)
            }
            "sequential" => {
                let mut c = SequentialConfig::new(required("mu")?, required("alpha")?, num("p")?.unwrap_or(1.0));
                override_opt(num("fista_tol")?, &mut c.fista_tol);
                override_opt(count("fista_max_iter")?, &mut c.fista_max_iter);
                c.fb_step = optional("fb_step")?;
                override_opt(num("fb_tol")?, &mut c.fb_tol);
                override_opt(count("fb_max_iter")?, &mut c.fb_max_iter);
                SolverSpec::Sequential(c)
            }
            other => return Err(Error::InvalidParameter(format!("unknown solver `{other}`"))),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// One fully specified simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub phantom: PhantomSpec,
    pub psf: PsfSpec,
    pub cs_ratio: f64,
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub solver: SolverSpec,
    pub wavelet_levels: usize,
}

impl RunSpec {
    pub fn seeds(&self) -> SeedStreams {
        SeedStreams::derive(self.seed)
    }

    pub fn acquisition(&self) -> AcquisitionSpec {
        let s = self.seeds();
        AcquisitionSpec {
            cs_ratio: self.cs_ratio,
            snr_db: self.snr_db,
            sensing_seed: s.sensing,
            noise_seed: s.noise,
        }
    }

    /// Every parameter and derived seed, as written to sidecars.
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        self.phantom.write(&mut kv);
        self.psf.write(&mut kv);
        self.solver.write(&mut kv);
        kv.set("cs_ratio", fmt_f64(self.cs_ratio));
        kv.set("snr_db", fmt_snr(self.snr_db));
        kv.set("seed", self.seed);
        let s = self.seeds();
        kv.set("phantom_seed", s.phantom);
        kv.set("sensing_seed", s.sensing);
        kv.set("noise_seed", s.noise);
        kv.set("wavelet_levels", self.wavelet_levels);
        kv
    }

    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let solver = SolverSpec::from_key_values(kv.get("solver").unwrap_or("admm_lp"), kv)?;
        let spec = Self {
            phantom: PhantomSpec::from_key_values(kv)?,
            psf: PsfSpec::from_key_values(kv)?,
            cs_ratio: kv.parse_value("cs_ratio")?.unwrap_or(0.5),
            snr_db: parse_snr(kv.get("snr_db").unwrap_or("none"))?,
            seed: kv.parse_value("seed")?.unwrap_or(0),
            solver,
            wavelet_levels: kv.parse_value("wavelet_levels")?.unwrap_or(3),
        };
        if kv.contains("sensing_seed") && kv.parse_value::<u64>("sensing_seed")? != Some(spec.seeds().sensing) {
            return Err(Error::InvalidParameter("sensing_seed does not match the run seed".into()));
        }
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub psnr_db: f64,
    pub ssim: f64,
    pub cnr: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub rel_change: f64,
    /// Combined primal residual at termination over its first value (ADMM only).
    pub residual_reduction: Option<f64>,
    pub measurements: usize,
    pub realized_snr_db: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub truth: Image,
    pub estimate: Image,
    pub metrics: RunMetrics,
}

/// Builds the phantom and PSF, simulates the acquisition, reconstructs and
/// scores the estimate.
pub fn run(spec: &RunSpec) -> Result<RunOutcome> {
    spec.solver.validate()?;
    let seeds = spec.seeds();
    let truth = spec.phantom.build(seeds.phantom)?;
    let (h, w) = truth.shape();
    let kernel = spec.psf.kernel()?;
    let psf = PsfOperator::new(&kernel, h, w)?;
    let acq = phantoms::acquire(&truth, &psf, &spec.acquisition())?;
    let wavelet = HaarWavelet::new(spec.wavelet_levels, h, w)?;
    let (estimate, iterations, converged, rel_change, residual_reduction, seconds) = match &spec.solver {
        SolverSpec::Admm(config) => {
            let (x, report) = admm_reconstruct(&acq.measurements, &acq.sensing, &psf, &wavelet, config)?;
            let reduction = report.residual_reduction();
            (x, report.iterations, report.converged, report.rel_change, Some(reduction), report.wall_seconds)
        }
        SolverSpec::Sequential(config) => {
            let (x, report) = sequential_reconstruct(&acq.measurements, &acq.sensing, &psf, &wavelet, config)?;
            (
                x,
                report.iterations(),
                report.converged(),
                report.deconvolution.rel_change,
                None,
                report.wall_seconds,
            )
        }
    };
    let cnr = match spec.phantom.cnr_regions() {
        Some((r1, r2)) => metrics::cnr(&estimate, &r1, &r2).ok(),
        None => None,
    };
    let metrics = RunMetrics {
        psnr_db: metrics::psnr(&truth, &estimate)?,
        ssim: metrics::ssim_global(&truth, &estimate)?,
        cnr,
        iterations,
        converged,
        rel_change,
        residual_reduction,
        measurements: acq.measurements.len(),
        realized_snr_db: acq.realized_snr_db(),
        seconds,
    };
    Ok(RunOutcome {
        truth,
        estimate,
        metrics,
    })
}

/// Grid over phantom × solver × SNR × CS ratio × seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    pub phantom: PhantomSpec,
    pub psf: PsfSpec,
    pub cs_ratios: Vec<f64>,
    pub snr_db: Vec<Option<f64>>,
    pub solvers: Vec<SolverSpec>,
    pub seeds: Vec<u64>,
    pub wavelet_levels: usize,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cs_ratios.is_empty() {
            return Err(Error::InvalidParameter("cs_ratios must not be empty".into()));
        }
        if let Some(r) = self.cs_ratios.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::InvalidParameter(format!("cs ratio must lie in (0, 1], got {r}")));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidParameter("seeds must not be empty".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::InvalidParameter("snr_db must not be empty".into()));
        }
        if self.solvers.is_empty() {
            return Err(Error::InvalidParameter("at least one solver is required".into()));
        }
        for s in &self.solvers {
            s.validate()?;
        }
        Ok(())
    }

    /// Run specifications in a fixed order: solver, SNR, ratio, seed.
    pub fn runs(&self) -> Vec<RunSpec> {
        let mut out = Vec::new();
        for solver in &self.solvers {
            for &snr_db in &self.snr_db {
                for &cs_ratio in &self.cs_ratios {
                    for &seed in &self.seeds {
                        out.push(RunSpec {
                            phantom: self.phantom.clone(),
                            psf: self.psf.clone(),
                            cs_ratio,
                            snr_db,
                            seed,
                            solver: solver.clone(),
                            wavelet_levels: self.wavelet_levels,
                        });
                    }
                }
            }
        }
        out
    }

    /// Parses a flat parameter file. List-valued keys (`cs_ratios`,
    /// `snr_db`, `solver`, `seeds`) are comma-separated.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let cs_ratios = kv
            .parse_list::<f64>("cs_ratios")?
            .ok_or_else(|| Error::InvalidParameter("missing `cs_ratios`".into()))?;
        let seeds = kv
            .parse_list::<u64>("seeds")?
            .ok_or_else(|| Error::InvalidParameter("missing `seeds`".into()))?;
        let snr_db = kv
            .get("snr_db")
            .unwrap_or("none")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(parse_snr)
            .collect::<Result<Vec<_>>>()?;
        let solvers = kv
            .get("solver")
            .ok_or_else(|| Error::InvalidParameter("missing `solver`".into()))?
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|kind| SolverSpec::from_key_values(kind, kv))
            .collect::<Result<Vec<_>>>()?;
        let spec = Self {
            name: kv.get("name").unwrap_or("experiment").to_string(),
            phantom: PhantomSpec::from_key_values(kv)?,
            psf: PsfSpec::from_key_values(kv)?,
            cs_ratios,
            snr_db,
            solvers,
            seeds,
            wavelet_levels: kv.parse_value("wavelet_levels")?.unwrap_or(3),
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Outcome of one grid cell; failures are kept rather than aborting the grid.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub index: usize,
    pub spec: RunSpec,
    pub result: std::result::Result<RunMetrics, String>,
}

/// Runs every cell on a pool of `threads` workers (0 lets rayon decide).
/// `on_outcome` sees each finished run, e.g. to write its images.
pub fn run_grid<F>(spec: &ExperimentSpec, threads: usize, on_outcome: F) -> Result<Vec<RunRecord>>
where
    F: Fn(usize, &RunSpec, &Result<RunOutcome>) + Sync,
{
    spec.validate()?;
    let runs = spec.runs();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
    let records = pool.install(|| {
        runs.into_par_iter()
            .enumerate()
            .map(|(index, run_spec)| {
                let outcome = run(&run_spec);
                on_outcome(index, &run_spec, &outcome);
                RunRecord {
                    index,
                    result: outcome.map(|o| o.metrics).map_err(|e| e.to_string()),
                    spec: run_spec,
                }
            })
            .collect()
    });
    Ok(records)
}

/// Means over the successful seeds of one (solver, SNR, ratio) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub solver: String,
    pub snr_db: Option<f64>,
    pub cs_ratio: f64,
    pub runs: usize,
    pub failures: usize,
    pub psnr_db: f64,
    pub ssim: f64,
    pub cnr: Option<f64>,
    pub iterations: f64,
    pub seconds: f64,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    // Keyed by first appearance so rows follow the grid order.
    let mut order: Vec<(String, Option<u64>, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, Option<u64>, u64), Vec<&RunRecord>> = BTreeMap::new();
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.index);
    for r in sorted {
        let key = (r.spec.solver.label(), r.spec.snr_db.map(f64::to_bits), r.spec.cs_ratio.to_bits());
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let group = &groups[&key];
            let ok: Vec<&RunMetrics> = group.iter().filter_map(|r| r.result.as_ref().ok()).collect();
            let pick = |f: fn(&RunMetrics) -> f64| mean(&ok.iter().map(|m| f(m)).collect::<Vec<_>>());
            let cnrs: Vec<f64> = ok.iter().filter_map(|m| m.cnr).collect();
            AggregateRow {
                solver: key.0.clone(),
                snr_db: group[0].spec.snr_db,
                cs_ratio: group[0].spec.cs_ratio,
                runs: ok.len(),
                failures: group.len() - ok.len(),
                psnr_db: pick(|m| m.psnr_db),
                ssim: pick(|m| m.ssim),
                cnr: (cnrs.len() == ok.len() && !cnrs.is_empty()).then(|| mean(&cnrs)),
                iterations: pick(|m| m.iterations as f64),
                seconds: pick(|m| m.seconds),
            }
        })
        .collect()
}

/// Which aggregate to lay out in [`format_table`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableMetric {
    Psnr,
    SsimX100,
    Cnr,
}

/// Methods (per SNR) down, CS ratios across.
pub fn format_table(rows: &[AggregateRow], metric: TableMetric) -> String {
    let mut ratios: Vec<f64> = Vec::new();
    let mut lines: Vec<(Option<f64>, String)> = Vec::new();
    for r in rows {
        if !ratios.contains(&r.cs_ratio) {
            ratios.push(r.cs_ratio);
        }
        if !lines.iter().any(|(s, m)| *s == r.snr_db && *m == r.solver) {
            lines.push((r.snr_db, r.solver.clone()));
        }
    }
    ratios.sort_by(f64::total_cmp);
    let title = match metric {
        TableMetric::Psnr => "PSNR (dB)",
        TableMetric::SsimX100 => "SSIM x 100",
        TableMetric::Cnr => "CNR",
    };
    let mut out = String::new();
    let _ = writeln!(out, "{title}, mean over seeds");
    let _ = write!(out, "{:<8} {:<12}", "SNR", "method");
    for r in &ratios {
        let _ = write!(out, " {:>8}", format!("{:.0}%", r * 100.0));
    }
    out.push('\n');
    for (snr, solver) in &lines {
        let _ = write!(out, "{:<8} {:<12}", fmt_snr(*snr), solver);
        for ratio in &ratios {
            let cell = rows
                .iter()
                .find(|r| r.snr_db == *snr && r.solver == *solver && r.cs_ratio == *ratio)
                .and_then(|r| match metric {
                    TableMetric::Psnr => (r.runs > 0).then_some(r.psnr_db),
                    TableMetric::SsimX100 => (r.runs > 0).then_some(100.0 * r.ssim),
                    TableMetric::Cnr => r.cnr,
                });
            let _ = write!(out, " {:>8}", cell.map_or_else(|| "-".to_string(), |v| format!("{v:.2}")));
        }
        out.push('\n');
    }
    out
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn fmt_snr(snr: Option<f64>) -> String {
    snr.map_or_else(|| "none".to_string(), fmt_f64)
}

pub fn parse_snr(s: &str) -> Result<Option<f64>> {
    match s.trim() {
        "none" | "inf" => Ok(None),
        v => v
            .parse::<f64>()
            .map(Some)
            .map_err(|e| Error::Format(format!("bad SNR `{v}`: {e}"))),
    }
}

fn override_f64(kv: &KeyValues, key: &str, target: &mut f64) -> Result<()> {
    if let Some(v) = kv.parse_value(key)? {
        *target = v;
    }
    Ok(())
}

fn override_opt<T>(value: Option<T>, target: &mut T) {
    if let Some(v) = value {
        *target = v;
    }
}
