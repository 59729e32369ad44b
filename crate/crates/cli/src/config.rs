//! Run configuration file: compute, storage, pricing and search sections.
//! Relative paths are resolved against the directory of the config file.

use anyhow::{bail, Context, Result};
use kvtier::cost_model::{default_pricing, DiskMedium, PricingModel};
use kvtier::engine_sim::{ComputeConfig, KernelProfile, StorageConfig, SyntheticProfile, TtlPolicy};
use kvtier::pareto_search::{Config, GridSpec, SearchConfig};
use kvtier::tiered_store::TierConfig;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Literal `kernel_profile` value selecting the built-in profile.
pub const SYNTHETIC_PROFILE: &str = "synthetic";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComputeSection {
    pub instance_count: usize,
    pub tokens_per_iteration_budget: u64,
    pub max_running_requests: usize,
    /// CSV path, or `"synthetic"` for the built-in profile.
    pub kernel_profile: String,
    pub bytes_per_token: u64,
    pub hbm_working_capacity_bytes: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    /// Coarse seed grid of the adaptive search.
    pub seed_grid: GridSpec,
    /// Uniform grid of `--mode grid`; defaults to the seed grid.
    #[serde(default)]
    pub fine_grid: Option<GridSpec>,
    #[serde(default = "default_tau_perf")]
    pub tau_expand: f64,
    #[serde(default = "default_tau_perf")]
    pub tau_perf: f64,
    #[serde(default = "default_tau_cost")]
    pub tau_cost: f64,
    pub budget: usize,
    /// DRAM tier template; its capacity is replaced by each candidate's.
    pub dram: TierConfig,
    /// Disk capacity per instance, clipped to each medium's ceiling.
    pub disk_capacity_gb: f64,
    /// Disk media named by the grids. Absent means one medium `default`
    /// built from the storage section's disk tier and the pricing file.
    #[serde(default)]
    pub media: Option<Vec<DiskMedium>>,
    #[serde(default)]
    pub baseline_dram_gb: Option<u64>,
}

fn default_tau_perf() -> f64 {
    0.05
}

fn default_tau_cost() -> f64 {
    0.02
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub compute: ComputeSection,
    #[serde(default)]
    pub storage: Option<StorageConfig>,
    /// Pricing JSON path; absent means the illustrative defaults.
    #[serde(default)]
    pub pricing: Option<PathBuf>,
    #[serde(default)]
    pub search: Option<SearchSection>,
}

/// A config file after path resolution and loading of referenced files.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub raw: RunConfig,
    pub compute: ComputeConfig,
    pub pricing: PricingModel,
    /// Files the config pulled in, for the manifest.
    pub inputs: Vec<PathBuf>,
}

/// Echo of the resolved configuration written into manifests.
#[derive(Debug, Serialize)]
pub struct ResolvedEcho<'a> {
    pub config: &'a RunConfig,
    pub pricing: &'a PricingModel,
}

impl Resolved {
    pub fn echo(&self) -> ResolvedEcho<'_> {
        ResolvedEcho {
            config: &self.raw,
            pricing: &self.pricing,
        }
    }

    pub fn storage(&self) -> Result<&StorageConfig> {
        self.raw
            .storage
            .as_ref()
            .context("config field `storage` is required for this command")
    }

    pub fn search(&self) -> Result<&SearchSection> {
        self.raw
            .search
            .as_ref()
            .context("config field `search` is required for this command")
    }
}

pub fn load(path: &Path) -> Result<Resolved> {
    let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    let mut raw: RunConfig =
        serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut inputs = vec![path.to_path_buf()];

    let kernel_profile = if raw.compute.kernel_profile == SYNTHETIC_PROFILE {
        KernelProfile::synthetic(&SyntheticProfile::default())?
    } else {
        let p = base.join(&raw.compute.kernel_profile);
        let f = std::fs::File::open(&p)
            .with_context(|| format!("compute.kernel_profile: cannot open {}", p.display()))?;
        let profile = KernelProfile::from_csv(f).with_context(|| format!("compute.kernel_profile: {}", p.display()))?;
        raw.compute.kernel_profile = p.display().to_string();
        inputs.push(p);
        profile
    };
    let c = &raw.compute;
    let compute = ComputeConfig {
        instance_count: c.instance_count,
        tokens_per_iteration_budget: c.tokens_per_iteration_budget,
        max_running_requests: c.max_running_requests,
        kernel_profile,
        bytes_per_token: c.bytes_per_token,
        hbm_working_capacity_bytes: c.hbm_working_capacity_bytes,
    };
    compute.validate().context("compute")?;

    let pricing = match &raw.pricing {
        Some(rel) => {
            let p = base.join(rel);
            let model = PricingModel::load(&p).with_context(|| "pricing".to_string())?;
            raw.pricing = Some(p.clone());
            inputs.push(p);
            model
        }
        None => default_pricing(),
    };
    if let Some(s) = &raw.storage {
        s.validate().context("storage")?;
    }
    if let Some(s) = &raw.search {
        s.search_config().validate().context("search")?;
        if let Some(g) = &s.fine_grid {
            g.validate().context("search.fine_grid")?;
        }
        if !(s.disk_capacity_gb >= 0.0) {
            bail!("search.disk_capacity_gb must be non-negative");
        }
        if s.media.is_none() && raw.storage.is_none() {
            bail!("search.media is required when the config has no `storage` section");
        }
    }
    Ok(Resolved {
        raw,
        compute,
        pricing,
        inputs,
    })
}

impl SearchSection {
    pub fn search_config(&self) -> SearchConfig {
        SearchConfig {
            grid: self.seed_grid.clone(),
            tau_expand: self.tau_expand,
            tau_perf: self.tau_perf,
            tau_cost: self.tau_cost,
            budget: self.budget,
        }
    }

    pub fn fine_grid(&self) -> &GridSpec {
        self.fine_grid.as_ref().unwrap_or(&self.seed_grid)
    }
}

/// The media a search may choose from, by id.
pub fn media(resolved: &Resolved) -> Result<Vec<DiskMedium>> {
    let s = resolved.search()?;
    if let Some(m) = &s.media {
        return Ok(m.clone());
    }
    let disk = &resolved.storage()?.disk;
    Ok(vec![DiskMedium {
        id: "default".into(),
        base_bandwidth_mbps: disk.base_bandwidth_mbps,
        bw_slope_mbps_per_gb: disk.bw_slope_mbps_per_gb,
        duplex: disk.duplex,
        max_capacity_gb: f64::INFINITY,
        pricing: resolved.pricing.disk.clone(),
    }])
}

/// Storage and pricing of one search candidate.
pub fn candidate(
    resolved: &Resolved,
    section: &SearchSection,
    media: &[DiskMedium],
    c: &Config,
) -> Result<(StorageConfig, PricingModel), String> {
    let medium = media
        .iter()
        .find(|m| m.id == c.medium)
        .ok_or_else(|| format!("unknown disk medium `{}`", c.medium))?;
    let base = resolved.raw.storage.as_ref();
    let storage = StorageConfig {
        dram: TierConfig {
            capacity_gb: c.dram_gb as f64,
            ..section.dram
        },
        disk: medium.tier_config(section.disk_capacity_gb.min(medium.max_capacity_gb)),
        ttl: TtlPolicy::Fixed {
            ttl_s: Some(c.ttl_s as f64),
        },
        dram_overlap_min_bandwidth_mbps: base.map_or(10_000.0, |s| s.dram_overlap_min_bandwidth_mbps),
        min_disk_gb: None,
    };
    let pricing = PricingModel {
        disk: medium.pricing.clone(),
        ..resolved.pricing.clone()
    };
    Ok((storage, pricing))
}

/// Every medium a grid names must be defined.
pub fn check_media(grid: &GridSpec, media: &[DiskMedium], field: &str) -> Result<()> {
    for m in &grid.media {
        if !media.iter().any(|x| &x.id == m) {
            bail!("{field}.media: unknown disk medium `{m}`");
        }
    }
    Ok(())
}
