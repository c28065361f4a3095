//! Plain-text run configuration: `key = value` lines under `[section]`
//! headers. The echo file written next to each run's outputs uses the same
//! format, so a run can be reproduced by feeding the echo back in.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{anyhow, bail, Result};
use welm_core::{Activation, RegularizerMode, RhoMode, RingSpec, SelectorConfig, TrackerConfig};

/// Parses the sectioned key = value format. `#` and `;` start comments.
pub fn parse_sections(text: &str) -> Result<BTreeMap<String, BTreeMap<String, String>>> {
    let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
    let mut current = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split(['#', ';']).next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| anyhow!("line {}: unterminated section header", lineno + 1))?;
            current = name.trim().to_string();
            sections.entry(current.clone()).or_default();
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
        if current.is_empty() {
            bail!("line {}: key outside any [section]", lineno + 1);
        }
        sections
            .get_mut(&current)
            .unwrap()
            .insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(sections)
}

fn take<T: std::str::FromStr>(
    section: &mut BTreeMap<String, String>,
    section_name: &str,
    key: &str,
    into: &mut T,
) -> Result<()>
where
    T::Err: std::fmt::Display,
{
    if let Some(raw) = section.remove(key) {
        *into = raw
            .parse()
            .map_err(|e| anyhow!("[{section_name}] {key} = {raw:?}: {e}"))?;
    }
    Ok(())
}

fn parse_rho(raw: &str) -> Result<RhoMode> {
    match raw {
        "ratio_drift" => Ok(RhoMode::RatioDrift),
        "unit" => Ok(RhoMode::Unit),
        other => {
            if let Some(v) = other.strip_prefix("fixed:") {
                Ok(RhoMode::Fixed(v.parse().map_err(|e| anyhow!("rho_mode fixed value: {e}"))?))
            } else {
                bail!("rho_mode must be ratio_drift, unit, or fixed:<value>, got {other:?}")
            }
        }
    }
}

fn render_rho(mode: RhoMode) -> String {
    match mode {
        RhoMode::RatioDrift => "ratio_drift".to_string(),
        RhoMode::Unit => "unit".to_string(),
        RhoMode::Fixed(v) => format!("fixed:{v}"),
    }
}

/// Applies a parsed config file on top of `cfg`. Unknown sections or keys
/// are rejected rather than ignored.
pub fn apply_config(text: &str, cfg: &mut TrackerConfig) -> Result<()> {
    let mut sections = parse_sections(text)?;

    if let Some(mut s) = sections.remove("tracker") {
        take(&mut s, "tracker", "feature_dim", &mut cfg.feature_dim)?;
        take(&mut s, "tracker", "n_hidden", &mut cfg.n_hidden)?;
        take(&mut s, "tracker", "c", &mut cfg.c)?;
        take(&mut s, "tracker", "search_radius", &mut cfg.search_radius)?;
        take(&mut s, "tracker", "seed_projection", &mut cfg.seed_projection)?;
        take(&mut s, "tracker", "seed_hidden", &mut cfg.seed_hidden)?;
        if let Some(raw) = s.remove("activation") {
            cfg.activation = match raw.as_str() {
                "sigmoid" => Activation::Sigmoid,
                "rbf" => Activation::Rbf,
                other => bail!("activation must be sigmoid or rbf, got {other:?}"),
            };
        }
        reject_leftovers("tracker", &s)?;
    }

    for (name, ring) in [("positive_ring", &mut cfg.pos_ring), ("negative_ring", &mut cfg.neg_ring)] {
        if let Some(mut s) = sections.remove(name) {
            take(&mut s, name, "r_lo", &mut ring.r_lo)?;
            take(&mut s, name, "r_hi", &mut ring.r_hi)?;
            take(&mut s, name, "clamp_x", &mut ring.clamp_half_width_x)?;
            take(&mut s, name, "clamp_y", &mut ring.clamp_half_width_y)?;
            take(&mut s, name, "step", &mut ring.step)?;
            reject_leftovers(name, &s)?;
        }
    }

    if let Some(mut s) = sections.remove("selector") {
        take(&mut s, "selector", "latter_fraction", &mut cfg.selector.latter_fraction)?;
        take(&mut s, "selector", "round_decimals", &mut cfg.selector.round_decimals)?;
        take(&mut s, "selector", "positive_only", &mut cfg.selector.positive_only)?;
        reject_leftovers("selector", &s)?;
    }

    if let Some(mut s) = sections.remove("woselm") {
        if let Some(raw) = s.remove("regularizer_mode") {
            cfg.regularizer_mode = match raw.as_str() {
                "accumulate" => RegularizerMode::Accumulate,
                "fixed" => RegularizerMode::Fixed,
                other => bail!("regularizer_mode must be accumulate or fixed, got {other:?}"),
            };
        }
        if let Some(raw) = s.remove("rho_mode") {
            cfg.rho_mode = parse_rho(&raw)?;
        }
        reject_leftovers("woselm", &s)?;
    }

    if let Some((name, _)) = sections.into_iter().next() {
        bail!("unknown config section [{name}]");
    }
    Ok(())
}

fn reject_leftovers(section: &str, s: &BTreeMap<String, String>) -> Result<()> {
    if let Some((key, _)) = s.iter().next() {
        bail!("unknown key {key:?} in [{section}]");
    }
    Ok(())
}

/// Renders the complete effective configuration. Feeding the output back
/// through `apply_config` reproduces the same `TrackerConfig`.
pub fn render_config(cfg: &TrackerConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "[tracker]");
    let _ = writeln!(out, "feature_dim = {}", cfg.feature_dim);
    let _ = writeln!(out, "n_hidden = {}", cfg.n_hidden);
    let _ = writeln!(out, "c = {}", cfg.c);
    let _ = writeln!(out, "search_radius = {}", cfg.search_radius);
    let _ = writeln!(out, "seed_projection = {}", cfg.seed_projection);
    let _ = writeln!(out, "seed_hidden = {}", cfg.seed_hidden);
    let _ = writeln!(
        out,
        "activation = {}",
        match cfg.activation {
            Activation::Sigmoid => "sigmoid",
            Activation::Rbf => "rbf",
        }
    );
    for (name, ring) in [("positive_ring", &cfg.pos_ring), ("negative_ring", &cfg.neg_ring)] {
        let _ = writeln!(out, "\n[{name}]");
        let _ = writeln!(out, "r_lo = {}", ring.r_lo);
        let _ = writeln!(out, "r_hi = {}", ring.r_hi);
        let _ = writeln!(out, "clamp_x = {}", ring.clamp_half_width_x);
        let _ = writeln!(out, "clamp_y = {}", ring.clamp_half_width_y);
        let _ = writeln!(out, "step = {}", ring.step);
    }
    let _ = writeln!(out, "\n[selector]");
    let _ = writeln!(out, "latter_fraction = {}", cfg.selector.latter_fraction);
    let _ = writeln!(out, "round_decimals = {}", cfg.selector.round_decimals);
    let _ = writeln!(out, "positive_only = {}", cfg.selector.positive_only);
    let _ = writeln!(out, "\n[woselm]");
    let _ = writeln!(
        out,
        "regularizer_mode = {}",
        match cfg.regularizer_mode {
            RegularizerMode::Accumulate => "accumulate",
            RegularizerMode::Fixed => "fixed",
        }
    );
    let _ = writeln!(out, "rho_mode = {}", render_rho(cfg.rho_mode));
    out
}

/// Convenience constructor used by tests and the selftest command.
pub fn config_with(
    pos_ring: RingSpec,
    neg_ring: RingSpec,
    selector: SelectorConfig,
) -> TrackerConfig {
    TrackerConfig { pos_ring, neg_ring, selector, ..TrackerConfig::default() }
}
