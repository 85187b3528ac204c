//! The property-verification battery behind `verify-props`.

use std::str::FromStr;

use anyhow::{bail, Result};
use serde::Serialize;
use vqcodec::analysis::experiments::{
    density_law, entropy_shaping, source_experiments, DensityLawReport, ShapingConfig, ShapingReport, SourceClaims,
    SourceExperimentConfig, SourceExperiments, CONDITIONAL_MAX_GAP, DENSITY_LAW_MAX_TV, RD_IQ_STRICT, RD_IQ_TOLERANCE,
    SHAPING_MAX_GAP,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Claim {
    Shaping,
    DensityLaw,
    Decorrelation,
    Matching,
    ConditionalGap,
    Latency,
}

impl Claim {
    pub const ALL: [Claim; 6] = [
        Claim::Shaping,
        Claim::DensityLaw,
        Claim::Decorrelation,
        Claim::Matching,
        Claim::ConditionalGap,
        Claim::Latency,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Claim::Shaping => "shaping",
            Claim::DensityLaw => "density-law",
            Claim::Decorrelation => "decorrelation",
            Claim::Matching => "matching",
            Claim::ConditionalGap => "conditional-gap",
            Claim::Latency => "latency",
        }
    }

    /// Short name accepted by `--only` alongside the full one.
    pub fn alias(self) -> &'static str {
        match self {
            Claim::Shaping => "prop1",
            Claim::DensityLaw => "eq6",
            Claim::Decorrelation => "prop2",
            Claim::Matching => "thm3",
            Claim::ConditionalGap => "dhbar",
            Claim::Latency => "latency",
        }
    }
}

impl FromStr for Claim {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Claim::ALL
            .into_iter()
            .find(|c| c.name() == s || c.alias() == s)
            .ok_or_else(|| {
                let names: Vec<String> = Claim::ALL
                    .iter()
                    .map(|c| {
                        if c.alias() == c.name() {
                            c.name().to_string()
                        } else {
                            format!("{} ({})", c.name(), c.alias())
                        }
                    })
                    .collect();
                format!("unknown claim '{s}' (expected one of {})", names.join(", "))
            })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClaimResult {
    pub claim: Claim,
    pub pass: bool,
    pub metric: String,
    pub value: f64,
    pub threshold: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PropsReport {
    pub seed: u64,
    pub claims: Vec<ClaimResult>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shaping: Option<ShapingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density_law: Option<DensityLawReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceExperiments>,
}

fn result(claim: Claim, pass: bool, metric: &str, value: f64, threshold: String) -> ClaimResult {
    ClaimResult {
        claim,
        pass,
        metric: metric.to_string(),
        value,
        threshold,
    }
}

/// Runs `claims` with every experiment seeded from `seed`.
pub fn verify(claims: &[Claim], seed: u64) -> Result<PropsReport> {
    if claims.is_empty() {
        bail!("no claims selected");
    }
    let wants = |c: Claim| claims.contains(&c);
    let mut out = Vec::new();

    let (mut shaping, mut density) = (None, None);
    if wants(Claim::Shaping) || wants(Claim::DensityLaw) {
        let cfg = ShapingConfig {
            seed,
            ..ShapingConfig::reference()
        };
        let (report, codebook) = entropy_shaping(&cfg)?;
        if wants(Claim::Shaping) {
            out.push(result(
                Claim::Shaping,
                report.pass,
                "final_delta_h",
                report.final_delta_h,
                format!("<= {SHAPING_MAX_GAP} and <= initial {:.4}", report.initial_delta_h),
            ));
        }
        if wants(Claim::DensityLaw) {
            let law = density_law(&cfg, &codebook)?;
            out.push(result(
                Claim::DensityLaw,
                law.pass,
                "total_variation",
                law.total_variation,
                format!("<= {DENSITY_LAW_MAX_TV}"),
            ));
            density = Some(law);
        }
        shaping = Some(report);
    }

    let mut source = None;
    let source_claims = SourceClaims {
        decorrelation: wants(Claim::Decorrelation),
        matching: wants(Claim::Matching),
        conditional: wants(Claim::ConditionalGap),
        latency: wants(Claim::Latency),
    };
    if source_claims != SourceClaims::none() {
        let cfg = SourceExperimentConfig {
            claims: source_claims,
            ..SourceExperimentConfig::reference(seed)
        };
        let (report, _) = source_experiments(&cfg)?;
        if let Some(d) = &report.decorrelation {
            let worst = d.rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
            out.push(result(
                Claim::Decorrelation,
                d.pass,
                "max_mse_ratio_rd_over_iq",
                worst,
                format!("<= {RD_IQ_TOLERANCE} at every m, <= {RD_IQ_STRICT} at some m"),
            ));
        }
        if let Some(m) = &report.matching {
            let matched = m.rows.iter().filter(|r| r.pass).count();
            out.push(result(
                Claim::Matching,
                m.pass,
                "matched_cm_points",
                matched as f64,
                format!(
                    "== {} (rate <= R_CM/{}, MSE <= 1.05 D_CM)",
                    m.rows.len(),
                    1.0 - m.epsilon
                ),
            ));
        }
        if let Some(c) = &report.conditional {
            out.push(result(
                Claim::ConditionalGap,
                c.pass,
                "worst_delta_h_bar",
                c.worst,
                format!("<= {CONDITIONAL_MAX_GAP}"),
            ));
        }
        if let Some(l) = &report.latency {
            out.push(result(
                Claim::Latency,
                l.pass,
                "rd_over_cm_decode_time",
                l.rd.decode_ms / l.cm.decode_ms,
                "< 1 with CM entropy coding > RD entropy coding = 0".into(),
            ));
        }
        source = Some(report);
    }

    out.sort_by_key(|r| Claim::ALL.iter().position(|c| *c == r.claim));
    let pass = out.iter().all(|r| r.pass);
    Ok(PropsReport {
        seed,
        claims: out,
        pass,
        shaping,
        density_law: density,
        source,
    })
}
