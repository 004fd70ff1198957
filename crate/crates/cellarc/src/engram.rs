//! The model zoo: variant registry and construction.
//!
//! Seven update rules share the engine:
//!
//! - `NCA` — one subnet perceiving and writing all 50 channels, hidden width
//!   64, fixed stencils, toroidal boundary.
//! - `v1` — the public/private composite: a *gene* subnet perceives the 30
//!   public channels (plus the cell's own 20 private values, concatenated
//!   raw) and writes the public range; a *propagation* subnet perceives all
//!   50 channels and writes the private range. Hidden widths (32, 32), fixed
//!   stencils, toroidal boundaries. Both subnets train together.
//! - `v2` — `v1` with learnable perception kernels (initialized to the
//!   stencils).
//! - `v3` — `v2` plus channel-wise neighborhood attention on both subnets,
//!   with a boundary split: the gene subnet reads zeros past the edge while
//!   the propagation subnet wraps toroidally.
//! - `v4` — `v3` trained with alternating 3×3-patch loss iterations.
//! - `v3_large` — `v3` with hidden widths (132, 132).
//! - `v3_large_padded` — `v3_large` run on maximally padded 30×30 grids
//!   (11-color palette); the flag travels with the variant so runners pick
//!   the right dataset shaping.
//!
//! Construction is deterministic: the same variant and seed always produce
//! bit-identical parameters.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::LATTICE_CHANNELS;
use crate::engine::{Boundary, CellModel, SensingMode, SubNet};
use crate::real::Real;

/// Default probability that a cell applies its update each step.
pub const DEFAULT_FIRE_RATE: f64 = 0.5;

/// The public/private split of the 50 lattice channels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelPartition {
    pub public: Range<usize>,
    pub private: Range<usize>,
}

impl ChannelPartition {
    /// 30 public channels (visible signal plus shared memory), 20 private.
    pub fn standard() -> Self {
        ChannelPartition {
            public: 0..30,
            private: 30..LATTICE_CHANNELS,
        }
    }

    /// The two ranges must tile the channel space exactly.
    pub fn is_valid(&self, channels: usize) -> bool {
        self.public.start == 0
            && self.public.end == self.private.start
            && self.private.end == channels
            && !self.public.is_empty()
            && !self.private.is_empty()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum VariantError {
    #[error("unknown variant \"{0}\"; valid names: NCA, v1, v2, v3, v4, v3_large, v3_large_padded")]
    Unknown(String),
}

/// Canonical variant identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VariantName {
    #[serde(rename = "NCA")]
    Nca,
    #[serde(rename = "v1")]
    V1,
    #[serde(rename = "v2")]
    V2,
    #[serde(rename = "v3")]
    V3,
    #[serde(rename = "v4")]
    V4,
    #[serde(rename = "v3_large")]
    V3Large,
    #[serde(rename = "v3_large_padded")]
    V3LargePadded,
}

impl VariantName {
    pub const ALL: [VariantName; 7] = [
        VariantName::Nca,
        VariantName::V1,
        VariantName::V2,
        VariantName::V3,
        VariantName::V4,
        VariantName::V3Large,
        VariantName::V3LargePadded,
    ];

    /// The five variants of the main comparison (standard + v1..v4).
    pub const CORE: [VariantName; 5] = [
        VariantName::Nca,
        VariantName::V1,
        VariantName::V2,
        VariantName::V3,
        VariantName::V4,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            VariantName::Nca => "NCA",
            VariantName::V1 => "v1",
            VariantName::V2 => "v2",
            VariantName::V3 => "v3",
            VariantName::V4 => "v4",
            VariantName::V3Large => "v3_large",
            VariantName::V3LargePadded => "v3_large_padded",
        }
    }
}

impl fmt::Display for VariantName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantName {
    type Err = VariantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nca" => Ok(VariantName::Nca),
            "v1" => Ok(VariantName::V1),
            "v2" => Ok(VariantName::V2),
            "v3" => Ok(VariantName::V3),
            "v4" => Ok(VariantName::V4),
            "v3_large" => Ok(VariantName::V3Large),
            "v3_large_padded" => Ok(VariantName::V3LargePadded),
            _ => Err(VariantError::Unknown(s.to_owned())),
        }
    }
}

/// Everything needed to build and train one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub name: VariantName,
    /// Hidden layer widths of every update MLP.
    pub hidden: Vec<usize>,
    /// Two-subnet public/private composite vs. a single full-width rule.
    pub composite: bool,
    pub sensing: SensingMode,
    pub attention: bool,
    /// Boundary for the public-writing subnet (or the single rule).
    pub gene_boundary: Boundary,
    /// Boundary for the private-writing subnet (composites only).
    pub prop_boundary: Boundary,
    /// Alternate full-lattice iterations with 3×3-patch loss iterations.
    pub patch_training: bool,
    /// Run on maximally padded grids with the 11-color palette.
    pub maximal_padding: bool,
}

impl VariantSpec {
    pub fn of(name: VariantName) -> Self {
        let base_composite = VariantSpec {
            name,
            hidden: vec![32, 32],
            composite: true,
            sensing: SensingMode::Fixed,
            attention: false,
            gene_boundary: Boundary::Toroidal,
            prop_boundary: Boundary::Toroidal,
            patch_training: false,
            maximal_padding: false,
        };
        match name {
            VariantName::Nca => VariantSpec {
                hidden: vec![64],
                composite: false,
                ..base_composite
            },
            VariantName::V1 => base_composite,
            VariantName::V2 => VariantSpec {
                sensing: SensingMode::Learnable,
                ..base_composite
            },
            VariantName::V3 => VariantSpec {
                sensing: SensingMode::Learnable,
                attention: true,
                gene_boundary: Boundary::Zero,
                ..base_composite
            },
            VariantName::V4 => VariantSpec {
                name,
                patch_training: true,
                ..VariantSpec::of(VariantName::V3)
            },
            VariantName::V3Large => VariantSpec {
                name,
                hidden: vec![132, 132],
                ..VariantSpec::of(VariantName::V3)
            },
            VariantName::V3LargePadded => VariantSpec {
                name,
                maximal_padding: true,
                ..VariantSpec::of(VariantName::V3Large)
            },
        }
    }

    /// Builds the model with freshly initialized parameters; deterministic in
    /// `seed`. Fire rate and alive masking start at defaults and can be
    /// overridden on the returned model.
    pub fn build<F: Real>(&self, seed: u64) -> CellModel<F> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let channels = LATTICE_CHANNELS;
        let subnets = if self.composite {
            let part = ChannelPartition::standard();
            debug_assert!(part.is_valid(channels));
            let gene = SubNet::new(
                "gene",
                part.public.clone(),
                Some(part.private.clone()),
                part.public.clone(),
                self.sensing,
                self.gene_boundary,
                self.attention,
                &self.hidden,
                &mut rng,
            );
            let prop = SubNet::new(
                "prop",
                0..channels,
                None,
                part.private.clone(),
                self.sensing,
                self.prop_boundary,
                self.attention,
                &self.hidden,
                &mut rng,
            );
            vec![gene, prop]
        } else {
            vec![SubNet::new(
                "rule",
                0..channels,
                None,
                0..channels,
                self.sensing,
                self.gene_boundary,
                self.attention,
                &self.hidden,
                &mut rng,
            )]
        };
        CellModel::new(channels, subnets, DEFAULT_FIRE_RATE, true)
    }
}

/// Convenience: spec lookup plus build in one call.
pub fn build_variant<F: Real>(name: VariantName, seed: u64) -> CellModel<F> {
    VariantSpec::of(name).build(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::KERNEL_COUNT;

    #[test]
    fn names_round_trip_and_reject_unknowns() {
        for name in VariantName::ALL {
            assert_eq!(name.as_str().parse::<VariantName>().unwrap(), name);
        }
        assert_eq!("NCA".parse::<VariantName>().unwrap(), VariantName::Nca);
        assert_eq!("V3_LARGE".parse::<VariantName>().unwrap(), VariantName::V3Large);
        let err = "v5".parse::<VariantName>().unwrap_err();
        assert!(err.to_string().contains("v3_large_padded"), "{err}");
        // Serde uses the canonical strings.
        assert_eq!(
            serde_json::to_string(&VariantName::V3LargePadded).unwrap(),
            "\"v3_large_padded\""
        );
    }

    #[test]
    fn every_spec_carries_its_own_name() {
        for name in VariantName::ALL {
            assert_eq!(VariantSpec::of(name).name, name);
        }
    }

    #[test]
    fn registry_matches_the_architecture_table() {
        let nca = VariantSpec::of(VariantName::Nca);
        assert!(!nca.composite);
        assert_eq!(nca.hidden, vec![64]);
        assert_eq!(nca.sensing, SensingMode::Fixed);
        assert!(!nca.attention && !nca.patch_training && !nca.maximal_padding);

        let v1 = VariantSpec::of(VariantName::V1);
        assert!(v1.composite);
        assert_eq!(v1.hidden, vec![32, 32]);
        assert_eq!(v1.sensing, SensingMode::Fixed);
        assert_eq!((v1.gene_boundary, v1.prop_boundary), (Boundary::Toroidal, Boundary::Toroidal));

        let v2 = VariantSpec::of(VariantName::V2);
        assert_eq!(v2.sensing, SensingMode::Learnable);
        assert!(!v2.attention);

        let v3 = VariantSpec::of(VariantName::V3);
        assert!(v3.attention);
        assert_eq!((v3.gene_boundary, v3.prop_boundary), (Boundary::Zero, Boundary::Toroidal));
        assert!(!v3.patch_training);

        let v4 = VariantSpec::of(VariantName::V4);
        assert!(v4.patch_training);
        assert_eq!(v4.hidden, vec![32, 32]);

        let large = VariantSpec::of(VariantName::V3Large);
        assert_eq!(large.hidden, vec![132, 132]);
        assert!(!large.maximal_padding);
        let padded = VariantSpec::of(VariantName::V3LargePadded);
        assert!(padded.maximal_padding);
        assert_eq!(padded.hidden, vec![132, 132]);
    }

    #[test]
    fn built_models_have_the_expected_shapes() {
        let nca = build_variant::<f32>(VariantName::Nca, 1);
        assert_eq!(nca.subnets.len(), 1);
        let rule = &nca.subnets[0];
        assert_eq!(rule.mlp.hidden[0].w.dim(), (KERNEL_COUNT * 50, 64));
        assert_eq!(rule.mlp.out.w.dim(), (64, 50));
        assert!(rule.attention.is_none());
        assert_eq!(nca.fire_rate, DEFAULT_FIRE_RATE);
        assert!(nca.alive_masking);

        let v1 = build_variant::<f32>(VariantName::V1, 1);
        assert_eq!(v1.subnets.len(), 2);
        let gene = &v1.subnets[0];
        let prop = &v1.subnets[1];
        assert_eq!((gene.perceive.clone(), gene.write.clone()), (0..30, 0..30));
        assert_eq!(gene.own_concat, Some(30..50));
        assert_eq!((prop.perceive.clone(), prop.write.clone()), (0..50, 30..50));
        assert_eq!(prop.own_concat, None);
        // gene features: 4·30 stencil + 20 own = 140; prop: 4·50 = 200.
        assert_eq!(gene.mlp.hidden[0].w.dim(), (140, 32));
        assert_eq!(gene.mlp.hidden[1].w.dim(), (32, 32));
        assert_eq!(gene.mlp.out.w.dim(), (32, 30));
        assert_eq!(prop.mlp.hidden[0].w.dim(), (200, 32));
        assert_eq!(prop.mlp.out.w.dim(), (32, 20));

        let v3 = build_variant::<f32>(VariantName::V3, 1);
        let gene = &v3.subnets[0];
        let prop = &v3.subnets[1];
        // Attention adds one feature per perceived channel.
        assert_eq!(gene.mlp.hidden[0].w.dim(), (170, 32));
        assert_eq!(prop.mlp.hidden[0].w.dim(), (250, 32));
        assert_eq!(gene.perception.boundary, Boundary::Zero);
        assert_eq!(prop.perception.boundary, Boundary::Toroidal);
        assert_eq!(gene.attention.as_ref().unwrap().boundary, Boundary::Zero);
        assert_eq!(prop.attention.as_ref().unwrap().boundary, Boundary::Toroidal);

        let large = build_variant::<f32>(VariantName::V3Large, 1);
        assert_eq!(large.subnets[0].mlp.hidden[0].w.dim(), (170, 132));
        assert_eq!(large.subnets[0].mlp.hidden[1].w.dim(), (132, 132));
    }

    #[test]
    fn learnable_variants_expose_kernels_as_parameters() {
        let mut v1 = build_variant::<f32>(VariantName::V1, 2);
        let mut v2 = build_variant::<f32>(VariantName::V2, 2);
        let collect = |m: &mut CellModel<f32>| {
            let mut names = Vec::new();
            m.visit_params(&mut |n, _, _| names.push(n.to_string()));
            names
        };
        let v1_names = collect(&mut v1);
        let v2_names = collect(&mut v2);
        assert!(!v1_names.iter().any(|n| n.contains("kernels")));
        assert!(v2_names.contains(&"gene.kernels".to_string()));
        assert!(v2_names.contains(&"prop.kernels".to_string()));
        // Kernels start at the fixed stencils even when learnable.
        assert_eq!(
            v2.subnets[0].perception.kernels,
            crate::engine::fixed_kernels::<f32>()
        );
    }

    #[test]
    fn construction_is_deterministic_in_the_seed() {
        for name in [VariantName::Nca, VariantName::V3] {
            let mut a = build_variant::<f64>(name, 77);
            let mut b = build_variant::<f64>(name, 77);
            let mut c = build_variant::<f64>(name, 78);
            let dump = |m: &mut CellModel<f64>| {
                let mut all = Vec::new();
                m.visit_params(&mut |_, value, _| all.extend(value.iter().copied()));
                all
            };
            assert_eq!(dump(&mut a), dump(&mut b), "{name}");
            assert_ne!(dump(&mut a), dump(&mut c), "{name}");
        }
    }

    #[test]
    fn partition_tiles_the_channel_space() {
        let part = ChannelPartition::standard();
        assert!(part.is_valid(LATTICE_CHANNELS));
        assert_eq!(part.public.len() + part.private.len(), LATTICE_CHANNELS);
        assert!(!ChannelPartition { public: 0..30, private: 31..50 }.is_valid(50));
        assert!(!ChannelPartition { public: 0..50, private: 50..50 }.is_valid(50));
    }
}
