//! The OOD class taxonomy and suite construction.
//!
//! Generated families (Perturbation, Noise, WrongPrediction) are distortions
//! of the in-distribution data and are produced automatically; collected
//! families (UnseenObject, UnseenEnvironment, NewWorld) are user-supplied
//! datasets whose taxonomy position is declared, not inferred.

use std::collections::BTreeMap;
use std::fmt;

use super::{add_noise, fgsm, perturb, LabeledDataset, NoiseVariant, PerturbVariant, SplitDataset};
use crate::error::{Error, Result};
use crate::nn::Network;

/// Top-level OOD families, in taxonomy (reporting) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum OodFamily {
    Perturbation,
    Noise,
    WrongPrediction,
    UnseenObject,
    UnseenEnvironment,
    NewWorld,
}

impl OodFamily {
    pub fn name(&self) -> &'static str {
        match self {
            OodFamily::Perturbation => "Perturbation",
            OodFamily::Noise => "Noise",
            OodFamily::WrongPrediction => "WrongPrediction",
            OodFamily::UnseenObject => "UnseenObject",
            OodFamily::UnseenEnvironment => "UnseenEnvironment",
            OodFamily::NewWorld => "NewWorld",
        }
    }

    pub fn all() -> [OodFamily; 6] {
        [
            OodFamily::Perturbation,
            OodFamily::Noise,
            OodFamily::WrongPrediction,
            OodFamily::UnseenObject,
            OodFamily::UnseenEnvironment,
            OodFamily::NewWorld,
        ]
    }

    pub fn parse(s: &str) -> Result<Self> {
        OodFamily::all()
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Unknown {
                what: "OOD family",
                name: s.into(),
                known: OodFamily::all().map(|f| f.name()).join(", "),
            })
    }
}

/// One class of OOD data, e.g. `Noise/Gaussian`. Orders by taxonomy
/// position, then variant name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct OodClassId {
    pub family: OodFamily,
    pub variant: String,
}

impl OodClassId {
    pub fn new(family: OodFamily, variant: impl Into<String>) -> Self {
        OodClassId {
            family,
            variant: variant.into(),
        }
    }

    /// Whether this class is produced by distorting ID data.
    pub fn generated(&self) -> bool {
        matches!(
            self.family,
            OodFamily::Perturbation | OodFamily::Noise | OodFamily::WrongPrediction
        )
    }

    /// Path form `Family/Variant`.
    pub fn path(&self) -> String {
        format!("{}/{}", self.family.name(), self.variant)
    }

    pub fn parse(s: &str) -> Result<Self> {
        let (family, variant) = s.split_once('/').ok_or_else(|| {
            Error::Invalid(format!("OOD class {s:?} is not of the form Family/Variant"))
        })?;
        if variant.is_empty() {
            return Err(Error::Invalid(format!("OOD class {s:?} has an empty variant")));
        }
        Ok(OodClassId::new(OodFamily::parse(family)?, variant))
    }
}

impl fmt::Display for OodClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path())
    }
}

/// Validation and test portions of one OOD class.
#[derive(Debug, Clone)]
pub struct OodEntry {
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
}

/// All OOD classes for one experiment, keyed by class, with the distortion
/// intensity each generated class was produced at.
#[derive(Debug, Clone)]
pub struct OodSuite {
    pub entries: BTreeMap<OodClassId, OodEntry>,
    pub intensities: BTreeMap<OodClassId, f64>,
}

impl OodSuite {
    pub fn class_ids(&self) -> Vec<OodClassId> {
        self.entries.keys().cloned().collect()
    }

    pub fn get(&self, id: &OodClassId) -> Option<&OodEntry> {
        self.entries.get(id)
    }
}

/// The eight generated classes with their default intensities: the amount of
/// distortion has to be high enough to push an ID input out of distribution,
/// so the defaults are deliberately coarse. All are config-overridable.
pub const GENERATED_VARIANTS: [(&str, f64); 8] = [
    ("Perturbation/Light", 0.3),
    ("Perturbation/Contrast", 1.8),
    ("Perturbation/GaussianBlur", 1.0),
    ("Perturbation/Invert", 0.0),
    ("Perturbation/Rotate", 45.0),
    ("Noise/Gaussian", 0.2),
    ("Noise/SaltAndPepper", 0.1),
    ("WrongPrediction/FGSM", 0.2),
];

pub fn default_intensities() -> BTreeMap<OodClassId, f64> {
    GENERATED_VARIANTS
        .iter()
        .map(|(path, amount)| (OodClassId::parse(path).expect("static path"), *amount))
        .collect()
}

/// Apply one generated class's transform to a dataset.
pub fn apply_generated(
    id: &OodClassId,
    ds: &LabeledDataset,
    net: &Network,
    amount: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    match (id.family, id.variant.as_str()) {
        (OodFamily::Perturbation, "Light") => perturb(ds, PerturbVariant::Light, amount, seed),
        (OodFamily::Perturbation, "Contrast") => perturb(ds, PerturbVariant::Contrast, amount, seed),
        (OodFamily::Perturbation, "GaussianBlur") => perturb(ds, PerturbVariant::GaussianBlur, amount, seed),
        (OodFamily::Perturbation, "Invert") => perturb(ds, PerturbVariant::Invert, amount, seed),
        (OodFamily::Perturbation, "Rotate") => perturb(ds, PerturbVariant::Rotate, amount, seed),
        (OodFamily::Noise, "Gaussian") => add_noise(ds, NoiseVariant::Gaussian, amount, seed),
        (OodFamily::Noise, "SaltAndPepper") => add_noise(ds, NoiseVariant::SaltAndPepper, amount, seed),
        (OodFamily::WrongPrediction, "FGSM") => fgsm(ds, net, amount),
        _ => Err(Error::Unknown {
            what: "generated OOD class",
            name: id.path(),
            known: GENERATED_VARIANTS.map(|(p, _)| p).join(", "),
        }),
    }
}

/// Build the full OOD suite: generated classes are derived from the ID
/// validation and test splits at the given intensities; collected datasets
/// are merged verbatim, split half/half into validation and test by order.
///
/// `intensities` overrides defaults per class; `seed` drives the stochastic
/// transforms (a distinct stream per class and split).
pub fn build_ood_suite(
    id: &SplitDataset,
    net: &Network,
    collected: &BTreeMap<OodClassId, LabeledDataset>,
    intensities: &BTreeMap<OodClassId, f64>,
    seed: u64,
) -> Result<OodSuite> {
    let mut entries = BTreeMap::new();
    let mut used = BTreeMap::new();
    for (index, (path, default_amount)) in GENERATED_VARIANTS.iter().enumerate() {
        let class = OodClassId::parse(path).expect("static path");
        let amount = intensities.get(&class).copied().unwrap_or(*default_amount);
        let class_seed = seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1));
        let validation = apply_generated(&class, &id.validation, net, amount, class_seed)?;
        let test = apply_generated(&class, &id.test, net, amount, class_seed.wrapping_add(1))?;
        used.insert(class.clone(), amount);
        entries.insert(class, OodEntry { validation, test });
    }
    for (class, ds) in collected {
        if class.generated() {
            return Err(Error::Invalid(format!(
                "collected entry {} uses a generated family",
                class.path()
            )));
        }
        if ds.image_shape() != id.validation.image_shape() {
            return Err(Error::shape(
                format!("collected entry {}", class.path()),
                format!("{:?}", id.validation.image_shape()),
                format!("{:?}", ds.image_shape()),
            ));
        }
        let half = ds.len() / 2;
        let val_idx: Vec<usize> = (0..half).collect();
        let test_idx: Vec<usize> = (half..ds.len()).collect();
        let entry = OodEntry {
            validation: ds.select(&val_idx, format!("{}/validation", ds.name))?,
            test: ds.select(&test_idx, format!("{}/test", ds.name))?,
        };
        entries.insert(class.clone(), entry);
    }
    Ok(OodSuite {
        entries,
        intensities: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{split_dataset, synth_blobs};
    use crate::nn::init_mlp;

    #[test]
    fn default_suite_has_exactly_the_eight_generated_classes() {
        let ds = synth_blobs(2, 30, &[1, 4, 4], 3, 0.8).unwrap();
        let net = init_mlp(&[1, 4, 4], &[6], 2, 3);
        let id = split_dataset(&ds, 3).unwrap();
        let suite = build_ood_suite(&id, &net, &BTreeMap::new(), &default_intensities(), 5).unwrap();
        let got: Vec<String> = suite.class_ids().iter().map(|c| c.path()).collect();
        let mut want: Vec<String> = GENERATED_VARIANTS.iter().map(|(p, _)| p.to_string()).collect();
        want.sort_by(|a, b| OodClassId::parse(a).unwrap().cmp(&OodClassId::parse(b).unwrap()));
        assert_eq!(got, want);
        for entry in suite.entries.values() {
            assert_eq!(entry.validation.len(), id.validation.len());
            assert_eq!(entry.test.len(), id.test.len());
            assert_eq!(entry.validation.image_shape(), id.validation.image_shape());
        }
    }

    #[test]
    fn collected_entry_lands_under_its_family() {
        let ds = synth_blobs(2, 30, &[1, 4, 4], 3, 0.8).unwrap();
        let net = init_mlp(&[1, 4, 4], &[6], 2, 3);
        let id = split_dataset(&ds, 3).unwrap();
        let far = synth_blobs(2, 20, &[1, 4, 4], 900, 2.0).unwrap();
        let class = OodClassId::new(OodFamily::NewWorld, "far");
        let collected: BTreeMap<OodClassId, LabeledDataset> = [(class.clone(), far)].into();
        let suite = build_ood_suite(&id, &net, &collected, &default_intensities(), 5).unwrap();
        assert_eq!(suite.entries.len(), 9);
        let entry = suite.get(&class).unwrap();
        assert_eq!(entry.validation.len() + entry.test.len(), 40);
        assert!(!class.generated());
    }

    #[test]
    fn class_id_path_round_trip_and_family_rules() {
        let id = OodClassId::parse("Noise/Gaussian").unwrap();
        assert!(id.generated());
        assert_eq!(id.path(), "Noise/Gaussian");
        assert!(OodClassId::parse("Nope/Thing").is_err());
        assert!(OodClassId::parse("Noise").is_err());
        assert!(!OodClassId::parse("UnseenObject/kmnist").unwrap().generated());
    }

    #[test]
    fn collected_shape_mismatch_rejected() {
        let ds = synth_blobs(2, 30, &[1, 4, 4], 3, 0.8).unwrap();
        let net = init_mlp(&[1, 4, 4], &[6], 2, 3);
        let id = split_dataset(&ds, 3).unwrap();
        let wrong = synth_blobs(2, 10, &[1, 6, 6], 5, 0.8).unwrap();
        let class = OodClassId::new(OodFamily::NewWorld, "far");
        let collected: BTreeMap<OodClassId, LabeledDataset> = [(class, wrong)].into();
        assert!(build_ood_suite(&id, &net, &collected, &default_intensities(), 5).is_err());
    }

    #[test]
    fn generated_family_rejected_as_collected() {
        let ds = synth_blobs(2, 30, &[1, 4, 4], 3, 0.8).unwrap();
        let net = init_mlp(&[1, 4, 4], &[6], 2, 3);
        let id = split_dataset(&ds, 3).unwrap();
        let class = OodClassId::parse("Noise/Gaussian").unwrap();
        let collected: BTreeMap<OodClassId, LabeledDataset> = [(class, ds.clone())].into();
        assert!(build_ood_suite(&id, &net, &collected, &default_intensities(), 5).is_err());
    }
}
