use serde::Serialize;

/// Published parameter counts and file sizes of the custom model and three
/// ImageNet-pretrained baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReferenceModelStats {
    pub key: &'static str,
    pub name: &'static str,
    pub total_params: u64,
    pub trainable: u64,
    pub non_trainable: u64,
    pub size_mb: f64,
}

const REFERENCE: [ReferenceModelStats; 4] = [
    ReferenceModelStats {
        key: "custom",
        name: "Custom model",
        total_params: 5_865,
        trainable: 5_801,
        non_trainable: 64,
        size_mb: 0.08,
    },
    ReferenceModelStats {
        key: "mobilenetv2",
        name: "MobileNetV2",
        total_params: 2_260_546,
        trainable: 2_226_434,
        non_trainable: 34_112,
        size_mb: 9.52,
    },
    ReferenceModelStats {
        key: "nasnet",
        name: "NasNet",
        total_params: 4_271_830,
        trainable: 4_235_092,
        non_trainable: 36_738,
        size_mb: 18.35,
    },
    ReferenceModelStats {
        key: "resnet50",
        name: "Resnet50",
        total_params: 23_591_810,
        trainable: 23_538_690,
        non_trainable: 53_120,
        size_mb: 94.89,
    },
];

/// The four rows in published order: custom, MobileNetV2, NasNet, Resnet50.
pub fn reference_stats() -> &'static [ReferenceModelStats] {
    &REFERENCE
}

/// Case-insensitive lookup by key (`"resnet50"`), display name
/// (`"Resnet50"`) or the short form `"custom"`.
pub fn lookup_reference(name: &str) -> Option<&'static ReferenceModelStats> {
    let needle = name.trim().to_ascii_lowercase();
    REFERENCE
        .iter()
        .find(|r| r.key == needle || r.name.to_ascii_lowercase() == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_values() {
        assert_eq!(lookup_reference("Resnet50").unwrap().total_params, 23_591_810);
        assert_eq!(lookup_reference("NasNet").unwrap().size_mb, 18.35);
        assert_eq!(lookup_reference("Custom").unwrap().non_trainable, 64);
        assert_eq!(lookup_reference("mobilenetv2").unwrap().trainable, 2_226_434);
        assert!(lookup_reference("vgg16").is_none());
    }

    #[test]
    fn trainable_plus_frozen_is_total() {
        for r in reference_stats() {
            assert_eq!(r.trainable + r.non_trainable, r.total_params, "{}", r.name);
        }
    }
}
