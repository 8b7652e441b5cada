use proptest::prelude::*;
use proves_core::codec::{decode_payload, encode_payload, SignatureContainer};
use proves_core::crypto::{sign, verify};
use proves_core::engine::{fit_similarity_transform, TransformParams};
use proves_core::{BBox, FaceRecord, FeatureVector, KeyPair, SceneLabel, SemanticPayload, Timestamp};

fn payload_strategy() -> impl Strategy<Value = SemanticPayload> {
    (64u32..2000, 64u32..2000, any::<bool>(), any::<u64>(), "[a-z0-9._-]{1,24}")
        .prop_flat_map(|(w, h, indoor, t, device)| {
            let side = (w.min(h) as f64) * 0.2 + (0.005 * w as f64 * h as f64).sqrt();
            let face = (
                0.0..(w as f64 - side),
                0.0..(h as f64 - side),
                proptest::collection::vec(-1.0f64..1.0, 1..80),
            )
                .prop_map(move |(x, y, mut c)| {
                    c[0] += 2.0;
                    FaceRecord {
                        bbox: BBox::new(x, y, x + side, y + side).unwrap(),
                        feature: FeatureVector::new(c).unwrap(),
                    }
                });
            proptest::collection::vec(face, 0..6).prop_map(move |faces| SemanticPayload {
                image_width: w,
                image_height: h,
                faces,
                scene: if indoor { SceneLabel::Indoor } else { SceneLabel::Outdoor },
                device_id: device.clone(),
                signed_at: Timestamp(t),
            })
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn payload_round_trips(p in payload_strategy()) {
        let bytes = encode_payload(&p).unwrap();
        prop_assert_eq!(decode_payload(&bytes).unwrap(), p.clone());
        prop_assert_eq!(encode_payload(&p).unwrap(), bytes);
    }

    #[test]
    fn single_byte_mutation_is_caught(p in payload_strategy(), pos in any::<prop::sample::Index>(), delta in 1u8..=255) {
        let key = KeyPair::from_seed(3);
        let payload = encode_payload(&p).unwrap();
        let sig = sign(&key, &payload);
        let mut bytes = SignatureContainer::new(payload, sig).unwrap().to_bytes().unwrap();
        let i = pos.index(bytes.len());
        bytes[i] = bytes[i].wrapping_add(delta);
        if let Ok(c) = SignatureContainer::from_bytes(&bytes) {
            prop_assert!(!verify(&key.public_key(), c.payload_bytes(), c.signature_bytes()));
        }
    }

    #[test]
    fn exact_transforms_are_recovered(
        s in 0.85f64..1.15,
        alpha in -150.0f64..150.0,
        beta in -150.0f64..150.0,
        centers in proptest::collection::vec((0.0f64..1000.0, 0.0f64..1000.0), 2..10),
    ) {
        prop_assume!(centers.iter().any(|c| (c.0 - centers[0].0).hypot(c.1 - centers[0].1) > 1.0));
        let w = TransformParams::new(s, alpha, beta).unwrap();
        let pairs: Vec<_> = centers.iter().map(|&c| (c, w.apply_point(c))).collect();
        let fit = fit_similarity_transform(&pairs, 2).unwrap();
        prop_assert!(fit.residual_rms < 1e-6);
        prop_assert!((fit.params.s - s).abs() <= 1e-9 * s);
        prop_assert!((fit.params.alpha - alpha).abs() <= 1e-9 * alpha.abs().max(1.0));
        prop_assert!((fit.params.beta - beta).abs() <= 1e-9 * beta.abs().max(1.0));
    }

    #[test]
    fn signatures_verify_and_bind_message(seed in any::<u64>(), msg in proptest::collection::vec(any::<u8>(), 0..256), bit in any::<prop::sample::Index>()) {
        let key = KeyPair::from_seed(seed);
        let sig = sign(&key, &msg);
        prop_assert!(verify(&key.public_key(), &msg, &sig));
        prop_assert_eq!(&sign(&key, &msg), &sig);
        if !msg.is_empty() {
            let mut m = msg.clone();
            let b = bit.index(m.len() * 8);
            m[b / 8] ^= 1 << (b % 8);
            prop_assert!(!verify(&key.public_key(), &m, &sig));
        }
    }
}
