use brushwork::canvas::CanvasImage;
use brushwork::nn::{EncoderRole, PredictorConfig, StrokeNet};
use brushwork::prediction::StrokePredictor;
use candle_core::{Tensor, Var};

fn tiny() -> PredictorConfig {
    PredictorConfig {
        feature_channels: 8,
        model_dim: 16,
        head_count: 2,
        ffn_dim: 32,
        encoder_layers: 1,
        decoder_layers: 1,
        ..PredictorConfig::default()
    }
}

fn image(seed: usize) -> CanvasImage {
    CanvasImage::from_fn(32, 32, |x, y| {
        let v = ((x * 7 + y * 13 + seed * 31) % 17) as f64 / 16.0;
        [v, 1.0 - v, (x as f64) / 32.0]
    })
}

#[test]
fn feature_map_shape_with_default_channels() {
    let net = StrokeNet::new(PredictorConfig::default(), 0).unwrap();
    let x = net.images_to_tensor(&[image(0)]).unwrap();
    let f = net
        .extract_features(&x, EncoderRole::Canvas, false)
        .unwrap();
    assert_eq!(f.dims(), &[1, 128, 8, 8]);
}

#[test]
fn output_cardinality_and_range() {
    let net = StrokeNet::new(tiny(), 1).unwrap();
    let canvases: Vec<_> = (0..3).map(image).collect();
    let targets: Vec<_> = (3..6).map(image).collect();
    let out = net.predict(&canvases, &targets).unwrap();
    assert_eq!(out.len(), 3);
    for p in &out {
        assert_eq!(p.strokes.len(), 8);
        assert_eq!(p.confidences.len(), 8);
        assert_eq!(p.decisions.len(), 8);
        for (s, (&c, &d)) in p.strokes.iter().zip(p.confidences.iter().zip(&p.decisions)) {
            assert!(s.to_array().iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(d, c >= 0.0);
        }
    }
}

#[test]
fn evaluation_mode_is_deterministic() {
    let net = StrokeNet::new(tiny(), 2).unwrap();
    let zero = vec![CanvasImage::new(32, 32)];
    let a = net.predict(&zero, &zero).unwrap();
    let b = net.predict(&zero, &zero).unwrap();
    assert_eq!(a, b);

    let x = net.images_to_tensor(&zero).unwrap();
    let fa = net
        .extract_features(&x, EncoderRole::Canvas, false)
        .unwrap();
    let fb = net
        .extract_features(&x, EncoderRole::Canvas, false)
        .unwrap();
    assert_eq!(
        fa.flatten_all().unwrap().to_vec1::<f32>().unwrap(),
        fb.flatten_all().unwrap().to_vec1::<f32>().unwrap()
    );
}

#[test]
fn same_seed_same_weights() {
    let a = StrokeNet::new(tiny(), 9).unwrap();
    let b = StrokeNet::new(tiny(), 9).unwrap();
    let c = StrokeNet::new(tiny(), 10).unwrap();
    let flat = |n: &StrokeNet| -> Vec<f32> {
        n.store()
            .params()
            .iter()
            .flat_map(|(_, v)| v.flatten_all().unwrap().to_vec1::<f32>().unwrap())
            .collect()
    };
    assert_eq!(flat(&a), flat(&b));
    assert_ne!(flat(&a), flat(&c));
}

#[test]
fn encoders_have_independent_weights() {
    let net = StrokeNet::new(tiny(), 3).unwrap();
    let x = net.images_to_tensor(&[image(4)]).unwrap();
    let fc = net
        .extract_features(&x, EncoderRole::Canvas, false)
        .unwrap();
    let ft = net
        .extract_features(&x, EncoderRole::Target, false)
        .unwrap();
    let diff = (fc - ft)
        .unwrap()
        .abs()
        .unwrap()
        .sum_all()
        .unwrap()
        .to_scalar::<f32>()
        .unwrap();
    assert!(diff > 1e-3);
}

#[test]
fn gradients_reach_both_inputs() {
    let net = StrokeNet::new(tiny(), 4).unwrap();
    let c = Var::from_tensor(&net.images_to_tensor(&[image(1), image(2)]).unwrap()).unwrap();
    let t = Var::from_tensor(&net.images_to_tensor(&[image(5), image(6)]).unwrap()).unwrap();
    let out = net.forward(c.as_tensor(), t.as_tensor(), true).unwrap();
    for q in 0..8 {
        for p in 0..8 {
            let y = out
                .params
                .narrow(1, q, 1)
                .unwrap()
                .narrow(2, p, 1)
                .unwrap()
                .sum_all()
                .unwrap();
            let grads = y.backward().unwrap();
            for input in [&c, &t] {
                let g: Tensor = grads.get(input.as_tensor()).unwrap().clone();
                let norm = g
                    .sqr()
                    .unwrap()
                    .sum_all()
                    .unwrap()
                    .to_scalar::<f32>()
                    .unwrap();
                assert!(norm > 0.0, "query {q} param {p}");
            }
        }
    }
}

#[test]
fn rejects_wrong_patch_size() {
    let net = StrokeNet::new(tiny(), 5).unwrap();
    let small = vec![CanvasImage::new(16, 16)];
    assert!(net.predict(&small, &small).is_err());
    let one = vec![image(0)];
    assert!(net.predict(&one, &[]).is_err());
}
