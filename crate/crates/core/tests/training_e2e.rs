//! End-to-end training sanity: loss halves within 200 steps on a small
//! synthetic corpus and the held-out mAP@0.5 clears 0.80 with the default
//! inference thresholds.

use dualstain_core::boxgeom::AnnotationSet;
use dualstain_core::detector::{
    image_to_tensor, predict, train, Detector, DetectorConfig, PredictConfig, TrainConfig,
};
use dualstain_core::eval::{average_precision, map_range};
use dualstain_core::synth::{generate_slide, SlideSpec};
use dualstain_core::tensor::Tensor;

fn slide_spec(seed: u64) -> SlideSpec {
    let mut spec = SlideSpec::new(128, 128, seed);
    spec.dual_positive = 3;
    spec.negative = 1;
    spec.false_positive = 1;
    spec.clusters = 0;
    spec.min_gap_px = 12.0;
    spec
}

fn corpus(n: usize, base: u64) -> (Vec<(Tensor<f32>, Vec<dualstain_core::BBox>)>, Vec<AnnotationSet>, Vec<Tensor<f32>>) {
    let mut train_set = Vec::new();
    let mut gts = Vec::new();
    let mut images = Vec::new();
    for i in 0..n {
        let slide = generate_slide(&slide_spec(base + i as u64), &format!("s{i:03}")).unwrap();
        let img = image_to_tensor::<f32>(&slide.image);
        train_set.push((img.clone(), slide.annotations.boxes.clone()));
        gts.push(slide.annotations.clone());
        images.push(img);
    }
    (train_set, gts, images)
}

#[test]
fn two_hundred_steps_halve_the_loss_and_reach_map_080() {
    let (train_set, _, _) = corpus(64, 10_000);
    let (_, val_gts, val_images) = corpus(16, 20_000);

    let mut model = Detector::<f32>::build(DetectorConfig::default(), 77).unwrap();
    // 64 slides / batch 8 -> 8 steps per epoch; 25 epochs = 200 steps
    let tcfg = TrainConfig { epochs: 25, batch_size: 8, seed: 77, ..TrainConfig::default() };
    let t0 = std::time::Instant::now();
    let log = train(&mut model, &train_set, &tcfg).unwrap();
    let train_time = t0.elapsed();
    assert_eq!(log.rows.len(), 200);
    let first = log.first_total().unwrap();
    let last = log.last_total().unwrap();
    println!("train: {train_time:?}, loss {first:.4} -> {last:.4}");
    assert!(last < 0.5 * first, "loss {first} -> {last}");

    let pcfg = PredictConfig::default();
    let dets: Vec<_> = val_images
        .iter()
        .zip(&val_gts)
        .map(|(img, gt)| predict(&model, img, &gt.image_id, &pcfg).unwrap())
        .collect();
    let ap50 = average_precision(&dets, &val_gts, 0.5).unwrap();
    let report = map_range(&dets, &val_gts).unwrap();
    println!("held-out ap50 = {ap50:.4}, map5095 = {:.4}", report.map5095);
    assert!(ap50 >= 0.80, "ap50 = {ap50}");
}
