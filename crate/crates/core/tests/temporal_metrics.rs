use focalvid::fixtures::{texture_at, translating_frames};
use focalvid::image::Image;
use focalvid::metrics::tof;

fn scene(w: usize, h: usize, shift: f64, seed: u64) -> Image {
    Image::from_fn(w, h, 3, |x, y, c| texture_at(x as f64 - shift, y as f64, c, seed))
}

#[test]
fn identical_clips_score_zero() {
    let frames = translating_frames(64, 48, 4, (2, 1), 11).unwrap();
    assert_eq!(tof(frames.frames(), frames.frames()).unwrap(), 0.0);
}

#[test]
fn one_pixel_jitter_against_a_static_clip_costs_one() {
    // Each consecutive pair of the jittering clip moves by exactly one pixel in x,
    // the static reference by zero.
    let (w, h) = (64, 48);
    let gt: Vec<Image> = (0..6).map(|_| scene(w, h, 0.0, 5)).collect();
    let pred: Vec<Image> = (0..6).map(|t| scene(w, h, (t % 2) as f64, 5)).collect();
    let score = tof(&pred, &gt).unwrap();
    assert!((score - 1.0).abs() < 0.1, "tOF {score}");
}

#[test]
fn temporal_shuffle_scores_worse_than_the_ordered_clip() {
    let gt = translating_frames(64, 48, 6, (1, 0), 9).unwrap();
    let order = [0, 2, 1, 4, 3, 5];
    let shuffled: Vec<Image> = order.iter().map(|&t| gt.frames()[t].clone()).collect();
    let ordered = tof(gt.frames(), gt.frames()).unwrap();
    let score = tof(&shuffled, gt.frames()).unwrap();
    assert!(score > ordered, "{score} vs {ordered}");
    assert!(score > 1.0, "{score}");
}

#[test]
fn too_few_frames_is_an_error() {
    let one = vec![scene(16, 16, 0.0, 1)];
    assert!(tof(&one, &one).is_err());
}
