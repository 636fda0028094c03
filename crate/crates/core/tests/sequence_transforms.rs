use focalvid::fixtures::translating_frames;
use focalvid::flow_prop::translation_flows;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn flips_and_reversals_are_involutions(
        w in 2usize..12,
        h in 2usize..10,
        n in 2usize..5,
        seed in any::<u64>(),
    ) {
        let frames = translating_frames(w, h, n, (1, 0), seed).unwrap();
        prop_assert_eq!(&frames.horizontal_flip().horizontal_flip(), &frames);
        prop_assert_eq!(&frames.temporal_reverse().temporal_reverse(), &frames);
        prop_assert_eq!(
            frames.temporal_reverse().frames()[0].clone(),
            frames.frames()[n - 1].clone()
        );
        let flipped = frames.horizontal_flip();
        prop_assert_eq!(flipped.frames()[0].pixel(0, 0), frames.frames()[0].pixel(w - 1, 0));
    }

    #[test]
    fn translation_flows_transform_like_the_motion(
        w in 2usize..10,
        h in 2usize..10,
        n in 2usize..5,
        dx in -3i32..4,
        dy in -3i32..4,
    ) {
        let (dx, dy) = (f64::from(dx), f64::from(dy));
        let (fwd, bwd) = translation_flows(w, h, n, dx, dy).unwrap();
        let (mfwd, mbwd) = translation_flows(w, h, n, -dx, dy).unwrap();
        prop_assert_eq!(fwd.horizontal_flip(), mfwd);
        prop_assert_eq!(bwd.horizontal_flip(), mbwd);
        // Reversing time swaps the roles of forward and backward motion.
        prop_assert_eq!(fwd.temporal_reverse(), bwd);
    }
}
