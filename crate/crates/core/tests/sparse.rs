use evgaze::nn::init::representative_model;
use evgaze::sparse::{densify, submanifold_conv_counted, to_sparse, SparseStreamer};
use evgaze::FrameTensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Dense zero-padded convolution evaluated only where the input is active.
fn masked_dense(x: &FrameTensor, k: &FrameTensor, bias: &[f32]) -> Vec<f32> {
    let [c, h, w]: [usize; 3] = x.dims().try_into().unwrap();
    let [oc_n, _, kh, kw]: [usize; 4] = k.dims().try_into().unwrap();
    let active = |y: usize, xx: usize| (0..c).any(|ch| x.get(&[ch, y, xx]) != 0.0);
    let mut out = vec![0.0f32; oc_n * h * w];
    for oc in 0..oc_n {
        for y in 0..h {
            for xx in 0..w {
                if !active(y, xx) {
                    continue;
                }
                let mut acc = bias[oc];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let ny = y as isize + ky as isize - (kh / 2) as isize;
                        let nx = xx as isize + kx as isize - (kw / 2) as isize;
                        if ny < 0 || nx < 0 || ny >= h as isize || nx >= w as isize {
                            continue;
                        }
                        for ic in 0..c {
                            acc += k.get(&[oc, ic, ky, kx]) * x.get(&[ic, ny as usize, nx as usize]);
                        }
                    }
                }
                out[(oc * h + y) * w + xx] = acc;
            }
        }
    }
    out
}

fn sparse_frame(rng: &mut ChaCha8Rng, c: usize, h: usize, w: usize, sparsity: f64) -> FrameTensor {
    let mut t = FrameTensor::zeros(&[c, h, w]);
    for p in 0..h * w {
        if rng.random_bool(1.0 - sparsity) {
            for ch in 0..c {
                t.data_mut()[ch * h * w + p] = rng.random_range(-1.0f32..1.0);
            }
        }
    }
    t
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn submanifold_matches_masked_dense(
        seed: u64,
        (c, h, w) in (1usize..=16, 1usize..=64, 1usize..=64),
        sparsity in 0.9f64..=0.99,
        (kh, kw) in (prop_oneof![Just(1usize), Just(3), Just(5)], prop_oneof![Just(1usize), Just(3), Just(5)]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = sparse_frame(&mut rng, c, h, w, sparsity);
        let oc = rng.random_range(1..=8);
        let kdata = (0..oc * c * kh * kw).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let k = FrameTensor::new(vec![oc, c, kh, kw], kdata).unwrap();
        let bias: Vec<f32> = (0..oc).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let sf = to_sparse(&x).unwrap();
        let (out, taps) = submanifold_conv_counted(&sf, &k, &bias).unwrap();
        prop_assert_eq!(out.sites(), sf.sites());
        prop_assert!(taps <= (sf.len() * kh * kw) as u64);
        let want = masked_dense(&x, &k, &bias);
        for (a, b) in densify(&out).data().iter().zip(&want) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn densify_inverts_to_sparse(seed: u64, (c, h, w) in (1usize..4, 1usize..20, 1usize..20), sparsity in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = sparse_frame(&mut rng, c, h, w, sparsity);
        prop_assert_eq!(densify(&to_sparse(&x).unwrap()), x);
    }
}

#[test]
fn sparse_streamer_counts_fewer_macs_on_sparse_input() {
    let model = representative_model(1);
    let mut s = SparseStreamer::new(&model).unwrap();
    assert_eq!(s.sparse_layers(), 3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let frame = sparse_frame(&mut rng, 2, 60, 80, 0.95);
    let (out, stats) = s.step(&frame).unwrap();
    assert_eq!(out.dims(), [3, 3, 4]);
    let dense_stem = model.macs_per_layer()[0];
    assert!(stats.macs <= dense_stem / 10, "{} vs {}", stats.macs, dense_stem);
}
