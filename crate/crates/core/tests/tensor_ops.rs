use hfrm_core::gradcheck::{self, max_relative_error};
use hfrm_core::ops::fft::fft2_realimag;
use hfrm_core::{ConvSpec, Error, SeededRng, SortIndex, Tape, Tensor};
use proptest::prelude::*;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.range(-1.0, 1.0)).collect()).unwrap()
}

fn t(shape: &[usize], data: &[f64]) -> Tensor {
    Tensor::new(shape, data.to_vec()).unwrap()
}

fn assert_grads<F>(inputs: &[Tensor], f: F)
where
    F: Fn(&mut Tape, &[hfrm_core::Var]) -> hfrm_core::Result<hfrm_core::Var>,
{
    for seed in 0..5 {
        let probes = gradcheck::check(inputs, &f, 6, STEP, seed).unwrap();
        let err = max_relative_error(&probes);
        assert!(err < TOL, "seed {seed}: relative error {err:e} in {probes:?}");
    }
}

#[test]
fn matmul_examples() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]));
    let b = tape.constant(t(&[2, 2], &[3.0, 4.0, 5.0, 6.0]));
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[3.0, 4.0, 5.0, 6.0]);

    let a = tape.constant(t(&[1, 2], &[1.0, 2.0]));
    let b = tape.constant(t(&[2, 1], &[3.0, 4.0]));
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[11.0]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    match tape.matmul(a, b) {
        Err(Error::Shape { lhs, rhs, .. }) => {
            assert_eq!(lhs, vec![2, 3]);
            assert_eq!(rhs, vec![2, 3]);
        }
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn matmul_gradients() {
    // gradient of sum of the output w.r.t. both operands
    assert_grads(&[random(&[3, 4], 1), random(&[4, 2], 2)], |tape, v| {
        let c = tape.matmul(v[0], v[1])?;
        Ok(tape.sum(c))
    });
    // batched and broadcast forms
    assert_grads(&[random(&[2, 3, 4], 3), random(&[2, 4, 5], 4)], |tape, v| tape.matmul(v[0], v[1]));
    assert_grads(&[random(&[3, 4], 5), random(&[2, 4, 5], 6)], |tape, v| tape.matmul(v[0], v[1]));
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[3], &[0.0, 0.0, 0.0]));
    let y = tape.softmax(x, 0).unwrap();
    for &v in tape.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
    let x = tape.constant(t(&[3], &[1000.0, 0.0, 0.0]));
    let y = tape.softmax(x, 0).unwrap();
    let d = tape.value(y).data();
    assert!((d[0] - 1.0).abs() < 1e-12 && d[1] < 1e-12 && d[2] < 1e-12);
    assert!(tape.value(y).is_finite());
}

#[test]
fn softmax_gradients() {
    assert_grads(&[random(&[5], 7)], |tape, v| tape.softmax(v[0], 0));
    assert_grads(&[random(&[3, 4, 2], 8)], |tape, v| tape.softmax(v[0], 1));
}

#[test]
fn sort_with_index_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(t(&[3], &[3.0, 1.0, 2.0]));
    let (y, idx) = tape.sort_with_index(x, 0).unwrap();
    assert_eq!(tape.value(y).data(), &[1.0, 2.0, 3.0]);
    assert_eq!(idx.order(), &[1, 2, 0]);

    let sorted = tape.constant(t(&[4], &[-1.0, 0.0, 0.5, 9.0]));
    let (_, idx) = tape.sort_with_index(sorted, 0).unwrap();
    assert_eq!(idx.order(), &[0, 1, 2, 3]);

    // ties keep original order
    let ties = tape.constant(t(&[4], &[2.0, 1.0, 2.0, 1.0]));
    let (_, idx) = tape.sort_with_index(ties, 0).unwrap();
    assert_eq!(idx.order(), &[1, 3, 0, 2]);

    let loss = tape.sum(y);
    tape.backward(loss).unwrap();
    assert_eq!(tape.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
}

#[test]
fn sort_gradient_routes_through_permutation() {
    assert_grads(&[random(&[4, 6], 9)], |tape, v| Ok(tape.sort_with_index(v[0], 1)?.0));
    assert_grads(&[random(&[3, 5, 2], 10)], |tape, v| Ok(tape.sort_with_index(v[0], 1)?.0));
}

#[test]
fn gather_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[3], &[10.0, 20.0, 30.0]));
    let idx = SortIndex::from_order(&[3], 0, vec![2, 0, 1]).unwrap();
    let y = tape.gather(x, &idx).unwrap();
    assert_eq!(tape.value(y).data(), &[30.0, 10.0, 20.0]);
    let id = SortIndex::identity(&[3], 0);
    let y = tape.gather(x, &id).unwrap();
    assert_eq!(tape.value(y).data(), &[10.0, 20.0, 30.0]);
}

#[test]
fn gather_rejects_out_of_range_order() {
    assert!(matches!(
        SortIndex::from_order(&[3], 0, vec![0, 1, 3]),
        Err(Error::Index { index: 3, len: 3, .. })
    ));
    assert!(SortIndex::from_order(&[3], 0, vec![0, 0, 1]).is_err());
}

#[test]
fn gather_gradients() {
    let x = random(&[4, 6], 11);
    let idx = SortIndex::ascending(&random(&[4, 6], 12), 1).unwrap();
    assert_grads(&[x.clone()], |tape, v| tape.gather(v[0], &idx));
    assert_grads(&[x], |tape, v| tape.scatter(v[0], &idx));
}

#[test]
fn conv_identity_kernels() {
    let x = random(&[2, 5, 5], 13);
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let w = tape.constant(t(&[2, 2, 1, 1], &[1.0, 0.0, 0.0, 1.0]));
    let y = tape.conv2d(xv, w, None, ConvSpec::pointwise()).unwrap();
    assert_eq!(tape.value(y), &x);

    let mut k = vec![0.0; 2 * 9];
    k[4] = 1.0;
    k[9 + 4] = 1.0;
    let w = tape.constant(t(&[2, 1, 3, 3], &k));
    let y = tape.conv2d(xv, w, None, ConvSpec::depthwise(3).unwrap()).unwrap();
    assert_eq!(tape.value(y), &x);

    for ks in [5, 7] {
        let mut k = vec![0.0; 2 * ks * ks];
        k[ks * ks / 2] = 1.0;
        k[ks * ks + ks * ks / 2] = 1.0;
        let w = tape.constant(t(&[2, 1, ks, ks], &k));
        let y = tape.conv2d(xv, w, None, ConvSpec::depthwise(ks).unwrap()).unwrap();
        assert_eq!(tape.value(y), &x);
    }
}

#[test]
fn conv_rejects_unsupported_kernel_size() {
    assert!(matches!(ConvSpec::depthwise(4), Err(Error::Config(_))));
    assert!(matches!(ConvSpec::dense(9), Err(Error::Config(_))));
}

#[test]
fn conv_matches_direct_loops() {
    // independent nested-loop reference for a dense strided convolution
    let x = random(&[2, 6, 6], 14);
    let w = random(&[3, 2, 3, 3], 15);
    let b = random(&[3], 16);
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
    let spec = ConvSpec::new(hfrm_core::ConvMode::Dense, 3, 2).unwrap();
    let y = tape.conv2d(xv, wv, Some(bv), spec).unwrap();
    assert_eq!(tape.shape(y), &[3, 3, 3]);
    for co in 0..3 {
        for oy in 0..3 {
            for ox in 0..3 {
                let mut acc = b.data()[co];
                for ci in 0..2 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (oy * 2 + ky) as isize - 1;
                            let ix = (ox * 2 + kx) as isize - 1;
                            if (0..6).contains(&iy) && (0..6).contains(&ix) {
                                acc += w.data()[((co * 2 + ci) * 3 + ky) * 3 + kx]
                                    * x.data()[(ci * 6 + iy as usize) * 6 + ix as usize];
                            }
                        }
                    }
                }
                let got = tape.value(y).data()[(co * 3 + oy) * 3 + ox];
                assert!((got - acc).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn conv_gradients() {
    let dw3 = ConvSpec::depthwise(3).unwrap();
    assert_grads(&[random(&[2, 5, 5], 17), random(&[2, 1, 3, 3], 18)], |tape, v| {
        tape.conv2d(v[0], v[1], None, dw3)
    });
    assert_grads(&[random(&[3, 4, 4], 19), random(&[2, 3, 1, 1], 20), random(&[2], 21)], |tape, v| {
        tape.conv2d(v[0], v[1], Some(v[2]), ConvSpec::pointwise())
    });
    let strided = ConvSpec::new(hfrm_core::ConvMode::Dense, 3, 2).unwrap();
    assert_grads(&[random(&[2, 6, 6], 22), random(&[3, 2, 3, 3], 23), random(&[3], 24)], |tape, v| {
        tape.conv2d(v[0], v[1], Some(v[2]), strided)
    });
    let dw7 = ConvSpec::depthwise(7).unwrap();
    assert_grads(&[random(&[2, 4, 4], 25), random(&[2, 1, 7, 7], 26)], |tape, v| {
        tape.conv2d(v[0], v[1], None, dw7)
    });
}

#[test]
fn layernorm_examples() {
    let mut tape = Tape::new();
    let one = tape.constant(Tensor::ones(&[4]));
    let zero = tape.constant(Tensor::zeros(&[4]));
    let x = tape.constant(Tensor::full(&[4, 2, 2], 3.5));
    let y = tape.layernorm(x, one, zero).unwrap();
    assert!(tape.value(y).data().iter().all(|&v| v == 0.0));

    // zero mean, unit variance across 4 channels at one position
    let x = tape.constant(t(&[4, 1, 1], &[1.0, -1.0, 1.0, -1.0]));
    let y = tape.layernorm(x, one, zero).unwrap();
    assert!(tape.value(y).max_abs_diff(tape.value(x)) < 1e-6);
}

#[test]
fn layernorm_gradients() {
    assert_grads(&[random(&[4, 1, 1], 27), random(&[4], 28), random(&[4], 29)], |tape, v| {
        tape.layernorm(v[0], v[1], v[2])
    });
    assert_grads(&[random(&[3, 2, 3], 30), random(&[3], 31), random(&[3], 32)], |tape, v| {
        tape.layernorm(v[0], v[1], v[2])
    });
}

/// Direct O(N^2) DFT of one plane.
fn dft2(x: &[f64], h: usize, w: usize) -> (Vec<f64>, Vec<f64>) {
    let mut re = vec![0.0; h * w];
    let mut im = vec![0.0; h * w];
    for u in 0..h {
        for v in 0..w {
            for y in 0..h {
                for xx in 0..w {
                    let ang = -2.0 * std::f64::consts::PI * ((u * y) as f64 / h as f64 + (v * xx) as f64 / w as f64);
                    re[u * w + v] += x[y * w + xx] * ang.cos();
                    im[u * w + v] += x[y * w + xx] * ang.sin();
                }
            }
        }
    }
    (re, im)
}

#[test]
fn fft_examples() {
    let c = 0.37;
    let f = fft2_realimag(&Tensor::full(&[1, 4, 8], c)).unwrap();
    let d = f.data();
    assert!((d[0] - c * 32.0).abs() < 1e-12);
    assert!(d[1..].iter().all(|v| v.abs() < 1e-12));
    let z = fft2_realimag(&Tensor::zeros(&[2, 4, 4])).unwrap();
    assert!(z.data().iter().all(|&v| v == 0.0));
}

#[test]
fn fft_matches_direct_dft_and_parseval() {
    let x = random(&[2, 8, 8], 33);
    let f = fft2_realimag(&x).unwrap();
    for ch in 0..2 {
        let (re, im) = dft2(x.channel(ch), 8, 8);
        let got = &f.data()[ch * 128..(ch + 1) * 128];
        for i in 0..64 {
            assert!((got[i] - re[i]).abs() < 1e-10);
            assert!((got[64 + i] - im[i]).abs() < 1e-10);
        }
    }
    let energy: f64 = f.data().iter().map(|v| v * v).sum();
    let expected = 64.0 * x.data().iter().map(|v| v * v).sum::<f64>();
    assert!(((energy - expected) / expected).abs() < 1e-8);
}

#[test]
fn fft_rejects_non_power_of_two() {
    assert!(matches!(fft2_realimag(&Tensor::zeros(&[1, 6, 8])), Err(Error::Config(_))));
}

#[test]
fn fft_gradients() {
    assert_grads(&[random(&[2, 4, 8], 34)], |tape, v| tape.fft2(v[0]));
}

#[test]
fn backward_examples() {
    let x0 = random(&[2, 3], 35);
    let mut tape = Tape::new();
    let x = tape.leaf(x0.clone());
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert_eq!(tape.grad(x).unwrap(), Tensor::ones(&[2, 3]));

    let mut tape = Tape::new();
    let x = tape.leaf(x0.clone());
    let sq = tape.square(x);
    let s = tape.sum(sq);
    let half = tape.scale(s, 0.5);
    tape.backward(half).unwrap();
    assert_eq!(tape.grad(x).unwrap(), x0);
}

#[test]
fn backward_contract_errors() {
    let mut tape = Tape::new();
    let x = tape.leaf(random(&[2, 2], 36));
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
    let s = tape.sum(x);
    tape.backward(s).unwrap();
    assert_eq!(tape.backward(s), Err(Error::TapeExhausted));
}

#[test]
fn backward_is_deterministic() {
    let run = || {
        let mut tape = Tape::new();
        let a = tape.leaf(random(&[3, 4], 37));
        let b = tape.leaf(random(&[4, 4], 38));
        let c = tape.matmul(a, b).unwrap();
        let s = tape.softmax(c, 1).unwrap();
        let l = tape.sum(s);
        let l = tape.sigmoid(l);
        tape.backward(l).unwrap();
        (tape.grad(a).unwrap(), tape.grad(b).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn elementwise_gradients() {
    let (a, b) = (random(&[3, 4], 39), random(&[3, 4], 40));
    assert_grads(&[a.clone(), b.clone()], |tape, v| tape.add(v[0], v[1]));
    assert_grads(&[a.clone(), b.clone()], |tape, v| tape.sub(v[0], v[1]));
    assert_grads(&[a.clone(), b.clone()], |tape, v| tape.mul(v[0], v[1]));
    assert_grads(&[a.clone()], |tape, v| Ok(tape.relu(v[0])));
    assert_grads(&[a.clone()], |tape, v| Ok(tape.sigmoid(v[0])));
    assert_grads(&[a.scale_for_test(3.0)], |tape, v| Ok(tape.huber(v[0])));
    assert_grads(&[a.clone()], |tape, v| Ok(tape.mean(v[0])));
    assert_grads(&[a.clone()], |tape, v| Ok(tape.sum(v[0])));
    assert_grads(&[a.clone(), random(&[1], 41)], |tape, v| tape.mul_scalar(v[0], v[1]));
}

trait ScaleForTest {
    fn scale_for_test(&self, k: f64) -> Tensor;
}

impl ScaleForTest for Tensor {
    fn scale_for_test(&self, k: f64) -> Tensor {
        self.map(|v| v * k)
    }
}

#[test]
fn shape_op_gradients() {
    let x = random(&[2, 3, 4], 42);
    assert_grads(&[x.clone()], |tape, v| tape.reshape(v[0], &[6, 4]));
    assert_grads(&[x.clone()], |tape, v| tape.transpose(v[0]));
    assert_grads(&[x.clone()], |tape, v| tape.permute(v[0], &[2, 0, 1]));
    assert_grads(&[x.clone()], |tape, v| tape.narrow(v[0], 1, 1, 2));
    assert_grads(&[x.clone(), random(&[2, 2, 4], 43)], |tape, v| tape.concat(&[v[0], v[1]], 1));
    assert_grads(&[x.clone()], |tape, v| tape.pad_repeat_last(v[0], 2, 3));
    assert_grads(&[random(&[2, 4, 4], 44)], |tape, v| tape.downsample2(v[0]));
    assert_grads(&[random(&[2, 3, 3], 45)], |tape, v| tape.upsample2(v[0]));
}

#[test]
fn channel_split_concat_roundtrip() {
    let x = random(&[4, 3, 3], 46);
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let a = tape.narrow(v, 0, 0, 2).unwrap();
    let b = tape.narrow(v, 0, 2, 2).unwrap();
    let y = tape.concat(&[a, b], 0).unwrap();
    assert_eq!(tape.value(y), &x);
}

#[test]
fn bilinear_down_is_block_average() {
    let x = t(&[1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
    let mut tape = Tape::new();
    let v = tape.constant(x);
    let d = tape.downsample2(v).unwrap();
    assert_eq!(tape.value(d).data(), &[2.5]);
    let u = tape.upsample2(v).unwrap();
    assert_eq!(tape.shape(u), &[1, 4, 4]);
    // corners are clamped copies
    assert_eq!(tape.value(u).data()[0], 1.0);
    assert_eq!(tape.value(u).data()[15], 4.0);
}

proptest! {
    #[test]
    fn sort_then_scatter_is_identity(data in prop::collection::vec(-5.0f64..5.0, 24), axis in 0usize..3) {
        let x = Tensor::new(&[2, 3, 4], data).unwrap();
        let mut tape = Tape::new();
        let v = tape.constant(x.clone());
        let (s, idx) = tape.sort_with_index(v, axis).unwrap();
        let back = tape.scatter(s, &idx).unwrap();
        prop_assert_eq!(tape.value(back), &x);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_shift_invariant(row in prop::collection::vec(-30.0f64..30.0, 1..12), c in -50.0f64..50.0) {
        let n = row.len();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new(&[n], row.clone()).unwrap());
        let shifted = tape.constant(Tensor::new(&[n], row.iter().map(|v| v + c).collect()).unwrap());
        let y = tape.softmax(x, 0).unwrap();
        let ys = tape.softmax(shifted, 0).unwrap();
        prop_assert!((tape.value(y).sum() - 1.0).abs() < 1e-12);
        prop_assert!(tape.value(y).max_abs_diff(tape.value(ys)) < 1e-12);
    }

    #[test]
    fn fft_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0, seed in 0u64..1000) {
        let x = random(&[1, 4, 4], seed);
        let y = random(&[1, 4, 4], seed + 1);
        let mix = x.zip_map(&y, |p, q| a * p + b * q).unwrap();
        let lhs = fft2_realimag(&mix).unwrap();
        let fx = fft2_realimag(&x).unwrap();
        let fy = fft2_realimag(&y).unwrap();
        let rhs = fx.zip_map(&fy, |p, q| a * p + b * q).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }
}

#[test]
fn fused_attention_matches_composition() {
    let q = random(&[2, 3, 5], 70);
    let k = random(&[2, 3, 7], 71);
    let v = random(&[2, 3, 7], 72);
    let mut tape = Tape::new();
    let (qv, kv, vv) = (tape.leaf(q.clone()), tape.leaf(k.clone()), tape.leaf(v.clone()));
    let fused = tape.attention(qv, kv, vv, 0.7).unwrap();
    let qt = tape.transpose(qv).unwrap();
    let s = tape.matmul(qt, kv).unwrap();
    let s = tape.scale(s, 0.7);
    let p = tape.softmax(s, 2).unwrap();
    let pt = tape.transpose(p).unwrap();
    let o = tape.matmul(vv, pt).unwrap();
    assert!(tape.value(fused).max_abs_diff(tape.value(o)) < 1e-14);
    assert_grads(&[q, k, v], |t, x| t.attention(x[0], x[1], x[2], 0.7));
}

#[test]
fn fused_attention_rejects_mismatched_batches() {
    let mut tape = Tape::new();
    let q = tape.leaf(random(&[2, 3, 5], 1));
    let k = tape.leaf(random(&[3, 3, 5], 2));
    assert!(matches!(tape.attention(q, k, k, 1.0), Err(Error::Shape { .. })));
}
