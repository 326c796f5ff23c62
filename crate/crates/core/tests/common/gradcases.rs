//! Gradient-check cases on tiny models, each returning named results.

use cyclesem_core::baseline::{AutoencoderArch, AutoencoderModel};
use cyclesem_core::nn::{Graph, Mode, ParamSet, Tensor, Var};
use cyclesem_core::rng::CounterRng;
use cyclesem_core::segmod::{cross_entropy_loss, SegmentationModel, UNetArch};
use cyclesem_core::synthmod::{
    adversarial_losses, generator_adversarial_loss, l1_loss, DiscriminatorArch, DiscriminatorModel, GeneratorArch,
    GeneratorModel,
};

use super::*;

pub type Named = Vec<(&'static str, GradCheck)>;

/// Every case, in a fixed order.
pub fn all() -> Named {
    [
        cross_entropy_input as fn() -> Named,
        adversarial_inputs,
        l1_input,
        graph_ops,
        segmentor_params,
        generator_params,
        discriminator_params,
        autoencoder_params,
    ]
    .iter()
    .flat_map(|case| case())
    .collect()
}

pub fn cross_entropy_input() -> Named {
    let mut rng = CounterRng::new(1, 0);
    let p = random_probs(&mut rng, 2, 4, 3);
    let t = random_onehot(&mut rng, 2, 4, 3);
    let g = cross_entropy_loss(&p, &t).unwrap().grad;
    vec![("ce", check_input(&p, &g, |_| false, |q| cross_entropy_loss(q, &t).unwrap().value))]
}

pub fn adversarial_inputs() -> Named {
    let mut rng = CounterRng::new(2, 0);
    let real = random_tensor(&mut rng, [2, 1, 3, 3], 0.05, 0.95);
    let fake = random_tensor(&mut rng, [2, 1, 3, 3], 0.05, 0.95);
    let a = adversarial_losses(&real, &fake).unwrap();
    let c1 = check_input(&real, &a.d_grad_real, |_| false, |r| adversarial_losses(r, &fake).unwrap().d_loss);
    let c2 = check_input(&fake, &a.d_grad_fake, |_| false, |f| adversarial_losses(&real, f).unwrap().d_loss);
    let c3 = check_input(&fake, &a.g_grad_fake, |_| false, |f| adversarial_losses(&real, f).unwrap().g_adv_loss);
    vec![("d_loss/real", c1), ("d_loss/fake", c2), ("g_adv/fake", c3)]
}

pub fn l1_input() -> Named {
    let mut rng = CounterRng::new(3, 0);
    let x = random_tensor(&mut rng, [1, 1, 5, 5], 0.0, 1.0);
    let mut xh = random_tensor(&mut rng, [1, 1, 5, 5], 0.0, 1.0);
    xh.data_mut()[0] = x.data()[0];
    let g = l1_loss(&x, &xh).unwrap().grad;
    let near_kink = |i: usize| (x.data()[i] - xh.data()[i]).abs() < 1e-4 + FD_STEP;
    let c = check_input(&xh, &g, near_kink, |q| l1_loss(&x, q).unwrap().value);
    assert!(c.excluded >= 1, "the planted kink must be excluded");
    vec![("l1", c)]
}

/// Checks `d sum(r * op(x)) / dx` for one graph op.
pub fn op_check(shape: [usize; 4], seed: u64, build: impl Fn(&mut Graph<f64>, Var) -> Var) -> GradCheck {
    let mut rng = CounterRng::new(seed, 0);
    let x = random_tensor(&mut rng, shape, -1.0, 1.0);
    let run = |x: &Tensor<f64>| {
        let mut g = Graph::new();
        let v = g.input_with_grad(x.clone());
        let y = build(&mut g, v);
        (g, v, y)
    };
    let (g, v, y) = run(&x);
    let r = random_tensor(&mut CounterRng::new(seed, 1), g.value(y).shape(), -1.0, 1.0);
    let analytic = g.backward(y, r.clone()).of(v).expect("input gradient").clone();
    let base_sig = g.piece_signature();
    let mut probe = x.clone();
    let mut out = GradCheck::default();
    for i in 0..x.len() {
        let x0 = x.data()[i];
        let mut eval = |delta: f64| {
            probe.data_mut()[i] = x0 + delta;
            let (g, _, y) = run(&probe);
            let val: f64 = g.value(y).data().iter().zip(r.data()).map(|(a, b)| a * b).sum();
            (val, g.piece_signature())
        };
        let (fp, sp) = eval(FD_STEP);
        let (fm, sm) = eval(-FD_STEP);
        probe.data_mut()[i] = x0;
        if sp != base_sig || sm != base_sig {
            out.excluded += 1;
            continue;
        }
        out.checked += 1;
        out.max_rel_err = out.max_rel_err.max(rel_err(analytic.data()[i], (fp - fm) / (2.0 * FD_STEP)));
    }
    out
}

pub fn graph_ops() -> Named {
    let mut rng = CounterRng::new(11, 0);
    let w3 = random_tensor(&mut rng, [3, 2, 3, 3], -0.5, 0.5);
    let b3 = random_tensor(&mut rng, [1, 3, 1, 1], -0.5, 0.5);
    let wl = random_tensor(&mut rng, [4, 2 * 4 * 4, 1, 1], -0.5, 0.5);
    let bl = random_tensor(&mut rng, [1, 4, 1, 1], -0.5, 0.5);
    let s = [2, 2, 4, 4];
    let conv = |stride: usize| {
        let (w, b) = (w3.clone(), b3.clone());
        move |g: &mut Graph<f64>, x: Var| {
            let w = g.input_with_grad(w.clone());
            let b = g.input_with_grad(b.clone());
            g.conv2d(x, w, b, stride, 1)
        }
    };
    let checks: Vec<(&str, GradCheck)> = vec![
        ("conv s1", op_check(s, 1, conv(1))),
        ("conv s2", op_check(s, 2, conv(2))),
        (
            "linear",
            op_check(s, 3, |g, x| {
                let w = g.input(wl.clone());
                let b = g.input(bl.clone());
                g.linear(x, w, b)
            }),
        ),
        ("relu", op_check(s, 4, |g, x| g.relu(x))),
        ("leaky", op_check(s, 5, |g, x| g.leaky_relu(x, 0.2))),
        ("sigmoid", op_check(s, 6, |g, x| g.sigmoid(x))),
        ("tanh", op_check(s, 7, |g, x| g.tanh(x))),
        ("maxpool", op_check(s, 8, |g, x| g.max_pool2(x))),
        ("upsample", op_check(s, 9, |g, x| g.upsample2(x))),
        ("softmax", op_check(s, 10, |g, x| g.softmax(x))),
        ("instance_norm", op_check(s, 12, |g, x| g.instance_norm(x))),
        (
            "concat+add",
            op_check(s, 13, |g, x| {
                let y = g.tanh(x);
                let z = g.add(x, y);
                g.concat(z, x)
            }),
        ),
        ("reshape", op_check(s, 14, |g, x| g.reshape(x, [2, 32, 1, 1]))),
    ];
    checks
}

pub fn segmentor_params() -> Named {
    let arch = UNetArch { depth: 2, base_channels: 2, in_channels: 1, num_classes: 4 };
    let mut model = SegmentationModel::<f32>::new(arch, 8, 4).unwrap().cast::<f64>();
    jitter(model.params_mut(), 4);
    assert!(model.params().count() <= 500);
    let mut rng = CounterRng::new(4, 1);
    let x = random_tensor(&mut rng, [2, 1, 8, 8], 0.0, 1.0);
    let t = random_onehot(&mut rng, 2, 4, 8);
    let loss = |p: &ParamSet<f64>| {
        let mut m = model.clone();
        *m.params_mut() = p.clone();
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let y = m.forward(&mut g, xv, Mode::Train);
        let l = cross_entropy_loss(g.value(y), &t).unwrap();
        (l.value, g.piece_signature())
    };
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let y = model.forward(&mut g, xv, Mode::Train);
    let l = cross_entropy_loss(g.value(y), &t).unwrap();
    let grads = g.backward(y, l.grad).param_grads();
    let mut params = model.params().clone();
    vec![("segmentor", check_params(&mut params, &grads, 12, loss))]
}

pub fn generator_params() -> Named {
    let lambda = 10.0;
    let mut gen = GeneratorModel::<f32>::new(GeneratorArch { base_channels: 1, res_blocks: 1, num_classes: 4 }, 8, 5)
        .unwrap()
        .cast::<f64>();
    let mut disc = DiscriminatorModel::<f32>::new(DiscriminatorArch { base_channels: 1 }, 8, 6).unwrap().cast::<f64>();
    jitter(gen.params_mut(), 5);
    jitter(disc.params_mut(), 6);
    assert!(gen.params().count() <= 600 && disc.params().count() <= 500);
    let mut rng = CounterRng::new(5, 1);
    let y = random_probs(&mut rng, 2, 4, 8);

    let forward = |m: &GeneratorModel<f64>| {
        let mut g = Graph::new();
        let yv = g.input(y.clone());
        let fake = m.forward(&mut g, yv, Mode::Train);
        let score = disc.forward(&mut g, fake, Mode::Frozen);
        (g, fake, score)
    };
    // Targets kept well away from the generator output so no |.| kink is
    // crossed by a parameter step.
    let (g0, fake0, _) = forward(&gen);
    let x = g0.value(fake0).map(|v| if v > 0.5 { v - 0.3 } else { v + 0.3 });

    let loss = |p: &ParamSet<f64>| {
        let mut m = gen.clone();
        *m.params_mut() = p.clone();
        let (g, fake, score) = forward(&m);
        let adv = generator_adversarial_loss(g.value(score)).unwrap().value;
        let l1 = l1_loss(&x, g.value(fake)).unwrap().value;
        (adv + lambda * l1, g.piece_signature())
    };
    let (g, fake, score) = forward(&gen);
    let adv = generator_adversarial_loss(g.value(score)).unwrap();
    let mut l1 = l1_loss(&x, g.value(fake)).unwrap().grad;
    l1.data_mut().iter_mut().for_each(|v| *v *= lambda);
    let grads = g.backward_multi(vec![(score, adv.grad), (fake, l1)]).param_grads();
    // Frozen discriminator parameters must not receive gradients.
    assert_eq!(grads.len(), gen.params().len());
    let mut params = gen.params().clone();
    vec![("generator", check_params(&mut params, &grads, 12, loss))]
}

pub fn discriminator_params() -> Named {
    let mut disc = DiscriminatorModel::<f32>::new(DiscriminatorArch { base_channels: 2 }, 16, 7).unwrap().cast::<f64>();
    jitter(disc.params_mut(), 7);
    assert!(disc.params().count() <= 500);
    let mut rng = CounterRng::new(7, 1);
    let real = random_tensor(&mut rng, [2, 1, 16, 16], 0.0, 1.0);
    let fake = random_tensor(&mut rng, [2, 1, 16, 16], 0.0, 1.0);
    let run = |m: &DiscriminatorModel<f64>| {
        let mut g = Graph::new();
        let r = g.input(real.clone());
        let f = g.input(fake.clone());
        let sr = m.forward(&mut g, r, Mode::Train);
        let sf = m.forward(&mut g, f, Mode::Train);
        (g, sr, sf)
    };
    let loss = |p: &ParamSet<f64>| {
        let mut m = disc.clone();
        *m.params_mut() = p.clone();
        let (g, sr, sf) = run(&m);
        (adversarial_losses(g.value(sr), g.value(sf)).unwrap().d_loss, g.piece_signature())
    };
    let (g, sr, sf) = run(&disc);
    let a = adversarial_losses(g.value(sr), g.value(sf)).unwrap();
    let grads = g.backward_multi(vec![(sr, a.d_grad_real), (sf, a.d_grad_fake)]).param_grads();
    let mut params = disc.params().clone();
    vec![("discriminator", check_params(&mut params, &grads, 12, loss))]
}

pub fn autoencoder_params() -> Named {
    let mut ae = AutoencoderModel::<f32>::new(AutoencoderArch { base_channels: 1, bottleneck: 4 }, 8, 8)
        .unwrap()
        .cast::<f64>();
    jitter(ae.params_mut(), 8);
    assert!(ae.params().count() <= 500);
    let mut rng = CounterRng::new(8, 1);
    // Every parameter reaches every decoder unit through the bottleneck, so
    // keep the image small to limit kink crossings.
    let x = random_tensor(&mut rng, [1, 1, 8, 8], 0.0, 1.0);
    let run = |m: &AutoencoderModel<f64>| {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let y = m.forward(&mut g, xv, Mode::Train);
        (g, y)
    };
    let (g0, y0) = run(&ae);
    let target = g0.value(y0).map(|v| if v > 0.5 { v - 0.3 } else { v + 0.3 });
    let loss = |p: &ParamSet<f64>| {
        let mut m = ae.clone();
        *m.params_mut() = p.clone();
        let (g, y) = run(&m);
        (l1_loss(&target, g.value(y)).unwrap().value, g.piece_signature())
    };
    let (g, y) = run(&ae);
    let l = l1_loss(&target, g.value(y)).unwrap();
    let grads = g.backward(y, l.grad).param_grads();
    let mut params = ae.params().clone();
    vec![("autoencoder", check_params(&mut params, &grads, 12, loss))]
}

