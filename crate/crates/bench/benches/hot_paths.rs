use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use dynsuite_bench::{input, mlp, model, system};
use dynsuite_core::diffnet::grad_params;
use dynsuite_core::integrate::{IntegratorChoice, Scheme};
use dynsuite_core::metrics::vpt;
use dynsuite_core::models::{Direction, ModelClass};
use dynsuite_core::systems::{default_method, render, simulate, SystemKind};
use dynsuite_core::Tensor;

fn networks(c: &mut Criterion) {
    let net = mlp(&[4, 200, 200, 200, 1]);
    let x = input(4);
    c.bench_function("mlp_forward_200x3", |b| b.iter(|| net.forward(black_box(&x)).unwrap()));
    c.bench_function("mlp_grad_input_200x3", |b| b.iter(|| net.grad_input(black_box(&x)).unwrap()));
    c.bench_function("mlp_grad_params_200x3", |b| {
        b.iter(|| {
            grad_params(&[&net], |tape, vars| {
                let v = tape.leaf(Tensor::from_vec(1, 4, x.clone())?);
                Ok(vars[0].forward(v).sum())
            })
            .unwrap()
        })
    });
}

fn simulation(c: &mut Criterion) {
    let (s0, spec) = system(SystemKind::MassSpring);
    c.bench_function("leapfrog_mass_spring_256", |b| {
        b.iter(|| simulate(&spec, black_box(&s0), 0.05, 256, IntegratorChoice::new(Scheme::Leapfrog)).unwrap())
    });
    let (s0, spec) = system(SystemKind::Pendulum);
    c.bench_function("dopri_pendulum_256", |b| {
        b.iter(|| simulate(&spec, black_box(&s0), 0.05, 256, default_method(&spec)).unwrap())
    });
    let (s0, spec) = system(SystemKind::TwoBody);
    c.bench_function("render_two_body_32", |b| b.iter(|| render(&spec, black_box(&s0), (32, 32)).unwrap()));
}

fn rollouts(c: &mut Criterion) {
    let s0 = input(4);
    for class in [ModelClass::Hgn, ModelClass::Node] {
        let m = model(class, 4);
        c.bench_function(&format!("{class}_rollout_100"), |b| {
            b.iter(|| m.rollout(black_box(&s0), 100, Direction::Forward).unwrap())
        });
    }
}

fn metrics(c: &mut Criterion) {
    let gt: Vec<Vec<f64>> = (0..256).map(|t| input(1024).iter().map(|v| v + t as f64).collect()).collect();
    let pred: Vec<Vec<f64>> = gt.iter().map(|f| f.iter().map(|v| v * 1.001).collect()).collect();
    c.bench_function("vpt_256x1024", |b| b.iter(|| vpt(black_box(&gt), black_box(&pred), 0.025).unwrap()));
}

criterion_group!(benches, networks, simulation, rollouts, metrics);
criterion_main!(benches);
