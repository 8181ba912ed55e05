use scip_core::rnn::net::{loss_and_grad, sequence_loss, Layout, TrainSample, Workspace};

const EPS: f64 = 1e-5;
const MAX_REL: f64 = 1e-4;

/// Deterministic parameters in roughly [-0.8, 0.8].
fn params_for(layout: &Layout, salt: u64) -> Vec<f64> {
    (0..layout.len as u64)
        .map(|i| {
            let h = scip_core::seed::mix(i ^ (salt << 32));
            (h >> 11) as f64 / (1u64 << 53) as f64 * 1.6 - 0.8
        })
        .collect()
}

/// Loss with the given dropout masks applied, through the training path only.
fn masked_loss(layout: &Layout, params: &[f64], sample: &TrainSample<'_>) -> f64 {
    let mut sink = vec![0.0; layout.len];
    loss_and_grad(layout, params, sample, &mut sink, 0.0, &mut Workspace::default())
}

/// `abs_floor` accepts differences below the round-off of the difference
/// quotient itself (about `1e-16 * loss / EPS`), for gradients near zero.
fn check(
    layout: &Layout,
    inputs: &[f64],
    label: f64,
    loss_from: usize,
    masks: &[Option<Vec<f64>>],
    salt: u64,
    abs_floor: f64,
) {
    let params = params_for(layout, salt);
    let sample = TrainSample {
        inputs,
        label,
        loss_from,
        masks,
    };
    let mut grad = vec![0.0; layout.len];
    loss_and_grad(layout, &params, &sample, &mut grad, 1.0, &mut Workspace::default());

    let unmasked = masks.iter().all(Option::is_none);
    let loss_at = |p: &[f64]| {
        if unmasked {
            sequence_loss(layout, p, inputs, label, loss_from)
        } else {
            masked_loss(layout, p, &sample)
        }
    };
    let mut worst = 0.0f64;
    let mut p = params.clone();
    for i in 0..layout.len {
        p[i] = params[i] + EPS;
        let up = loss_at(&p);
        p[i] = params[i] - EPS;
        let down = loss_at(&p);
        p[i] = params[i];
        let numeric = (up - down) / (2.0 * EPS);
        let scale = grad[i].abs().max(numeric.abs());
        let rel = if scale == 0.0 { 0.0 } else { (grad[i] - numeric).abs() / scale };
        assert!(
            rel <= MAX_REL || (grad[i] - numeric).abs() < abs_floor,
            "param {i}: analytic {} numeric {numeric} rel {rel}",
            grad[i]
        );
        worst = worst.max(rel);
    }
    eprintln!("{} params, worst relative error {worst:.2e}", layout.len);
}

#[test]
fn two_cells_three_steps() {
    let layout = Layout::new(1, &[2]);
    check(&layout, &[0.3, -1.2, 0.7], 1.0, 0, &[None], 1, 0.0);
    check(&layout, &[0.3, -1.2, 0.7], 0.0, 1, &[None], 2, 0.0);
}

#[test]
fn stacked_layers_with_relu_between() {
    let layout = Layout::new(1, &[3, 2, 3]);
    let inputs = [0.9, -0.4, 1.5, 0.1, -2.0];
    check(&layout, &inputs, 1.0, 2, &[None, None, None], 3, 1e-10);
    check(&layout, &inputs, 0.0, 0, &[None, None, None], 4, 1e-10);
}

#[test]
fn stacked_layers_with_fixed_dropout_masks() {
    let layout = Layout::new(1, &[3, 4]);
    let masks = vec![Some(vec![2.0, 0.0, 2.0]), Some(vec![0.0, 1.25, 1.25, 1.25])];
    check(&layout, &[0.2, 0.5, -0.3, 1.1], 1.0, 1, &masks, 5, 1e-10);
}
