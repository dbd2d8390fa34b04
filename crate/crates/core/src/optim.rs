//! Nelder–Mead simplex search with an evaluation budget.

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Minimizes `f` from `start` using an initial simplex with one vertex
/// offset by `steps[i]` along each axis. Stops after `budget` evaluations or
/// when the simplex values spread less than `tolerance`. The best point ever
/// evaluated is returned, so the result never exceeds `f(start)`.
pub fn nelder_mead<F>(
    mut f: F,
    start: &[f64],
    steps: &[f64],
    budget: usize,
    tolerance: f64,
) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
{
    assert_eq!(start.len(), steps.len(), "one step per parameter");
    let n = start.len();
    let mut evaluations = 0;
    let mut best = Minimum {
        x: start.to_vec(),
        value: f64::INFINITY,
        evaluations: 0,
    };
    let mut eval = |x: &[f64], evaluations: &mut usize, best: &mut Minimum| -> f64 {
        *evaluations += 1;
        let v = f(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        if v < best.value {
            best.x = x.to_vec();
            best.value = v;
        }
        v
    };
    if budget == 0 {
        return best;
    }

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let v0 = eval(start, &mut evaluations, &mut best);
    simplex.push((start.to_vec(), v0));
    for i in 0..n {
        if evaluations >= budget {
            best.evaluations = evaluations;
            return best;
        }
        let mut x = start.to_vec();
        x[i] += steps[i];
        let v = eval(&x, &mut evaluations, &mut best);
        simplex.push((x, v));
    }

    let affine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
        a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect()
    };

    while evaluations < budget {
        // stable sort keeps the older vertex first among equal values
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[n].1 - simplex[0].1 <= tolerance && simplex[n].1.is_finite() {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, v) in centroid.iter_mut().zip(x) {
                *c += v / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflected = affine(&centroid, &worst.0, -1.0);
        let fr = eval(&reflected, &mut evaluations, &mut best);

        if fr < simplex[0].1 {
            if evaluations >= budget {
                simplex[n] = (reflected, fr);
                break;
            }
            let expanded = affine(&centroid, &worst.0, -2.0);
            let fe = eval(&expanded, &mut evaluations, &mut best);
            simplex[n] = if fe < fr {
                (expanded, fe)
            } else {
                (reflected, fr)
            };
            continue;
        }
        if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
            continue;
        }
        if evaluations >= budget {
            break;
        }
        let (contracted, fc) = if fr < worst.1 {
            let x = affine(&centroid, &worst.0, -0.5);
            let v = eval(&x, &mut evaluations, &mut best);
            (x, v)
        } else {
            let x = affine(&centroid, &worst.0, 0.5);
            let v = eval(&x, &mut evaluations, &mut best);
            (x, v)
        };
        if fc < fr.min(worst.1) {
            simplex[n] = (contracted, fc);
            continue;
        }
        // shrink toward the best vertex
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            if evaluations >= budget {
                break;
            }
            let x = affine(&anchor, &vertex.0, 0.5);
            let v = eval(&x, &mut evaluations, &mut best);
            *vertex = (x, v);
        }
    }
    best.evaluations = evaluations;
    best
}
