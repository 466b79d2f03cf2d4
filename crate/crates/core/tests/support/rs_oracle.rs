//! Independent shortest-path oracles: Reeds–Shepp by Newton multistart over
//! every word shape, Dubins by closed form. Unit turning radius throughout.
#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

#[derive(Clone, Copy)]
enum Slot {
    /// Steering (+1 left, 0 straight, -1 right), unknown index, sign.
    Free(f64, usize, f64),
    Fixed(f64, f64),
}

fn wrap(a: f64) -> f64 {
    let v = (a + PI).rem_euclid(2.0 * PI) - PI;
    if v <= -PI { v + 2.0 * PI } else { v }
}

fn drive(shape: &[Slot], z: &[f64; 3]) -> (f64, f64, f64) {
    let (mut x, mut y, mut th) = (0.0f64, 0.0f64, 0.0f64);
    for s in shape {
        let (k, l) = match *s {
            Slot::Free(k, i, sg) => (k, sg * z[i]),
            Slot::Fixed(k, l) => (k, l),
        };
        if k == 0.0 {
            x += l * th.cos();
            y += l * th.sin();
        } else {
            let th1 = th + k * l;
            x += (th1.sin() - th.sin()) / k;
            y -= (th1.cos() - th.cos()) / k;
            th = th1;
        }
    }
    (x, y, th)
}

fn shapes() -> Vec<Vec<Slot>> {
    use Slot::*;
    let mut out = Vec::new();
    for a in [1.0, -1.0] {
        for b in [1.0, -1.0] {
            out.push(vec![Free(a, 0, 1.0), Free(0.0, 1, 1.0), Free(b, 2, 1.0)]);
        }
        out.push(vec![Free(a, 0, 1.0), Free(-a, 1, 1.0), Free(a, 2, 1.0)]);
        for sg in [1.0, -1.0] {
            out.push(vec![Free(a, 0, 1.0), Free(-a, 1, 1.0), Free(a, 1, sg), Free(-a, 2, 1.0)]);
        }
        for c in [1.0, -1.0] {
            for h in [FRAC_PI_2, -FRAC_PI_2] {
                out.push(vec![Free(a, 0, 1.0), Fixed(-a, h), Free(0.0, 1, 1.0), Free(c, 2, 1.0)]);
                out.push(vec![Free(c, 2, 1.0), Free(0.0, 1, 1.0), Fixed(-a, h), Free(a, 0, 1.0)]);
            }
        }
        for h1 in [FRAC_PI_2, -FRAC_PI_2] {
            for h2 in [FRAC_PI_2, -FRAC_PI_2] {
                out.push(vec![
                    Free(a, 0, 1.0),
                    Fixed(-a, h1),
                    Free(0.0, 1, 1.0),
                    Fixed(a, h2),
                    Free(-a, 2, 1.0),
                ]);
            }
        }
    }
    out
}

fn cost(shape: &[Slot], z: &[f64; 3]) -> f64 {
    shape
        .iter()
        .map(|s| match *s {
            Slot::Free(_, i, _) => z[i].abs(),
            Slot::Fixed(_, l) => l.abs(),
        })
        .sum()
}

fn residual(shape: &[Slot], z: &[f64; 3], goal: (f64, f64, f64)) -> [f64; 3] {
    let (x, y, th) = drive(shape, z);
    [x - goal.0, y - goal.1, wrap(th - goal.2)]
}

fn solve3(j: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(j);
    if d.abs() < 1e-12 {
        return None;
    }
    let mut out = [0.0; 3];
    for c in 0..3 {
        let mut m = j;
        for row in 0..3 {
            m[row][c] = r[row];
        }
        out[c] = det(m) / d;
    }
    Some(out)
}

fn newton(shape: &[Slot], mut z: [f64; 3], goal: (f64, f64, f64)) -> Option<[f64; 3]> {
    for _ in 0..40 {
        let r = residual(shape, &z, goal);
        let norm = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if norm < 1e-12 {
            return Some(z);
        }
        let mut jac = [[0.0; 3]; 3];
        for c in 0..3 {
            let h = 1e-6;
            let (mut zp, mut zm) = (z, z);
            zp[c] += h;
            zm[c] -= h;
            let (rp, rm) = (residual(shape, &zp, goal), residual(shape, &zm, goal));
            for row in 0..3 {
                jac[row][c] = wrap(rp[row] - rm[row]) / (2.0 * h);
            }
        }
        let step = solve3(jac, r)?;
        let mut alpha = 1.0;
        let mut moved = false;
        for _ in 0..20 {
            let trial = [z[0] - alpha * step[0], z[1] - alpha * step[1], z[2] - alpha * step[2]];
            let rt = residual(shape, &trial, goal);
            if rt.iter().map(|v| v.abs()).fold(0.0, f64::max) < norm {
                z = trial;
                moved = true;
                break;
            }
            alpha *= 0.5;
        }
        if !moved {
            return None;
        }
    }
    let r = residual(shape, &z, goal);
    (r.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-10).then_some(z)
}

/// Shortest Reeds–Shepp length from the origin to `(x, y, phi)`, found by
/// running Newton from a grid of starts on every word shape.
pub fn rs_oracle(x: f64, y: f64, phi: f64) -> f64 {
    let d = x.hypot(y);
    let arcs = [-2.0, -0.5, 0.5, 2.0];
    let lines = [-d - 1.0, d + 1.0];
    let mut best = f64::INFINITY;
    for shape in shapes() {
        let straight: Vec<bool> = (0..3)
            .map(|i| shape.iter().any(|s| matches!(*s, Slot::Free(k, j, _) if j == i && k == 0.0)))
            .collect();
        let grid = |i: usize| -> &[f64] { if straight[i] { &lines } else { &arcs } };
        for &a in grid(0) {
            for &b in grid(1) {
                for &c in grid(2) {
                    if let Some(z) = newton(&shape, [a, b, c], (x, y, phi)) {
                        best = best.min(cost(&shape, &z));
                    }
                }
            }
        }
    }
    best
}

fn m2pi(a: f64) -> f64 {
    a.rem_euclid(2.0 * PI)
}

/// Shortest forward-only (Dubins) length from the origin to `(x, y, phi)`.
/// Each closed-form word is checked by driving it before it counts.
pub fn dubins_oracle(x: f64, y: f64, phi: f64) -> f64 {
    let d = x.hypot(y);
    let th = y.atan2(x);
    let a = m2pi(-th);
    let b = m2pi(phi - th);
    let (sa, sb, ca, cb) = (a.sin(), b.sin(), a.cos(), b.cos());
    let cab = (a - b).cos();
    let mut words: Vec<[(f64, f64); 3]> = Vec::new();

    let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sa - sb);
    if p2 >= 0.0 {
        let tmp = (cb - ca).atan2(d + sa - sb);
        words.push([(1.0, m2pi(-a + tmp)), (0.0, p2.sqrt()), (1.0, m2pi(b - tmp))]);
    }
    let p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sb - sa);
    if p2 >= 0.0 {
        let tmp = (ca - cb).atan2(d - sa + sb);
        words.push([(-1.0, m2pi(a - tmp)), (0.0, p2.sqrt()), (-1.0, m2pi(-b + tmp))]);
    }
    let p2 = -2.0 + d * d + 2.0 * cab + 2.0 * d * (sa + sb);
    if p2 >= 0.0 {
        let p = p2.sqrt();
        let tmp = (-ca - cb).atan2(d + sa + sb) - (-2.0f64).atan2(p);
        words.push([(1.0, m2pi(-a + tmp)), (0.0, p), (-1.0, m2pi(-b + tmp))]);
    }
    let p2 = d * d - 2.0 + 2.0 * cab - 2.0 * d * (sa + sb);
    if p2 >= 0.0 {
        let p = p2.sqrt();
        let tmp = (ca + cb).atan2(d - sa - sb) - 2.0f64.atan2(p);
        words.push([(-1.0, m2pi(a - tmp)), (0.0, p), (1.0, m2pi(b - tmp))]);
    }
    let tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0;
    if tmp.abs() <= 1.0 {
        let p = m2pi(2.0 * PI - tmp.acos());
        let t = m2pi(a - (ca - cb).atan2(d - sa + sb) + 0.5 * p);
        words.push([(-1.0, t), (1.0, p), (-1.0, m2pi(a - b - t + p))]);
    }
    let tmp = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0;
    if tmp.abs() <= 1.0 {
        let p = m2pi(2.0 * PI - tmp.acos());
        let t = m2pi(-a - (ca - cb).atan2(d + sa - sb) + 0.5 * p);
        words.push([(1.0, t), (-1.0, p), (1.0, m2pi(b - a - t + p))]);
    }

    let mut best = f64::INFINITY;
    for w in words {
        let shape: Vec<Slot> = w.iter().map(|&(k, l)| Slot::Fixed(k, l)).collect();
        let (ex, ey, eth) = drive(&shape, &[0.0; 3]);
        if (ex - x).abs() < 1e-7 && (ey - y).abs() < 1e-7 && wrap(eth - phi).abs() < 1e-7 {
            best = best.min(w.iter().map(|p| p.1).sum());
        }
    }
    best
}
