//! Test-only oracles: reference math built from rotation matrices (using the quaternion code
//! under test only to construct inputs) and the canonical envelope set.

#![allow(dead_code)]

use holoviz_core::geom::{Transform, UnitQuat, Vec3};
use rand::Rng;

pub mod golden;

pub type Mat4 = [[f64; 4]; 4];

pub fn identity() -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn mul(a: &Mat4, b: &Mat4) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            m[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

/// Rigid inverse: transpose the rotation block, rotate and negate the translation.
pub fn rigid_inverse(a: &Mat4) -> Mat4 {
    let mut m = identity();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[j][i];
        }
    }
    for i in 0..3 {
        m[i][3] = -(0..3).map(|k| a[k][i] * a[k][3]).sum::<f64>();
    }
    m
}

/// Rodrigues' formula for a rotation of `angle` about unit `axis`.
pub fn rodrigues(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let [x, y, z] = axis;
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

pub fn from_parts(r: [[f64; 3]; 3], t: [f64; 3]) -> Mat4 {
    let mut m = identity();
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = r[i][j];
        }
        m[i][3] = t[i];
    }
    m
}

pub fn rotation_block(m: &Mat4) -> [[f64; 3]; 3] {
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = m[i][j];
        }
    }
    r
}

pub fn translation_of(m: &Mat4) -> [f64; 3] {
    [m[0][3], m[1][3], m[2][3]]
}

/// Axis and angle in [0, π] of a rotation matrix.
pub fn axis_angle(r: &[[f64; 3]; 3]) -> ([f64; 3], f64) {
    let cos = ((r[0][0] + r[1][1] + r[2][2] - 1.0) / 2.0).clamp(-1.0, 1.0);
    let angle = cos.acos();
    let v = [r[2][1] - r[1][2], r[0][2] - r[2][0], r[1][0] - r[0][1]];
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if n > 1e-6 {
        return ([v[0] / n, v[1] / n, v[2] / n], angle);
    }
    if angle < 1.0 {
        return ([1.0, 0.0, 0.0], 0.0);
    }
    // near π: axis from the diagonal of (R + I) / 2 = a aᵀ
    let d = [(r[0][0] + 1.0) / 2.0, (r[1][1] + 1.0) / 2.0, (r[2][2] + 1.0) / 2.0];
    let i = (0..3).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap();
    let ai = d[i].sqrt();
    let mut a = [0.0; 3];
    for j in 0..3 {
        a[j] = if j == i { ai } else { (r[i][j] + r[j][i]) / (4.0 * ai) };
    }
    (a, angle)
}

pub fn mat3_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    m
}

pub fn transpose3(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[j][i];
        }
    }
    m
}

/// Geodesic blend of two rigid transforms: translation lerped, rotation advanced along the
/// relative rotation's axis by `u` of its angle.
pub fn interpolate(a: &Mat4, b: &Mat4, u: f64) -> Mat4 {
    let ra = rotation_block(a);
    let rel = mat3_mul(&transpose3(&ra), &rotation_block(b));
    let (axis, angle) = axis_angle(&rel);
    let r = mat3_mul(&ra, &rodrigues(axis, u * angle));
    let ta = translation_of(a);
    let tb = translation_of(b);
    from_parts(r, [0, 1, 2].map(|i| ta[i] + u * (tb[i] - ta[i])))
}

pub fn max_diff(a: &Mat4, b: &Mat4) -> f64 {
    let mut d: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            d = d.max((a[i][j] - b[i][j]).abs());
        }
    }
    d
}

/// A random rigid transform as both a library value and an independently built matrix.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub tf: Transform<f64>,
    pub mat: Mat4,
}

pub fn random_axis(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Angle in [0, π), translation components in [-span, span].
pub fn random_sample(rng: &mut impl Rng, span: f64) -> Sample {
    let axis = random_axis(rng);
    let angle = rng.gen_range(0.0..std::f64::consts::PI);
    let t = [
        rng.gen_range(-span..span),
        rng.gen_range(-span..span),
        rng.gen_range(-span..span),
    ];
    sample(axis, angle, t)
}

pub fn sample(axis: [f64; 3], angle: f64, t: [f64; 3]) -> Sample {
    let (s, c) = (angle / 2.0).sin_cos();
    let q = UnitQuat::from_xyzw(axis[0] * s, axis[1] * s, axis[2] * s, c).expect("unit input");
    Sample {
        tf: Transform::new(Vec3::new(t[0], t[1], t[2]), q),
        mat: from_parts(rodrigues(axis, angle), t),
    }
}

/// Homogeneous matrix of a library transform, built from its quaternion by the standard
/// formula (kept here rather than calling the library's own conversion).
pub fn matrix_of(tf: &Transform<f64>) -> Mat4 {
    let [x, y, z, w] = tf.rotation.xyzw();
    let r = [
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
        ],
        [
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
        ],
        [
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        ],
    ];
    from_parts(r, [tf.translation.x, tf.translation.y, tf.translation.z])
}

/// A random tree of `n` frames named `f0..f{n-1}` rooted at `f0`, each edge one static
/// sample at `stamp`. Returns the transforms in a shuffled insertion order together with each
/// frame's pose in the root as a matrix chain.
pub fn random_tree(
    rng: &mut impl Rng,
    n: usize,
    stamp: holoviz_core::Stamp,
) -> (Vec<holoviz_core::StampedTransform>, Vec<Mat4>) {
    use holoviz_core::{FrameId, StampedTransform};
    use rand::seq::SliceRandom;

    let mut world = vec![identity(); n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    for i in 1..n {
        let parent = rng.gen_range(0..i);
        let s = random_sample(rng, 3.0);
        world[i] = mul(&world[parent], &s.mat);
        edges.push(StampedTransform {
            parent: FrameId::new(format!("f{parent}")).unwrap(),
            child: FrameId::new(format!("f{i}")).unwrap(),
            stamp,
            transform: s.tf,
        });
    }
    edges.shuffle(rng);
    (edges, world)
}
