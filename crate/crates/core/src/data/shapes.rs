//! Primitive shapes: parameters, poses, surface sampling and ray tests.
//!
//! Every primitive is defined in a local frame with its symmetry axis along
//! local `z` and placed in the camera frame by `p = R p_local + center`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::blend::CameraIntrinsics;
use crate::error::{domain_err, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Sphere,
    Box,
    Cylinder,
    Capsule,
    Torus,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Sphere,
        Category::Box,
        Category::Cylinder,
        Category::Capsule,
        Category::Torus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Sphere => "sphere",
            Category::Box => "box",
            Category::Cylinder => "cylinder",
            Category::Capsule => "capsule",
            Category::Torus => "torus",
        }
    }
}

impl std::str::FromStr for Category {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| crate::error::config_err!("unknown category {s:?}"))
    }
}

/// Size parameters in world units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Primitive {
    Sphere {
        radius: f64,
    },
    Box {
        half: [f64; 3],
    },
    /// `half_height` is measured along the axis, caps included.
    Cylinder {
        radius: f64,
        half_height: f64,
    },
    /// Hemisphere centres sit at `±half_height` on the axis.
    Capsule {
        radius: f64,
        half_height: f64,
    },
    Torus {
        major: f64,
        minor: f64,
    },
}

impl Primitive {
    pub fn category(&self) -> Category {
        match self {
            Primitive::Sphere { .. } => Category::Sphere,
            Primitive::Box { .. } => Category::Box,
            Primitive::Cylinder { .. } => Category::Cylinder,
            Primitive::Capsule { .. } => Category::Capsule,
            Primitive::Torus { .. } => Category::Torus,
        }
    }

    /// The same primitive with every surface pushed outward by `pad`
    /// (box edges stay sharp, so the box is a superset of the offset shape).
    pub fn inflated(&self, pad: f64) -> Primitive {
        match *self {
            Primitive::Sphere { radius } => Primitive::Sphere { radius: radius + pad },
            Primitive::Box { half } => Primitive::Box {
                half: half.map(|h| h + pad),
            },
            Primitive::Cylinder { radius, half_height } => Primitive::Cylinder {
                radius: radius + pad,
                half_height: half_height + pad,
            },
            Primitive::Capsule { radius, half_height } => Primitive::Capsule {
                radius: radius + pad,
                half_height,
            },
            Primitive::Torus { major, minor } => Primitive::Torus {
                major,
                minor: minor + pad,
            },
        }
    }

    /// Radius of a sphere around the local origin containing the shape.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius } => radius,
            Primitive::Box { half } => Vector3::from(half).norm(),
            Primitive::Cylinder { radius, half_height } => radius.hypot(half_height),
            Primitive::Capsule { radius, half_height } => radius + half_height,
            Primitive::Torus { major, minor } => major + minor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub primitive: Primitive,
    /// Row-major local-to-camera rotation.
    pub rotation: [[f64; 3]; 3],
    pub center: [f64; 3],
}

impl ShapeSpec {
    pub fn new(primitive: Primitive, rotation: Matrix3<f64>, center: [f64; 3]) -> Self {
        let mut r = [[0.0; 3]; 3];
        for (i, row) in r.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = rotation[(i, j)];
            }
        }
        Self {
            primitive,
            rotation: r,
            center,
        }
    }

    pub fn category(&self) -> Category {
        self.primitive.category()
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    pub fn to_world(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation() * p + Vector3::from(self.center)
    }

    /// Ok when the bounding sphere lies inside the frustum between the
    /// near and far planes.
    pub fn check_in_frustum(&self, cam: &CameraIntrinsics, h: usize, w: usize) -> Result<()> {
        let c = Vector3::from(self.center);
        let rho = self.primitive.bounding_radius();
        let planes = [
            Vector3::new(cam.fx, 0.0, cam.cx),
            Vector3::new(-cam.fx, 0.0, w as f64 - cam.cx),
            Vector3::new(0.0, cam.fy, cam.cy),
            Vector3::new(0.0, -cam.fy, h as f64 - cam.cy),
        ];
        let inside =
            planes.iter().all(|n| n.normalize().dot(&c) >= rho) && c.z - rho >= cam.near && c.z + rho <= cam.far;
        if !inside {
            return Err(domain_err!(
                "{} at {:?} with bounding radius {rho:.3} leaves the view frustum",
                self.category().name(),
                self.center
            ));
        }
        Ok(())
    }

    /// Area-uniform samples on the surface, camera frame, `[m, 3]`.
    pub fn sample_surface<T: Element>(&self, m: usize, rng: &mut impl Rng) -> Tensor<T> {
        let mut data = Vec::with_capacity(3 * m);
        for _ in 0..m {
            let p = self.to_world(sample_local(&self.primitive, rng));
            data.extend([p.x, p.y, p.z].map(T::from_f64_lossy));
        }
        Tensor::new([m, 3], data).unwrap()
    }

    /// Whether the ray `origin + t dir`, `t > 0`, hits the shape grown
    /// outward by `pad` world units.
    pub fn hits(&self, origin: Vector3<f64>, dir: Vector3<f64>, pad: f64) -> bool {
        let rt = self.rotation().transpose();
        let o = rt * (origin - Vector3::from(self.center));
        let d = rt * dir;
        hits_local(&self.primitive.inflated(pad), o, d)
    }
}

fn unit_sphere(rng: &mut impl Rng) -> Vector3<f64> {
    let z: f64 = rng.random_range(-1.0..=1.0);
    let phi = rng.random_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).max(0.0).sqrt();
    Vector3::new(s * phi.cos(), s * phi.sin(), z)
}

/// Index drawn with probability proportional to `weights`.
fn pick(weights: &[f64], rng: &mut impl Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random_range(0.0..total);
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

/// Surface areas of the box faces in the order +x, -x, +y, -y, +z, -z.
pub fn box_face_areas(half: [f64; 3]) -> [f64; 6] {
    let [a, b, c] = half;
    [
        4.0 * b * c,
        4.0 * b * c,
        4.0 * a * c,
        4.0 * a * c,
        4.0 * a * b,
        4.0 * a * b,
    ]
}

fn sample_local(p: &Primitive, rng: &mut impl Rng) -> Vector3<f64> {
    match *p {
        Primitive::Sphere { radius } => unit_sphere(rng) * radius,
        Primitive::Box { half } => {
            let face = pick(&box_face_areas(half), rng);
            let axis = face / 2;
            let sign = if face.is_multiple_of(2) { 1.0 } else { -1.0 };
            let mut v = Vector3::from_fn(|i, _| rng.random_range(-half[i]..=half[i]));
            v[axis] = sign * half[axis];
            v
        }
        Primitive::Cylinder { radius, half_height } => {
            let side = 4.0 * PI * radius * half_height;
            let cap = PI * radius * radius;
            let phi = rng.random_range(0.0..2.0 * PI);
            match pick(&[side, cap, cap], rng) {
                0 => Vector3::new(
                    radius * phi.cos(),
                    radius * phi.sin(),
                    rng.random_range(-half_height..=half_height),
                ),
                k => {
                    let r = radius * rng.random::<f64>().sqrt();
                    let z = if k == 1 { half_height } else { -half_height };
                    Vector3::new(r * phi.cos(), r * phi.sin(), z)
                }
            }
        }
        Primitive::Capsule { radius, half_height } => {
            let side = 4.0 * PI * radius * half_height;
            let caps = 4.0 * PI * radius * radius;
            if pick(&[side, caps], rng) == 0 {
                let phi = rng.random_range(0.0..2.0 * PI);
                Vector3::new(
                    radius * phi.cos(),
                    radius * phi.sin(),
                    rng.random_range(-half_height..=half_height),
                )
            } else {
                let s = unit_sphere(rng) * radius;
                let shift = if s.z >= 0.0 { half_height } else { -half_height };
                s + Vector3::new(0.0, 0.0, shift)
            }
        }
        Primitive::Torus { major, minor } => loop {
            // Area element is proportional to major + minor cos(theta).
            let theta = rng.random_range(0.0..2.0 * PI);
            let phi = rng.random_range(0.0..2.0 * PI);
            let ring = major + minor * theta.cos();
            if rng.random_range(0.0..major + minor) <= ring {
                break Vector3::new(ring * phi.cos(), ring * phi.sin(), minor * theta.sin());
            }
        },
    }
}

/// Smallest and largest roots of `a t^2 + 2 b t + c`, if real.
fn quadratic(a: f64, b: f64, c: f64) -> Option<(f64, f64)> {
    if a.abs() < 1e-300 {
        return None;
    }
    let disc = b * b - a * c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    let (t0, t1) = ((-b - s) / a, (-b + s) / a);
    Some((t0.min(t1), t0.max(t1)))
}

fn hits_sphere(o: Vector3<f64>, d: Vector3<f64>, r: f64) -> bool {
    quadratic(d.dot(&d), o.dot(&d), o.dot(&o) - r * r).is_some_and(|(_, t1)| t1 > 0.0)
}

/// Lateral surface of a finite cylinder along local z.
fn hits_tube(o: Vector3<f64>, d: Vector3<f64>, r: f64, hh: f64) -> bool {
    let Some((t0, t1)) = quadratic(
        d.x * d.x + d.y * d.y,
        o.x * d.x + o.y * d.y,
        o.x * o.x + o.y * o.y - r * r,
    ) else {
        return false;
    };
    [t0, t1].iter().any(|&t| t > 0.0 && (o.z + t * d.z).abs() <= hh)
}

fn hits_disk(o: Vector3<f64>, d: Vector3<f64>, r: f64, z: f64) -> bool {
    if d.z.abs() < 1e-300 {
        return false;
    }
    let t = (z - o.z) / d.z;
    let p = o + d * t;
    t > 0.0 && p.x * p.x + p.y * p.y <= r * r
}

fn torus_sdf(p: Vector3<f64>, major: f64, minor: f64) -> f64 {
    (p.x.hypot(p.y) - major).hypot(p.z) - minor
}

fn hits_local(p: &Primitive, o: Vector3<f64>, d: Vector3<f64>) -> bool {
    match *p {
        Primitive::Sphere { radius } => hits_sphere(o, d, radius),
        Primitive::Box { half } => {
            let (mut tmin, mut tmax) = (f64::NEG_INFINITY, f64::INFINITY);
            for a in 0..3 {
                if d[a].abs() < 1e-300 {
                    if o[a].abs() > half[a] {
                        return false;
                    }
                    continue;
                }
                let t0 = (-half[a] - o[a]) / d[a];
                let t1 = (half[a] - o[a]) / d[a];
                tmin = tmin.max(t0.min(t1));
                tmax = tmax.min(t0.max(t1));
            }
            tmin <= tmax && tmax > 0.0
        }
        Primitive::Cylinder { radius, half_height } => {
            hits_tube(o, d, radius, half_height)
                || hits_disk(o, d, radius, half_height)
                || hits_disk(o, d, radius, -half_height)
        }
        Primitive::Capsule { radius, half_height } => {
            let up = Vector3::new(0.0, 0.0, half_height);
            hits_tube(o, d, radius, half_height) || hits_sphere(o - up, d, radius) || hits_sphere(o + up, d, radius)
        }
        Primitive::Torus { major, minor } => {
            // Sphere tracing inside the bounding sphere.
            let d = d.normalize();
            let Some((t0, t1)) = quadratic(1.0, o.dot(&d), o.dot(&o) - (major + minor).powi(2)) else {
                return false;
            };
            let mut t = t0.max(0.0);
            for _ in 0..256 {
                if t > t1 {
                    return false;
                }
                let s = torus_sdf(o + d * t, major, minor);
                if s < 1e-6 {
                    return true;
                }
                t += s;
            }
            false
        }
    }
}

/// Random pose and size for a category, centred at depth `[1.8, 2.2]` with
/// bounding radius at most 0.45. Poses are constrained per category so the
/// silhouettes stay distinguishable.
pub fn random_spec(category: Category, rng: &mut impl Rng) -> ShapeSpec {
    let center = [
        rng.random_range(-0.06..0.06),
        rng.random_range(-0.06..0.06),
        rng.random_range(1.8..2.2),
    ];
    let deg = |r: &mut dyn FnMut() -> f64, lim: f64| r() * lim.to_radians();
    let mut sym = || rng.random_range(-1.0..1.0);
    // Local z points along camera y (vertical in the image) before tilting.
    let upright = Rotation3::from_euler_angles(-PI / 2.0, 0.0, 0.0);
    let (primitive, rot) = match category {
        Category::Sphere => {
            let radius = 0.32 + 0.1 * (sym() + 1.0) / 2.0;
            (Primitive::Sphere { radius }, Rotation3::identity())
        }
        Category::Box => {
            let half = [0.0; 3].map(|_| 0.13 + 0.05 * (sym() + 1.0) / 2.0);
            let r = Rotation3::from_euler_angles(deg(&mut sym, 20.0), deg(&mut sym, 20.0), deg(&mut sym, 20.0));
            (Primitive::Box { half }, r)
        }
        Category::Cylinder => {
            let radius = 0.28 + 0.07 * (sym() + 1.0) / 2.0;
            let half_height = 0.08 + 0.07 * (sym() + 1.0) / 2.0;
            let tilt = Rotation3::from_euler_angles(deg(&mut sym, 25.0), 0.0, deg(&mut sym, 10.0));
            (Primitive::Cylinder { radius, half_height }, tilt * upright)
        }
        Category::Capsule => {
            let radius = 0.1 + 0.05 * (sym() + 1.0) / 2.0;
            let half_height = 0.2 + 0.08 * (sym() + 1.0) / 2.0;
            let tilt = Rotation3::from_euler_angles(deg(&mut sym, 20.0), 0.0, deg(&mut sym, 15.0));
            (Primitive::Capsule { radius, half_height }, tilt * upright)
        }
        Category::Torus => {
            let major = 0.25 + 0.07 * (sym() + 1.0) / 2.0;
            let minor = 0.06 + 0.04 * (sym() + 1.0) / 2.0;
            let tilt = Rotation3::from_euler_angles(deg(&mut sym, 25.0), deg(&mut sym, 25.0), 0.0);
            (Primitive::Torus { major, minor }, tilt)
        }
    };
    ShapeSpec::new(primitive, *rot.matrix(), center)
}
