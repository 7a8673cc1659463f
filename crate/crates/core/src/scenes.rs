//! Named object suites resting on the support plane `z = 0`.
//!
//! The standard suite mixes convex solids with two composites that have
//! self-occluding concavities. The held-out suite uses different families
//! and proportions and is only used to test generalization.

use crate::geometry::Point3;
use crate::predictor::Scene;
use crate::shapes::{Pose, ShapeError, ShapeSpec};

pub const GT_POINTS: usize = 4096;

/// Center of the viewing hemisphere for suite objects.
pub fn view_center() -> Point3 {
    Point3::new(0.0, 0.0, 0.05)
}

pub const VIEW_RADIUS: f64 = 0.5;

fn deg(v: f64) -> f64 {
    v.to_radians()
}

/// Two spheres joined by a bar.
fn dumbbell() -> ShapeSpec {
    ShapeSpec::composite(vec![
        ShapeSpec::sphere(0.055).with_pose(Pose::at(-0.09, 0.0, 0.05)),
        ShapeSpec::sphere(0.055).with_pose(Pose::at(0.09, 0.0, 0.05)),
        ShapeSpec::capsule(0.02, 0.07).with_pose(Pose::at(0.0, 0.0, 0.05).rotated(0.0, deg(90.0), 0.0)),
    ])
    .with_pose(Pose::at(0.0, 0.0, 0.0).rotated(0.0, 0.0, deg(25.0)))
}

/// A U-channel: two tall walls on a base with a narrow slot between them.
fn heel() -> ShapeSpec {
    let wall = |y: f64| ShapeSpec::cuboid(0.2, 0.025, 0.1).with_pose(Pose::at(0.0, y, 0.055));
    ShapeSpec::composite(vec![
        ShapeSpec::cuboid(0.2, 0.09, 0.03).with_pose(Pose::at(0.0, 0.0, 0.015)),
        wall(-0.0325),
        wall(0.0325),
    ])
    .with_pose(Pose::at(0.0, 0.0, 0.0).rotated(0.0, 0.0, deg(-15.0)))
}

/// Three walls on a base, leaving two narrow slots.
fn comb() -> ShapeSpec {
    let wall = |y: f64| ShapeSpec::cuboid(0.2, 0.02, 0.09).with_pose(Pose::at(0.0, y, 0.05));
    ShapeSpec::composite(vec![
        ShapeSpec::cuboid(0.2, 0.14, 0.03).with_pose(Pose::at(0.0, 0.0, 0.015)),
        wall(-0.06),
        wall(0.0),
        wall(0.06),
    ])
    .with_pose(Pose::at(0.0, 0.0, 0.0).rotated(0.0, 0.0, deg(55.0)))
}

/// Three blocks of rising height.
fn steps() -> ShapeSpec {
    let block = |x: f64, h: f64| ShapeSpec::cuboid(0.07, 0.12, h).with_pose(Pose::at(x, 0.0, h / 2.0));
    ShapeSpec::composite(vec![block(-0.06, 0.04), block(0.0, 0.08), block(0.06, 0.12)])
        .with_pose(Pose::at(0.0, 0.0, 0.0).rotated(0.0, 0.0, deg(-50.0)))
}

/// Two tall blocks separated by a narrow gap down to the support plane.
fn twin() -> ShapeSpec {
    let block = |y: f64| ShapeSpec::cuboid(0.18, 0.05, 0.1).with_pose(Pose::at(0.0, y, 0.05));
    ShapeSpec::composite(vec![block(-0.045), block(0.045)]).with_pose(Pose::at(0.0, 0.0, 0.0).rotated(0.0, 0.0, deg(-35.0)))
}

pub fn standard_suite() -> Vec<(&'static str, ShapeSpec)> {
    vec![
        ("sphere", ShapeSpec::sphere(0.1).with_pose(Pose::at(0.0, 0.0, 0.08))),
        (
            "box",
            ShapeSpec::cuboid(0.2, 0.12, 0.1).with_pose(Pose::at(0.0, 0.0, 0.05).rotated(0.0, 0.0, deg(30.0))),
        ),
        (
            "superellipsoid",
            ShapeSpec::superellipsoid([0.12, 0.08, 0.07], 0.6, 0.6)
                .with_pose(Pose::at(0.0, 0.0, 0.06).rotated(0.0, 0.0, deg(40.0))),
        ),
        (
            "capsule",
            ShapeSpec::capsule(0.05, 0.08).with_pose(Pose::at(0.0, 0.0, 0.045).rotated(0.0, deg(90.0), deg(10.0))),
        ),
        ("dumbbell", dumbbell()),
        ("heel", heel()),
    ]
}

/// Composites whose concavities hide surface from most viewpoints.
pub fn occluded_suite() -> Vec<(&'static str, ShapeSpec)> {
    vec![("heel", heel()), ("comb", comb()), ("steps", steps()), ("twin", twin())]
}

/// Shapes never used when tuning the planner.
pub fn held_out_suite() -> Vec<(&'static str, ShapeSpec)> {
    vec![
        (
            "pillow",
            ShapeSpec::superellipsoid([0.11, 0.09, 0.05], 0.3, 0.9).with_pose(Pose::at(0.0, 0.0, 0.045)),
        ),
        (
            "ell",
            ShapeSpec::composite(vec![
                ShapeSpec::cuboid(0.18, 0.06, 0.04).with_pose(Pose::at(0.0, 0.0, 0.02)),
                ShapeSpec::cuboid(0.06, 0.14, 0.04).with_pose(Pose::at(0.06, 0.05, 0.02)),
                ShapeSpec::cuboid(0.06, 0.06, 0.1).with_pose(Pose::at(-0.06, 0.0, 0.05)),
            ])
            .with_pose(Pose::at(0.0, 0.0, 0.0).rotated(0.0, 0.0, deg(20.0))),
        ),
        ("egg", ShapeSpec::superellipsoid([0.07, 0.07, 0.1], 1.0, 1.0).with_pose(Pose::at(0.0, 0.0, 0.09))),
    ]
}

fn build(suite: &[(&'static str, ShapeSpec)], index: usize, seed: u64, n: usize) -> Result<Scene, ShapeError> {
    let (name, spec) = &suite[index % suite.len()];
    Scene::generate(format!("{name}/{seed}"), spec.clone(), n, seed)
}

/// Trial `t` of the standard suite: shape `t mod 6`, sampled with seed `t`.
pub fn standard_trial(t: u64, n: usize) -> Result<Scene, ShapeError> {
    build(&standard_suite(), t as usize, t, n)
}

pub fn occluded_trial(t: u64, n: usize) -> Result<Scene, ShapeError> {
    build(&occluded_suite(), t as usize, t, n)
}

pub fn held_out_trial(t: u64, n: usize) -> Result<Scene, ShapeError> {
    build(&held_out_suite(), t as usize, t, n)
}

/// Looks a shape up by name in either suite.
pub fn named_shape(name: &str) -> Option<ShapeSpec> {
    standard_suite()
        .into_iter()
        .chain(occluded_suite())
        .chain(held_out_suite())
        .find(|(n, _)| *n == name)
        .map(|(_, s)| s)
}
