//! Hand-built scenarios with a known settling outcome.

use super::templates::{push_motion, table, table_offset, SitExtras, SitTemplate};
use crate::dsro::{ShapeParam, LEG_LOGITS};
use crate::geometry::Mesh;
use crate::math::{Pose, Vec3};
use crate::simulator::{BodyDesc, OutcomeType, StabilityScenario};

#[derive(Clone, Debug)]
pub struct SuiteCase {
    pub name: String,
    pub expected: OutcomeType,
    pub scenario: StabilityScenario,
}

fn chair_without(missing: &[usize]) -> ShapeParam {
    let mut x = ShapeParam::canonical();
    for &i in missing {
        x.0[LEG_LOGITS[i]] = -1.0;
    }
    x
}

/// Sitting onto `params` at `chair_pose`, with the motion placed at
/// `body_pose` instead when given.
fn sit_case(name: &str, expected: OutcomeType, params: &ShapeParam, chair_pose: Pose, body_pose: Option<Pose>) -> SuiteCase {
    let chair = params.decode();
    let motion = SitTemplate::default().motion(
        &body_pose.unwrap_or(chair_pose),
        0,
        chair.seat_top(),
        chair.dims.seat_depth,
        SitExtras::default(),
    );
    SuiteCase {
        name: name.to_string(),
        expected,
        scenario: StabilityScenario {
            bodies: vec![chair.body("chair", chair_pose)],
            motion: Some(motion),
            targets: vec![0],
        },
    }
}

/// A walk into `body` that lasts past any settle horizon.
fn push_case(name: &str, body: BodyDesc, depth: f64, hand_height: f64, speed: f64) -> SuiteCase {
    let pose = Pose::identity();
    let start = body.pose.translation.x - depth - 0.45 - 0.3;
    SuiteCase {
        name: name.to_string(),
        expected: OutcomeType::Type2,
        scenario: StabilityScenario {
            bodies: vec![body],
            motion: Some(push_motion(&pose, 0, start, speed, 12.0, hand_height)),
            targets: vec![0],
        },
    }
}

/// Twelve scenarios, three per outcome type.
pub fn outcome_suite() -> Vec<SuiteCase> {
    let canonical = ShapeParam::canonical();
    let yawed = Pose::from_yaw_translation(1.0, Vec3::new(0.5, -0.3, 0.0));
    let mut cases = vec![
        sit_case("missing-back-left", OutcomeType::Type1, &chair_without(&[2]), Pose::identity(), None),
        sit_case("missing-back-right", OutcomeType::Type1, &chair_without(&[3]), yawed, None),
        sit_case("front-legs-only", OutcomeType::Type1, &chair_without(&[2, 3]), Pose::identity(), None),
    ];

    let crate_box = |half: Vec3| {
        BodyDesc::new(
            "box",
            Mesh::cuboid("box", Vec3::new(0.0, 0.0, half.z), half),
            Pose::from_translation(Vec3::new(1.0, 0.0, 0.0)),
        )
    };
    cases.push(push_case("push-box", crate_box(Vec3::new(0.25, 0.3, 0.4)), 0.25, 0.7, 0.3));
    cases.push(push_case("push-low-box", crate_box(Vec3::new(0.2, 0.25, 0.25)), 0.2, 0.45, 0.2));
    let t = table();
    cases.push(push_case(
        "push-table",
        t.body("table", Pose::from_translation(Vec3::new(1.0, 0.0, 0.0))),
        0.3,
        0.72,
        0.25,
    ));

    let away = |d: Vec3| Some(Pose::from_translation(d));
    cases.push(sit_case("chair-1m-away", OutcomeType::Type3, &canonical, Pose::identity(), away(Vec3::new(0.0, 1.0, 0.0))));
    cases.push(sit_case("chair-behind", OutcomeType::Type3, &canonical, yawed, away(Vec3::new(-1.2, 0.0, 0.0))));
    cases.push(sit_case("chair-far", OutcomeType::Type3, &canonical, Pose::identity(), away(Vec3::new(1.5, 1.5, 0.0))));

    cases.push(sit_case("sit", OutcomeType::Type4, &canonical, Pose::identity(), None));
    cases.push(sit_case("sit-yawed", OutcomeType::Type4, &canonical, yawed, None));

    // chair and table, hands resting on the top
    let chair = canonical.decode();
    let depth = chair.dims.seat_depth;
    let extras = SitExtras {
        table: Some(1),
        footrest: None,
    };
    let motion = SitTemplate::default().motion(&Pose::identity(), 0, chair.seat_top(), depth, extras);
    cases.push(SuiteCase {
        name: "sit-at-table".to_string(),
        expected: OutcomeType::Type4,
        scenario: StabilityScenario {
            bodies: vec![
                chair.body("chair", Pose::identity()),
                t.body("table", Pose::from_translation(table_offset(depth))),
            ],
            motion: Some(motion),
            targets: vec![0, 1],
        },
    });
    cases
}
