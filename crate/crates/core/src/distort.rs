//! Affine character distortion and the stepwise distortion curriculum.
//!
//! A distortion of degree Θ draws seven numbers from `U(-Θ, Θ)`: two stretch
//! offsets, a horizontal and a vertical slant, a rotation angle in radians,
//! and a translation (scaled by `grid / 8` pixels). Coordinates are row
//! vectors `[x y]` multiplied on the right by, in order, the stretch matrix
//! `diag(1+ξx, 1+ξy)`, the slants `[[1, ξ], [0, 1]]` and `[[1, 0], [ξ, 1]]`,
//! and the rotation `[[cos ξ, -sin ξ], [sin ξ, cos ξ]]`. The transform acts
//! about the character's bounding-box centre and is shared by all strokes.

use crate::error::{Error, Result};
use crate::ink::{Character, Point};
use crate::rng::Stream;

/// Half-width of the uniform law every distortion parameter is drawn from.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct DistortionDegree(f64);

impl DistortionDegree {
    pub const NONE: DistortionDegree = DistortionDegree(0.0);

    pub fn new(theta: f64) -> Result<Self> {
        if theta >= 0.0 && theta.is_finite() {
            Ok(Self(theta))
        } else {
            Err(Error::config(format!("distortion degree must be finite and >= 0, got {theta}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DistortionSample {
    pub stretch_x: f64,
    pub stretch_y: f64,
    pub slant_x: f64,
    pub slant_y: f64,
    pub rotation: f64,
    pub tx: f64,
    pub ty: f64,
}

/// Row-vector affine map `p -> p·m + t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine2 {
    pub m: [[f64; 2]; 2],
    pub t: [f64; 2],
}

fn matmul(a: [[f64; 2]; 2], b: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let mut out = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

impl Affine2 {
    pub const IDENTITY: Affine2 = Affine2 { m: [[1.0, 0.0], [0.0, 1.0]], t: [0.0, 0.0] };

    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            p.x * self.m[0][0] + p.y * self.m[1][0] + self.t[0],
            p.x * self.m[0][1] + p.y * self.m[1][1] + self.t[1],
        )
    }

    /// The map that applies `self` first and `next` second.
    pub fn then(&self, next: &Affine2) -> Affine2 {
        let m = matmul(self.m, next.m);
        let t = next.apply(Point::new(self.t[0], self.t[1]));
        Affine2 { m, t: [t.x, t.y] }
    }
}

/// Distortion translation scale: `grid / 8` pixels per unit of Θ.
pub fn translation_scale(grid: usize) -> f64 {
    grid as f64 / 8.0
}

pub fn draw_distortion(theta: DistortionDegree, grid: usize, rng: &mut Stream) -> DistortionSample {
    let t = theta.value();
    let kappa = translation_scale(grid);
    DistortionSample {
        stretch_x: rng.symmetric(t),
        stretch_y: rng.symmetric(t),
        slant_x: rng.symmetric(t),
        slant_y: rng.symmetric(t),
        rotation: rng.symmetric(t),
        tx: kappa * rng.symmetric(t),
        ty: kappa * rng.symmetric(t),
    }
}

/// Rotation-only distortion, used by the rotation-confusion experiment.
pub fn draw_rotation(theta: DistortionDegree, rng: &mut Stream) -> DistortionSample {
    DistortionSample { rotation: rng.symmetric(theta.value()), ..Default::default() }
}

impl DistortionSample {
    pub fn is_identity(&self) -> bool {
        *self == DistortionSample::default()
    }

    /// Linear part: stretch, horizontal slant, vertical slant, rotation.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        let stretch = [[1.0 + self.stretch_x, 0.0], [0.0, 1.0 + self.stretch_y]];
        let slant_h = [[1.0, self.slant_x], [0.0, 1.0]];
        let slant_v = [[1.0, 0.0], [self.slant_y, 1.0]];
        let (s, c) = self.rotation.sin_cos();
        let rot = [[c, -s], [s, c]];
        matmul(matmul(matmul(stretch, slant_h), slant_v), rot)
    }

    /// The full map about `center`: `p -> (p - c)·M + c + t`.
    pub fn affine_about(&self, center: Point) -> Affine2 {
        let m = self.matrix();
        let mc = Affine2 { m, t: [0.0, 0.0] }.apply(center);
        Affine2 { m, t: [center.x - mc.x + self.tx, center.y - mc.y + self.ty] }
    }
}

pub fn apply(c: &Character, s: &DistortionSample) -> Character {
    if s.is_identity() {
        return c.clone();
    }
    let center = c.bbox().center();
    let m = s.matrix();
    c.map_points(|p| {
        let (dx, dy) = (p.x - center.x, p.y - center.y);
        Point::new(dx * m[0][0] + dy * m[1][0] + center.x + s.tx, dx * m[0][1] + dy * m[1][1] + center.y + s.ty)
    })
}

/// When the curriculum moves on to the next stage.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScheduleMode {
    /// Each stage lasts exactly its epoch count.
    FixedEpochs,
    /// A stage ends early once the training loss plateaus; its epoch count
    /// is an upper bound.
    LossPlateau(PlateauRule),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateauRule {
    pub patience: usize,
    pub min_rel_improve: f64,
}

impl Default for PlateauRule {
    fn default() -> Self {
        Self { patience: 3, min_rel_improve: 0.005 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DropSchedule {
    stages: Vec<(DistortionDegree, usize)>,
    mode: ScheduleMode,
}

impl DropSchedule {
    pub fn new(stages: Vec<(DistortionDegree, usize)>, mode: ScheduleMode) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::config("distortion schedule has no stages"));
        }
        if stages.windows(2).any(|w| w[0].0 <= w[1].0) {
            return Err(Error::config("distortion degrees must be strictly decreasing"));
        }
        if stages.iter().any(|&(_, n)| n == 0) {
            return Err(Error::config("every distortion stage needs at least one epoch"));
        }
        if let ScheduleMode::LossPlateau(rule) = mode {
            if rule.patience == 0 || rule.min_rel_improve.is_nan() || rule.min_rel_improve < 0.0 {
                return Err(Error::config("plateau rule needs patience >= 1 and min_rel_improve >= 0"));
            }
        }
        Ok(Self { stages, mode })
    }

    /// A single fixed degree for `epochs` epochs.
    pub fn constant(theta: f64, epochs: usize) -> Result<Self> {
        Self::new(vec![(DistortionDegree::new(theta)?, epochs)], ScheduleMode::FixedEpochs)
    }

    /// Splits `epochs` into equal stages, earlier stages taking the remainder.
    pub fn equal_split(thetas: &[f64], epochs: usize, mode: ScheduleMode) -> Result<Self> {
        if thetas.is_empty() {
            return Err(Error::config("distortion schedule has no stages"));
        }
        let n = thetas.len();
        let stages = thetas
            .iter()
            .enumerate()
            .map(|(i, &t)| Ok((DistortionDegree::new(t)?, epochs / n + usize::from(i < epochs % n))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(stages, mode)
    }

    pub fn stages(&self) -> &[(DistortionDegree, usize)] {
        &self.stages
    }

    pub fn mode(&self) -> ScheduleMode {
        self.mode
    }

    pub fn total_epochs(&self) -> usize {
        self.stages.iter().map(|s| s.1).sum()
    }

    /// First epoch of the last stage under the fixed epoch split.
    pub fn final_stage_start(&self) -> usize {
        self.total_epochs() - self.stages.last().map_or(0, |s| s.1)
    }

    /// Stage index in force at `epoch`, given the training losses of all
    /// previous epochs. Epochs past the end stay in the final stage.
    pub fn stage_at(&self, epoch: usize, loss_history: &[f64]) -> usize {
        let last = self.stages.len() - 1;
        let mut stage = 0;
        let mut stage_start = 0;
        for e in 1..=epoch {
            if stage == last {
                break;
            }
            let elapsed = e - stage_start;
            let advance = elapsed >= self.stages[stage].1
                || match self.mode {
                    ScheduleMode::FixedEpochs => false,
                    ScheduleMode::LossPlateau(rule) => {
                        plateaued(&loss_history[stage_start..e.min(loss_history.len()).max(stage_start)], rule)
                    }
                };
            if advance {
                stage += 1;
                stage_start = e;
            }
        }
        stage
    }
}

/// True when the best loss of the last `patience` epochs is not better than
/// the best loss before them by at least `min_rel_improve`.
fn plateaued(losses: &[f64], rule: PlateauRule) -> bool {
    if losses.len() <= rule.patience {
        return false;
    }
    let split = losses.len() - rule.patience;
    let best = |xs: &[f64]| xs.iter().copied().fold(f64::INFINITY, f64::min);
    let before = best(&losses[..split]);
    let recent = best(&losses[split..]);
    recent > before * (1.0 - rule.min_rel_improve)
}

pub fn schedule_theta(epoch: usize, sched: &DropSchedule, loss_history: &[f64]) -> DistortionDegree {
    sched.stages[sched.stage_at(epoch, loss_history)].0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ink::Stroke;
    use crate::rng::Domain;
    use proptest::prelude::*;

    fn ch(coords: &[(f64, f64)]) -> Character {
        Character::new(vec![Stroke::from_xy(coords).unwrap()], None).unwrap()
    }

    fn deg(t: f64) -> DistortionDegree {
        DistortionDegree::new(t).unwrap()
    }

    #[test]
    fn zero_degree_draws_zero_sample() {
        let mut rng = Stream::new(1, Domain::Test, &[]);
        let s = draw_distortion(DistortionDegree::NONE, 64, &mut rng);
        assert!(s.is_identity());
        let c = ch(&[(0.1, 0.7), (3.3, 9.1), (-2.0, 5.5)]);
        assert_eq!(apply(&c, &s), c);
    }

    #[test]
    fn draws_respect_support_and_seed() {
        let mut rng = Stream::new(5, Domain::Test, &[]);
        let kappa = translation_scale(64);
        for _ in 0..1000 {
            let s = draw_distortion(deg(0.3), 64, &mut rng);
            for v in [s.stretch_x, s.stretch_y, s.slant_x, s.slant_y, s.rotation] {
                assert!(v.abs() <= 0.3);
            }
            assert!(s.tx.abs() <= 0.3 * kappa && s.ty.abs() <= 0.3 * kappa);
        }
        let a = draw_distortion(deg(0.3), 64, &mut Stream::new(9, Domain::Test, &[]));
        let b = draw_distortion(deg(0.3), 64, &mut Stream::new(9, Domain::Test, &[]));
        assert_eq!(a, b);
    }

    #[test]
    fn draws_are_centered() {
        let mut rng = Stream::new(2, Domain::Test, &[]);
        let n = 100_000;
        let theta = 0.3;
        let sigma = theta / 3f64.sqrt() / (n as f64).sqrt();
        let mut sum = [0.0; 5];
        for _ in 0..n {
            let s = draw_distortion(deg(theta), 64, &mut rng);
            for (acc, v) in sum.iter_mut().zip([s.stretch_x, s.stretch_y, s.slant_x, s.slant_y, s.rotation]) {
                *acc += v;
            }
        }
        for acc in sum {
            assert!((acc / n as f64).abs() < 3.0 * sigma);
        }
    }

    #[test]
    fn stretch_doubles_x_extent() {
        let c = ch(&[(0.0, 0.0), (10.0, 0.0)]);
        let s = DistortionSample { stretch_x: 1.0, ..Default::default() };
        let out = apply(&c, &s);
        let pts = out.strokes[0].points();
        // centre is (5, 0); relative endpoints become (-10, 0) and (10, 0)
        assert_eq!(pts[0], Point::new(-5.0, 0.0));
        assert_eq!(pts[1], Point::new(15.0, 0.0));
    }

    #[test]
    fn rotation_preserves_distances() {
        let c = ch(&[(1.0, 2.0), (7.0, -3.0), (4.0, 11.0), (0.5, 0.25)]);
        let s = DistortionSample { rotation: 0.7, ..Default::default() };
        let out = apply(&c, &s);
        let (a, b) = (c.strokes[0].points(), out.strokes[0].points());
        for i in 0..a.len() {
            for j in 0..a.len() {
                assert!((a[i].distance(&a[j]) - b[i].distance(&b[j])).abs() <= 1e-9 * a[i].distance(&a[j]).max(1.0));
            }
        }
    }

    #[test]
    fn slant_matrices_act_as_documented() {
        let s = DistortionSample { slant_x: 0.5, ..Default::default() };
        // [x y]·[[1, ξ], [0, 1]] = [x, ξx + y]
        let p = s.affine_about(Point::new(0.0, 0.0)).apply(Point::new(2.0, 1.0));
        assert_eq!(p, Point::new(2.0, 2.0));
        let s = DistortionSample { slant_y: 0.5, ..Default::default() };
        let p = s.affine_about(Point::new(0.0, 0.0)).apply(Point::new(2.0, 1.0));
        assert_eq!(p, Point::new(2.5, 1.0));
    }

    #[test]
    fn paper_schedule_epochs() {
        let sched = DropSchedule::equal_split(&[0.3, 0.2, 0.1], 70, ScheduleMode::FixedEpochs).unwrap();
        assert_eq!(sched.stages().iter().map(|s| s.1).collect::<Vec<_>>(), vec![24, 23, 23]);
        assert_eq!(schedule_theta(0, &sched, &[]).value(), 0.3);
        assert_eq!(schedule_theta(23, &sched, &[]).value(), 0.3);
        assert_eq!(schedule_theta(24, &sched, &[]).value(), 0.2);
        assert_eq!(schedule_theta(46, &sched, &[]).value(), 0.2);
        assert_eq!(schedule_theta(47, &sched, &[]).value(), 0.1);
        assert_eq!(schedule_theta(69, &sched, &[]).value(), 0.1);
        assert_eq!(sched.final_stage_start(), 47);
    }

    #[test]
    fn constant_schedule() {
        let sched = DropSchedule::constant(0.3, 70).unwrap();
        assert!((0..70).all(|e| schedule_theta(e, &sched, &[]).value() == 0.3));
    }

    #[test]
    fn schedule_validation() {
        assert!(DropSchedule::new(vec![], ScheduleMode::FixedEpochs).is_err());
        assert!(DropSchedule::new(vec![(deg(0.1), 3), (deg(0.2), 3)], ScheduleMode::FixedEpochs).is_err());
        assert!(DistortionDegree::new(-0.1).is_err());
    }

    #[test]
    fn plateau_mode_waits_on_improving_loss() {
        let mode = ScheduleMode::LossPlateau(PlateauRule::default());
        let sched = DropSchedule::new(vec![(deg(0.3), 10), (deg(0.2), 10), (deg(0.1), 10)], mode).unwrap();
        let losses: Vec<f64> = (0..30).map(|e| 2.0 * 0.9f64.powi(e)).collect();
        for e in 0..30 {
            let fixed = [0.3, 0.2, 0.1][(e / 10).min(2)];
            assert_eq!(schedule_theta(e, &sched, &losses[..e]).value(), fixed, "epoch {e}");
        }
    }

    #[test]
    fn plateau_mode_advances_on_flat_loss() {
        let mode = ScheduleMode::LossPlateau(PlateauRule { patience: 2, min_rel_improve: 0.01 });
        let sched = DropSchedule::new(vec![(deg(0.3), 10), (deg(0.1), 10)], mode).unwrap();
        let losses = [1.0, 0.5, 0.5, 0.5, 0.5];
        // After epoch 3 the last two losses (0.5, 0.5) do not beat 0.5 by 1%.
        assert_eq!(schedule_theta(3, &sched, &losses[..3]).value(), 0.3);
        assert_eq!(schedule_theta(4, &sched, &losses[..4]).value(), 0.1);
    }

    proptest! {
        #[test]
        fn theta_never_increases(losses in prop::collection::vec(0.01f64..5.0, 40), patience in 1usize..4) {
            let mode = ScheduleMode::LossPlateau(PlateauRule { patience, min_rel_improve: 0.01 });
            let sched = DropSchedule::new(vec![(deg(0.3), 12), (deg(0.2), 12), (deg(0.1), 16)], mode).unwrap();
            let thetas: Vec<f64> = (0..40).map(|e| schedule_theta(e, &sched, &losses[..e]).value()).collect();
            prop_assert!(thetas.windows(2).all(|w| w[1] <= w[0]));
        }

        #[test]
        fn two_applications_compose(seed in 0u64..1000) {
            let mut rng = Stream::new(seed, Domain::Test, &[]);
            let c = ch(&[(1.0, 2.0), (9.0, 4.0), (3.0, 14.0)]);
            let s1 = draw_distortion(deg(0.4), 64, &mut rng);
            let s2 = draw_distortion(deg(0.4), 64, &mut rng);
            let once = apply(&c, &s1);
            let twice = apply(&once, &s2);
            let product = s1.affine_about(c.bbox().center()).then(&s2.affine_about(once.bbox().center()));
            for (p, q) in c.strokes[0].points().iter().zip(twice.strokes[0].points()) {
                let r = product.apply(*p);
                prop_assert!((r.x - q.x).abs() < 1e-9 && (r.y - q.y).abs() < 1e-9);
            }
        }
    }
}
