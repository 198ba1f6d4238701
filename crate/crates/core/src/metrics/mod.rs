//! Voronoi cells and the Voronoi-type losses between a fitted and a reference model.
//!
//! Gate parameters are only identified up to a common translation `(t0, t1)`, so each
//! loss takes an infimum over translations. Before that, the candidate is moved into
//! the reference's gauge (equal total weight, equal weighted mean slope) so that the
//! value does not depend on which representative of the candidate is passed in.

mod losses;
mod nelder_mead;
mod voronoi;

pub use losses::{
    align_gauge, loss, loss_with, rbar, translation_infimum, vde, vdfra, vdo, LossKind, LossObjective, LossReport,
    LossTerms, TranslationOptimum,
};
pub use nelder_mead::{nelder_mead, Minimum, NelderMeadOptions};
pub use voronoi::{voronoi_cells, VoronoiPartition};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ExpertAtom, MixingMeasure};

    fn atom(omega0: f64, omega1: f64, a: f64, b: f64, sigma: f64) -> ExpertAtom<f64> {
        ExpertAtom::new(omega0, vec![omega1], vec![a], b, sigma).unwrap()
    }

    fn truth() -> MixingMeasure<f64> {
        MixingMeasure::new(1, vec![atom(-1.0, 2.0, 1.0, 0.5, 0.3), atom(0.0, 0.0, -1.0, 2.0, 0.6)]).unwrap()
    }

    #[test]
    fn rbar_table() {
        assert!(rbar(0).is_err());
        assert_eq!(rbar(1).unwrap(), 1);
        assert_eq!(rbar(2).unwrap(), 4);
        assert_eq!(rbar(3).unwrap(), 6);
        assert_eq!(rbar(4).unwrap(), 7);
        assert_eq!(rbar(5).unwrap(), 7);
    }

    #[test]
    fn zero_at_truth() {
        let g0 = truth();
        for kind in [LossKind::Vde, LossKind::Vdo, LossKind::Vdfra] {
            let r = loss(kind, &g0, &g0).unwrap();
            assert!(r.value < 1e-9, "{kind:?}: {}", r.value);
        }
    }

    #[test]
    fn zero_at_translates() {
        let g0 = truth();
        let g = g0.translate(0.7, &[-1.3]).unwrap();
        for kind in [LossKind::Vde, LossKind::Vdo, LossKind::Vdfra] {
            assert!(loss(kind, &g, &g0).unwrap().value < 1e-8);
        }
    }

    #[test]
    fn quadratic_bowl() {
        let v = [0.3, -2.0];
        let opt = translation_infimum(
            |t0: f64, t1: &[f64]| (t0 - 1.0).powi(2) + t1.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>(),
            2,
            &[],
            &NelderMeadOptions::default(),
        )
        .unwrap();
        assert!((opt.t0 - 1.0).abs() < 1e-6);
        for (a, b) in opt.t1.iter().zip(&v) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn constant_objective() {
        let opt = translation_infimum(|_: f64, _: &[f64]| 4.25, 1, &[], &NelderMeadOptions::default()).unwrap();
        assert_eq!(opt.value, 4.25);
    }

    #[test]
    fn singleton_cells_make_losses_agree() {
        let g0 = truth();
        let g = MixingMeasure::new(1, vec![atom(-0.8, 2.2, 1.1, 0.4, 0.35), atom(0.1, 0.1, -0.9, 2.1, 0.5)]).unwrap();
        let e = vde(&g, &g0).unwrap();
        assert!(e > 0.0);
        assert_eq!(e, vdo(&g, &g0).unwrap());
        assert_eq!(e, vdfra(&g, &g0).unwrap());
    }

    #[test]
    fn integrands_are_ordered() {
        let g0 = truth();
        let g = MixingMeasure::new(
            1,
            vec![atom(-1.5, 2.3, 1.2, 0.2, 0.3), atom(-1.6, 1.8, 0.9, 0.9, 0.2), atom(0.0, 0.1, -1.0, 2.0, 0.6)],
        )
        .unwrap();
        let objs: Vec<_> = [LossKind::Vde, LossKind::Vdo, LossKind::Vdfra]
            .iter()
            .map(|&k| LossObjective::new(k, &g, &g0).unwrap())
            .collect();
        for t0 in [-1.0, 0.0, 0.5] {
            for t1 in [-0.5, 0.0, 1.5] {
                let v: Vec<f64> = objs.iter().map(|o| o.integrand(t0, &[t1])).collect();
                assert!(v[0] <= v[1] && v[1] <= v[2]);
            }
        }
    }

    #[test]
    fn rbar_of_singletons_is_inert() {
        // Only multi-covered cells raise distances to rbar; for singleton-only
        // partitions the over-fit term must be identically zero.
        let g0 = truth();
        let g = MixingMeasure::new(1, vec![atom(-0.8, 2.2, 1.1, 0.4, 0.35), atom(0.1, 0.1, -0.9, 2.1, 0.5)]).unwrap();
        let o = LossObjective::new(LossKind::Vdfra, &g, &g0).unwrap();
        let t = o.terms(0.2, &[0.4]);
        assert_eq!(t.overfit, 0.0);
        assert_eq!(t.merged_moments, 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let g0 = truth();
        let g = MixingMeasure::new(2, vec![ExpertAtom::new(0.0, vec![0.0; 2], vec![0.0; 2], 0.0, 1.0).unwrap()]).unwrap();
        assert!(matches!(vde(&g, &g0), Err(crate::Error::DimensionMismatch { .. })));
    }
}
