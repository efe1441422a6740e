use cdf_core::data::AttributeSchema;
use cdf_core::linalg::Matrix;
use cdf_core::preprocess::{preprocess_pipeline, rolling_median, PipelineConfig};
use cdf_core::Panel;
use proptest::prelude::*;

fn panel_strategy() -> impl Strategy<Value = Panel> {
    (3usize..60, 1usize..5).prop_flat_map(|(t, a)| {
        prop::collection::vec(-100.0f64..100.0, t * a).prop_map(move |v| {
            let names: Vec<String> = (0..a).map(|j| format!("x{j}")).collect();
            Panel::from_values("p", AttributeSchema::plain(&names).unwrap(), Matrix::from_vec(t, a, v)).unwrap()
        })
    })
}

fn dense(p: &Panel) -> Matrix {
    p.dense().expect("fully observed")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn difference_and_zscore_invert_to_levels(p in panel_strategy()) {
        let config = PipelineConfig { smoothing_window: None, difference: true, standardize: true };
        let (out, state) = preprocess_pipeline(&p, &config).unwrap();
        let cols: Vec<usize> = (0..p.cols()).collect();
        let x = dense(&p);
        let back = state.invert(&dense(&out), &cols, x.row(0)).unwrap();
        let expected = x.row_range(1, x.rows());
        prop_assert!(back.max_abs_diff(&expected) <= 1e-9, "error {}", back.max_abs_diff(&expected));
    }

    #[test]
    fn smoothed_pipeline_inverts_to_smoothed_levels(p in panel_strategy(), w in 2usize..9) {
        let config = PipelineConfig { smoothing_window: Some(w), ..PipelineConfig::default() };
        let (out, state) = preprocess_pipeline(&p, &config).unwrap();
        let smoothed = dense(&state.smooth(&p).unwrap());
        let cols: Vec<usize> = (0..p.cols()).collect();
        let back = state.invert(&dense(&out), &cols, smoothed.row(0)).unwrap();
        prop_assert!(back.max_abs_diff(&smoothed.row_range(1, smoothed.rows())) <= 1e-9);
    }

    #[test]
    fn rolling_median_ignores_the_future(
        s in prop::collection::vec(-50.0f64..50.0, 2..80),
        w in 1usize..10,
        k in 0usize..80,
        noise in -1e6f64..1e6,
    ) {
        let k = k % s.len();
        let mut mutated = s.clone();
        for v in &mut mutated[k..] {
            *v += noise;
        }
        let a = rolling_median(&s, w).unwrap();
        let b = rolling_median(&mutated, w).unwrap();
        prop_assert_eq!(&a[..k], &b[..k]);
    }

    #[test]
    fn fitted_transform_of_a_prefix_ignores_later_rows(p in panel_strategy(), k in 2usize..60, noise in -1e3f64..1e3) {
        let k = k.min(p.rows());
        let (_, state) = preprocess_pipeline(&p, &PipelineConfig::default()).unwrap();
        let mut values = dense(&p);
        for t in k..values.rows() {
            values.row_mut(t).iter_mut().for_each(|v| *v += noise);
        }
        let mutated = Panel::from_values("p", p.schema().clone(), values).unwrap();
        let a = dense(&state.transform(&p).unwrap());
        let b = dense(&state.transform(&mutated).unwrap());
        // transformed row r depends on raw rows up to r + 1
        prop_assert_eq!(a.row_range(0, k - 1), b.row_range(0, k - 1));
    }

    #[test]
    fn mask_history_is_idempotent(p in panel_strategy(), cut in 0usize..60) {
        let cut = cut % p.rows();
        let name = p.schema().names()[0].clone();
        let once = p.mask_history(&[name.as_str()], cut).unwrap();
        prop_assert_eq!(once.mask_history(&[name.as_str()], cut).unwrap(), once);
    }

    #[test]
    fn slices_compose(p in panel_strategy(), a in 0usize..60, len in 1usize..60, c in 0usize..60, d in 1usize..60) {
        let a = a % p.rows();
        let b = (a + len).min(p.rows());
        let inner = b - a;
        let c = c % inner;
        let d = c + 1 + (d % (inner - c));
        let twice = p.slice(a, b).unwrap().slice(c, d).unwrap();
        prop_assert_eq!(twice, p.slice(a + c, a + d).unwrap());
    }
}
