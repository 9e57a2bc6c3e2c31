mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;

use ssm::blocksparse::{block_l0, block_l1, class_energy_map, row_block_vectorize};
use ssm::rng::stream;
use ssm::{BlockLayout, TrainingDictionary};

fn layout_and_matrix() -> impl Strategy<Value = (BlockLayout, DMatrix<f64>)> {
    (prop::collection::vec(1usize..5, 1..8), 1usize..5, any::<u64>()).prop_map(|(sizes, cols, seed)| {
        let layout = BlockLayout::new(sizes).unwrap();
        let x = common::random_matrix(&mut stream(seed), layout.total(), cols);
        (layout, x)
    })
}

proptest! {
    #[test]
    fn energy_norm_equals_frobenius((layout, x) in layout_and_matrix(), scale in -6i32..6) {
        let x = x * 10f64.powi(scale);
        let g = class_energy_map(&x, &layout).unwrap();
        prop_assert!((g.norm() - x.norm()).abs() <= 1e-12 * x.norm());
    }

    #[test]
    fn block_l1_bounded_by_frobenius((layout, x) in layout_and_matrix()) {
        let l1 = block_l1(&x, &layout).unwrap();
        let f = x.norm();
        let c = (layout.num_blocks() as f64).sqrt();
        prop_assert!(l1 >= f * (1.0 - 1e-12));
        prop_assert!(l1 <= c * f * (1.0 + 1e-12));
    }

    #[test]
    fn vectorizing_keeps_block_count((layout, mut x) in layout_and_matrix(), mask in any::<u8>()) {
        for (k, r) in layout.ranges().enumerate() {
            if mask >> (k % 8) & 1 == 0 {
                x.rows_mut(r.start, r.len()).fill(0.0);
            }
        }
        let (v, lifted) = row_block_vectorize(&x, &layout).unwrap();
        prop_assert_eq!(lifted.total(), x.len());
        let col = DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        prop_assert_eq!(block_l0(&x, &layout, 0.0).unwrap(), block_l0(&col, &lifted, 0.0).unwrap());
    }

    #[test]
    fn single_column_blocks_give_absolute_values(v in prop::collection::vec(-5.0f64..5.0, 1..20)) {
        let x = DMatrix::from_column_slice(v.len(), 1, &v);
        let g = class_energy_map(&x, &BlockLayout::flat(v.len()).unwrap()).unwrap();
        for (a, b) in g.values().iter().zip(&v) {
            prop_assert_eq!(*a, b.abs());
        }
    }

    #[test]
    fn normalizing_keeps_block_spans((layout, x) in layout_and_matrix(), extra in 0usize..4) {
        // tall enough that every block has full column rank
        let rows = layout.total() + extra + 4;
        let s = common::random_matrix(&mut stream(x.len() as u64 + extra as u64), rows, layout.total());
        let raw = TrainingDictionary::from_parts(s.clone(), layout.clone()).unwrap();
        let once = raw.normalize_columns().unwrap();
        let twice = once.clone().normalize_columns().unwrap();
        prop_assert!((once.data() - twice.data()).amax() <= 1e-15);
        let mut pieces = Vec::new();
        for k in 0..layout.num_blocks() {
            let b = once.block_slice(k).unwrap().clone_owned();
            let orig = s.columns(layout.offset(k), layout.size(k)).clone_owned();
            let proj = &b * b.clone().pseudo_inverse(1e-12).unwrap() * &orig;
            prop_assert!((proj - &orig).norm() <= 1e-10 * orig.norm());
            pieces.push(b);
        }
        let rebuilt = DMatrix::from_columns(&pieces.iter().flat_map(|p| p.column_iter().map(|c| c.clone_owned()).collect::<Vec<_>>()).collect::<Vec<_>>());
        prop_assert_eq!(&rebuilt, once.data());
    }
}

#[test]
fn lifted_dictionary_has_same_rip_constant() {
    use ssm::blocksparse::estimate_block_rip_constant;
    let s = common::random_matrix(&mut stream(21), 12, 8);
    let layout = BlockLayout::new(vec![2, 3, 1, 2]).unwrap();
    let dict = TrainingDictionary::from_parts(s, layout.clone()).unwrap().normalize_columns().unwrap();
    // S ⊗ I_n with every column of S expanded into n adjacent columns
    let n = 3;
    let lifted = dict.data().kronecker(&DMatrix::<f64>::identity(n, n));
    let lifted = TrainingDictionary::from_parts(lifted, layout.scaled(n).unwrap()).unwrap().normalize_columns().unwrap();
    for m in 1..=3 {
        let a = estimate_block_rip_constant(&dict, m, 100).unwrap();
        let b = estimate_block_rip_constant(&lifted, m, 100).unwrap();
        assert!((a - b).abs() <= 1e-10, "m={m}: {a} vs {b}");
    }
}
