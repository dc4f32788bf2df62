use std::path::PathBuf;

use histocube::cube::HistCube;
use histocube::grid::{Grid, Point};
use histocube::histogram::{
    bin_histcube, local_histogram, local_histogram_at, local_histogram_level, tensor_convolve_check, FilterPlan,
    LevelFilter,
};
use histocube::image::{Image, ValueMap, ValueSpace};
use histocube::io::{decode_cube, encode_cube, read_pnm};
use histocube::window::{WeightingFunction, WindowSpec};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn patch() -> Image {
    read_pnm(&fixture("patch.pgm")).unwrap()
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
}

#[test]
fn patch_box_window_by_hand() {
    let f = patch();
    let w = WeightingFunction::square(f.grid(), 1).unwrap();
    let lh = local_histogram(&f, &w, &FilterPlan::direct()).unwrap();
    let at = |r, c| lh.histogram(f.grid().index(Point::new(r, c)));
    // 3×3 neighbourhoods counted by hand
    assert!(close(&at(1, 1), &[4.0 / 9.0, 3.0 / 9.0, 2.0 / 9.0, 0.0]));
    assert!(close(&at(0, 0), &[2.0 / 9.0, 4.0 / 9.0, 2.0 / 9.0, 1.0 / 9.0]));
    let edge = noncyclic_at(&f, &w, Point::new(0, 0));
    assert!(close(&edge, &[0.25, 0.75, 0.0, 0.0]));
}

fn noncyclic_at(f: &Image, w: &WeightingFunction, p: Point) -> Vec<f64> {
    local_histogram(f, w, &FilterPlan::noncyclic()).unwrap().histogram(f.grid().index(p))
}

#[test]
fn patch_matches_golden_cube() {
    let f = patch();
    let w = "center-weighted:1:0.5".parse::<WindowSpec>().unwrap().build(f.grid()).unwrap();
    let lh = local_histogram(&f, &w, &FilterPlan::direct()).unwrap();
    let path = fixture("patch_cw1.histcube");
    if std::env::var_os("HISTOCUBE_BLESS").is_some() {
        std::fs::write(&path, encode_cube(&lh)).unwrap();
    }
    let golden = decode_cube(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(golden.data(), lh.data());
}

#[test]
fn delta_window_gives_indicator() {
    let f = patch();
    let lh = local_histogram(&f, &WeightingFunction::delta(f.grid()), &FilterPlan::default()).unwrap();
    for x in 0..f.grid().len() {
        for y in 0..4 {
            let expect = if f.pixels()[x] as usize == y { 1.0 } else { 0.0 };
            assert_eq!(lh.get_index(x, y), expect);
        }
    }
}

#[test]
fn checkerboard_box_window() {
    // every 3×3 neighbourhood of a checkerboard holds 5 pixels of the centre
    // colour and 4 of the other one
    let g = Grid::new(4, 4).unwrap();
    let f = Image::from_fn(g, ValueSpace::cyclic(2).unwrap(), |p| (p.row + p.col) % 2).unwrap();
    let w = WeightingFunction::square(g, 1).unwrap();
    for plan in [FilterPlan::direct(), FilterPlan::fft()] {
        let lh = local_histogram(&f, &w, &plan).unwrap();
        for p in g.points() {
            let own = f.get(p);
            assert!((lh.get(p, own) - 5.0 / 9.0).abs() < 1e-12);
            assert!((lh.get(p, 1 - own) - 4.0 / 9.0).abs() < 1e-12);
        }
    }
}

#[test]
fn window_covering_whole_torus_gives_global_histogram() {
    let g = Grid::new(3, 3).unwrap();
    let f = Image::new(g, ValueSpace::cyclic(3).unwrap(), vec![0, 0, 1, 2, 2, 2, 1, 0, 0]).unwrap();
    let lh = local_histogram(&f, &WeightingFunction::square(g, 1).unwrap(), &FilterPlan::fft()).unwrap();
    for x in 0..9 {
        assert!(close(&lh.histogram(x), &[4.0 / 9.0, 2.0 / 9.0, 3.0 / 9.0]));
    }
}

#[test]
fn single_level_and_pairs_agree_with_cube() {
    let f = patch();
    let w = WeightingFunction::disk(f.grid(), 1, Some(0.4)).unwrap();
    for plan in [FilterPlan::direct(), FilterPlan::fft(), FilterPlan::noncyclic()] {
        let cube = local_histogram(&f, &w, &plan).unwrap();
        let filter = LevelFilter::new(&f, &w, &plan).unwrap();
        let mut a = vec![0.0; f.grid().len()];
        let mut b = vec![0.0; f.grid().len()];
        filter.fill_pair(2, &mut a, &mut b);
        assert_eq!(a, cube.level(2));
        assert_eq!(b, cube.level(3));
        let single = local_histogram_level(&f, &w, 1, &plan).unwrap();
        assert!(close(&single, cube.level(1)));
    }
    assert!(local_histogram_level(&f, &w, 4, &FilterPlan::direct()).is_err());
}

#[test]
fn rgb_values_are_a_product_group() {
    let g = Grid::new(2, 1).unwrap();
    let values = ValueSpace::new(vec![2, 2, 2]).unwrap();
    let f = Image::new(g, values.clone(), vec![values.encode(&[1, 0, 1]).unwrap() as u32, 0]).unwrap();
    let lh = local_histogram(&f, &WeightingFunction::square(g, 1).unwrap(), &FilterPlan::direct()).unwrap();
    assert_eq!(lh.num_levels(), 8);
    // on a 2×1 torus the 3×3 window visits the centre column 3 times and
    // the other column 6 times
    assert!((lh.get_index(0, 5) - 3.0 / 9.0).abs() < 1e-12);
    assert!((lh.get_index(0, 0) - 6.0 / 9.0).abs() < 1e-12);
    assert!((lh.histogram(0).iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn tensor_identity_on_patch() {
    let f = patch();
    let w = WeightingFunction::square(f.grid(), 1).unwrap();
    let check = tensor_convolve_check(&f, &w, &[0.5, 0.25, 0.0, 0.25]).unwrap();
    assert!(check.max_discrepancy < 1e-12);
}

fn image_strategy() -> impl Strategy<Value = Image> {
    (2usize..10, 2usize..10, 2usize..7).prop_flat_map(|(w, h, n)| {
        prop::collection::vec(0..n as u32, w * h).prop_map(move |px| {
            Image::new(Grid::new(w, h).unwrap(), ValueSpace::cyclic(n).unwrap(), px).unwrap()
        })
    })
}

fn window_for(g: Grid, kind: u8, raw: &[f64]) -> WeightingFunction {
    match kind % 3 {
        0 => WeightingFunction::square(g, 1).unwrap(),
        1 => WeightingFunction::disk(g, 2, Some(0.3)).unwrap(),
        _ => {
            let dense: Vec<f64> = (0..g.len()).map(|i| raw[i % raw.len()] + 1e-3).collect();
            let total: f64 = dense.iter().sum();
            WeightingFunction::from_dense(g, dense.iter().map(|v| v / total).collect(), None).unwrap()
        }
    }
}

/// Edge-renormalized filtering needs the whole window inside the image.
fn fits(w: &WeightingFunction) -> bool {
    let g = w.grid();
    w.support_radius().is_some_and(|r| 2 * r < g.width().min(g.height()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn each_pixel_holds_a_probability_vector(f in image_strategy(), kind in 0u8..3, raw in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let w = window_for(f.grid(), kind, &raw);
        for plan in [FilterPlan::direct(), FilterPlan::fft(), FilterPlan::noncyclic()] {
            if plan.is_cyclic() || fits(&w) {
                let lh = local_histogram(&f, &w, &plan).unwrap();
                prop_assert!(lh.normalization_error() < 1e-9);
                prop_assert!(lh.data().iter().all(|&v| v > -1e-12));
            }
        }
    }

    #[test]
    fn translating_the_image_translates_the_cube(f in image_strategy(), kind in 0u8..3, raw in prop::collection::vec(0.0f64..1.0, 1..20), sr in 0usize..10, sc in 0usize..10) {
        let g = f.grid();
        let w = window_for(g, kind, &raw);
        let s = Point::new(sr % g.height(), sc % g.width());
        let plan = FilterPlan::direct();
        let lh = local_histogram(&f, &w, &plan).unwrap();
        let moved = local_histogram(&f.translate(s), &w, &plan).unwrap();
        for x in g.points() {
            for y in 0..lh.num_levels() {
                prop_assert_eq!(moved.get(x, y), lh.get(g.sub(x, s), y));
            }
        }
    }

    #[test]
    fn shifting_values_shifts_levels(f in image_strategy(), kind in 0u8..3, raw in prop::collection::vec(0.0f64..1.0, 1..20), c in 0usize..7) {
        let w = window_for(f.grid(), kind, &raw);
        let n = f.values().size();
        let plan = FilterPlan::direct();
        let lh = local_histogram(&f, &w, &plan).unwrap();
        let shifted = local_histogram(&f.add_constant(c % n).unwrap(), &w, &plan).unwrap();
        for y in 0..n {
            prop_assert_eq!(shifted.level((y + c) % n), lh.level(y));
        }
    }

    #[test]
    fn fft_and_direct_agree(f in image_strategy(), kind in 0u8..3, raw in prop::collection::vec(0.0f64..1.0, 1..20)) {
        let w = window_for(f.grid(), kind, &raw);
        let a = local_histogram(&f, &w, &FilterPlan::direct()).unwrap();
        let b = local_histogram(&f, &w, &FilterPlan::fft()).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-9);
    }

    #[test]
    fn binning_commutes(f in image_strategy(), table in prop::collection::vec(0u32..3, 7)) {
        let n = f.values().size();
        let q = ValueMap::new(table[..n].to_vec(), ValueSpace::cyclic(3).unwrap()).unwrap();
        let w = WeightingFunction::square(f.grid(), 1).unwrap();
        let plan = FilterPlan::direct();
        let binned = bin_histcube(&local_histogram(&f, &w, &plan).unwrap(), &q).unwrap();
        let direct = local_histogram(&f.map_values(&q).unwrap(), &w, &plan).unwrap();
        prop_assert!(binned.max_abs_diff(&direct) < 1e-12);
    }

    #[test]
    fn pointwise_evaluation_matches_cube(f in image_strategy(), kind in 0u8..2, r in 0usize..10, c in 0usize..10) {
        let g = f.grid();
        let w = window_for(g, kind, &[0.5]);
        let p = Point::new(r % g.height(), c % g.width());
        let cyclic: HistCube = local_histogram(&f, &w, &FilterPlan::direct()).unwrap();
        prop_assert_eq!(local_histogram_at(&f, &w, p, true).unwrap(), cyclic.histogram(g.index(p)));
        prop_assume!(fits(&w));
        let nc = local_histogram(&f, &w, &FilterPlan::noncyclic()).unwrap().histogram(g.index(p));
        let at = local_histogram_at(&f, &w, p, false).unwrap();
        prop_assert!(close(&nc, &at));
    }
}

#[test]
fn six_by_eight_fixture_matches_golden_cube() {
    let f = read_pnm(&fixture("six_by_eight.pgm")).unwrap();
    assert_eq!((f.grid().width(), f.grid().height()), (6, 8));
    let w = "center-weighted:1:0.5".parse::<WindowSpec>().unwrap().build(f.grid()).unwrap();
    let lh = local_histogram(&f, &w, &FilterPlan::direct()).unwrap();
    // centre (value 1) weight 1/2; neighbours 1 above, 0 below and left, 2 right at 1/8 each
    let p = Point::new(2, 2);
    assert!(close(&lh.histogram(f.grid().index(p)), &[0.25, 0.625, 0.125, 0.0]));
    let path = fixture("six_by_eight_cw1.histcube");
    if std::env::var_os("HISTOCUBE_BLESS").is_some() {
        std::fs::write(&path, encode_cube(&lh)).unwrap();
    }
    assert_eq!(std::fs::read(&path).unwrap(), encode_cube(&lh));
}

#[test]
fn translating_by_one_row_wraps_the_last_row_to_the_top() {
    let f = read_pnm(&fixture("six_by_eight.pgm")).unwrap();
    let row = |img: &Image, r: usize| img.pixels()[r * 6..(r + 1) * 6].to_vec();
    let down = f.translate(Point::new(1, 0));
    assert_eq!(row(&down, 0), row(&f, 7));
    assert_eq!(row(&down, 1), row(&f, 0));
    let up = f.translate(Point::new(7, 0));
    assert_eq!(row(&up, 7), row(&f, 0));
    assert_eq!(up.translate(Point::new(1, 0)), f);
}
