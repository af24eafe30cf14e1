//! Loads the real MNIST files when present (`DCANVAS_MNIST_DIR`, default
//! `/root/data/mnist`); prints a skip notice otherwise.

use dcanvas::io::{load_idx_dir, Split};
use std::path::PathBuf;

fn data_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("DCANVAS_MNIST_DIR").map_or_else(|| PathBuf::from("/root/data/mnist"), PathBuf::from);
    dir.is_dir().then_some(dir)
}

#[test]
fn mnist_sizes_and_labels() {
    let Some(dir) = data_dir() else {
        eprintln!("SKIP: MNIST not found");
        return;
    };
    let train = load_idx_dir(&dir, Split::Train).unwrap();
    let test = load_idx_dir(&dir, Split::Test).unwrap();
    assert_eq!(train.len(), 60_000);
    assert_eq!(test.len(), 10_000);
    assert_eq!(train.uniform_dims().unwrap(), Some((28, 28)));
    assert_eq!(train.class_names, (0..10).map(|d| d.to_string()).collect::<Vec<_>>());
    // Well-known class totals of the training split.
    assert_eq!(train.class_counts(), vec![5923, 6742, 5958, 6131, 5842, 5421, 5918, 6265, 5851, 5949]);
    assert_eq!(&test.labels[..10], &[7, 2, 1, 0, 4, 1, 4, 9, 5, 9]);
    assert_eq!(&train.labels[..5], &[5, 0, 4, 1, 9]);
    let px = train.images[0].pixels();
    assert!(px.iter().all(|&v| (0.0..=1.0).contains(&v)));
    assert!(px.contains(&1.0));
    // First training image of each class, in dataset order.
    let first: Vec<_> = train.occurrence_index(0).into_iter().map(Option::unwrap).collect();
    assert_eq!(first, vec![1, 3, 5, 7, 2, 0, 13, 15, 17, 4]);
}
